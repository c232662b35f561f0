#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "costly_obs/agents.hpp"
#include "costly_obs/env.hpp"

namespace costly_obs {

inline constexpr int kHistogramBrackets = 5;
inline constexpr double kHistogramLo = -1.2;
inline constexpr double kHistogramHi = 0.5;

struct HistogramBracket {
    double lo = 0.0, hi = 0.0;
    long total = 0;     // actions taken from a position in this bracket
    long pos_obs = 0;   // of those, how many observed position (Position or Both)
    long vel_obs = 0;   // likewise velocity (Velocity or Both)
    double pos_pct = 0.0, vel_pct = 0.0;
    bool empty = true;
};

struct HistogramTable {
    std::array<HistogramBracket, kHistogramBrackets> brackets;
    long total_actions = 0;
    double range_lo = kHistogramLo, range_hi = kHistogramHi;
};

// Bins every action by the true position it was taken from. data_range uses
// the min/max position actually visited instead of the fixed range.
HistogramTable build_histogram(std::span<const TransitionRecord> rows, bool data_range = false);
HistogramTable build_histogram_serial(std::span<const TransitionRecord> rows,
                                      bool data_range = false);
HistogramTable build_histogram_from_log(const std::string& path, bool data_range = false);

struct RatioRow {
    int episode = 0;
    long total = 0;
    double pos_obs = 0.0;   // Position or Both, over total
    double vel_obs = 0.0;   // Velocity or Both, over total
    double none = 0.0;
    double pos_only = 0.0, vel_only = 0.0, both = 0.0;  // exclusive splits, sum with none to 1
};

std::vector<RatioRow> build_ratio_series(std::span<const TransitionRecord> rows);
std::vector<RatioRow> build_ratio_series_from_log(const std::string& path);

struct CoefStat {
    double estimate = 0.0;
    double std_err = 0.0;
    double z = 0.0;
    double p = 0.0;
};

struct LogisticFit {
    CoefStat intercept, slope;
    bool converged = false;
    bool separation = false;
    long n = 0;
    int iterations = 0;
    double log_likelihood = 0.0;
};

// Newton maximum likelihood for P(y=1) = sigmoid(b0 + b1 x); Wald p-values
// from the inverse observed information. Separation (a threshold on x
// perfectly splitting the classes, or coefficients running past 30) is
// reported through the flag rather than an exception.
LogisticFit logistic_fit(std::span<const double> x, std::span<const std::uint8_t> y);

struct CurvePoint {
    int episode = 0;
    double steps = 0.0;
    double smoothed = 0.0;
};

// Centered rolling mean, window truncated at both ends.
std::vector<double> rolling_mean(std::span<const double> values, int window);
std::vector<CurvePoint> learning_curve(std::span<const EpisodeStats> stats, int window = 25);

// ---- CSV emission -----------------------------------------------------------

void write_histogram_csv(const std::string& path, const HistogramTable& t);
void write_ratios_csv(const std::string& path, std::span<const RatioRow> rows);
void write_curve_csv(const std::string& path, std::span<const CurvePoint> points);

// Two fits per run: velocity observation vs position, and position observation
// vs position. `sample` records how rows were pooled.
void write_logit_csv(const std::string& path, const LogisticFit& vel_fit,
                     const LogisticFit& pos_fit, const std::string& sample);

}  // namespace costly_obs
