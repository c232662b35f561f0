#include "costly_obs/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "costly_obs/csv.hpp"
#include "costly_obs/errors.hpp"

namespace costly_obs {

namespace {

struct BracketCounts {
    std::array<long, kHistogramBrackets> total{}, pos{}, vel{};
};

int bracket_index(double p, double lo, double width) {
    int idx = static_cast<int>(std::floor((p - lo) / width));
    return std::clamp(idx, 0, kHistogramBrackets - 1);
}

void count_row(BracketCounts& c, const TransitionRecord& r, double lo, double width) {
    const int idx = bracket_index(r.true_before.position, lo, width);
    ++c.total[idx];
    const ObsChoice obs = decode_action(r.action_index).obs;
    if (observes_position(obs)) ++c.pos[idx];
    if (observes_velocity(obs)) ++c.vel[idx];
}

HistogramTable assemble(const BracketCounts& c, double lo, double hi) {
    HistogramTable t;
    t.range_lo = lo;
    t.range_hi = hi;
    const double width = (hi - lo) / kHistogramBrackets;
    for (int i = 0; i < kHistogramBrackets; ++i) {
        auto& b = t.brackets[i];
        b.lo = lo + i * width;
        b.hi = i + 1 == kHistogramBrackets ? hi : lo + (i + 1) * width;
        b.total = c.total[i];
        b.pos_obs = c.pos[i];
        b.vel_obs = c.vel[i];
        b.empty = b.total == 0;
        b.pos_pct = b.empty ? 0.0 : 100.0 * static_cast<double>(b.pos_obs) / b.total;
        b.vel_pct = b.empty ? 0.0 : 100.0 * static_cast<double>(b.vel_obs) / b.total;
        t.total_actions += b.total;
    }
    return t;
}

std::pair<double, double> histogram_range(std::span<const TransitionRecord> rows,
                                          bool data_range) {
    if (!data_range) return {kHistogramLo, kHistogramHi};
    if (rows.empty()) throw DataError("cannot derive a data range from an empty log");
    double lo = rows.front().true_before.position, hi = lo;
    for (const auto& r : rows) {
        lo = std::min(lo, r.true_before.position);
        hi = std::max(hi, r.true_before.position);
    }
    if (hi <= lo) hi = lo + 1e-9;
    return {lo, hi};
}

}  // namespace

HistogramTable build_histogram_serial(std::span<const TransitionRecord> rows, bool data_range) {
    if (rows.empty()) throw DataError("transition log has no rows");
    const auto [lo, hi] = histogram_range(rows, data_range);
    const double width = (hi - lo) / kHistogramBrackets;
    BracketCounts c;
    for (const auto& r : rows) count_row(c, r, lo, width);
    return assemble(c, lo, hi);
}

HistogramTable build_histogram(std::span<const TransitionRecord> rows, bool data_range) {
    if (rows.empty()) throw DataError("transition log has no rows");
    const auto [lo, hi] = histogram_range(rows, data_range);
    const double width = (hi - lo) / kHistogramBrackets;
    const long n = static_cast<long>(rows.size());

#ifdef _OPENMP
    const int max_threads = std::max(1, omp_get_max_threads());
#else
    const int max_threads = 1;
#endif
    const int threads = n >= 4096 ? max_threads : 1;
    std::vector<BracketCounts> partial(threads);
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
    for (long i = 0; i < n; ++i) {
#ifdef _OPENMP
        BracketCounts& c = partial[omp_get_thread_num()];
#else
        BracketCounts& c = partial[0];
#endif
        count_row(c, rows[i], lo, width);
    }
    BracketCounts total;
    for (const auto& c : partial)
        for (int i = 0; i < kHistogramBrackets; ++i) {
            total.total[i] += c.total[i];
            total.pos[i] += c.pos[i];
            total.vel[i] += c.vel[i];
        }
    return assemble(total, lo, hi);
}

HistogramTable build_histogram_from_log(const std::string& path, bool data_range) {
    double lo = kHistogramLo, hi = kHistogramHi;
    if (data_range) {
        lo = std::numeric_limits<double>::infinity();
        hi = -std::numeric_limits<double>::infinity();
        long rows = 0;
        for_each_transition(path, [&](const TransitionRecord& r) {
            lo = std::min(lo, r.true_before.position);
            hi = std::max(hi, r.true_before.position);
            ++rows;
        });
        if (rows == 0) throw DataError("transition log has no rows: " + path);
        if (hi <= lo) hi = lo + 1e-9;
    }
    const double width = (hi - lo) / kHistogramBrackets;
    BracketCounts c;
    long rows = 0;
    for_each_transition(path, [&](const TransitionRecord& r) {
        count_row(c, r, lo, width);
        ++rows;
    });
    if (rows == 0) throw DataError("transition log has no rows: " + path);
    return assemble(c, lo, hi);
}

namespace {

struct ObsCounts {
    long total = 0, pos_only = 0, vel_only = 0, both = 0, none = 0;
};

std::vector<RatioRow> ratios_from_counts(const std::map<int, ObsCounts>& by_episode) {
    std::vector<RatioRow> rows;
    rows.reserve(by_episode.size());
    for (const auto& [ep, c] : by_episode) {
        RatioRow r;
        r.episode = ep;
        r.total = c.total;
        const double inv = c.total > 0 ? 1.0 / static_cast<double>(c.total) : 0.0;
        r.pos_only = c.pos_only * inv;
        r.vel_only = c.vel_only * inv;
        r.both = c.both * inv;
        r.none = c.none * inv;
        r.pos_obs = (c.pos_only + c.both) * inv;
        r.vel_obs = (c.vel_only + c.both) * inv;
        rows.push_back(r);
    }
    return rows;
}

void tally(std::map<int, ObsCounts>& by_episode, const TransitionRecord& r) {
    ObsCounts& c = by_episode[r.episode];
    ++c.total;
    switch (decode_action(r.action_index).obs) {
        case ObsChoice::None: ++c.none; break;
        case ObsChoice::Position: ++c.pos_only; break;
        case ObsChoice::Velocity: ++c.vel_only; break;
        case ObsChoice::Both: ++c.both; break;
    }
}

}  // namespace

std::vector<RatioRow> build_ratio_series(std::span<const TransitionRecord> rows) {
    if (rows.empty()) throw DataError("transition log has no rows");
    std::map<int, ObsCounts> by_episode;
    for (const auto& r : rows) tally(by_episode, r);
    return ratios_from_counts(by_episode);
}

std::vector<RatioRow> build_ratio_series_from_log(const std::string& path) {
    std::map<int, ObsCounts> by_episode;
    long n = 0;
    for_each_transition(path, [&](const TransitionRecord& r) {
        tally(by_episode, r);
        ++n;
    });
    if (n == 0) throw DataError("transition log has no rows: " + path);
    return ratios_from_counts(by_episode);
}

// ---- logistic regression ----------------------------------------------------

namespace {

double log1p_exp(double eta) {
    // log(1 + e^eta) without overflow
    return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

double log_likelihood(std::span<const double> x, std::span<const std::uint8_t> y, double b0,
                      double b1) {
    double ll = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double eta = b0 + b1 * x[i];
        ll += (y[i] ? eta : 0.0) - log1p_exp(eta);
    }
    return ll;
}

bool threshold_separated(std::span<const double> x, std::span<const std::uint8_t> y) {
    double max0 = -std::numeric_limits<double>::infinity();
    double min0 = std::numeric_limits<double>::infinity();
    double max1 = -std::numeric_limits<double>::infinity();
    double min1 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (y[i]) {
            max1 = std::max(max1, x[i]);
            min1 = std::min(min1, x[i]);
        } else {
            max0 = std::max(max0, x[i]);
            min0 = std::min(min0, x[i]);
        }
    }
    return max0 < min1 || max1 < min0;
}

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

}  // namespace

LogisticFit logistic_fit(std::span<const double> x, std::span<const std::uint8_t> y) {
    if (x.size() != y.size()) throw ShapeError("logistic_fit: x and y lengths differ");
    if (x.size() < 2) throw DataError("logistic_fit: need at least 2 observations");
    long ones = 0;
    for (auto v : y) ones += v ? 1 : 0;
    if (ones == 0 || ones == static_cast<long>(y.size()))
        throw DataError("logistic_fit: both classes must be present");
    const double x0 = x.front();
    bool constant_x = true;
    for (double v : x)
        if (v != x0) {
            constant_x = false;
            break;
        }
    if (constant_x) throw DataError("logistic_fit: x has no variation");

    LogisticFit fit;
    fit.n = static_cast<long>(x.size());
    if (threshold_separated(x, y)) {
        fit.separation = true;
        fit.intercept.p = fit.slope.p = std::numeric_limits<double>::quiet_NaN();
        return fit;
    }

    constexpr int kMaxIter = 100;
    constexpr double kTol = 1e-10;
    constexpr double kCoefLimit = 30.0;
    double b0 = 0.0, b1 = 0.0;
    double ll = log_likelihood(x, y, b0, b1);
    double i00 = 0, i01 = 0, i11 = 0;  // observed information at the current point

    for (int iter = 1; iter <= kMaxIter; ++iter) {
        fit.iterations = iter;
        double g0 = 0, g1 = 0;
        i00 = i01 = i11 = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double eta = b0 + b1 * x[i];
            const double p = 1.0 / (1.0 + std::exp(-eta));
            const double r = (y[i] ? 1.0 : 0.0) - p;
            const double w = p * (1.0 - p);
            g0 += r;
            g1 += r * x[i];
            i00 += w;
            i01 += w * x[i];
            i11 += w * x[i] * x[i];
        }
        const double det = i00 * i11 - i01 * i01;
        if (!(det > 1e-300)) break;  // information degenerated; report non-convergence
        double d0 = (i11 * g0 - i01 * g1) / det;
        double d1 = (i00 * g1 - i01 * g0) / det;

        // step halving if the full Newton step lowers the likelihood
        double new_ll = log_likelihood(x, y, b0 + d0, b1 + d1);
        int halvings = 0;
        while (new_ll < ll && halvings < 30) {
            d0 *= 0.5;
            d1 *= 0.5;
            new_ll = log_likelihood(x, y, b0 + d0, b1 + d1);
            ++halvings;
        }
        b0 += d0;
        b1 += d1;
        if (std::abs(b0) > kCoefLimit || std::abs(b1) > kCoefLimit) {
            fit.separation = true;
            fit.intercept.estimate = b0;
            fit.slope.estimate = b1;
            fit.intercept.p = fit.slope.p = std::numeric_limits<double>::quiet_NaN();
            return fit;
        }
        const double change = std::abs(new_ll - ll);
        ll = new_ll;
        if (change < kTol) {
            fit.converged = true;
            break;
        }
    }

    fit.log_likelihood = ll;
    fit.intercept.estimate = b0;
    fit.slope.estimate = b1;
    const double det = i00 * i11 - i01 * i01;
    if (fit.converged && det > 1e-300) {
        fit.intercept.std_err = std::sqrt(i11 / det);
        fit.slope.std_err = std::sqrt(i00 / det);
        fit.intercept.z = fit.intercept.estimate / fit.intercept.std_err;
        fit.slope.z = fit.slope.estimate / fit.slope.std_err;
        fit.intercept.p = normal_two_sided_p(fit.intercept.z);
        fit.slope.p = normal_two_sided_p(fit.slope.z);
    } else {
        fit.intercept.p = fit.slope.p = std::numeric_limits<double>::quiet_NaN();
    }
    return fit;
}

// ---- learning curves ---------------------------------------------------------

std::vector<double> rolling_mean(std::span<const double> values, int window) {
    if (window <= 0) throw ConfigError("rolling window must be positive");
    const int n = static_cast<int>(values.size());
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) {
        const int a = std::max(0, i - (window - 1) / 2);
        const int b = std::min(n - 1, i + window / 2);
        double sum = 0.0;
        for (int k = a; k <= b; ++k) sum += values[k];
        out[i] = sum / (b - a + 1);
    }
    return out;
}

std::vector<CurvePoint> learning_curve(std::span<const EpisodeStats> stats, int window) {
    if (stats.empty()) throw DataError("learning_curve: no episodes");
    std::vector<double> steps(stats.size());
    for (std::size_t i = 0; i < stats.size(); ++i) steps[i] = stats[i].steps;
    const std::vector<double> smooth = rolling_mean(steps, window);
    std::vector<CurvePoint> out(stats.size());
    for (std::size_t i = 0; i < stats.size(); ++i)
        out[i] = CurvePoint{stats[i].episode, steps[i], smooth[i]};
    return out;
}

// ---- CSV emission -------------------------------------------------------------

void write_histogram_csv(const std::string& path, const HistogramTable& t) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "bracket_lo,bracket_hi,total_actions,pos_obs_count,vel_obs_count,pos_obs_pct,vel_obs_pct,empty\n";
    for (const auto& b : t.brackets) {
        out << format_g9(b.lo) << ',' << format_g9(b.hi) << ',' << b.total << ',' << b.pos_obs
            << ',' << b.vel_obs << ',' << format_g9(b.pos_pct) << ',' << format_g9(b.vel_pct)
            << ',' << (b.empty ? 1 : 0) << '\n';
    }
}

void write_ratios_csv(const std::string& path, std::span<const RatioRow> rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "episode,total_actions,pos_obs_ratio,vel_obs_ratio,none_ratio,pos_only_ratio,vel_only_ratio,both_ratio\n";
    for (const auto& r : rows) {
        out << r.episode << ',' << r.total << ',' << format_g9(r.pos_obs) << ','
            << format_g9(r.vel_obs) << ',' << format_g9(r.none) << ',' << format_g9(r.pos_only)
            << ',' << format_g9(r.vel_only) << ',' << format_g9(r.both) << '\n';
    }
}

void write_curve_csv(const std::string& path, std::span<const CurvePoint> points) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "episode,steps,smoothed\n";
    for (const auto& p : points)
        out << p.episode << ',' << format_g9(p.steps) << ',' << format_g9(p.smoothed) << '\n';
}

namespace {

void write_fit_rows(std::ofstream& out, const std::string& name, const LogisticFit& f,
                    const std::string& sample) {
    const char* coef_names[2] = {"intercept", "x"};
    const CoefStat* stats[2] = {&f.intercept, &f.slope};
    for (int i = 0; i < 2; ++i) {
        out << name << ',' << coef_names[i] << ',' << format_g9(stats[i]->estimate) << ','
            << format_g9(stats[i]->std_err) << ',' << format_g9(stats[i]->z) << ','
            << format_g9(stats[i]->p) << ',' << (f.converged ? 1 : 0) << ','
            << (f.separation ? 1 : 0) << ',' << f.n << ',' << sample << '\n';
    }
}

}  // namespace

void write_logit_csv(const std::string& path, const LogisticFit& vel_fit,
                     const LogisticFit& pos_fit, const std::string& sample) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "fit,coef,estimate,std_err,z,p_value,converged,separation,n,sample\n";
    write_fit_rows(out, "vel_obs", vel_fit, sample);
    write_fit_rows(out, "pos_obs", pos_fit, sample);
}

}  // namespace costly_obs
