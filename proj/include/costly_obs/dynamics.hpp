#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "costly_obs/env.hpp"
#include "costly_obs/nn.hpp"

namespace costly_obs {

inline constexpr int kDynInputWidth = 5;   // pos, vel, one-hot motion
inline constexpr int kDynOutputWidth = 2;  // next pos, next vel

// Supervised one-step pairs built from the true-state columns of a transition
// log. Inputs are stored standardized; targets stay in raw units and carry
// their own constants so training can balance the two components.
struct DynamicsDataset {
    std::size_t rows = 0;
    std::vector<double> inputs;   // rows x 5, standardized
    std::vector<double> targets;  // rows x 2, raw
    std::array<double, kDynInputWidth> mean{};
    std::array<double, kDynInputWidth> scale{{1, 1, 1, 1, 1}};  // constant columns keep 1
    std::array<double, kDynOutputWidth> target_mean{};
    std::array<double, kDynOutputWidth> target_scale{{1, 1}};
};

std::array<double, kDynInputWidth> raw_dynamics_input(double pos, double vel, Motion m);

void normalize_input(std::span<const double> raw, const std::array<double, kDynInputWidth>& mean,
                     const std::array<double, kDynInputWidth>& scale, std::span<double> out);
void denormalize_input(std::span<const double> norm,
                       const std::array<double, kDynInputWidth>& mean,
                       const std::array<double, kDynInputWidth>& scale, std::span<double> out);

DynamicsDataset build_dataset(std::span<const TransitionRecord> records);
DynamicsDataset build_dataset_from_log(const std::string& path);

// Trained predictor: standardizes the input, runs the net, de-normalizes the
// output and clamps it to the valid state box.
struct DynamicsModelHandle final : DynamicsPredictor {
    nn::Mlp model;
    std::array<double, kDynInputWidth> mean{};
    std::array<double, kDynInputWidth> scale{};
    std::array<double, kDynOutputWidth> target_mean{};
    std::array<double, kDynOutputWidth> target_scale{{1.0, 1.0}};

    std::pair<double, double> predict_next(double pos, double vel, Motion m) const override;
};

struct DynamicsTrainOptions {
    int epochs = 50;
    double lr = 0.001;
    int batch_size = 64;
    std::uint64_t seed = 1;
    std::vector<int> hidden{64, 64};
};

struct DynamicsTrainReport {
    double rmse_pos = 0.0, rmse_vel = 0.0;                    // held-out, per component
    double baseline_rmse_pos = 0.0, baseline_rmse_vel = 0.0;  // persistence on the same split
    std::size_t train_rows = 0, val_rows = 0;
};

struct DynamicsTrainResult {
    DynamicsModelHandle handle;
    DynamicsTrainReport report;
};

// Minimizes mean squared error on a seeded 90/10 split; the held-out rows
// never touch the optimizer.
DynamicsTrainResult train_dynamics(const DynamicsDataset& ds, const DynamicsTrainOptions& opt);

// File format: one normalization line ("dyn-v1" + 5 means + 5 scales), then
// the serialized net.
void save_dynamics_model(const std::string& path, const DynamicsModelHandle& h);
DynamicsModelHandle load_dynamics_model(const std::string& path);

}  // namespace costly_obs
