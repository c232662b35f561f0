#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "costly_obs/env.hpp"
#include "costly_obs/nn.hpp"
#include "costly_obs/rng.hpp"

namespace costly_obs {

struct DqnConfig {
    int episodes = 1000;
    int step_cap = 20000;
    double lr = 0.001;
    double epsilon_init = 1.0;
    double epsilon_decay = 0.995;  // applied once per episode (per step with epsilon_per_step)
    double epsilon_min = 0.01;
    double gamma = 0.95;
    int batch_size = 64;
    int replay_capacity = 50000;
    int target_sync_interval = 1000;  // environment steps between hard target copies
    std::uint64_t seed = 1;
    std::vector<int> hidden{64, 64};
    bool epsilon_per_step = false;
    nn::OptimizerKind optimizer = nn::OptimizerKind::Adam;
};

void validate_dqn_config(const DqnConfig& cfg);

// One replay entry. Feature arrays hold feature_width(variant) live values.
struct ReplayEntry {
    std::array<double, 4> features{};
    std::array<double, 4> next_features{};
    int action = 0;
    double reward = 0.0;
    bool goal_terminal = false;  // reached the goal; target does not bootstrap
    bool truncated = false;      // hit the step cap; target still bootstraps
};

// Bounded ring, strict oldest-first eviction.
class ReplayBuffer {
  public:
    explicit ReplayBuffer(int capacity);

    void push(const ReplayEntry& e);
    std::size_t size() const { return size_; }
    int capacity() const { return cap_; }

    // Logical indexing, 0 = oldest surviving entry.
    const ReplayEntry& entry(std::size_t i) const;

    // Uniform over the current contents.
    const ReplayEntry& sample(Rng& rng) const;

  private:
    std::vector<ReplayEntry> ring_;
    int cap_;
    std::size_t next_ = 0;
    std::size_t size_ = 0;
};

// Epsilon-greedy over the 12 Q-outputs; ties resolved to the lowest index.
int select_action(const nn::Mlp& qnet, std::span<const double> features, double epsilon, Rng& rng);

// y = r + gamma * max_a' Q_target(s', a') unless the entry ended at the goal,
// in which case y = r. Cap-truncated entries bootstrap.
void td_targets(std::span<const ReplayEntry> batch, const nn::Mlp& target_net, double gamma,
                int feat_width, std::span<double> out, nn::BatchWorkspace& ws);

struct EpisodeStats {
    int episode = 0;
    int steps = 0;
    double total_reward = 0.0;
    bool reached_goal = false;
    double epsilon = 0.0;              // value in effect at the start of the episode
    std::array<int, 4> obs_counts{};   // indexed by ObsChoice: None, Position, Velocity, Both
};

struct DqnTrainResult {
    nn::Mlp qnet;
    std::vector<EpisodeStats> stats;
};

// Full training loop: epsilon-greedy rollouts, replay, one optimizer step per
// environment step once the buffer holds a batch, hard target sync. The
// environment step cap is taken from dqn.step_cap. Every transition is
// appended to log when one is given.
DqnTrainResult train_dqn(const EnvConfig& env_cfg, const DqnConfig& dqn,
                         const DynamicsPredictor* imputer, TransitionLog* log,
                         bool verbose = false);

// ---- linear function-approximation baselines -------------------------------

// Classic tile coding: `tilings` overlapping grids, each `grid` cells per
// dimension, asymmetrically offset per dimension.
class TileCoder {
  public:
    TileCoder(std::vector<std::pair<double, double>> ranges, int tilings = 8, int grid = 8);

    int tilings() const { return tilings_; }
    int feature_count() const { return tilings_ * per_tiling_; }
    // Writes `tilings` active feature indices.
    void active_features(std::span<const double> x, std::span<int> out) const;

  private:
    std::vector<double> lo_, tile_width_;
    int dims_, tilings_, grid_, cells_, per_tiling_;
};

enum class BaselineAlgo { Sarsa, QLearning };
const char* to_string(BaselineAlgo a);

// Classic setup: zero-initialized weights are optimistic under negative
// rewards, so exploration comes from the init rather than epsilon.
struct BaselineSchedule {
    double alpha = 0.5;   // divided by the number of tilings per update
    double epsilon = 0.0;
    double gamma = 0.95;
    int episodes = 500;
    int step_cap = 10000;
    std::uint64_t seed = 1;
    int tilings = 8;
    int grid = 8;
};

struct BaselineResult {
    std::vector<EpisodeStats> stats;
    std::vector<double> weights;  // feature_count x action_count, row-major
};

// TD baseline on the plain three-action car, -1 per step.
BaselineResult train_linear_baseline_vanilla(BaselineAlgo algo, const BaselineSchedule& sched);

// TD baseline on the augmented 12-action environment; features come from
// featurize() for env_cfg.variant. Reward follows env_cfg.reward_mode.
BaselineResult train_linear_baseline(BaselineAlgo algo, const EnvConfig& env_cfg,
                                     const BaselineSchedule& sched);

}  // namespace costly_obs
