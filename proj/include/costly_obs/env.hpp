#pragma once

#include <cstdio>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "costly_obs/mountain_car.hpp"
#include "costly_obs/rng.hpp"

namespace costly_obs {

// Which state variables the composite action observes this step.
enum class ObsChoice : int { None = 0, Position = 1, Velocity = 2, Both = 3 };

const char* to_string(ObsChoice o);
ObsChoice parse_obs_choice(const std::string& s);
bool observes_position(ObsChoice o);
bool observes_velocity(ObsChoice o);
int observed_count(ObsChoice o);

// State the agent sees: possibly stale values plus per-variable staleness ages.
struct BeliefState {
    double pos_belief = 0.0;
    double vel_belief = 0.0;
    int pos_age = 0;
    int vel_age = 0;
};

enum class Variant : int { LocfNoCounters = 0, LocfWithCounters = 1, DynamicsWithCounters = 2 };
const char* to_string(Variant v);
Variant parse_variant(const std::string& s);

enum class CostMode : int { PerVariable = 0, Flat = 1 };
const char* to_string(CostMode m);
CostMode parse_cost_mode(const std::string& s);

// Reward given to the learner. EnergyShaped is the scaled mechanical-energy
// difference; StepPenalty is the base -1 per step. Observation costs apply in
// both modes.
enum class RewardMode : int { EnergyShaped = 0, StepPenalty = 1 };
const char* to_string(RewardMode m);
RewardMode parse_reward_mode(const std::string& s);

struct EnvConfig {
    Variant variant = Variant::LocfWithCounters;
    double obs_cost = -8.0;  // <= 0, added once per observed variable (PerVariable)
    int step_cap = 20000;
    CostMode cost_mode = CostMode::PerVariable;
    RewardMode reward_mode = RewardMode::EnergyShaped;
    // Every variable observed every step, at zero cost. Used for the fully
    // observed control runs; the action's observation component is ignored.
    bool full_obs = false;
};

void validate_env_config(const EnvConfig& cfg);

// The 12 composite actions: index = motion*4 + observation choice.
inline constexpr int kNumActions = 12;

struct CompositeAction {
    Motion motion = Motion::Coast;
    ObsChoice obs = ObsChoice::None;
};

CompositeAction decode_action(int index);  // throws std::out_of_range outside 0..11
int encode_action(CompositeAction a);

// 100 * (E(next) - E(prev)) + obs_cost * k, where k follows cfg.cost_mode
// (full_obs charges nothing). StepPenalty mode replaces the energy term by -1.
double shaped_reward(const TrueState& prev, const TrueState& next, ObsChoice obs,
                     const EnvConfig& cfg);
double observation_cost(ObsChoice obs, const EnvConfig& cfg);

// Predictor interface the dynamics-imputation variant plugs in.
class DynamicsPredictor {
  public:
    virtual ~DynamicsPredictor() = default;
    virtual std::pair<double, double> predict_next(double pos, double vel, Motion m) const = 0;
};

// Observed components copy the true value and reset their age; unobserved
// components are carried forward (LOCF) or replaced by the predictor's one-step
// estimate from the current belief, and their age increments.
BeliefState update_belief(const BeliefState& b, const TrueState& true_next, CompositeAction a,
                          Variant variant, const DynamicsPredictor* imputer);

struct ResetResult {
    BeliefState belief;
    TrueState true_state;
};

// Initial state is fully observed at zero cost.
ResetResult env_reset(const EnvConfig& cfg, Rng& rng);

struct StepOutcome {
    TrueState true_next;
    BeliefState belief_next;
    double reward = 0.0;
    bool done = false;
    bool truncated = false;  // ended by the step cap, not the goal
};

// One environment step: decode action, advance the true physics, compute the
// reward from true states, update the belief. steps_before is the number of
// steps already taken this episode (for the cap rule).
StepOutcome env_step(const TrueState& true_s, const BeliefState& b, int action_index,
                     int steps_before, const EnvConfig& cfg, const DynamicsPredictor* imputer);

// One logged step; feeds replay, dynamics training and analysis.
struct TransitionRecord {
    int episode = 0;
    int step = 0;  // 1-based within the episode
    int action_index = 0;
    double reward = 0.0;
    bool done = false;
    bool truncated = false;
    TrueState true_before, true_after;
    BeliefState belief_before, belief_after;
};

int feature_width(Variant v);  // 2 without counters, 4 with

// Agent-visible features. Counter variants append min(age,500)/100 per variable.
void featurize(const BeliefState& b, Variant v, std::span<double> out);
std::vector<double> featurize(const BeliefState& b, Variant v);

inline constexpr int kAgeCap = 500;
inline constexpr double kAgeScale = 100.0;

// Single-owner episode session; distinct instances may run concurrently.
class EnvSession {
  public:
    EnvSession(EnvConfig cfg, const DynamicsPredictor* imputer);

    const BeliefState& reset(Rng& rng);
    TransitionRecord step(int action_index);  // throws ProtocolError once done

    bool done() const { return done_; }
    int episode() const { return episode_; }
    int steps_taken() const { return step_; }
    const TrueState& true_state() const { return true_; }
    const BeliefState& belief() const { return belief_; }
    const EnvConfig& config() const { return cfg_; }

  private:
    EnvConfig cfg_;
    const DynamicsPredictor* imputer_;
    TrueState true_;
    BeliefState belief_;
    int episode_ = -1;
    int step_ = 0;
    bool done_ = true;
};

// Append-only CSV transition log, one file per run.
class TransitionLog {
  public:
    static const char* header();

    explicit TransitionLog(const std::string& path);
    ~TransitionLog();
    TransitionLog(const TransitionLog&) = delete;
    TransitionLog& operator=(const TransitionLog&) = delete;

    void append(const TransitionRecord& r);
    void flush();
    const std::string& path() const { return path_; }

  private:
    std::string path_;
    std::FILE* f_ = nullptr;
};

// Streaming read; fn is called once per row. Throws ParseError with the
// offending line on malformed content.
void for_each_transition(const std::string& path, const std::function<void(const TransitionRecord&)>& fn);
std::vector<TransitionRecord> read_transition_log(const std::string& path);

}  // namespace costly_obs
