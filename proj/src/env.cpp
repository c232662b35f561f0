#include "costly_obs/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "costly_obs/csv.hpp"
#include "costly_obs/errors.hpp"

namespace costly_obs {

const char* to_string(ObsChoice o) {
    switch (o) {
        case ObsChoice::None: return "None";
        case ObsChoice::Position: return "Position";
        case ObsChoice::Velocity: return "Velocity";
        case ObsChoice::Both: return "Both";
    }
    return "?";
}

ObsChoice parse_obs_choice(const std::string& s) {
    if (s == "None") return ObsChoice::None;
    if (s == "Position") return ObsChoice::Position;
    if (s == "Velocity") return ObsChoice::Velocity;
    if (s == "Both") return ObsChoice::Both;
    throw ConfigError("unknown observation choice: " + s);
}

bool observes_position(ObsChoice o) { return o == ObsChoice::Position || o == ObsChoice::Both; }
bool observes_velocity(ObsChoice o) { return o == ObsChoice::Velocity || o == ObsChoice::Both; }
int observed_count(ObsChoice o) {
    return (observes_position(o) ? 1 : 0) + (observes_velocity(o) ? 1 : 0);
}

const char* to_string(Variant v) {
    switch (v) {
        case Variant::LocfNoCounters: return "locf";
        case Variant::LocfWithCounters: return "locf-counters";
        case Variant::DynamicsWithCounters: return "dynamics-counters";
    }
    return "?";
}

Variant parse_variant(const std::string& s) {
    if (s == "locf") return Variant::LocfNoCounters;
    if (s == "locf-counters") return Variant::LocfWithCounters;
    if (s == "dynamics-counters") return Variant::DynamicsWithCounters;
    throw ConfigError("unknown variant: " + s + " (expected locf, locf-counters or dynamics-counters)");
}

const char* to_string(CostMode m) { return m == CostMode::PerVariable ? "per-variable" : "flat"; }

CostMode parse_cost_mode(const std::string& s) {
    if (s == "per-variable") return CostMode::PerVariable;
    if (s == "flat") return CostMode::Flat;
    throw ConfigError("unknown cost mode: " + s + " (expected per-variable or flat)");
}

const char* to_string(RewardMode m) {
    return m == RewardMode::EnergyShaped ? "energy-shaped" : "step-penalty";
}

RewardMode parse_reward_mode(const std::string& s) {
    if (s == "energy-shaped") return RewardMode::EnergyShaped;
    if (s == "step-penalty") return RewardMode::StepPenalty;
    throw ConfigError("unknown reward mode: " + s + " (expected energy-shaped or step-penalty)");
}

void validate_env_config(const EnvConfig& cfg) {
    if (cfg.step_cap <= 0) throw ConfigError("step_cap must be positive");
    if (cfg.obs_cost > 0) throw ConfigError("obs_cost must be <= 0");
}

CompositeAction decode_action(int index) {
    if (index < 0 || index >= kNumActions)
        throw std::out_of_range("action index " + std::to_string(index) + " outside 0..11");
    return CompositeAction{static_cast<Motion>(index / 4), static_cast<ObsChoice>(index % 4)};
}

int encode_action(CompositeAction a) {
    return static_cast<int>(a.motion) * 4 + static_cast<int>(a.obs);
}

double observation_cost(ObsChoice obs, const EnvConfig& cfg) {
    if (cfg.full_obs) return 0.0;
    const int k = cfg.cost_mode == CostMode::PerVariable ? observed_count(obs)
                                                         : (obs == ObsChoice::None ? 0 : 1);
    return cfg.obs_cost * k;
}

double shaped_reward(const TrueState& prev, const TrueState& next, ObsChoice obs,
                     const EnvConfig& cfg) {
    const double base =
        cfg.reward_mode == RewardMode::EnergyShaped
            ? 100.0 * (mountain_car::mechanical_energy(next) - mountain_car::mechanical_energy(prev))
            : -1.0;
    return base + observation_cost(obs, cfg);
}

BeliefState update_belief(const BeliefState& b, const TrueState& true_next, CompositeAction a,
                          Variant variant, const DynamicsPredictor* imputer) {
    const bool see_pos = observes_position(a.obs);
    const bool see_vel = observes_velocity(a.obs);
    BeliefState next;
    if (variant == Variant::DynamicsWithCounters && !(see_pos && see_vel)) {
        if (!imputer)
            throw ConfigError("dynamics-counters variant requires a dynamics model");
        // predict from the current belief, so imputation dead-reckons
        const auto [pred_pos, pred_vel] = imputer->predict_next(b.pos_belief, b.vel_belief, a.motion);
        next.pos_belief = see_pos ? true_next.position : pred_pos;
        next.vel_belief = see_vel ? true_next.velocity : pred_vel;
    } else {
        next.pos_belief = see_pos ? true_next.position : b.pos_belief;
        next.vel_belief = see_vel ? true_next.velocity : b.vel_belief;
    }
    next.pos_age = see_pos ? 0 : b.pos_age + 1;
    next.vel_age = see_vel ? 0 : b.vel_age + 1;
    return next;
}

ResetResult env_reset(const EnvConfig& cfg, Rng& rng) {
    validate_env_config(cfg);
    const TrueState s = mountain_car::reset(rng);
    return ResetResult{BeliefState{s.position, s.velocity, 0, 0}, s};
}

StepOutcome env_step(const TrueState& true_s, const BeliefState& b, int action_index,
                     int steps_before, const EnvConfig& cfg, const DynamicsPredictor* imputer) {
    const CompositeAction chosen = decode_action(action_index);
    CompositeAction effective = chosen;
    if (cfg.full_obs) effective.obs = ObsChoice::Both;
    const auto phys = mountain_car::step(true_s, effective.motion);
    StepOutcome out;
    out.true_next = phys.state;
    out.reward = shaped_reward(true_s, phys.state, chosen.obs, cfg);
    out.belief_next = update_belief(b, phys.state, effective, cfg.variant, imputer);
    const bool capped = steps_before + 1 >= cfg.step_cap;
    out.done = phys.done || capped;
    out.truncated = !phys.done && capped;
    return out;
}

int feature_width(Variant v) { return v == Variant::LocfNoCounters ? 2 : 4; }

void featurize(const BeliefState& b, Variant v, std::span<double> out) {
    if (static_cast<int>(out.size()) != feature_width(v))
        throw ShapeError("featurize: output span has wrong width");
    out[0] = b.pos_belief;
    out[1] = b.vel_belief;
    if (v != Variant::LocfNoCounters) {
        out[2] = static_cast<double>(std::min(b.pos_age, kAgeCap)) / kAgeScale;
        out[3] = static_cast<double>(std::min(b.vel_age, kAgeCap)) / kAgeScale;
    }
}

std::vector<double> featurize(const BeliefState& b, Variant v) {
    std::vector<double> out(feature_width(v));
    featurize(b, v, out);
    return out;
}

EnvSession::EnvSession(EnvConfig cfg, const DynamicsPredictor* imputer)
    : cfg_(cfg), imputer_(imputer) {
    validate_env_config(cfg_);
    if (cfg_.variant == Variant::DynamicsWithCounters && !imputer_)
        throw ConfigError("dynamics-counters variant requires a dynamics model");
}

const BeliefState& EnvSession::reset(Rng& rng) {
    auto r = env_reset(cfg_, rng);
    true_ = r.true_state;
    belief_ = r.belief;
    ++episode_;
    step_ = 0;
    done_ = false;
    return belief_;
}

TransitionRecord EnvSession::step(int action_index) {
    if (done_) throw ProtocolError("step() called on a finished episode");
    const StepOutcome out = env_step(true_, belief_, action_index, step_, cfg_, imputer_);
    TransitionRecord rec;
    rec.episode = episode_;
    rec.step = step_ + 1;
    rec.action_index = action_index;
    rec.reward = out.reward;
    rec.done = out.done;
    rec.truncated = out.truncated;
    rec.true_before = true_;
    rec.true_after = out.true_next;
    rec.belief_before = belief_;
    rec.belief_after = out.belief_next;
    true_ = out.true_next;
    belief_ = out.belief_next;
    ++step_;
    done_ = out.done;
    return rec;
}

const char* TransitionLog::header() {
    return "episode,step,action_index,motion,obs_choice,reward,done,truncated,"
           "true_pos,true_vel,next_true_pos,next_true_vel,"
           "bel_pos,bel_vel,pos_age,vel_age,"
           "next_bel_pos,next_bel_vel,next_pos_age,next_vel_age";
}

TransitionLog::TransitionLog(const std::string& path) : path_(path) {
    f_ = std::fopen(path.c_str(), "w");
    if (!f_) throw DataError("cannot open transition log for writing: " + path);
    std::setvbuf(f_, nullptr, _IOFBF, 1 << 20);
    std::fputs(header(), f_);
    std::fputc('\n', f_);
}

TransitionLog::~TransitionLog() {
    if (f_) std::fclose(f_);
}

void TransitionLog::append(const TransitionRecord& r) {
    const CompositeAction a = decode_action(r.action_index);
    char buf[512];
    const int n = std::snprintf(
        buf, sizeof(buf),
        "%d,%d,%d,%s,%s,%.9g,%d,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d,%d,%.9g,%.9g,%d,%d\n",
        r.episode, r.step, r.action_index, to_string(a.motion), to_string(a.obs), r.reward,
        r.done ? 1 : 0, r.truncated ? 1 : 0, r.true_before.position, r.true_before.velocity,
        r.true_after.position, r.true_after.velocity, r.belief_before.pos_belief,
        r.belief_before.vel_belief, r.belief_before.pos_age, r.belief_before.vel_age,
        r.belief_after.pos_belief, r.belief_after.vel_belief, r.belief_after.pos_age,
        r.belief_after.vel_age);
    std::fwrite(buf, 1, static_cast<std::size_t>(n), f_);
}

void TransitionLog::flush() {
    if (f_) std::fflush(f_);
}

void for_each_transition(const std::string& path,
                         const std::function<void(const TransitionRecord&)>& fn) {
    CsvReader reader(path);
    const int c_episode = reader.col("episode");
    const int c_step = reader.col("step");
    const int c_action = reader.col("action_index");
    const int c_reward = reader.col("reward");
    const int c_done = reader.col("done");
    const int c_trunc = reader.col("truncated");
    const int c_tp = reader.col("true_pos");
    const int c_tv = reader.col("true_vel");
    const int c_ntp = reader.col("next_true_pos");
    const int c_ntv = reader.col("next_true_vel");
    const int c_bp = reader.col("bel_pos");
    const int c_bv = reader.col("bel_vel");
    const int c_pa = reader.col("pos_age");
    const int c_va = reader.col("vel_age");
    const int c_nbp = reader.col("next_bel_pos");
    const int c_nbv = reader.col("next_bel_vel");
    const int c_npa = reader.col("next_pos_age");
    const int c_nva = reader.col("next_vel_age");

    std::vector<std::string_view> f;
    while (reader.next(f)) {
        const long ln = reader.line();
        TransitionRecord r;
        r.episode = static_cast<int>(parse_long(f[c_episode], ln, "episode"));
        r.step = static_cast<int>(parse_long(f[c_step], ln, "step"));
        r.action_index = static_cast<int>(parse_long(f[c_action], ln, "action_index"));
        if (r.action_index < 0 || r.action_index >= kNumActions)
            throw ParseError("action_index outside 0..11", ln);
        r.reward = parse_double(f[c_reward], ln, "reward");
        r.done = parse_long(f[c_done], ln, "done") != 0;
        r.truncated = parse_long(f[c_trunc], ln, "truncated") != 0;
        r.true_before = {parse_double(f[c_tp], ln, "true_pos"),
                         parse_double(f[c_tv], ln, "true_vel")};
        r.true_after = {parse_double(f[c_ntp], ln, "next_true_pos"),
                        parse_double(f[c_ntv], ln, "next_true_vel")};
        r.belief_before = {parse_double(f[c_bp], ln, "bel_pos"),
                           parse_double(f[c_bv], ln, "bel_vel"),
                           static_cast<int>(parse_long(f[c_pa], ln, "pos_age")),
                           static_cast<int>(parse_long(f[c_va], ln, "vel_age"))};
        r.belief_after = {parse_double(f[c_nbp], ln, "next_bel_pos"),
                          parse_double(f[c_nbv], ln, "next_bel_vel"),
                          static_cast<int>(parse_long(f[c_npa], ln, "next_pos_age")),
                          static_cast<int>(parse_long(f[c_nva], ln, "next_vel_age"))};
        fn(r);
    }
}

std::vector<TransitionRecord> read_transition_log(const std::string& path) {
    std::vector<TransitionRecord> rows;
    for_each_transition(path, [&](const TransitionRecord& r) { rows.push_back(r); });
    return rows;
}

}  // namespace costly_obs
