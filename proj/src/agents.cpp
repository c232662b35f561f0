#include "costly_obs/agents.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <tuple>

#include "costly_obs/errors.hpp"

namespace costly_obs {

void validate_dqn_config(const DqnConfig& cfg) {
    if (cfg.episodes <= 0) throw ConfigError("episodes must be positive");
    if (cfg.step_cap <= 0) throw ConfigError("step_cap must be positive");
    if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1]");
    if (!(cfg.epsilon_min >= 0.0 && cfg.epsilon_min <= cfg.epsilon_init && cfg.epsilon_init <= 1.0))
        throw ConfigError("need 0 <= epsilon_min <= epsilon_init <= 1");
    if (cfg.epsilon_decay <= 0.0 || cfg.epsilon_decay > 1.0)
        throw ConfigError("epsilon_decay must be in (0, 1]");
    if (cfg.batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (cfg.batch_size > cfg.replay_capacity)
        throw ConfigError("batch_size must not exceed replay_capacity");
    if (cfg.target_sync_interval <= 0) throw ConfigError("target_sync_interval must be positive");
    if (cfg.lr < 0.0) throw ConfigError("learning rate must be non-negative");
    if (cfg.hidden.empty()) throw ConfigError("need at least one hidden layer");
    for (int h : cfg.hidden)
        if (h <= 0) throw ConfigError("hidden sizes must be positive");
}

ReplayBuffer::ReplayBuffer(int capacity) : cap_(capacity) {
    if (capacity <= 0) throw ConfigError("replay capacity must be positive");
    ring_.reserve(capacity);
}

void ReplayBuffer::push(const ReplayEntry& e) {
    if (size_ < static_cast<std::size_t>(cap_)) {
        ring_.push_back(e);
        ++size_;
    } else {
        ring_[next_] = e;
    }
    next_ = (next_ + 1) % cap_;
}

const ReplayEntry& ReplayBuffer::entry(std::size_t i) const {
    if (i >= size_) throw std::out_of_range("replay index out of range");
    if (size_ < static_cast<std::size_t>(cap_)) return ring_[i];
    return ring_[(next_ + i) % cap_];
}

const ReplayEntry& ReplayBuffer::sample(Rng& rng) const {
    if (size_ == 0) throw ProtocolError("sampling from an empty replay buffer");
    return entry(static_cast<std::size_t>(rng.uniform_int(static_cast<int>(size_))));
}

int select_action(const nn::Mlp& qnet, std::span<const double> features, double epsilon,
                  Rng& rng) {
    if (epsilon > 0.0 && rng.uniform() < epsilon) return rng.uniform_int(qnet.output_size());
    const std::vector<double> q = nn::forward(qnet, features);
    int best = 0;
    for (int a = 1; a < static_cast<int>(q.size()); ++a)
        if (q[a] > q[best]) best = a;
    return best;
}

void td_targets(std::span<const ReplayEntry> batch, const nn::Mlp& target_net, double gamma,
                int feat_width, std::span<double> out, nn::BatchWorkspace& ws) {
    const int n = static_cast<int>(batch.size());
    if (n == 0) throw ShapeError("td_targets: empty batch");
    if (out.size() != batch.size()) throw ShapeError("td_targets: bad output size");
    const int n_out = target_net.output_size();
    std::vector<double> next_x(static_cast<std::size_t>(n) * feat_width);
    for (int i = 0; i < n; ++i)
        std::memcpy(next_x.data() + static_cast<std::size_t>(i) * feat_width,
                    batch[i].next_features.data(), sizeof(double) * feat_width);
    std::vector<double> q_next(static_cast<std::size_t>(n) * n_out);
    nn::forward_batch(target_net, next_x, n, q_next, ws);
    for (int i = 0; i < n; ++i) {
        if (batch[i].goal_terminal) {
            out[i] = batch[i].reward;
            continue;
        }
        const double* q = q_next.data() + static_cast<std::size_t>(i) * n_out;
        double best = q[0];
        for (int a = 1; a < n_out; ++a) best = std::max(best, q[a]);
        out[i] = batch[i].reward + gamma * best;
    }
}

DqnTrainResult train_dqn(const EnvConfig& env_cfg_in, const DqnConfig& dqn,
                         const DynamicsPredictor* imputer, TransitionLog* log, bool verbose) {
    validate_dqn_config(dqn);
    EnvConfig env_cfg = env_cfg_in;
    env_cfg.step_cap = dqn.step_cap;
    validate_env_config(env_cfg);

    const int width = feature_width(env_cfg.variant);
    Rng env_rng(substream_seed(dqn.seed, RngStream::Env));
    Rng agent_rng(substream_seed(dqn.seed, RngStream::Agent));
    Rng init_rng(substream_seed(dqn.seed, RngStream::Init));

    std::vector<int> sizes;
    sizes.push_back(width);
    sizes.insert(sizes.end(), dqn.hidden.begin(), dqn.hidden.end());
    sizes.push_back(kNumActions);
    nn::Mlp qnet = nn::make_mlp(sizes, init_rng);
    nn::Mlp target = qnet;
    nn::AdamState opt;
    opt.reset(qnet.param_count());

    ReplayBuffer replay(dqn.replay_capacity);
    EnvSession env(env_cfg, imputer);

    const int n = dqn.batch_size;
    nn::BatchWorkspace ws;
    std::vector<ReplayEntry> batch(n);
    std::vector<double> xs(static_cast<std::size_t>(n) * width);
    std::vector<int> actions(n);
    std::vector<double> targets(n);
    std::vector<double> grad(qnet.param_count());

    std::vector<EpisodeStats> stats;
    stats.reserve(dqn.episodes);
    double epsilon = dqn.epsilon_init;
    long global_step = 0;

    std::array<double, 4> feat_cur{}, feat_next{};
    for (int ep = 0; ep < dqn.episodes; ++ep) {
        env.reset(env_rng);
        EpisodeStats st;
        st.episode = ep;
        st.epsilon = epsilon;
        featurize(env.belief(), env_cfg.variant, std::span<double>(feat_cur.data(), width));
        while (!env.done()) {
            const int a =
                select_action(qnet, std::span<const double>(feat_cur.data(), width), epsilon,
                              agent_rng);
            const TransitionRecord rec = env.step(a);
            featurize(rec.belief_after, env_cfg.variant,
                      std::span<double>(feat_next.data(), width));
            ++global_step;

            ReplayEntry e;
            e.features = feat_cur;
            e.next_features = feat_next;
            e.action = a;
            e.reward = rec.reward;
            e.goal_terminal = rec.done && !rec.truncated;
            e.truncated = rec.truncated;
            replay.push(e);
            if (log) log->append(rec);

            ++st.steps;
            st.total_reward += rec.reward;
            ++st.obs_counts[static_cast<int>(decode_action(a).obs)];
            if (e.goal_terminal) st.reached_goal = true;

            if (replay.size() >= static_cast<std::size_t>(n)) {
                for (int i = 0; i < n; ++i) batch[i] = replay.sample(agent_rng);
                td_targets(batch, target, dqn.gamma, width, targets, ws);
                for (int i = 0; i < n; ++i) {
                    std::memcpy(xs.data() + static_cast<std::size_t>(i) * width,
                                batch[i].features.data(), sizeof(double) * width);
                    actions[i] = batch[i].action;
                }
                nn::action_value_batch_gradient(qnet, xs, n, actions, targets, grad, ws);
                if (dqn.optimizer == nn::OptimizerKind::Adam)
                    nn::adam_step(qnet, opt, grad, dqn.lr);
                else
                    nn::sgd_step(qnet, grad, dqn.lr);
            }
            if (global_step % dqn.target_sync_interval == 0) target.params() = qnet.params();
            if (dqn.epsilon_per_step)
                epsilon = std::max(dqn.epsilon_min, epsilon * dqn.epsilon_decay);
            feat_cur = feat_next;
        }
        stats.push_back(st);
        if (!dqn.epsilon_per_step)
            epsilon = std::max(dqn.epsilon_min, epsilon * dqn.epsilon_decay);
        if (verbose && ((ep + 1) % 10 == 0 || ep + 1 == dqn.episodes)) {
            std::fprintf(stderr,
                         "episode %d/%d steps=%d reward=%.2f goal=%d eps=%.3f buffer=%zu\n",
                         ep + 1, dqn.episodes, st.steps, st.total_reward,
                         st.reached_goal ? 1 : 0, st.epsilon, replay.size());
        }
    }
    return DqnTrainResult{std::move(qnet), std::move(stats)};
}

// ---- tile coding -----------------------------------------------------------

TileCoder::TileCoder(std::vector<std::pair<double, double>> ranges, int tilings, int grid)
    : dims_(static_cast<int>(ranges.size())), tilings_(tilings), grid_(grid) {
    if (dims_ <= 0) throw ConfigError("tile coder needs at least one dimension");
    if (tilings_ <= 0 || grid_ <= 0) throw ConfigError("tilings and grid must be positive");
    cells_ = grid_ + 1;  // offsets shift cells past the base grid by at most one
    per_tiling_ = 1;
    for (int d = 0; d < dims_; ++d) {
        if (!(ranges[d].second > ranges[d].first))
            throw ConfigError("tile coder range must be increasing");
        lo_.push_back(ranges[d].first);
        tile_width_.push_back((ranges[d].second - ranges[d].first) / grid_);
        per_tiling_ *= cells_;
    }
}

void TileCoder::active_features(std::span<const double> x, std::span<int> out) const {
    if (static_cast<int>(x.size()) != dims_) throw ShapeError("tile coder input width mismatch");
    if (static_cast<int>(out.size()) != tilings_) throw ShapeError("tile coder output size mismatch");
    for (int t = 0; t < tilings_; ++t) {
        int index = 0;
        for (int d = 0; d < dims_; ++d) {
            // odd displacement per dimension keeps the tilings asymmetric
            const double phase = static_cast<double>((t * (2 * d + 1)) % tilings_) / tilings_;
            double u = (x[d] - lo_[d]) / tile_width_[d] + phase;
            int cell = static_cast<int>(std::floor(u));
            cell = std::clamp(cell, 0, cells_ - 1);
            index = index * cells_ + cell;
        }
        out[t] = t * per_tiling_ + index;
    }
}

const char* to_string(BaselineAlgo a) { return a == BaselineAlgo::Sarsa ? "sarsa" : "qlearning"; }

namespace {

int greedy_tile_action(const std::vector<double>& w, std::span<const int> feats, int n_actions) {
    int best = 0;
    double best_q = -1e300;
    for (int a = 0; a < n_actions; ++a) {
        double q = 0.0;
        for (int f : feats) q += w[static_cast<std::size_t>(f) * n_actions + a];
        if (q > best_q) {
            best_q = q;
            best = a;
        }
    }
    return best;
}

double tile_q(const std::vector<double>& w, std::span<const int> feats, int n_actions, int a) {
    double q = 0.0;
    for (int f : feats) q += w[static_cast<std::size_t>(f) * n_actions + a];
    return q;
}

int eps_greedy_tile(const std::vector<double>& w, std::span<const int> feats, int n_actions,
                    double epsilon, Rng& rng) {
    if (epsilon > 0.0 && rng.uniform() < epsilon) return rng.uniform_int(n_actions);
    return greedy_tile_action(w, feats, n_actions);
}

// Shared TD loop over an abstract episode interface.
struct BaselineEnvIface {
    std::function<void()> reset;
    std::function<void(std::span<double>)> features;  // current state features
    // apply action; returns (reward, done, truncated, obs_choice of the action)
    std::function<std::tuple<double, bool, bool, ObsChoice>(int)> step;
    int n_actions = 0;
    int feat_dims = 0;
};

BaselineResult run_baseline(BaselineAlgo algo, const TileCoder& coder, BaselineEnvIface env,
                            const BaselineSchedule& sched) {
    const int A = env.n_actions;
    std::vector<double> w(static_cast<std::size_t>(coder.feature_count()) * A, 0.0);
    Rng agent_rng(substream_seed(sched.seed, RngStream::Agent));
    const double alpha = sched.alpha / coder.tilings();

    std::vector<double> x(env.feat_dims);
    std::vector<int> feats(coder.tilings()), feats_next(coder.tilings());
    std::vector<EpisodeStats> stats;
    stats.reserve(sched.episodes);

    for (int ep = 0; ep < sched.episodes; ++ep) {
        env.reset();
        EpisodeStats st;
        st.episode = ep;
        st.epsilon = sched.epsilon;
        env.features(x);
        coder.active_features(x, feats);
        int a = eps_greedy_tile(w, feats, A, sched.epsilon, agent_rng);
        bool done = false;
        while (!done) {
            auto [r, d, truncated, obs] = env.step(a);
            done = d;
            ++st.steps;
            st.total_reward += r;
            ++st.obs_counts[static_cast<int>(obs)];
            if (d && !truncated) st.reached_goal = true;

            double target = r;
            int a_next = 0;
            if (!d || truncated) {
                env.features(x);
                coder.active_features(x, feats_next);
                if (algo == BaselineAlgo::Sarsa) {
                    a_next = eps_greedy_tile(w, feats_next, A, sched.epsilon, agent_rng);
                    target += sched.gamma * tile_q(w, feats_next, A, a_next);
                } else {
                    const int g = greedy_tile_action(w, feats_next, A);
                    target += sched.gamma * tile_q(w, feats_next, A, g);
                }
            }
            const double delta = target - tile_q(w, feats, A, a);
            for (int f : feats) w[static_cast<std::size_t>(f) * A + a] += alpha * delta;
            if (done) break;
            feats.swap(feats_next);
            if (algo == BaselineAlgo::Sarsa) {
                a = a_next;
            } else {
                a = eps_greedy_tile(w, feats, A, sched.epsilon, agent_rng);
            }
        }
        stats.push_back(st);
    }
    return BaselineResult{std::move(stats), std::move(w)};
}

}  // namespace

BaselineResult train_linear_baseline_vanilla(BaselineAlgo algo, const BaselineSchedule& sched) {
    TileCoder coder({{mountain_car::kMinPosition, mountain_car::kMaxPosition},
                     {-mountain_car::kMaxSpeed, mountain_car::kMaxSpeed}},
                    sched.tilings, sched.grid);
    struct State {
        TrueState s;
        int steps = 0;
        Rng rng;
        explicit State(std::uint64_t seed) : rng(substream_seed(seed, RngStream::Env)) {}
    };
    auto state = std::make_shared<State>(sched.seed);
    const int cap = sched.step_cap;

    BaselineEnvIface iface;
    iface.n_actions = 3;
    iface.feat_dims = 2;
    iface.reset = [state] {
        state->s = mountain_car::reset(state->rng);
        state->steps = 0;
    };
    iface.features = [state](std::span<double> out) {
        out[0] = state->s.position;
        out[1] = state->s.velocity;
    };
    iface.step = [state, cap](int a) {
        const auto res = mountain_car::step(state->s, static_cast<Motion>(a));
        state->s = res.state;
        ++state->steps;
        const bool capped = state->steps >= cap;
        const bool done = res.done || capped;
        return std::make_tuple(-1.0, done, !res.done && capped, ObsChoice::None);
    };
    return run_baseline(algo, coder, std::move(iface), sched);
}

BaselineResult train_linear_baseline(BaselineAlgo algo, const EnvConfig& env_cfg_in,
                                     const BaselineSchedule& sched) {
    EnvConfig env_cfg = env_cfg_in;
    env_cfg.step_cap = sched.step_cap;
    validate_env_config(env_cfg);
    const int width = feature_width(env_cfg.variant);
    std::vector<std::pair<double, double>> ranges = {
        {mountain_car::kMinPosition, mountain_car::kMaxPosition},
        {-mountain_car::kMaxSpeed, mountain_car::kMaxSpeed}};
    if (width == 4) {
        const double age_hi = static_cast<double>(kAgeCap) / kAgeScale;
        ranges.push_back({0.0, age_hi});
        ranges.push_back({0.0, age_hi});
    }
    TileCoder coder(ranges, sched.tilings, sched.grid);

    struct State {
        EnvSession env;
        Rng rng;
        Variant variant;
        State(const EnvConfig& cfg, std::uint64_t seed)
            : env(cfg, nullptr), rng(substream_seed(seed, RngStream::Env)), variant(cfg.variant) {}
    };
    auto state = std::make_shared<State>(env_cfg, sched.seed);

    BaselineEnvIface iface;
    iface.n_actions = kNumActions;
    iface.feat_dims = width;
    iface.reset = [state] { state->env.reset(state->rng); };
    iface.features = [state](std::span<double> out) {
        featurize(state->env.belief(), state->variant, out);
    };
    iface.step = [state](int a) {
        const TransitionRecord rec = state->env.step(a);
        return std::make_tuple(rec.reward, rec.done, rec.truncated, decode_action(a).obs);
    };
    return run_baseline(algo, coder, std::move(iface), sched);
}

}  // namespace costly_obs
