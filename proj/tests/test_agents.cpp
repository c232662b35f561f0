#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "costly_obs/agents.hpp"
#include "costly_obs/errors.hpp"

using namespace costly_obs;

namespace {

ReplayEntry tagged_entry(int tag) {
    ReplayEntry e;
    e.action = tag % kNumActions;
    e.reward = tag;
    return e;
}

// one-layer net whose outputs are exactly its biases
nn::Mlp bias_net(int in_w, const std::vector<double>& outputs) {
    nn::Mlp m({in_w, static_cast<int>(outputs.size())});
    for (std::size_t i = 0; i < outputs.size(); ++i) m.params()[m.bias_offset(0) + i] = outputs[i];
    return m;
}

}  // namespace

TEST_CASE("replay buffer: bounded, strict FIFO eviction") {
    ReplayBuffer buf(5);
    CHECK(buf.capacity() == 5);
    for (int i = 0; i < 8; ++i) buf.push(tagged_entry(i));
    CHECK(buf.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(buf.entry(i).reward == 3 + i);  // 0..2 evicted
    CHECK_THROWS_AS((void)buf.entry(5), std::out_of_range);
}

TEST_CASE("replay sampling is close to uniform") {
    ReplayBuffer buf(100);
    for (int i = 0; i < 100; ++i) buf.push(tagged_entry(i));
    Rng rng(5);
    std::map<int, int> counts;
    const int draws = 50000;
    for (int i = 0; i < draws; ++i) counts[static_cast<int>(buf.sample(rng).reward)]++;
    for (const auto& [tag, count] : counts) {
        CHECK(count > draws / 100 * 0.8);
        CHECK(count < draws / 100 * 1.2);
    }
    CHECK(counts.size() == 100);
}

TEST_CASE("greedy action selection with lowest-index tie break") {
    std::vector<double> q(12, 0.0);
    q[5] = 1.0;
    const nn::Mlp net = bias_net(2, q);
    Rng rng(1);
    CHECK(select_action(net, std::vector<double>{0.0, 0.0}, 0.0, rng) == 5);

    std::vector<double> tie(12, 0.0);
    tie[2] = tie[9] = 3.0;
    const nn::Mlp tie_net = bias_net(2, tie);
    CHECK(select_action(tie_net, std::vector<double>{0.0, 0.0}, 0.0, rng) == 2);
}

TEST_CASE("epsilon 1 explores uniformly (120k draws within 1% absolute)") {
    const nn::Mlp net = bias_net(2, std::vector<double>(12, 0.0));
    Rng rng(9);
    std::array<int, 12> counts{};
    const int draws = 120000;
    for (int i = 0; i < draws; ++i)
        counts[select_action(net, std::vector<double>{0.1, 0.2}, 1.0, rng)]++;
    for (int a = 0; a < 12; ++a) {
        const double freq = static_cast<double>(counts[a]) / draws;
        CHECK(std::abs(freq - 1.0 / 12.0) < 0.01);
    }
}

TEST_CASE("epsilon 0 with a fixed net is a deterministic function of features") {
    Rng init(3);
    const nn::Mlp net = nn::make_mlp({4, 16, 12}, init);
    Rng r1(10), r2(999);
    const std::vector<double> f{0.2, -0.01, 1.0, 0.5};
    CHECK(select_action(net, f, 0.0, r1) == select_action(net, f, 0.0, r2));
}

TEST_CASE("td targets: terminal, discount and bootstrap rules") {
    // 12 outputs, max at index 7 with value 2.5
    std::vector<double> q(12, 0.0);
    q[7] = 2.5;
    const nn::Mlp target = bias_net(4, q);
    nn::BatchWorkspace ws;

    std::vector<ReplayEntry> batch(3);
    batch[0].reward = 1.0;
    batch[0].goal_terminal = true;  // y = r
    batch[1].reward = -2.0;         // y = r + gamma * 2.5
    batch[2].reward = 0.5;
    batch[2].truncated = true;      // truncation still bootstraps

    std::vector<double> y(3);
    td_targets(batch, target, 0.95, 4, y, ws);
    CHECK(y[0] == 1.0);
    CHECK(y[1] == doctest::Approx(-2.0 + 0.95 * 2.5).epsilon(1e-12));
    CHECK(y[2] == doctest::Approx(0.5 + 0.95 * 2.5).epsilon(1e-12));

    td_targets(batch, target, 0.0, 4, y, ws);  // gamma 0: every target collapses to r
    CHECK(y[0] == 1.0);
    CHECK(y[1] == -2.0);
    CHECK(y[2] == 0.5);
}

TEST_CASE("td targets against a hand-computed single entry") {
    Rng init(17);
    const nn::Mlp target = nn::make_mlp({4, 8, 12}, init);
    ReplayEntry e;
    e.next_features = {0.3, -0.02, 1.0, 0.0};
    e.reward = -4.0;
    std::vector<double> y(1);
    nn::BatchWorkspace ws;
    td_targets(std::vector<ReplayEntry>{e}, target, 0.9, 4, y, ws);

    const auto q = nn::forward(target, std::span<const double>(e.next_features.data(), 4));
    double best = q[0];
    for (double v : q) best = std::max(best, v);
    CHECK(y[0] == doctest::Approx(-4.0 + 0.9 * best).epsilon(1e-12));
}

TEST_CASE("dqn config validation") {
    DqnConfig bad;
    bad.batch_size = 100;
    bad.replay_capacity = 50;
    CHECK_THROWS_AS(validate_dqn_config(bad), ConfigError);

    DqnConfig gamma;
    gamma.gamma = 0.0;
    CHECK_THROWS_AS(validate_dqn_config(gamma), ConfigError);

    DqnConfig eps;
    eps.epsilon_min = 0.5;
    eps.epsilon_init = 0.2;
    CHECK_THROWS_AS(validate_dqn_config(eps), ConfigError);

    CHECK_NOTHROW(validate_dqn_config(DqnConfig{}));
}

TEST_CASE("tiny dqn run: stats shape, epsilon schedule, q-net widths") {
    EnvConfig env_cfg;
    env_cfg.variant = Variant::LocfWithCounters;
    DqnConfig dqn;
    dqn.episodes = 6;
    dqn.step_cap = 40;
    dqn.batch_size = 16;
    dqn.replay_capacity = 500;
    dqn.hidden = {8, 8};
    dqn.seed = 12;

    const auto result = train_dqn(env_cfg, dqn, nullptr, nullptr);
    REQUIRE(result.stats.size() == 6);
    for (int ep = 0; ep < 6; ++ep) {
        CHECK(result.stats[ep].episode == ep);
        CHECK(result.stats[ep].epsilon ==
              doctest::Approx(std::max(0.01, std::pow(0.995, ep))).epsilon(1e-12));
        CHECK(result.stats[ep].steps <= 40);
        int obs_total = 0;
        for (int c : result.stats[ep].obs_counts) obs_total += c;
        CHECK(obs_total == result.stats[ep].steps);
    }
    CHECK(result.qnet.sizes() == std::vector<int>{4, 8, 8, 12});

    EnvConfig no_counters = env_cfg;
    no_counters.variant = Variant::LocfNoCounters;
    const auto r2 = train_dqn(no_counters, dqn, nullptr, nullptr);
    CHECK(r2.qnet.sizes() == std::vector<int>{2, 8, 8, 12});
}

TEST_CASE("dqn training is deterministic for a fixed seed") {
    EnvConfig env_cfg;
    DqnConfig dqn;
    dqn.episodes = 4;
    dqn.step_cap = 60;
    dqn.batch_size = 8;
    dqn.hidden = {8};
    dqn.seed = 77;

    const auto a = train_dqn(env_cfg, dqn, nullptr, nullptr);
    const auto b = train_dqn(env_cfg, dqn, nullptr, nullptr);
    REQUIRE(a.stats.size() == b.stats.size());
    for (std::size_t i = 0; i < a.stats.size(); ++i) {
        CHECK(a.stats[i].steps == b.stats[i].steps);
        CHECK(a.stats[i].total_reward == b.stats[i].total_reward);
        CHECK(a.stats[i].obs_counts == b.stats[i].obs_counts);
    }
    CHECK(a.qnet.params() == b.qnet.params());
}

TEST_CASE("plain gradient descent is available behind the optimizer switch") {
    EnvConfig env_cfg;
    DqnConfig dqn;
    dqn.episodes = 2;
    dqn.step_cap = 100;
    dqn.batch_size = 8;
    dqn.hidden = {8};
    dqn.optimizer = nn::OptimizerKind::Sgd;
    dqn.seed = 21;
    const auto result = train_dqn(env_cfg, dqn, nullptr, nullptr);
    CHECK(result.stats.size() == 2);

    Rng init(substream_seed(21, RngStream::Init));
    const nn::Mlp fresh = nn::make_mlp({4, 8, 12}, init);
    CHECK(result.qnet.params() != fresh.params());  // sgd actually updated weights
}

TEST_CASE("per-step epsilon decay floors quickly") {
    EnvConfig env_cfg;
    DqnConfig dqn;
    dqn.episodes = 2;
    dqn.step_cap = 2000;
    dqn.batch_size = 8;
    dqn.hidden = {8};
    dqn.epsilon_per_step = true;
    dqn.seed = 5;
    const auto result = train_dqn(env_cfg, dqn, nullptr, nullptr);
    // after one 2000-step episode of per-step decay, epsilon is at the floor
    CHECK(result.stats[1].epsilon == doctest::Approx(0.01).epsilon(1e-9));
}

TEST_CASE("tile coder: active count and index bounds") {
    const TileCoder coder({{-1.2, 0.6}, {-0.07, 0.07}}, 8, 8);
    CHECK(coder.tilings() == 8);
    std::vector<int> feats(8);
    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
        const std::vector<double> x{rng.uniform(-1.2, 0.6), rng.uniform(-0.07, 0.07)};
        coder.active_features(x, feats);
        for (int t = 0; t < 8; ++t) {
            CHECK(feats[t] >= t * (coder.feature_count() / 8));
            CHECK(feats[t] < (t + 1) * (coder.feature_count() / 8));
        }
    }
    // nearby points share most tiles; distant points share none
    std::vector<int> a(8), b(8);
    coder.active_features(std::vector<double>{-0.5, 0.0}, a);
    coder.active_features(std::vector<double>{0.5, 0.05}, b);
    for (int t = 0; t < 8; ++t) CHECK(a[t] != b[t]);
}

TEST_CASE("zero learning rate leaves the baseline value table at zero") {
    BaselineSchedule sched;
    sched.alpha = 0.0;
    sched.episodes = 3;
    sched.step_cap = 50;
    const auto result = train_linear_baseline_vanilla(BaselineAlgo::Sarsa, sched);
    for (double w : result.weights) CHECK(w == 0.0);
    CHECK(result.stats.size() == 3);
}

TEST_CASE("baseline on the augmented environment records observation counts") {
    EnvConfig env_cfg;
    env_cfg.reward_mode = RewardMode::StepPenalty;
    BaselineSchedule sched;
    sched.episodes = 2;
    sched.step_cap = 30;
    sched.epsilon = 1.0;  // fully random so all action kinds appear
    const auto result = train_linear_baseline(BaselineAlgo::QLearning, env_cfg, sched);
    REQUIRE(result.stats.size() == 2);
    for (const auto& st : result.stats) {
        int total = 0;
        for (int c : st.obs_counts) total += c;
        CHECK(total == st.steps);
        CHECK(st.steps <= 30);
        // step penalty plus observation costs makes every reward <= -1 per step
        CHECK(st.total_reward <= -static_cast<double>(st.steps));
    }
}

TEST_CASE("baselines are deterministic for a fixed seed") {
    BaselineSchedule sched;
    sched.episodes = 3;
    sched.step_cap = 100;
    const auto a = train_linear_baseline_vanilla(BaselineAlgo::QLearning, sched);
    const auto b = train_linear_baseline_vanilla(BaselineAlgo::QLearning, sched);
    REQUIRE(a.stats.size() == b.stats.size());
    for (std::size_t i = 0; i < a.stats.size(); ++i) CHECK(a.stats[i].steps == b.stats[i].steps);
    CHECK(a.weights == b.weights);
}
