// Compares the OpenMP batch kernels against their serial references and
// reports throughput for the training-style workloads.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "costly_obs/analysis.hpp"
#include "costly_obs/env.hpp"
#include "costly_obs/nn.hpp"
#include "costly_obs/rng.hpp"

using namespace costly_obs;

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

template <class F>
double time_ms(int reps, F&& fn) {
    fn();  // warm up
    const double t0 = now_ms();
    for (int i = 0; i < reps; ++i) fn();
    return (now_ms() - t0) / reps;
}

void bench_gradient(int batch, int reps) {
    Rng rng(7);
    const nn::Mlp model = nn::make_mlp({4, 64, 64, 12}, rng);
    std::vector<double> xs(static_cast<std::size_t>(batch) * 4);
    std::vector<int> actions(batch);
    std::vector<double> targets(batch);
    for (auto& v : xs) v = rng.uniform(-1, 1);
    for (int i = 0; i < batch; ++i) {
        actions[i] = rng.uniform_int(12);
        targets[i] = rng.uniform(-1, 1);
    }
    std::vector<double> grad_s(model.param_count()), grad_p(model.param_count());
    nn::BatchWorkspace ws_s, ws_p;

    const double serial = time_ms(reps, [&] {
        nn::action_value_batch_gradient_serial(model, xs, batch, actions, targets, grad_s, ws_s);
    });
    const double parallel = time_ms(reps, [&] {
        nn::action_value_batch_gradient(model, xs, batch, actions, targets, grad_p, ws_p);
    });
    bool identical = true;
    for (std::size_t i = 0; i < grad_s.size(); ++i)
        if (grad_s[i] != grad_p[i]) identical = false;
    std::printf("td-gradient    batch=%-5d serial=%8.3f ms  omp=%8.3f ms  speedup=%.2fx  identical=%s\n",
                batch, serial, parallel, serial / parallel, identical ? "yes" : "NO");
}

void bench_forward(int batch, int reps) {
    Rng rng(11);
    const nn::Mlp model = nn::make_mlp({4, 64, 64, 12}, rng);
    std::vector<double> xs(static_cast<std::size_t>(batch) * 4);
    for (auto& v : xs) v = rng.uniform(-1, 1);
    std::vector<double> out_s(static_cast<std::size_t>(batch) * 12), out_p(out_s.size());
    nn::BatchWorkspace ws_s, ws_p;

    const double serial =
        time_ms(reps, [&] { nn::forward_batch_serial(model, xs, batch, out_s, ws_s); });
    const double parallel =
        time_ms(reps, [&] { nn::forward_batch(model, xs, batch, out_p, ws_p); });
    bool identical = out_s == out_p;
    std::printf("forward        batch=%-5d serial=%8.3f ms  omp=%8.3f ms  speedup=%.2fx  identical=%s\n",
                batch, serial, parallel, serial / parallel, identical ? "yes" : "NO");
}

void bench_histogram(long rows, int reps) {
    Rng rng(13);
    std::vector<TransitionRecord> recs(rows);
    for (auto& r : recs) {
        r.true_before.position = rng.uniform(-1.2, 0.5);
        r.action_index = rng.uniform_int(12);
    }
    const double serial = time_ms(reps, [&] { (void)build_histogram_serial(recs); });
    const double parallel = time_ms(reps, [&] { (void)build_histogram(recs); });
    const auto a = build_histogram_serial(recs);
    const auto b = build_histogram(recs);
    bool identical = true;
    for (int i = 0; i < kHistogramBrackets; ++i)
        if (a.brackets[i].total != b.brackets[i].total ||
            a.brackets[i].pos_obs != b.brackets[i].pos_obs ||
            a.brackets[i].vel_obs != b.brackets[i].vel_obs)
            identical = false;
    std::printf("histogram      rows=%-6ld serial=%8.3f ms  omp=%8.3f ms  speedup=%.2fx  identical=%s\n",
                rows, serial, parallel, serial / parallel, identical ? "yes" : "NO");
}

void bench_env_steps(long steps) {
    EnvConfig cfg;
    cfg.step_cap = 1 << 30;
    Rng rng(17);
    EnvSession env(cfg, nullptr);
    env.reset(rng);
    double sink = 0.0;
    const double t0 = now_ms();
    for (long i = 0; i < steps; ++i) {
        if (env.done()) env.reset(rng);
        sink += env.step(rng.uniform_int(kNumActions)).reward;
    }
    const double dt = now_ms() - t0;
    std::printf("env-step       steps=%-6ld total=%8.3f ms  (%.1f Msteps/s, checksum %.3f)\n",
                steps, dt, steps / dt / 1e3, sink);
}

}  // namespace

int main() {
    std::printf("kernel threads: %d\n\n", nn::kernel_threads());
    for (int batch : {64, 256, 1024}) bench_forward(batch, 200);
    std::printf("\n");
    for (int batch : {64, 256, 1024}) bench_gradient(batch, 100);
    std::printf("\n");
    bench_histogram(2'000'000, 5);
    bench_env_steps(1'000'000);
    return 0;
}
