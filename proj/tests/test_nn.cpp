#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "costly_obs/errors.hpp"
#include "costly_obs/nn.hpp"
#include "costly_obs/rng.hpp"

using namespace costly_obs;

namespace {

// Dense-algebra oracle: explicit matrix-vector chain.
std::vector<double> oracle_forward(const nn::Mlp& m, const std::vector<double>& x) {
    std::vector<double> cur = x;
    for (int k = 0; k < m.layer_count(); ++k) {
        const int ni = m.sizes()[k], no = m.sizes()[k + 1];
        std::vector<double> next(no);
        for (int o = 0; o < no; ++o) {
            double s = m.params()[m.bias_offset(k) + o];
            for (int i = 0; i < ni; ++i)
                s += m.params()[m.weight_offset(k) + static_cast<std::size_t>(o) * ni + i] * cur[i];
            next[o] = (k != m.layer_count() - 1 && s < 0.0) ? 0.0 : s;
        }
        cur = std::move(next);
    }
    return cur;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<double> random_vec(int n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

}  // namespace

TEST_CASE("forward of an all-zero net is zero") {
    nn::Mlp m({3, 5, 2});
    const auto y = nn::forward(m, std::vector<double>{1.0, -2.0, 3.0});
    CHECK(y.size() == 2);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 0.0);
}

TEST_CASE("single identity layer reproduces its input") {
    nn::Mlp m({3, 3});
    for (int i = 0; i < 3; ++i) m.params()[m.weight_offset(0) + i * 3 + i] = 1.0;
    const std::vector<double> x{0.4, -1.7, 2.5};
    CHECK(nn::forward(m, x) == x);
}

TEST_CASE("forward matches the dense oracle on random two-hidden-layer nets") {
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        const nn::Mlp m = nn::make_mlp({4, 16, 8, 3}, rng);
        const auto x = random_vec(4, rng, -2, 2);
        const auto got = nn::forward(m, x);
        const auto want = oracle_forward(m, x);
        for (int i = 0; i < 3; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-13));
    }
}

TEST_CASE("forward rejects mismatched input width") {
    Rng rng(1);
    const nn::Mlp m = nn::make_mlp({4, 8, 2}, rng);
    CHECK_THROWS_AS((void)nn::forward(m, std::vector<double>{1.0, 2.0}), ShapeError);
}

TEST_CASE("backward with a zero output gradient is zero") {
    Rng rng(2);
    const nn::Mlp m = nn::make_mlp({3, 8, 4}, rng);
    std::vector<double> grad(m.param_count(), 1.0);
    nn::backward(m, std::vector<double>{0.3, -0.2, 0.9}, std::vector<double>(4, 0.0), grad);
    for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("single linear layer: squared-error gradient is residual times input") {
    Rng rng(3);
    nn::Mlp m = nn::make_mlp({3, 1}, rng);
    const std::vector<double> x{0.5, -1.0, 2.0};
    const std::vector<double> target{0.7};
    const double pred = nn::forward(m, x)[0];
    const double residual = pred - target[0];

    std::vector<double> grad(m.param_count());
    nn::BatchWorkspace ws;
    const double loss = nn::mse_batch_gradient_serial(m, x, 1, target, grad, ws);
    CHECK(loss == doctest::Approx(residual * residual).epsilon(1e-12));
    for (int i = 0; i < 3; ++i)
        CHECK(grad[m.weight_offset(0) + i] == doctest::Approx(2.0 * residual * x[i]).epsilon(1e-12));
    CHECK(grad[m.bias_offset(0)] == doctest::Approx(2.0 * residual).epsilon(1e-12));
}

TEST_CASE("backprop agrees with central finite differences") {
    Rng rng(11);
    const std::vector<std::vector<int>> shapes = {{3, 8, 5}, {4, 16, 12}, {2, 6, 6, 3}};
    double worst = 0.0;
    for (const auto& shape : shapes) {
        nn::Mlp m = nn::make_mlp(shape, rng);
        const auto x = random_vec(shape.front(), rng);
        const auto dout = random_vec(shape.back(), rng);

        std::vector<double> grad(m.param_count());
        nn::backward(m, x, dout, grad);

        const double h = 1e-5;
        for (std::size_t p = 0; p < m.param_count(); ++p) {
            const double saved = m.params()[p];
            m.params()[p] = saved + h;
            const double up = dot(dout, nn::forward(m, x));
            m.params()[p] = saved - h;
            const double down = dot(dout, nn::forward(m, x));
            m.params()[p] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double rel =
                std::abs(grad[p] - fd) / std::max(1e-8, std::abs(grad[p]) + std::abs(fd));
            worst = std::max(worst, rel);
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("batch kernels: serial and parallel paths are bit-identical") {
    Rng rng(17);
    const nn::Mlp m = nn::make_mlp({4, 32, 32, 12}, rng);
    const int n = 64;
    std::vector<double> xs(n * 4);
    for (auto& v : xs) v = rng.uniform(-1.5, 1.5);

    nn::BatchWorkspace ws_a, ws_b;
    std::vector<double> out_s(n * 12), out_p(n * 12);
    nn::forward_batch_serial(m, xs, n, out_s, ws_a);
    nn::forward_batch(m, xs, n, out_p, ws_b);
    CHECK(out_s == out_p);

    // matches the single-sample path too
    for (int i = 0; i < n; ++i) {
        const auto y =
            nn::forward(m, std::span<const double>(xs.data() + i * 4, 4));
        for (int j = 0; j < 12; ++j) CHECK(y[j] == out_s[i * 12 + j]);
    }

    std::vector<int> actions(n);
    std::vector<double> targets(n);
    for (int i = 0; i < n; ++i) {
        actions[i] = rng.uniform_int(12);
        targets[i] = rng.uniform(-2, 2);
    }
    std::vector<double> grad_s(m.param_count()), grad_p(m.param_count());
    const double loss_s =
        nn::action_value_batch_gradient_serial(m, xs, n, actions, targets, grad_s, ws_a);
    const double loss_p = nn::action_value_batch_gradient(m, xs, n, actions, targets, grad_p, ws_b);
    CHECK(loss_s == loss_p);
    CHECK(grad_s == grad_p);

    std::vector<double> t2(n * 12);
    for (auto& v : t2) v = rng.uniform(-1, 1);
    std::vector<double> g2s(m.param_count()), g2p(m.param_count());
    const double l2s = nn::mse_batch_gradient_serial(m, xs, n, t2, g2s, ws_a);
    const double l2p = nn::mse_batch_gradient(m, xs, n, t2, g2p, ws_b);
    CHECK(l2s == l2p);
    CHECK(g2s == g2p);
}

TEST_CASE("action-value batch gradient equals a sum of single-sample gradients") {
    Rng rng(19);
    const nn::Mlp m = nn::make_mlp({3, 10, 6}, rng);
    const int n = 8;
    std::vector<double> xs(n * 3);
    for (auto& v : xs) v = rng.uniform(-1, 1);
    std::vector<int> actions(n);
    std::vector<double> targets(n);
    for (int i = 0; i < n; ++i) {
        actions[i] = rng.uniform_int(6);
        targets[i] = rng.uniform(-1, 1);
    }
    std::vector<double> grad(m.param_count());
    nn::BatchWorkspace ws;
    nn::action_value_batch_gradient_serial(m, xs, n, actions, targets, grad, ws);

    std::vector<double> manual(m.param_count(), 0.0), single(m.param_count());
    for (int i = 0; i < n; ++i) {
        const std::span<const double> x(xs.data() + i * 3, 3);
        const double q = nn::forward(m, x)[actions[i]];
        std::vector<double> dout(6, 0.0);
        dout[actions[i]] = 2.0 * (q - targets[i]) / n;
        nn::backward(m, x, dout, single);
        for (std::size_t p = 0; p < manual.size(); ++p) manual[p] += single[p];
    }
    for (std::size_t p = 0; p < manual.size(); ++p)
        CHECK(grad[p] == doctest::Approx(manual[p]).epsilon(1e-12));
}

TEST_CASE("adam leaves the model untouched for zero gradients or zero lr") {
    Rng rng(23);
    nn::Mlp m = nn::make_mlp({2, 4, 1}, rng);
    const std::vector<double> before = m.params();
    nn::AdamState opt;
    opt.reset(m.param_count());
    nn::adam_step(m, opt, std::vector<double>(m.param_count(), 0.0), 0.01);
    CHECK(m.params() == before);

    nn::adam_step(m, opt, random_vec(static_cast<int>(m.param_count()), rng), 0.0);
    CHECK(m.params() == before);

    nn::sgd_step(m, std::vector<double>(m.param_count(), 0.0), 0.5);
    CHECK(m.params() == before);
}

TEST_CASE("200 adam steps on a quadratic loss drive the loss down") {
    Rng rng(29);
    nn::Mlp m = nn::make_mlp({1, 1}, rng);
    nn::AdamState opt;
    opt.reset(m.param_count());
    nn::BatchWorkspace ws;
    const std::vector<double> x{1.0}, target{3.0};
    std::vector<double> grad(m.param_count());
    std::vector<double> losses;
    for (int i = 0; i < 200; ++i) {
        losses.push_back(nn::mse_batch_gradient_serial(m, x, 1, target, grad, ws));
        nn::adam_step(m, opt, grad, 0.05);
    }
    double first = 0, last = 0;
    for (int i = 0; i < 20; ++i) {
        first += losses[i];
        last += losses[180 + i];
    }
    CHECK(last / 20 < first / 20);
    CHECK(losses.back() < losses.front());
}

TEST_CASE("serialization round-trips bit-for-bit") {
    Rng rng(31);
    for (int rep = 0; rep < 10; ++rep) {
        const nn::Mlp m = nn::make_mlp({1 + rng.uniform_int(6), 1 + rng.uniform_int(32),
                                        1 + rng.uniform_int(16)},
                                       rng);
        const nn::Mlp back = nn::deserialize(nn::serialize(m));
        REQUIRE(back.sizes() == m.sizes());
        CHECK(back.params() == m.params());
        for (int i = 0; i < 100; ++i) {
            const auto x = random_vec(m.input_size(), rng, -3, 3);
            CHECK(nn::forward(m, x) == nn::forward(back, x));
        }
    }
}

TEST_CASE("deserialize rejects malformed blobs") {
    CHECK_THROWS_AS((void)nn::deserialize(""), ParseError);
    CHECK_THROWS_AS((void)nn::deserialize("not-a-model\n1 2\n"), ParseError);

    Rng rng(37);
    const nn::Mlp m = nn::make_mlp({2, 3, 1}, rng);
    std::string blob = nn::serialize(m);
    // tamper with the declared sizes so tensors no longer line up
    const auto first_nl = blob.find('\n');
    const auto second_nl = blob.find('\n', first_nl + 1);
    std::string bad = blob.substr(0, first_nl + 1) + "2 4 1" + blob.substr(second_nl);
    CHECK_THROWS_AS((void)nn::deserialize(bad), ParseError);

    try {
        (void)nn::deserialize("mlp-v1\n2 3 1\n1 2 3\n");
    } catch (const ParseError& e) {
        CHECK(e.line == 3);
    }
}

TEST_CASE("seeded init is deterministic and bounded by 1/sqrt(fan_in)") {
    Rng a(41), b(41);
    const nn::Mlp m1 = nn::make_mlp({9, 16, 4}, a);
    const nn::Mlp m2 = nn::make_mlp({9, 16, 4}, b);
    CHECK(m1.params() == m2.params());
    for (int k = 0; k < m1.layer_count(); ++k) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(m1.sizes()[k]));
        const std::size_t n_w = static_cast<std::size_t>(m1.sizes()[k + 1]) * m1.sizes()[k];
        for (std::size_t i = 0; i < n_w; ++i) {
            CHECK(m1.params()[m1.weight_offset(k) + i] >= -bound);
            CHECK(m1.params()[m1.weight_offset(k) + i] <= bound);
        }
    }
}

TEST_CASE("forward and batch kernels never mutate the model") {
    Rng rng(43);
    const nn::Mlp m = nn::make_mlp({3, 12, 5}, rng);
    const std::vector<double> snapshot = m.params();
    (void)nn::forward(m, std::vector<double>{0.1, 0.2, 0.3});
    nn::BatchWorkspace ws;
    std::vector<double> xs(6 * 3), outs(6 * 5), grad(m.param_count());
    for (auto& v : xs) v = rng.uniform(-1, 1);
    nn::forward_batch(m, xs, 6, outs, ws);
    std::vector<double> targets(6 * 5, 0.0);
    (void)nn::mse_batch_gradient(m, xs, 6, targets, grad, ws);
    CHECK(m.params() == snapshot);
}

TEST_CASE("kernel thread override") {
    const int saved = nn::kernel_threads();
    nn::set_kernel_threads(1);
    CHECK(nn::kernel_threads() == 1);
    nn::set_kernel_threads(saved);
}
