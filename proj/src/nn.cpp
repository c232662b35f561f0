#include "costly_obs/nn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "costly_obs/csv.hpp"
#include "costly_obs/errors.hpp"

namespace costly_obs::nn {

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw ShapeError("mlp needs at least an input and an output layer");
    for (int s : sizes_)
        if (s <= 0) throw ShapeError("mlp layer sizes must be positive");
    std::size_t off = 0;
    for (std::size_t k = 0; k + 1 < sizes_.size(); ++k) {
        w_off_.push_back(off);
        off += static_cast<std::size_t>(sizes_[k + 1]) * sizes_[k];
        b_off_.push_back(off);
        off += static_cast<std::size_t>(sizes_[k + 1]);
    }
    params_.assign(off, 0.0);
    std::size_t act = 0;
    for (int s : sizes_) {
        act_off_.push_back(act);
        act += static_cast<std::size_t>(s);
    }
    act_total_ = act;
}

Mlp make_mlp(const std::vector<int>& sizes, Rng& init_rng) {
    Mlp m(sizes);
    for (int k = 0; k < m.layer_count(); ++k) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[k]));
        const std::size_t n_w = static_cast<std::size_t>(sizes[k + 1]) * sizes[k];
        double* w = m.params().data() + m.weight_offset(k);
        for (std::size_t i = 0; i < n_w; ++i) w[i] = init_rng.uniform(-bound, bound);
        double* b = m.params().data() + m.bias_offset(k);
        for (int i = 0; i < sizes[k + 1]; ++i) b[i] = init_rng.uniform(-bound, bound);
    }
    return m;
}

namespace {

// Forward pass writing every layer's post-activation into act (size = activation_size).
void forward_into(const Mlp& m, const double* x, double* act) {
    const double* params = m.params().data();
    const auto& sizes = m.sizes();
    std::memcpy(act, x, sizeof(double) * sizes[0]);
    const int L = m.layer_count();
    for (int k = 0; k < L; ++k) {
        const int ni = sizes[k], no = sizes[k + 1];
        const double* w = params + m.weight_offset(k);
        const double* b = params + m.bias_offset(k);
        const double* in = act + m.activation_offset(k);
        double* out = act + m.activation_offset(k + 1);
        const bool hidden = k != L - 1;
        for (int o = 0; o < no; ++o) {
            double s = b[o];
            const double* row = w + static_cast<std::size_t>(o) * ni;
#pragma omp simd reduction(+ : s)
            for (int i = 0; i < ni; ++i) s += row[i] * in[i];
            out[o] = hidden && s < 0.0 ? 0.0 : s;
        }
    }
}

// Reverse pass for one sample. act must hold the activations of forward_into.
// grad is overwritten with this sample's parameter gradients (every slot is
// assigned, no zeroing needed).
void backward_into(const Mlp& m, const double* act, const double* d_output, double* grad) {
    const double* params = m.params().data();
    const auto& sizes = m.sizes();
    const int L = m.layer_count();

    // two delta buffers wide enough for any layer
    int max_w = 0;
    for (int s : sizes) max_w = std::max(max_w, s);
    double delta_buf[2][1024];
    std::vector<double> heap_a, heap_b;
    double *delta, *delta_prev;
    if (max_w <= 1024) {
        delta = delta_buf[0];
        delta_prev = delta_buf[1];
    } else {
        heap_a.resize(max_w);
        heap_b.resize(max_w);
        delta = heap_a.data();
        delta_prev = heap_b.data();
    }
    std::memcpy(delta, d_output, sizeof(double) * sizes[L]);

    for (int k = L - 1; k >= 0; --k) {
        const int ni = sizes[k], no = sizes[k + 1];
        const double* in = act + m.activation_offset(k);
        double* gw = grad + m.weight_offset(k);
        double* gb = grad + m.bias_offset(k);
        const double* w = params + m.weight_offset(k);
        if (k > 0) std::memset(delta_prev, 0, sizeof(double) * ni);
        for (int o = 0; o < no; ++o) {
            const double d = delta[o];
            gb[o] = d;
            double* gw_row = gw + static_cast<std::size_t>(o) * ni;
            for (int i = 0; i < ni; ++i) gw_row[i] = d * in[i];
            if (k > 0) {
                const double* w_row = w + static_cast<std::size_t>(o) * ni;
                for (int i = 0; i < ni; ++i) delta_prev[i] += d * w_row[i];
            }
        }
        if (k > 0) {
            // ReLU derivative: post-activation > 0 iff pre-activation > 0
            for (int i = 0; i < ni; ++i)
                if (in[i] <= 0.0) delta_prev[i] = 0.0;
            std::swap(delta, delta_prev);
        }
    }
}

std::atomic<int> g_kernel_threads{0};

// Thread fan-out only pays off once the batch is big enough to amortize the
// fork/barrier cost; small batches run on the serial fast path.
constexpr int kParallelBatchThreshold = 192;

int effective_threads(int n_items) {
    if (n_items < kParallelBatchThreshold) return 1;
    int t = kernel_threads();
    return std::max(1, std::min(t, n_items));
}

}  // namespace

int kernel_threads() {
    int t = g_kernel_threads.load(std::memory_order_relaxed);
    if (t > 0) return t;
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void set_kernel_threads(int n) { g_kernel_threads.store(n, std::memory_order_relaxed); }

void forward_raw(const Mlp& m, const double* input, double* activations) {
    forward_into(m, input, activations);
}

void forward(const Mlp& m, std::span<const double> input, std::vector<double>& output) {
    if (static_cast<int>(input.size()) != m.input_size())
        throw ShapeError("forward: input width " + std::to_string(input.size()) + " != " +
                         std::to_string(m.input_size()));
    std::vector<double> act(m.activation_size());
    forward_into(m, input.data(), act.data());
    output.assign(act.begin() + m.activation_offset(m.layer_count()), act.end());
}

std::vector<double> forward(const Mlp& m, std::span<const double> input) {
    std::vector<double> out;
    forward(m, input, out);
    return out;
}

void backward(const Mlp& m, std::span<const double> input, std::span<const double> d_output,
              std::span<double> grad) {
    if (static_cast<int>(input.size()) != m.input_size())
        throw ShapeError("backward: bad input width");
    if (static_cast<int>(d_output.size()) != m.output_size())
        throw ShapeError("backward: bad output-gradient width");
    if (grad.size() != m.param_count()) throw ShapeError("backward: bad gradient size");
    std::vector<double> act(m.activation_size());
    forward_into(m, input.data(), act.data());
    backward_into(m, act.data(), d_output.data(), grad.data());
}

void BatchWorkspace::resize(const Mlp& m, int n) {
    act_slots.resize(static_cast<std::size_t>(n) * m.activation_size());
    delta_slots.resize(static_cast<std::size_t>(n) * m.activation_size());
    loss_slots.resize(n);
}

namespace {

void check_batch(const Mlp& m, std::span<const double> inputs, int n) {
    if (inputs.size() != static_cast<std::size_t>(n) * m.input_size())
        throw ShapeError("batch inputs size mismatch");
}

template <bool Parallel>
void forward_batch_impl(const Mlp& m, std::span<const double> inputs, int n,
                        std::span<double> outputs, BatchWorkspace& ws) {
    check_batch(m, inputs, n);
    if (outputs.size() != static_cast<std::size_t>(n) * m.output_size())
        throw ShapeError("batch outputs size mismatch");
    ws.resize(m, n);
    const int in_w = m.input_size(), out_w = m.output_size();
    const std::size_t act_sz = m.activation_size();
    const std::size_t out_off = m.activation_offset(m.layer_count());
#pragma omp parallel for schedule(static) num_threads(effective_threads(n)) if (Parallel && n > 1)
    for (int i = 0; i < n; ++i) {
        double* act = ws.act_slots.data() + static_cast<std::size_t>(i) * act_sz;
        forward_into(m, inputs.data() + static_cast<std::size_t>(i) * in_w, act);
        std::memcpy(outputs.data() + static_cast<std::size_t>(i) * out_w, act + out_off,
                    sizeof(double) * out_w);
    }
}

// Shared core for the two loss kernels. PerSample fills this sample's
// output-gradient (d loss / d output, already divided by n) and returns the
// sample's squared-error contribution. Weight gradients accumulate across the
// batch per output row in ascending sample order, so the result is
// bit-identical for any thread count.
template <bool Parallel, class PerSample>
double loss_batch_impl(const Mlp& m, std::span<const double> inputs, int n, std::span<double> grad,
                       BatchWorkspace& ws, PerSample&& per_sample) {
    check_batch(m, inputs, n);
    if (n <= 0) throw ShapeError("batch must be nonempty");
    if (grad.size() != m.param_count()) throw ShapeError("batch gradient size mismatch");
    ws.resize(m, n);
    const int in_w = m.input_size();
    const auto& sizes = m.sizes();
    const int L = m.layer_count();
    const std::size_t act_sz = m.activation_size();
    const std::size_t out_off = m.activation_offset(L);
    const double* params = m.params().data();
    const int threads = Parallel && n > 1 ? effective_threads(n) : 1;
#pragma omp parallel num_threads(threads) if (threads > 1)
    {
        // forward passes and per-sample output deltas
#pragma omp for schedule(static)
        for (int i = 0; i < n; ++i) {
            double* act = ws.act_slots.data() + static_cast<std::size_t>(i) * act_sz;
            forward_into(m, inputs.data() + static_cast<std::size_t>(i) * in_w, act);
            ws.loss_slots[i] = per_sample(i, act + out_off,
                                          ws.delta_slots.data() +
                                              static_cast<std::size_t>(i) * act_sz + out_off);
        }
        for (int k = L - 1; k >= 0; --k) {
            const int ni = sizes[k], no = sizes[k + 1];
            const std::size_t a_off = m.activation_offset(k);
            const std::size_t d_off = m.activation_offset(k + 1);
            // weight and bias gradients: each output row sums samples in order
#pragma omp for schedule(static) nowait
            for (int o = 0; o < no; ++o) {
                double* gw_row = grad.data() + m.weight_offset(k) + static_cast<std::size_t>(o) * ni;
                std::memset(gw_row, 0, sizeof(double) * ni);
                double gb = 0.0;
                for (int s = 0; s < n; ++s) {
                    const double d =
                        ws.delta_slots[static_cast<std::size_t>(s) * act_sz + d_off + o];
                    if (d == 0.0) continue;
                    const double* a = ws.act_slots.data() + static_cast<std::size_t>(s) * act_sz +
                                      a_off;
                    for (int i = 0; i < ni; ++i) gw_row[i] += d * a[i];
                    gb += d;
                }
                grad[m.bias_offset(k) + o] = gb;
            }
            // propagate deltas one layer down (not needed below layer 0)
            if (k > 0) {
#pragma omp for schedule(static)
                for (int s = 0; s < n; ++s) {
                    const double* d_up =
                        ws.delta_slots.data() + static_cast<std::size_t>(s) * act_sz + d_off;
                    double* d_low =
                        ws.delta_slots.data() + static_cast<std::size_t>(s) * act_sz + a_off;
                    const double* a = ws.act_slots.data() + static_cast<std::size_t>(s) * act_sz +
                                      a_off;
                    std::memset(d_low, 0, sizeof(double) * ni);
                    const double* w = params + m.weight_offset(k);
                    for (int o = 0; o < no; ++o) {
                        const double d = d_up[o];
                        if (d == 0.0) continue;
                        const double* w_row = w + static_cast<std::size_t>(o) * ni;
                        for (int i = 0; i < ni; ++i) d_low[i] += d * w_row[i];
                    }
                    for (int i = 0; i < ni; ++i)
                        if (a[i] <= 0.0) d_low[i] = 0.0;
                }
            } else {
#pragma omp barrier
            }
        }
    }
    double loss = 0.0;
    for (int i = 0; i < n; ++i) loss += ws.loss_slots[i];
    return loss / n;
}

}  // namespace

void forward_batch(const Mlp& m, std::span<const double> inputs, int n, std::span<double> outputs,
                   BatchWorkspace& ws) {
    forward_batch_impl<true>(m, inputs, n, outputs, ws);
}

void forward_batch_serial(const Mlp& m, std::span<const double> inputs, int n,
                          std::span<double> outputs, BatchWorkspace& ws) {
    forward_batch_impl<false>(m, inputs, n, outputs, ws);
}

namespace {

template <bool Parallel>
double mse_impl(const Mlp& m, std::span<const double> inputs, int n,
                std::span<const double> targets, std::span<double> grad, BatchWorkspace& ws) {
    const int out_w = m.output_size();
    if (targets.size() != static_cast<std::size_t>(n) * out_w)
        throw ShapeError("mse targets size mismatch");
    const double inv_n = 1.0 / n;
    return loss_batch_impl<Parallel>(m, inputs, n, grad, ws,
                                     [&](int i, const double* out, double* d) {
                                         const double* t =
                                             targets.data() + static_cast<std::size_t>(i) * out_w;
                                         double se = 0.0;
                                         for (int j = 0; j < out_w; ++j) {
                                             const double diff = out[j] - t[j];
                                             se += diff * diff;
                                             d[j] = 2.0 * diff * inv_n;
                                         }
                                         return se;
                                     });
}

template <bool Parallel>
double action_value_impl(const Mlp& m, std::span<const double> inputs, int n,
                         std::span<const int> actions, std::span<const double> targets,
                         std::span<double> grad, BatchWorkspace& ws) {
    const int out_w = m.output_size();
    if (actions.size() != static_cast<std::size_t>(n) || targets.size() != static_cast<std::size_t>(n))
        throw ShapeError("action/target size mismatch");
    for (int i = 0; i < n; ++i)
        if (actions[i] < 0 || actions[i] >= out_w) throw ShapeError("action index out of range");
    const double inv_n = 1.0 / n;
    return loss_batch_impl<Parallel>(m, inputs, n, grad, ws,
                                     [&](int i, const double* out, double* d) {
                                         std::memset(d, 0, sizeof(double) * out_w);
                                         const double diff = out[actions[i]] - targets[i];
                                         d[actions[i]] = 2.0 * diff * inv_n;
                                         return diff * diff;
                                     });
}

}  // namespace

double mse_batch_gradient(const Mlp& m, std::span<const double> inputs, int n,
                          std::span<const double> targets, std::span<double> grad,
                          BatchWorkspace& ws) {
    return mse_impl<true>(m, inputs, n, targets, grad, ws);
}

double mse_batch_gradient_serial(const Mlp& m, std::span<const double> inputs, int n,
                                 std::span<const double> targets, std::span<double> grad,
                                 BatchWorkspace& ws) {
    return mse_impl<false>(m, inputs, n, targets, grad, ws);
}

double action_value_batch_gradient(const Mlp& m, std::span<const double> inputs, int n,
                                   std::span<const int> actions, std::span<const double> targets,
                                   std::span<double> grad, BatchWorkspace& ws) {
    return action_value_impl<true>(m, inputs, n, actions, targets, grad, ws);
}

double action_value_batch_gradient_serial(const Mlp& m, std::span<const double> inputs, int n,
                                          std::span<const int> actions,
                                          std::span<const double> targets, std::span<double> grad,
                                          BatchWorkspace& ws) {
    return action_value_impl<false>(m, inputs, n, actions, targets, grad, ws);
}

OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "adam") return OptimizerKind::Adam;
    if (s == "sgd") return OptimizerKind::Sgd;
    throw ConfigError("unknown optimizer: " + s + " (expected adam or sgd)");
}

const char* to_string(OptimizerKind k) {
    return k == OptimizerKind::Adam ? "adam" : "sgd";
}

void AdamState::reset(std::size_t param_count) {
    m.assign(param_count, 0.0);
    v.assign(param_count, 0.0);
    t = 0;
}

void adam_step(Mlp& model, AdamState& state, std::span<const double> grad, double lr) {
    if (grad.size() != model.param_count()) throw ShapeError("adam: gradient size mismatch");
    if (state.m.size() != model.param_count()) state.reset(model.param_count());
    ++state.t;
    const double b1 = state.beta1, b2 = state.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    double* p = model.params().data();
    for (std::size_t i = 0; i < grad.size(); ++i) {
        const double g = grad[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        const double m_hat = state.m[i] / corr1;
        const double v_hat = state.v[i] / corr2;
        p[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
}

void sgd_step(Mlp& model, std::span<const double> grad, double lr) {
    if (grad.size() != model.param_count()) throw ShapeError("sgd: gradient size mismatch");
    double* p = model.params().data();
    for (std::size_t i = 0; i < grad.size(); ++i) p[i] -= lr * grad[i];
}

std::string serialize(const Mlp& m) {
    std::string out = "mlp-v1\n";
    for (std::size_t i = 0; i < m.sizes().size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(m.sizes()[i]);
    }
    out += '\n';
    const auto& sizes = m.sizes();
    for (int k = 0; k < m.layer_count(); ++k) {
        const std::size_t n_w = static_cast<std::size_t>(sizes[k + 1]) * sizes[k];
        const double* w = m.params().data() + m.weight_offset(k);
        for (std::size_t i = 0; i < n_w; ++i) {
            if (i) out += ' ';
            out += format_g17(w[i]);
        }
        out += '\n';
        const double* b = m.params().data() + m.bias_offset(k);
        for (int i = 0; i < sizes[k + 1]; ++i) {
            if (i) out += ' ';
            out += format_g17(b[i]);
        }
        out += '\n';
    }
    return out;
}

namespace {

std::vector<double> parse_value_line(std::istream& in, long& line_no, std::size_t expected,
                                     const char* what) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(std::string("missing ") + what, line_no + 1);
    ++line_no;
    std::vector<double> vals;
    vals.reserve(expected);
    std::size_t pos = 0;
    while (pos < line.size()) {
        while (pos < line.size() && line[pos] == ' ') ++pos;
        if (pos >= line.size()) break;
        std::size_t end = line.find(' ', pos);
        if (end == std::string::npos) end = line.size();
        vals.push_back(parse_double(std::string_view(line).substr(pos, end - pos), line_no, what));
        pos = end;
    }
    if (vals.size() != expected)
        throw ParseError(std::string(what) + ": expected " + std::to_string(expected) +
                             " values, got " + std::to_string(vals.size()),
                         line_no);
    return vals;
}

}  // namespace

Mlp deserialize(const std::string& blob) {
    std::istringstream in(blob);
    long line_no = 0;
    std::string line;
    if (!std::getline(in, line) || line != "mlp-v1")
        throw ParseError("expected header 'mlp-v1'", 1);
    line_no = 1;
    if (!std::getline(in, line)) throw ParseError("missing layer sizes", 2);
    ++line_no;
    std::vector<int> sizes;
    {
        std::istringstream ls(line);
        int v;
        while (ls >> v) sizes.push_back(v);
    }
    if (sizes.size() < 2) throw ParseError("need at least two layer sizes", 2);
    for (int s : sizes)
        if (s <= 0) throw ParseError("layer sizes must be positive", 2);
    Mlp m(sizes);
    for (int k = 0; k < m.layer_count(); ++k) {
        const std::size_t n_w = static_cast<std::size_t>(sizes[k + 1]) * sizes[k];
        auto w = parse_value_line(in, line_no, n_w, "weight tensor");
        std::memcpy(m.params().data() + m.weight_offset(k), w.data(), sizeof(double) * n_w);
        auto b = parse_value_line(in, line_no, sizes[k + 1], "bias tensor");
        std::memcpy(m.params().data() + m.bias_offset(k), b.data(),
                    sizeof(double) * sizes[k + 1]);
    }
    for (double v : m.params())
        if (!std::isfinite(v)) throw ParseError("non-finite parameter value", line_no);
    return m;
}

void save_mlp(const std::string& path, const Mlp& m) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write model file: " + path);
    out << serialize(m);
}

Mlp load_mlp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize(ss.str());
}

}  // namespace costly_obs::nn
