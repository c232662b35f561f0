#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "costly_obs/rng.hpp"

namespace costly_obs::nn {

// Fully connected net, ReLU on hidden layers, identity output. Parameters are
// stored in one flat vector (per layer: weight matrix row-major, then bias) so
// the optimizer and the batch kernels can treat them as a single array.
class Mlp {
  public:
    Mlp() = default;
    explicit Mlp(std::vector<int> sizes);

    const std::vector<int>& sizes() const { return sizes_; }
    int input_size() const { return sizes_.front(); }
    int output_size() const { return sizes_.back(); }
    int layer_count() const { return static_cast<int>(sizes_.size()) - 1; }

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    std::size_t param_count() const { return params_.size(); }

    // Offset of layer k's weight matrix (rows = sizes[k+1], cols = sizes[k])
    // and bias vector within the flat parameter array.
    std::size_t weight_offset(int layer) const { return w_off_[layer]; }
    std::size_t bias_offset(int layer) const { return b_off_[layer]; }

    // Total activation slots needed for one forward pass (all layers).
    std::size_t activation_size() const { return act_total_; }
    std::size_t activation_offset(int layer) const { return act_off_[layer]; }

  private:
    std::vector<int> sizes_;
    std::vector<double> params_;
    std::vector<std::size_t> w_off_, b_off_, act_off_;
    std::size_t act_total_ = 0;
};

// Seeded init, weights and biases uniform in +-1/sqrt(fan_in).
Mlp make_mlp(const std::vector<int>& sizes, Rng& init_rng);

// Single-sample forward pass.
void forward(const Mlp& m, std::span<const double> input, std::vector<double>& output);
std::vector<double> forward(const Mlp& m, std::span<const double> input);

// Allocation-free forward: writes every layer's activations into caller
// scratch of activation_size(); the output starts at
// activation_offset(layer_count()).
void forward_raw(const Mlp& m, const double* input, double* activations);

// Exact reverse-mode gradients of dot(d_output, forward(m, input)) w.r.t. every
// parameter. grad must have param_count() entries; it is overwritten.
void backward(const Mlp& m, std::span<const double> input, std::span<const double> d_output,
              std::span<double> grad);

// ---- batch kernels -------------------------------------------------------
//
// Each kernel has an OpenMP-parallel entry point and a serial reference used
// by the tests and the benchmark. Per-sample contributions are accumulated in
// sample order in both paths, so results are bit-identical regardless of
// thread count.

// Scratch reused across calls to avoid reallocation in training loops.
struct BatchWorkspace {
    std::vector<double> act_slots;    // n * activation_size, forward activations
    std::vector<double> delta_slots;  // n * activation_size, reverse-mode deltas
    std::vector<double> loss_slots;   // n
    void resize(const Mlp& m, int n);
};

// Forward pass over n stacked inputs; outputs written row-major (n x out).
void forward_batch(const Mlp& m, std::span<const double> inputs, int n, std::span<double> outputs,
                   BatchWorkspace& ws);
void forward_batch_serial(const Mlp& m, std::span<const double> inputs, int n,
                          std::span<double> outputs, BatchWorkspace& ws);

// Mean squared error over the batch, summed over output components.
// Writes the gradient of that loss and returns the loss value.
double mse_batch_gradient(const Mlp& m, std::span<const double> inputs, int n,
                          std::span<const double> targets, std::span<double> grad,
                          BatchWorkspace& ws);
double mse_batch_gradient_serial(const Mlp& m, std::span<const double> inputs, int n,
                                 std::span<const double> targets, std::span<double> grad,
                                 BatchWorkspace& ws);

// Squared error on one selected output per sample (the taken action's value
// against its target), averaged over the batch.
double action_value_batch_gradient(const Mlp& m, std::span<const double> inputs, int n,
                                   std::span<const int> actions, std::span<const double> targets,
                                   std::span<double> grad, BatchWorkspace& ws);
double action_value_batch_gradient_serial(const Mlp& m, std::span<const double> inputs, int n,
                                          std::span<const int> actions,
                                          std::span<const double> targets, std::span<double> grad,
                                          BatchWorkspace& ws);

// Thread cap for the batch kernels (defaults to the OpenMP max). The sweep
// runner lowers this when it multiplexes whole runs across worker threads.
int kernel_threads();
void set_kernel_threads(int n);

// ---- optimizers ------------------------------------------------------------

enum class OptimizerKind { Adam, Sgd };

OptimizerKind parse_optimizer(const std::string& s);
const char* to_string(OptimizerKind k);

// Adaptive-moment state; accumulators mirror the flat parameter array.
struct AdamState {
    std::vector<double> m, v;
    long t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    void reset(std::size_t param_count);
};

void adam_step(Mlp& model, AdamState& state, std::span<const double> grad, double lr);
void sgd_step(Mlp& model, std::span<const double> grad, double lr);

// ---- serialization ---------------------------------------------------------
//
// Text format: line 1 "mlp-v1", line 2 space-separated layer sizes, then one
// line per parameter tensor (weights row-major, then bias, per layer) with
// 17-significant-digit values so the round-trip is bit-exact.

std::string serialize(const Mlp& m);
Mlp deserialize(const std::string& blob);
void save_mlp(const std::string& path, const Mlp& m);
Mlp load_mlp(const std::string& path);

}  // namespace costly_obs::nn
