#include "costly_obs/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "costly_obs/csv.hpp"
#include "costly_obs/errors.hpp"

namespace costly_obs {

std::array<double, kDynInputWidth> raw_dynamics_input(double pos, double vel, Motion m) {
    std::array<double, kDynInputWidth> row{pos, vel, 0.0, 0.0, 0.0};
    row[2 + static_cast<int>(m)] = 1.0;
    return row;
}

void normalize_input(std::span<const double> raw, const std::array<double, kDynInputWidth>& mean,
                     const std::array<double, kDynInputWidth>& scale, std::span<double> out) {
    for (int i = 0; i < kDynInputWidth; ++i) out[i] = (raw[i] - mean[i]) / scale[i];
}

void denormalize_input(std::span<const double> norm,
                       const std::array<double, kDynInputWidth>& mean,
                       const std::array<double, kDynInputWidth>& scale, std::span<double> out) {
    for (int i = 0; i < kDynInputWidth; ++i) out[i] = norm[i] * scale[i] + mean[i];
}

namespace {

DynamicsDataset finalize_dataset(std::vector<double>&& raw_inputs, std::vector<double>&& targets,
                                 std::size_t rows) {
    if (rows == 0) throw DataError("dynamics dataset is empty");
    DynamicsDataset ds;
    ds.rows = rows;
    ds.targets = std::move(targets);

    // column means and standard deviations of the raw inputs
    std::array<double, kDynInputWidth> sum{}, sum_sq{};
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = raw_inputs.data() + r * kDynInputWidth;
        for (int c = 0; c < kDynInputWidth; ++c) {
            sum[c] += row[c];
            sum_sq[c] += row[c] * row[c];
        }
    }
    for (int c = 0; c < kDynInputWidth; ++c) {
        ds.mean[c] = sum[c] / static_cast<double>(rows);
        const double var =
            std::max(0.0, sum_sq[c] / static_cast<double>(rows) - ds.mean[c] * ds.mean[c]);
        const double sd = std::sqrt(var);
        ds.scale[c] = sd > 1e-12 ? sd : 1.0;  // constant column: leave values centered only
    }

    std::array<double, kDynOutputWidth> t_sum{}, t_sum_sq{};
    for (std::size_t r = 0; r < rows; ++r)
        for (int c = 0; c < kDynOutputWidth; ++c) {
            const double v = ds.targets[r * kDynOutputWidth + c];
            t_sum[c] += v;
            t_sum_sq[c] += v * v;
        }
    for (int c = 0; c < kDynOutputWidth; ++c) {
        ds.target_mean[c] = t_sum[c] / static_cast<double>(rows);
        const double var = std::max(
            0.0, t_sum_sq[c] / static_cast<double>(rows) - ds.target_mean[c] * ds.target_mean[c]);
        const double sd = std::sqrt(var);
        ds.target_scale[c] = sd > 1e-12 ? sd : 1.0;
    }

    ds.inputs.resize(raw_inputs.size());
    for (std::size_t r = 0; r < rows; ++r)
        normalize_input(std::span<const double>(raw_inputs.data() + r * kDynInputWidth,
                                                kDynInputWidth),
                        ds.mean, ds.scale,
                        std::span<double>(ds.inputs.data() + r * kDynInputWidth, kDynInputWidth));
    return ds;
}

void append_record(std::vector<double>& inputs, std::vector<double>& targets,
                   const TransitionRecord& rec) {
    const Motion m = decode_action(rec.action_index).motion;
    const auto row = raw_dynamics_input(rec.true_before.position, rec.true_before.velocity, m);
    inputs.insert(inputs.end(), row.begin(), row.end());
    targets.push_back(rec.true_after.position);
    targets.push_back(rec.true_after.velocity);
}

}  // namespace

DynamicsDataset build_dataset(std::span<const TransitionRecord> records) {
    std::vector<double> inputs, targets;
    inputs.reserve(records.size() * kDynInputWidth);
    targets.reserve(records.size() * kDynOutputWidth);
    for (const auto& rec : records) append_record(inputs, targets, rec);
    return finalize_dataset(std::move(inputs), std::move(targets), records.size());
}

DynamicsDataset build_dataset_from_log(const std::string& path) {
    std::vector<double> inputs, targets;
    std::size_t rows = 0;
    for_each_transition(path, [&](const TransitionRecord& rec) {
        append_record(inputs, targets, rec);
        ++rows;
    });
    return finalize_dataset(std::move(inputs), std::move(targets), rows);
}

std::pair<double, double> DynamicsModelHandle::predict_next(double pos, double vel,
                                                            Motion m) const {
    const auto raw = raw_dynamics_input(pos, vel, m);
    double in[kDynInputWidth];
    normalize_input(raw, mean, scale, std::span<double>(in, kDynInputWidth));
    double stack_act[512];
    std::vector<double> heap_act;
    double* act = stack_act;
    if (model.activation_size() > 512) {
        heap_act.resize(model.activation_size());
        act = heap_act.data();
    }
    nn::forward_raw(model, in, act);
    const double* out = act + model.activation_offset(model.layer_count());
    const double raw_p = out[0] * target_scale[0] + target_mean[0];
    const double raw_v = out[1] * target_scale[1] + target_mean[1];
    const double p = std::clamp(raw_p, mountain_car::kMinPosition, mountain_car::kMaxPosition);
    const double v = std::clamp(raw_v, -mountain_car::kMaxSpeed, mountain_car::kMaxSpeed);
    return {p, v};
}

DynamicsTrainResult train_dynamics(const DynamicsDataset& ds, const DynamicsTrainOptions& opt) {
    if (ds.rows < 2) throw DataError("dynamics training needs at least 2 rows");
    if (opt.epochs < 0) throw ConfigError("epochs must be >= 0");
    if (opt.batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (opt.lr < 0) throw ConfigError("learning rate must be non-negative");
    for (double s : ds.scale)
        if (!(s > 0.0) || !std::isfinite(s)) throw DataError("dataset input scale must be > 0");
    for (double s : ds.target_scale)
        if (!(s > 0.0) || !std::isfinite(s)) throw DataError("dataset target scale must be > 0");

    Rng rng(substream_seed(opt.seed, RngStream::Agent));
    Rng init_rng(substream_seed(opt.seed, RngStream::Init));

    // seeded shuffle, last tenth held out
    std::vector<std::size_t> order(ds.rows);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = ds.rows - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i + 1)));
        std::swap(order[i], order[j]);
    }
    const std::size_t val_count = std::max<std::size_t>(1, ds.rows / 10);
    const std::size_t train_count = ds.rows - val_count;
    if (train_count == 0) throw DataError("dynamics training split left no training rows");

    std::vector<int> sizes;
    sizes.push_back(kDynInputWidth);
    sizes.insert(sizes.end(), opt.hidden.begin(), opt.hidden.end());
    sizes.push_back(kDynOutputWidth);

    DynamicsModelHandle handle;
    handle.model = nn::make_mlp(sizes, init_rng);
    handle.mean = ds.mean;
    handle.scale = ds.scale;
    handle.target_mean = ds.target_mean;
    handle.target_scale = ds.target_scale;

    nn::AdamState adam;
    adam.reset(handle.model.param_count());
    nn::BatchWorkspace ws;

    std::vector<std::size_t> train_order(order.begin(), order.begin() + train_count);
    const int max_b = std::min<int>(opt.batch_size, static_cast<int>(train_count));
    std::vector<double> bx(static_cast<std::size_t>(max_b) * kDynInputWidth);
    std::vector<double> bt(static_cast<std::size_t>(max_b) * kDynOutputWidth);
    std::vector<double> grad(handle.model.param_count());

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        for (std::size_t i = train_count - 1; i > 0; --i) {
            const std::size_t j =
                static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i + 1)));
            std::swap(train_order[i], train_order[j]);
        }
        for (std::size_t start = 0; start < train_count; start += max_b) {
            const int b = static_cast<int>(std::min<std::size_t>(max_b, train_count - start));
            for (int i = 0; i < b; ++i) {
                const std::size_t r = train_order[start + i];
                std::memcpy(bx.data() + static_cast<std::size_t>(i) * kDynInputWidth,
                            ds.inputs.data() + r * kDynInputWidth,
                            sizeof(double) * kDynInputWidth);
                for (int c = 0; c < kDynOutputWidth; ++c)
                    bt[static_cast<std::size_t>(i) * kDynOutputWidth + c] =
                        (ds.targets[r * kDynOutputWidth + c] - ds.target_mean[c]) /
                        ds.target_scale[c];
            }
            nn::mse_batch_gradient(handle.model,
                                   std::span<const double>(bx.data(),
                                                           static_cast<std::size_t>(b) *
                                                               kDynInputWidth),
                                   b,
                                   std::span<const double>(bt.data(),
                                                           static_cast<std::size_t>(b) *
                                                               kDynOutputWidth),
                                   grad, ws);
            nn::adam_step(handle.model, adam, grad, opt.lr);
        }
    }

    // held-out evaluation: model RMSE vs carrying the current value forward
    DynamicsTrainReport report;
    report.train_rows = train_count;
    report.val_rows = val_count;
    double se_pos = 0, se_vel = 0, base_pos = 0, base_vel = 0;
    std::vector<double> act(handle.model.activation_size());
    std::array<double, kDynInputWidth> raw{};
    for (std::size_t k = train_count; k < ds.rows; ++k) {
        const std::size_t r = order[k];
        const double* in = ds.inputs.data() + r * kDynInputWidth;
        nn::forward_raw(handle.model, in, act.data());
        const double* out =
            act.data() + handle.model.activation_offset(handle.model.layer_count());
        const double pred_p = out[0] * ds.target_scale[0] + ds.target_mean[0];
        const double pred_v = out[1] * ds.target_scale[1] + ds.target_mean[1];
        const double tp = ds.targets[r * kDynOutputWidth];
        const double tv = ds.targets[r * kDynOutputWidth + 1];
        se_pos += (pred_p - tp) * (pred_p - tp);
        se_vel += (pred_v - tv) * (pred_v - tv);
        denormalize_input(std::span<const double>(in, kDynInputWidth), ds.mean, ds.scale, raw);
        base_pos += (raw[0] - tp) * (raw[0] - tp);
        base_vel += (raw[1] - tv) * (raw[1] - tv);
    }
    const double inv = 1.0 / static_cast<double>(val_count);
    report.rmse_pos = std::sqrt(se_pos * inv);
    report.rmse_vel = std::sqrt(se_vel * inv);
    report.baseline_rmse_pos = std::sqrt(base_pos * inv);
    report.baseline_rmse_vel = std::sqrt(base_vel * inv);
    return DynamicsTrainResult{std::move(handle), report};
}

void save_dynamics_model(const std::string& path, const DynamicsModelHandle& h) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write dynamics model: " + path);
    out << "dyn-v1";
    for (double m : h.mean) out << ' ' << format_g17(m);
    for (double s : h.scale) out << ' ' << format_g17(s);
    for (double m : h.target_mean) out << ' ' << format_g17(m);
    for (double s : h.target_scale) out << ' ' << format_g17(s);
    out << '\n' << nn::serialize(h.model);
}

DynamicsModelHandle load_dynamics_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dynamics model: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty dynamics model file", 1);
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag != "dyn-v1") throw ParseError("expected header 'dyn-v1'", 1);
    DynamicsModelHandle h;
    for (int i = 0; i < kDynInputWidth; ++i)
        if (!(ls >> h.mean[i])) throw ParseError("missing normalization mean", 1);
    for (int i = 0; i < kDynInputWidth; ++i)
        if (!(ls >> h.scale[i])) throw ParseError("missing normalization scale", 1);
    for (int i = 0; i < kDynOutputWidth; ++i)
        if (!(ls >> h.target_mean[i])) throw ParseError("missing target mean", 1);
    for (int i = 0; i < kDynOutputWidth; ++i)
        if (!(ls >> h.target_scale[i])) throw ParseError("missing target scale", 1);
    std::ostringstream rest;
    rest << in.rdbuf();
    h.model = nn::deserialize(rest.str());
    if (h.model.input_size() != kDynInputWidth || h.model.output_size() != kDynOutputWidth)
        throw ParseError("dynamics net must map 5 inputs to 2 outputs", 2);
    return h;
}

}  // namespace costly_obs
