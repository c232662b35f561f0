// Command-line front end: training runs, offline dynamics fitting, analysis
// outputs and multi-run sweeps. Exit codes: 0 success, 1 runtime failure,
// 2 usage error.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "costly_obs/agents.hpp"
#include "costly_obs/analysis.hpp"
#include "costly_obs/csv.hpp"
#include "costly_obs/dynamics.hpp"
#include "costly_obs/env.hpp"
#include "costly_obs/errors.hpp"
#include "costly_obs/run_io.hpp"
#include "costly_obs/svg.hpp"

namespace fs = std::filesystem;
using namespace costly_obs;

namespace {

struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Flat key=value defaults; keys are long option names without dashes.
// Values feed through CLI11's converters, and explicit flags always win.
void apply_config_file(CLI::App* cmd) {
    const CLI::Option* copt = cmd->get_option_no_throw("--config");
    if (!copt || copt->count() == 0) return;
    const std::string path = copt->as<std::string>();
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file: " + path);
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(line_no) + " lacks '=': " + line);
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        CLI::Option* opt = cmd->get_option_no_throw("--" + key);
        if (!opt) throw UsageError("unknown config key '" + key + "' in " + path);
        if (opt->count() > 0) continue;
        opt->add_result(value);
        opt->run_callback();
    }
}

std::string default_out_root() {
    if (const char* env = std::getenv("COSTLY_OBS_OUT"); env && *env) return env;
    return "runs";
}

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::vector<int> parse_int_list(const std::string& s, const char* what) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw UsageError(std::string("bad ") + what + " list entry: " + item);
        }
    }
    if (out.empty()) throw UsageError(std::string("empty ") + what + " list");
    return out;
}

std::vector<double> parse_double_list(const std::string& s, const char* what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw UsageError(std::string("bad ") + what + " list entry: " + item);
        }
    }
    if (out.empty()) throw UsageError(std::string("empty ") + what + " list");
    return out;
}

std::vector<std::string> parse_string_list(const std::string& s, const char* what) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    if (out.empty()) throw UsageError(std::string("empty ") + what + " list");
    return out;
}

// ---- shared training options ------------------------------------------------

struct TrainFlags {
    std::string variant = "locf-counters";
    double obs_cost = -8.0;
    std::string cost_mode = "per-variable";
    std::string reward_mode = "energy-shaped";
    bool full_obs = false;
    int episodes = 1000;
    int step_cap = 20000;
    double lr = 0.001;
    double epsilon_init = 1.0;
    double epsilon_decay = 0.995;
    double epsilon_min = 0.01;
    bool epsilon_per_step = false;
    double gamma = 0.95;
    int batch_size = 64;
    int replay_capacity = 50000;
    int target_sync = 1000;
    std::string hidden = "64,64";
    std::string optimizer = "adam";
    std::uint64_t seed = 1;
    std::string dynamics_model;
    bool quiet = false;
    std::string config_path;
};

void add_train_options(CLI::App* cmd, TrainFlags& f, bool with_variant_and_seed) {
    if (with_variant_and_seed) {
        cmd->add_option("--variant", f.variant,
                        "State construction: locf, locf-counters or dynamics-counters");
        cmd->add_option("--seed", f.seed, "Run seed; env/agent/init streams derive from it");
    }
    cmd->add_option("--obs-cost", f.obs_cost, "Reward added per observation (<= 0)");
    cmd->add_option("--cost-mode", f.cost_mode, "per-variable or flat");
    cmd->add_option("--reward-mode", f.reward_mode, "energy-shaped or step-penalty");
    cmd->add_flag("--full-obs", f.full_obs, "Observe everything every step at zero cost");
    cmd->add_option("--episodes", f.episodes, "Training episodes");
    cmd->add_option("--step-cap", f.step_cap, "Maximum steps per episode");
    cmd->add_option("--lr", f.lr, "Optimizer learning rate");
    cmd->add_option("--epsilon-init", f.epsilon_init, "Initial exploration rate");
    cmd->add_option("--epsilon-decay", f.epsilon_decay, "Multiplicative epsilon decay");
    cmd->add_option("--epsilon-min", f.epsilon_min, "Exploration floor");
    cmd->add_flag("--epsilon-per-step", f.epsilon_per_step,
                  "Decay epsilon every environment step instead of every episode");
    cmd->add_option("--gamma", f.gamma, "Discount factor");
    cmd->add_option("--batch-size", f.batch_size, "Replay batch size");
    cmd->add_option("--replay-capacity", f.replay_capacity, "Replay buffer capacity");
    cmd->add_option("--target-sync", f.target_sync, "Steps between target-network copies");
    cmd->add_option("--hidden", f.hidden, "Hidden layer sizes, comma separated");
    cmd->add_option("--optimizer", f.optimizer, "adam or sgd");
    cmd->add_option("--dynamics-model", f.dynamics_model,
                    "Trained dynamics model (required for dynamics-counters)");
    cmd->add_flag("--quiet", f.quiet, "Suppress progress lines");
    cmd->add_option("--config", f.config_path, "Flat key=value file overriding defaults");
}

EnvConfig env_config_from(const TrainFlags& f) {
    EnvConfig cfg;
    cfg.variant = parse_variant(f.variant);
    cfg.obs_cost = f.obs_cost;
    cfg.step_cap = f.step_cap;
    cfg.cost_mode = parse_cost_mode(f.cost_mode);
    cfg.reward_mode = parse_reward_mode(f.reward_mode);
    cfg.full_obs = f.full_obs;
    return cfg;
}

DqnConfig dqn_config_from(const TrainFlags& f) {
    DqnConfig cfg;
    cfg.episodes = f.episodes;
    cfg.step_cap = f.step_cap;
    cfg.lr = f.lr;
    cfg.epsilon_init = f.epsilon_init;
    cfg.epsilon_decay = f.epsilon_decay;
    cfg.epsilon_min = f.epsilon_min;
    cfg.gamma = f.gamma;
    cfg.batch_size = f.batch_size;
    cfg.replay_capacity = f.replay_capacity;
    cfg.target_sync_interval = f.target_sync;
    cfg.seed = f.seed;
    cfg.hidden = parse_int_list(f.hidden, "hidden sizes");
    cfg.epsilon_per_step = f.epsilon_per_step;
    cfg.optimizer = nn::parse_optimizer(f.optimizer);
    return cfg;
}

std::vector<std::pair<std::string, std::string>> manifest_entries(const TrainFlags& f,
                                                                  const std::string& out_dir) {
    return {
        {"version", kVersionTag},
        {"variant", f.variant},
        {"seed", std::to_string(f.seed)},
        {"obs_cost", format_g9(f.obs_cost)},
        {"cost_mode", f.cost_mode},
        {"reward_mode", f.reward_mode},
        {"full_obs", f.full_obs ? "1" : "0"},
        {"episodes", std::to_string(f.episodes)},
        {"step_cap", std::to_string(f.step_cap)},
        {"lr", format_g9(f.lr)},
        {"epsilon_init", format_g9(f.epsilon_init)},
        {"epsilon_decay", format_g9(f.epsilon_decay)},
        {"epsilon_min", format_g9(f.epsilon_min)},
        {"epsilon_per_step", f.epsilon_per_step ? "1" : "0"},
        {"gamma", format_g9(f.gamma)},
        {"batch_size", std::to_string(f.batch_size)},
        {"replay_capacity", std::to_string(f.replay_capacity)},
        {"target_sync_interval", std::to_string(f.target_sync)},
        {"hidden", f.hidden},
        {"optimizer", f.optimizer},
        {"dynamics_model", f.dynamics_model},
        {"out_dir", out_dir},
        {"started_at", timestamp_utc()},
    };
}

std::string unique_dir(const std::string& base) {
    if (!fs::exists(base)) return base;
    for (int i = 2; i < 10000; ++i) {
        const std::string candidate = base + "-" + std::to_string(i);
        if (!fs::exists(candidate)) return candidate;
    }
    throw DataError("cannot find a free run directory near " + base);
}

// Runs one training job into out_dir, writing all four artifacts.
RunPaths execute_train(const TrainFlags& f, const std::string& out_dir) {
    const EnvConfig env_cfg = env_config_from(f);
    const DqnConfig dqn_cfg = dqn_config_from(f);
    validate_dqn_config(dqn_cfg);
    validate_env_config(env_cfg);

    DynamicsModelHandle dyn;
    const DynamicsPredictor* imputer = nullptr;
    if (env_cfg.variant == Variant::DynamicsWithCounters) {
        if (f.dynamics_model.empty())
            throw ConfigError("--variant dynamics-counters requires --dynamics-model PATH");
        dyn = load_dynamics_model(f.dynamics_model);
        imputer = &dyn;
    }

    fs::create_directories(out_dir);
    const RunPaths paths = RunPaths::in(out_dir);
    write_manifest(paths.manifest, manifest_entries(f, out_dir));

    TransitionLog log(paths.transitions);
    const DqnTrainResult result = train_dqn(env_cfg, dqn_cfg, imputer, &log, !f.quiet);
    log.flush();
    write_stats_csv(paths.stats, result.stats);
    nn::save_mlp(paths.qnet, result.qnet);
    return paths;
}

int cmd_train(const TrainFlags& f, std::string out_dir) {
    if (f.variant == "dynamics-counters" && f.dynamics_model.empty())
        throw UsageError("--variant dynamics-counters requires --dynamics-model PATH");
    if (out_dir.empty())
        out_dir = unique_dir(default_out_root() + "/run-" + f.variant + "-c" +
                             format_g9(-f.obs_cost) + "-s" + std::to_string(f.seed));
    const RunPaths paths = execute_train(f, out_dir);
    std::cout << paths.dir << '\n';
    return 0;
}

// ---- fit-dynamics -------------------------------------------------------------

int cmd_fit_dynamics(const std::string& log_path, const std::string& out_path, int epochs,
                     double lr, int batch_size, std::uint64_t seed, const std::string& hidden) {
    if (!fs::exists(log_path)) throw UsageError("log file does not exist: " + log_path);
    DynamicsDataset ds = build_dataset_from_log(log_path);
    DynamicsTrainOptions opt;
    opt.epochs = epochs;
    opt.lr = lr;
    opt.batch_size = batch_size;
    opt.seed = seed;
    opt.hidden = parse_int_list(hidden, "hidden sizes");
    const DynamicsTrainResult result = train_dynamics(ds, opt);
    if (epochs == 0)
        std::cerr << "warning: --epochs 0 saves an untrained model\n";
    save_dynamics_model(out_path, result.handle);
    std::cout << "rmse_pos=" << format_g9(result.report.rmse_pos)
              << " rmse_vel=" << format_g9(result.report.rmse_vel)
              << " baseline_pos=" << format_g9(result.report.baseline_rmse_pos)
              << " baseline_vel=" << format_g9(result.report.baseline_rmse_vel) << '\n';
    return 0;
}

// ---- analyze --------------------------------------------------------------------

struct RunCurve {
    std::string label;
    std::vector<CurvePoint> points;
};

RunCurve load_run_curve(const std::string& dir, int window) {
    const RunPaths paths = RunPaths::in(dir);
    if (!fs::exists(paths.stats)) throw UsageError("missing file: " + paths.stats);
    const auto stats = read_stats_csv(paths.stats);
    std::string label = fs::path(dir).filename().string();
    if (fs::exists(paths.manifest)) {
        const auto manifest = read_manifest(paths.manifest);
        if (auto it = manifest.find("variant"); it != manifest.end()) {
            label = it->second;
            if (auto s = manifest.find("seed"); s != manifest.end()) label += "-s" + s->second;
        }
    }
    return RunCurve{label, learning_curve(stats, window)};
}

void analyze_single_run(const std::string& dir, bool data_range, int window) {
    if (!fs::is_directory(dir)) throw UsageError("run directory does not exist: " + dir);
    const RunPaths paths = RunPaths::in(dir);
    if (!fs::exists(paths.stats)) throw UsageError("missing file: " + paths.stats);
    if (!fs::exists(paths.transitions)) throw UsageError("missing file: " + paths.transitions);

    const auto stats = read_stats_csv(paths.stats);
    const auto curve = learning_curve(stats, window);
    write_curve_csv(dir + "/curve.csv", curve);
    {
        svg::Series raw{"steps", {}, {}}, smooth{"smoothed", {}, {}};
        for (const auto& p : curve) {
            raw.xs.push_back(p.episode);
            raw.ys.push_back(p.steps);
            smooth.xs.push_back(p.episode);
            smooth.ys.push_back(p.smoothed);
        }
        svg::write_line_chart(dir + "/curve.svg", "Steps per episode", "episode", "steps",
                              {raw, smooth});
    }

    const HistogramTable hist = build_histogram_from_log(paths.transitions, data_range);
    write_histogram_csv(dir + "/histogram.csv", hist);
    {
        std::vector<std::string> cats;
        svg::BarSeries pos{"position obs %", {}}, vel{"velocity obs %", {}};
        for (const auto& b : hist.brackets) {
            cats.push_back("[" + format_g9(b.lo) + "," + format_g9(b.hi) + "]");
            pos.values.push_back(b.pos_pct);
            vel.values.push_back(b.vel_pct);
        }
        svg::write_bar_chart(dir + "/histogram.svg", "Observation rate by car position",
                             "position bracket", "% of actions", cats, {pos, vel});
    }

    const auto ratios = build_ratio_series_from_log(paths.transitions);
    write_ratios_csv(dir + "/ratios.csv", ratios);
    {
        svg::Series pos{"position obs", {}, {}}, vel{"velocity obs", {}, {}},
            none{"no obs", {}, {}};
        for (const auto& r : ratios) {
            pos.xs.push_back(r.episode);
            pos.ys.push_back(r.pos_obs);
            vel.xs.push_back(r.episode);
            vel.ys.push_back(r.vel_obs);
            none.xs.push_back(r.episode);
            none.ys.push_back(r.none);
        }
        svg::write_line_chart(dir + "/ratios.svg", "Observation ratios per episode", "episode",
                              "ratio of actions", {pos, vel, none});
    }

    // pooled regression of observation indicators on the car position
    std::vector<double> x;
    std::vector<std::uint8_t> y_vel, y_pos;
    for_each_transition(paths.transitions, [&](const TransitionRecord& r) {
        const ObsChoice obs = decode_action(r.action_index).obs;
        x.push_back(r.true_before.position);
        y_vel.push_back(observes_velocity(obs) ? 1 : 0);
        y_pos.push_back(observes_position(obs) ? 1 : 0);
    });
    auto fit_or_degenerate = [&](const std::vector<std::uint8_t>& y) {
        try {
            return logistic_fit(x, y);
        } catch (const DataError& e) {
            std::cerr << "note: " << e.what() << "\n";
            LogisticFit f;
            f.n = static_cast<long>(y.size());
            f.intercept.p = f.slope.p = std::numeric_limits<double>::quiet_NaN();
            return f;
        }
    };
    const LogisticFit vel_fit = fit_or_degenerate(y_vel);
    const LogisticFit pos_fit = fit_or_degenerate(y_pos);
    write_logit_csv(dir + "/logit.csv", vel_fit, pos_fit, "pooled-across-episodes");
}

void write_compare(const std::vector<RunCurve>& curves, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::size_t max_len = 0;
    for (const auto& c : curves) max_len = std::max(max_len, c.points.size());
    std::ofstream out(out_dir + "/compare.csv");
    if (!out) throw DataError("cannot write compare.csv");
    out << "episode";
    for (const auto& c : curves) out << ',' << c.label;
    out << '\n';
    for (std::size_t i = 0; i < max_len; ++i) {
        out << i;
        for (const auto& c : curves) {
            out << ',';
            if (i < c.points.size()) out << format_g9(c.points[i].smoothed);
        }
        out << '\n';
    }
    std::vector<svg::Series> series;
    for (const auto& c : curves) {
        svg::Series s{c.label, {}, {}};
        for (const auto& p : c.points) {
            s.xs.push_back(p.episode);
            s.ys.push_back(p.smoothed);
        }
        series.push_back(std::move(s));
    }
    svg::write_line_chart(out_dir + "/compare.svg", "Smoothed steps per episode", "episode",
                          "steps (rolling mean)", series);
}

int cmd_analyze(const std::string& run_dir, const std::vector<std::string>& compare_dirs,
                const std::string& out_dir, bool data_range, int window) {
    if (run_dir.empty() && compare_dirs.empty())
        throw UsageError("analyze needs --run DIR and/or --compare DIR...");
    if (!run_dir.empty()) analyze_single_run(run_dir, data_range, window);
    if (!compare_dirs.empty()) {
        std::vector<RunCurve> curves;
        for (const auto& d : compare_dirs) {
            if (!fs::is_directory(d)) throw UsageError("run directory does not exist: " + d);
            curves.push_back(load_run_curve(d, window));
        }
        write_compare(curves, out_dir.empty() ? std::string(".") : out_dir);
    }
    return 0;
}

// ---- sweep -----------------------------------------------------------------------

struct SweepJob {
    TrainFlags flags;
    std::string dir;
    bool ok = false;
    double mean_steps_last50 = 0.0;
    double goal_rate_last50 = 0.0;
    std::string error;
};

void run_sweep_job(SweepJob& job) {
    try {
        execute_train(job.flags, job.dir);
        const auto stats = read_stats_csv(RunPaths::in(job.dir).stats);
        const std::size_t window = std::min<std::size_t>(50, stats.size());
        double steps = 0.0;
        long goals = 0;
        for (std::size_t i = stats.size() - window; i < stats.size(); ++i) {
            steps += stats[i].steps;
            goals += stats[i].reached_goal ? 1 : 0;
        }
        job.mean_steps_last50 = steps / static_cast<double>(window);
        job.goal_rate_last50 = static_cast<double>(goals) / static_cast<double>(window);
        job.ok = true;
    } catch (const std::exception& e) {
        job.ok = false;
        job.error = e.what();
    }
}

int cmd_sweep(const TrainFlags& base, const std::string& variants_csv,
              const std::string& costs_csv, const std::string& seeds_csv, int parallel,
              std::string out_dir) {
    const auto variants = parse_string_list(variants_csv, "variant");
    const auto costs = parse_double_list(costs_csv, "obs-cost");
    const auto seeds = parse_int_list(seeds_csv, "seed");
    for (const auto& v : variants) parse_variant(v);  // validate early
    if (parallel <= 0) throw UsageError("--parallel must be positive");
    for (const auto& v : variants)
        if (v == "dynamics-counters" && base.dynamics_model.empty())
            throw UsageError("sweep over dynamics-counters requires --dynamics-model PATH");

    if (out_dir.empty()) out_dir = unique_dir(default_out_root() + "/sweep");
    fs::create_directories(out_dir);

    std::vector<SweepJob> jobs;
    for (const auto& v : variants)
        for (double c : costs)
            for (int s : seeds) {
                SweepJob job;
                job.flags = base;
                job.flags.variant = v;
                job.flags.obs_cost = c;
                job.flags.seed = static_cast<std::uint64_t>(s);
                job.flags.quiet = true;
                job.dir = out_dir + "/run-" + v + "-c" + format_g9(-c) + "-s" + std::to_string(s);
                jobs.push_back(std::move(job));
            }

    if (parallel == 1) {
        for (auto& job : jobs) run_sweep_job(job);
    } else {
        const int saved = nn::kernel_threads();
        nn::set_kernel_threads(std::max(1, saved / parallel));
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        const int worker_count = std::min<int>(parallel, static_cast<int>(jobs.size()));
        for (int w = 0; w < worker_count; ++w)
            workers.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= jobs.size()) return;
                    run_sweep_job(jobs[i]);
                }
            });
        for (auto& t : workers) t.join();
        nn::set_kernel_threads(saved);
    }

    std::ofstream summary(out_dir + "/sweep.csv");
    if (!summary) throw DataError("cannot write sweep.csv");
    summary << "variant,obs_cost,seed,mean_steps_last50,goal_rate_last50,ok\n";
    int failures = 0;
    for (const auto& job : jobs) {
        summary << job.flags.variant << ',' << format_g9(job.flags.obs_cost) << ','
                << job.flags.seed << ',';
        if (job.ok)
            summary << format_g9(job.mean_steps_last50) << ',' << format_g9(job.goal_rate_last50);
        else
            summary << "nan,nan";
        summary << ',' << (job.ok ? 1 : 0) << '\n';
        if (!job.ok) {
            ++failures;
            std::cerr << "sweep job failed (" << job.dir << "): " << job.error << '\n';
        }
    }
    std::cout << out_dir << '\n';
    return failures == static_cast<int>(jobs.size()) && !jobs.empty() ? 1 : 0;
}

// ---- make-paper --------------------------------------------------------------------

int cmd_make_paper(TrainFlags base, std::string out_dir, int dyn_epochs) {
    if (out_dir.empty()) out_dir = unique_dir(default_out_root() + "/paper");
    fs::create_directories(out_dir);

    TrainFlags locf = base;
    locf.variant = "locf";
    TrainFlags counters = base;
    counters.variant = "locf-counters";

    std::cerr << "[1/5] training locf\n";
    const RunPaths locf_paths = execute_train(locf, out_dir + "/locf");
    std::cerr << "[2/5] training locf-counters\n";
    const RunPaths counters_paths = execute_train(counters, out_dir + "/locf-counters");

    std::cerr << "[3/5] fitting dynamics model on the locf-counters log\n";
    const std::string model_path = out_dir + "/dynamics.model";
    cmd_fit_dynamics(counters_paths.transitions, model_path, dyn_epochs, 0.001, 64, base.seed,
                     base.hidden);

    std::cerr << "[4/5] training dynamics-counters\n";
    TrainFlags dynamics = base;
    dynamics.variant = "dynamics-counters";
    dynamics.dynamics_model = model_path;
    const RunPaths dyn_paths = execute_train(dynamics, out_dir + "/dynamics-counters");

    std::cerr << "[5/5] analysis\n";
    for (const auto& p : {locf_paths, counters_paths, dyn_paths})
        analyze_single_run(p.dir, false, 25);
    std::vector<RunCurve> curves = {load_run_curve(locf_paths.dir, 25),
                                    load_run_curve(counters_paths.dir, 25),
                                    load_run_curve(dyn_paths.dir, 25)};
    write_compare(curves, out_dir);
    std::cout << out_dir << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mountain Car with observation costs: training, dynamics fitting and analysis"};
    app.require_subcommand(1);

    TrainFlags train_flags;
    std::string train_out;
    auto* train = app.add_subcommand("train", "Train one agent and write a run directory");
    add_train_options(train, train_flags, true);
    train->add_option("--out", train_out, "Run directory (default: under the output root)");

    std::string fit_log, fit_out, fit_hidden = "64,64", fit_config;
    int fit_epochs = 50, fit_batch = 64;
    double fit_lr = 0.001;
    std::uint64_t fit_seed = 1;
    auto* fit = app.add_subcommand("fit-dynamics", "Fit a forward model from a transition log");
    fit->add_option("--log", fit_log, "Transition log CSV")->required();
    fit->add_option("--out", fit_out, "Output model path")->required();
    fit->add_option("--epochs", fit_epochs, "Training epochs");
    fit->add_option("--lr", fit_lr, "Learning rate");
    fit->add_option("--batch-size", fit_batch, "Batch size");
    fit->add_option("--seed", fit_seed, "Shuffle/init seed");
    fit->add_option("--hidden", fit_hidden, "Hidden layer sizes");
    fit->add_option("--config", fit_config, "Flat key=value file overriding defaults");

    std::string an_run, an_out;
    std::vector<std::string> an_compare;
    bool an_data_range = false;
    int an_window = 25;
    auto* analyze = app.add_subcommand("analyze", "Emit CSV tables and SVG charts for runs");
    analyze->add_option("--run", an_run, "Run directory to analyze in place");
    analyze->add_option("--compare", an_compare, "Run directories to overlay")->expected(-1);
    analyze->add_option("--out", an_out, "Directory for compare outputs (default .)");
    analyze->add_flag("--data-range", an_data_range,
                      "Histogram brackets over the visited position range");
    analyze->add_option("--window", an_window, "Rolling-mean window");

    TrainFlags sweep_flags;
    std::string sweep_variants = "locf,locf-counters", sweep_costs = "-8", sweep_seeds = "1",
                sweep_out;
    int sweep_parallel = 1;
    auto* sweep = app.add_subcommand("sweep", "Run a variant x cost x seed grid");
    add_train_options(sweep, sweep_flags, false);
    sweep->add_option("--variants", sweep_variants, "Comma-separated variant list");
    sweep->add_option("--obs-costs", sweep_costs, "Comma-separated observation costs");
    sweep->add_option("--seeds", sweep_seeds, "Comma-separated seeds");
    sweep->add_option("--parallel", sweep_parallel, "Independent worker threads");
    sweep->add_option("--out", sweep_out, "Sweep directory");

    TrainFlags paper_flags;
    std::string paper_out;
    int paper_dyn_epochs = 50;
    auto* paper = app.add_subcommand(
        "make-paper", "Train all three variants, fit the dynamics model, analyze and compare");
    add_train_options(paper, paper_flags, true);
    paper->add_option("--out", paper_out, "Pipeline output directory");
    paper->add_option("--dyn-epochs", paper_dyn_epochs, "Dynamics-model training epochs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp")
            return app.exit(e);
        app.exit(e);
        return 2;
    }

    try {
        for (CLI::App* sub : {train, fit, sweep, paper})
            if (sub->parsed()) apply_config_file(sub);
        if (train->parsed()) return cmd_train(train_flags, train_out);
        if (fit->parsed())
            return cmd_fit_dynamics(fit_log, fit_out, fit_epochs, fit_lr, fit_batch, fit_seed,
                                    fit_hidden);
        if (analyze->parsed())
            return cmd_analyze(an_run, an_compare, an_out, an_data_range, an_window);
        if (sweep->parsed())
            return cmd_sweep(sweep_flags, sweep_variants, sweep_costs, sweep_seeds,
                             sweep_parallel, sweep_out);
        if (paper->parsed()) return cmd_make_paper(paper_flags, paper_out, paper_dyn_epochs);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\nRun with --help for usage.\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\nRun with --help for usage.\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
