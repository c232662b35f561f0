#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "costly_obs/dynamics.hpp"
#include "costly_obs/run_io.hpp"

using namespace costly_obs;
namespace fs = std::filesystem;

namespace {

const std::string kBin = CLI_BIN_PATH;

int run_cmd(const std::string& args, const std::string& stdout_file = "") {
    std::string cmd = kBin + " " + args + " 2>/dev/null";
    if (!stdout_file.empty()) cmd += " > " + stdout_file;
    const int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("costly_obs_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string str() const { return path.string(); }
    static inline int counter = 0;
};

const std::string kTinyTrain =
    " --episodes 8 --step-cap 120 --batch-size 16 --replay-capacity 400 --hidden 8 --quiet";

}  // namespace

TEST_CASE("train writes manifest, stats, transition log and model") {
    TempDir tmp;
    const std::string run = tmp.str() + "/run";
    CHECK(run_cmd("train --variant locf-counters --seed 1 --out " + run + kTinyTrain) == 0);
    const RunPaths paths = RunPaths::in(run);
    CHECK(fs::exists(paths.manifest));
    CHECK(fs::exists(paths.stats));
    CHECK(fs::exists(paths.transitions));
    CHECK(fs::exists(paths.qnet));

    const auto manifest = read_manifest(paths.manifest);
    CHECK(manifest.at("variant") == "locf-counters");
    CHECK(manifest.at("seed") == "1");
    CHECK(manifest.at("episodes") == "8");
    CHECK(manifest.at("version") == kVersionTag);

    const auto stats = read_stats_csv(paths.stats);
    CHECK(stats.size() == 8);

    // the model file parses and has the counter-variant widths
    const nn::Mlp qnet = nn::load_mlp(paths.qnet);
    CHECK(qnet.input_size() == 4);
    CHECK(qnet.output_size() == 12);
}

TEST_CASE("dynamics variant without a model is a usage error") {
    TempDir tmp;
    CHECK(run_cmd("train --variant dynamics-counters --seed 1 --out " + tmp.str() + "/x" +
                  kTinyTrain) == 2);
}

TEST_CASE("unknown variant and unknown flags are usage errors") {
    TempDir tmp;
    CHECK(run_cmd("train --variant bogus --out " + tmp.str() + "/x" + kTinyTrain) == 2);
    CHECK(run_cmd("train --no-such-flag" + kTinyTrain) == 2);
}

TEST_CASE("identical flags and seed reproduce stats.csv byte for byte") {
    TempDir tmp;
    const std::string a = tmp.str() + "/a", b = tmp.str() + "/b";
    const std::string flags = "train --variant locf --seed 42" + kTinyTrain;
    REQUIRE(run_cmd(flags + " --out " + a) == 0);
    REQUIRE(run_cmd(flags + " --out " + b) == 0);
    const std::string sa = slurp(a + "/stats.csv");
    CHECK(!sa.empty());
    CHECK(sa == slurp(b + "/stats.csv"));
    CHECK(slurp(a + "/transitions.csv") == slurp(b + "/transitions.csv"));
    CHECK(slurp(a + "/qnet.mlp") == slurp(b + "/qnet.mlp"));
}

TEST_CASE("fit-dynamics trains, reports RMSE in the pinned format and round-trips") {
    TempDir tmp;
    const std::string run = tmp.str() + "/run";
    REQUIRE(run_cmd("train --variant locf-counters --seed 3 --out " + run + kTinyTrain) == 0);

    const std::string model = tmp.str() + "/dyn.model";
    const std::string out_file = tmp.str() + "/fit_out.txt";
    CHECK(run_cmd("fit-dynamics --log " + run + "/transitions.csv --out " + model +
                  " --epochs 3 --hidden 8", out_file) == 0);
    CHECK(fs::exists(model));
    const DynamicsModelHandle h = load_dynamics_model(model);
    CHECK(h.model.input_size() == 5);

    const std::string line = slurp(out_file);
    CHECK(line.find("rmse_pos=") == 0);
    CHECK(line.find(" rmse_vel=") != std::string::npos);
    CHECK(line.find(" baseline_pos=") != std::string::npos);
    CHECK(line.find(" baseline_vel=") != std::string::npos);

    // --epochs 0 still writes a (warned-about) model file
    const std::string model0 = tmp.str() + "/dyn0.model";
    CHECK(run_cmd("fit-dynamics --log " + run + "/transitions.csv --out " + model0 +
                  " --epochs 0 --hidden 8") == 0);
    CHECK(fs::exists(model0));

    CHECK(run_cmd("fit-dynamics --log /no/such/log.csv --out " + tmp.str() + "/x.model") == 2);
}

TEST_CASE("trained dynamics model feeds a dynamics-counters run") {
    TempDir tmp;
    const std::string run = tmp.str() + "/run";
    REQUIRE(run_cmd("train --variant locf-counters --seed 3 --out " + run + kTinyTrain) == 0);
    const std::string model = tmp.str() + "/dyn.model";
    REQUIRE(run_cmd("fit-dynamics --log " + run + "/transitions.csv --out " + model +
                    " --epochs 1 --hidden 8") == 0);
    const std::string dyn_run = tmp.str() + "/dyn_run";
    CHECK(run_cmd("train --variant dynamics-counters --dynamics-model " + model + " --seed 4 --out " +
                  dyn_run + kTinyTrain) == 0);
    CHECK(fs::exists(dyn_run + "/stats.csv"));
}

TEST_CASE("analyze emits four tables and three charts into the run directory") {
    TempDir tmp;
    const std::string run = tmp.str() + "/run";
    REQUIRE(run_cmd("train --variant locf-counters --seed 5 --out " + run + kTinyTrain) == 0);
    CHECK(run_cmd("analyze --run " + run) == 0);
    for (const char* f : {"curve.csv", "histogram.csv", "ratios.csv", "logit.csv", "curve.svg",
                          "histogram.svg", "ratios.svg"})
        CHECK(fs::exists(run + "/" + f));

    const std::string logit = slurp(run + "/logit.csv");
    CHECK(logit.find("fit,coef,estimate,std_err,z,p_value,converged,separation,n,sample") == 0);
    CHECK(logit.find("vel_obs,") != std::string::npos);
    CHECK(logit.find("pos_obs,") != std::string::npos);
    CHECK(logit.find("pooled-across-episodes") != std::string::npos);

    const std::string hist = slurp(run + "/histogram.csv");
    CHECK(hist.find("bracket_lo,bracket_hi") == 0);
}

TEST_CASE("analyze of a missing directory exits with the usage code") {
    CHECK(run_cmd("analyze --run /definitely/not/here") == 2);
    CHECK(run_cmd("analyze") == 2);
}

TEST_CASE("compare overlays runs labeled by variant and seed") {
    TempDir tmp;
    const std::string a = tmp.str() + "/a", b = tmp.str() + "/b", c = tmp.str() + "/c";
    REQUIRE(run_cmd("train --variant locf --seed 1 --out " + a + kTinyTrain) == 0);
    REQUIRE(run_cmd("train --variant locf-counters --seed 2 --out " + b + kTinyTrain) == 0);
    REQUIRE(run_cmd("train --variant locf-counters --seed 3 --out " + c + kTinyTrain) == 0);
    const std::string cmp_dir = tmp.str() + "/cmp";
    CHECK(run_cmd("analyze --compare " + a + " " + b + " " + c + " --out " + cmp_dir) == 0);
    CHECK(fs::exists(cmp_dir + "/compare.csv"));
    CHECK(fs::exists(cmp_dir + "/compare.svg"));
    const std::string header = slurp(cmp_dir + "/compare.csv");
    CHECK(header.find("episode,locf-s1,locf-counters-s2,locf-counters-s3") == 0);
}

TEST_CASE("sweep runs the grid and summarizes it; parallel equals serial") {
    TempDir tmp;
    const std::string serial_dir = tmp.str() + "/serial", parallel_dir = tmp.str() + "/parallel";
    const std::string grid = " --variants locf,locf-counters --obs-costs -8 --seeds 1,2" +
                             kTinyTrain;
    CHECK(run_cmd("sweep" + grid + " --out " + serial_dir) == 0);
    CHECK(fs::exists(serial_dir + "/sweep.csv"));
    int run_dirs = 0;
    for (const auto& e : fs::directory_iterator(serial_dir))
        if (e.is_directory()) ++run_dirs;
    CHECK(run_dirs == 4);
    const std::string summary = slurp(serial_dir + "/sweep.csv");
    CHECK(summary.find("variant,obs_cost,seed,mean_steps_last50,goal_rate_last50,ok") == 0);
    CHECK(std::count(summary.begin(), summary.end(), '\n') == 5);  // header + 4 rows

    CHECK(run_cmd("sweep" + grid + " --parallel 2 --out " + parallel_dir) == 0);
    for (const char* run : {"run-locf-c8-s1", "run-locf-c8-s2", "run-locf-counters-c8-s1",
                            "run-locf-counters-c8-s2"}) {
        const std::string rel = std::string("/") + run + "/stats.csv";
        CHECK(slurp(serial_dir + rel) == slurp(parallel_dir + rel));
    }
}

TEST_CASE("sweep rejects empty lists") {
    TempDir tmp;
    CHECK(run_cmd("sweep --variants '' --out " + tmp.str() + "/x" + kTinyTrain) == 2);
}

TEST_CASE("config file sets defaults, flags still win") {
    TempDir tmp;
    const std::string cfg = tmp.str() + "/run.cfg";
    {
        std::ofstream out(cfg);
        out << "episodes=3\nstep-cap=90\nvariant=locf\nquiet=true\n";
    }
    const std::string run = tmp.str() + "/run";
    CHECK(run_cmd("train --config " + cfg + " --seed 9 --batch-size 16 --hidden 8 --out " + run) ==
          0);
    CHECK(read_stats_csv(run + "/stats.csv").size() == 3);
    CHECK(read_manifest(run + "/manifest.txt").at("variant") == "locf");

    const std::string run2 = tmp.str() + "/run2";
    CHECK(run_cmd("train --config " + cfg + " --episodes 2 --seed 9 --batch-size 16 --hidden 8 --out " +
                  run2) == 0);
    CHECK(read_stats_csv(run2 + "/stats.csv").size() == 2);
}

TEST_CASE("make-paper runs the whole three-variant pipeline") {
    TempDir tmp;
    const std::string out = tmp.str() + "/paper";
    CHECK(run_cmd("make-paper --seed 6 --episodes 6 --step-cap 100 --batch-size 16 "
                  "--replay-capacity 400 --hidden 8 --dyn-epochs 1 --quiet --out " + out) == 0);
    for (const char* run : {"locf", "locf-counters", "dynamics-counters"}) {
        CHECK(fs::exists(out + "/" + run + "/stats.csv"));
        CHECK(fs::exists(out + "/" + run + "/curve.csv"));
        CHECK(fs::exists(out + "/" + run + "/histogram.svg"));
    }
    CHECK(fs::exists(out + "/dynamics.model"));
    CHECK(fs::exists(out + "/compare.csv"));
    CHECK(fs::exists(out + "/compare.svg"));
}

TEST_CASE("COSTLY_OBS_OUT provides the default output root") {
    TempDir tmp;
    const std::string root = tmp.str() + "/root";
    const std::string cmd = "COSTLY_OBS_OUT=" + root + " " + kBin + " train --variant locf --seed 2" +
                            kTinyTrain + " 2>/dev/null >/dev/null";
    const int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 0);
    CHECK(fs::exists(root + "/run-locf-c8-s2/stats.csv"));
}
