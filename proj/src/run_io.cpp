#include "costly_obs/run_io.hpp"

#include <fstream>

#include "costly_obs/csv.hpp"
#include "costly_obs/errors.hpp"

namespace costly_obs {

RunPaths RunPaths::in(const std::string& dir) {
    RunPaths p;
    p.dir = dir;
    p.manifest = dir + "/manifest.txt";
    p.stats = dir + "/stats.csv";
    p.transitions = dir + "/transitions.csv";
    p.qnet = dir + "/qnet.mlp";
    return p;
}

void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& entries) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest: " + path);
    for (const auto& [k, v] : entries) out << k << '=' << v << '\n';
}

std::map<std::string, std::string> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path);
    std::map<std::string, std::string> out;
    std::string line;
    long ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("manifest line lacks '='", ln);
        out[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return out;
}

const char* stats_header() {
    return "episode,steps,total_reward,reached_goal,epsilon,obs_none,obs_pos,obs_vel,obs_both";
}

void write_stats_csv(const std::string& path, std::span<const EpisodeStats> stats) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write stats: " + path);
    out << stats_header() << '\n';
    for (const auto& s : stats) {
        out << s.episode << ',' << s.steps << ',' << format_g9(s.total_reward) << ','
            << (s.reached_goal ? 1 : 0) << ',' << format_g9(s.epsilon) << ',' << s.obs_counts[0]
            << ',' << s.obs_counts[1] << ',' << s.obs_counts[2] << ',' << s.obs_counts[3] << '\n';
    }
}

std::vector<EpisodeStats> read_stats_csv(const std::string& path) {
    CsvReader reader(path);
    const int c_ep = reader.col("episode");
    const int c_steps = reader.col("steps");
    const int c_reward = reader.col("total_reward");
    const int c_goal = reader.col("reached_goal");
    const int c_eps = reader.col("epsilon");
    const int c_none = reader.col("obs_none");
    const int c_pos = reader.col("obs_pos");
    const int c_vel = reader.col("obs_vel");
    const int c_both = reader.col("obs_both");
    std::vector<EpisodeStats> out;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        const long ln = reader.line();
        EpisodeStats s;
        s.episode = static_cast<int>(parse_long(f[c_ep], ln, "episode"));
        s.steps = static_cast<int>(parse_long(f[c_steps], ln, "steps"));
        s.total_reward = parse_double(f[c_reward], ln, "total_reward");
        s.reached_goal = parse_long(f[c_goal], ln, "reached_goal") != 0;
        s.epsilon = parse_double(f[c_eps], ln, "epsilon");
        s.obs_counts[0] = static_cast<int>(parse_long(f[c_none], ln, "obs_none"));
        s.obs_counts[1] = static_cast<int>(parse_long(f[c_pos], ln, "obs_pos"));
        s.obs_counts[2] = static_cast<int>(parse_long(f[c_vel], ln, "obs_vel"));
        s.obs_counts[3] = static_cast<int>(parse_long(f[c_both], ln, "obs_both"));
        out.push_back(s);
    }
    return out;
}

}  // namespace costly_obs
