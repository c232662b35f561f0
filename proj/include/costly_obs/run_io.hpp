#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "costly_obs/agents.hpp"

namespace costly_obs {

inline constexpr const char* kVersionTag = "0.1.0";

// Canonical file layout inside one run directory.
struct RunPaths {
    std::string dir, manifest, stats, transitions, qnet;
    static RunPaths in(const std::string& dir);
};

// Flat key=value file, written once before training starts.
void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& entries);
std::map<std::string, std::string> read_manifest(const std::string& path);

const char* stats_header();
void write_stats_csv(const std::string& path, std::span<const EpisodeStats> stats);
std::vector<EpisodeStats> read_stats_csv(const std::string& path);

}  // namespace costly_obs
