#pragma once

#include <string>
#include <vector>

#include "nvtherm/config.hpp"
#include "nvtherm/scene.hpp"

namespace nvtherm::runner {

// Subcommand names accepted by run().
const std::vector<std::string>& commands();

// Executes one subcommand against the scene, writing plot-ready CSV files
// plus a JSON manifest (command, version, seed, config hash, timestamp, file
// list) into out_dir. Returns the paths written, manifest last. Throws
// ConfigError for bad inputs and NumericError for solver/fit failures.
std::vector<std::string> run(const std::string& command, const config::Config& cfg,
                             const scene::Scene& sc, const std::string& out_dir);

}  // namespace nvtherm::runner
