#pragma once

#include <filesystem>
#include <string>

#include "liveval/bench.hpp"

namespace liveval {

// Implementations behind the CLI subcommands. Each uses the first
// configured seed except `report`, which runs every seed.
void command_corrupt(const ExperimentConfig &config, const std::filesystem::path &out);
void command_train_value(const ExperimentConfig &config, const std::filesystem::path &out);
void command_baseline(const ExperimentConfig &config, const std::string &method,
                      const std::filesystem::path &out);
void command_report(const ExperimentConfig &config, const std::filesystem::path &out);
void command_probe_volatility(const ExperimentConfig &config, const std::filesystem::path &out);

// Probe inputs derived from the config's volatility section.
struct VolatilitySetup {
  Dataset data;
  VolatilityConfig probe;
};
VolatilitySetup volatility_setup(const ExperimentConfig &config);

} // namespace liveval
