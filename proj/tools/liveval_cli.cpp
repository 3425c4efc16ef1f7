// Command-line front end over the C interface.
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "liveval.h"

namespace {

struct ConfigHandle {
  lv_config *ptr = nullptr;
  ~ConfigHandle() { lv_config_free(ptr); }
};

int report_failure(lv_status status) {
  std::cerr << "liveval: " << lv_last_error() << '\n';
  return lv_exit_code(status);
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Training-integrated data valuation with adaptive reference points"};
  app.set_version_flag("--version", std::string(lv_version()));
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string method;

  auto add_common = [&](CLI::App *sub) {
    sub->add_option("-c,--config", config_path, "JSON config file (defaults apply when omitted)");
    sub->add_option("--seed", seed, "Run a single seed instead of the configured list");
    sub->add_option("-o,--out", out_dir, "Output directory");
  };

  auto *corrupt = app.add_subcommand("corrupt", "Write the corrupted dataset and its manifest");
  add_common(corrupt);
  auto *train = app.add_subcommand("train-value", "Train and value every sample");
  add_common(train);
  auto *baseline = app.add_subcommand("baseline", "Run LOO, IF or GradNd on the pool");
  add_common(baseline);
  baseline->add_option("-m,--method", method, "loo | if | gradnd")
      ->required()
      ->check(CLI::IsMember({"loo", "if", "gradnd"}));
  auto *report = app.add_subcommand("report", "Run the detection experiment and export tables");
  add_common(report);
  auto *probe = app.add_subcommand("probe-volatility", "Multi-seed step-value volatility probe");
  add_common(probe);
  auto *defaults = app.add_subcommand("print-config", "Print the effective config as JSON");
  add_common(defaults);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  ConfigHandle config;
  lv_status st = config_path.empty() ? lv_config_default(&config.ptr)
                                     : lv_config_load(config_path.c_str(), &config.ptr);
  if (st != LV_OK)
    return report_failure(st);
  if (seed)
    lv_config_set_seed(config.ptr, *seed);
  if (!out_dir.empty())
    lv_config_set_out_dir(config.ptr, out_dir.c_str());

  if (defaults->parsed()) {
    std::cout << lv_config_json(config.ptr) << '\n';
    return 0;
  }

  if (corrupt->parsed())
    st = lv_run_corrupt(config.ptr, nullptr);
  else if (train->parsed())
    st = lv_run_train_value(config.ptr, nullptr);
  else if (baseline->parsed())
    st = lv_run_baseline(config.ptr, method.c_str(), nullptr);
  else if (report->parsed())
    st = lv_run_report(config.ptr, nullptr);
  else if (probe->parsed())
    st = lv_run_probe_volatility(config.ptr, nullptr);

  if (st != LV_OK)
    return report_failure(st);
  std::cout << "wrote " << lv_config_out_dir(config.ptr) << '\n';
  return 0;
}
