#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "liveval/baselines.hpp"
#include "liveval/dataio.hpp"
#include "liveval/model.hpp"
#include "liveval/trainer.hpp"
#include "liveval/valuation.hpp"

namespace liveval {

inline constexpr const char *kVersion = "0.3.0";

struct DataSource {
  enum class Kind { blobs, csv, idx };
  Kind kind = Kind::blobs;
  BlobOptions blobs{250, 2, 10, 3.0, 1.0};
  std::string csv_path;
  CsvSchema csv_schema;
  std::string idx_images;
  std::string idx_labels;
  std::size_t heldout_size = 64; // clean samples for the IF test gradient
};

struct CorruptionConfig {
  CorruptionKind kind = CorruptionKind::label_flip;
  std::size_t count = 40;
  int source_class = 0;
  int target_class = 1;
  double sigma = 1.0;
};

struct VolatilitySettings {
  std::size_t seeds = 16;
  std::uint64_t first_seed = 1000;
  std::size_t samples = 100; // dataset rows used by the probe
  std::size_t batch_size = 20;
  Step total_steps = 60;
  LrSchedule lr{LrSchedule::Kind::constant, 0.1, 0.5, 20};
};

// Everything needed to reproduce a run; serialised into the run manifest.
struct ExperimentConfig {
  DataSource data;
  CorruptionConfig corruption;
  std::vector<std::size_t> hidden{16};
  LossKind loss = LossKind::cross_entropy;
  TrainConfig train;
  LiveValConfig valuation;
  std::string engine = "liveval"; // or "basic"
  std::vector<std::string> methods{"liveval", "gradnd"};
  std::size_t pool_size = 100;
  std::size_t loo_pool = 0; // 0: the whole pool
  LooOptions loo;
  IfOptions influence;
  GradNdOptions gradnd;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  VolatilitySettings volatility;
  std::string out_dir = "results";

  ModelSpec model_spec(std::size_t input_dim, std::size_t classes) const;
  void validate() const;
};

ExperimentConfig parse_experiment_config(const std::string &json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path &path);
// Canonical JSON with every field, defaults included.
std::string experiment_config_json(const ExperimentConfig &config);

// Per-seed data preparation shared by every CLI subcommand.
struct PreparedData {
  Dataset train;    // corrupted training set
  Dataset heldout;  // clean samples, never trained on
  std::vector<CorruptionEntry> corruption;
  std::vector<SampleId> pool;
  TrainConfig train_config;
};

PreparedData prepare_data(const ExperimentConfig &config, std::uint64_t seed);

// The pool, or a seeded subset of loo_pool ids when that is smaller.
std::vector<SampleId> loo_subset(const ExperimentConfig &config, std::span<const SampleId> pool,
                                 std::uint64_t seed);

struct DetectionReport {
  std::string method;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::size_t pool_size = 0;
  std::size_t detected = 0;
  double detection_rate = 0.0;
  bool degenerate = false; // k = 0
  std::vector<std::size_t> per_epoch_detected;
};

// k corrupted ids plus pool_size - k clean ids drawn uniformly; sorted.
std::vector<SampleId> build_pool(const Dataset &ds, std::size_t pool_size, RngState rng);

// Counts corrupted ids among the k lowest values in `pool`, ties broken by
// ascending id.
DetectionReport detection_metric(const std::map<SampleId, double> &values,
                                 const std::set<SampleId> &corrupted, std::size_t k,
                                 std::span<const SampleId> pool);

std::vector<std::size_t> early_detection_curve(std::span<const ValuationLedger> snapshots,
                                               const std::set<SampleId> &corrupted,
                                               std::size_t k, std::span<const SampleId> pool);

struct ResourceRecord {
  std::string method;
  std::uint64_t seed = 0;
  double wall_ms = 0.0;
  std::size_t peak_rss_bytes = 0;
};

struct FailureRecord {
  std::uint64_t seed = 0;
  std::string stage;
  std::string message;
};

struct MethodSummary {
  std::string method;
  std::size_t runs = 0;
  double mean_detected = 0.0;
  double std_detected = 0.0;
  double mean_wall_ms = 0.0;
  std::size_t peak_rss_bytes = 0;
};

struct EarlyCurve {
  std::uint64_t seed = 0;
  std::vector<std::size_t> detected; // index e - 1 for epoch e
  std::vector<bool> provisional;
};

struct ExperimentResult {
  std::vector<DetectionReport> reports; // seed-major, method order of config
  std::vector<ResourceRecord> resources;
  std::vector<EarlyCurve> early;
  // method -> seed -> values
  std::map<std::string, std::map<std::uint64_t, std::map<SampleId, double>>> values;
  std::vector<FailureRecord> failures;
  std::vector<MethodSummary> summary;
  std::string manifest_json;
};

ExperimentResult run_experiment(const ExperimentConfig &config);

std::vector<MethodSummary> summarize(const ExperimentConfig &config,
                                     const std::vector<DetectionReport> &reports,
                                     const std::vector<ResourceRecord> &resources);

// Writes detection.csv, resources.csv, values_<method>.csv,
// early_detection.csv, table_detection.csv, table_resources.csv and
// results.json into `dir`.
void export_results(const ExperimentResult &result, const std::filesystem::path &dir);
std::string results_json(const ExperimentResult &result);

} // namespace liveval
