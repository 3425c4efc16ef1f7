#include "liveval/commands.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "liveval/error.hpp"
#include "liveval/resources.hpp"
#include "format.hpp"

namespace liveval {

using nlohmann::ordered_json;

namespace {

void ensure_dir(const std::filesystem::path &dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    fail(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const std::filesystem::path &p, const std::string &text) {
  std::ofstream out(p);
  if (!out)
    fail(ErrorKind::io, "cannot write " + p.string());
  out << text;
  if (!text.empty() && text.back() != '\n')
    out << '\n';
  if (!out)
    fail(ErrorKind::io, "write failed: " + p.string());
}

ordered_json valuation_manifest(const ExperimentConfig &config, std::uint64_t seed,
                                const PreparedData &data) {
  ordered_json j;
  j["version"] = kVersion;
  j["seed"] = seed;
  j["dataset_digest"] = data.train.digest();
  j["config"] = ordered_json::parse(experiment_config_json(config));
  const auto &w = config.valuation.window;
  j["window"] = {{"delta0", w.delta0},       {"delta_min", w.delta_min},
                 {"delta_max", w.delta_max}, {"delta_step", w.delta_step},
                 {"eps_min", w.eps_min},     {"eps_max", w.eps_max}};
  j["denominator"] = to_string(config.valuation.denominator);
  j["loss_rate"] = to_string(config.valuation.loss_rate);
  j["engine"] = config.engine;
  j["batch_sampling"] = to_string(data.train_config.shuffle);
  return j;
}

} // namespace

void command_corrupt(const ExperimentConfig &config, const std::filesystem::path &out) {
  ensure_dir(out);
  const auto seed = config.seeds.front();
  const PreparedData data = prepare_data(config, seed);
  save_csv(data.train, out / "dataset.csv");
  save_csv(data.heldout, out / "heldout.csv");
  write_text(out / "corruption_manifest.json", corruption_manifest_json(data.corruption));
  ordered_json pool;
  pool["seed"] = seed;
  pool["pool"] = data.pool;
  write_text(out / "pool.json", pool.dump(2));
}

void command_train_value(const ExperimentConfig &config, const std::filesystem::path &out) {
  ensure_dir(out);
  const auto seed = config.seeds.front();
  const PreparedData data = prepare_data(config, seed);
  const Model model(config.model_spec(data.train.dim(), data.train.num_classes));
  ordered_json manifest = valuation_manifest(config, seed, data);
  Stopwatch clock;
  ValuationLedger ledger;
  if (config.engine == "basic") {
    const TrajectoryStore store = run_training(data.train, model, data.train_config);
    save_checkpoints(store, model.spec(), out / "checkpoints");
    ledger = basic_valuate(store, data.train, model, config.valuation.denominator);
  } else {
    LiveValConfig vc = config.valuation;
    vc.total_steps = data.train_config.total_steps;
    LiveValEngine engine(data.train, model, vc);
    TrainingHook *hooks[] = {&engine};
    TrainOptions opts;
    opts.keep_records = false;
    const TrajectoryStore store = run_training(data.train, model, data.train_config, hooks, opts);
    ledger = engine.ledger();
    manifest["queue"] = {{"max_model_queue", engine.queue_stats().max_model},
                         {"max_ref_queue", engine.queue_stats().max_refs}};
    manifest["deltas"] = engine.deltas();
    save_params(store.final_params, out / "final.bin");
    write_text(out / "model.json", model_spec_json(model.spec()));
  }
  manifest["wall_ms"] = clock.seconds() * 1000.0;
  write_step_values_csv(ledger, out / "step_values.csv");
  write_cumulative_csv(ledger, out / "cumulative.csv");
  write_text(out / "run_manifest.json", manifest.dump(2));
}

void command_baseline(const ExperimentConfig &config, const std::string &method,
                      const std::filesystem::path &out) {
  require(method == "loo" || method == "if" || method == "gradnd", ErrorKind::config,
          "baseline method must be loo, if or gradnd");
  ensure_dir(out);
  const auto seed = config.seeds.front();
  const PreparedData data = prepare_data(config, seed);
  const Model model(config.model_spec(data.train.dim(), data.train.num_classes));
  BaselineResult r;
  if (method == "loo") {
    r = loo_value(data.train, model, data.train_config, loo_subset(config, data.pool, seed),
                  config.loo);
  } else if (method == "gradnd") {
    r = gradnd_value(data.train, model, data.train_config, data.pool, config.gradnd);
  } else {
    TrainOptions opts;
    opts.keep_records = false;
    const TrajectoryStore store = run_training(data.train, model, data.train_config, {}, opts);
    r = if_value(data.train, model, store.final_params, data.pool, data.heldout, config.influence);
  }
  {
    const auto p = out / ("values_" + method + ".csv");
    std::ofstream csv(p);
    if (!csv)
      fail(ErrorKind::io, "cannot write " + p.string());
    csv << "sample_id,value\n";
    for (const auto &[id, v] : r.values)
      csv << id << ',' << format_double(v) << '\n';
  }
  ordered_json m;
  m["version"] = kVersion;
  m["method"] = method;
  m["seed"] = seed;
  m["config"] = ordered_json::parse(experiment_config_json(config));
  m["stats"] = r.stats;
  m["wall_ms"] = r.wall_seconds * 1000.0;
  m["peak_rss_bytes"] = r.peak_rss_bytes;
  if (method == "if")
    m["test_gradient"] = "mean over " + std::to_string(data.heldout.size()) +
                         " held-out clean samples";
  if (method == "gradnd")
    m["checkpoints"] = config.gradnd.checkpoints.empty()
                           ? ordered_json("every step of the first epoch")
                           : ordered_json(config.gradnd.checkpoints);
  write_text(out / ("baseline_" + method + "_manifest.json"), m.dump(2));
}

void command_report(const ExperimentConfig &config, const std::filesystem::path &out) {
  const ExperimentResult result = run_experiment(config);
  if (result.reports.empty()) {
    std::string why = "report: every run failed";
    if (!result.failures.empty())
      why += " (" + result.failures.front().stage + ": " + result.failures.front().message + ")";
    fail(ErrorKind::numeric, why);
  }
  export_results(result, out);
  write_text(out / "run_manifest.json", result.manifest_json);
}

VolatilitySetup volatility_setup(const ExperimentConfig &config) {
  const auto &v = config.volatility;
  ExperimentConfig clean = config;
  clean.corruption.count = 0;
  clean.pool_size = 0;
  clean.data.heldout_size = 0;
  const PreparedData base = prepare_data(clean, v.first_seed);
  std::vector<std::size_t> rows(base.train.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  Rng(v.first_seed, streams::data).split(99).shuffle(rows);
  rows.resize(std::min(v.samples, rows.size()));
  std::sort(rows.begin(), rows.end());

  VolatilitySetup setup;
  Dataset &d = setup.data;
  d.num_classes = base.train.num_classes;
  d.features = Matrix(rows.size(), base.train.dim());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto src = base.train.x(rows[k]);
    std::copy(src.begin(), src.end(), d.features.row(k).begin());
    d.labels.push_back(base.train.labels[rows[k]]);
    d.ids.push_back(base.train.ids[rows[k]]);
    d.mask.push_back(0);
  }

  auto &p = setup.probe;
  p.train = config.train;
  p.train.total_steps = v.total_steps;
  p.train.batch_size = std::min(v.batch_size, rows.size());
  p.train.lr = v.lr;
  p.train.shuffle = ShuffleMode::with_replacement;
  p.train.init_rng = {v.first_seed, streams::init};
  p.valuation = config.valuation;
  p.valuation.total_steps = v.total_steps;
  for (std::size_t s = 0; s < v.seeds; ++s)
    p.seeds.push_back({v.first_seed + s, streams::batch});
  return setup;
}

void command_probe_volatility(const ExperimentConfig &config, const std::filesystem::path &out) {
  ensure_dir(out);
  const VolatilitySetup setup = volatility_setup(config);
  const Model model(config.model_spec(setup.data.dim(), setup.data.num_classes));
  const VolatilityReport report = volatility_probe(setup.data, model, setup.probe);
  {
    const auto p = out / "volatility.csv";
    std::ofstream csv(p);
    if (!csv)
      fail(ErrorKind::io, "cannot write " + p.string());
    csv << "sample_id,step,observations,stddev,bound,proof_bound\n";
    for (const auto &e : report.entries)
      csv << e.id << ',' << e.step << ',' << e.observations << ',' << format_double(e.stddev)
          << ',' << format_double(e.bound) << ',' << format_double(e.proof_bound) << '\n';
  }
  ordered_json j;
  j["version"] = kVersion;
  j["pairs"] = report.entries.size();
  j["skipped_pairs"] = report.skipped_pairs;
  j["violations"] = report.violations;
  j["proof_bound_violations"] = report.proof_bound_violations;
  j["max_grad_norm"] = report.max_grad_norm;
  j["spearman_step_vs_max_stddev"] = report.spearman_step_vs_max_stddev;
  j["config"] = ordered_json::parse(experiment_config_json(config));
  write_text(out / "volatility_summary.json", j.dump(2));
}

} // namespace liveval
