#include "liveval/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "liveval/error.hpp"
#include "liveval/resources.hpp"
#include "format.hpp"

namespace liveval {

using nlohmann::ordered_json;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t digest_string(const std::string &s) {
  std::uint64_t h = mix64(s.size());
  for (unsigned char c : s)
    h = mix64(h ^ c);
  return h;
}

Dataset take_rows(const Dataset &ds, const std::vector<std::size_t> &rows) {
  Dataset out;
  out.num_classes = ds.num_classes;
  out.features = Matrix(rows.size(), ds.dim());
  if (!ds.targets.data.empty())
    out.targets = Matrix(rows.size(), ds.targets.cols);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto src = ds.x(rows[k]);
    std::copy(src.begin(), src.end(), out.features.row(k).begin());
    if (!ds.targets.data.empty()) {
      const auto t = ds.targets.row(rows[k]);
      std::copy(t.begin(), t.end(), out.targets.row(k).begin());
    }
    out.labels.push_back(ds.labels[rows[k]]);
    out.ids.push_back(ds.ids[rows[k]]);
    out.mask.push_back(ds.mask[rows[k]]);
  }
  return out;
}

std::map<SampleId, double> restrict_to(const std::map<SampleId, double> &values,
                                       std::span<const SampleId> pool) {
  std::map<SampleId, double> out;
  for (auto id : pool) {
    auto it = values.find(id);
    out[id] = it == values.end() ? 0.0 : it->second;
  }
  return out;
}

class EpochSnapshotHook : public TrainingHook {
public:
  EpochSnapshotHook(const LiveValEngine &engine, Step every) : engine_(engine), every_(every) {}

  void on_step(const StepRecord &record, const ParamVector &) override {
    if (record.step % every_ == 0) {
      auto snap = engine_.provisional_snapshot();
      ledgers.push_back(std::move(snap.ledger));
      provisional.push_back(snap.provisional);
    }
  }

  std::vector<ValuationLedger> ledgers;
  std::vector<bool> provisional;

private:
  const LiveValEngine &engine_;
  Step every_;
};

} // namespace

std::vector<SampleId> loo_subset(const ExperimentConfig &config, std::span<const SampleId> pool,
                                 std::uint64_t seed) {
  std::vector<SampleId> subset(pool.begin(), pool.end());
  if (config.loo_pool > 0 && config.loo_pool < subset.size()) {
    Rng(seed, streams::pool).split(7).shuffle(subset);
    subset.resize(config.loo_pool);
    std::sort(subset.begin(), subset.end());
  }
  return subset;
}

PreparedData prepare_data(const ExperimentConfig &config, std::uint64_t seed) {
  PreparedData out;
  Dataset clean;
  if (config.data.kind == DataSource::Kind::blobs) {
    clean = synth_gaussian_blobs({seed, streams::data}, config.data.blobs);
    if (config.data.heldout_size > 0) {
      BlobOptions h = config.data.blobs;
      h.n_per_class = (config.data.heldout_size + h.n_classes - 1) / h.n_classes;
      Dataset extra = synth_gaussian_blobs({seed, streams::heldout}, h);
      Rng pick(seed, streams::heldout);
      std::vector<std::size_t> rows(extra.size());
      std::iota(rows.begin(), rows.end(), std::size_t{0});
      pick.split(1).shuffle(rows);
      rows.resize(config.data.heldout_size);
      std::sort(rows.begin(), rows.end());
      out.heldout = take_rows(extra, rows);
    }
  } else {
    Dataset all = config.data.kind == DataSource::Kind::csv
                      ? load_csv(config.data.csv_path, config.data.csv_schema)
                      : load_idx(config.data.idx_images, config.data.idx_labels);
    require(all.size() > config.data.heldout_size, ErrorKind::config,
            "heldout_size leaves no training data");
    std::vector<std::size_t> rows(all.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    Rng(seed, streams::heldout).shuffle(rows);
    std::vector<std::size_t> held(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(config.data.heldout_size));
    std::vector<std::size_t> rest(rows.begin() + static_cast<std::ptrdiff_t>(config.data.heldout_size), rows.end());
    std::sort(held.begin(), held.end());
    std::sort(rest.begin(), rest.end());
    out.heldout = take_rows(all, held);
    clean = take_rows(all, rest);
  }

  CorruptionSpec spec;
  spec.kind = config.corruption.kind;
  spec.count = config.corruption.count;
  spec.source_class = config.corruption.source_class;
  spec.target_class = config.corruption.target_class;
  spec.sigma = config.corruption.sigma;
  spec.rng = {seed, streams::corrupt};
  out.train = corrupt(clean, spec, &out.corruption);
  out.pool = build_pool(out.train, config.pool_size, {seed, streams::pool});

  out.train_config = config.train;
  out.train_config.rng = {seed, streams::batch};
  out.train_config.init_rng = {seed, streams::init};
  return out;
}

std::vector<SampleId> build_pool(const Dataset &ds, std::size_t pool_size, RngState rng) {
  std::vector<SampleId> corrupted, clean;
  for (std::size_t i = 0; i < ds.size(); ++i)
    (ds.mask[i] ? corrupted : clean).push_back(ds.ids[i]);
  require(corrupted.size() <= pool_size, ErrorKind::parameter,
          "build_pool: more corrupted samples than pool slots");
  const std::size_t need = pool_size - corrupted.size();
  require(clean.size() >= need, ErrorKind::parameter, "build_pool: not enough clean samples");
  Rng r(rng);
  for (std::size_t i = 0; i < need; ++i) {
    const auto j = i + static_cast<std::size_t>(r.below(clean.size() - i));
    std::swap(clean[i], clean[j]);
  }
  std::vector<SampleId> pool = corrupted;
  pool.insert(pool.end(), clean.begin(), clean.begin() + static_cast<std::ptrdiff_t>(need));
  std::sort(pool.begin(), pool.end());
  return pool;
}

DetectionReport detection_metric(const std::map<SampleId, double> &values,
                                 const std::set<SampleId> &corrupted, std::size_t k,
                                 std::span<const SampleId> pool) {
  require(pool.size() >= k, ErrorKind::parameter, "detection: pool smaller than k");
  std::size_t masked = 0;
  std::vector<std::pair<double, SampleId>> ranked;
  ranked.reserve(pool.size());
  for (auto id : pool) {
    auto it = values.find(id);
    if (it == values.end())
      fail(ErrorKind::parameter, "detection: no value for pool sample " + std::to_string(id));
    ranked.emplace_back(it->second, id);
    masked += corrupted.count(id);
  }
  require(masked == k, ErrorKind::parameter,
          "detection: pool holds " + std::to_string(masked) + " corrupted ids, expected " +
              std::to_string(k));
  std::sort(ranked.begin(), ranked.end());
  DetectionReport r;
  r.k = k;
  r.pool_size = pool.size();
  for (std::size_t i = 0; i < k; ++i)
    r.detected += corrupted.count(ranked[i].second);
  r.degenerate = k == 0;
  r.detection_rate = k == 0 ? 0.0 : static_cast<double>(r.detected) / static_cast<double>(k);
  return r;
}

std::vector<std::size_t> early_detection_curve(std::span<const ValuationLedger> snapshots,
                                               const std::set<SampleId> &corrupted,
                                               std::size_t k, std::span<const SampleId> pool) {
  std::vector<std::size_t> out;
  for (const auto &ledger : snapshots)
    out.push_back(
        detection_metric(restrict_to(ledger.cumulative(), pool), corrupted, k, pool).detected);
  return out;
}

std::vector<MethodSummary> summarize(const ExperimentConfig &config,
                                     const std::vector<DetectionReport> &reports,
                                     const std::vector<ResourceRecord> &resources) {
  std::vector<MethodSummary> out;
  for (const auto &m : config.methods) {
    MethodSummary s;
    s.method = m;
    std::vector<double> det;
    for (const auto &r : reports)
      if (r.method == m)
        det.push_back(static_cast<double>(r.detected));
    s.runs = det.size();
    if (!det.empty()) {
      s.mean_detected = std::accumulate(det.begin(), det.end(), 0.0) / static_cast<double>(det.size());
      double ss = 0.0;
      for (double d : det)
        ss += (d - s.mean_detected) * (d - s.mean_detected);
      s.std_detected = det.size() > 1 ? std::sqrt(ss / static_cast<double>(det.size() - 1)) : 0.0;
    }
    std::size_t n = 0;
    for (const auto &r : resources)
      if (r.method == m) {
        s.mean_wall_ms += r.wall_ms;
        s.peak_rss_bytes = std::max(s.peak_rss_bytes, r.peak_rss_bytes);
        ++n;
      }
    if (n)
      s.mean_wall_ms /= static_cast<double>(n);
    out.push_back(s);
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig &config) {
  config.validate();
  ExperimentResult result;
  ordered_json manifest;
  manifest["version"] = kVersion;
  manifest["config"] = ordered_json::parse(experiment_config_json(config));
  manifest["notes"] = {
      {"if_test_gradient", "mean gradient over held-out clean samples"},
      {"loo_loss", "mean training-set loss at the final step"},
      {"valuation_scope", "all trained samples valued; scoring restricted to the pool"},
      {"batch_sampling", to_string(config.train.shuffle)},
      {"gradnd_checkpoints", config.gradnd.checkpoints.empty() ? "every step of the first epoch"
                                                               : "configured"},
  };
  manifest["seeds"] = ordered_json::array();

  for (auto seed : config.seeds) {
    PreparedData data;
    try {
      data = prepare_data(config, seed);
    } catch (const Error &e) {
      result.failures.push_back({seed, "data", e.what()});
      continue;
    }
    const Dataset &ds = data.train;
    const Model model(config.model_spec(ds.dim(), ds.num_classes));
    std::set<SampleId> corrupted;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds.mask[i])
        corrupted.insert(ds.ids[i]);
    const std::size_t k = corrupted.size();

    ordered_json seed_entry;
    seed_entry["seed"] = seed;
    seed_entry["dataset_digest"] = hex64(ds.digest());
    seed_entry["corruption_manifest_digest"] =
        hex64(digest_string(corruption_manifest_json(data.corruption)));
    seed_entry["pool"] = data.pool;
    manifest["seeds"].push_back(seed_entry);

    for (const auto &method : config.methods) {
      try {
        std::map<SampleId, double> values;
        double wall_ms = 0.0;
        std::size_t peak = 0;
        bool score = true;
        if (method == "liveval") {
          PeakRssSampler rss;
          Stopwatch clock;
          const Step spe = steps_per_epoch(ds.size(), data.train_config.batch_size);
          EarlyCurve curve;
          curve.seed = seed;
          std::vector<ValuationLedger> snaps;
          if (config.engine == "liveval") {
            LiveValConfig vc = config.valuation;
            vc.total_steps = data.train_config.total_steps;
            LiveValEngine engine(ds, model, vc);
            EpochSnapshotHook snapper(engine, spe);
            TrainingHook *hooks[] = {&engine, &snapper};
            TrainOptions opts;
            opts.keep_records = false;
            run_training(ds, model, data.train_config, hooks, opts);
            values = engine.ledger().cumulative();
            snaps = std::move(snapper.ledgers);
            curve.provisional = snapper.provisional;
          } else {
            const TrajectoryStore store = run_training(ds, model, data.train_config);
            const ValuationLedger ledger =
                basic_valuate(store, ds, model, config.valuation.denominator);
            values = ledger.cumulative();
            for (Step end = spe; end <= store.steps(); end += spe) {
              ValuationLedger part(ds.ids);
              for (const auto &v : ledger.step_values())
                if (v.step <= end)
                  part.append(v);
              snaps.push_back(std::move(part));
              curve.provisional.push_back(false);
            }
          }
          wall_ms = clock.seconds() * 1000.0;
          peak = rss.stop();
          curve.detected = early_detection_curve(snaps, corrupted, k, data.pool);
          result.early.push_back(std::move(curve));
        } else if (method == "gradnd") {
          auto r = gradnd_value(ds, model, data.train_config, data.pool, config.gradnd);
          values = std::move(r.values);
          wall_ms = r.wall_seconds * 1000.0;
          peak = r.peak_rss_bytes;
        } else if (method == "loo") {
          const std::vector<SampleId> subset = loo_subset(config, data.pool, seed);
          score = subset.size() == data.pool.size();
          auto r = loo_value(ds, model, data.train_config, subset, config.loo);
          values = std::move(r.values);
          wall_ms = r.wall_seconds * 1000.0;
          peak = r.peak_rss_bytes;
        } else if (method == "if") {
          PeakRssSampler rss;
          Stopwatch clock;
          TrainOptions opts;
          opts.keep_records = false;
          const TrajectoryStore store = run_training(ds, model, data.train_config, {}, opts);
          auto r = if_value(ds, model, store.final_params, data.pool, data.heldout,
                            config.influence);
          values = std::move(r.values);
          wall_ms = clock.seconds() * 1000.0;
          peak = rss.stop();
        }
        result.resources.push_back({method, seed, wall_ms, peak});
        if (score) {
          DetectionReport rep = detection_metric(restrict_to(values, data.pool), corrupted, k, data.pool);
          rep.method = method;
          rep.seed = seed;
          if (method == "liveval" && !result.early.empty())
            rep.per_epoch_detected = result.early.back().detected;
          result.reports.push_back(std::move(rep));
        }
        result.values[method][seed] = std::move(values);
      } catch (const Error &e) {
        result.failures.push_back({seed, method, e.what()});
      }
    }
  }
  result.summary = summarize(config, result.reports, result.resources);
  result.manifest_json = manifest.dump(2);
  return result;
}

std::string results_json(const ExperimentResult &result) {
  ordered_json j;
  j["version"] = kVersion;
  j["manifest"] = result.manifest_json.empty() ? ordered_json::object()
                                               : ordered_json::parse(result.manifest_json);
  j["reports"] = ordered_json::array();
  for (const auto &r : result.reports)
    j["reports"].push_back({{"method", r.method},
                            {"k", r.k},
                            {"seed", r.seed},
                            {"pool_size", r.pool_size},
                            {"detected", r.detected},
                            {"detection_rate", r.detection_rate},
                            {"degenerate", r.degenerate},
                            {"per_epoch_detected", r.per_epoch_detected}});
  j["resources"] = ordered_json::array();
  for (const auto &r : result.resources)
    j["resources"].push_back({{"method", r.method},
                              {"seed", r.seed},
                              {"wall_ms", r.wall_ms},
                              {"peak_rss_bytes", r.peak_rss_bytes}});
  j["summary"] = ordered_json::array();
  for (const auto &s : result.summary)
    j["summary"].push_back({{"method", s.method},
                            {"runs", s.runs},
                            {"mean_detected", s.mean_detected},
                            {"std_detected", s.std_detected},
                            {"mean_wall_ms", s.mean_wall_ms},
                            {"peak_rss_bytes", s.peak_rss_bytes}});
  j["early_detection"] = ordered_json::array();
  for (const auto &c : result.early)
    j["early_detection"].push_back(
        {{"seed", c.seed}, {"detected", c.detected}, {"provisional", c.provisional}});
  j["failures"] = ordered_json::array();
  for (const auto &f : result.failures)
    j["failures"].push_back({{"seed", f.seed}, {"stage", f.stage}, {"message", f.message}});
  return j.dump(2);
}

namespace {

std::ofstream open_out(const std::filesystem::path &p) {
  std::ofstream out(p);
  if (!out)
    fail(ErrorKind::io, "cannot write " + p.string());
  return out;
}

void close_out(std::ofstream &out, const std::filesystem::path &p) {
  out.flush();
  if (!out)
    fail(ErrorKind::io, "write failed: " + p.string());
}

} // namespace

void export_results(const ExperimentResult &result, const std::filesystem::path &dir) {
  require(!result.reports.empty(), ErrorKind::parameter, "export_results: no reports");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    fail(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());

  {
    const auto p = dir / "detection.csv";
    auto out = open_out(p);
    out << "method,k,seed,detected\n";
    for (const auto &r : result.reports)
      out << r.method << ',' << r.k << ',' << r.seed << ',' << r.detected << '\n';
    close_out(out, p);
  }
  {
    const auto p = dir / "resources.csv";
    auto out = open_out(p);
    out << "method,wall_ms,peak_rss_bytes\n";
    for (const auto &s : result.summary)
      if (s.mean_wall_ms > 0.0 || s.peak_rss_bytes > 0)
        out << s.method << ',' << format_double(s.mean_wall_ms) << ',' << s.peak_rss_bytes << '\n';
    close_out(out, p);
  }
  for (const auto &[method, per_seed] : result.values) {
    const auto p = dir / ("values_" + method + ".csv");
    auto out = open_out(p);
    out << "seed,sample_id,value\n";
    for (const auto &[seed, values] : per_seed)
      for (const auto &[id, v] : values)
        out << seed << ',' << id << ',' << format_double(v) << '\n';
    close_out(out, p);
  }
  {
    const auto p = dir / "early_detection.csv";
    auto out = open_out(p);
    out << "seed,epoch,detected,provisional\n";
    for (const auto &c : result.early)
      for (std::size_t e = 0; e < c.detected.size(); ++e)
        out << c.seed << ',' << e + 1 << ',' << c.detected[e] << ','
            << (e < c.provisional.size() && c.provisional[e] ? 1 : 0) << '\n';
    close_out(out, p);
  }
  {
    // Detection table: one row per k, mean/std per method.
    const auto p = dir / "table_detection.csv";
    auto out = open_out(p);
    out << "k";
    for (const auto &s : result.summary)
      out << ',' << s.method << "_mean," << s.method << "_std";
    out << '\n' << result.reports.front().k;
    for (const auto &s : result.summary) {
      if (s.runs == 0) // nothing scored, e.g. a LOO subset
        out << ",,";
      else
        out << ',' << format_double(s.mean_detected) << ',' << format_double(s.std_detected);
    }
    out << '\n';
    close_out(out, p);
  }
  {
    const auto p = dir / "table_resources.csv";
    auto out = open_out(p);
    out << "metric";
    for (const auto &s : result.summary)
      out << ',' << s.method;
    out << "\ncomputation_ms";
    for (const auto &s : result.summary)
      out << ',' << format_double(s.mean_wall_ms);
    out << "\npeak_rss_bytes";
    for (const auto &s : result.summary)
      out << ',' << s.peak_rss_bytes;
    out << '\n';
    close_out(out, p);
  }
  {
    const auto p = dir / "results.json";
    auto out = open_out(p);
    out << results_json(result) << '\n';
    close_out(out, p);
  }
}

} // namespace liveval
