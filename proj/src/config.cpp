#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "liveval/bench.hpp"
#include "liveval/error.hpp"

namespace liveval {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void check_keys(const json &j, const std::string &where, std::initializer_list<const char *> allowed) {
  if (!j.is_object())
    fail(ErrorKind::config, where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto &[key, _] : j.items())
    if (!ok.count(key))
      fail(ErrorKind::config, where + ": unknown key '" + key + "'");
}

template <typename T> void read(const json &j, const char *key, T &out) {
  if (j.contains(key))
    out = j.at(key).get<T>();
}

const char *data_kind_name(DataSource::Kind k) {
  switch (k) {
  case DataSource::Kind::blobs: return "blobs";
  case DataSource::Kind::csv: return "csv";
  case DataSource::Kind::idx: return "idx";
  }
  return "blobs";
}

} // namespace

ModelSpec ExperimentConfig::model_spec(std::size_t input_dim, std::size_t classes) const {
  ModelSpec spec;
  spec.widths.push_back(input_dim);
  spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
  spec.widths.push_back(classes);
  spec.loss = loss;
  return spec;
}

void ExperimentConfig::validate() const {
  TrainConfig t = train;
  t.validate();
  LiveValConfig v = valuation;
  v.window.validate();
  require(engine == "liveval" || engine == "basic", ErrorKind::config,
          "valuation.engine must be 'liveval' or 'basic'");
  for (const auto &m : methods)
    require(m == "liveval" || m == "loo" || m == "if" || m == "gradnd", ErrorKind::config,
            "unknown method '" + m + "'");
  require(!seeds.empty(), ErrorKind::config, "seeds must not be empty");
  require(pool_size >= corruption.count, ErrorKind::config,
          "pool_size must be >= corruption.count");
  require(influence.damping > 0.0, ErrorKind::config, "baselines.if.damping must be > 0");
  require(volatility.seeds >= 8, ErrorKind::config, "volatility.seeds must be >= 8");
  for (auto h : hidden)
    require(h > 0, ErrorKind::config, "model.hidden widths must be positive");
}

ExperimentConfig parse_experiment_config(const std::string &text) {
  ExperimentConfig c;
  try {
    const json j = json::parse(text);
    check_keys(j, "config", {"data", "corruption", "model", "train", "valuation", "methods",
                             "pool_size", "baselines", "seeds", "volatility", "out"});
    if (j.contains("data")) {
      const auto &d = j["data"];
      check_keys(d, "data", {"kind", "blobs", "csv", "idx", "heldout_size"});
      if (d.contains("kind")) {
        const auto kind = d["kind"].get<std::string>();
        if (kind == "blobs")
          c.data.kind = DataSource::Kind::blobs;
        else if (kind == "csv")
          c.data.kind = DataSource::Kind::csv;
        else if (kind == "idx")
          c.data.kind = DataSource::Kind::idx;
        else
          fail(ErrorKind::config, "data.kind: unknown '" + kind + "'");
      }
      if (d.contains("blobs")) {
        const auto &b = d["blobs"];
        check_keys(b, "data.blobs", {"n_per_class", "n_classes", "dim", "separation", "active_fraction"});
        read(b, "n_per_class", c.data.blobs.n_per_class);
        read(b, "n_classes", c.data.blobs.n_classes);
        read(b, "dim", c.data.blobs.dim);
        read(b, "separation", c.data.blobs.separation);
        read(b, "active_fraction", c.data.blobs.active_fraction);
      }
      if (d.contains("csv")) {
        const auto &s = d["csv"];
        check_keys(s, "data.csv", {"path", "label_column", "id_column", "categorical", "standardize"});
        read(s, "path", c.data.csv_path);
        read(s, "label_column", c.data.csv_schema.label_column);
        read(s, "id_column", c.data.csv_schema.id_column);
        read(s, "categorical", c.data.csv_schema.categorical);
        read(s, "standardize", c.data.csv_schema.standardize);
      }
      if (d.contains("idx")) {
        const auto &s = d["idx"];
        check_keys(s, "data.idx", {"images", "labels"});
        read(s, "images", c.data.idx_images);
        read(s, "labels", c.data.idx_labels);
      }
      read(d, "heldout_size", c.data.heldout_size);
    }
    if (j.contains("corruption")) {
      const auto &s = j["corruption"];
      check_keys(s, "corruption", {"kind", "count", "source_class", "target_class", "sigma"});
      if (s.contains("kind"))
        c.corruption.kind = corruption_kind_from_string(s["kind"].get<std::string>());
      read(s, "count", c.corruption.count);
      read(s, "source_class", c.corruption.source_class);
      read(s, "target_class", c.corruption.target_class);
      read(s, "sigma", c.corruption.sigma);
    }
    if (j.contains("model")) {
      const auto &s = j["model"];
      check_keys(s, "model", {"hidden", "loss"});
      read(s, "hidden", c.hidden);
      if (s.contains("loss"))
        c.loss = loss_kind_from_string(s["loss"].get<std::string>());
    }
    if (j.contains("train")) {
      const auto &s = j["train"];
      check_keys(s, "train", {"total_steps", "batch_size", "lr", "shuffle"});
      read(s, "total_steps", c.train.total_steps);
      read(s, "batch_size", c.train.batch_size);
      if (s.contains("shuffle"))
        c.train.shuffle = shuffle_mode_from_string(s["shuffle"].get<std::string>());
      if (s.contains("lr")) {
        const auto &l = s["lr"];
        check_keys(l, "train.lr", {"schedule", "eta", "factor", "every"});
        if (l.contains("schedule")) {
          const auto k = l["schedule"].get<std::string>();
          if (k == "constant")
            c.train.lr.kind = LrSchedule::Kind::constant;
          else if (k == "step-decay")
            c.train.lr.kind = LrSchedule::Kind::step_decay;
          else
            fail(ErrorKind::config, "train.lr.schedule: unknown '" + k + "'");
        }
        read(l, "eta", c.train.lr.eta);
        read(l, "factor", c.train.lr.factor);
        read(l, "every", c.train.lr.every);
      }
    }
    if (j.contains("valuation")) {
      const auto &s = j["valuation"];
      check_keys(s, "valuation", {"engine", "delta0", "delta_min", "delta_max", "delta_step",
                                  "eps_min", "eps_max", "denominator", "loss_rate"});
      read(s, "engine", c.engine);
      read(s, "delta0", c.valuation.window.delta0);
      read(s, "delta_min", c.valuation.window.delta_min);
      read(s, "delta_max", c.valuation.window.delta_max);
      read(s, "delta_step", c.valuation.window.delta_step);
      read(s, "eps_min", c.valuation.window.eps_min);
      read(s, "eps_max", c.valuation.window.eps_max);
      if (s.contains("denominator"))
        c.valuation.denominator = denominator_from_string(s["denominator"].get<std::string>());
      if (s.contains("loss_rate"))
        c.valuation.loss_rate = loss_rate_mode_from_string(s["loss_rate"].get<std::string>());
    }
    read(j, "methods", c.methods);
    read(j, "pool_size", c.pool_size);
    if (j.contains("baselines")) {
      const auto &s = j["baselines"];
      check_keys(s, "baselines", {"loo", "if", "gradnd"});
      if (s.contains("loo")) {
        check_keys(s["loo"], "baselines.loo", {"pool", "threads"});
        read(s["loo"], "pool", c.loo_pool);
        read(s["loo"], "threads", c.loo.threads);
      }
      if (s.contains("if")) {
        check_keys(s["if"], "baselines.if", {"damping", "tolerance", "max_iterations"});
        read(s["if"], "damping", c.influence.damping);
        read(s["if"], "tolerance", c.influence.tolerance);
        read(s["if"], "max_iterations", c.influence.max_iterations);
      }
      if (s.contains("gradnd")) {
        check_keys(s["gradnd"], "baselines.gradnd", {"checkpoints"});
        read(s["gradnd"], "checkpoints", c.gradnd.checkpoints);
      }
    }
    read(j, "seeds", c.seeds);
    if (j.contains("volatility")) {
      const auto &s = j["volatility"];
      check_keys(s, "volatility", {"seeds", "first_seed", "samples", "batch_size", "total_steps", "lr"});
      read(s, "seeds", c.volatility.seeds);
      read(s, "first_seed", c.volatility.first_seed);
      read(s, "samples", c.volatility.samples);
      read(s, "batch_size", c.volatility.batch_size);
      read(s, "total_steps", c.volatility.total_steps);
      if (s.contains("lr")) {
        const auto &l = s["lr"];
        check_keys(l, "volatility.lr", {"schedule", "eta", "factor", "every"});
        if (l.contains("schedule"))
          c.volatility.lr.kind = l["schedule"].get<std::string>() == "step-decay"
                                     ? LrSchedule::Kind::step_decay
                                     : LrSchedule::Kind::constant;
        read(l, "eta", c.volatility.lr.eta);
        read(l, "factor", c.volatility.lr.factor);
        read(l, "every", c.volatility.lr.every);
      }
    }
    read(j, "out", c.out_dir);
  } catch (const json::exception &e) {
    fail(ErrorKind::config, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    fail(ErrorKind::io, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

std::string experiment_config_json(const ExperimentConfig &c) {
  ordered_json j;
  j["data"]["kind"] = data_kind_name(c.data.kind);
  j["data"]["blobs"] = {{"n_per_class", c.data.blobs.n_per_class},
                        {"n_classes", c.data.blobs.n_classes},
                        {"dim", c.data.blobs.dim},
                        {"separation", c.data.blobs.separation},
                        {"active_fraction", c.data.blobs.active_fraction}};
  j["data"]["csv"] = {{"path", c.data.csv_path},
                      {"label_column", c.data.csv_schema.label_column},
                      {"id_column", c.data.csv_schema.id_column},
                      {"categorical", c.data.csv_schema.categorical},
                      {"standardize", c.data.csv_schema.standardize}};
  j["data"]["idx"] = {{"images", c.data.idx_images}, {"labels", c.data.idx_labels}};
  j["data"]["heldout_size"] = c.data.heldout_size;
  j["corruption"] = {{"kind", to_string(c.corruption.kind)},
                     {"count", c.corruption.count},
                     {"source_class", c.corruption.source_class},
                     {"target_class", c.corruption.target_class},
                     {"sigma", c.corruption.sigma}};
  j["model"] = {{"hidden", c.hidden}, {"loss", to_string(c.loss)}};
  j["train"] = {{"total_steps", c.train.total_steps},
                {"batch_size", c.train.batch_size},
                {"lr",
                 {{"schedule", c.train.lr.kind == LrSchedule::Kind::constant ? "constant" : "step-decay"},
                  {"eta", c.train.lr.eta},
                  {"factor", c.train.lr.factor},
                  {"every", c.train.lr.every}}},
                {"shuffle", to_string(c.train.shuffle)}};
  j["valuation"] = {{"engine", c.engine},
                    {"delta0", c.valuation.window.delta0},
                    {"delta_min", c.valuation.window.delta_min},
                    {"delta_max", c.valuation.window.delta_max},
                    {"delta_step", c.valuation.window.delta_step},
                    {"eps_min", c.valuation.window.eps_min},
                    {"eps_max", c.valuation.window.eps_max},
                    {"denominator", to_string(c.valuation.denominator)},
                    {"loss_rate", to_string(c.valuation.loss_rate)}};
  j["methods"] = c.methods;
  j["pool_size"] = c.pool_size;
  j["baselines"] = {{"loo", {{"pool", c.loo_pool}, {"threads", c.loo.threads}}},
                    {"if",
                     {{"damping", c.influence.damping},
                      {"tolerance", c.influence.tolerance},
                      {"max_iterations", c.influence.max_iterations}}},
                    {"gradnd", {{"checkpoints", c.gradnd.checkpoints}}}};
  j["seeds"] = c.seeds;
  j["volatility"] = {{"seeds", c.volatility.seeds},
                     {"first_seed", c.volatility.first_seed},
                     {"samples", c.volatility.samples},
                     {"batch_size", c.volatility.batch_size},
                     {"total_steps", c.volatility.total_steps},
                     {"lr",
                      {{"schedule", c.volatility.lr.kind == LrSchedule::Kind::constant ? "constant" : "step-decay"},
                       {"eta", c.volatility.lr.eta},
                       {"factor", c.volatility.lr.factor},
                       {"every", c.volatility.lr.every}}}};
  j["out"] = c.out_dir;
  return j.dump(2);
}

} // namespace liveval
