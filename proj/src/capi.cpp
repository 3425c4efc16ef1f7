#include "liveval.h"

#include <algorithm>
#include <map>
#include <memory>
#include <set>
#include <string>

#include "liveval/bench.hpp"
#include "liveval/commands.hpp"
#include "liveval/error.hpp"

struct lv_config {
  liveval::ExperimentConfig config;
  std::string json;
};

struct lv_dataset {
  liveval::Dataset data;
};

namespace {

thread_local std::string last_error;

lv_status status_of(liveval::ErrorKind kind) {
  using liveval::ErrorKind;
  switch (kind) {
  case ErrorKind::config:
  case ErrorKind::schema:
    return LV_ERR_CONFIG;
  case ErrorKind::numeric:
  case ErrorKind::solver:
    return LV_ERR_NUMERIC;
  case ErrorKind::io:
    return LV_ERR_IO;
  case ErrorKind::parse:
  case ErrorKind::format:
  case ErrorKind::consistency:
  case ErrorKind::store:
    return LV_ERR_FORMAT;
  case ErrorKind::parameter:
  case ErrorKind::dimension:
    return LV_ERR_PARAMETER;
  case ErrorKind::internal:
    return LV_ERR_INTERNAL;
  }
  return LV_ERR_INTERNAL;
}

template <typename Fn> lv_status guarded(Fn &&fn) {
  try {
    fn();
    last_error.clear();
    return LV_OK;
  } catch (const liveval::Error &e) {
    last_error = std::string(liveval::to_string(e.kind())) + " error: " + e.what();
    return status_of(e.kind());
  } catch (const std::exception &e) {
    last_error = std::string("internal error: ") + e.what();
    return LV_ERR_INTERNAL;
  } catch (...) {
    last_error = "internal error: unknown exception";
    return LV_ERR_INTERNAL;
  }
}

lv_status null_arg(const char *name) {
  last_error = std::string("parameter error: null argument '") + name + "'";
  return LV_ERR_PARAMETER;
}

std::filesystem::path out_path(const lv_config *config, const char *out_dir) {
  return out_dir ? std::filesystem::path(out_dir) : std::filesystem::path(config->config.out_dir);
}

void refresh(lv_config *c) { c->json = liveval::experiment_config_json(c->config); }

} // namespace

extern "C" {

const char *lv_version(void) { return liveval::kVersion; }

const char *lv_last_error(void) { return last_error.c_str(); }

int lv_exit_code(lv_status status) {
  switch (status) {
  case LV_OK: return 0;
  case LV_ERR_CONFIG:
  case LV_ERR_PARAMETER: return 2;
  case LV_ERR_NUMERIC: return 3;
  case LV_ERR_IO:
  case LV_ERR_FORMAT: return 4;
  default: return 1;
  }
}

lv_status lv_config_default(lv_config **out) {
  if (!out)
    return null_arg("out");
  return guarded([&] {
    auto c = std::make_unique<lv_config>();
    refresh(c.get());
    *out = c.release();
  });
}

lv_status lv_config_load(const char *path, lv_config **out) {
  if (!path)
    return null_arg("path");
  if (!out)
    return null_arg("out");
  return guarded([&] {
    auto c = std::make_unique<lv_config>();
    c->config = liveval::load_experiment_config(path);
    refresh(c.get());
    *out = c.release();
  });
}

lv_status lv_config_parse(const char *json, lv_config **out) {
  if (!json)
    return null_arg("json");
  if (!out)
    return null_arg("out");
  return guarded([&] {
    auto c = std::make_unique<lv_config>();
    c->config = liveval::parse_experiment_config(json);
    refresh(c.get());
    *out = c.release();
  });
}

lv_status lv_config_set_seed(lv_config *config, uint64_t seed) {
  if (!config)
    return null_arg("config");
  config->config.seeds = {seed};
  refresh(config);
  return LV_OK;
}

lv_status lv_config_set_out_dir(lv_config *config, const char *dir) {
  if (!config)
    return null_arg("config");
  if (!dir)
    return null_arg("dir");
  config->config.out_dir = dir;
  refresh(config);
  return LV_OK;
}

const char *lv_config_json(const lv_config *config) {
  return config ? config->json.c_str() : "";
}

const char *lv_config_out_dir(const lv_config *config) {
  return config ? config->config.out_dir.c_str() : "";
}

void lv_config_free(lv_config *config) { delete config; }

lv_status lv_run_corrupt(const lv_config *config, const char *out_dir) {
  if (!config)
    return null_arg("config");
  return guarded([&] { liveval::command_corrupt(config->config, out_path(config, out_dir)); });
}

lv_status lv_run_train_value(const lv_config *config, const char *out_dir) {
  if (!config)
    return null_arg("config");
  return guarded(
      [&] { liveval::command_train_value(config->config, out_path(config, out_dir)); });
}

lv_status lv_run_baseline(const lv_config *config, const char *method, const char *out_dir) {
  if (!config)
    return null_arg("config");
  if (!method)
    return null_arg("method");
  return guarded(
      [&] { liveval::command_baseline(config->config, method, out_path(config, out_dir)); });
}

lv_status lv_run_report(const lv_config *config, const char *out_dir) {
  if (!config)
    return null_arg("config");
  return guarded([&] { liveval::command_report(config->config, out_path(config, out_dir)); });
}

lv_status lv_run_probe_volatility(const lv_config *config, const char *out_dir) {
  if (!config)
    return null_arg("config");
  return guarded(
      [&] { liveval::command_probe_volatility(config->config, out_path(config, out_dir)); });
}

lv_status lv_dataset_synth_blobs(uint64_t seed, size_t n_per_class, size_t n_classes,
                                 size_t dim, double separation, lv_dataset **out) {
  if (!out)
    return null_arg("out");
  return guarded([&] {
    liveval::BlobOptions o;
    o.n_per_class = n_per_class;
    o.n_classes = n_classes;
    o.dim = dim;
    o.separation = separation;
    auto d = std::make_unique<lv_dataset>();
    d->data = liveval::synth_gaussian_blobs({seed, liveval::streams::data}, o);
    *out = d.release();
  });
}

lv_status lv_dataset_load_csv(const char *path, const char *label_column, lv_dataset **out) {
  if (!path)
    return null_arg("path");
  if (!out)
    return null_arg("out");
  return guarded([&] {
    liveval::CsvSchema schema;
    if (label_column)
      schema.label_column = label_column;
    auto d = std::make_unique<lv_dataset>();
    d->data = liveval::load_csv(path, schema);
    *out = d.release();
  });
}

lv_status lv_dataset_load_idx(const char *images, const char *labels, lv_dataset **out) {
  if (!images)
    return null_arg("images");
  if (!labels)
    return null_arg("labels");
  if (!out)
    return null_arg("out");
  return guarded([&] {
    auto d = std::make_unique<lv_dataset>();
    d->data = liveval::load_idx(images, labels);
    *out = d.release();
  });
}

lv_status lv_dataset_save_csv(const lv_dataset *ds, const char *path) {
  if (!ds)
    return null_arg("ds");
  if (!path)
    return null_arg("path");
  return guarded([&] { liveval::save_csv(ds->data, path); });
}

lv_status lv_dataset_shape(const lv_dataset *ds, size_t *n, size_t *f, size_t *c) {
  if (!ds)
    return null_arg("ds");
  if (n)
    *n = ds->data.size();
  if (f)
    *f = ds->data.dim();
  if (c)
    *c = ds->data.num_classes;
  return LV_OK;
}

lv_status lv_dataset_corrupt(const lv_dataset *ds, int kind, size_t count, int source_class,
                             int target_class, double sigma, uint64_t seed, lv_dataset **out) {
  if (!ds)
    return null_arg("ds");
  if (!out)
    return null_arg("out");
  if (kind != 0 && kind != 1) {
    last_error = "parameter error: corruption kind must be 0 or 1";
    return LV_ERR_PARAMETER;
  }
  return guarded([&] {
    liveval::CorruptionSpec spec;
    spec.kind = kind == 0 ? liveval::CorruptionKind::label_flip
                          : liveval::CorruptionKind::feature_noise;
    spec.count = count;
    spec.source_class = source_class;
    spec.target_class = target_class;
    spec.sigma = sigma;
    spec.rng = {seed, liveval::streams::corrupt};
    auto d = std::make_unique<lv_dataset>();
    d->data = liveval::corrupt(ds->data, spec);
    *out = d.release();
  });
}

lv_status lv_dataset_mask(const lv_dataset *ds, uint8_t *mask, size_t n) {
  if (!ds)
    return null_arg("ds");
  if (!mask)
    return null_arg("mask");
  if (n != ds->data.size()) {
    last_error = "parameter error: mask buffer length does not match dataset size";
    return LV_ERR_PARAMETER;
  }
  std::copy(ds->data.mask.begin(), ds->data.mask.end(), mask);
  return LV_OK;
}

void lv_dataset_free(lv_dataset *ds) { delete ds; }

lv_status lv_step_value(double delta_norm, double u_norm, double *out) {
  if (!out)
    return null_arg("out");
  return guarded([&] { *out = liveval::step_value(delta_norm, u_norm); });
}

lv_status lv_detection_metric(const uint64_t *ids, const double *values,
                              const uint8_t *corrupted, size_t pool_size, size_t k,
                              size_t *detected) {
  if (pool_size > 0 && (!ids || !values || !corrupted))
    return null_arg("ids/values/corrupted");
  if (!detected)
    return null_arg("detected");
  return guarded([&] {
    std::map<liveval::SampleId, double> vals;
    std::set<liveval::SampleId> bad;
    std::vector<liveval::SampleId> pool(ids, ids + pool_size);
    for (size_t i = 0; i < pool_size; ++i) {
      vals[ids[i]] = values[i];
      if (corrupted[i])
        bad.insert(ids[i]);
    }
    liveval::require(vals.size() == pool_size, liveval::ErrorKind::parameter,
                     "detection: duplicate ids in pool");
    *detected = liveval::detection_metric(vals, bad, k, pool).detected;
  });
}

} // extern "C"
