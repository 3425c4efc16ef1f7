#include "support.hpp"

#include <atomic>
#include <unistd.h>

namespace testing {

TempDir::TempDir(const std::string &tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("liveval-" + tag + "-" + std::to_string(::getpid()) + "-" +
           std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

liveval::Dataset scalar_regression(std::initializer_list<double> xs,
                                   std::initializer_list<double> ts) {
  liveval::Dataset ds;
  ds.features = liveval::Matrix(xs.size(), 1);
  ds.targets = liveval::Matrix(ts.size(), 1);
  std::size_t i = 0;
  for (double x : xs)
    ds.features(i++, 0) = x;
  i = 0;
  for (double t : ts)
    ds.targets(i++, 0) = t;
  ds.labels.assign(xs.size(), 0);
  ds.mask.assign(xs.size(), 0);
  for (std::size_t r = 0; r < xs.size(); ++r)
    ds.ids.push_back(r);
  ds.num_classes = 1;
  return ds;
}

} // namespace testing

#include <cmath>

namespace testing {

using namespace liveval;

double fd_gradient_error(const Model &model, std::span<const double> params,
                         std::span<const double> x, Target target, double h) {
  const RealVector g = model.per_sample_grad(params, x, target);
  RealVector fd(g.size());
  ParamVector p(params.begin(), params.end());
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double orig = p[k];
    p[k] = orig + h;
    const double up = model.sample_loss(p, x, target);
    p[k] = orig - h;
    const double down = model.sample_loss(p, x, target);
    p[k] = orig;
    fd[k] = (up - down) / (2 * h);
  }
  const double scale = std::max(norm2(g), norm2(fd));
  if (scale == 0.0)
    return 0.0;
  return norm2(subtract(g, fd)) / scale;
}

FuzzCase fuzz_case(const Model &model, Rng &rng, double scale) {
  FuzzCase c;
  c.params.resize(model.param_count());
  for (auto &p : c.params)
    p = rng.uniform(-scale, scale);
  c.x.resize(model.spec().input_dim());
  for (auto &v : c.x)
    v = rng.normal();
  const auto outputs = model.spec().output_dim();
  c.label = static_cast<int>(rng.below(outputs));
  if (model.spec().loss == LossKind::mse) {
    c.values.resize(outputs);
    for (auto &v : c.values)
      v = rng.normal();
  }
  return c;
}

Matrix linear_mse_hessian(const Dataset &ds, std::size_t outputs,
                          std::span<const std::size_t> rows) {
  const std::size_t f = ds.dim();
  const std::size_t d = outputs * f + outputs;
  // Gram matrix of the inputs augmented with a constant 1 for the bias.
  Matrix gram(f + 1, f + 1);
  for (auto r : rows) {
    const auto x = ds.x(r);
    for (std::size_t a = 0; a <= f; ++a)
      for (std::size_t b = 0; b <= f; ++b)
        gram(a, b) += (a < f ? x[a] : 1.0) * (b < f ? x[b] : 1.0);
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  auto index = [&](std::size_t c, std::size_t a) { return a < f ? c * f + a : outputs * f + c; };
  Matrix h(d, d);
  for (std::size_t c = 0; c < outputs; ++c)
    for (std::size_t a = 0; a <= f; ++a)
      for (std::size_t b = 0; b <= f; ++b)
        h(index(c, a), index(c, b)) = gram(a, b) * inv;
  return h;
}

RealVector dense_solve(Matrix a, RealVector b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(pivot, col)))
        pivot = r;
    if (pivot != col) {
      for (std::size_t k = 0; k < n; ++k)
        std::swap(a(col, k), a(pivot, k));
      std::swap(b[col], b[pivot]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double m = a(r, col) / a(col, col);
      for (std::size_t k = col; k < n; ++k)
        a(r, k) -= m * a(col, k);
      b[r] -= m * b[col];
    }
  }
  RealVector s(n);
  for (std::size_t i = n; i-- > 0;) {
    double acc = b[i];
    for (std::size_t k = i + 1; k < n; ++k)
      acc -= a(i, k) * s[k];
    s[i] = acc / a(i, i);
  }
  return s;
}

} // namespace testing

namespace testing {

namespace {

RealVector linear_mse_grad(const Dataset &ds, std::size_t row, std::span<const double> theta,
                           std::size_t outputs) {
  const std::size_t f = ds.dim();
  const auto x = ds.x(row);
  RealVector g(outputs * f + outputs, 0.0);
  for (std::size_t c = 0; c < outputs; ++c) {
    double z = theta[outputs * f + c];
    for (std::size_t a = 0; a < f; ++a)
      z += theta[c * f + a] * x[a];
    const double t = ds.targets.rows ? ds.targets(row, c)
                                     : (static_cast<std::size_t>(ds.labels[row]) == c ? 1.0 : 0.0);
    const double r = z - t;
    for (std::size_t a = 0; a < f; ++a)
      g[c * f + a] = r * x[a];
    g[outputs * f + c] = r;
  }
  return g;
}

} // namespace

std::map<SampleId, double> linear_mse_influence(const Dataset &train, const Dataset &test,
                                                std::span<const double> theta,
                                                std::size_t outputs, double damping) {
  std::vector<std::size_t> rows(train.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    rows[r] = r;
  Matrix h = linear_mse_hessian(train, outputs, rows);
  for (std::size_t i = 0; i < h.rows; ++i)
    h(i, i) += damping;
  RealVector g_test(h.rows, 0.0);
  for (std::size_t r = 0; r < test.size(); ++r) {
    const auto g = linear_mse_grad(test, r, theta, outputs);
    for (std::size_t k = 0; k < g.size(); ++k)
      g_test[k] += g[k] / static_cast<double>(test.size());
  }
  const RealVector s = dense_solve(h, g_test);
  std::map<SampleId, double> out;
  for (std::size_t r = 0; r < train.size(); ++r) {
    const auto g = linear_mse_grad(train, r, theta, outputs);
    double acc = 0;
    for (std::size_t k = 0; k < g.size(); ++k)
      acc += s[k] * g[k];
    out[train.ids[r]] = -acc;
  }
  return out;
}

} // namespace testing

#include <json.hpp>

namespace testing {

namespace {

using nlohmann::json;

bool type_matches(const json &v, const std::string &type) {
  if (type == "object")
    return v.is_object();
  if (type == "array")
    return v.is_array();
  if (type == "string")
    return v.is_string();
  if (type == "boolean")
    return v.is_boolean();
  if (type == "integer")
    return v.is_number_integer();
  if (type == "number")
    return v.is_number();
  if (type == "null")
    return v.is_null();
  return false;
}

std::string check(const json &schema, const json &v, const std::string &where) {
  if (schema.contains("type") && !type_matches(v, schema["type"].get<std::string>()))
    return where + ": expected " + schema["type"].get<std::string>();
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto &e : schema["enum"])
      found = found || e == v;
    if (!found)
      return where + ": value not in enum";
  }
  if (v.is_number()) {
    if (schema.contains("minimum") && v.get<double>() < schema["minimum"].get<double>())
      return where + ": below minimum";
    if (schema.contains("maximum") && v.get<double>() > schema["maximum"].get<double>())
      return where + ": above maximum";
  }
  if (v.is_object()) {
    for (const auto &key : schema.value("required", json::array()))
      if (!v.contains(key.get<std::string>()))
        return where + ": missing " + key.get<std::string>();
    const auto props = schema.value("properties", json::object());
    for (const auto &[key, child] : v.items()) {
      if (props.contains(key)) {
        if (auto err = check(props[key], child, where + "." + key); !err.empty())
          return err;
      } else if (schema.contains("additionalProperties") && !schema["additionalProperties"]) {
        return where + ": unexpected key " + key;
      }
    }
  }
  if (v.is_array()) {
    if (schema.contains("minItems") && v.size() < schema["minItems"].get<std::size_t>())
      return where + ": too few items";
    if (schema.contains("items"))
      for (std::size_t i = 0; i < v.size(); ++i)
        if (auto err = check(schema["items"], v[i], where + "[" + std::to_string(i) + "]");
            !err.empty())
          return err;
  }
  return {};
}

} // namespace

std::string schema_violation(const std::string &schema_text, const std::string &doc_text) {
  return check(json::parse(schema_text), json::parse(doc_text), "$");
}

} // namespace testing
