#include "liveval/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "liveval/error.hpp"
#include "format.hpp"

namespace liveval {

namespace {

std::vector<std::string> split_csv_line(const std::string &line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto &f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

std::optional<double> parse_double(const std::string &s) {
  if (s.empty())
    return std::nullopt;
  double v = 0.0;
  const char *first = s.data();
  if (*first == '+')
    ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    return std::nullopt;
  return v;
}

std::optional<std::uint64_t> parse_u64(const std::string &s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    return std::nullopt;
  return v;
}

std::uint32_t read_be32(std::istream &in, const std::string &what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char *>(b), 4))
    fail(ErrorKind::format, "idx: truncated header in " + what);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
         (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

} // namespace

void Dataset::validate() const {
  const std::size_t n = labels.size();
  require(features.rows == n && ids.size() == n && mask.size() == n,
          ErrorKind::consistency, "dataset: field lengths disagree");
  require(features.data.size() == features.rows * features.cols,
          ErrorKind::consistency, "dataset: feature storage size mismatch");
  for (int y : labels)
    require(y >= 0 && static_cast<std::size_t>(y) < num_classes,
            ErrorKind::consistency, "dataset: label out of range");
  std::set<SampleId> seen(ids.begin(), ids.end());
  require(seen.size() == n, ErrorKind::consistency, "dataset: duplicate sample id");
  if (!targets.data.empty())
    require(targets.rows == n, ErrorKind::consistency,
            "dataset: targets row count mismatch");
}

std::unordered_map<SampleId, std::size_t> Dataset::row_index() const {
  std::unordered_map<SampleId, std::size_t> out;
  out.reserve(ids.size());
  for (std::size_t r = 0; r < ids.size(); ++r)
    out.emplace(ids[r], r);
  return out;
}

std::size_t Dataset::corrupted_count() const noexcept {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
}

std::uint64_t Dataset::digest() const {
  std::uint64_t h = mix64(size()) ^ mix64(dim() + 17) ^ mix64(num_classes + 31);
  auto feed = [&h](std::uint64_t v) { h = mix64(h ^ v); };
  for (double v : features.data) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    feed(bits);
  }
  for (int y : labels)
    feed(static_cast<std::uint64_t>(y));
  for (SampleId id : ids)
    feed(id);
  for (auto m : mask)
    feed(m);
  for (double v : targets.data) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    feed(bits);
  }
  return h;
}

CsvSchema CsvSchema::native() {
  CsvSchema s;
  s.label_column = "label";
  s.id_column = "id";
  s.mask_column = "corrupted";
  s.standardize = false;
  return s;
}

ColumnStats fit_standardizer(const Matrix &features) {
  ColumnStats stats;
  stats.mean.assign(features.cols, 0.0);
  stats.stddev.assign(features.cols, 1.0);
  if (features.rows == 0)
    return stats;
  const double n = static_cast<double>(features.rows);
  for (std::size_t c = 0; c < features.cols; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < features.rows; ++r)
      s += features(r, c);
    const double mean = s / n;
    double ss = 0.0;
    for (std::size_t r = 0; r < features.rows; ++r) {
      const double d = features(r, c) - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / n);
    stats.mean[c] = mean;
    stats.stddev[c] = sd > 1e-12 ? sd : 1.0;
  }
  return stats;
}

void apply_standardizer(const ColumnStats &stats, Matrix &features) {
  require(stats.mean.size() == features.cols, ErrorKind::dimension,
          "standardizer: column count mismatch");
  for (std::size_t r = 0; r < features.rows; ++r)
    for (std::size_t c = 0; c < features.cols; ++c)
      features(r, c) = (features(r, c) - stats.mean[c]) / stats.stddev[c];
}

Dataset load_csv(const std::filesystem::path &path, const CsvSchema &schema) {
  std::ifstream in(path);
  if (!in)
    fail(ErrorKind::io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line).empty() ||
      line.find_first_not_of(" \t\r") == std::string::npos)
    fail(ErrorKind::parse, "csv: empty file " + path.string());
  const auto header = split_csv_line(line);

  auto column_of = [&](const std::string &name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      fail(ErrorKind::schema, "csv: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t label_col = column_of(schema.label_column);
  const std::optional<std::size_t> id_col =
      schema.id_column.empty() ? std::nullopt
                               : std::optional<std::size_t>(column_of(schema.id_column));
  const std::optional<std::size_t> mask_col =
      schema.mask_column.empty() ? std::nullopt
                                 : std::optional<std::size_t>(column_of(schema.mask_column));
  std::set<std::size_t> categorical;
  for (const auto &name : schema.categorical)
    categorical.insert(column_of(name));

  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != label_col && (!id_col || c != *id_col) && (!mask_col || c != *mask_col))
      feature_cols.push_back(c);

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      fail(ErrorKind::parse, "csv: row " + std::to_string(rows.size()) + " has " +
                                 std::to_string(fields.size()) + " fields, expected " +
                                 std::to_string(header.size()));
    rows.push_back(std::move(fields));
  }
  if (rows.empty())
    fail(ErrorKind::parse, "csv: no data rows in " + path.string());

  // Category vocabularies.
  std::map<std::size_t, std::vector<std::string>> vocab;
  for (std::size_t c : categorical) {
    std::set<std::string> values;
    for (const auto &r : rows)
      values.insert(r[c]);
    vocab[c] = {values.begin(), values.end()};
  }

  std::size_t width = 0;
  for (std::size_t c : feature_cols)
    width += categorical.count(c) ? vocab[c].size() : 1;

  Dataset ds;
  const std::size_t n = rows.size();
  ds.features = Matrix(n, width);
  ds.labels.resize(n);
  ds.ids.resize(n);
  ds.mask.assign(n, 0);

  // Labels: integers when every value is a non-negative integer, otherwise
  // sorted string vocabulary.
  bool integer_labels = true;
  for (const auto &r : rows)
    if (!parse_u64(r[label_col]))
      integer_labels = false;
  std::map<std::string, int> label_vocab;
  if (!integer_labels) {
    for (const auto &r : rows)
      label_vocab.emplace(r[label_col], 0);
    int k = 0;
    for (auto &[_, v] : label_vocab)
      v = k++;
  }

  int max_label = -1;
  for (std::size_t i = 0; i < n; ++i) {
    const auto &r = rows[i];
    std::size_t out_c = 0;
    for (std::size_t c : feature_cols) {
      if (categorical.count(c)) {
        const auto &v = vocab[c];
        const auto pos = std::lower_bound(v.begin(), v.end(), r[c]) - v.begin();
        ds.features(i, out_c + static_cast<std::size_t>(pos)) = 1.0;
        out_c += v.size();
      } else {
        auto value = parse_double(r[c]);
        if (!value)
          fail(ErrorKind::parse, "csv: non-numeric cell '" + r[c] + "' at row " +
                                     std::to_string(i) + ", column '" + header[c] + "'");
        ds.features(i, out_c++) = *value;
      }
    }
    if (integer_labels) {
      const auto y = *parse_u64(r[label_col]);
      if (y > 1'000'000)
        fail(ErrorKind::parse, "csv: label too large at row " + std::to_string(i));
      ds.labels[i] = static_cast<int>(y);
    } else {
      ds.labels[i] = label_vocab.at(r[label_col]);
    }
    max_label = std::max(max_label, ds.labels[i]);
    if (id_col) {
      auto id = parse_u64(r[*id_col]);
      if (!id)
        fail(ErrorKind::parse, "csv: bad id at row " + std::to_string(i));
      ds.ids[i] = *id;
    } else {
      ds.ids[i] = i;
    }
    if (mask_col) {
      auto m = parse_u64(r[*mask_col]);
      if (!m || *m > 1)
        fail(ErrorKind::parse, "csv: bad mask value at row " + std::to_string(i));
      ds.mask[i] = static_cast<std::uint8_t>(*m);
    }
  }
  ds.num_classes = static_cast<std::size_t>(max_label + 1);
  if (ds.num_classes < 2)
    ds.num_classes = 2;

  if (schema.standardize)
    apply_standardizer(fit_standardizer(ds.features), ds.features);
  ds.validate();
  return ds;
}

void save_csv(const Dataset &ds, const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out)
    fail(ErrorKind::io, "cannot write " + path.string());
  out << "id";
  for (std::size_t c = 0; c < ds.dim(); ++c)
    out << ",f" << c;
  out << ",label,corrupted\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.ids[i];
    for (double v : ds.x(i))
      out << ',' << format_double(v);
    out << ',' << ds.labels[i] << ',' << int(ds.mask[i]) << '\n';
  }
  if (!out)
    fail(ErrorKind::io, "write failed: " + path.string());
}

Dataset load_idx(const std::filesystem::path &images_path,
                 const std::filesystem::path &labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img)
    fail(ErrorKind::io, "cannot open " + images_path.string());
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab)
    fail(ErrorKind::io, "cannot open " + labels_path.string());

  if (read_be32(img, images_path.string()) != 0x00000803)
    fail(ErrorKind::format, "idx: bad image magic in " + images_path.string());
  const std::uint32_t n_img = read_be32(img, images_path.string());
  const std::uint32_t h = read_be32(img, images_path.string());
  const std::uint32_t w = read_be32(img, images_path.string());
  if (read_be32(lab, labels_path.string()) != 0x00000801)
    fail(ErrorKind::format, "idx: bad label magic in " + labels_path.string());
  const std::uint32_t n_lab = read_be32(lab, labels_path.string());
  if (n_img != n_lab)
    fail(ErrorKind::consistency, "idx: " + std::to_string(n_img) + " images but " +
                                     std::to_string(n_lab) + " labels");

  const std::size_t f = std::size_t{h} * w;
  Dataset ds;
  ds.features = Matrix(n_img, f);
  ds.labels.resize(n_img);
  ds.ids.resize(n_img);
  ds.mask.assign(n_img, 0);
  std::vector<unsigned char> buf(f);
  int max_label = 0;
  for (std::size_t i = 0; i < n_img; ++i) {
    if (!img.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(f)))
      fail(ErrorKind::format, "idx: truncated image data at image " + std::to_string(i));
    auto row = ds.features.row(i);
    for (std::size_t j = 0; j < f; ++j)
      row[j] = buf[j] / 255.0;
    char y;
    if (!lab.get(y))
      fail(ErrorKind::format, "idx: truncated label data at label " + std::to_string(i));
    ds.labels[i] = static_cast<unsigned char>(y);
    max_label = std::max(max_label, ds.labels[i]);
    ds.ids[i] = i;
  }
  ds.num_classes = std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);
  return ds;
}

Dataset synth_gaussian_blobs(RngState state, const BlobOptions &opts) {
  require(opts.n_per_class > 0 && opts.n_classes > 0 && opts.dim > 0,
          ErrorKind::parameter, "blobs: counts must be positive");
  require(opts.separation > 0.0, ErrorKind::parameter, "blobs: separation must be > 0");
  require(opts.dim >= opts.n_classes, ErrorKind::parameter,
          "blobs: dim must be >= n_classes for axis centring");
  require(opts.active_fraction > 0.0 && opts.active_fraction <= 1.0,
          ErrorKind::parameter, "blobs: active_fraction must be in (0, 1]");
  Rng rng(state);
  const std::size_t n = opts.n_per_class * opts.n_classes;
  Dataset ds;
  ds.features = Matrix(n, opts.dim);
  ds.labels.resize(n);
  ds.ids.resize(n);
  ds.mask.assign(n, 0);
  ds.num_classes = std::max<std::size_t>(2, opts.n_classes);
  std::size_t i = 0;
  for (std::size_t c = 0; c < opts.n_classes; ++c) {
    for (std::size_t k = 0; k < opts.n_per_class; ++k, ++i) {
      auto row = ds.features.row(i);
      for (std::size_t j = 0; j < opts.dim; ++j) {
        const double centre = j == c ? opts.separation : 0.0;
        const double noise = rng.normal();
        const bool active = opts.active_fraction >= 1.0 || j == c ||
                            rng.uniform() < opts.active_fraction;
        row[j] = active ? centre + noise : 0.0;
      }
      ds.labels[i] = static_cast<int>(c);
      ds.ids[i] = i;
    }
  }
  return ds;
}

const char *to_string(CorruptionKind kind) noexcept {
  return kind == CorruptionKind::label_flip ? "label-flip" : "feature-noise";
}

CorruptionKind corruption_kind_from_string(const std::string &s) {
  if (s == "label-flip")
    return CorruptionKind::label_flip;
  if (s == "feature-noise")
    return CorruptionKind::feature_noise;
  fail(ErrorKind::config, "unknown corruption kind '" + s + "'");
}

Dataset corrupt(const Dataset &ds, const CorruptionSpec &spec,
                std::vector<CorruptionEntry> *manifest) {
  require(spec.sigma >= 0.0, ErrorKind::parameter, "corrupt: sigma must be >= 0");
  if (spec.kind == CorruptionKind::label_flip) {
    require(spec.source_class != spec.target_class, ErrorKind::parameter,
            "corrupt: source and target class must differ");
    require(spec.target_class >= 0 &&
                static_cast<std::size_t>(spec.target_class) < ds.num_classes,
            ErrorKind::parameter, "corrupt: target class out of range");
  }
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.mask[i])
      continue;
    if (spec.kind == CorruptionKind::label_flip && ds.labels[i] != spec.source_class)
      continue;
    eligible.push_back(i);
  }
  require(eligible.size() >= spec.count, ErrorKind::parameter,
          "corrupt: only " + std::to_string(eligible.size()) +
              " eligible samples for k=" + std::to_string(spec.count));

  Rng rng(spec.rng);
  // Partial Fisher-Yates: first `count` entries are a uniform sample.
  for (std::size_t i = 0; i < spec.count; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
  }
  std::vector<std::size_t> chosen(eligible.begin(),
                                  eligible.begin() + static_cast<std::ptrdiff_t>(spec.count));
  std::sort(chosen.begin(), chosen.end());

  Dataset out = ds;
  Rng noise = rng.split(1);
  for (std::size_t row : chosen) {
    if (manifest)
      manifest->push_back({ds.ids[row], spec.kind, ds.labels[row]});
    out.mask[row] = 1;
    if (spec.kind == CorruptionKind::label_flip) {
      out.labels[row] = spec.target_class;
    } else {
      for (double &v : out.features.row(row))
        v += spec.sigma * noise.normal();
    }
  }
  return out;
}

std::string corruption_manifest_json(const std::vector<CorruptionEntry> &entries) {
  nlohmann::ordered_json j;
  j["entries"] = nlohmann::ordered_json::array();
  for (const auto &e : entries) {
    nlohmann::ordered_json item;
    item["id"] = e.id;
    item["kind"] = to_string(e.kind);
    item["original_label"] = e.original_label;
    j["entries"].push_back(item);
  }
  return j.dump(2);
}

std::vector<CorruptionEntry> parse_corruption_manifest(const std::string &text) {
  std::vector<CorruptionEntry> out;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto &item : j.at("entries"))
      out.push_back({item.at("id").get<SampleId>(),
                     corruption_kind_from_string(item.at("kind").get<std::string>()),
                     item.at("original_label").get<int>()});
  } catch (const nlohmann::json::exception &e) {
    fail(ErrorKind::format, std::string("corruption manifest: ") + e.what());
  }
  return out;
}

} // namespace liveval
