#include <doctest.h>

#include <cmath>
#include <set>

#include "liveval/dataio.hpp"
#include "liveval/model.hpp"
#include "liveval/trainer.hpp"
#include "support.hpp"

using namespace liveval;
using testing::TempDir;
using testing::throws_kind;
using testing::write_file;

namespace {

void write_be32(std::string &s, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8)
    s.push_back(static_cast<char>((v >> shift) & 0xff));
}

std::string idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                       std::uint8_t fill) {
  std::string s;
  write_be32(s, 0x803);
  write_be32(s, n);
  write_be32(s, rows);
  write_be32(s, cols);
  s.append(std::size_t{n} * rows * cols, static_cast<char>(fill));
  return s;
}

std::string idx_labels(std::initializer_list<std::uint8_t> labels) {
  std::string s;
  write_be32(s, 0x801);
  write_be32(s, static_cast<std::uint32_t>(labels.size()));
  for (auto l : labels)
    s.push_back(static_cast<char>(l));
  return s;
}

Dataset blobs(std::uint64_t seed, std::size_t per_class = 50, std::size_t classes = 2,
              std::size_t dim = 4) {
  return synth_gaussian_blobs({seed, streams::data}, {per_class, classes, dim, 3.0, 1.0});
}

} // namespace

TEST_CASE("load_csv basic shape") {
  TempDir dir("csv");
  write_file(dir / "a.csv", "x1,x2,label\n1,2,0\n3,4,1\n5,6,0\n");
  const auto ds = load_csv(dir / "a.csv", CsvSchema{});
  CHECK(ds.size() == 3);
  CHECK(ds.dim() == 2);
  CHECK(ds.num_classes == 2);
  CHECK(ds.corrupted_count() == 0);
  CHECK(ds.ids == std::vector<SampleId>{0, 1, 2});
  // Standardised columns: zero mean, unit population variance.
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0, v = 0;
    for (std::size_t r = 0; r < 3; ++r)
      m += ds.features(r, c);
    m /= 3;
    for (std::size_t r = 0; r < 3; ++r)
      v += (ds.features(r, c) - m) * (ds.features(r, c) - m);
    CHECK(m == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(v / 3 == doctest::Approx(1.0));
  }
}

TEST_CASE("load_csv errors") {
  TempDir dir("csv-err");
  write_file(dir / "empty.csv", "");
  CHECK(throws_kind(ErrorKind::parse, [&] { load_csv(dir / "empty.csv", {}); }));

  write_file(dir / "nolabel.csv", "a,b\n1,2\n");
  CHECK(throws_kind(ErrorKind::schema, [&] { load_csv(dir / "nolabel.csv", {}); }));

  write_file(dir / "bad.csv", "a,label\n1,0\nxyz,1\n");
  try {
    load_csv(dir / "bad.csv", {});
    FAIL("expected parse error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::parse);
    CHECK(std::string(e.what()).find("row 1") != std::string::npos);
  }

  CHECK(throws_kind(ErrorKind::io, [&] { load_csv(dir / "missing.csv", {}); }));
}

TEST_CASE("load_csv constant column becomes zeros") {
  TempDir dir("csv-const");
  write_file(dir / "c.csv", "a,b,label\n7,1,0\n7,2,1\n7,3,1\n");
  const auto ds = load_csv(dir / "c.csv", {});
  for (std::size_t r = 0; r < 3; ++r)
    CHECK(ds.features(r, 0) == 0.0);
}

TEST_CASE("load_csv categorical and string labels") {
  TempDir dir("csv-cat");
  write_file(dir / "c.csv",
             "age,work,income\n30,private,>50K\n40,gov,<=50K\n50,\"self, inc\",>50K\n");
  CsvSchema schema;
  schema.label_column = "income";
  schema.categorical = {"work"};
  schema.standardize = false;
  const auto ds = load_csv(dir / "c.csv", schema);
  CHECK(ds.dim() == 4); // age + 3 categories
  // Sorted vocabulary: gov, private, "self, inc".
  CHECK(ds.features(0, 0) == 30);
  CHECK(ds.features(0, 2) == 1);
  CHECK(ds.features(1, 1) == 1);
  CHECK(ds.features(2, 3) == 1);
  // Label vocabulary sorted: "<=50K" -> 0, ">50K" -> 1.
  CHECK(ds.labels == std::vector<int>{1, 0, 1});
}

TEST_CASE("native csv round trips bit-exactly") {
  TempDir dir("csv-rt");
  auto ds = blobs(3, 20, 3, 5);
  ds.features(0, 0) = 0.1 + 0.2; // awkward binary expansion
  ds.features(1, 1) = -1e-300;
  ds.features(2, 2) = 123456789.123456789;
  CorruptionSpec spec;
  spec.kind = CorruptionKind::label_flip;
  spec.count = 4;
  spec.source_class = 0;
  spec.target_class = 2;
  ds = corrupt(ds, spec);
  save_csv(ds, dir / "d.csv");
  const auto back = load_csv(dir / "d.csv", CsvSchema::native());
  CHECK(back == ds);
  CHECK(back.digest() == ds.digest());

  save_csv(back, dir / "d2.csv");
  CHECK(testing::read_file(dir / "d.csv") == testing::read_file(dir / "d2.csv"));
}

TEST_CASE("load_idx") {
  TempDir dir("idx");
  write_file(dir / "img", idx_images(3, 28, 28, 255));
  write_file(dir / "lab", idx_labels({9, 0, 3}));
  const auto ds = load_idx(dir / "img", dir / "lab");
  CHECK(ds.dim() == 784);
  CHECK(ds.size() == 3);
  CHECK(ds.labels[0] == 9);
  CHECK(ds.num_classes == 10);
  CHECK(ds.features(1, 500) == 1.0);

  write_file(dir / "short", idx_images(3, 28, 28, 0).substr(0, 100));
  CHECK(throws_kind(ErrorKind::format, [&] { load_idx(dir / "short", dir / "lab"); }));

  auto bad_magic = idx_images(3, 2, 2, 0);
  bad_magic[3] = 0x04;
  write_file(dir / "magic", bad_magic);
  CHECK(throws_kind(ErrorKind::format, [&] { load_idx(dir / "magic", dir / "lab"); }));

  write_file(dir / "img2", idx_images(2, 2, 2, 0));
  CHECK(throws_kind(ErrorKind::consistency, [&] { load_idx(dir / "img2", dir / "lab"); }));
}

TEST_CASE("synth_gaussian_blobs") {
  const auto a = blobs(5);
  CHECK(a.size() == 100);
  CHECK(a == blobs(5));
  CHECK_FALSE(a == blobs(6));
  std::set<SampleId> ids(a.ids.begin(), a.ids.end());
  CHECK(ids.size() == a.size());

  CHECK(throws_kind(ErrorKind::parameter, [] {
    synth_gaussian_blobs({1, 1}, {10, 5, 3, 3.0, 1.0});
  }));
  CHECK(throws_kind(ErrorKind::parameter, [] {
    synth_gaussian_blobs({1, 1}, {10, 2, 3, 0.0, 1.0});
  }));
}

TEST_CASE("widely separated blobs are fit exactly") {
  const auto ds = synth_gaussian_blobs({2, streams::data}, {50, 3, 3, 40.0, 1.0});
  Model model({{3, 3}, LossKind::cross_entropy, true});
  TrainConfig cfg;
  cfg.total_steps = 300;
  cfg.batch_size = 30;
  cfg.lr.eta = 0.05;
  const auto store = run_training(ds, model, cfg);
  CHECK(model.accuracy(store.final_params, ds) == 1.0);
}

TEST_CASE("corrupt label flip") {
  const auto ds = blobs(7, 100, 2, 4);
  std::vector<CorruptionEntry> manifest;
  CorruptionSpec spec;
  spec.count = 40;
  spec.source_class = 1;
  spec.target_class = 0;
  spec.rng = {7, streams::corrupt};
  const auto out = corrupt(ds, spec, &manifest);
  CHECK(out.corrupted_count() == 40);
  CHECK(manifest.size() == 40);
  CHECK(ds.corrupted_count() == 0); // input untouched
  CHECK(out.ids == ds.ids);
  CHECK(out.features == ds.features);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    if (out.mask[r]) {
      CHECK(ds.labels[r] == 1);
      CHECK(out.labels[r] == 0);
    } else {
      CHECK(out.labels[r] == ds.labels[r]);
    }
  }
  for (const auto &e : manifest)
    CHECK(e.original_label == 1);

  CHECK(parse_corruption_manifest(corruption_manifest_json(manifest)) == manifest);
}

TEST_CASE("corrupt k=0 is identity") {
  const auto ds = blobs(1);
  CorruptionSpec spec;
  spec.count = 0;
  spec.source_class = 0;
  spec.target_class = 1;
  CHECK(corrupt(ds, spec) == ds);
}

TEST_CASE("corrupt feature noise") {
  // 30 rows x 10 features at sigma 5: pooled sample std falls in
  // [4.03, 6.03] with probability 1 - 1e-6.
  const auto ds = blobs(9, 50, 2, 10);
  CorruptionSpec spec;
  spec.kind = CorruptionKind::feature_noise;
  spec.count = 30;
  spec.sigma = 5.0;
  spec.rng = {9, streams::corrupt};
  const auto out = corrupt(ds, spec);
  std::size_t differing = 0;
  double ss = 0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < ds.size(); ++r) {
    bool differs = false;
    for (std::size_t c = 0; c < ds.dim(); ++c) {
      const double d = out.features(r, c) - ds.features(r, c);
      differs = differs || d != 0.0;
      if (out.mask[r]) {
        ss += d * d;
        ++n;
      }
    }
    differing += differs;
    CHECK(static_cast<bool>(out.mask[r]) == differs);
  }
  CHECK(differing == 30);
  CHECK(out.labels == ds.labels);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  CHECK(sd > 4.03);
  CHECK(sd < 6.03);
}

TEST_CASE("corrupt composes with disjoint masks") {
  const auto ds = blobs(4, 60, 2, 4);
  CorruptionSpec flip;
  flip.count = 15;
  flip.source_class = 0;
  flip.target_class = 1;
  flip.rng = {1, streams::corrupt};
  CorruptionSpec noise;
  noise.kind = CorruptionKind::feature_noise;
  noise.count = 20;
  noise.rng = {2, streams::corrupt};
  const auto once = corrupt(ds, flip);
  const auto twice = corrupt(once, noise);
  CHECK(twice.corrupted_count() == 35);
  CHECK(twice.size() == ds.size());
  CHECK(twice.dim() == ds.dim());
  CHECK(twice.num_classes == ds.num_classes);
  CHECK(twice.ids == ds.ids);
}

TEST_CASE("corrupt errors") {
  const auto ds = blobs(4, 10, 2, 4);
  CorruptionSpec spec;
  spec.count = 11;
  spec.source_class = 0;
  spec.target_class = 1;
  CHECK(throws_kind(ErrorKind::parameter, [&] { corrupt(ds, spec); }));
  spec.count = 1;
  spec.target_class = 0;
  CHECK(throws_kind(ErrorKind::parameter, [&] { corrupt(ds, spec); }));
  spec.kind = CorruptionKind::feature_noise;
  spec.sigma = -1;
  CHECK(throws_kind(ErrorKind::parameter, [&] { corrupt(ds, spec); }));
}

TEST_CASE("dataset validate catches broken invariants") {
  auto ds = blobs(1, 5, 2, 2);
  ds.validate();
  auto dup = ds;
  dup.ids[1] = dup.ids[0];
  CHECK(throws_kind(ErrorKind::consistency, [&] { dup.validate(); }));
  auto lab = ds;
  lab.labels[0] = 5;
  CHECK(throws_kind(ErrorKind::consistency, [&] { lab.validate(); }));
  auto shortmask = ds;
  shortmask.mask.pop_back();
  CHECK(throws_kind(ErrorKind::consistency, [&] { shortmask.validate(); }));
}
