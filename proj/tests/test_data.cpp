#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "cds/data.hpp"
#include "cds/layers/invariant.hpp"

using namespace cds;
namespace fs = std::filesystem;

namespace {

std::vector<unsigned char> cifar_bytes(int records, int label_bytes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<unsigned char> out;
  for (int r = 0; r < records; ++r) {
    for (int l = 0; l < label_bytes; ++l) out.push_back(static_cast<unsigned char>(rng.below(10)));
    for (int p = 0; p < 3072; ++p) out.push_back(static_cast<unsigned char>(rng.below(256)));
  }
  return out;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& b) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

DatasetHandle flat_handle(Index n, std::uint64_t seed = 0) {
  ComplexTensor<double> samples(Shape{n, 1, 1, 1});
  std::vector<int> labels;
  for (Index i = 0; i < n; ++i) {
    samples.re()[i] = static_cast<double>(i);
    labels.push_back(static_cast<int>(i % 10));
  }
  DatasetHandle h{std::make_shared<ComplexStore>(samples, labels, 10), {}, seed, Encoding::native, "flat"};
  for (Index i = 0; i < n; ++i) h.indices.push_back(i);
  return h;
}

}  // namespace

TEST(Cifar, RecordParsingIsByteExact) {
  std::vector<unsigned char> bytes(2 * 3073);
  bytes[0] = 7;
  for (int p = 0; p < 3072; ++p) bytes[1 + p] = static_cast<unsigned char>(p % 256);
  bytes[3073] = 2;
  RgbStore store(32, 32, 10);
  parse_cifar_records(bytes, 1, 10, store, "mem");
  ASSERT_EQ(store.size(), 2);
  EXPECT_EQ(store.label(0), 7);
  EXPECT_EQ(store.label(1), 2);
  const RgbImage img = store.image(0);
  ASSERT_EQ(img.shape, (Shape{3, 32, 32}));
  for (int p = 0; p < 3072; ++p) ASSERT_DOUBLE_EQ(img[p], (p % 256) / 255.0);
}

TEST(Cifar, FullBatchFileSize) {
  auto bytes = cifar_bytes(10000, 1, 1);
  ASSERT_EQ(bytes.size(), 30730000u);
  RgbStore store(32, 32, 10);
  parse_cifar_records(bytes, 1, 10, store, "data_batch_1.bin");
  EXPECT_EQ(store.size(), 10000);
}

TEST(Cifar, MalformedInput) {
  RgbStore store(32, 32, 10);
  EXPECT_THROW(parse_cifar_records(std::vector<unsigned char>(3072), 1, 10, store, "short"), FormatError);
  std::vector<unsigned char> bad(3073);
  bad[0] = 12;
  EXPECT_THROW(parse_cifar_records(bad, 1, 10, store, "label"), FormatError);
}

TEST(Cifar, Cifar100UsesFineLabel) {
  std::vector<unsigned char> bytes(3074);
  bytes[0] = 3;
  bytes[1] = 88;
  RgbStore store(32, 32, 100);
  parse_cifar_records(bytes, 2, 100, store, "mem");
  EXPECT_EQ(store.label(0), 88);
}

TEST(Cifar, DirectoryLoadAndSplits) {
  TempDir dir("cds_test_cifar");
  for (int b = 1; b <= 5; ++b) write_bytes(dir.path / ("data_batch_" + std::to_string(b) + ".bin"), cifar_bytes(20, 1, b));
  write_bytes(dir.path / "test_batch.bin", cifar_bytes(10, 1, 9));
  auto a = load_cifar10_bin(dir.path, 3);
  EXPECT_EQ(a.train.size(), 90);
  EXPECT_EQ(a.val.size(), 10);
  EXPECT_EQ(a.test.size(), 10);
  EXPECT_EQ(a.train.channels(), 2);
  EXPECT_EQ(a.val.indices.front(), 90);

  auto b = load_cifar10_bin(dir.path, 3);
  BatchStream<double> sa(a.train, 16, 2), sb(b.train, 16, 2);
  while (sa.has_next()) {
    auto x = sa.next(), y = sb.next();
    ASSERT_EQ(x.labels, y.labels);
    ASSERT_EQ(max_abs_diff(x.inputs, y.inputs), 0);
  }
  fs::remove(dir.path / "test_batch.bin");
  EXPECT_THROW(load_cifar10_bin(dir.path), FormatError);
}

TEST(Batches, Arithmetic) {
  auto h = flat_handle(45000);
  BatchStream<double> s(h, 256, 0);
  EXPECT_EQ(s.num_batches(), 176);
  EXPECT_EQ(s.batch(175).labels.size(), 200u);
  EXPECT_EQ(s.batch(0).inputs.shape(), (Shape{256, 1, 1, 1}));
  EXPECT_EQ(BatchStream<double>(h, 1, 0).num_batches(), 45000);
}

TEST(Batches, EpochCoversEveryItemOnce) {
  auto h = flat_handle(1000, 5);
  BatchStream<float> s(h, 64, 3);
  std::multiset<int> seen;
  while (s.has_next()) {
    auto b = s.next();
    for (Index i = 0; i < b.inputs.dim(0); ++i) seen.insert(static_cast<int>(b.inputs.re()[i]));
  }
  ASSERT_EQ(seen.size(), 1000u);
  EXPECT_EQ(std::set<int>(seen.begin(), seen.end()).size(), 1000u);
}

TEST(Batches, EpochPermutations) {
  auto p0 = epoch_permutation(500, 11, 0);
  auto p1 = epoch_permutation(500, 11, 1);
  EXPECT_NE(p0, p1);
  EXPECT_EQ(p0, epoch_permutation(500, 11, 0));
  EXPECT_EQ(p1, epoch_permutation(500, 11, 1));
  EXPECT_NE(p0, epoch_permutation(500, 12, 0));
  std::vector<Index> sorted = p0;
  std::sort(sorted.begin(), sorted.end());
  for (Index i = 0; i < 500; ++i) ASSERT_EQ(sorted[static_cast<std::size_t>(i)], i);
}

TEST(Batches, UnshuffledOrder) {
  auto h = flat_handle(10);
  BatchStream<double> s(h, 4, 0, false);
  auto b = s.batch(1);
  EXPECT_EQ(b.inputs.re()[0], 4);
  EXPECT_EQ(b.labels, (std::vector<int>{4, 5, 6, 7}));
}

TEST(Synth, NoiselessUnscaledEqualsTemplate) {
  Rng rng(1);
  SynthOptions o;
  o.per_class = 3;
  o.size = 8;
  o.noise = 0;
  o.phase_max = 0;
  o.logmag = 0;
  auto d = synth_complex_dataset(rng, o);
  const Index per = 2 * 8 * 8;
  for (Index k = 0; k < d.handle.size(); ++k) {
    auto x = d.handle.sample(k);
    const int c = d.handle.label(k);
    for (Index j = 0; j < per; ++j) ASSERT_EQ(x[j], d.templates[c * per + j]);
  }
}

TEST(Synth, SeedReproducible) {
  SynthOptions o;
  o.per_class = 5;
  o.size = 6;
  Rng a(4), b(4), c(5);
  auto x = synth_complex_dataset(a, o), y = synth_complex_dataset(b, o), z = synth_complex_dataset(c, o);
  auto& sx = static_cast<const ComplexStore&>(*x.handle.store).samples();
  auto& sy = static_cast<const ComplexStore&>(*y.handle.store).samples();
  auto& sz = static_cast<const ComplexStore&>(*z.handle.store).samples();
  EXPECT_EQ(max_abs_diff(sx, sy), 0);
  EXPECT_GT(max_abs_diff(sx, sz), 0);
}

TEST(Synth, NearestTemplateByDivisionIsPerfectWithoutNoise) {
  // sample / template is the constant scale s for the right class only
  Rng rng(6);
  SynthOptions o;
  o.per_class = 20;
  o.size = 8;
  o.noise = 0;
  auto d = synth_complex_dataset(rng, o);
  const Index per = 2 * 8 * 8;
  int correct = 0;
  for (Index k = 0; k < d.handle.size(); ++k) {
    auto x = d.handle.sample(k).reshaped({per});
    int best = -1;
    double best_spread = 1e300;
    for (int c = 0; c < o.classes; ++c) {
      ComplexTensor<double> t(Shape{per});
      t.re() = d.templates.re().segment(c * per, per);
      t.im() = d.templates.im().segment(c * per, per);
      auto q = division_layer(x, t, 0.0);
      const std::complex<double> mean(q.re().mean(), q.im().mean());
      const double spread = ((q.re() - mean.real()).square() + (q.im() - mean.imag()).square()).mean();
      if (spread < best_spread) best_spread = spread, best = c;
    }
    correct += best == d.handle.label(k);
  }
  EXPECT_EQ(correct, d.handle.size());
}

TEST(Synth, TemplatesHaveUnitMeanSquare) {
  Rng rng(7);
  SynthOptions o;
  o.per_class = 1;
  auto d = synth_complex_dataset(rng, o);
  EXPECT_NEAR((d.templates.re().square() + d.templates.im().square()).mean(), 1, 0.02);
}

TEST(Splits, PerClassAndSubset) {
  Rng rng(8);
  SynthOptions o;
  o.per_class = 10;
  o.size = 4;
  auto d = synth_complex_dataset(rng, o);
  auto [train, val] = split_per_class(d.handle, 3);
  EXPECT_EQ(train.size(), 70);
  EXPECT_EQ(val.size(), 30);
  std::vector<int> counts(10);
  for (Index k = 0; k < val.size(); ++k) ++counts[static_cast<std::size_t>(val.label(k))];
  for (int c : counts) EXPECT_EQ(c, 3);
  std::set<Index> all(train.indices.begin(), train.indices.end());
  for (Index i : val.indices) EXPECT_FALSE(all.count(i));

  auto s1 = subset(train, 25, 1), s2 = subset(train, 25, 1), s3 = subset(train, 25, 2);
  EXPECT_EQ(s1.size(), 25);
  EXPECT_EQ(s1.indices, s2.indices);
  EXPECT_NE(s1.indices, s3.indices);
}

TEST(Splits, SaveAndLoadDataset) {
  TempDir dir("cds_test_dataset");
  Rng rng(9);
  SynthOptions o;
  o.per_class = 4;
  o.size = 4;
  o.classes = 3;
  auto d = synth_complex_dataset(rng, o);
  save_dataset(d.handle, dir.path);
  auto back = load_dataset(dir.path);
  ASSERT_EQ(back.size(), d.handle.size());
  EXPECT_EQ(back.num_classes(), 3);
  for (Index k = 0; k < back.size(); ++k) {
    EXPECT_EQ(back.label(k), d.handle.label(k));
    EXPECT_EQ(max_abs_diff(back.sample(k), d.handle.sample(k)), 0);
  }
}
