#ifndef CDS_DATA_HPP
#define CDS_DATA_HPP

#include <cstdint>
#include <filesystem>
#include <memory>

#include "cds/encodings.hpp"

namespace cds {

template <typename Scalar>
struct LabeledBatch {
  ComplexTensor<Scalar> inputs;  // [N,C,H,W]
  std::vector<int> labels;
  Encoding encoding = Encoding::native;
};

/// Backing store of samples addressed by index.
class SampleStore {
 public:
  virtual ~SampleStore() = default;
  virtual Index size() const = 0;
  virtual int label(Index i) const = 0;
  virtual int num_classes() const = 0;
  virtual Index height() const = 0;
  virtual Index width() const = 0;
  virtual Index channels(Encoding e) const = 0;
  /// Writes sample i, encoded, into C*H*W consecutive slots of re/im.
  virtual void write(Index i, Encoding e, double* re, double* im) const = 0;
  virtual std::string describe() const = 0;
};

/// Raw 8-bit RGB images (CIFAR style), encoded on access.
class RgbStore : public SampleStore {
 public:
  RgbStore(Index height, Index width, int classes) : h_(height), w_(width), classes_(classes) {}

  void add(const unsigned char* rgb_planes, int label);

  Index size() const override { return static_cast<Index>(labels_.size()); }
  int label(Index i) const override { return labels_.at(static_cast<std::size_t>(i)); }
  int num_classes() const override { return classes_; }
  Index height() const override { return h_; }
  Index width() const override { return w_; }
  Index channels(Encoding e) const override { return encoded_channels(e); }
  void write(Index i, Encoding e, double* re, double* im) const override;
  std::string describe() const override { return "rgb"; }

  RgbImage image(Index i) const;

 private:
  Index h_, w_;
  int classes_;
  std::vector<unsigned char> pixels_;
  std::vector<int> labels_;
};

/// Already complex-valued samples; only the native encoding applies.
class ComplexStore : public SampleStore {
 public:
  ComplexStore(ComplexTensor<double> samples, std::vector<int> labels, int classes);

  Index size() const override { return samples_.dim(0); }
  int label(Index i) const override { return labels_.at(static_cast<std::size_t>(i)); }
  int num_classes() const override { return classes_; }
  Index height() const override { return samples_.dim(2); }
  Index width() const override { return samples_.dim(3); }
  Index channels(Encoding) const override { return samples_.dim(1); }
  void write(Index i, Encoding e, double* re, double* im) const override;
  std::string describe() const override { return "complex"; }

  const ComplexTensor<double>& samples() const { return samples_; }
  const std::vector<int>& labels() const { return labels_; }

 private:
  ComplexTensor<double> samples_;
  std::vector<int> labels_;
  int classes_;
};

/// A split of a store: which indices, how they are encoded, and the seed
/// for per-epoch shuffles.
struct DatasetHandle {
  std::shared_ptr<const SampleStore> store;
  std::vector<Index> indices;
  std::uint64_t seed = 0;
  Encoding encoding = Encoding::native;
  std::string name;

  Index size() const { return static_cast<Index>(indices.size()); }
  int label(Index k) const { return store->label(indices.at(static_cast<std::size_t>(k))); }
  Index channels() const { return store->channels(encoding); }
  int num_classes() const { return store->num_classes(); }
  /// Sample k (position within this split) as [C,H,W].
  ComplexTensor<double> sample(Index k) const;
};

struct CifarSplits {
  DatasetHandle train, val, test;
};

/// Parses CIFAR binary records: `label_bytes` label bytes (the last one is
/// used) followed by 1024 R, 1024 G, 1024 B bytes.
void parse_cifar_records(const std::vector<unsigned char>& bytes, int label_bytes, int classes,
                         RgbStore& into, const std::string& source);

/// data_batch_{1..5}.bin + test_batch.bin. Train = first 45000 of the
/// training records, val = last 5000 (the tail of batch 5), test = 10000.
CifarSplits load_cifar10_bin(const std::filesystem::path& dir, std::uint64_t seed = 0,
                             Encoding encoding = Encoding::lab_complex);

/// train.bin + test.bin with (coarse, fine) label bytes; fine labels.
CifarSplits load_cifar100_bin(const std::filesystem::path& dir, std::uint64_t seed = 0,
                              Encoding encoding = Encoding::lab_complex);

struct SynthOptions {
  int classes = 10;
  Index per_class = 100;
  Index size = 32;
  Index channels = 2;
  double noise = 0.1;
  /// Global scale: phase uniform in [-phase_max, phase_max], log-magnitude
  /// uniform in [-logmag, logmag].
  double phase_max = 3.141592653589793;
  double logmag = 0.5;
};

struct SynthDataset {
  DatasetHandle handle;
  /// Class templates [classes, C, H, W].
  ComplexTensor<double> templates;
};

/// Each class has a fixed random complex template (unit mean-square
/// magnitude); a sample is template * s + complex Gaussian noise with
/// per-sample global scale s. Samples are ordered class by class.
SynthDataset synth_complex_dataset(Rng& rng, const SynthOptions& opts = {});

/// First `count` elements of a seeded permutation of the handle.
DatasetHandle subset(const DatasetHandle& h, Index count, std::uint64_t seed);

/// Splits off a stratified validation tail: the last `val_per_class` items
/// of every class go to the second handle.
std::pair<DatasetHandle, DatasetHandle> split_per_class(const DatasetHandle& h, Index val_per_class);

/// Permutation of [0, n) for the given seed and epoch (Fisher-Yates).
std::vector<Index> epoch_permutation(Index n, std::uint64_t seed, std::uint64_t epoch);

template <typename Scalar>
LabeledBatch<Scalar> gather(const DatasetHandle& h, const std::vector<Index>& positions);

/// Deterministic mini-batches of one epoch. The last partial batch is kept.
template <typename Scalar>
class BatchStream {
 public:
  BatchStream(const DatasetHandle& h, Index batch_size, std::uint64_t epoch, bool shuffle = true);

  Index num_batches() const { return (static_cast<Index>(order_.size()) + batch_size_ - 1) / batch_size_; }
  bool has_next() const { return next_ < num_batches(); }
  LabeledBatch<Scalar> next();
  LabeledBatch<Scalar> batch(Index b) const;

 private:
  const DatasetHandle* handle_;
  Index batch_size_;
  std::vector<Index> order_;
  Index next_ = 0;
};

/// Writes inputs.cds (encoded samples [N,C,H,W], fp64) and manifest.json.
void save_dataset(const DatasetHandle& h, const std::filesystem::path& dir);
DatasetHandle load_dataset(const std::filesystem::path& dir);

}  // namespace cds

#endif  // CDS_DATA_HPP
