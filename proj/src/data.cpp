#include "cds/data.hpp"

#include <fstream>

#include <json.hpp>

#include "cds/serialize.hpp"

namespace cds {

namespace fs = std::filesystem;

void RgbStore::add(const unsigned char* rgb_planes, int label) {
  pixels_.insert(pixels_.end(), rgb_planes, rgb_planes + 3 * h_ * w_);
  labels_.push_back(label);
}

RgbImage RgbStore::image(Index i) const {
  RgbImage rgb = make_rgb(h_, w_);
  const unsigned char* p = pixels_.data() + i * 3 * h_ * w_;
  for (Index k = 0; k < 3 * h_ * w_; ++k) rgb.data[k] = p[k] / 255.0;
  return rgb;
}

void RgbStore::write(Index i, Encoding e, double* re, double* im) const {
  const Index n = 3 * h_ * w_, hw = h_ * w_;
  const unsigned char* p = pixels_.data() + i * n;
  if (e == Encoding::rgb_as_real || e == Encoding::sliding) {
    if (e == Encoding::rgb_as_real) {
      for (Index k = 0; k < n; ++k) {
        re[k] = p[k] / 255.0;
        im[k] = 0;
      }
    } else {
      for (Index k = 0; k < hw; ++k) {
        re[k] = p[k] / 255.0;
        im[k] = p[hw + k] / 255.0;
        re[hw + k] = p[hw + k] / 255.0;
        im[hw + k] = p[2 * hw + k] / 255.0;
      }
    }
    return;
  }
  const EncodedImage enc = encode(image(i), e);
  std::copy_n(enc.tensor.re().data(), enc.tensor.size(), re);
  std::copy_n(enc.tensor.im().data(), enc.tensor.size(), im);
}

ComplexStore::ComplexStore(ComplexTensor<double> samples, std::vector<int> labels, int classes)
    : samples_(std::move(samples)), labels_(std::move(labels)), classes_(classes) {
  if (samples_.rank() != 4 || samples_.dim(0) != static_cast<Index>(labels_.size()))
    throw ShapeError("complex store needs [N,C,H,W] samples and N labels");
  for (int l : labels_)
    if (l < 0 || l >= classes_) throw FormatError("label out of range");
}

void ComplexStore::write(Index i, Encoding e, double* re, double* im) const {
  if (e != Encoding::native) throw ConfigError("complex-valued samples only support the native encoding");
  const Index n = samples_.size() / samples_.dim(0);
  std::copy_n(samples_.re().data() + i * n, n, re);
  std::copy_n(samples_.im().data() + i * n, n, im);
}

ComplexTensor<double> DatasetHandle::sample(Index k) const {
  ComplexTensor<double> t({channels(), store->height(), store->width()});
  store->write(indices.at(static_cast<std::size_t>(k)), encoding, t.re().data(), t.im().data());
  return t;
}

namespace {

std::vector<unsigned char> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in)
    throw FormatError("cannot open " + p.string() +
                      " (expected CIFAR binary files, e.g. data_batch_1.bin .. data_batch_5.bin "
                      "and test_batch.bin for CIFAR-10)");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

DatasetHandle make_handle(std::shared_ptr<const SampleStore> store, Index begin, Index end,
                          std::uint64_t seed, Encoding e, std::string name) {
  DatasetHandle h{std::move(store), {}, seed, e, std::move(name)};
  for (Index i = begin; i < end; ++i) h.indices.push_back(i);
  return h;
}

CifarSplits load_cifar(const fs::path& dir, const std::vector<std::string>& train_files,
                       const std::string& test_file, int label_bytes, int classes,
                       std::uint64_t seed, Encoding e) {
  auto train = std::make_shared<RgbStore>(32, 32, classes);
  for (const auto& f : train_files) parse_cifar_records(read_file(dir / f), label_bytes, classes, *train, f);
  auto test = std::make_shared<RgbStore>(32, 32, classes);
  parse_cifar_records(read_file(dir / test_file), label_bytes, classes, *test, test_file);
  const Index n = train->size();
  const Index val = std::min<Index>(5000, n / 10);
  CifarSplits s;
  s.train = make_handle(train, 0, n - val, seed, e, "train");
  s.val = make_handle(train, n - val, n, seed, e, "val");
  s.test = make_handle(test, 0, test->size(), seed, e, "test");
  return s;
}

}  // namespace

void parse_cifar_records(const std::vector<unsigned char>& bytes, int label_bytes, int classes,
                         RgbStore& into, const std::string& source) {
  const std::size_t record = static_cast<std::size_t>(label_bytes) + 3072;
  if (bytes.size() % record != 0)
    throw FormatError(source + ": size " + std::to_string(bytes.size()) +
                      " is not a multiple of the record size " + std::to_string(record));
  for (std::size_t off = 0; off < bytes.size(); off += record) {
    const int label = bytes[off + static_cast<std::size_t>(label_bytes) - 1];
    if (label >= classes)
      throw FormatError(source + ": label byte " + std::to_string(label) + " out of range in record " +
                        std::to_string(off / record));
    into.add(bytes.data() + off + label_bytes, label);
  }
}

CifarSplits load_cifar10_bin(const fs::path& dir, std::uint64_t seed, Encoding encoding) {
  return load_cifar(dir,
                    {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin",
                     "data_batch_5.bin"},
                    "test_batch.bin", 1, 10, seed, encoding);
}

CifarSplits load_cifar100_bin(const fs::path& dir, std::uint64_t seed, Encoding encoding) {
  return load_cifar(dir, {"train.bin"}, "test.bin", 2, 100, seed, encoding);
}

SynthDataset synth_complex_dataset(Rng& rng, const SynthOptions& o) {
  if (o.per_class < 1) throw ParameterError("per_class must be >= 1");
  if (o.classes < 1 || o.size < 1 || o.channels < 1) throw ParameterError("bad synthetic dataset shape");
  Rng trng = rng.fork(1), srng = rng.fork(2);
  const Index per = o.channels * o.size * o.size;
  ComplexTensor<double> templates =
      make_tensor<double>({o.classes, o.channels, o.size, o.size}, Fill::gaussian(trng, 0.0, std::sqrt(0.5)));
  const Index n = o.classes * o.per_class;
  ComplexTensor<double> samples({n, o.channels, o.size, o.size});
  std::vector<int> labels;
  for (int c = 0; c < o.classes; ++c)
    for (Index k = 0; k < o.per_class; ++k) {
      const Index i = c * o.per_class + k;
      Rng r = srng.fork(static_cast<std::uint64_t>(i));
      const std::complex<double> s = sample_scale({o.phase_max, -o.logmag, o.logmag}, r);
      for (Index j = 0; j < per; ++j) {
        std::complex<double> v = s * templates[c * per + j];
        if (o.noise > 0) v += std::complex<double>(r.normal(0, o.noise / std::sqrt(2.0)),
                                                   r.normal(0, o.noise / std::sqrt(2.0)));
        samples.set(i * per + j, v);
      }
      labels.push_back(c);
    }
  auto store = std::make_shared<ComplexStore>(std::move(samples), std::move(labels), o.classes);
  return {make_handle(store, 0, n, rng.seed(), Encoding::native, "synth"), std::move(templates)};
}

std::vector<Index> epoch_permutation(Index n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<Index> p(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  Rng rng(seed, mix64(epoch + 0x5eed));
  for (Index i = n - 1; i > 0; --i)
    std::swap(p[static_cast<std::size_t>(i)],
              p[rng.below(static_cast<std::uint64_t>(i + 1))]);
  return p;
}

DatasetHandle subset(const DatasetHandle& h, Index count, std::uint64_t seed) {
  if (count < 0 || count > h.size()) throw ParameterError("subset size out of range");
  const auto perm = epoch_permutation(h.size(), seed, 0xffffffff);
  DatasetHandle out = h;
  out.indices.clear();
  for (Index k = 0; k < count; ++k) out.indices.push_back(h.indices[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])]);
  out.name = h.name + "_subset";
  return out;
}

std::pair<DatasetHandle, DatasetHandle> split_per_class(const DatasetHandle& h, Index val_per_class) {
  std::vector<Index> seen(static_cast<std::size_t>(h.num_classes()), 0), total = seen;
  for (Index k = 0; k < h.size(); ++k) ++total[static_cast<std::size_t>(h.label(k))];
  DatasetHandle train = h, val = h;
  train.indices.clear();
  val.indices.clear();
  train.name = h.name + "_train";
  val.name = h.name + "_val";
  for (Index k = 0; k < h.size(); ++k) {
    const auto c = static_cast<std::size_t>(h.label(k));
    const bool tail = seen[c]++ >= total[c] - val_per_class;
    (tail ? val : train).indices.push_back(h.indices[static_cast<std::size_t>(k)]);
  }
  return {std::move(train), std::move(val)};
}

template <typename Scalar>
LabeledBatch<Scalar> gather(const DatasetHandle& h, const std::vector<Index>& positions) {
  const Index c = h.channels(), ht = h.store->height(), w = h.store->width(), per = c * ht * w;
  const Index n = static_cast<Index>(positions.size());
  LabeledBatch<Scalar> b{ComplexTensor<Scalar>({n, c, ht, w}), {}, h.encoding};
  Eigen::ArrayXd re(per), im(per);
  for (Index k = 0; k < n; ++k) {
    const Index pos = positions[static_cast<std::size_t>(k)];
    h.store->write(h.indices.at(static_cast<std::size_t>(pos)), h.encoding, re.data(), im.data());
    b.inputs.re().segment(k * per, per) = re.cast<Scalar>();
    b.inputs.im().segment(k * per, per) = im.cast<Scalar>();
    b.labels.push_back(h.label(pos));
  }
  return b;
}

template <typename Scalar>
BatchStream<Scalar>::BatchStream(const DatasetHandle& h, Index batch_size, std::uint64_t epoch,
                                 bool shuffle)
    : handle_(&h), batch_size_(batch_size) {
  if (batch_size < 1) throw ParameterError("batch size must be >= 1");
  if (shuffle) {
    order_ = epoch_permutation(h.size(), h.seed, epoch);
  } else {
    for (Index i = 0; i < h.size(); ++i) order_.push_back(i);
  }
}

template <typename Scalar>
LabeledBatch<Scalar> BatchStream<Scalar>::batch(Index b) const {
  if (b < 0 || b >= num_batches()) throw ParameterError("batch index out of range");
  const Index begin = b * batch_size_;
  const Index end = std::min<Index>(begin + batch_size_, static_cast<Index>(order_.size()));
  return gather<Scalar>(*handle_, std::vector<Index>(order_.begin() + begin, order_.begin() + end));
}

template <typename Scalar>
LabeledBatch<Scalar> BatchStream<Scalar>::next() {
  if (!has_next()) throw StateError("batch stream exhausted");
  return batch(next_++);
}

void save_dataset(const DatasetHandle& h, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<Index> all;
  for (Index k = 0; k < h.size(); ++k) all.push_back(k);
  const LabeledBatch<double> b = gather<double>(h, all);
  save_tensor(dir / "inputs.cds", b.inputs);
  nlohmann::json m = {{"labels", b.labels},
                      {"classes", h.num_classes()},
                      {"encoding", std::string(to_string(h.encoding))},
                      {"source", h.store->describe()},
                      {"name", h.name},
                      {"seed", h.seed}};
  std::ofstream(dir / "manifest.json") << m.dump(2) << '\n';
}

DatasetHandle load_dataset(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw FormatError("missing " + (dir / "manifest.json").string());
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad dataset manifest: ") + e.what());
  }
  auto inputs = load_tensor<double>(dir / "inputs.cds");
  auto store = std::make_shared<ComplexStore>(std::move(inputs), m.at("labels").get<std::vector<int>>(),
                                              m.at("classes").get<int>());
  const Index n = store->size();
  return make_handle(store, 0, n, m.value("seed", std::uint64_t{0}), Encoding::native,
                     m.value("name", std::string("dataset")));
}

template LabeledBatch<float> gather<float>(const DatasetHandle&, const std::vector<Index>&);
template LabeledBatch<double> gather<double>(const DatasetHandle&, const std::vector<Index>&);
template class BatchStream<float>;
template class BatchStream<double>;

}  // namespace cds
