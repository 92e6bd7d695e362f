#include "cds/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "cds/serialize.hpp"

namespace cds {

using nlohmann::json;

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* p = reinterpret_cast<const Bytef*>(bytes.data());
  std::size_t left = bytes.size();
  while (left > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    left -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

template <typename Scalar>
Checkpoint<Scalar> capture(ModelGraph<Scalar>& model) {
  Checkpoint<Scalar> c;
  c.model = model.config();
  for (const auto& np : model.named_parameters()) c.parameters.emplace_back(np.name, np.param->value);
  return c;
}

template <typename Scalar>
void restore(ModelGraph<Scalar>& model, const Checkpoint<Scalar>& ckpt) {
  if (!(ckpt.model == model.config()))
    throw ConfigMismatchError("checkpoint model config " + ckpt.model.to_json().dump() +
                              " does not match " + model.config().to_json().dump());
  auto named = model.named_parameters();
  if (named.size() != ckpt.parameters.size())
    throw ConfigMismatchError("checkpoint holds " + std::to_string(ckpt.parameters.size()) +
                              " tensors, model has " + std::to_string(named.size()));
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& [name, value] = ckpt.parameters[i];
    if (name != named[i].name || value.shape() != named[i].param->value.shape())
      throw ConfigMismatchError("checkpoint tensor " + name + " " + shape_string(value.shape()) +
                                " does not match " + named[i].name + " " +
                                shape_string(named[i].param->value.shape()));
  }
  for (std::size_t i = 0; i < named.size(); ++i) named[i].param->value = ckpt.parameters[i].second;
}

template <typename Scalar>
ModelGraph<Scalar> instantiate(const Checkpoint<Scalar>& ckpt) {
  ModelGraph<Scalar> m(ckpt.model);
  restore(m, ckpt);
  return m;
}

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const Checkpoint<Scalar>& ckpt) {
  json manifest;
  manifest["format"] = "cds-checkpoint";
  manifest["version"] = 1;
  manifest["precision"] = std::string(to_string(precision_of<Scalar>()));
  manifest["model"] = ckpt.model.to_json();
  manifest["optimizer"] = ckpt.optimizer;
  manifest["optimizer_step"] = ckpt.optimizer_step;
  manifest["step"] = ckpt.step;
  manifest["metrics_digest"] = ckpt.metrics_digest;
  manifest["extra"] = ckpt.extra;
  json names = json::array(), opt_names = json::array();
  for (const auto& t : ckpt.parameters) names.push_back(t.first);
  for (const auto& t : ckpt.optimizer_state) opt_names.push_back(t.first);
  manifest["parameters"] = names;
  manifest["optimizer_state"] = opt_names;

  std::ostringstream os(std::ios::binary);
  const std::string text = manifest.dump();
  os.write(kMagic, 4);
  io::write_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : ckpt.parameters) write_tensor(os, t.second);
  for (const auto& t : ckpt.optimizer_state) write_tensor(os, t.second);
  io::write_u32(os, crc32_of(os.view()));

  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string() + " for writing");
  const std::string bytes = os.str();
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("failed writing " + path.string());
}

template <typename Scalar>
Checkpoint<Scalar> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw CorruptCheckpointError(path.string() + " is not a CDS1 checkpoint or is truncated");
  std::istringstream tail(bytes.substr(bytes.size() - 4));
  const std::uint32_t stored = io::read_u32(tail);
  const std::string_view body(bytes.data(), bytes.size() - 4);
  if (crc32_of(body) != stored)
    throw CorruptCheckpointError(path.string() + ": checksum mismatch (file corrupt or truncated)");

  std::istringstream is{std::string(body)};
  is.ignore(4);
  const std::uint32_t len = io::read_u32(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), len)) throw CorruptCheckpointError("truncated checkpoint manifest");
  const json manifest = json::parse(text, nullptr, false);
  if (manifest.is_discarded() || manifest.value("format", "") != "cds-checkpoint")
    throw FormatError(path.string() + " is a CDS1 file but not a checkpoint");
  const std::string precision = manifest.value("precision", "");
  if (parse_precision(precision) != precision_of<Scalar>())
    throw FormatError("checkpoint holds " + precision + " tensors, expected " +
                      std::string(to_string(precision_of<Scalar>())));

  Checkpoint<Scalar> c;
  try {
    c.model = ModelConfig::from_json(manifest.at("model"));
    c.optimizer = manifest.value("optimizer", json::object());
    c.optimizer_step = manifest.value("optimizer_step", std::int64_t{0});
    c.step = manifest.value("step", std::int64_t{0});
    c.metrics_digest = manifest.value("metrics_digest", "");
    c.extra = manifest.value("extra", json::object());
    for (const auto& n : manifest.at("parameters")) c.parameters.emplace_back(n.get<std::string>(), read_tensor<Scalar>(is));
    for (const auto& n : manifest.at("optimizer_state"))
      c.optimizer_state.emplace_back(n.get<std::string>(), read_tensor<Scalar>(is));
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad checkpoint manifest: ") + e.what());
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw CorruptCheckpointError("trailing bytes after checkpoint tensors");
  return c;
}

Precision checkpoint_precision(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw CorruptCheckpointError(path.string() + " is not a CDS1 checkpoint or is truncated");
  const std::uint32_t len = io::read_u32(f);
  std::string text(len, '\0');
  if (!f.read(text.data(), len)) throw CorruptCheckpointError("truncated checkpoint manifest");
  const json manifest = json::parse(text, nullptr, false);
  if (manifest.is_discarded() || manifest.value("format", "") != "cds-checkpoint")
    throw FormatError(path.string() + " is a CDS1 file but not a checkpoint");
  return parse_precision(manifest.value("precision", ""));
}

#define CDS_INSTANTIATE_CHECKPOINT(S)                                                   \
  template Checkpoint<S> capture<S>(ModelGraph<S>&);                                    \
  template void restore<S>(ModelGraph<S>&, const Checkpoint<S>&);                       \
  template ModelGraph<S> instantiate<S>(const Checkpoint<S>&);                          \
  template void save_checkpoint<S>(const std::filesystem::path&, const Checkpoint<S>&); \
  template Checkpoint<S> load_checkpoint<S>(const std::filesystem::path&);

CDS_INSTANTIATE_CHECKPOINT(float)
CDS_INSTANTIATE_CHECKPOINT(double)

}  // namespace cds
