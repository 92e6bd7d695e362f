#ifndef CDS_CHECKPOINT_HPP
#define CDS_CHECKPOINT_HPP

#include <filesystem>
#include <utility>

#include "cds/models.hpp"

namespace cds {

template <typename Scalar>
using NamedTensors = std::vector<std::pair<std::string, ComplexTensor<Scalar>>>;

template <typename Scalar>
struct Checkpoint {
  ModelConfig model;
  /// Every registry entry, including non-trainable running statistics.
  NamedTensors<Scalar> parameters;
  nlohmann::json optimizer = nlohmann::json::object();
  std::int64_t optimizer_step = 0;
  NamedTensors<Scalar> optimizer_state;
  std::int64_t step = 0;
  /// crc32 of the metrics CSV written up to this step, as 8 hex digits.
  std::string metrics_digest;
  nlohmann::json extra = nlohmann::json::object();
};

template <typename Scalar>
Checkpoint<Scalar> capture(ModelGraph<Scalar>& model);

/// Copies parameter values into `model`. Throws ConfigMismatchError when the
/// model config, parameter names or shapes differ.
template <typename Scalar>
void restore(ModelGraph<Scalar>& model, const Checkpoint<Scalar>& ckpt);

/// Builds a model from the checkpoint's config and restores it.
template <typename Scalar>
ModelGraph<Scalar> instantiate(const Checkpoint<Scalar>& ckpt);

/// Container layout:
///   "CDS1", uint32 manifest length, manifest JSON, then every tensor as a
///   CDS1 tensor block in manifest order, then the crc32 (uint32 LE) of all
///   preceding bytes.
template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const Checkpoint<Scalar>& ckpt);

/// Throws CorruptCheckpointError on checksum mismatch or truncation and
/// FormatError when the file is not a checkpoint of this precision.
template <typename Scalar>
Checkpoint<Scalar> load_checkpoint(const std::filesystem::path& path);

/// Precision recorded in a checkpoint manifest (the checksum is not verified).
Precision checkpoint_precision(const std::filesystem::path& path);

std::uint32_t crc32_of(std::string_view bytes);
std::string hex32(std::uint32_t v);

}  // namespace cds

#endif  // CDS_CHECKPOINT_HPP
