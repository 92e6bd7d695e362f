#ifndef CDS_CONFIG_HPP
#define CDS_CONFIG_HPP

#include <filesystem>

#include "cds/data.hpp"
#include "cds/evaluation.hpp"
#include "cds/training.hpp"

namespace cds {

class ConfigTypeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

struct ConfigKey {
  std::string key;
  nlohmann::json default_value;
  std::string help;
};

/// Every recognised key with its default. The default fixes the type.
const std::vector<ConfigKey>& config_schema();

/// Flat key/value run configuration with dotted namespaces
/// ("train.steps", "optim.lr", ...).
class RunConfig {
 public:
  RunConfig();

  /// Reads a JSON object from `path` over the defaults. An empty file is an
  /// empty object. Throws ConfigError listing unknown keys and
  /// ConfigTypeError on type conflicts.
  static RunConfig load(const std::filesystem::path& path);
  /// The raw object stored in a config file, unchecked ({} for an empty file).
  static nlohmann::json read_file(const std::filesystem::path& path);

  /// Applies every entry of a flat JSON object.
  void merge(const nlohmann::json& flat, const std::string& source);
  void set(const std::string& key, const nlohmann::json& value);
  /// Converts command-line text to the key's type: strings verbatim,
  /// integers, numbers, true/false, comma-separated number lists.
  void set_text(const std::string& key, const std::string& text);
  /// "key=value" through set_text.
  void set_assignment(const std::string& assignment);

  const nlohmann::json& at(const std::string& key) const;
  template <typename T>
  T get(const std::string& key) const {
    return at(key).get<T>();
  }

  nlohmann::json to_json() const { return values_; }
  void write(const std::filesystem::path& path) const;

  ModelConfig model(int num_classes, Index in_channels, Index input_size) const;
  OptimizerConfig optimizer() const;
  TrainConfig train() const;
  RobustnessOptions robustness() const;
  Encoding encoding() const;
  Precision precision() const;

 private:
  nlohmann::json values_;
};

struct Splits {
  DatasetHandle train, val, test;
};

/// Resolves "data.*" keys: synthetic data, CIFAR-10/100 binaries under
/// data.root (default $CDS_DATA_DIR), or a saved dataset directory.
/// Missing CIFAR files raise ConfigError naming the expected layout.
Splits load_splits(const RunConfig& cfg);

/// $CDS_DATA_DIR, or empty.
std::filesystem::path default_data_root();

bool cifar10_available(const std::filesystem::path& dir);

}  // namespace cds

#endif  // CDS_CONFIG_HPP
