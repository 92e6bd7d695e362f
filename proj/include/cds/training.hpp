#ifndef CDS_TRAINING_HPP
#define CDS_TRAINING_HPP

#include <filesystem>
#include <optional>

#include "cds/checkpoint.hpp"
#include "cds/data.hpp"

namespace cds {

/// Mean over the batch of -log softmax(logits)[label]. Logits live in the
/// real plane of a [N, K] tensor. Records its backward (softmax - onehot)/N
/// when ctx is recording; returns the loss as a [1] tensor.
template <typename Scalar>
ComplexTensor<Scalar> cross_entropy_logits(const ComplexTensor<Scalar>& logits,
                                           const std::vector<int>& labels, ForwardContext<Scalar>& ctx);

template <typename Scalar>
double cross_entropy_value(const ComplexTensor<Scalar>& logits, const std::vector<int>& labels);

class DivergenceError : public Error {
 public:
  using Error::Error;
};

enum class Algorithm { adamw, sgd };

std::string_view to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view s);

struct OptimizerConfig {
  Algorithm algorithm = Algorithm::adamw;
  double lr = 1e-3;
  double beta1 = 0.99;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.1;
  /// SGD only; 0 disables momentum.
  double momentum = 0.9;

  nlohmann::json to_json() const;
  static OptimizerConfig from_json(const nlohmann::json& j);
  bool operator==(const OptimizerConfig&) const = default;
};

/// First and second moments per real coordinate of every trainable
/// parameter, in registry order. SGD keeps its velocity in `first`.
template <typename Scalar>
struct OptimizerState {
  std::int64_t step = 0;
  std::vector<ComplexTensor<Scalar>> first;
  std::vector<ComplexTensor<Scalar>> second;
};

template <typename Scalar>
class Optimizer {
 public:
  Optimizer(std::vector<Parameter<Scalar>*> params, OptimizerConfig cfg);

  /// Applies one update from the accumulated gradients. Throws
  /// DivergenceError, leaving parameters and state untouched, when any
  /// gradient is not finite.
  void step();

  const OptimizerConfig& config() const { return cfg_; }
  OptimizerState<Scalar>& state() { return state_; }
  const OptimizerState<Scalar>& state() const { return state_; }
  const std::vector<Parameter<Scalar>*>& parameters() const { return params_; }

 private:
  std::vector<Parameter<Scalar>*> params_;
  OptimizerConfig cfg_;
  OptimizerState<Scalar> state_;
};

struct MetricRecord {
  std::int64_t step;
  std::string split;
  std::string metric;
  double value;
};

std::string metrics_csv(const std::vector<MetricRecord>& records);

struct TrainConfig {
  std::int64_t steps = 50000;
  Index batch_size = 256;
  std::int64_t validate_every = 1000;
  Index eval_batch_size = 256;
  OptimizerConfig optimizer;
  /// Seeds the batch order.
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

template <typename Scalar>
struct TrainResult {
  /// Highest validation accuracy seen (ties keep the earlier one); the
  /// initialization checkpoint if no validation ran.
  Checkpoint<Scalar> best;
  Checkpoint<Scalar> last;
  std::vector<MetricRecord> metrics;
  double best_val_accuracy = -1;
  std::int64_t best_step = 0;
  bool diverged = false;
  std::string message;
};

/// Trains `model` in place and returns the checkpoints. Validation runs
/// every `validate_every` steps and after the final step. On a non-finite
/// loss or gradient training stops and `diverged` is set; `best` is then
/// the last good checkpoint. If `metrics_path` is given the CSV is
/// rewritten after every validation.
template <typename Scalar>
TrainResult<Scalar> train_loop(ModelGraph<Scalar>& model, const DatasetHandle& train,
                               const DatasetHandle& val, const TrainConfig& cfg,
                               const std::optional<std::filesystem::path>& metrics_path = {});

}  // namespace cds

#endif  // CDS_TRAINING_HPP
