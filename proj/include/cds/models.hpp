#ifndef CDS_MODELS_HPP
#define CDS_MODELS_HPP

#include "cds/layers.hpp"

namespace cds {

enum class Invariance { none, phase, full };

std::string_view to_string(Invariance i);

/// Everything needed to rebuild a model bit-for-bit.
struct ModelConfig {
  /// type_i | type_e | dcn | real | surreal_wfm
  std::string builder = "type_i";
  int num_classes = 10;
  Index in_channels = 2;
  Index input_size = 32;
  std::vector<Index> widths = {16, 32, 64};
  Index embedding = 128;
  double gtrelu_r = 0.0;
  std::string metric = "manifold";
  /// Type-I only: magnitude batch norm in front of the prototype head.
  bool proto_batchnorm = false;
  /// Type-I only: magnitude offset of the Division layer.
  double division_eps = 1e-7;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

const std::vector<std::string>& model_builders();

/// Layer specs of a model, in execution order.
std::vector<LayerSpec> model_layer_specs(const ModelConfig& cfg);

Invariance model_invariance(const std::string& builder);

template <typename Scalar>
struct NamedParameter {
  std::string name;  // "layers.<i>.<parameter name>"
  Parameter<Scalar>* param;
};

/// Executable chain of layers built from a ModelConfig.
template <typename Scalar>
class ModelGraph {
 public:
  using Tensor = ComplexTensor<Scalar>;

  explicit ModelGraph(const ModelConfig& cfg);

  /// Logits [N, num_classes] in the real plane.
  Tensor forward(const Tensor& x, ForwardContext<Scalar>& ctx);
  Tensor forward(const Tensor& x, Mode mode = Mode::eval);

  const ModelConfig& config() const { return config_; }
  Invariance invariance() const { return invariance_; }
  std::size_t num_layers() const { return layers_.size(); }
  Layer<Scalar>& layer(std::size_t i) { return *layers_.at(i); }

  std::vector<NamedParameter<Scalar>> named_parameters();
  std::vector<Parameter<Scalar>*> parameters();
  /// Trainable entries, complex entries counted once.
  Index parameter_count();
  /// Trainable real coordinates.
  Index real_parameter_count();
  void zero_grad();
  nlohmann::json layers_json();

 private:
  ModelConfig config_;
  Invariance invariance_;
  std::vector<LayerPtr<Scalar>> layers_;
};

template <typename Scalar>
ModelGraph<Scalar> build_type_i_cifarnet(int num_classes, Index in_channels, std::uint64_t seed = 0);
template <typename Scalar>
ModelGraph<Scalar> build_type_e_cifarnet(int num_classes, Index in_channels, std::uint64_t seed = 0);
/// kind: dcn | real | surreal_wfm
template <typename Scalar>
ModelGraph<Scalar> build_baseline(const std::string& kind, int num_classes, Index in_channels,
                                  std::uint64_t seed = 0);

/// Spatial size after the three stride-2 stages, which is also the kernel
/// of the learnable pooling layer.
Index pooled_size(Index input_size);

}  // namespace cds

#endif  // CDS_MODELS_HPP
