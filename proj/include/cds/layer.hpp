#ifndef CDS_LAYER_HPP
#define CDS_LAYER_HPP

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "cds/autodiff.hpp"
#include "cds/tensor.hpp"

namespace cds {

/// Declarative description of one layer: its kind, hyperparameters, and the
/// names of the parameter tensors it owns.
struct LayerSpec {
  std::string kind;
  nlohmann::json hyperparameters = nlohmann::json::object();
  std::vector<std::string> parameters;

  nlohmann::json to_json() const {
    return {{"kind", kind}, {"hyperparameters", hyperparameters}, {"parameters", parameters}};
  }
  static LayerSpec from_json(const nlohmann::json& j);
};

inline LayerSpec LayerSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
    throw ConfigError("layer spec needs a string 'kind'");
  LayerSpec s;
  s.kind = j["kind"].get<std::string>();
  if (j.contains("hyperparameters")) s.hyperparameters = j["hyperparameters"];
  if (j.contains("parameters")) s.parameters = j["parameters"].get<std::vector<std::string>>();
  return s;
}

/// A differentiable stage. Inputs are batched [N,C,H,W] (or [N,D] for
/// vector stages). Real-valued stages carry their values in the real plane
/// with a zero imaginary plane.
template <typename Scalar>
class Layer {
 public:
  using Tensor = ComplexTensor<Scalar>;

  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  virtual nlohmann::json hyperparameters() const { return nlohmann::json::object(); }
  virtual Tensor forward(const Tensor& x, ForwardContext<Scalar>& ctx) = 0;
  virtual std::vector<Parameter<Scalar>*> parameters() { return {}; }

  LayerSpec spec() {
    LayerSpec s{kind(), hyperparameters(), {}};
    for (auto* p : parameters()) s.parameters.push_back(p->name);
    return s;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }
};

template <typename Scalar>
using LayerPtr = std::unique_ptr<Layer<Scalar>>;

}  // namespace cds

#endif  // CDS_LAYER_HPP
