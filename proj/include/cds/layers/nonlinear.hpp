#ifndef CDS_LAYERS_NONLINEAR_HPP
#define CDS_LAYERS_NONLINEAR_HPP

#include <functional>

#include "cds/layer.hpp"

namespace cds {

/// ReLU on real and imaginary parts independently.
template <typename Scalar>
ComplexTensor<Scalar> crelu(const ComplexTensor<Scalar>& z);

/// Generalized Tangent ReLU, per element with its channel's c and omega:
///   y = max(r, |c x|) * exp(i * omega * max(arg(c x), 0)),  arg in (-pi, pi].
/// `c` and `omega` hold one value per channel (axis 1 of [N,C,...]).
template <typename Scalar>
ComplexTensor<Scalar> gtrelu(const ComplexTensor<Scalar>& x, Scalar r,
                             const ComplexTensor<Scalar>& c, const ComplexTensor<Scalar>& omega);

inline constexpr double kNormFloor = 1e-12;

/// m_hat * N(f * conj(m_hat)) with m_hat the unit-normalized channel mean
/// (|m| floored at 1e-12). Accepts [N,C,H,W] or [C,H,W].
template <typename Scalar>
ComplexTensor<Scalar> equivariant_wrap(
    const ComplexTensor<Scalar>& f,
    const std::function<ComplexTensor<Scalar>(const ComplexTensor<Scalar>&)>& nonlinearity);

template <typename Scalar>
class CReluLayer : public Layer<Scalar> {
 public:
  using Tensor = ComplexTensor<Scalar>;
  std::string kind() const override { return "crelu"; }
  Tensor forward(const Tensor& x, ForwardContext<Scalar>& ctx) override;
};

template <typename Scalar>
class GTReluLayer : public Layer<Scalar> {
 public:
  using Tensor = ComplexTensor<Scalar>;

  /// c starts at 1+0i, omega at 1. r stays fixed.
  GTReluLayer(Index channels, Scalar r);

  std::string kind() const override { return "gtrelu"; }
  nlohmann::json hyperparameters() const override {
    return {{"channels", channels_}, {"r", static_cast<double>(r_)}};
  }
  Tensor forward(const Tensor& x, ForwardContext<Scalar>& ctx) override;
  std::vector<Parameter<Scalar>*> parameters() override { return {&scale_, &omega_}; }

  Scalar threshold() const { return r_; }
  Parameter<Scalar>& scale() { return scale_; }
  Parameter<Scalar>& omega() { return omega_; }

 private:
  Index channels_;
  Scalar r_;
  Parameter<Scalar> scale_;
  Parameter<Scalar> omega_;
};

/// Wraps a pointwise non-linearity so that it commutes with complex scaling
/// of the whole feature map.
template <typename Scalar>
class EquivariantWrapLayer : public Layer<Scalar> {
 public:
  using Tensor = ComplexTensor<Scalar>;

  explicit EquivariantWrapLayer(LayerPtr<Scalar> inner) : inner_(std::move(inner)) {}

  std::string kind() const override { return "eq_wrap"; }
  nlohmann::json hyperparameters() const override {
    return {{"inner", inner_->spec().to_json()}};
  }
  Tensor forward(const Tensor& x, ForwardContext<Scalar>& ctx) override;
  std::vector<Parameter<Scalar>*> parameters() override { return inner_->parameters(); }

  Layer<Scalar>& inner() { return *inner_; }

 private:
  LayerPtr<Scalar> inner_;
};

}  // namespace cds

#endif  // CDS_LAYERS_NONLINEAR_HPP
