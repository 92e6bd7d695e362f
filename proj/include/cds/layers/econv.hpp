#ifndef CDS_LAYERS_ECONV_HPP
#define CDS_LAYERS_ECONV_HPP

#include "cds/conv.hpp"
#include "cds/layer.hpp"

namespace cds {

struct ConvSpec {
  Index in_channels = 1;
  Index out_channels = 1;
  Index kernel = 3;
  Index stride = 1;
  Index padding = 0;
  Index groups = 1;

  ConvGeometry geometry() const { return {stride, padding, groups, PadMode::zeros}; }
  Shape weight_shape() const { return {out_channels, in_channels / groups, kernel, kernel}; }
  nlohmann::json to_json() const;
  static ConvSpec from_json(const nlohmann::json& j);
};

/// Independent Gaussian real and imaginary parts with std 1/sqrt(2 fan_in),
/// so E|w|^2 = 1/fan_in.
template <typename Scalar>
ComplexTensor<Scalar> init_complex_weight(const Shape& shape, Index fan_in, Rng& rng);

/// Complex-scale equivariant convolution. Bias-free: the layer owns no bias
/// parameter at all, so Econv(s z) = s Econv(z) for every complex s.
template <typename Scalar>
class EconvLayer : public Layer<Scalar> {
 public:
  using Tensor = ComplexTensor<Scalar>;

  EconvLayer(const ConvSpec& spec, Rng& rng);
  EconvLayer(const ConvSpec& spec, Tensor weight);

  std::string kind() const override { return "econv"; }
  nlohmann::json hyperparameters() const override { return spec_.to_json(); }
  Tensor forward(const Tensor& x, ForwardContext<Scalar>& ctx) override;
  std::vector<Parameter<Scalar>*> parameters() override { return {&weight_}; }

  const ConvSpec& conv_spec() const { return spec_; }
  Parameter<Scalar>& weight() { return weight_; }
  const Parameter<Scalar>& weight() const { return weight_; }

 private:
  ConvSpec spec_;
  Parameter<Scalar> weight_;
};

template <typename Scalar>
ComplexTensor<Scalar> econv_forward(const ComplexTensor<Scalar>& z, const EconvLayer<Scalar>& layer) {
  return conv2d(z, layer.weight().value, layer.conv_spec().geometry(), ConvMethod::gauss);
}

/// Complex convolution with a complex bias per output channel, as used by
/// the DCN-style baseline. Not equivariant.
template <typename Scalar>
class ComplexConvLayer : public Layer<Scalar> {
 public:
  using Tensor = ComplexTensor<Scalar>;

  ComplexConvLayer(const ConvSpec& spec, Rng& rng);

  std::string kind() const override { return "complex_conv"; }
  nlohmann::json hyperparameters() const override { return spec_.to_json(); }
  Tensor forward(const Tensor& x, ForwardContext<Scalar>& ctx) override;
  std::vector<Parameter<Scalar>*> parameters() override { return {&weight_, &bias_}; }

 private:
  ConvSpec spec_;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
};

/// Bias-free complex fully connected map over the flattened input:
/// [N, ...] with D = prod(...) features -> [N, out, 1, 1]. Any linear map is
/// complex-scale equivariant.
template <typename Scalar>
class ComplexLinearLayer : public Layer<Scalar> {
 public:
  using Tensor = ComplexTensor<Scalar>;

  ComplexLinearLayer(Index in_features, Index out_features, Rng& rng);

  std::string kind() const override { return "complex_linear"; }
  nlohmann::json hyperparameters() const override {
    return {{"in_features", in_}, {"out_features", out_}};
  }
  Tensor forward(const Tensor& x, ForwardContext<Scalar>& ctx) override;
  std::vector<Parameter<Scalar>*> parameters() override { return {&weight_}; }

 private:
  Index in_, out_;
  Parameter<Scalar> weight_;
};

}  // namespace cds

#endif  // CDS_LAYERS_ECONV_HPP
