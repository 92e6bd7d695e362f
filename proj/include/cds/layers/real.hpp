#ifndef CDS_LAYERS_REAL_HPP
#define CDS_LAYERS_REAL_HPP

#include "cds/layers/econv.hpp"

namespace cds {

// Real-valued stages keep their values in the real plane of a
// ComplexTensor; the imaginary plane is ignored on input and zero on output.

/// (ln|z|, sin arg z, cos arg z) per input channel: [N,C,H,W] -> [N,3C,H,W],
/// channel 3c+0/1/2 from input channel c. Magnitudes floored at 1e-12.
template <typename Scalar>
ComplexTensor<Scalar> complex_to_real(const ComplexTensor<Scalar>& z);

template <typename Scalar>
class ComplexToRealLayer : public Layer<Scalar> {
 public:
  using Tensor = ComplexTensor<Scalar>;
  std::string kind() const override { return "complex_to_real"; }
  Tensor forward(const Tensor& x, ForwardContext<Scalar>& ctx) override;
};

/// [N,C,...] complex -> [N,2C,...] real: real parts in channels 0..C-1,
/// imaginary parts in C..2C-1.
template <typename Scalar>
class SplitReImLayer : public Layer<Scalar> {
 public:
  using Tensor = ComplexTensor<Scalar>;
  std::string kind() const override { return "split_re_im"; }
  Tensor forward(const Tensor& x, ForwardContext<Scalar>& ctx) override;
};

/// Real convolution with optional per-channel bias. He-normal init.
template <typename Scalar>
class RealConvLayer : public Layer<Scalar> {
 public:
  using Tensor = ComplexTensor<Scalar>;

  RealConvLayer(const ConvSpec& spec, bool bias, Rng& rng);

  std::string kind() const override { return "real_conv"; }
  nlohmann::json hyperparameters() const override {
    auto j = spec_.to_json();
    j["bias"] = has_bias_;
    return j;
  }
  Tensor forward(const Tensor& x, ForwardContext<Scalar>& ctx) override;
  std::vector<Parameter<Scalar>*> parameters() override {
    if (has_bias_) return {&weight_, &bias_};
    return {&weight_};
  }

 private:
  ConvSpec spec_;
  bool has_bias_;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
};

template <typename Scalar>
class ReluLayer : public Layer<Scalar> {
 public:
  using Tensor = ComplexTensor<Scalar>;
  std::string kind() const override { return "relu"; }
  Tensor forward(const Tensor& x, ForwardContext<Scalar>& ctx) override;
};

/// Fully connected over the flattened input: [N, ...] -> [N, out].
template <typename Scalar>
class LinearLayer : public Layer<Scalar> {
 public:
  using Tensor = ComplexTensor<Scalar>;

  LinearLayer(Index in_features, Index out_features, Rng& rng);
  LinearLayer(Tensor weight, Tensor bias);

  std::string kind() const override { return "linear"; }
  nlohmann::json hyperparameters() const override {
    return {{"in_features", in_}, {"out_features", out_}};
  }
  Tensor forward(const Tensor& x, ForwardContext<Scalar>& ctx) override;
  std::vector<Parameter<Scalar>*> parameters() override { return {&weight_, &bias_}; }

 private:
  Index in_, out_;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
};

/// Average pooling over square windows; acts on both planes.
template <typename Scalar>
class AvgPoolLayer : public Layer<Scalar> {
 public:
  using Tensor = ComplexTensor<Scalar>;

  AvgPoolLayer(Index window, Index stride);

  std::string kind() const override { return "avgpool"; }
  nlohmann::json hyperparameters() const override {
    return {{"window", window_}, {"stride", stride_}};
  }
  Tensor forward(const Tensor& x, ForwardContext<Scalar>& ctx) override;

 private:
  Index window_, stride_;
};

}  // namespace cds

#endif  // CDS_LAYERS_REAL_HPP
