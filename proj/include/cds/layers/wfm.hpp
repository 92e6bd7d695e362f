#ifndef CDS_LAYERS_WFM_HPP
#define CDS_LAYERS_WFM_HPP

#include <functional>

#include "cds/layers/econv.hpp"

namespace cds {

/// Sum_i w_i * arcdist(phi_i, theta)^2.
double wfm_phase_objective(const std::vector<double>& phases, const std::vector<double>& weights,
                           double theta);

/// Golden-section search for a minimum of f on [a, b].
double golden_section_min(const std::function<double(double)>& f, double a, double b,
                          double tol = 1e-12);

/// Minimizer of f over the circle: a uniform grid of `grid` points followed
/// by golden-section refinement around the best grid cell. Result in
/// (-pi, pi].
double minimize_on_circle(const std::function<double(double)>& f, int grid = 10000);

/// Weighted Frechet mean of complex numbers under the manifold distance.
/// Magnitude exp(sum w_i ln|z_i|); phase minimizes sum w_i arcdist^2.
/// Weights must lie in (0,1] and sum to 1.
template <typename Scalar>
std::complex<Scalar> wfm_layer(const std::vector<std::complex<Scalar>>& z,
                               const std::vector<Scalar>& weights);

/// Convolution whose kernels are convex weights (softmax of a learned real
/// tensor per output channel). Each output is exp(sum w ln|z|) times the
/// unit phasor of sum w z/|z|; borders use replicate padding. Equivariant
/// to complex scaling of the input.
template <typename Scalar>
class WfmConvLayer : public Layer<Scalar> {
 public:
  using Tensor = ComplexTensor<Scalar>;

  WfmConvLayer(const ConvSpec& spec, Rng& rng);

  std::string kind() const override { return "wfm_conv"; }
  nlohmann::json hyperparameters() const override { return spec_.to_json(); }
  Tensor forward(const Tensor& x, ForwardContext<Scalar>& ctx) override;
  std::vector<Parameter<Scalar>*> parameters() override { return {&logits_}; }

  /// Convex kernel weights derived from the logits.
  Tensor kernel_weights() const;

 private:
  ConvGeometry geometry() const {
    return {spec_.stride, spec_.padding, spec_.groups, PadMode::replicate};
  }

  ConvSpec spec_;
  Parameter<Scalar> logits_;
};

/// Per-pixel manifold distance of every channel to a 1x1 wFM of the
/// channels: [N,C,H,W] complex -> [N,C,H,W] real. Invariant to complex
/// scaling of the input.
template <typename Scalar>
class DistanceTransformLayer : public Layer<Scalar> {
 public:
  using Tensor = ComplexTensor<Scalar>;

  DistanceTransformLayer(Index channels, Rng& rng);

  std::string kind() const override { return "distance_transform"; }
  nlohmann::json hyperparameters() const override { return {{"channels", channels_}}; }
  Tensor forward(const Tensor& x, ForwardContext<Scalar>& ctx) override;
  std::vector<Parameter<Scalar>*> parameters() override { return reference_.parameters(); }

 private:
  Index channels_;
  WfmConvLayer<Scalar> reference_;
};

}  // namespace cds

#endif  // CDS_LAYERS_WFM_HPP
