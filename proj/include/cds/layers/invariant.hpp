#ifndef CDS_LAYERS_INVARIANT_HPP
#define CDS_LAYERS_INVARIANT_HPP

#include "cds/layers/econv.hpp"

namespace cds {

/// |z1|/(|z2|+eps) * exp(i(arg z1 - arg z2)), elementwise. z2 may also hold
/// one value per channel of z1.
template <typename Scalar>
ComplexTensor<Scalar> division_layer(const ComplexTensor<Scalar>& z1,
                                     const ComplexTensor<Scalar>& z2, Scalar eps = Scalar(1e-7));

/// z1 * conj(z2), elementwise.
template <typename Scalar>
ComplexTensor<Scalar> conjugate_layer(const ComplexTensor<Scalar>& z1,
                                      const ComplexTensor<Scalar>& z2);

/// Shared by DivisionLayer and ConjugateLayer: a bias-free K x K Econv maps
/// the input [N,C,H,W] to a one-channel reference [N,1,H,W] (stride 1,
/// padding K/2), and every input channel is paired with that reference.
template <typename Scalar>
class ReferencePairLayer : public Layer<Scalar> {
 public:
  using Tensor = ComplexTensor<Scalar>;

  ReferencePairLayer(Index channels, Index kernel, Rng& rng);

  nlohmann::json hyperparameters() const override {
    return {{"channels", channels_}, {"kernel", kernel_}};
  }
  std::vector<Parameter<Scalar>*> parameters() override { return {&weight_}; }
  Parameter<Scalar>& weight() { return weight_; }

  Tensor reference(const Tensor& x) const;

 protected:
  ConvGeometry geometry() const { return {1, kernel_ / 2, 1, PadMode::zeros}; }

  Index channels_, kernel_;
  Parameter<Scalar> weight_;
};

template <typename Scalar>
class DivisionLayer : public ReferencePairLayer<Scalar> {
 public:
  using Tensor = ComplexTensor<Scalar>;

  DivisionLayer(Index channels, Index kernel, Rng& rng, double eps = 1e-7)
      : ReferencePairLayer<Scalar>(channels, kernel, rng), eps_(eps) {}

  std::string kind() const override { return "division"; }
  nlohmann::json hyperparameters() const override {
    auto j = ReferencePairLayer<Scalar>::hyperparameters();
    j["eps"] = eps_;
    return j;
  }
  Tensor forward(const Tensor& x, ForwardContext<Scalar>& ctx) override;

 private:
  double eps_;
};

template <typename Scalar>
class ConjugateLayer : public ReferencePairLayer<Scalar> {
 public:
  using Tensor = ComplexTensor<Scalar>;
  using ReferencePairLayer<Scalar>::ReferencePairLayer;

  std::string kind() const override { return "conjugate"; }
  Tensor forward(const Tensor& x, ForwardContext<Scalar>& ctx) override;
};

}  // namespace cds

#endif  // CDS_LAYERS_INVARIANT_HPP
