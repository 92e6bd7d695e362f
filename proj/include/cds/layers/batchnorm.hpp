#ifndef CDS_LAYERS_BATCHNORM_HPP
#define CDS_LAYERS_BATCHNORM_HPP

#include "cds/layer.hpp"

namespace cds {

/// Batch normalization of magnitudes only: out = BN(|f|) * f/|f|, with the
/// per-channel statistics taken over N, H and W. The variance offset is
/// eps * mean^2, so scaling a batch by a positive real leaves the output
/// unchanged exactly. Running statistics (momentum 0.1, unbiased variance)
/// are updated in train mode and used in eval mode.
template <typename Scalar>
class EqBatchNormLayer : public Layer<Scalar> {
 public:
  using Tensor = ComplexTensor<Scalar>;

  explicit EqBatchNormLayer(Index channels, double momentum = 0.1, double eps = 1e-5);

  std::string kind() const override { return "eq_batchnorm"; }
  nlohmann::json hyperparameters() const override {
    return {{"channels", channels_}, {"momentum", momentum_}, {"eps", eps_}};
  }
  Tensor forward(const Tensor& x, ForwardContext<Scalar>& ctx) override;
  std::vector<Parameter<Scalar>*> parameters() override {
    return {&gamma_, &beta_, &running_mean_, &running_var_};
  }

  Parameter<Scalar>& gamma() { return gamma_; }
  Parameter<Scalar>& beta() { return beta_; }
  const Parameter<Scalar>& running_mean() const { return running_mean_; }
  const Parameter<Scalar>& running_var() const { return running_var_; }
  /// Number of train-mode batches folded into the running statistics.
  Index updates() const { return updates_; }

 private:
  Index channels_;
  double momentum_, eps_;
  Parameter<Scalar> gamma_, beta_, running_mean_, running_var_;
  Index updates_ = 0;
  bool warned_ = false;
};

}  // namespace cds

#endif  // CDS_LAYERS_BATCHNORM_HPP
