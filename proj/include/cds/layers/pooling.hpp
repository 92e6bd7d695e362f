#ifndef CDS_LAYERS_POOLING_HPP
#define CDS_LAYERS_POOLING_HPP

#include "cds/layer.hpp"

namespace cds {

template <typename Scalar>
struct MaxPoolResult {
  ComplexTensor<Scalar> output;
  /// Flat input index of the selected element for every output element.
  std::vector<Index> argmax;
};

/// Magnitude max-pooling over [C,H,W] or [N,C,H,W]. Each window yields the
/// complex value of largest magnitude; ties go to the lowest flat index.
template <typename Scalar>
MaxPoolResult<Scalar> eq_maxpool(const ComplexTensor<Scalar>& f, Index window, Index stride);

template <typename Scalar>
class EqMaxPoolLayer : public Layer<Scalar> {
 public:
  using Tensor = ComplexTensor<Scalar>;

  EqMaxPoolLayer(Index window, Index stride);

  std::string kind() const override { return "eq_maxpool"; }
  nlohmann::json hyperparameters() const override {
    return {{"window", window_}, {"stride", stride_}};
  }
  Tensor forward(const Tensor& x, ForwardContext<Scalar>& ctx) override;

 private:
  Index window_, stride_;
};

}  // namespace cds

#endif  // CDS_LAYERS_POOLING_HPP
