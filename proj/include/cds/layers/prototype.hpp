#ifndef CDS_LAYERS_PROTOTYPE_HPP
#define CDS_LAYERS_PROTOTYPE_HPP

#include "cds/layer.hpp"

namespace cds {

enum class Metric { manifold, euclidean };

std::string_view to_string(Metric m);
Metric parse_metric(std::string_view s);

/// Geodesic distance on the circle: min(|a-b|, 2pi-|a-b|).
double arcdist(double a, double b);

/// sqrt((ln|z1| - ln|z2|)^2 + arcdist(arg z1, arg z2)^2), magnitudes floored
/// at 1e-12 before the log.
template <typename Scalar>
Scalar manifold_distance(std::complex<Scalar> z1, std::complex<Scalar> z2);

/// Classifier head: logit_i = -alpha * D(f, t_i) where t_i = p_i (plain) or
/// p_i * mean(f) (invariant). D aggregates per-entry manifold distances as
/// a root sum of squares, or is the complex Euclidean norm of f - t_i.
/// Input [N, D_emb] or [N, D_emb, 1, 1]; output logits [N, K] in the real
/// plane.
template <typename Scalar>
class PrototypeLayer : public Layer<Scalar> {
 public:
  using Tensor = ComplexTensor<Scalar>;

  /// Prototype entries start as unit-magnitude phasors with Gaussian-drawn
  /// directions; log alpha starts at -ln(D_emb)/2.
  PrototypeLayer(Index embedding, Index classes, Metric metric, bool invariant, Rng& rng);

  std::string kind() const override { return "prototype"; }
  nlohmann::json hyperparameters() const override {
    return {{"embedding", embedding_},
            {"classes", classes_},
            {"metric", std::string(to_string(metric_))},
            {"invariant", invariant_}};
  }
  Tensor forward(const Tensor& x, ForwardContext<Scalar>& ctx) override;
  std::vector<Parameter<Scalar>*> parameters() override { return {&prototypes_, &log_alpha_}; }

  Parameter<Scalar>& prototypes() { return prototypes_; }
  Parameter<Scalar>& log_alpha() { return log_alpha_; }

 private:
  Index embedding_, classes_;
  Metric metric_;
  bool invariant_;
  Parameter<Scalar> prototypes_;
  Parameter<Scalar> log_alpha_;
};

/// Logits of one embedding against an explicit prototype matrix [K, D].
template <typename Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 1> prototype_logits(const ComplexTensor<Scalar>& f,
                                                         const ComplexTensor<Scalar>& prototypes,
                                                         Scalar alpha, Metric metric,
                                                         bool invariant);

}  // namespace cds

#endif  // CDS_LAYERS_PROTOTYPE_HPP
