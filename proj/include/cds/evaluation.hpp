#ifndef CDS_EVALUATION_HPP
#define CDS_EVALUATION_HPP

#include <numbers>

#include "cds/data.hpp"
#include "cds/models.hpp"

namespace cds {

/// Row-wise argmax of the real plane of [N, K] logits; ties go to the
/// lowest index.
template <typename Scalar>
std::vector<int> argmax_rows(const ComplexTensor<Scalar>& logits);

/// Optional per-image transform applied to the fp64 sample before it is
/// cast to the model precision. `k` is the position within the split.
using SampleTransform = std::function<void(ComplexTensor<double>& sample, Index k)>;

/// Eval-mode predictions over the split in index order.
template <typename Scalar>
std::vector<int> predict(ModelGraph<Scalar>& model, const DatasetHandle& split, Index batch_size = 256,
                         const SampleTransform& transform = {});

double accuracy(const std::vector<int>& predictions, const DatasetHandle& split);

template <typename Scalar>
double evaluate_accuracy(ModelGraph<Scalar>& model, const DatasetHandle& split, Index batch_size = 256);

struct RobustnessPoint {
  double phase_max;
  double logmag_min;
  double logmag_max;
  double mean_accuracy;
  double std_accuracy;
  std::vector<double> draws;
};

struct RobustnessCurve {
  std::vector<RobustnessPoint> points;
  /// Largest minus smallest mean accuracy over the ranges.
  double spread() const;
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

struct RobustnessOptions {
  std::vector<double> phase_ranges = {0, std::numbers::pi / 8, std::numbers::pi / 4,
                                      std::numbers::pi / 2, std::numbers::pi};
  double logmag_min = 0;
  double logmag_max = 0;
  int draws = 10;
  Index batch_size = 256;
  /// Cancel each image's mean phase after scaling (baseline preprocessing).
  bool phase_normalize = false;
};

/// For each range and draw, multiplies every image by its own random
/// complex scale and measures accuracy. Draw d of range r uses
/// rng.fork(r).fork(d).fork(k) for image k, so results do not depend on
/// evaluation order.
template <typename Scalar>
RobustnessCurve robustness_sweep(ModelGraph<Scalar>& model, const DatasetHandle& split,
                                 const RobustnessOptions& opts, const Rng& rng);

struct BiasVarianceRow {
  int label;
  Index count;
  double bias;
  double variance;
};

struct BiasVarianceTable {
  std::vector<BiasVarianceRow> classes;
  /// Means over instances.
  double bias = 0;
  double variance = 0;
  int replicas = 0;
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

/// Modal prediction per instance (ties to the smallest class); bias is its
/// 0-1 loss, variance the mean disagreement of the replicas with it.
/// predictions[r][i] is replica r on instance i.
BiasVarianceTable bias_variance(const std::vector<std::vector<int>>& predictions,
                                const std::vector<int>& truth, int num_classes);

template <typename Scalar>
BiasVarianceTable bias_variance(const std::vector<ModelGraph<Scalar>*>& replicas, const DatasetHandle& split,
                                Index batch_size = 256);

struct WfmTrial {
  double closed_form_logmag;
  double searched_logmag;
  double searched_phase;
  double joint_logmag;
  double joint_phase;
  bool separates;
};

struct WfmCheckReport {
  int trials = 0;
  double max_logmag_error = 0;
  double max_joint_logmag_error = 0;
  double max_joint_phase_error = 0;
  int separation_failures = 0;
  bool passed = false;
  std::vector<WfmTrial> details;
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

/// Objective sum_i w_i * [(r - ln|z_i|)^2 + arcdist(theta, arg z_i)^2].
double wfm_objective(const std::vector<std::complex<double>>& z, const std::vector<double>& w, double r,
                     double theta);

/// Random point sets and convex weights; compares the closed-form
/// log-magnitude with a 1-D search, and a 2-D grid search of the joint
/// objective with the pair of 1-D minimizers.
WfmCheckReport wfm_decomposability_check(Rng& rng, int trials, double tolerance = 1e-3);

}  // namespace cds

#endif  // CDS_EVALUATION_HPP
