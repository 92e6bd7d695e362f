#include "cds/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "cds/layers/prototype.hpp"
#include "cds/layers/wfm.hpp"

namespace cds {

using nlohmann::json;

template <typename Scalar>
std::vector<int> argmax_rows(const ComplexTensor<Scalar>& logits) {
  if (logits.rank() != 2) throw ShapeError("logits must be [N,K], got " + shape_string(logits.shape()));
  const Index n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    Index best = 0;
    for (Index j = 1; j < k; ++j)
      if (logits.re()[i * k + j] > logits.re()[i * k + best]) best = j;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

template <typename Scalar>
std::vector<int> predict(ModelGraph<Scalar>& model, const DatasetHandle& split, Index batch_size,
                         const SampleTransform& transform) {
  if (batch_size < 1) throw ParameterError("batch size must be >= 1");
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(split.size()));
  for (Index begin = 0; begin < split.size(); begin += batch_size) {
    const Index end = std::min(split.size(), begin + batch_size);
    std::vector<Index> pos;
    for (Index k = begin; k < end; ++k) pos.push_back(k);
    LabeledBatch<double> b = gather<double>(split, pos);
    if (transform) {
      const Shape one(b.inputs.shape().begin() + 1, b.inputs.shape().end());
      const Index per = shape_size(one);
      for (Index k = begin; k < end; ++k) {
        const Index off = (k - begin) * per;
        ComplexTensor<double> s(one, b.inputs.re().segment(off, per), b.inputs.im().segment(off, per));
        transform(s, k);
        b.inputs.re().segment(off, per) = s.re();
        b.inputs.im().segment(off, per) = s.im();
      }
    }
    const auto p = argmax_rows(model.forward(b.inputs.template cast<Scalar>(), Mode::eval));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

double accuracy(const std::vector<int>& predictions, const DatasetHandle& split) {
  if (static_cast<Index>(predictions.size()) != split.size())
    throw ShapeError("prediction count does not match split size");
  if (predictions.empty()) return 0;
  Index hits = 0;
  for (Index k = 0; k < split.size(); ++k) hits += predictions[static_cast<std::size_t>(k)] == split.label(k);
  return static_cast<double>(hits) / static_cast<double>(split.size());
}

template <typename Scalar>
double evaluate_accuracy(ModelGraph<Scalar>& model, const DatasetHandle& split, Index batch_size) {
  return accuracy(predict(model, split, batch_size), split);
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double RobustnessCurve::spread() const {
  if (points.empty()) return 0;
  double lo = points.front().mean_accuracy, hi = lo;
  for (const auto& p : points) {
    lo = std::min(lo, p.mean_accuracy);
    hi = std::max(hi, p.mean_accuracy);
  }
  return hi - lo;
}

std::string RobustnessCurve::to_csv() const {
  std::ostringstream os;
  os << "phase_max,logmag_min,logmag_max,mean_accuracy,std_accuracy,draws\n";
  for (const auto& p : points)
    os << fmt(p.phase_max) << ',' << fmt(p.logmag_min) << ',' << fmt(p.logmag_max) << ','
       << fmt(p.mean_accuracy) << ',' << fmt(p.std_accuracy) << ',' << p.draws.size() << '\n';
  return os.str();
}

json RobustnessCurve::to_json() const {
  json a = json::array();
  for (const auto& p : points)
    a.push_back({{"phase_max", p.phase_max},
                 {"logmag_min", p.logmag_min},
                 {"logmag_max", p.logmag_max},
                 {"mean_accuracy", p.mean_accuracy},
                 {"std_accuracy", p.std_accuracy},
                 {"draws", p.draws}});
  return {{"points", a}, {"spread", spread()}};
}

template <typename Scalar>
RobustnessCurve robustness_sweep(ModelGraph<Scalar>& model, const DatasetHandle& split,
                                 const RobustnessOptions& opts, const Rng& rng) {
  if (opts.phase_ranges.empty()) throw ParameterError("robustness sweep needs at least one range");
  if (opts.draws < 1) throw ParameterError("robustness sweep needs at least one draw");
  RobustnessCurve curve;
  for (std::size_t r = 0; r < opts.phase_ranges.size(); ++r) {
    const ScaleRange range{opts.phase_ranges[r], opts.logmag_min, opts.logmag_max};
    RobustnessPoint pt{range.phase_max, range.logmag_min, range.logmag_max, 0, 0, {}};
    for (int d = 0; d < opts.draws; ++d) {
      const Rng draw_rng = rng.fork(r).fork(static_cast<std::uint64_t>(d));
      const SampleTransform t = [&](ComplexTensor<double>& s, Index k) {
        Rng img_rng = draw_rng.fork(static_cast<std::uint64_t>(k));
        EncodedImage e = complex_scale_transform(EncodedImage{s, split.encoding}, range, img_rng);
        if (opts.phase_normalize) e = phase_normalize(e);
        s = std::move(e.tensor);
      };
      pt.draws.push_back(accuracy(predict(model, split, opts.batch_size, t), split));
    }
    double sum = 0;
    for (double a : pt.draws) sum += a;
    pt.mean_accuracy = sum / static_cast<double>(pt.draws.size());
    double var = 0;
    for (double a : pt.draws) var += (a - pt.mean_accuracy) * (a - pt.mean_accuracy);
    pt.std_accuracy = pt.draws.size() > 1 ? std::sqrt(var / static_cast<double>(pt.draws.size() - 1)) : 0;
    curve.points.push_back(std::move(pt));
  }
  return curve;
}

std::string BiasVarianceTable::to_csv() const {
  std::ostringstream os;
  os << "class,count,bias,variance\n";
  for (const auto& r : classes) os << r.label << ',' << r.count << ',' << fmt(r.bias) << ',' << fmt(r.variance) << '\n';
  os << "all," << [&] {
    Index n = 0;
    for (const auto& r : classes) n += r.count;
    return n;
  }() << ',' << fmt(bias) << ',' << fmt(variance) << '\n';
  return os.str();
}

json BiasVarianceTable::to_json() const {
  json a = json::array();
  for (const auto& r : classes)
    a.push_back({{"class", r.label}, {"count", r.count}, {"bias", r.bias}, {"variance", r.variance}});
  return {{"classes", a}, {"bias", bias}, {"variance", variance}, {"replicas", replicas}};
}

BiasVarianceTable bias_variance(const std::vector<std::vector<int>>& predictions,
                                const std::vector<int>& truth, int num_classes) {
  if (predictions.size() < 2) throw ParameterError("bias-variance needs at least 2 replicas");
  if (num_classes < 1) throw ParameterError("num_classes must be >= 1");
  for (const auto& p : predictions)
    if (p.size() != truth.size()) throw ShapeError("replica prediction count does not match labels");
  const double n = static_cast<double>(predictions.size());
  std::vector<double> bias_sum(static_cast<std::size_t>(num_classes)), var_sum(bias_sum.size());
  std::vector<Index> count(bias_sum.size());
  double bias_all = 0, var_all = 0;
  std::vector<int> votes(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int y = truth[i];
    if (y < 0 || y >= num_classes) throw ParameterError("label out of range");
    std::fill(votes.begin(), votes.end(), 0);
    for (const auto& p : predictions) {
      if (p[i] < 0 || p[i] >= num_classes) throw ParameterError("prediction out of range");
      ++votes[static_cast<std::size_t>(p[i])];
    }
    const int mode = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    const double b = mode != y ? 1.0 : 0.0;
    const double v = (n - votes[static_cast<std::size_t>(mode)]) / n;
    const auto c = static_cast<std::size_t>(y);
    bias_sum[c] += b;
    var_sum[c] += v;
    ++count[c];
    bias_all += b;
    var_all += v;
  }
  BiasVarianceTable t;
  t.replicas = static_cast<int>(predictions.size());
  for (int c = 0; c < num_classes; ++c) {
    const auto k = static_cast<std::size_t>(c);
    if (count[k] == 0) continue;
    t.classes.push_back({c, count[k], bias_sum[k] / static_cast<double>(count[k]),
                         var_sum[k] / static_cast<double>(count[k])});
  }
  if (!truth.empty()) {
    t.bias = bias_all / static_cast<double>(truth.size());
    t.variance = var_all / static_cast<double>(truth.size());
  }
  return t;
}

template <typename Scalar>
BiasVarianceTable bias_variance(const std::vector<ModelGraph<Scalar>*>& replicas, const DatasetHandle& split,
                                Index batch_size) {
  std::vector<std::vector<int>> preds;
  for (ModelGraph<Scalar>* m : replicas) preds.push_back(predict(*m, split, batch_size));
  std::vector<int> truth;
  for (Index k = 0; k < split.size(); ++k) truth.push_back(split.label(k));
  return bias_variance(preds, truth, split.num_classes());
}

double wfm_objective(const std::vector<std::complex<double>>& z, const std::vector<double>& w, double r,
                     double theta) {
  double f = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double dl = r - std::log(std::abs(z[i]));
    const double dp = arcdist(theta, std::arg(z[i]));
    f += w[i] * (dl * dl + dp * dp);
  }
  return f;
}

namespace {

struct GridMin {
  double r, theta, value;
};

/// Dense grid over [r0, r1] x [t0, t1], then repeated zooms around the best
/// cell. No use is made of the objective's structure.
GridMin joint_grid_min(const std::function<double(double, double)>& f, double r0, double r1) {
  const double pi = std::numbers::pi;
  double t0 = -pi, t1 = pi;
  int nr = 401, nt = 720;
  GridMin best{0, 0, std::numeric_limits<double>::infinity()};
  for (int zoom = 0; zoom < 6; ++zoom) {
    const double dr = (r1 - r0) / (nr - 1), dt = (t1 - t0) / (nt - 1);
    for (int i = 0; i < nr; ++i)
      for (int j = 0; j < nt; ++j) {
        const double r = r0 + i * dr, t = t0 + j * dt;
        const double v = f(r, t);
        if (v < best.value) best = {r, t, v};
      }
    r0 = best.r - 2 * dr;
    r1 = best.r + 2 * dr;
    t0 = best.theta - 2 * dt;
    t1 = best.theta + 2 * dt;
    nr = nt = 41;
  }
  best.theta = std::remainder(best.theta, 2 * pi);
  return best;
}

}  // namespace

WfmCheckReport wfm_decomposability_check(Rng& rng, int trials, double tolerance) {
  if (trials < 1) throw ParameterError("wfm check needs at least one trial");
  WfmCheckReport rep;
  rep.trials = trials;
  for (int t = 0; t < trials; ++t) {
    Rng tr = rng.fork(static_cast<std::uint64_t>(t));
    const int n = 1 + static_cast<int>(tr.below(8));
    std::vector<std::complex<double>> z;
    std::vector<double> w;
    double wsum = 0;
    for (int i = 0; i < n; ++i) {
      z.push_back(std::polar(std::exp(tr.uniform(-2, 2)), tr.uniform(-std::numbers::pi, std::numbers::pi)));
      w.push_back(std::exp(tr.normal()));
      wsum += w.back();
    }
    for (double& v : w) v /= wsum;

    double closed = 0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int i = 0; i < n; ++i) {
      const double l = std::log(std::abs(z[static_cast<std::size_t>(i)]));
      closed += w[static_cast<std::size_t>(i)] * l;
      lo = std::min(lo, l);
      hi = std::max(hi, l);
    }
    const auto mag_only = [&](double r) {
      double f = 0;
      for (int i = 0; i < n; ++i) {
        const double dl = r - std::log(std::abs(z[static_cast<std::size_t>(i)]));
        f += w[static_cast<std::size_t>(i)] * dl * dl;
      }
      return f;
    };
    const double searched_r = golden_section_min(mag_only, lo - 1, hi + 1);
    std::vector<double> phases;
    for (const auto& v : z) phases.push_back(std::arg(v));
    const auto phase_only = [&](double th) { return wfm_phase_objective(phases, w, th); };
    const double searched_t = minimize_on_circle(phase_only);

    const GridMin joint = joint_grid_min([&](double r, double th) { return wfm_objective(z, w, r, th); },
                                         lo - 1, hi + 1);
    const double er = std::abs(joint.r - searched_r);
    const double et = arcdist(joint.theta, searched_t);
    const bool phase_tie = std::abs(phase_only(joint.theta) - phase_only(searched_t)) <= 1e-9;
    const bool sep = er <= tolerance && (et <= tolerance || phase_tie);

    rep.max_logmag_error = std::max(rep.max_logmag_error, std::abs(searched_r - closed));
    rep.max_joint_logmag_error = std::max(rep.max_joint_logmag_error, er);
    if (!phase_tie) rep.max_joint_phase_error = std::max(rep.max_joint_phase_error, et);
    rep.separation_failures += sep ? 0 : 1;
    rep.details.push_back({closed, searched_r, searched_t, joint.r, joint.theta, sep});
  }
  rep.passed = rep.max_logmag_error <= tolerance && rep.separation_failures == 0;
  return rep;
}

std::string WfmCheckReport::to_csv() const {
  std::ostringstream os;
  os << "trial,closed_form_logmag,searched_logmag,searched_phase,joint_logmag,joint_phase,separates\n";
  for (std::size_t i = 0; i < details.size(); ++i) {
    const auto& d = details[i];
    os << i << ',' << fmt(d.closed_form_logmag) << ',' << fmt(d.searched_logmag) << ',' << fmt(d.searched_phase)
       << ',' << fmt(d.joint_logmag) << ',' << fmt(d.joint_phase) << ',' << (d.separates ? 1 : 0) << '\n';
  }
  return os.str();
}

json WfmCheckReport::to_json() const {
  return {{"trials", trials},
          {"max_logmag_error", max_logmag_error},
          {"max_joint_logmag_error", max_joint_logmag_error},
          {"max_joint_phase_error", max_joint_phase_error},
          {"separation_failures", separation_failures},
          {"passed", passed}};
}

#define CDS_INSTANTIATE_EVALUATION(S)                                                                   \
  template std::vector<int> argmax_rows<S>(const ComplexTensor<S>&);                                    \
  template std::vector<int> predict<S>(ModelGraph<S>&, const DatasetHandle&, Index, const SampleTransform&); \
  template double evaluate_accuracy<S>(ModelGraph<S>&, const DatasetHandle&, Index);                    \
  template RobustnessCurve robustness_sweep<S>(ModelGraph<S>&, const DatasetHandle&,                    \
                                               const RobustnessOptions&, const Rng&);                   \
  template BiasVarianceTable bias_variance<S>(const std::vector<ModelGraph<S>*>&, const DatasetHandle&, Index);

CDS_INSTANTIATE_EVALUATION(float)
CDS_INSTANTIATE_EVALUATION(double)

}  // namespace cds
