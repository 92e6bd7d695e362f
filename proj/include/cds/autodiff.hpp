#ifndef CDS_AUTODIFF_HPP
#define CDS_AUTODIFF_HPP

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "cds/tensor.hpp"

namespace cds {

/// A learnable (or persistent) tensor with its accumulated cotangent.
/// Cotangents are real-pair gradients stored as grad.re = dL/d(re),
/// grad.im = dL/d(im). The Wirtinger derivative dL/dz* is (grad.re + i grad.im)/2.
template <typename Scalar>
struct Parameter {
  std::string name;
  ComplexTensor<Scalar> value;
  ComplexTensor<Scalar> grad;
  /// Imaginary coordinate pinned at zero (real-valued weights, scales, ...).
  bool real = false;
  /// Running statistics are persisted but never optimized.
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, ComplexTensor<Scalar> v, bool is_real = false, bool is_trainable = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), real(is_real),
        trainable(is_trainable) {}

  void zero_grad() { grad.set_zero(); }
  /// Count with complex entries counted once.
  Index count() const { return value.size(); }
  /// Count of real coordinates the optimizer updates.
  Index real_coordinates() const { return real ? value.size() : 2 * value.size(); }
};

enum class Mode { train, eval };

/// Distances below which a point counts as sitting on a non-differentiable
/// locus: magnitudes near zero, angular or threshold kinks, pooling ties
/// (relative gap between the two largest magnitudes).
inline constexpr double kKinkMagnitude = 0.1;
inline constexpr double kKinkGap = 0.05;
inline constexpr double kKinkTie = 0.01;

/// Smallest normalized distance (distance / its k-constant above) to a
/// non-differentiable locus seen during a forward pass. Values >= 1 mean
/// every layer stayed clear of its kinks.
struct KinkMonitor {
  double min_margin = std::numeric_limits<double>::infinity();
  /// Hash of the discrete branch decisions taken (signs, argmaxes, floors).
  std::uint64_t signature = 0xcbf29ce484222325ULL;
  void observe(double margin) {
    if (margin < min_margin) min_margin = margin;
  }
  void branch(std::uint64_t d) { signature = (signature ^ d) * 0x100000001b3ULL; }
};

/// Ordered record of executed operations. Each entry maps the cotangent of
/// its output to the cotangent of its input and accumulates parameter
/// gradients as a side effect. Entries form a chain.
template <typename Scalar>
class Tape {
 public:
  using Tensor = ComplexTensor<Scalar>;
  using BackwardFn = std::function<Tensor(const Tensor&)>;

  void record(std::string op, BackwardFn fn) {
    entries_.push_back({std::move(op), std::move(fn)});
  }

  /// Runs every entry in reverse and returns the cotangent of the first
  /// recorded input. The tape is consumed.
  Tensor backward(const Tensor& seed) {
    if (entries_.empty()) throw StateError("backward called on an empty tape");
    Tensor g = seed;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) g = it->fn(g);
    entries_.clear();
    return g;
  }

  /// Backward from a scalar loss recorded as the last entry (shape [1]).
  Tensor backward(Scalar loss_cotangent = Scalar(1)) {
    Tensor seed(Shape{1});
    seed.re()[0] = loss_cotangent;
    return backward(seed);
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::vector<std::string> ops() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) out.push_back(e.op);
    return out;
  }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    std::string op;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
};

template <typename Scalar>
struct ForwardContext {
  Tape<Scalar>* tape = nullptr;
  Mode mode = Mode::train;
  KinkMonitor* kinks = nullptr;

  bool recording() const { return tape != nullptr; }
  void observe(double margin) const {
    if (kinks) kinks->observe(margin);
  }
  void branch(std::uint64_t d) const {
    if (kinks) kinks->branch(d);
  }
  template <typename Derived>
  void branches(const Eigen::ArrayBase<Derived>& mask) const {
    if (!kinks) return;
    for (Index i = 0; i < mask.size(); ++i) kinks->branch(mask.derived().coeff(i) ? 1 : 0);
  }
};

/// Central differences (f(p + h e) - f(p - h e)) / 2h over every real
/// coordinate of every parameter. Real-valued parameters skip the imaginary
/// coordinate. Throws EvaluationError if f returns a non-finite value.
template <typename Scalar>
std::vector<ComplexTensor<Scalar>> finite_diff_grad(const std::function<double()>& f,
                                                    const std::vector<Parameter<Scalar>*>& params,
                                                    double h) {
  if (!(h > 0)) throw ParameterError("finite difference step must be positive");
  auto eval = [&] {
    const double v = f();
    if (!std::isfinite(v)) throw EvaluationError("finite difference objective is not finite");
    return v;
  };
  std::vector<ComplexTensor<Scalar>> grads;
  for (Parameter<Scalar>* p : params) {
    ComplexTensor<Scalar> g(p->value.shape());
    for (int part = 0; part < (p->real ? 1 : 2); ++part) {
      auto& plane = part == 0 ? p->value.re() : p->value.im();
      auto& out = part == 0 ? g.re() : g.im();
      for (Index i = 0; i < plane.size(); ++i) {
        const Scalar orig = plane[i];
        plane[i] = static_cast<Scalar>(orig + h);
        const double up = eval();
        plane[i] = static_cast<Scalar>(orig - h);
        const double down = eval();
        plane[i] = orig;
        out[i] = static_cast<Scalar>((up - down) / (2 * h));
      }
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace cds

#endif  // CDS_AUTODIFF_HPP
