#ifndef CDS_TENSOR_HPP
#define CDS_TENSOR_HPP

#include <Eigen/Core>

#include <cmath>
#include <complex>
#include <numeric>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "cds/errors.hpp"
#include "cds/rng.hpp"

namespace cds {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

enum class Precision { fp32, fp64 };

template <typename Scalar>
constexpr Precision precision_of() {
  static_assert(std::is_same_v<Scalar, float> || std::is_same_v<Scalar, double>,
                "cds tensors hold float or double");
  return std::is_same_v<Scalar, float> ? Precision::fp32 : Precision::fp64;
}

inline std::string_view to_string(Precision p) {
  return p == Precision::fp32 ? "fp32" : "fp64";
}

inline Precision parse_precision(std::string_view s) {
  if (s == "fp32") return Precision::fp32;
  if (s == "fp64") return Precision::fp64;
  throw ParameterError("unknown precision '" + std::string(s) + "'");
}

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

inline void validate_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must be nonempty");
  for (Index d : shape)
    if (d < 1) throw ShapeError("tensor dimension must be >= 1, got " + shape_string(shape));
}

/// Dense complex array with planar storage: the real and imaginary parts
/// live in two separate contiguous row-major planes of equal length.
template <typename Scalar_>
class ComplexTensor {
 public:
  using Scalar = Scalar_;
  using Complex = std::complex<Scalar>;
  using Plane = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  static constexpr Precision precision = precision_of<Scalar>();

  ComplexTensor() = default;

  explicit ComplexTensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape(shape_);
    re_ = Plane::Zero(shape_size(shape_));
    im_ = Plane::Zero(shape_size(shape_));
  }

  ComplexTensor(Shape shape, Plane re, Plane im)
      : shape_(std::move(shape)), re_(std::move(re)), im_(std::move(im)) {
    validate_shape(shape_);
    if (re_.size() != shape_size(shape_) || im_.size() != shape_size(shape_))
      throw ShapeError("plane length does not match shape " + shape_string(shape_));
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return re_.size(); }
  bool empty() const { return shape_.empty(); }

  Plane& re() { return re_; }
  Plane& im() { return im_; }
  const Plane& re() const { return re_; }
  const Plane& im() const { return im_; }

  Complex operator[](Index i) const { return {re_[i], im_[i]}; }
  void set(Index i, Complex v) {
    re_[i] = v.real();
    im_[i] = v.imag();
  }

  /// Same data, new shape of identical element count.
  ComplexTensor reshaped(Shape shape) const {
    if (shape_size(shape) != size())
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return ComplexTensor(std::move(shape), re_, im_);
  }

  template <typename Other>
  ComplexTensor<Other> cast() const {
    return ComplexTensor<Other>(shape_, re_.template cast<Other>(), im_.template cast<Other>());
  }

  ComplexTensor& operator+=(const ComplexTensor& o) {
    require_same_shape(o);
    re_ += o.re_;
    im_ += o.im_;
    return *this;
  }
  ComplexTensor& operator-=(const ComplexTensor& o) {
    require_same_shape(o);
    re_ -= o.re_;
    im_ -= o.im_;
    return *this;
  }
  ComplexTensor& operator*=(Complex s) {
    const Plane r = re_ * s.real() - im_ * s.imag();
    im_ = re_ * s.imag() + im_ * s.real();
    re_ = r;
    return *this;
  }
  ComplexTensor& operator*=(Scalar s) {
    re_ *= s;
    im_ *= s;
    return *this;
  }

  void set_zero() {
    re_.setZero();
    im_.setZero();
  }

  void require_same_shape(const ComplexTensor& o) const {
    if (o.shape_ != shape_)
      throw ShapeError("shape mismatch " + shape_string(shape_) + " vs " + shape_string(o.shape_));
  }

 private:
  Shape shape_;
  Plane re_;
  Plane im_;
};

template <typename Scalar>
ComplexTensor<Scalar> operator+(ComplexTensor<Scalar> a, const ComplexTensor<Scalar>& b) {
  return a += b;
}
template <typename Scalar>
ComplexTensor<Scalar> operator-(ComplexTensor<Scalar> a, const ComplexTensor<Scalar>& b) {
  return a -= b;
}
template <typename Scalar>
ComplexTensor<Scalar> operator*(std::complex<Scalar> s, ComplexTensor<Scalar> a) {
  return a *= s;
}
template <typename Scalar>
ComplexTensor<Scalar> operator*(Scalar s, ComplexTensor<Scalar> a) {
  return a *= s;
}

/// Real-valued companion for magnitudes, phases and similar outputs.
template <typename Scalar>
struct RealTensor {
  Shape shape;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> data;

  Index size() const { return data.size(); }
  Scalar operator[](Index i) const { return data[i]; }
};

// ---------------------------------------------------------------------------
// Construction

enum class FillKind { zeros, ones, gaussian };

struct Fill {
  FillKind kind = FillKind::zeros;
  Rng* rng = nullptr;
  double mean = 0.0;
  double std = 1.0;

  static Fill zeros() { return {}; }
  static Fill ones() { return {FillKind::ones}; }
  static Fill gaussian(Rng& rng, double mean = 0.0, double std = 1.0) {
    return {FillKind::gaussian, &rng, mean, std};
  }
};

/// Gaussian fills draw all real parts first, then all imaginary parts.
template <typename Scalar>
ComplexTensor<Scalar> make_tensor(Shape shape, const Fill& fill = Fill::zeros()) {
  ComplexTensor<Scalar> t(std::move(shape));
  switch (fill.kind) {
    case FillKind::zeros:
      break;
    case FillKind::ones:
      t.re().setOnes();
      break;
    case FillKind::gaussian:
      if (!fill.rng) throw ParameterError("gaussian fill requires an rng");
      for (Index i = 0; i < t.size(); ++i)
        t.re()[i] = static_cast<Scalar>(fill.rng->normal(fill.mean, fill.std));
      for (Index i = 0; i < t.size(); ++i)
        t.im()[i] = static_cast<Scalar>(fill.rng->normal(fill.mean, fill.std));
      break;
  }
  return t;
}

template <typename Scalar>
ComplexTensor<Scalar> zeros_like(const ComplexTensor<Scalar>& t) {
  return ComplexTensor<Scalar>(t.shape());
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

enum class ElementwiseOp { add, sub, mul, div };

namespace detail {

/// Axis treated as "channel" for per-channel broadcasting: 0 for [C,H,W],
/// 1 for [N,C,H,W] and [N,C].
inline Index channel_axis(const Shape& shape) {
  return shape.size() >= 4 || shape.size() == 2 ? 1 : 0;
}

}  // namespace detail

/// Division contract: a/b computed as |a|/(|b|+eps) * exp(i(arg a - arg b)).
template <typename Scalar>
inline std::complex<Scalar> divide_offset(std::complex<Scalar> a, std::complex<Scalar> b,
                                          Scalar eps) {
  const Scalar mb = std::abs(b);
  if (mb == Scalar(0)) return a / eps;
  return a * std::conj(b) / (mb * (mb + eps));
}

/// Standard complex arithmetic. `b` either matches `a` or holds one value
/// per channel of `a` (shape [C]), broadcast over the remaining axes.
template <typename Scalar>
ComplexTensor<Scalar> complex_elementwise(const ComplexTensor<Scalar>& a,
                                          const ComplexTensor<Scalar>& b, ElementwiseOp op,
                                          Scalar eps = Scalar(0)) {
  using C = std::complex<Scalar>;
  const bool same = a.shape() == b.shape();
  Index channels = 0, inner = 1;
  if (!same) {
    const Index axis = detail::channel_axis(a.shape());
    if (b.size() != a.dim(axis) || a.rank() <= axis)
      throw ShapeError("cannot broadcast " + shape_string(b.shape()) + " onto " +
                       shape_string(a.shape()));
    channels = a.dim(axis);
    for (Index k = axis + 1; k < a.rank(); ++k) inner *= a.dim(k);
  }
  ComplexTensor<Scalar> out(a.shape());
  for (Index i = 0; i < a.size(); ++i) {
    const C x = a[i];
    const C y = same ? b[i] : b[(i / inner) % channels];
    C r;
    switch (op) {
      case ElementwiseOp::add: r = x + y; break;
      case ElementwiseOp::sub: r = x - y; break;
      case ElementwiseOp::mul: r = x * y; break;
      case ElementwiseOp::div: r = divide_offset(x, y, eps); break;
    }
    out.set(i, r);
  }
  return out;
}

template <typename Scalar>
ComplexTensor<Scalar> conj(ComplexTensor<Scalar> t) {
  t.im() = -t.im();
  return t;
}

/// Phase convention: atan2(0, 0) = 0.
template <typename Scalar>
std::pair<RealTensor<Scalar>, RealTensor<Scalar>> magnitude_phase(const ComplexTensor<Scalar>& z) {
  RealTensor<Scalar> mag{z.shape(), (z.re().square() + z.im().square()).sqrt()};
  RealTensor<Scalar> phase{z.shape(), Eigen::Array<Scalar, Eigen::Dynamic, 1>(z.size())};
  for (Index i = 0; i < z.size(); ++i) phase.data[i] = std::atan2(z.im()[i], z.re()[i]);
  return {std::move(mag), std::move(phase)};
}

/// Mean over the channel axis: [C,H,W] -> [1,H,W], [N,C,H,W] -> [N,1,H,W].
template <typename Scalar>
ComplexTensor<Scalar> channel_mean(const ComplexTensor<Scalar>& f) {
  if (f.rank() != 3 && f.rank() != 4) throw ShapeError("channel_mean expects [C,H,W] or [N,C,H,W]");
  const bool batched = f.rank() == 4;
  const Index n = batched ? f.dim(0) : 1;
  const Index c = f.dim(batched ? 1 : 0);
  const Index hw = f.size() / (n * c);
  Shape out_shape = f.shape();
  out_shape[batched ? 1 : 0] = 1;
  ComplexTensor<Scalar> m(out_shape);
  for (Index s = 0; s < n; ++s) {
    for (Index ch = 0; ch < c; ++ch) {
      m.re().segment(s * hw, hw) += f.re().segment((s * c + ch) * hw, hw);
      m.im().segment(s * hw, hw) += f.im().segment((s * c + ch) * hw, hw);
    }
  }
  m *= Scalar(1) / static_cast<Scalar>(c);
  return m;
}

/// Largest |a_i - b_i| over all entries, measured on the complex modulus.
template <typename Scalar>
Scalar max_abs_diff(const ComplexTensor<Scalar>& a, const ComplexTensor<Scalar>& b) {
  a.require_same_shape(b);
  return ((a.re() - b.re()).square() + (a.im() - b.im()).square()).sqrt().maxCoeff();
}

template <typename Scalar>
Scalar max_abs(const ComplexTensor<Scalar>& a) {
  return (a.re().square() + a.im().square()).sqrt().maxCoeff();
}

/// ||a - b||_inf / ||b||_inf, the relative error used throughout the tests.
template <typename Scalar>
Scalar max_rel_diff(const ComplexTensor<Scalar>& a, const ComplexTensor<Scalar>& b) {
  const Scalar denom = max_abs(b);
  const Scalar diff = max_abs_diff(a, b);
  return denom > Scalar(0) ? diff / denom : diff;
}

}  // namespace cds

#endif  // CDS_TENSOR_HPP
