#include "cds/layers/real.hpp"

#include <cmath>

#include "cds/layers/nonlinear.hpp"

namespace cds {

namespace {

Index batch_inner(const Shape& s, Index& n, Index& c) {
  if (s.size() < 2) throw ShapeError("expected [N,C,...], got " + shape_string(s));
  n = s[0];
  c = s[1];
  return shape_size(s) / (n * c);
}

template <typename Scalar>
ComplexTensor<Scalar> real_only(const Shape& shape,
                                Eigen::Array<Scalar, Eigen::Dynamic, 1> re) {
  const Index size = re.size();
  return ComplexTensor<Scalar>(shape, std::move(re),
                               Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(size));
}

}  // namespace

template <typename Scalar>
ComplexTensor<Scalar> complex_to_real(const ComplexTensor<Scalar>& z) {
  Index n, c;
  const Index hw = batch_inner(z.shape(), n, c);
  Shape out_shape = z.shape();
  out_shape[1] = 3 * c;
  ComplexTensor<Scalar> out(out_shape);
  const Scalar floor = static_cast<Scalar>(kNormFloor);
  for (Index s = 0; s < n; ++s)
    for (Index ch = 0; ch < c; ++ch)
      for (Index p = 0; p < hw; ++p) {
        const std::complex<Scalar> v = z[(s * c + ch) * hw + p];
        const Scalar mag = std::abs(v);
        const Scalar phase = std::atan2(v.imag(), v.real());
        const Index base = (s * 3 * c + 3 * ch) * hw + p;
        out.re()[base] = std::log(std::max(mag, floor));
        out.re()[base + hw] = std::sin(phase);
        out.re()[base + 2 * hw] = std::cos(phase);
      }
  return out;
}

template <typename Scalar>
ComplexTensor<Scalar> ComplexToRealLayer<Scalar>::forward(const Tensor& x,
                                                          ForwardContext<Scalar>& ctx) {
  if (ctx.kinks) {
    ctx.observe(static_cast<double>((x.re().square() + x.im().square()).sqrt().minCoeff()) /
                kKinkMagnitude);
    ctx.branches((x.re().square() + x.im().square()).sqrt() > static_cast<Scalar>(kNormFloor));
  }
  Tensor y = complex_to_real(x);
  if (ctx.recording()) {
    ctx.tape->record("complex_to_real", [x](const Tensor& g) {
      Index n, c;
      const Index hw = batch_inner(x.shape(), n, c);
      Tensor gx(x.shape());
      const Scalar floor = static_cast<Scalar>(kNormFloor);
      for (Index s = 0; s < n; ++s)
        for (Index ch = 0; ch < c; ++ch)
          for (Index p = 0; p < hw; ++p) {
            const Index i = (s * c + ch) * hw + p;
            const std::complex<Scalar> v = x[i];
            const Scalar n2 = std::norm(v);
            if (std::sqrt(n2) <= floor) continue;
            const Index base = (s * 3 * c + 3 * ch) * hw + p;
            const Scalar phase = std::atan2(v.imag(), v.real());
            const Scalar g_log = g.re()[base];
            const Scalar g_phase =
                g.re()[base + hw] * std::cos(phase) - g.re()[base + 2 * hw] * std::sin(phase);
            gx.set(i, (g_log * v + g_phase * std::complex<Scalar>(0, 1) * v) / n2);
          }
      return gx;
    });
  }
  return y;
}

template <typename Scalar>
ComplexTensor<Scalar> SplitReImLayer<Scalar>::forward(const Tensor& x,
                                                      ForwardContext<Scalar>& ctx) {
  Index n, c;
  const Index inner = batch_inner(x.shape(), n, c);
  Shape out_shape = x.shape();
  out_shape[1] = 2 * c;
  Tensor y(out_shape);
  for (Index s = 0; s < n; ++s) {
    y.re().segment(s * 2 * c * inner, c * inner) = x.re().segment(s * c * inner, c * inner);
    y.re().segment((s * 2 + 1) * c * inner, c * inner) = x.im().segment(s * c * inner, c * inner);
  }
  if (ctx.recording()) {
    ctx.tape->record("split_re_im", [shape = x.shape(), n, c, inner](const Tensor& g) {
      Tensor gx(shape);
      for (Index s = 0; s < n; ++s) {
        gx.re().segment(s * c * inner, c * inner) = g.re().segment(s * 2 * c * inner, c * inner);
        gx.im().segment(s * c * inner, c * inner) =
            g.re().segment((s * 2 + 1) * c * inner, c * inner);
      }
      return gx;
    });
  }
  return y;
}

template <typename Scalar>
RealConvLayer<Scalar>::RealConvLayer(const ConvSpec& spec, bool bias, Rng& rng)
    : spec_(spec),
      has_bias_(bias),
      weight_("weight", ComplexTensor<Scalar>(spec.weight_shape()), true),
      bias_("bias", ComplexTensor<Scalar>(Shape{spec.out_channels}), true) {
  const double fan_in = static_cast<double>(spec.in_channels / spec.groups * spec.kernel * spec.kernel);
  const double std = std::sqrt(2.0 / fan_in);
  for (Index i = 0; i < weight_.value.size(); ++i)
    weight_.value.re()[i] = static_cast<Scalar>(rng.normal(0.0, std));
}

template <typename Scalar>
ComplexTensor<Scalar> RealConvLayer<Scalar>::forward(const Tensor& x, ForwardContext<Scalar>& ctx) {
  const ConvGeometry geom = spec_.geometry();
  Tensor y = conv2d_real(x, weight_.value, geom);
  Index n, c;
  const Index hw = batch_inner(y.shape(), n, c);
  if (has_bias_)
    for (Index s = 0; s < n; ++s)
      for (Index ch = 0; ch < c; ++ch) y.re().segment((s * c + ch) * hw, hw) += bias_.value.re()[ch];
  if (ctx.recording()) {
    ctx.tape->record("real_conv", [this, x, geom, n, c, hw](const Tensor& g) {
      ConvGradients<Scalar> grads = conv2d_real_backward(x, weight_.value, g, geom);
      weight_.grad.re() += grads.weight.re();
      if (has_bias_)
        for (Index s = 0; s < n; ++s)
          for (Index ch = 0; ch < c; ++ch)
            bias_.grad.re()[ch] += g.re().segment((s * c + ch) * hw, hw).sum();
      grads.input.im().setZero();
      return std::move(grads.input);
    });
  }
  return y;
}

template <typename Scalar>
ComplexTensor<Scalar> ReluLayer<Scalar>::forward(const Tensor& x, ForwardContext<Scalar>& ctx) {
  if (ctx.kinks) {
    ctx.observe(static_cast<double>(x.re().abs().minCoeff()) / kKinkGap);
    ctx.branches(x.re() > Scalar(0));
  }
  Tensor y = real_only<Scalar>(x.shape(), x.re().max(Scalar(0)));
  if (ctx.recording()) {
    ctx.tape->record("relu", [x](const Tensor& g) {
      return real_only<Scalar>(x.shape(), (x.re() > Scalar(0)).select(g.re(), Scalar(0)));
    });
  }
  return y;
}

template <typename Scalar>
LinearLayer<Scalar>::LinearLayer(Index in_features, Index out_features, Rng& rng)
    : in_(in_features),
      out_(out_features),
      weight_("weight", ComplexTensor<Scalar>(Shape{out_features, in_features}), true),
      bias_("bias", ComplexTensor<Scalar>(Shape{out_features}), true) {
  const double std = std::sqrt(2.0 / static_cast<double>(in_features));
  for (Index i = 0; i < weight_.value.size(); ++i)
    weight_.value.re()[i] = static_cast<Scalar>(rng.normal(0.0, std));
}

template <typename Scalar>
LinearLayer<Scalar>::LinearLayer(Tensor weight, Tensor bias)
    : in_(weight.dim(1)),
      out_(weight.dim(0)),
      weight_("weight", std::move(weight), true),
      bias_("bias", std::move(bias), true) {
  if (weight_.value.rank() != 2 || bias_.value.shape() != Shape{out_})
    throw ShapeError("linear weight must be [out,in] with bias [out]");
}

template <typename Scalar>
ComplexTensor<Scalar> LinearLayer<Scalar>::forward(const Tensor& x, ForwardContext<Scalar>& ctx) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Index n = x.dim(0);
  if (x.size() != n * in_)
    throw ShapeError("linear expects " + std::to_string(in_) + " features per sample, got " +
                     shape_string(x.shape()));
  const Eigen::Map<const Mat> f(x.re().data(), n, in_);
  const Eigen::Map<const Mat> w(weight_.value.re().data(), out_, in_);
  Mat y = f * w.transpose();
  y.rowwise() += bias_.value.re().matrix().transpose();
  Tensor out = real_only<Scalar>({n, out_}, Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(y.data(), y.size()));
  if (ctx.recording()) {
    ctx.tape->record("linear", [this, x, n](const Tensor& g) {
      const Eigen::Map<const Mat> f(x.re().data(), n, in_);
      const Eigen::Map<const Mat> w(weight_.value.re().data(), out_, in_);
      const Eigen::Map<const Mat> gm(g.re().data(), n, out_);
      Eigen::Map<Mat>(weight_.grad.re().data(), out_, in_) += gm.transpose() * f;
      bias_.grad.re() += gm.colwise().sum().transpose().array();
      Mat gx = gm * w;
      return real_only<Scalar>(x.shape(),
                               Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(gx.data(), gx.size()));
    });
  }
  return out;
}

template <typename Scalar>
AvgPoolLayer<Scalar>::AvgPoolLayer(Index window, Index stride) : window_(window), stride_(stride) {
  if (window < 1 || stride < 1) throw ParameterError("avgpool window and stride must be >= 1");
}

template <typename Scalar>
ComplexTensor<Scalar> AvgPoolLayer<Scalar>::forward(const Tensor& x, ForwardContext<Scalar>& ctx) {
  if (x.rank() != 4) throw ShapeError("avgpool expects [N,C,H,W]");
  const Index planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (window_ > h || window_ > w) throw ShapeError("avgpool window larger than input");
  const Index ho = (h - window_) / stride_ + 1, wo = (w - window_) / stride_ + 1;
  const Scalar scale = Scalar(1) / static_cast<Scalar>(window_ * window_);
  Tensor y(Shape{x.dim(0), x.dim(1), ho, wo});
  auto visit = [planes, ho, wo, h, w, k = window_, st = stride_](auto&& fn) {
    for (Index p = 0; p < planes; ++p)
      for (Index oy = 0; oy < ho; ++oy)
        for (Index ox = 0; ox < wo; ++ox)
          for (Index ky = 0; ky < k; ++ky)
            for (Index kx = 0; kx < k; ++kx)
              fn((p * ho + oy) * wo + ox, (p * h + oy * st + ky) * w + ox * st + kx);
  };
  visit([&](Index o, Index i) {
    y.re()[o] += scale * x.re()[i];
    y.im()[o] += scale * x.im()[i];
  });
  if (ctx.recording()) {
    ctx.tape->record("avgpool", [shape = x.shape(), visit, scale](const Tensor& g) {
      Tensor gx(shape);
      visit([&](Index o, Index i) {
        gx.re()[i] += scale * g.re()[o];
        gx.im()[i] += scale * g.im()[o];
      });
      return gx;
    });
  }
  return y;
}

#define CDS_INSTANTIATE_REAL(S)                                        \
  template ComplexTensor<S> complex_to_real<S>(const ComplexTensor<S>&); \
  template class ComplexToRealLayer<S>;                                \
  template class SplitReImLayer<S>;                                    \
  template class RealConvLayer<S>;                                     \
  template class ReluLayer<S>;                                         \
  template class LinearLayer<S>;                                       \
  template class AvgPoolLayer<S>;

CDS_INSTANTIATE_REAL(float)
CDS_INSTANTIATE_REAL(double)

}  // namespace cds
