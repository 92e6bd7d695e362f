#include "cds/layers/invariant.hpp"

namespace cds {

template <typename Scalar>
ComplexTensor<Scalar> division_layer(const ComplexTensor<Scalar>& z1,
                                     const ComplexTensor<Scalar>& z2, Scalar eps) {
  return complex_elementwise(z1, z2, ElementwiseOp::div, eps);
}

template <typename Scalar>
ComplexTensor<Scalar> conjugate_layer(const ComplexTensor<Scalar>& z1,
                                      const ComplexTensor<Scalar>& z2) {
  return complex_elementwise(z1, conj(z2), ElementwiseOp::mul);
}

template <typename Scalar>
ReferencePairLayer<Scalar>::ReferencePairLayer(Index channels, Index kernel, Rng& rng)
    : channels_(channels),
      kernel_(kernel),
      weight_("reference.weight",
              init_complex_weight<Scalar>({1, channels, kernel, kernel}, channels * kernel * kernel,
                                          rng)) {
  if (kernel < 1 || kernel % 2 == 0) throw ParameterError("reference kernel must be odd");
}

template <typename Scalar>
ComplexTensor<Scalar> ReferencePairLayer<Scalar>::reference(const Tensor& x) const {
  return conv2d(x, weight_.value, geometry(), ConvMethod::gauss);
}

namespace {

struct Layout {
  Index n, c, hw;
};

template <typename Scalar>
Layout layout(const ComplexTensor<Scalar>& x, Index channels) {
  if (x.rank() != 4 || x.dim(1) != channels)
    throw ShapeError("expected [N," + std::to_string(channels) + ",H,W], got " +
                     shape_string(x.shape()));
  return {x.dim(0), channels, x.dim(2) * x.dim(3)};
}

}  // namespace

template <typename Scalar>
ComplexTensor<Scalar> DivisionLayer<Scalar>::forward(const Tensor& x, ForwardContext<Scalar>& ctx) {
  using Plane = typename Tensor::Plane;
  const Layout l = layout(x, this->channels_);
  const Tensor ref = this->reference(x);
  const Scalar eps = static_cast<Scalar>(eps_);
  const Plane rho = (ref.re().square() + ref.im().square()).sqrt();
  if (ctx.kinks) {
    const double rms = std::sqrt(static_cast<double>(rho.square().mean()));
    ctx.observe(rms > 0 ? static_cast<double>(rho.minCoeff()) / (kKinkMagnitude * rms) : 0.0);
  }
  // x / ref with offset magnitude equals x * conj(ref) / (rho (rho + eps)),
  // and x / eps where ref vanishes.
  const auto zero_ref = rho == Scalar(0);
  const Plane denom = zero_ref.select(Scalar(1), rho * (rho + eps));
  const Plane kr = zero_ref.select(Scalar(1) / eps, ref.re() / denom);
  const Plane ki = zero_ref.select(Scalar(0), -ref.im() / denom);
  Tensor out(x.shape());
  for (Index s = 0; s < l.n; ++s)
    for (Index ch = 0; ch < l.c; ++ch) {
      const Index off = (s * l.c + ch) * l.hw;
      const auto xr = x.re().segment(off, l.hw), xi = x.im().segment(off, l.hw);
      const auto fr = kr.segment(s * l.hw, l.hw), fi = ki.segment(s * l.hw, l.hw);
      out.re().segment(off, l.hw) = xr * fr - xi * fi;
      out.im().segment(off, l.hw) = xr * fi + xi * fr;
    }
  if (ctx.recording()) {
    ctx.tape->record("division", [this, x, ref, rho, kr, ki, l, eps](const Tensor& g) {
      Tensor gx(x.shape());
      Tensor gref(ref.shape());
      Plane gwr = Plane::Zero(l.n * l.hw), gwi = Plane::Zero(l.n * l.hw);
      for (Index s = 0; s < l.n; ++s)
        for (Index ch = 0; ch < l.c; ++ch) {
          const Index off = (s * l.c + ch) * l.hw;
          const auto xr = x.re().segment(off, l.hw), xi = x.im().segment(off, l.hw);
          const auto gr = g.re().segment(off, l.hw), gi = g.im().segment(off, l.hw);
          // The map is C-linear in x, so dx = conj(factor) * g.
          const auto fr = kr.segment(s * l.hw, l.hw), fi = ki.segment(s * l.hw, l.hw);
          gx.re().segment(off, l.hw) = fr * gr + fi * gi;
          gx.im().segment(off, l.hw) = fr * gi - fi * gr;
          // gw = sum over channels of conj(x) g.
          gwr.segment(s * l.hw, l.hw) += xr * gr + xi * gi;
          gwi.segment(s * l.hw, l.hw) += xr * gi - xi * gr;
        }
      for (Index j = 0; j < l.n * l.hw; ++j) {
        const Scalar r = rho[j];
        if (r == Scalar(0)) continue;
        const std::complex<Scalar> z2 = ref[j], gw(gwr[j], gwi[j]);
        const Scalar q = r * (r + eps);
        const Scalar dk = -(2 * r + eps) / (q * q);
        gref.set(j, std::conj(gw) / q + (dk / r) * (z2 * gw).real() * z2);
      }
      ConvGradients<Scalar> cg = conv2d_backward(x, this->weight_.value, gref, this->geometry());
      this->weight_.grad += cg.weight;
      gx += cg.input;
      return gx;
    });
  }
  return out;
}

template <typename Scalar>
ComplexTensor<Scalar> ConjugateLayer<Scalar>::forward(const Tensor& x,
                                                      ForwardContext<Scalar>& ctx) {
  using C = std::complex<Scalar>;
  const Layout l = layout(x, this->channels_);
  const Tensor ref = this->reference(x);
  Tensor out(x.shape());
  for (Index s = 0; s < l.n; ++s)
    for (Index ch = 0; ch < l.c; ++ch)
      for (Index p = 0; p < l.hw; ++p) {
        const Index i = (s * l.c + ch) * l.hw + p;
        out.set(i, x[i] * std::conj(ref[s * l.hw + p]));
      }
  if (ctx.recording()) {
    ctx.tape->record("conjugate", [this, x, ref, l](const Tensor& g) {
      Tensor gx(x.shape());
      Tensor gref(ref.shape());
      for (Index s = 0; s < l.n; ++s)
        for (Index p = 0; p < l.hw; ++p) {
          const Index j = s * l.hw + p;
          C acc{};
          for (Index ch = 0; ch < l.c; ++ch) {
            const Index i = (s * l.c + ch) * l.hw + p;
            gx.set(i, ref[j] * g[i]);
            acc += x[i] * std::conj(g[i]);
          }
          gref.set(j, acc);
        }
      ConvGradients<Scalar> cg = conv2d_backward(x, this->weight_.value, gref, this->geometry());
      this->weight_.grad += cg.weight;
      gx += cg.input;
      return gx;
    });
  }
  return out;
}

#define CDS_INSTANTIATE_INVARIANT(S)                                                        \
  template ComplexTensor<S> division_layer<S>(const ComplexTensor<S>&, const ComplexTensor<S>&, \
                                              S);                                           \
  template ComplexTensor<S> conjugate_layer<S>(const ComplexTensor<S>&,                     \
                                               const ComplexTensor<S>&);                    \
  template class ReferencePairLayer<S>;                                                     \
  template class DivisionLayer<S>;                                                          \
  template class ConjugateLayer<S>;

CDS_INSTANTIATE_INVARIANT(float)
CDS_INSTANTIATE_INVARIANT(double)

}  // namespace cds
