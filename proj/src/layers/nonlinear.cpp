#include "cds/layers/nonlinear.hpp"

#include <cmath>
#include <numbers>

namespace cds {

namespace {

/// Number of elements per channel slice for per-channel parameters.
struct ChannelLayout {
  Index channels;
  Index inner;
  Index channel_of(Index flat) const { return (flat / inner) % channels; }
};

ChannelLayout channel_layout(const Shape& shape) {
  const Index axis = detail::channel_axis(shape);
  if (static_cast<Index>(shape.size()) <= axis) return {1, 1};
  Index inner = 1;
  for (std::size_t k = static_cast<std::size_t>(axis) + 1; k < shape.size(); ++k) inner *= shape[k];
  return {shape[static_cast<std::size_t>(axis)], inner};
}

template <typename Scalar>
struct GTReluEval {
  std::complex<Scalar> y;
  Scalar mag, phase;
};

template <typename Scalar>
GTReluEval<Scalar> gtrelu_point(std::complex<Scalar> u, Scalar r, Scalar omega) {
  const Scalar mag = std::sqrt(u.real() * u.real() + u.imag() * u.imag());
  const Scalar phase = std::atan2(u.imag(), u.real());
  const Scalar m = std::max(r, mag);
  if (phase <= Scalar(0)) return {{m, Scalar(0)}, mag, phase};
  const Scalar p = omega * phase;
  return {{m * std::cos(p), m * std::sin(p)}, mag, phase};
}

/// Batched view [N, C, HW] of a rank-3 or rank-4 feature map.
struct MapLayout {
  Index n, c, hw;
};

MapLayout map_layout(const Shape& s) {
  if (s.size() == 4) return {s[0], s[1], s[2] * s[3]};
  if (s.size() == 3) return {1, s[0], s[1] * s[2]};
  if (s.size() == 2) return {s[0], s[1], 1};
  throw ShapeError("expected a feature map, got " + shape_string(s));
}

}  // namespace

template <typename Scalar>
ComplexTensor<Scalar> crelu(const ComplexTensor<Scalar>& z) {
  return ComplexTensor<Scalar>(z.shape(), z.re().max(Scalar(0)), z.im().max(Scalar(0)));
}

template <typename Scalar>
ComplexTensor<Scalar> gtrelu(const ComplexTensor<Scalar>& x, Scalar r,
                             const ComplexTensor<Scalar>& c, const ComplexTensor<Scalar>& omega) {
  const ChannelLayout cl = channel_layout(x.shape());
  if (c.size() != cl.channels || omega.size() != cl.channels)
    throw ShapeError("gtrelu expects one c and omega per channel");
  ComplexTensor<Scalar> y(x.shape());
  for (Index i = 0; i < x.size(); ++i) {
    const Index ch = cl.channel_of(i);
    y.set(i, gtrelu_point(c[ch] * x[i], r, omega.re()[ch]).y);
  }
  return y;
}

template <typename Scalar>
ComplexTensor<Scalar> equivariant_wrap(
    const ComplexTensor<Scalar>& f,
    const std::function<ComplexTensor<Scalar>(const ComplexTensor<Scalar>&)>& nonlinearity) {
  const MapLayout l = map_layout(f.shape());
  ComplexTensor<Scalar> q(f.shape());
  ComplexTensor<Scalar> mhat(Shape{l.n, l.hw});
  for (Index s = 0; s < l.n; ++s)
    for (Index p = 0; p < l.hw; ++p) {
      std::complex<Scalar> m{};
      for (Index ch = 0; ch < l.c; ++ch) m += f[(s * l.c + ch) * l.hw + p];
      m /= static_cast<Scalar>(l.c);
      const Scalar norm = std::max(std::abs(m), static_cast<Scalar>(kNormFloor));
      const std::complex<Scalar> u = m / norm;
      mhat.set(s * l.hw + p, u);
      for (Index ch = 0; ch < l.c; ++ch) {
        const Index i = (s * l.c + ch) * l.hw + p;
        q.set(i, f[i] * std::conj(u));
      }
    }
  ComplexTensor<Scalar> n = nonlinearity(q);
  for (Index s = 0; s < l.n; ++s)
    for (Index ch = 0; ch < l.c; ++ch)
      for (Index p = 0; p < l.hw; ++p) {
        const Index i = (s * l.c + ch) * l.hw + p;
        n.set(i, n[i] * mhat[s * l.hw + p]);
      }
  return n;
}

template <typename Scalar>
ComplexTensor<Scalar> CReluLayer<Scalar>::forward(const Tensor& x, ForwardContext<Scalar>& ctx) {
  if (ctx.kinks) {
    const auto mag = (x.re().square() + x.im().square()).sqrt().max(Scalar(1e-30));
    ctx.observe(static_cast<double>((x.re().abs().min(x.im().abs()) / mag).minCoeff()) / kKinkGap);
    ctx.branches(x.re() > Scalar(0));
    ctx.branches(x.im() > Scalar(0));
  }
  Tensor y = crelu(x);
  if (ctx.recording()) {
    ctx.tape->record("crelu", [x](const Tensor& g) {
      Tensor gx(x.shape());
      gx.re() = (x.re() > Scalar(0)).select(g.re(), Scalar(0));
      gx.im() = (x.im() > Scalar(0)).select(g.im(), Scalar(0));
      return gx;
    });
  }
  return y;
}

template <typename Scalar>
GTReluLayer<Scalar>::GTReluLayer(Index channels, Scalar r)
    : channels_(channels),
      r_(r),
      scale_("c", make_tensor<Scalar>({channels}, Fill::ones())),
      omega_("omega", make_tensor<Scalar>({channels}, Fill::ones()), /*is_real=*/true) {
  if (r < 0) throw ParameterError("gtrelu threshold r must be >= 0");
}

template <typename Scalar>
ComplexTensor<Scalar> GTReluLayer<Scalar>::forward(const Tensor& x, ForwardContext<Scalar>& ctx) {
  const ChannelLayout cl = channel_layout(x.shape());
  if (cl.channels != channels_)
    throw ShapeError("gtrelu configured for " + std::to_string(channels_) + " channels, got " +
                     shape_string(x.shape()));
  const Index blocks = x.size() / cl.inner;
  Tensor y(x.shape());
  // Forward magnitudes and phases, reused by the backward pass.
  Eigen::Array<Scalar, Eigen::Dynamic, 1> mags(x.size()), phases(x.size());
  double margin = std::numeric_limits<double>::infinity();
  for (Index b = 0; b < blocks; ++b) {
    const Index ch = b % cl.channels;
    const std::complex<Scalar> c = scale_.value[ch];
    const Scalar omega = omega_.value.re()[ch];
    for (Index i = b * cl.inner; i < (b + 1) * cl.inner; ++i) {
      const auto e = gtrelu_point(c * x[i], r_, omega);
      y.set(i, e.y);
      mags[i] = e.mag;
      phases[i] = e.phase;
      if (ctx.kinks) {
        // phase kinks sit on the whole real axis
        const double dist = std::abs(static_cast<double>(e.mag * std::sin(e.phase)));
        margin = std::min({margin, dist, static_cast<double>(e.mag) * kKinkTie / kKinkMagnitude});
        if (r_ > 0) margin = std::min(margin, std::abs(static_cast<double>(e.mag - r_)));
        ctx.branch((e.phase > 0 ? 1u : 0u) | (e.mag > r_ ? 2u : 0u));
      }
    }
  }
  if (ctx.kinks) {
    double ss = 0;
    for (Index b = 0; b < blocks; ++b) {
      const double c2 = std::norm(std::complex<double>(scale_.value[b % cl.channels]));
      for (Index i = b * cl.inner; i < (b + 1) * cl.inner; ++i) ss += c2 * std::norm(std::complex<double>(x[i]));
    }
    const double rms = std::sqrt(ss / std::max<Index>(x.size(), 1));
    ctx.observe(rms > 0 ? margin / (kKinkTie * rms) : 0.0);
  }
  if (ctx.recording()) {
    ctx.tape->record("gtrelu", [this, x, y, mags = std::move(mags), phases = std::move(phases), cl,
                                blocks](const Tensor& g) {
      Tensor gx(x.shape());
      for (Index b = 0; b < blocks; ++b) {
        const Index ch = b % cl.channels;
        const std::complex<Scalar> c = scale_.value[ch];
        const Scalar omega = omega_.value.re()[ch];
        Scalar g_omega = 0;
        std::complex<Scalar> g_c{};
        for (Index i = b * cl.inner; i < (b + 1) * cl.inner; ++i) {
          const Scalar mag = mags[i], phase = phases[i];
          const Scalar m = std::max(r_, mag);
          if (m <= Scalar(0)) continue;
          // cos p and sin p of the output phase p = omega * relu(phase).
          const Scalar cp = y.re()[i] / m, sp = y.im()[i] / m;
          const Scalar gr = g.re()[i], gi = g.im()[i];
          const Scalar d_m = gr * cp + gi * sp;
          const Scalar d_p = m * (-gr * sp + gi * cp);
          const Scalar d_mag = mag > r_ ? d_m : Scalar(0);
          const Scalar d_phase = phase > 0 ? d_p * omega : Scalar(0);
          g_omega += d_p * std::max(phase, Scalar(0));
          if (mag <= Scalar(0)) continue;
          const std::complex<Scalar> u = c * x[i];
          const Scalar inv = Scalar(1) / mag;
          const std::complex<Scalar> gu(d_mag * u.real() * inv - d_phase * u.imag() * inv * inv,
                                        d_mag * u.imag() * inv + d_phase * u.real() * inv * inv);
          gx.set(i, std::conj(c) * gu);
          g_c += std::conj(x[i]) * gu;
        }
        omega_.grad.re()[ch] += g_omega;
        scale_.grad.re()[ch] += g_c.real();
        scale_.grad.im()[ch] += g_c.imag();
      }
      return gx;
    });
  }
  return y;
}

template <typename Scalar>
ComplexTensor<Scalar> EquivariantWrapLayer<Scalar>::forward(const Tensor& f,
                                                            ForwardContext<Scalar>& ctx) {
  using C = std::complex<Scalar>;
  const MapLayout l = map_layout(f.shape());
  const Scalar floor = static_cast<Scalar>(kNormFloor);

  ComplexTensor<Scalar> mhat(Shape{l.n, l.hw});
  Eigen::Array<Scalar, Eigen::Dynamic, 1> mnorm(l.n * l.hw);
  Tensor q(f.shape());
  double margin = std::numeric_limits<double>::infinity();
  for (Index s = 0; s < l.n; ++s)
    for (Index p = 0; p < l.hw; ++p) {
      C m{};
      for (Index ch = 0; ch < l.c; ++ch) m += f[(s * l.c + ch) * l.hw + p];
      m /= static_cast<Scalar>(l.c);
      const Scalar norm = std::abs(m);
      margin = std::min(margin, static_cast<double>(norm) / kKinkMagnitude);
      ctx.branch(norm > floor);
      mnorm[s * l.hw + p] = norm;
      const C u = m / std::max(norm, floor);
      mhat.set(s * l.hw + p, u);
      for (Index ch = 0; ch < l.c; ++ch) {
        const Index i = (s * l.c + ch) * l.hw + p;
        q.set(i, f[i] * std::conj(u));
      }
    }
  if (ctx.kinks) {
    const double rms = std::sqrt(static_cast<double>(mnorm.square().mean()));
    ctx.observe(rms > 0 ? margin / rms : 0.0);
  }

  Tape<Scalar> inner_tape;
  ForwardContext<Scalar> inner_ctx{ctx.recording() ? &inner_tape : nullptr, ctx.mode, ctx.kinks};
  const Tensor n = inner_->forward(q, inner_ctx);

  Tensor out(f.shape());
  for (Index s = 0; s < l.n; ++s)
    for (Index ch = 0; ch < l.c; ++ch)
      for (Index p = 0; p < l.hw; ++p) {
        const Index i = (s * l.c + ch) * l.hw + p;
        out.set(i, n[i] * mhat[s * l.hw + p]);
      }

  if (ctx.recording()) {
    ctx.tape->record(
        "eq_wrap", [f, n, mhat, mnorm, l, floor, tape = std::make_shared<Tape<Scalar>>(
                                                    std::move(inner_tape))](const Tensor& g) {
          Tensor gn(f.shape());
          ComplexTensor<Scalar> gm_hat(mhat.shape());
          for (Index s = 0; s < l.n; ++s)
            for (Index ch = 0; ch < l.c; ++ch)
              for (Index p = 0; p < l.hw; ++p) {
                const Index i = (s * l.c + ch) * l.hw + p;
                const Index j = s * l.hw + p;
                gn.set(i, std::conj(mhat[j]) * g[i]);
                gm_hat.set(j, gm_hat[j] + std::conj(n[i]) * g[i]);
              }
          const Tensor gq = tape->empty() ? gn : tape->backward(gn);
          Tensor gf(f.shape());
          for (Index s = 0; s < l.n; ++s)
            for (Index p = 0; p < l.hw; ++p) {
              const Index j = s * l.hw + p;
              const C u = mhat[j];
              C gu = gm_hat[j];
              for (Index ch = 0; ch < l.c; ++ch) {
                const Index i = (s * l.c + ch) * l.hw + p;
                gf.set(i, u * gq[i]);
                gu += f[i] * std::conj(gq[i]);
              }
              C gm;
              if (mnorm[j] > floor) {
                gm = (gu - (std::conj(u) * gu).real() * u) / mnorm[j];
              } else {
                gm = gu / floor;
              }
              gm /= static_cast<Scalar>(l.c);
              for (Index ch = 0; ch < l.c; ++ch) {
                const Index i = (s * l.c + ch) * l.hw + p;
                gf.set(i, gf[i] + gm);
              }
            }
          return gf;
        });
  }
  return out;
}

#define CDS_INSTANTIATE_NONLINEAR(S)                                                            \
  template ComplexTensor<S> crelu<S>(const ComplexTensor<S>&);                                  \
  template ComplexTensor<S> gtrelu<S>(const ComplexTensor<S>&, S, const ComplexTensor<S>&,      \
                                      const ComplexTensor<S>&);                                 \
  template ComplexTensor<S> equivariant_wrap<S>(                                                \
      const ComplexTensor<S>&, const std::function<ComplexTensor<S>(const ComplexTensor<S>&)>&); \
  template class CReluLayer<S>;                                                                 \
  template class GTReluLayer<S>;                                                                \
  template class EquivariantWrapLayer<S>;

CDS_INSTANTIATE_NONLINEAR(float)
CDS_INSTANTIATE_NONLINEAR(double)

}  // namespace cds
