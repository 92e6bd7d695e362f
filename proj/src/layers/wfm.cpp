#include "cds/layers/wfm.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "cds/layers/nonlinear.hpp"
#include "cds/layers/prototype.hpp"

namespace cds {

double wfm_phase_objective(const std::vector<double>& phases, const std::vector<double>& weights,
                           double theta) {
  double acc = 0;
  for (std::size_t i = 0; i < phases.size(); ++i) {
    const double d = arcdist(phases[i], theta);
    acc += weights[i] * d * d;
  }
  return acc;
}

double golden_section_min(const std::function<double(double)>& f, double a, double b,
                          double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1) / 2;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return (a + b) / 2;
}

double minimize_on_circle(const std::function<double(double)>& f, int grid) {
  if (grid < 3) throw ParameterError("circle grid needs at least 3 points");
  const double pi = std::numbers::pi;
  const double step = 2 * pi / grid;
  int best = 0;
  double best_v = std::numeric_limits<double>::infinity();
  for (int k = 0; k < grid; ++k) {
    const double v = f(-pi + step * (k + 1));
    if (v < best_v) {
      best_v = v;
      best = k;
    }
  }
  const double center = -pi + step * (best + 1);
  double theta = golden_section_min(f, center - step, center + step);
  theta = std::remainder(theta, 2 * pi);
  if (theta <= -pi) theta += 2 * pi;
  return theta;
}

template <typename Scalar>
std::complex<Scalar> wfm_layer(const std::vector<std::complex<Scalar>>& z,
                               const std::vector<Scalar>& weights) {
  if (z.empty() || z.size() != weights.size())
    throw ParameterError("wfm needs one weight per point");
  double total = 0;
  for (Scalar w : weights) {
    if (!(w > 0 && w <= 1)) throw ParameterError("wfm weights must lie in (0,1]");
    total += w;
  }
  if (std::abs(total - 1) > 1e-9) throw ParameterError("wfm weights must sum to 1");
  std::vector<double> phases, ws;
  double log_mag = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    log_mag += weights[i] * std::log(std::max<double>(std::abs(z[i]), kNormFloor));
    phases.push_back(std::arg(z[i]));
    ws.push_back(weights[i]);
  }
  const double theta =
      minimize_on_circle([&](double t) { return wfm_phase_objective(phases, ws, t); });
  return std::polar(static_cast<Scalar>(std::exp(log_mag)), static_cast<Scalar>(theta));
}

template <typename Scalar>
WfmConvLayer<Scalar>::WfmConvLayer(const ConvSpec& spec, Rng& rng)
    : spec_(spec), logits_("weight_logits", ComplexTensor<Scalar>(spec.weight_shape()), true) {
  for (Index i = 0; i < logits_.value.size(); ++i)
    logits_.value.re()[i] = static_cast<Scalar>(rng.normal(0.0, 0.5));
}

template <typename Scalar>
ComplexTensor<Scalar> WfmConvLayer<Scalar>::kernel_weights() const {
  const Index rows = spec_.out_channels, cols = logits_.value.size() / rows;
  Tensor w(logits_.value.shape());
  for (Index r = 0; r < rows; ++r) {
    const auto seg = logits_.value.re().segment(r * cols, cols);
    const auto e = (seg - seg.maxCoeff()).exp();
    w.re().segment(r * cols, cols) = e / e.sum();
  }
  return w;
}

template <typename Scalar>
ComplexTensor<Scalar> WfmConvLayer<Scalar>::forward(const Tensor& x, ForwardContext<Scalar>& ctx) {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  const Scalar floor = static_cast<Scalar>(kNormFloor);
  const Array mag = (x.re().square() + x.im().square()).sqrt();
  const Array safe = mag.max(floor);
  Tensor lplane(x.shape(), safe.log(), Array::Zero(x.size()));
  Tensor ure(x.shape(), (mag > floor).select(x.re() / safe, Scalar(1)), Array::Zero(x.size()));
  Tensor uim(x.shape(), (mag > floor).select(x.im() / safe, Scalar(0)), Array::Zero(x.size()));

  const ConvGeometry geom = geometry();
  const Tensor w = kernel_weights();
  const Tensor a = conv2d_real(lplane, w, geom);
  const Tensor vre = conv2d_real(ure, w, geom);
  const Tensor vim = conv2d_real(uim, w, geom);
  const Array vmag = (vre.re().square() + vim.re().square()).sqrt();
  const Array vsafe = vmag.max(floor);
  const Array ea = a.re().exp();
  Tensor out(a.shape());
  out.re() = ea * (vmag > floor).select(vre.re() / vsafe, Scalar(1));
  out.im() = ea * (vmag > floor).select(vim.re() / vsafe, Scalar(0));
  if (ctx.kinks) {
    ctx.observe(std::min(static_cast<double>(mag.minCoeff()) / kKinkMagnitude,
                         static_cast<double>(vmag.minCoeff()) / kKinkTie));
    ctx.branches(mag > floor);
    ctx.branches(vmag > floor);
  }

  if (ctx.recording()) {
    ctx.tape->record("wfm_conv", [this, x, mag, lplane, ure, uim, w, out, ea, vre, vim, vmag, geom,
                                  floor](const Tensor& g) {
      Tensor ga(out.shape()), gvr(out.shape()), gvi(out.shape());
      for (Index i = 0; i < out.size(); ++i) {
        const Scalar gr = g.re()[i], gi = g.im()[i];
        ga.re()[i] = out.re()[i] * gr + out.im()[i] * gi;
        if (vmag[i] <= floor) continue;
        const Scalar ur = vre.re()[i] / vmag[i], ui = vim.re()[i] / vmag[i];
        const Scalar gur = ea[i] * gr, gui = ea[i] * gi;
        const Scalar radial = ur * gur + ui * gui;
        gvr.re()[i] = (gur - radial * ur) / vmag[i];
        gvi.re()[i] = (gui - radial * ui) / vmag[i];
      }
      const ConvGradients<Scalar> bl = conv2d_real_backward(lplane, w, ga, geom);
      const ConvGradients<Scalar> br = conv2d_real_backward(ure, w, gvr, geom);
      const ConvGradients<Scalar> bi = conv2d_real_backward(uim, w, gvi, geom);
      const Array gw = bl.weight.re() + br.weight.re() + bi.weight.re();
      const Index rows = spec_.out_channels, cols = w.size() / rows;
      for (Index r = 0; r < rows; ++r) {
        const auto wr = w.re().segment(r * cols, cols);
        const auto gr = gw.segment(r * cols, cols);
        const Scalar dot = (wr * gr).sum();
        logits_.grad.re().segment(r * cols, cols) += wr * (gr - dot);
      }
      Tensor gx(x.shape());
      for (Index i = 0; i < x.size(); ++i) {
        if (mag[i] <= floor) continue;
        const Scalar m = mag[i];
        const Scalar xr = x.re()[i] / m, xi = x.im()[i] / m;
        const Scalar gl = bl.input.re()[i] / m;
        const Scalar gur = br.input.re()[i], gui = bi.input.re()[i];
        const Scalar radial = xr * gur + xi * gui;
        gx.re()[i] = gl * xr + (gur - radial * xr) / m;
        gx.im()[i] = gl * xi + (gui - radial * xi) / m;
      }
      return gx;
    });
  }
  return out;
}

template <typename Scalar>
DistanceTransformLayer<Scalar>::DistanceTransformLayer(Index channels, Rng& rng)
    : channels_(channels), reference_(ConvSpec{channels, 1, 1, 1, 0, 1}, rng) {}

template <typename Scalar>
ComplexTensor<Scalar> DistanceTransformLayer<Scalar>::forward(const Tensor& x,
                                                              ForwardContext<Scalar>& ctx) {
  using C = std::complex<Scalar>;
  if (x.rank() != 4 || x.dim(1) != channels_)
    throw ShapeError("distance_transform expects [N," + std::to_string(channels_) + ",H,W]");
  Tape<Scalar> inner_tape;
  ForwardContext<Scalar> inner{ctx.recording() ? &inner_tape : nullptr, ctx.mode, ctx.kinks};
  const Tensor ref = reference_.forward(x, inner);
  const Index n = x.dim(0), c = channels_, hw = x.dim(2) * x.dim(3);
  Tensor out(x.shape());
  double margin = std::numeric_limits<double>::infinity();
  for (Index s = 0; s < n; ++s)
    for (Index ch = 0; ch < c; ++ch)
      for (Index p = 0; p < hw; ++p) {
        const Index i = (s * c + ch) * hw + p;
        const C r = ref[s * hw + p];
        const Scalar d = manifold_distance(x[i], r);
        out.re()[i] = d;
        const double dp = std::abs(static_cast<double>(std::arg(x[i] * std::conj(r))));
        margin = std::min({margin, static_cast<double>(d) / kKinkMagnitude,
                           (std::numbers::pi - dp) / kKinkGap});
        if (ctx.kinks && dp > std::numbers::pi / 2) ctx.branch(std::imag(x[i] * std::conj(r)) > 0 ? 2 : 1);
      }
  if (ctx.kinks) ctx.observe(margin);
  if (ctx.recording()) {
    ctx.tape->record("distance_transform",
                     [x, ref, out, n, c, hw,
                      tape = std::make_shared<Tape<Scalar>>(std::move(inner_tape))](const Tensor& g) {
                       const Scalar floor = static_cast<Scalar>(kNormFloor);
                       const C unit_i(0, 1);
                       Tensor gx(x.shape());
                       Tensor gref(ref.shape());
                       for (Index s = 0; s < n; ++s)
                         for (Index ch = 0; ch < c; ++ch)
                           for (Index p = 0; p < hw; ++p) {
                             const Index i = (s * c + ch) * hw + p;
                             const Index j = s * hw + p;
                             const Scalar d = out.re()[i];
                             if (d <= Scalar(0)) continue;
                             const C f = x[i], r = ref[j];
                             const Scalar nf = std::norm(f), nr = std::norm(r);
                             const Scalar dl = std::log(std::max(std::sqrt(nf), floor)) -
                                               std::log(std::max(std::sqrt(nr), floor));
                             const Scalar dp = std::arg(f * std::conj(r));
                             const Scalar w = g.re()[i] / d;
                             if (nf > floor * floor) gx.set(i, gx[i] + w * (dl + dp * unit_i) * f / nf);
                             if (nr > floor * floor) gref.set(j, gref[j] - w * (dl + dp * unit_i) * r / nr);
                           }
                       gx += tape->backward(gref);
                       return gx;
                     });
  }
  return out;
}

#define CDS_INSTANTIATE_WFM(S)                                                                   \
  template std::complex<S> wfm_layer<S>(const std::vector<std::complex<S>>&, const std::vector<S>&); \
  template class WfmConvLayer<S>;                                                                \
  template class DistanceTransformLayer<S>;

CDS_INSTANTIATE_WFM(float)
CDS_INSTANTIATE_WFM(double)

}  // namespace cds
