#include "cds/layers/batchnorm.hpp"

#include <cmath>
#include <limits>

#include "cds/layers/nonlinear.hpp"
#include "cds/log.hpp"

namespace cds {

template <typename Scalar>
EqBatchNormLayer<Scalar>::EqBatchNormLayer(Index channels, double momentum, double eps)
    : channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_("gamma", make_tensor<Scalar>({channels}, Fill::ones()), true),
      beta_("beta", make_tensor<Scalar>({channels}), true),
      running_mean_("running_mean", make_tensor<Scalar>({channels}), true, false),
      running_var_("running_var", make_tensor<Scalar>({channels}, Fill::ones()), true, false) {
  if (channels < 1) throw ParameterError("eq_batchnorm needs at least one channel");
  if (!(momentum >= 0 && momentum <= 1)) throw ParameterError("eq_batchnorm momentum must be in [0,1]");
  if (!(eps >= 0)) throw ParameterError("eq_batchnorm eps must be >= 0");
}

template <typename Scalar>
ComplexTensor<Scalar> EqBatchNormLayer<Scalar>::forward(const Tensor& x,
                                                        ForwardContext<Scalar>& ctx) {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  if (x.rank() < 2 || x.dim(1) != channels_)
    throw ShapeError("eq_batchnorm configured for " + std::to_string(channels_) +
                     " channels, got " + shape_string(x.shape()));
  const Index n = x.dim(0), c = channels_, hw = x.size() / (n * c), m = n * hw;
  const bool train = ctx.mode == Mode::train;
  if (train && m < 2)
    throw ShapeError("eq_batchnorm in train mode needs at least two values per channel");
  if (!train && updates_ == 0 && !warned_) {
    log_warn("eq_batchnorm evaluated before any train-mode update; using initial statistics");
    warned_ = true;
  }

  const Scalar floor = static_cast<Scalar>(kNormFloor);
  const Scalar eps = static_cast<Scalar>(eps_);
  const Array mag = (x.re().square() + x.im().square()).sqrt();
  const Array a = mag.max(floor);
  if (ctx.kinks) {
    ctx.observe(static_cast<double>(mag.minCoeff()) / kKinkMagnitude);
    ctx.branches(mag > floor);
  }

  Array mu(c), denom(c);
  Array norm(x.size());
  for (Index ch = 0; ch < c; ++ch) {
    Scalar mean = 0, var = 0;
    if (train) {
      for (Index s = 0; s < n; ++s) mean += a.segment((s * c + ch) * hw, hw).sum();
      mean /= static_cast<Scalar>(m);
      for (Index s = 0; s < n; ++s)
        var += (a.segment((s * c + ch) * hw, hw) - mean).square().sum();
      var /= static_cast<Scalar>(m);
      const Scalar mom = static_cast<Scalar>(momentum_);
      running_mean_.value.re()[ch] = (1 - mom) * running_mean_.value.re()[ch] + mom * mean;
      running_var_.value.re()[ch] = (1 - mom) * running_var_.value.re()[ch] +
                                    mom * var * static_cast<Scalar>(m) / static_cast<Scalar>(m - 1);
    } else {
      mean = running_mean_.value.re()[ch];
      var = running_var_.value.re()[ch];
    }
    mu[ch] = mean;
    denom[ch] = std::sqrt(var + eps * mean * mean);
    for (Index s = 0; s < n; ++s) {
      const Index off = (s * c + ch) * hw;
      norm.segment(off, hw) = (a.segment(off, hw) - mean) / denom[ch];
    }
  }
  if (train) ++updates_;

  Tensor out(x.shape());
  Array b(x.size());
  for (Index s = 0; s < n; ++s)
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (s * c + ch) * hw;
      b.segment(off, hw) = gamma_.value.re()[ch] * norm.segment(off, hw) + beta_.value.re()[ch];
      out.re().segment(off, hw) = b.segment(off, hw) * x.re().segment(off, hw) / a.segment(off, hw);
      out.im().segment(off, hw) = b.segment(off, hw) * x.im().segment(off, hw) / a.segment(off, hw);
    }

  if (ctx.recording()) {
    ctx.tape->record("eq_batchnorm", [this, x, a, b, norm, mu, denom, train, n, c, hw, m, eps,
                                      floor](const Tensor& g) {
      Tensor gx(x.shape());
      for (Index ch = 0; ch < c; ++ch) {
        const Scalar gamma = gamma_.value.re()[ch];
        Array h(m), nrm(m);
        for (Index s = 0; s < n; ++s) {
          const Index off = (s * c + ch) * hw;
          const Array ur = x.re().segment(off, hw) / a.segment(off, hw);
          const Array ui = x.im().segment(off, hw) / a.segment(off, hw);
          const Array db = g.re().segment(off, hw) * ur + g.im().segment(off, hw) * ui;
          gamma_.grad.re()[ch] += (db * norm.segment(off, hw)).sum();
          beta_.grad.re()[ch] += db.sum();
          h.segment(s * hw, hw) = gamma * db;
          nrm.segment(s * hw, hw) = norm.segment(off, hw);
        }
        Array da;
        if (train) {
          const Scalar hbar = h.mean(), hn = (h * nrm).mean();
          da = (h - hbar - hn * (nrm + eps * mu[ch] / denom[ch])) / denom[ch];
        } else {
          da = h / denom[ch];
        }
        for (Index s = 0; s < n; ++s) {
          const Index off = (s * c + ch) * hw;
          for (Index k = 0; k < hw; ++k) {
            const Index i = off + k;
            const Scalar ai = a[i];
            const Scalar ur = x.re()[i] / ai, ui = x.im()[i] / ai;
            const Scalar gur = b[i] * g.re()[i], gui = b[i] * g.im()[i];
            const bool floored = ai <= floor;
            const Scalar d = floored ? Scalar(0) : da[s * hw + k];
            const Scalar radial = floored ? Scalar(0) : gur * ur + gui * ui;
            gx.re()[i] = d * ur + (gur - radial * ur) / ai;
            gx.im()[i] = d * ui + (gui - radial * ui) / ai;
          }
        }
      }
      return gx;
    });
  }
  return out;
}

template class EqBatchNormLayer<float>;
template class EqBatchNormLayer<double>;

}  // namespace cds
