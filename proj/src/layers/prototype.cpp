#include "cds/layers/prototype.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "cds/layers/nonlinear.hpp"

namespace cds {

std::string_view to_string(Metric m) { return m == Metric::manifold ? "manifold" : "euclidean"; }

Metric parse_metric(std::string_view s) {
  if (s == "manifold") return Metric::manifold;
  if (s == "euclidean") return Metric::euclidean;
  throw ConfigError("unknown metric '" + std::string(s) + "'");
}

double arcdist(double a, double b) {
  const double d = std::fmod(std::abs(a - b), 2 * std::numbers::pi);
  return std::min(d, 2 * std::numbers::pi - d);
}

namespace {

/// Signed phase difference wrapped to (-pi, pi].
template <typename Scalar>
Scalar wrapped_phase(std::complex<Scalar> a, std::complex<Scalar> b) {
  return std::arg(a * std::conj(b));
}

template <typename Scalar>
Scalar log_mag(std::complex<Scalar> z) {
  return std::log(std::max(std::abs(z), static_cast<Scalar>(kNormFloor)));
}

}  // namespace

template <typename Scalar>
Scalar manifold_distance(std::complex<Scalar> z1, std::complex<Scalar> z2) {
  const Scalar dl = log_mag(z1) - log_mag(z2);
  const Scalar dp = static_cast<Scalar>(arcdist(std::arg(z1), std::arg(z2)));
  return std::sqrt(dl * dl + dp * dp);
}

namespace {

/// Squared aggregate distance between f and t and its real-pair gradient
/// with respect to each entry of f and t.
template <typename Scalar>
struct SquaredDistance {
  Scalar value = 0;
  double margin = std::numeric_limits<double>::infinity();
  /// Which side of the phase wrap each far-apart pair sits on.
  std::uint64_t branches = 0;
};

template <typename Scalar>
SquaredDistance<Scalar> squared_distance(const std::complex<Scalar>* f,
                                         const std::complex<Scalar>* t, Index d, Metric metric,
                                         bool track_margin) {
  SquaredDistance<Scalar> r;
  for (Index j = 0; j < d; ++j) {
    if (metric == Metric::manifold) {
      const Scalar dl = log_mag(f[j]) - log_mag(t[j]);
      const Scalar dp = wrapped_phase(f[j], t[j]);
      r.value += dl * dl + dp * dp;
      if (track_margin) {
        r.margin = std::min({r.margin, static_cast<double>(std::abs(f[j])) / kKinkMagnitude,
                             static_cast<double>(std::abs(t[j])) / kKinkMagnitude,
                             (std::numbers::pi - std::abs(static_cast<double>(dp))) / kKinkGap});
        const std::uint64_t side = std::abs(dp) > std::numbers::pi / 2 ? (dp > 0 ? 2 : 1) : 0;
        r.branches = r.branches * 3 + side;
      }
    } else {
      r.value += std::norm(f[j] - t[j]);
    }
  }
  return r;
}

/// Adds dS/df and dS/dt scaled by `w` into gf and gt.
template <typename Scalar>
void squared_distance_backward(const std::complex<Scalar>* f, const std::complex<Scalar>* t,
                               Index d, Metric metric, Scalar w, std::complex<Scalar>* gf,
                               std::complex<Scalar>* gt) {
  using C = std::complex<Scalar>;
  const Scalar floor = static_cast<Scalar>(kNormFloor);
  for (Index j = 0; j < d; ++j) {
    if (metric == Metric::manifold) {
      const Scalar dl = log_mag(f[j]) - log_mag(t[j]);
      const Scalar dp = wrapped_phase(f[j], t[j]);
      const Scalar nf = std::norm(f[j]), nt = std::norm(t[j]);
      const C df = nf > floor * floor ? (2 * dl * f[j] + 2 * dp * C(0, 1) * f[j]) / nf : C{};
      const C dt = nt > floor * floor ? (2 * dl * t[j] + 2 * dp * C(0, 1) * t[j]) / nt : C{};
      gf[j] += w * df;
      gt[j] -= w * dt;
    } else {
      const C diff = Scalar(2) * (f[j] - t[j]);
      gf[j] += w * diff;
      gt[j] -= w * diff;
    }
  }
}

template <typename Scalar>
std::vector<std::complex<Scalar>> to_complex(const ComplexTensor<Scalar>& t) {
  std::vector<std::complex<Scalar>> v(static_cast<std::size_t>(t.size()));
  for (Index i = 0; i < t.size(); ++i) v[static_cast<std::size_t>(i)] = t[i];
  return v;
}

}  // namespace

template <typename Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 1> prototype_logits(const ComplexTensor<Scalar>& f,
                                                         const ComplexTensor<Scalar>& prototypes,
                                                         Scalar alpha, Metric metric,
                                                         bool invariant) {
  using C = std::complex<Scalar>;
  if (prototypes.rank() != 2 || prototypes.dim(1) != f.size())
    throw ShapeError("embedding of size " + std::to_string(f.size()) +
                     " does not match prototypes " + shape_string(prototypes.shape()));
  const Index k = prototypes.dim(0), d = f.size();
  const auto fv = to_complex(f);
  const auto pv = to_complex(prototypes);
  C m{};
  for (const C& v : fv) m += v;
  m /= static_cast<Scalar>(d);
  Eigen::Array<Scalar, Eigen::Dynamic, 1> logits(k);
  std::vector<C> t(static_cast<std::size_t>(d));
  for (Index i = 0; i < k; ++i) {
    for (Index j = 0; j < d; ++j)
      t[static_cast<std::size_t>(j)] = pv[static_cast<std::size_t>(i * d + j)] * (invariant ? m : C(1));
    logits[i] = -alpha * std::sqrt(squared_distance(fv.data(), t.data(), d, metric, false).value);
  }
  return logits;
}

template <typename Scalar>
PrototypeLayer<Scalar>::PrototypeLayer(Index embedding, Index classes, Metric metric,
                                       bool invariant, Rng& rng)
    : embedding_(embedding),
      classes_(classes),
      metric_(metric),
      invariant_(invariant),
      prototypes_("prototypes", make_tensor<Scalar>({classes, embedding}, Fill::gaussian(rng))),
      log_alpha_("log_alpha", make_tensor<Scalar>({1}), true) {
  auto& p = prototypes_.value;
  for (Index i = 0; i < p.size(); ++i) {
    const std::complex<Scalar> z = p[i];
    const Scalar r = std::abs(z);
    p.set(i, r > 0 ? z / r : std::complex<Scalar>(1));
  }
  log_alpha_.value.re()[0] = static_cast<Scalar>(-0.5 * std::log(static_cast<double>(embedding)));
}

template <typename Scalar>
ComplexTensor<Scalar> PrototypeLayer<Scalar>::forward(const Tensor& x, ForwardContext<Scalar>& ctx) {
  using C = std::complex<Scalar>;
  const Index n = x.dim(0), d = embedding_, k = classes_;
  if (x.size() != n * d)
    throw ShapeError("prototype head expects " + std::to_string(d) + " features per sample, got " +
                     shape_string(x.shape()));
  const Scalar alpha = std::exp(log_alpha_.value.re()[0]);
  const auto fv = to_complex(x);
  const auto pv = to_complex(prototypes_.value);

  std::vector<C> means(static_cast<std::size_t>(n));
  Eigen::Array<Scalar, Eigen::Dynamic, 1> dist(n * k);
  Tensor logits(Shape{n, k});
  double margin = std::numeric_limits<double>::infinity();
  std::vector<C> t(static_cast<std::size_t>(d));
  for (Index s = 0; s < n; ++s) {
    const C* f = fv.data() + s * d;
    C m{};
    for (Index j = 0; j < d; ++j) m += f[j];
    m /= static_cast<Scalar>(d);
    means[static_cast<std::size_t>(s)] = m;
    for (Index i = 0; i < k; ++i) {
      for (Index j = 0; j < d; ++j)
        t[static_cast<std::size_t>(j)] = pv[static_cast<std::size_t>(i * d + j)] * (invariant_ ? m : C(1));
      const auto sq = squared_distance(f, t.data(), d, metric_, ctx.kinks != nullptr);
      dist[s * k + i] = std::sqrt(sq.value);
      logits.re()[s * k + i] = -alpha * dist[s * k + i];
      margin = std::min({margin, sq.margin, static_cast<double>(dist[s * k + i]) / kKinkMagnitude});
      ctx.branch(sq.branches);
    }
  }
  if (ctx.kinks) ctx.observe(margin);

  if (ctx.recording()) {
    ctx.tape->record("prototype", [this, fv, pv, means, dist, alpha, n, d, k,
                                   shape = x.shape()](const Tensor& g) {
      std::vector<C> gf(fv.size());
      std::vector<C> gp(pv.size());
      std::vector<C> t(static_cast<std::size_t>(d)), gt(static_cast<std::size_t>(d));
      for (Index s = 0; s < n; ++s) {
        const C* f = fv.data() + s * d;
        C* gfs = gf.data() + s * d;
        const C m = means[static_cast<std::size_t>(s)];
        C gm{};
        for (Index i = 0; i < k; ++i) {
          const Scalar gl = g.re()[s * k + i];
          const Scalar dd = dist[s * k + i];
          log_alpha_.grad.re()[0] += gl * (-alpha * dd);
          if (dd <= Scalar(0) || gl == Scalar(0)) continue;
          const Scalar w = gl * (-alpha) / (2 * dd);
          for (Index j = 0; j < d; ++j) {
            t[static_cast<std::size_t>(j)] = pv[static_cast<std::size_t>(i * d + j)] * (invariant_ ? m : C(1));
            gt[static_cast<std::size_t>(j)] = C{};
          }
          squared_distance_backward(f, t.data(), d, metric_, w, gfs, gt.data());
          for (Index j = 0; j < d; ++j) {
            const C gtj = gt[static_cast<std::size_t>(j)];
            const C pj = pv[static_cast<std::size_t>(i * d + j)];
            if (invariant_) {
              gp[static_cast<std::size_t>(i * d + j)] += std::conj(m) * gtj;
              gm += std::conj(pj) * gtj;
            } else {
              gp[static_cast<std::size_t>(i * d + j)] += gtj;
            }
          }
        }
        if (invariant_)
          for (Index j = 0; j < d; ++j) gfs[j] += gm / static_cast<Scalar>(d);
      }
      for (std::size_t i = 0; i < gp.size(); ++i) {
        prototypes_.grad.re()[static_cast<Index>(i)] += gp[i].real();
        prototypes_.grad.im()[static_cast<Index>(i)] += gp[i].imag();
      }
      Tensor gx(shape);
      for (std::size_t i = 0; i < gf.size(); ++i) gx.set(static_cast<Index>(i), gf[i]);
      return gx;
    });
  }
  return logits;
}

#define CDS_INSTANTIATE_PROTOTYPE(S)                                                          \
  template S manifold_distance<S>(std::complex<S>, std::complex<S>);                          \
  template Eigen::Array<S, Eigen::Dynamic, 1> prototype_logits<S>(                            \
      const ComplexTensor<S>&, const ComplexTensor<S>&, S, Metric, bool);                     \
  template class PrototypeLayer<S>;

CDS_INSTANTIATE_PROTOTYPE(float)
CDS_INSTANTIATE_PROTOTYPE(double)

}  // namespace cds
