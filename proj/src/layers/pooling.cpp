#include "cds/layers/pooling.hpp"

#include <limits>

namespace cds {

namespace {

template <typename Scalar>
MaxPoolResult<Scalar> pool(const ComplexTensor<Scalar>& f, Index window, Index stride,
                           double* margin) {
  if (f.rank() != 3 && f.rank() != 4) throw ShapeError("eq_maxpool expects [C,H,W] or [N,C,H,W]");
  if (window < 1 || stride < 1) throw ParameterError("eq_maxpool window and stride must be >= 1");
  const bool batched = f.rank() == 4;
  const Index n = batched ? f.dim(0) : 1;
  const Index c = f.dim(batched ? 1 : 0);
  const Index h = f.dim(f.rank() - 2), w = f.dim(f.rank() - 1);
  if (window > h || window > w) throw ShapeError("eq_maxpool window larger than input");
  const Index ho = (h - window) / stride + 1, wo = (w - window) / stride + 1;
  Shape out_shape = f.shape();
  out_shape[out_shape.size() - 2] = ho;
  out_shape[out_shape.size() - 1] = wo;

  const auto mag2 = (f.re().square() + f.im().square()).eval();
  MaxPoolResult<Scalar> r{ComplexTensor<Scalar>(out_shape), {}};
  r.argmax.resize(static_cast<std::size_t>(r.output.size()));
  Index o = 0;
  for (Index plane = 0; plane < n * c; ++plane) {
    const Index base = plane * h * w;
    for (Index oy = 0; oy < ho; ++oy)
      for (Index ox = 0; ox < wo; ++ox, ++o) {
        Index best = -1;
        Scalar best_m = 0, second = -1;
        for (Index ky = 0; ky < window; ++ky)
          for (Index kx = 0; kx < window; ++kx) {
            const Index i = base + (oy * stride + ky) * w + ox * stride + kx;
            const Scalar m = mag2[i];
            if (best < 0 || m > best_m) {
              second = best < 0 ? second : best_m;
              best = i;
              best_m = m;
            } else if (m > second) {
              second = m;
            }
          }
        r.output.set(o, f[best]);
        r.argmax[static_cast<std::size_t>(o)] = best;
        if (margin && second >= 0) {
          const double top = std::sqrt(static_cast<double>(best_m));
          const double gap = top - std::sqrt(static_cast<double>(second));
          *margin = std::min(*margin, (top > 0 ? gap / top : 0.0) / kKinkTie);
        }
      }
  }
  return r;
}

}  // namespace

template <typename Scalar>
MaxPoolResult<Scalar> eq_maxpool(const ComplexTensor<Scalar>& f, Index window, Index stride) {
  return pool(f, window, stride, nullptr);
}

template <typename Scalar>
EqMaxPoolLayer<Scalar>::EqMaxPoolLayer(Index window, Index stride)
    : window_(window), stride_(stride) {
  if (window < 1 || stride < 1) throw ParameterError("eq_maxpool window and stride must be >= 1");
}

template <typename Scalar>
ComplexTensor<Scalar> EqMaxPoolLayer<Scalar>::forward(const Tensor& x,
                                                      ForwardContext<Scalar>& ctx) {
  double margin = std::numeric_limits<double>::infinity();
  MaxPoolResult<Scalar> r = pool(x, window_, stride_, ctx.kinks ? &margin : nullptr);
  if (ctx.kinks) {
    ctx.observe(margin);
    for (const Index a : r.argmax) ctx.branch(static_cast<std::uint64_t>(a));
  }
  if (ctx.recording()) {
    ctx.tape->record("eq_maxpool", [shape = x.shape(), idx = r.argmax](const Tensor& g) {
      Tensor gx(shape);
      for (std::size_t o = 0; o < idx.size(); ++o) {
        gx.re()[idx[o]] += g.re()[static_cast<Index>(o)];
        gx.im()[idx[o]] += g.im()[static_cast<Index>(o)];
      }
      return gx;
    });
  }
  return std::move(r.output);
}

template MaxPoolResult<float> eq_maxpool<float>(const ComplexTensor<float>&, Index, Index);
template MaxPoolResult<double> eq_maxpool<double>(const ComplexTensor<double>&, Index, Index);
template class EqMaxPoolLayer<float>;
template class EqMaxPoolLayer<double>;

}  // namespace cds
