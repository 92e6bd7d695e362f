#include "cds/conv.hpp"

#include <algorithm>

namespace cds {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace {

struct Layout {
  bool batched;
  Index n, c_in, h, w;
  Index c_out, c_in_group, k;
  Index h_out, w_out;
  Index groups, c_out_group;
};

Layout make_layout(const Shape& input, const Shape& weight, const ConvGeometry& geom) {
  if (input.size() != 3 && input.size() != 4)
    throw ShapeError("conv2d input must be [C,H,W] or [N,C,H,W], got " + shape_string(input));
  if (weight.size() != 4 || weight[2] != weight[3])
    throw ShapeError("conv2d weight must be [C_out,C_in/groups,K,K], got " + shape_string(weight));
  if (geom.stride < 1 || geom.padding < 0 || geom.groups < 1)
    throw ShapeError("conv2d stride/groups must be >= 1 and padding >= 0");
  Layout l{};
  l.batched = input.size() == 4;
  const std::size_t o = l.batched ? 1 : 0;
  l.n = l.batched ? input[0] : 1;
  l.c_in = input[o];
  l.h = input[o + 1];
  l.w = input[o + 2];
  l.c_out = weight[0];
  l.c_in_group = weight[1];
  l.k = weight[2];
  l.groups = geom.groups;
  if (l.c_in % l.groups != 0 || l.c_out % l.groups != 0)
    throw ShapeError("conv2d channels not divisible by groups");
  if (l.c_in / l.groups != l.c_in_group)
    throw ShapeError("conv2d weight expects " + std::to_string(l.c_in_group * l.groups) +
                     " input channels, got " + std::to_string(l.c_in));
  if (l.h + 2 * geom.padding < l.k || l.w + 2 * geom.padding < l.k)
    throw ShapeError("conv2d kernel " + std::to_string(l.k) + " larger than padded input " +
                     shape_string(input));
  l.c_out_group = l.c_out / l.groups;
  l.h_out = (l.h + 2 * geom.padding - l.k) / geom.stride + 1;
  l.w_out = (l.w + 2 * geom.padding - l.k) / geom.stride + 1;
  return l;
}

Shape output_shape(const Layout& l) {
  if (l.batched) return {l.n, l.c_out, l.h_out, l.w_out};
  return {l.c_out, l.h_out, l.w_out};
}

/// Source index for padded coordinate p along an axis of length len, or -1
/// when it falls in zero padding.
inline Index source_coord(Index p, Index len, PadMode mode) {
  if (p >= 0 && p < len) return p;
  if (mode == PadMode::zeros) return -1;
  return std::clamp<Index>(p, 0, len - 1);
}

}  // namespace

Shape conv_output_shape(const Shape& input, const Shape& weight, const ConvGeometry& geom) {
  return output_shape(make_layout(input, weight, geom));
}

namespace {

/// Writes the patch matrix of one [C,H,W] plane into columns
/// [col0, col0 + H_out*W_out) of a row-major buffer with row stride ld.
template <typename Scalar>
void im2col_into(const Scalar* plane, Index channels, Index height, Index width, Index kernel,
                 const ConvGeometry& geom, Scalar* dst, Index ld, Index col0) {
  const Index h_out = (height + 2 * geom.padding - kernel) / geom.stride + 1;
  const Index w_out = (width + 2 * geom.padding - kernel) / geom.stride + 1;
  for (Index c = 0; c < channels; ++c) {
    const Scalar* src = plane + c * height * width;
    for (Index ky = 0; ky < kernel; ++ky) {
      for (Index kx = 0; kx < kernel; ++kx) {
        Scalar* row = dst + ((c * kernel + ky) * kernel + kx) * ld + col0;
        for (Index oy = 0; oy < h_out; ++oy) {
          const Index y = source_coord(oy * geom.stride - geom.padding + ky, height, geom.pad_mode);
          for (Index ox = 0; ox < w_out; ++ox) {
            const Index x =
                source_coord(ox * geom.stride - geom.padding + kx, width, geom.pad_mode);
            row[oy * w_out + ox] = (y < 0 || x < 0) ? Scalar(0) : src[y * width + x];
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_from(const Scalar* cols, Index ld, Index col0, Scalar* plane, Index channels,
                 Index height, Index width, Index kernel, const ConvGeometry& geom) {
  const Index h_out = (height + 2 * geom.padding - kernel) / geom.stride + 1;
  const Index w_out = (width + 2 * geom.padding - kernel) / geom.stride + 1;
  for (Index c = 0; c < channels; ++c) {
    Scalar* dst = plane + c * height * width;
    for (Index ky = 0; ky < kernel; ++ky) {
      for (Index kx = 0; kx < kernel; ++kx) {
        const Scalar* row = cols + ((c * kernel + ky) * kernel + kx) * ld + col0;
        for (Index oy = 0; oy < h_out; ++oy) {
          const Index y = source_coord(oy * geom.stride - geom.padding + ky, height, geom.pad_mode);
          if (y < 0) continue;
          for (Index ox = 0; ox < w_out; ++ox) {
            const Index x =
                source_coord(ox * geom.stride - geom.padding + kx, width, geom.pad_mode);
            if (x < 0) continue;
            dst[y * width + x] += row[oy * w_out + ox];
          }
        }
      }
    }
  }
}

/// Samples [s0, s0 + count) of one group, processed together so that the
/// patch matrix stays cache sized.
struct Chunk {
  Index g, s0, count;
};

std::vector<Chunk> chunks(const Layout& l) {
  constexpr Index kTargetElements = 1 << 15;
  const Index per_sample = l.c_in_group * l.k * l.k * l.h_out * l.w_out;
  const Index step = std::clamp<Index>(kTargetElements / std::max<Index>(per_sample, 1), 1, l.n);
  std::vector<Chunk> out;
  for (Index g = 0; g < l.groups; ++g)
    for (Index s0 = 0; s0 < l.n; s0 += step) out.push_back({g, s0, std::min(step, l.n - s0)});
  return out;
}

/// Patch matrix [C_in/groups * K * K, count * pixels].
template <typename Scalar>
RowMatrix<Scalar> chunk_cols(const typename ComplexTensor<Scalar>::Plane& plane, const Layout& l,
                             const Chunk& c, const ConvGeometry& geom) {
  const Index pixels = l.h_out * l.w_out;
  RowMatrix<Scalar> cols(l.c_in_group * l.k * l.k, c.count * pixels);
  for (Index s = 0; s < c.count; ++s)
    im2col_into(plane.data() + (c.s0 + s) * l.c_in * l.h * l.w + c.g * l.c_in_group * l.h * l.w,
                l.c_in_group, l.h, l.w, l.k, geom, cols.data(), cols.cols(), s * pixels);
  return cols;
}

/// Output block [C_out/groups, count * pixels] scattered into [N,C_out,H,W].
template <typename Scalar>
void scatter_chunk(const RowMatrix<Scalar>& y, typename ComplexTensor<Scalar>::Plane& plane,
                   const Layout& l, const Chunk& c) {
  const Index pixels = l.h_out * l.w_out;
  for (Index s = 0; s < c.count; ++s)
    for (Index o = 0; o < l.c_out_group; ++o)
      std::copy_n(y.data() + o * y.cols() + s * pixels, pixels,
                  plane.data() + ((c.s0 + s) * l.c_out + c.g * l.c_out_group + o) * pixels);
}

template <typename Scalar>
RowMatrix<Scalar> gather_chunk(const typename ComplexTensor<Scalar>::Plane& plane, const Layout& l,
                               const Chunk& c) {
  const Index pixels = l.h_out * l.w_out;
  RowMatrix<Scalar> y(l.c_out_group, c.count * pixels);
  for (Index s = 0; s < c.count; ++s)
    for (Index o = 0; o < l.c_out_group; ++o)
      std::copy_n(plane.data() + ((c.s0 + s) * l.c_out + c.g * l.c_out_group + o) * pixels, pixels,
                  y.data() + o * y.cols() + s * pixels);
  return y;
}

template <typename Scalar>
void col2im_chunk(const RowMatrix<Scalar>& cols, typename ComplexTensor<Scalar>::Plane& plane,
                  const Layout& l, const Chunk& c, const ConvGeometry& geom) {
  const Index pixels = l.h_out * l.w_out;
  for (Index s = 0; s < c.count; ++s)
    col2im_from(cols.data(), cols.cols(), s * pixels,
                plane.data() + (c.s0 + s) * l.c_in * l.h * l.w + c.g * l.c_in_group * l.h * l.w,
                l.c_in_group, l.h, l.w, l.k, geom);
}

}  // namespace

template <typename Scalar>
RowMatrix<Scalar> im2col(const Scalar* plane, Index channels, Index height, Index width,
                         Index kernel, const ConvGeometry& geom) {
  const Index h_out = (height + 2 * geom.padding - kernel) / geom.stride + 1;
  const Index w_out = (width + 2 * geom.padding - kernel) / geom.stride + 1;
  RowMatrix<Scalar> cols(channels * kernel * kernel, h_out * w_out);
  im2col_into(plane, channels, height, width, kernel, geom, cols.data(), cols.cols(), Index{0});
  return cols;
}

template <typename Scalar>
void col2im(const RowMatrix<Scalar>& cols, Scalar* plane, Index channels, Index height,
            Index width, Index kernel, const ConvGeometry& geom) {
  col2im_from(cols.data(), cols.cols(), Index{0}, plane, channels, height, width, kernel, geom);
}

template <typename Scalar>
ComplexTensor<Scalar> conv2d(const ComplexTensor<Scalar>& z, const ComplexTensor<Scalar>& w,
                             const ConvGeometry& geom, ConvMethod method) {
  using Mat = RowMatrix<Scalar>;
  using ConstMap = Eigen::Map<const Mat>;
  const Layout l = make_layout(z.shape(), w.shape(), geom);
  ComplexTensor<Scalar> out(output_shape(l));
  const Index w_block = l.c_out_group * l.c_in_group * l.k * l.k;
  const Index patch = l.c_in_group * l.k * l.k;

  for (const Chunk& c : chunks(l)) {
    const ConstMap xr(w.re().data() + c.g * w_block, l.c_out_group, patch);
    const ConstMap xi(w.im().data() + c.g * w_block, l.c_out_group, patch);
    const Mat ar = chunk_cols<Scalar>(z.re(), l, c, geom);
    const Mat ai = chunk_cols<Scalar>(z.im(), l, c, geom);
    Mat yr, yi;
    if (method == ConvMethod::gauss) {
      const Mat xs = xr + xi;
      const Mat t1 = xr * ar;
      const Mat t2 = xi * ai;
      yi.noalias() = xs * (ar + ai);
      yi -= t1 + t2;
      yr = t1 - t2;
    } else {
      yr.noalias() = xr * ar;
      yr.noalias() -= xi * ai;
      yi.noalias() = xr * ai;
      yi.noalias() += xi * ar;
    }
    scatter_chunk<Scalar>(yr, out.re(), l, c);
    scatter_chunk<Scalar>(yi, out.im(), l, c);
  }
  return out;
}

template <typename Scalar>
ConvGradients<Scalar> conv2d_backward(const ComplexTensor<Scalar>& z,
                                      const ComplexTensor<Scalar>& w,
                                      const ComplexTensor<Scalar>& grad_out,
                                      const ConvGeometry& geom) {
  using Mat = RowMatrix<Scalar>;
  using ConstMap = Eigen::Map<const Mat>;
  using MutMap = Eigen::Map<Mat>;
  const Layout l = make_layout(z.shape(), w.shape(), geom);
  if (grad_out.shape() != output_shape(l)) throw ShapeError("conv2d_backward: bad grad shape");
  ConvGradients<Scalar> grads{ComplexTensor<Scalar>(z.shape()), ComplexTensor<Scalar>(w.shape())};
  const Index w_block = l.c_out_group * l.c_in_group * l.k * l.k;
  const Index patch = l.c_in_group * l.k * l.k;

  for (const Chunk& c : chunks(l)) {
    const ConstMap xr(w.re().data() + c.g * w_block, l.c_out_group, patch);
    const ConstMap xi(w.im().data() + c.g * w_block, l.c_out_group, patch);
    MutMap dwr(grads.weight.re().data() + c.g * w_block, l.c_out_group, patch);
    MutMap dwi(grads.weight.im().data() + c.g * w_block, l.c_out_group, patch);
    const Mat ar = chunk_cols<Scalar>(z.re(), l, c, geom);
    const Mat ai = chunk_cols<Scalar>(z.im(), l, c, geom);
    const Mat gr = gather_chunk<Scalar>(grad_out.re(), l, c);
    const Mat gi = gather_chunk<Scalar>(grad_out.im(), l, c);
    const Mat gs = gr + gi;

    // dW = g a^H with a^H = A^T - i B^T.
    {
      const Mat t1 = gr * ar.transpose();
      const Mat t2 = -(gi * ai.transpose());
      const Mat t3 = gs * (ar - ai).transpose();
      dwr += t1 - t2;
      dwi += t3 - t1 - t2;
    }
    // dA = W^H g. W^H = X^T - i Y^T; the Gauss sum for the conjugated operand is X^T - Y^T.
    {
      const Mat xd = (xr - xi).transpose();
      const Mat t1 = xr.transpose() * gr;
      const Mat t2 = -(xi.transpose() * gi);
      const Mat t3 = xd * gs;
      const Mat dr = t1 - t2;
      const Mat di = t3 - t1 - t2;
      col2im_chunk<Scalar>(dr, grads.input.re(), l, c, geom);
      col2im_chunk<Scalar>(di, grads.input.im(), l, c, geom);
    }
  }
  return grads;
}

template <typename Scalar>
ComplexTensor<Scalar> conv2d_real(const ComplexTensor<Scalar>& x, const ComplexTensor<Scalar>& w,
                                  const ConvGeometry& geom) {
  using Mat = RowMatrix<Scalar>;
  const Layout l = make_layout(x.shape(), w.shape(), geom);
  ComplexTensor<Scalar> out(output_shape(l));
  const Index w_block = l.c_out_group * l.c_in_group * l.k * l.k;
  const Index patch = l.c_in_group * l.k * l.k;
  for (const Chunk& c : chunks(l)) {
    const Eigen::Map<const Mat> xr(w.re().data() + c.g * w_block, l.c_out_group, patch);
    const Mat y = xr * chunk_cols<Scalar>(x.re(), l, c, geom);
    scatter_chunk<Scalar>(y, out.re(), l, c);
  }
  return out;
}

template <typename Scalar>
ConvGradients<Scalar> conv2d_real_backward(const ComplexTensor<Scalar>& x,
                                           const ComplexTensor<Scalar>& w,
                                           const ComplexTensor<Scalar>& grad_out,
                                           const ConvGeometry& geom) {
  using Mat = RowMatrix<Scalar>;
  const Layout l = make_layout(x.shape(), w.shape(), geom);
  if (grad_out.shape() != output_shape(l)) throw ShapeError("conv2d_real_backward: bad grad shape");
  ConvGradients<Scalar> grads{ComplexTensor<Scalar>(x.shape()), ComplexTensor<Scalar>(w.shape())};
  const Index w_block = l.c_out_group * l.c_in_group * l.k * l.k;
  const Index patch = l.c_in_group * l.k * l.k;
  for (const Chunk& c : chunks(l)) {
    const Eigen::Map<const Mat> xr(w.re().data() + c.g * w_block, l.c_out_group, patch);
    Eigen::Map<Mat> dw(grads.weight.re().data() + c.g * w_block, l.c_out_group, patch);
    const Mat a = chunk_cols<Scalar>(x.re(), l, c, geom);
    const Mat gr = gather_chunk<Scalar>(grad_out.re(), l, c);
    dw.noalias() += gr * a.transpose();
    const Mat da = xr.transpose() * gr;
    col2im_chunk<Scalar>(da, grads.input.re(), l, c, geom);
  }
  return grads;
}

#define CDS_INSTANTIATE_CONV(S)                                                                 \
  template RowMatrix<S> im2col<S>(const S*, Index, Index, Index, Index, const ConvGeometry&);  \
  template void col2im<S>(const RowMatrix<S>&, S*, Index, Index, Index, Index,                 \
                          const ConvGeometry&);                                                 \
  template ComplexTensor<S> conv2d<S>(const ComplexTensor<S>&, const ComplexTensor<S>&,        \
                                      const ConvGeometry&, ConvMethod);                         \
  template ConvGradients<S> conv2d_backward<S>(const ComplexTensor<S>&,                         \
                                               const ComplexTensor<S>&,                         \
                                               const ComplexTensor<S>&, const ConvGeometry&);  \
  template ComplexTensor<S> conv2d_real<S>(const ComplexTensor<S>&, const ComplexTensor<S>&,   \
                                           const ConvGeometry&);                                \
  template ConvGradients<S> conv2d_real_backward<S>(const ComplexTensor<S>&,                    \
                                                    const ComplexTensor<S>&,                    \
                                                    const ComplexTensor<S>&, const ConvGeometry&);

CDS_INSTANTIATE_CONV(float)
CDS_INSTANTIATE_CONV(double)

}  // namespace cds
