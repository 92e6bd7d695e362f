#ifndef CDS_CONV_HPP
#define CDS_CONV_HPP

#include "cds/tensor.hpp"

namespace cds {

enum class ConvMethod { direct, gauss };
enum class PadMode { zeros, replicate };

struct ConvGeometry {
  Index stride = 1;
  Index padding = 0;
  Index groups = 1;
  PadMode pad_mode = PadMode::zeros;
};

/// Output shape for an input of rank 3 ([C,H,W]) or 4 ([N,C,H,W]) and a
/// weight of shape [C_out, C_in/groups, K, K]. Throws ShapeError when the
/// kernel does not fit the padded input or channels do not divide.
Shape conv_output_shape(const Shape& input, const Shape& weight, const ConvGeometry& geom);

/// Bias-free complex convolution (cross-correlation, as in deep learning
/// frameworks). `direct` performs four real matrix products per group,
/// `gauss` three:
///   t1 = X*a, t2 = Y*b, t3 = (X+Y)*(a+b), out = (t1 - t2) + i(t3 - t1 - t2).
template <typename Scalar>
ComplexTensor<Scalar> conv2d(const ComplexTensor<Scalar>& z, const ComplexTensor<Scalar>& w,
                             const ConvGeometry& geom = {}, ConvMethod method = ConvMethod::gauss);

template <typename Scalar>
struct ConvGradients {
  ComplexTensor<Scalar> input;
  ComplexTensor<Scalar> weight;
};

/// Real-pair cotangents of conv2d: input gets W^H g, weight gets g z^H
/// (im2col form), both evaluated with the three-product trick.
template <typename Scalar>
ConvGradients<Scalar> conv2d_backward(const ComplexTensor<Scalar>& z,
                                      const ComplexTensor<Scalar>& w,
                                      const ComplexTensor<Scalar>& grad_out,
                                      const ConvGeometry& geom = {});

/// Real convolution on the real planes only; imaginary parts are ignored and
/// the result is purely real.
template <typename Scalar>
ComplexTensor<Scalar> conv2d_real(const ComplexTensor<Scalar>& x, const ComplexTensor<Scalar>& w,
                                  const ConvGeometry& geom = {});

template <typename Scalar>
ConvGradients<Scalar> conv2d_real_backward(const ComplexTensor<Scalar>& x,
                                           const ComplexTensor<Scalar>& w,
                                           const ComplexTensor<Scalar>& grad_out,
                                           const ConvGeometry& geom = {});

/// Single-plane patch gather, exposed for layers that convolve derived
/// planes (log-magnitudes, unit phasors). `plane` points at C*H*W values;
/// the result has C*K*K rows and H_out*W_out columns.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> im2col(
    const Scalar* plane, Index channels, Index height, Index width, Index kernel,
    const ConvGeometry& geom);

/// Adjoint of im2col: scatter-add columns back into a C*H*W plane.
template <typename Scalar>
void col2im(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& cols,
            Scalar* plane, Index channels, Index height, Index width, Index kernel,
            const ConvGeometry& geom);

}  // namespace cds

#endif  // CDS_CONV_HPP
