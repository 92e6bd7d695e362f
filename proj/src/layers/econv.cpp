#include "cds/layers/econv.hpp"

#include <cmath>

namespace cds {

nlohmann::json ConvSpec::to_json() const {
  return {{"in_channels", in_channels}, {"out_channels", out_channels}, {"kernel", kernel},
          {"stride", stride},           {"padding", padding},           {"groups", groups}};
}

ConvSpec ConvSpec::from_json(const nlohmann::json& j) {
  ConvSpec s;
  s.in_channels = j.at("in_channels").get<Index>();
  s.out_channels = j.at("out_channels").get<Index>();
  s.kernel = j.value("kernel", Index{3});
  s.stride = j.value("stride", Index{1});
  s.padding = j.value("padding", Index{0});
  s.groups = j.value("groups", Index{1});
  if (s.in_channels % s.groups || s.out_channels % s.groups)
    throw ConfigError("conv channels must be divisible by groups");
  return s;
}

template <typename Scalar>
ComplexTensor<Scalar> init_complex_weight(const Shape& shape, Index fan_in, Rng& rng) {
  const double std = 1.0 / std::sqrt(2.0 * static_cast<double>(fan_in));
  return make_tensor<Scalar>(shape, Fill::gaussian(rng, 0.0, std));
}

template <typename Scalar>
EconvLayer<Scalar>::EconvLayer(const ConvSpec& spec, Rng& rng)
    : EconvLayer(spec, init_complex_weight<Scalar>(spec.weight_shape(),
                                                   spec.in_channels / spec.groups * spec.kernel *
                                                       spec.kernel,
                                                   rng)) {}

template <typename Scalar>
EconvLayer<Scalar>::EconvLayer(const ConvSpec& spec, Tensor weight)
    : spec_(spec), weight_("weight", std::move(weight)) {
  if (weight_.value.shape() != spec_.weight_shape())
    throw ShapeError("econv weight shape " + shape_string(weight_.value.shape()) +
                     " does not match " + shape_string(spec_.weight_shape()));
}

template <typename Scalar>
ComplexTensor<Scalar> EconvLayer<Scalar>::forward(const Tensor& x, ForwardContext<Scalar>& ctx) {
  const ConvGeometry geom = spec_.geometry();
  Tensor y = conv2d(x, weight_.value, geom, ConvMethod::gauss);
  if (ctx.recording()) {
    ctx.tape->record("econv", [this, x, geom](const Tensor& g) {
      ConvGradients<Scalar> grads = conv2d_backward(x, weight_.value, g, geom);
      weight_.grad += grads.weight;
      return std::move(grads.input);
    });
  }
  return y;
}

template <typename Scalar>
ComplexConvLayer<Scalar>::ComplexConvLayer(const ConvSpec& spec, Rng& rng)
    : spec_(spec),
      weight_("weight",
              init_complex_weight<Scalar>(spec.weight_shape(),
                                          spec.in_channels / spec.groups * spec.kernel * spec.kernel,
                                          rng)),
      bias_("bias", ComplexTensor<Scalar>(Shape{spec.out_channels})) {}

template <typename Scalar>
ComplexTensor<Scalar> ComplexConvLayer<Scalar>::forward(const Tensor& x,
                                                        ForwardContext<Scalar>& ctx) {
  const ConvGeometry geom = spec_.geometry();
  Tensor y = complex_elementwise(conv2d(x, weight_.value, geom, ConvMethod::gauss), bias_.value,
                                 ElementwiseOp::add);
  if (ctx.recording()) {
    ctx.tape->record("complex_conv", [this, x, geom](const Tensor& g) {
      ConvGradients<Scalar> grads = conv2d_backward(x, weight_.value, g, geom);
      weight_.grad += grads.weight;
      const Index n = g.dim(0), c = g.dim(1), hw = g.size() / (n * c);
      for (Index s = 0; s < n; ++s)
        for (Index ch = 0; ch < c; ++ch) {
          bias_.grad.re()[ch] += g.re().segment((s * c + ch) * hw, hw).sum();
          bias_.grad.im()[ch] += g.im().segment((s * c + ch) * hw, hw).sum();
        }
      return std::move(grads.input);
    });
  }
  return y;
}

namespace {

template <typename Scalar>
using CMatrix = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
CMatrix<Scalar> to_matrix(const ComplexTensor<Scalar>& t, Index rows, Index cols) {
  CMatrix<Scalar> m(rows, cols);
  for (Index i = 0; i < rows * cols; ++i) m.data()[i] = t[i];
  return m;
}

template <typename Scalar>
ComplexTensor<Scalar> from_matrix(const CMatrix<Scalar>& m, Shape shape) {
  ComplexTensor<Scalar> t(std::move(shape));
  for (Index i = 0; i < m.size(); ++i) t.set(i, m.data()[i]);
  return t;
}

}  // namespace

template <typename Scalar>
ComplexLinearLayer<Scalar>::ComplexLinearLayer(Index in_features, Index out_features, Rng& rng)
    : in_(in_features),
      out_(out_features),
      weight_("weight", init_complex_weight<Scalar>({out_features, in_features}, in_features, rng)) {}

template <typename Scalar>
ComplexTensor<Scalar> ComplexLinearLayer<Scalar>::forward(const Tensor& x,
                                                          ForwardContext<Scalar>& ctx) {
  const Index n = x.dim(0);
  if (x.size() != n * in_)
    throw ShapeError("complex_linear expects " + std::to_string(in_) + " features per sample, got " +
                     shape_string(x.shape()));
  const CMatrix<Scalar> f = to_matrix(x, n, in_);
  const CMatrix<Scalar> w = to_matrix(weight_.value, out_, in_);
  Tensor y = from_matrix<Scalar>(f * w.transpose(), {n, out_, 1, 1});
  if (ctx.recording()) {
    ctx.tape->record("complex_linear", [this, f, w, shape = x.shape()](const Tensor& g) {
      const CMatrix<Scalar> gm = to_matrix(g, f.rows(), out_);
      const CMatrix<Scalar> dw = gm.transpose() * f.conjugate();
      weight_.grad += from_matrix<Scalar>(dw, weight_.value.shape());
      return from_matrix<Scalar>(gm * w.conjugate(), shape);
    });
  }
  return y;
}

template ComplexTensor<float> init_complex_weight<float>(const Shape&, Index, Rng&);
template ComplexTensor<double> init_complex_weight<double>(const Shape&, Index, Rng&);
template class EconvLayer<float>;
template class EconvLayer<double>;
template class ComplexConvLayer<float>;
template class ComplexConvLayer<double>;
template class ComplexLinearLayer<float>;
template class ComplexLinearLayer<double>;

}  // namespace cds
