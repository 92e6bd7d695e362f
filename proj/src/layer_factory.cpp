#include "cds/layers.hpp"

namespace cds {

const std::vector<std::string>& layer_kinds() {
  static const std::vector<std::string> kinds = {
      "econv",       "complex_conv", "complex_linear",  "crelu",      "gtrelu",
      "eq_wrap",     "eq_maxpool",   "eq_batchnorm",    "division",   "conjugate",
      "prototype",   "complex_to_real", "split_re_im",  "real_conv",  "relu",
      "linear",      "avgpool",      "wfm_conv",        "distance_transform"};
  return kinds;
}

namespace {

template <typename T>
T get(const nlohmann::json& h, const char* key, const std::string& kind) {
  if (!h.contains(key)) throw ConfigError(kind + " needs hyperparameter '" + key + "'");
  try {
    return h.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(kind + " hyperparameter '" + key + "' has the wrong type");
  }
}

}  // namespace

template <typename Scalar>
LayerPtr<Scalar> make_layer(const LayerSpec& spec, Rng& rng) {
  const auto& h = spec.hyperparameters;
  const std::string& k = spec.kind;
  auto conv = [&] {
    try {
      return ConvSpec::from_json(h);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(k + " needs in_channels and out_channels");
    }
  };
  if (k == "econv") return std::make_unique<EconvLayer<Scalar>>(conv(), rng);
  if (k == "complex_conv") return std::make_unique<ComplexConvLayer<Scalar>>(conv(), rng);
  if (k == "complex_linear")
    return std::make_unique<ComplexLinearLayer<Scalar>>(get<Index>(h, "in_features", k),
                                                        get<Index>(h, "out_features", k), rng);
  if (k == "crelu") return std::make_unique<CReluLayer<Scalar>>();
  if (k == "gtrelu")
    return std::make_unique<GTReluLayer<Scalar>>(get<Index>(h, "channels", k),
                                                 static_cast<Scalar>(h.value("r", 0.0)));
  if (k == "eq_wrap")
    return std::make_unique<EquivariantWrapLayer<Scalar>>(
        make_layer<Scalar>(LayerSpec::from_json(get<nlohmann::json>(h, "inner", k)), rng));
  if (k == "eq_maxpool")
    return std::make_unique<EqMaxPoolLayer<Scalar>>(get<Index>(h, "window", k),
                                                    h.value("stride", get<Index>(h, "window", k)));
  if (k == "eq_batchnorm")
    return std::make_unique<EqBatchNormLayer<Scalar>>(get<Index>(h, "channels", k),
                                                      h.value("momentum", 0.1), h.value("eps", 1e-5));
  if (k == "division")
    return std::make_unique<DivisionLayer<Scalar>>(get<Index>(h, "channels", k),
                                                   h.value("kernel", Index{3}), rng,
                                                   h.value("eps", 1e-7));
  if (k == "conjugate")
    return std::make_unique<ConjugateLayer<Scalar>>(get<Index>(h, "channels", k),
                                                    h.value("kernel", Index{3}), rng);
  if (k == "prototype")
    return std::make_unique<PrototypeLayer<Scalar>>(
        get<Index>(h, "embedding", k), get<Index>(h, "classes", k),
        parse_metric(h.value("metric", std::string("manifold"))), h.value("invariant", false), rng);
  if (k == "complex_to_real") return std::make_unique<ComplexToRealLayer<Scalar>>();
  if (k == "split_re_im") return std::make_unique<SplitReImLayer<Scalar>>();
  if (k == "real_conv") return std::make_unique<RealConvLayer<Scalar>>(conv(), h.value("bias", true), rng);
  if (k == "relu") return std::make_unique<ReluLayer<Scalar>>();
  if (k == "linear")
    return std::make_unique<LinearLayer<Scalar>>(get<Index>(h, "in_features", k),
                                                 get<Index>(h, "out_features", k), rng);
  if (k == "avgpool")
    return std::make_unique<AvgPoolLayer<Scalar>>(get<Index>(h, "window", k),
                                                  h.value("stride", get<Index>(h, "window", k)));
  if (k == "wfm_conv") return std::make_unique<WfmConvLayer<Scalar>>(conv(), rng);
  if (k == "distance_transform")
    return std::make_unique<DistanceTransformLayer<Scalar>>(get<Index>(h, "channels", k), rng);
  throw ConfigError("unknown layer kind '" + k + "'");
}

template LayerPtr<float> make_layer<float>(const LayerSpec&, Rng&);
template LayerPtr<double> make_layer<double>(const LayerSpec&, Rng&);

}  // namespace cds
