#include "cds/models.hpp"

namespace cds {

using nlohmann::json;

std::string_view to_string(Invariance i) {
  switch (i) {
    case Invariance::none: return "none";
    case Invariance::phase: return "phase";
    case Invariance::full: return "full";
  }
  return "?";
}

json ModelConfig::to_json() const {
  return {{"builder", builder},         {"num_classes", num_classes}, {"in_channels", in_channels},
          {"input_size", input_size},   {"widths", widths},           {"embedding", embedding},
          {"gtrelu_r", gtrelu_r},       {"metric", metric},           {"proto_batchnorm", proto_batchnorm},
          {"division_eps", division_eps}, {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  try {
    c.builder = j.value("builder", c.builder);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.in_channels = j.value("in_channels", c.in_channels);
    c.input_size = j.value("input_size", c.input_size);
    c.widths = j.value("widths", c.widths);
    c.embedding = j.value("embedding", c.embedding);
    c.gtrelu_r = j.value("gtrelu_r", c.gtrelu_r);
    c.metric = j.value("metric", c.metric);
    c.proto_batchnorm = j.value("proto_batchnorm", c.proto_batchnorm);
    c.division_eps = j.value("division_eps", c.division_eps);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
  return c;
}

const std::vector<std::string>& model_builders() {
  static const std::vector<std::string> b = {"type_i", "type_e", "dcn", "real", "surreal_wfm"};
  return b;
}

Invariance model_invariance(const std::string& builder) {
  if (builder == "type_i" || builder == "type_e" || builder == "surreal_wfm") return Invariance::full;
  return Invariance::none;
}

Index pooled_size(Index input_size) {
  Index s = input_size;
  for (int k = 0; k < 3; ++k) s = (s + 2 - 3) / 2 + 1;
  return s;
}

namespace {

json conv(Index in, Index out, Index k, Index stride, Index pad, Index groups = 1) {
  return ConvSpec{in, out, k, stride, pad, groups}.to_json();
}

LayerSpec spec(std::string kind, json h = json::object()) { return {std::move(kind), std::move(h), {}}; }

}  // namespace

std::vector<LayerSpec> model_layer_specs(const ModelConfig& c) {
  if (c.widths.size() != 3) throw ConfigError("widths must list three stage widths");
  if (c.num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (c.in_channels < 1) throw ConfigError("in_channels must be >= 1");
  const Index pool = pooled_size(c.input_size);
  if (pool < 1) throw ConfigError("input_size too small");
  const Index w0 = c.widths[0], w1 = c.widths[1], w2 = c.widths[2];
  const Index ch[4] = {c.in_channels, w0, w1, w2};
  std::vector<LayerSpec> s;

  if (c.builder == "type_i" || c.builder == "type_e") {
    if (c.builder == "type_i" && c.in_channels != 2 && c.in_channels != 3)
      throw ConfigError("type_i expects 2 or 3 input channels");
    const bool eq = c.builder == "type_e";
    for (int k = 0; k < 3; ++k) {
      s.push_back(spec("econv", conv(ch[k], ch[k + 1], 3, 2, 1)));
      if (!eq && k == 0) s.push_back(spec("division", {{"channels", w0}, {"kernel", 3}, {"eps", c.division_eps}}));
      const LayerSpec act = spec("gtrelu", {{"channels", ch[k + 1]}, {"r", eq ? 0.0 : c.gtrelu_r}});
      s.push_back(eq ? spec("eq_wrap", {{"inner", act.to_json()}}) : act);
    }
    s.push_back(spec("econv", conv(w2, w2, pool, 1, 0, w2)));
    s.push_back(spec("complex_linear", {{"in_features", w2}, {"out_features", c.embedding}}));
    if (eq || c.proto_batchnorm) s.push_back(spec("eq_batchnorm", {{"channels", c.embedding}}));
    s.push_back(spec("prototype", {{"embedding", c.embedding},
                                   {"classes", c.num_classes},
                                   {"metric", c.metric},
                                   {"invariant", eq}}));
    return s;
  }
  if (c.builder == "dcn") {
    for (int k = 0; k < 3; ++k) {
      s.push_back(spec("complex_conv", conv(ch[k], ch[k + 1], 3, 2, 1)));
      s.push_back(spec("crelu"));
    }
    s.push_back(spec("complex_conv", conv(w2, w2, pool, 1, 0, w2)));
    s.push_back(spec("split_re_im"));
    s.push_back(spec("linear", {{"in_features", 2 * w2}, {"out_features", c.embedding}}));
    s.push_back(spec("relu"));
    s.push_back(spec("linear", {{"in_features", c.embedding}, {"out_features", c.num_classes}}));
    return s;
  }
  if (c.builder == "real") {
    s.push_back(spec("split_re_im"));
    const Index rch[4] = {2 * c.in_channels, w0, w1, w2};
    for (int k = 0; k < 3; ++k) {
      json h = conv(rch[k], rch[k + 1], 3, 2, 1);
      h["bias"] = true;
      s.push_back(spec("real_conv", h));
      s.push_back(spec("relu"));
    }
    json pool_h = conv(w2, w2, pool, 1, 0, w2);
    pool_h["bias"] = true;
    s.push_back(spec("real_conv", pool_h));
    s.push_back(spec("linear", {{"in_features", w2}, {"out_features", c.embedding}}));
    s.push_back(spec("relu"));
    s.push_back(spec("linear", {{"in_features", c.embedding}, {"out_features", c.num_classes}}));
    return s;
  }
  if (c.builder == "surreal_wfm") {
    for (int k = 0; k < 3; ++k) s.push_back(spec("wfm_conv", conv(ch[k], ch[k + 1], 3, 2, 1)));
    s.push_back(spec("distance_transform", {{"channels", w2}}));
    json pool_h = conv(w2, w2, pool, 1, 0, w2);
    pool_h["bias"] = true;
    s.push_back(spec("real_conv", pool_h));
    s.push_back(spec("linear", {{"in_features", w2}, {"out_features", c.embedding}}));
    s.push_back(spec("relu"));
    s.push_back(spec("linear", {{"in_features", c.embedding}, {"out_features", c.num_classes}}));
    return s;
  }
  throw ConfigError("unknown model builder '" + c.builder + "'");
}

template <typename Scalar>
ModelGraph<Scalar>::ModelGraph(const ModelConfig& cfg)
    : config_(cfg), invariance_(model_invariance(cfg.builder)) {
  Rng rng(cfg.seed, stream_id("model"));
  std::uint64_t i = 0;
  for (const LayerSpec& s : model_layer_specs(cfg)) {
    Rng layer_rng = rng.fork(i++);
    layers_.push_back(make_layer<Scalar>(s, layer_rng));
  }
}

template <typename Scalar>
ComplexTensor<Scalar> ModelGraph<Scalar>::forward(const Tensor& x, ForwardContext<Scalar>& ctx) {
  if (x.rank() != 4 || x.dim(1) != config_.in_channels || x.dim(2) != config_.input_size ||
      x.dim(3) != config_.input_size)
    throw ShapeError("model expects [N," + std::to_string(config_.in_channels) + "," +
                     std::to_string(config_.input_size) + "," + std::to_string(config_.input_size) +
                     "], got " + shape_string(x.shape()));
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h, ctx);
  return h;
}

template <typename Scalar>
ComplexTensor<Scalar> ModelGraph<Scalar>::forward(const Tensor& x, Mode mode) {
  ForwardContext<Scalar> ctx{nullptr, mode, nullptr};
  return forward(x, ctx);
}

template <typename Scalar>
std::vector<NamedParameter<Scalar>> ModelGraph<Scalar>::named_parameters() {
  std::vector<NamedParameter<Scalar>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (Parameter<Scalar>* p : layers_[i]->parameters())
      out.push_back({"layers." + std::to_string(i) + "." + p->name, p});
  return out;
}

template <typename Scalar>
std::vector<Parameter<Scalar>*> ModelGraph<Scalar>::parameters() {
  std::vector<Parameter<Scalar>*> out;
  for (auto& l : layers_)
    for (Parameter<Scalar>* p : l->parameters()) out.push_back(p);
  return out;
}

template <typename Scalar>
Index ModelGraph<Scalar>::parameter_count() {
  Index n = 0;
  for (Parameter<Scalar>* p : parameters())
    if (p->trainable) n += p->count();
  return n;
}

template <typename Scalar>
Index ModelGraph<Scalar>::real_parameter_count() {
  Index n = 0;
  for (Parameter<Scalar>* p : parameters())
    if (p->trainable) n += p->real_coordinates();
  return n;
}

template <typename Scalar>
void ModelGraph<Scalar>::zero_grad() {
  for (auto& l : layers_) l->zero_grad();
}

template <typename Scalar>
json ModelGraph<Scalar>::layers_json() {
  json a = json::array();
  for (auto& l : layers_) a.push_back(l->spec().to_json());
  return a;
}

namespace {

ModelConfig base_config(std::string builder, int num_classes, Index in_channels, std::uint64_t seed) {
  ModelConfig c;
  c.builder = std::move(builder);
  c.num_classes = num_classes;
  c.in_channels = in_channels;
  c.seed = seed;
  return c;
}

}  // namespace

template <typename Scalar>
ModelGraph<Scalar> build_type_i_cifarnet(int num_classes, Index in_channels, std::uint64_t seed) {
  return ModelGraph<Scalar>(base_config("type_i", num_classes, in_channels, seed));
}

template <typename Scalar>
ModelGraph<Scalar> build_type_e_cifarnet(int num_classes, Index in_channels, std::uint64_t seed) {
  return ModelGraph<Scalar>(base_config("type_e", num_classes, in_channels, seed));
}

template <typename Scalar>
ModelGraph<Scalar> build_baseline(const std::string& kind, int num_classes, Index in_channels,
                                  std::uint64_t seed) {
  if (kind != "dcn" && kind != "real" && kind != "surreal_wfm")
    throw ConfigError("unknown baseline '" + kind + "'");
  return ModelGraph<Scalar>(base_config(kind, num_classes, in_channels, seed));
}

#define CDS_INSTANTIATE_MODELS(S)                                                         \
  template class ModelGraph<S>;                                                           \
  template ModelGraph<S> build_type_i_cifarnet<S>(int, Index, std::uint64_t);             \
  template ModelGraph<S> build_type_e_cifarnet<S>(int, Index, std::uint64_t);             \
  template ModelGraph<S> build_baseline<S>(const std::string&, int, Index, std::uint64_t);

CDS_INSTANTIATE_MODELS(float)
CDS_INSTANTIATE_MODELS(double)

}  // namespace cds
