#include "cds/gradcheck.hpp"

#include <cmath>
#include <numeric>
#include <ostream>

namespace cds {

std::string_view to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::fail: return "fail";
    case CheckStatus::inconclusive: return "inconclusive";
  }
  return "?";
}

std::vector<GradcheckCase> default_gradcheck_cases() {
  using nlohmann::json;
  auto conv = [](Index in, Index out, Index k, Index s, Index p) {
    return ConvSpec{in, out, k, s, p, 1}.to_json();
  };
  json real_conv = conv(2, 3, 3, 2, 1);
  real_conv["bias"] = true;
  const json gtrelu0 = LayerSpec{"gtrelu", {{"channels", 3}, {"r", 0.0}}, {}}.to_json();
  return {
      {"econv", {"econv", conv(2, 3, 3, 1, 1), {}}, {2, 2, 5, 5}},
      {"complex_conv", {"complex_conv", conv(2, 3, 3, 2, 1), {}}, {2, 2, 5, 5}},
      {"complex_linear", {"complex_linear", {{"in_features", 12}, {"out_features", 4}}, {}}, {2, 3, 2, 2}},
      {"crelu", {"crelu", json::object(), {}}, {2, 3, 3, 3}},
      {"gtrelu", {"gtrelu", {{"channels", 3}, {"r", 0.1}}, {}}, {2, 3, 3, 3}},
      {"eq_wrap", {"eq_wrap", {{"inner", gtrelu0}}, {}}, {2, 3, 3, 3}},
      {"eq_maxpool", {"eq_maxpool", {{"window", 2}, {"stride", 2}}, {}}, {2, 2, 4, 4}},
      {"eq_batchnorm", {"eq_batchnorm", {{"channels", 3}}, {}}, {4, 3, 2, 2}},
      {"division", {"division", {{"channels", 3}, {"kernel", 3}}, {}}, {2, 3, 4, 4}},
      {"conjugate", {"conjugate", {{"channels", 3}, {"kernel", 3}}, {}}, {2, 3, 4, 4}},
      {"prototype", {"prototype", {{"embedding", 6}, {"classes", 4}, {"metric", "manifold"}}, {}}, {3, 6}},
      {"prototype_invariant",
       {"prototype", {{"embedding", 6}, {"classes", 4}, {"metric", "manifold"}, {"invariant", true}}, {}},
       {3, 6}},
      {"prototype_euclidean",
       {"prototype", {{"embedding", 6}, {"classes", 4}, {"metric", "euclidean"}}, {}}, {3, 6}},
      {"complex_to_real", {"complex_to_real", json::object(), {}}, {2, 2, 3, 3}},
      {"split_re_im", {"split_re_im", json::object(), {}}, {2, 2, 3, 3}},
      {"real_conv", {"real_conv", real_conv, {}}, {2, 2, 5, 5}},
      {"relu", {"relu", json::object(), {}}, {2, 3, 3, 3}},
      {"linear", {"linear", {{"in_features", 12}, {"out_features", 5}}, {}}, {2, 3, 2, 2}},
      {"avgpool", {"avgpool", {{"window", 2}, {"stride", 2}}, {}}, {2, 2, 4, 4}},
      {"wfm_conv", {"wfm_conv", conv(2, 3, 3, 1, 1), {}}, {2, 2, 4, 4}},
      {"distance_transform", {"distance_transform", {{"channels", 3}}, {}}, {2, 3, 3, 3}},
  };
}

namespace {

double project(const ComplexTensor<double>& y, const ComplexTensor<double>& r) {
  return (y.re() * r.re()).sum() + (y.im() * r.im()).sum();
}

}  // namespace

GradReport check_gradients(const std::string& label, const ForwardFn& forward,
                           const std::vector<Parameter<double>*>& params, const Shape& input_shape,
                           std::uint64_t seed, const GradcheckOptions& opts, double input_scale) {
  GradReport report;
  report.label = label;
  report.seed = seed;
  Rng rng(seed, 0x67726164);

  for (Parameter<double>* p : params) {
    if (!p->trainable || opts.parameter_jitter <= 0) continue;
    const double scale = std::max(1.0, static_cast<double>(max_abs(p->value))) * opts.parameter_jitter;
    for (Index i = 0; i < p->value.size(); ++i) {
      p->value.re()[i] += rng.normal(0.0, scale);
      if (!p->real) p->value.im()[i] += rng.normal(0.0, scale);
    }
  }

  Parameter<double> input("input", ComplexTensor<double>(input_shape));
  std::vector<Parameter<double>*> all = params;
  if (opts.check_input) all.push_back(&input);
  std::vector<Parameter<double>*> checked;
  for (Parameter<double>* p : all)
    if (p->trainable) checked.push_back(p);

  // A finite-difference probe whose branch signature differs from the base
  // pass straddles a kink; the attempt is then discarded.
  std::uint64_t base_signature = 0;
  bool crossed = false;
  ComplexTensor<double> projection;
  auto objective = [&] {
    KinkMonitor k;
    ForwardContext<double> c{nullptr, Mode::train, &k};
    const double v = project(forward(input.value, c), projection);
    if (k.signature != base_signature) crossed = true;
    return v;
  };

  for (int attempt = 1; attempt <= opts.max_attempts; ++attempt) {
    report.attempts = attempt;
    input.value = make_tensor<double>(input_shape, Fill::gaussian(rng, 0.0, input_scale / std::sqrt(2.0)));
    KinkMonitor kinks;
    ForwardContext<double> probe{nullptr, Mode::train, &kinks};
    const ComplexTensor<double> y0 = forward(input.value, probe);
    if (kinks.min_margin < opts.kink_scale) continue;
    base_signature = kinks.signature;
    projection = make_tensor<double>(y0.shape(), Fill::gaussian(rng));

    for (Parameter<double>* p : all) p->zero_grad();
    Tape<double> tape;
    ForwardContext<double> ctx{&tape, Mode::train, nullptr};
    forward(input.value, ctx);
    const ComplexTensor<double> gin = tape.backward(projection);
    if (opts.check_input) input.grad = gin;

    crossed = false;
    // (plane, index) pairs per parameter
    std::vector<std::vector<std::pair<int, Index>>> coords(checked.size());
    for (std::size_t k = 0; k < checked.size(); ++k) {
      const Parameter<double>& p = *checked[k];
      for (int part = 0; part < (p.real ? 1 : 2); ++part) {
        const Index n = p.value.size();
        if (opts.coordinates <= 0 || opts.coordinates >= n) {
          for (Index i = 0; i < n; ++i) coords[k].push_back({part, i});
          continue;
        }
        std::vector<Index> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), Index{0});
        for (Index i = 0; i < opts.coordinates; ++i) {
          const auto j = static_cast<std::size_t>(i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n - i))));
          std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
          coords[k].push_back({part, idx[static_cast<std::size_t>(i)]});
        }
      }
    }
    std::vector<ComplexTensor<double>> numeric;
    if (opts.coordinates <= 0) {
      numeric = finite_diff_grad<double>(objective, checked, opts.step);
    } else {
      for (std::size_t k = 0; k < checked.size() && !crossed; ++k) {
        Parameter<double>& p = *checked[k];
        ComplexTensor<double> g(p.value.shape());
        for (const auto& [part, i] : coords[k]) {
          auto& plane = part == 0 ? p.value.re() : p.value.im();
          const double orig = plane[i];
          auto at = [&](double d) {
            plane[i] = orig + d;
            const double v = objective();
            if (!std::isfinite(v)) throw EvaluationError("finite difference objective is not finite");
            return v;
          };
          auto estimate = [&](double h) {
            return opts.five_point ? (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h)
                                   : (at(h) - at(-h)) / (2 * h);
          };
          double d = estimate(opts.step);
          if (opts.convergence_check) {
            const double half = estimate(opts.step / 2);
            if (std::abs(half - d) > opts.tolerance * std::max({std::abs(d), std::abs(half), opts.floor}))
              crossed = true;
            d = half;
          }
          plane[i] = orig;
          (part == 0 ? g.re() : g.im())[i] = d;
        }
        numeric.push_back(std::move(g));
      }
    }
    if (crossed) continue;

    report.max_rel_err = 0;
    report.worst_coordinate.clear();
    report.parameters.clear();
    for (std::size_t k = 0; k < checked.size(); ++k) {
      const Parameter<double>& p = *checked[k];
      ParameterGradError e;
      e.name = p.name;
      for (const auto& [part, i] : coords[k]) {
        const auto& a = part == 0 ? p.grad.re() : p.grad.im();
        const auto& n = part == 0 ? numeric[k].re() : numeric[k].im();
        const double abs_err = std::abs(a[i] - n[i]);
        const double rel = abs_err / std::max({std::abs(a[i]), std::abs(n[i]), opts.floor});
        e.max_abs_err = std::max(e.max_abs_err, abs_err);
        if (rel > e.max_rel_err || e.worst_index < 0) {
          e.max_rel_err = rel;
          e.worst_index = part * a.size() + i;
        }
        if (rel > report.max_rel_err || report.worst_coordinate.empty()) {
          report.max_rel_err = rel;
          report.worst_coordinate = p.name + (part == 0 ? ".re[" : ".im[") + std::to_string(i) + "]";
        }
      }
      report.parameters.push_back(std::move(e));
    }
    report.status = report.max_rel_err <= opts.tolerance ? CheckStatus::pass : CheckStatus::fail;
    return report;
  }
  report.status = CheckStatus::inconclusive;
  return report;
}

GradReport gradcheck(const GradcheckCase& c, std::uint64_t seed, const GradcheckOptions& opts) {
  Rng rng(seed, stream_id(c.label));
  LayerPtr<double> layer = make_layer<double>(c.spec, rng);
  Layer<double>* raw = layer.get();
  ForwardFn fwd = [raw](const ComplexTensor<double>& x, ForwardContext<double>& ctx) {
    return raw->forward(x, ctx);
  };
  return check_gradients(c.label, fwd, layer->parameters(), c.input_shape, seed, opts);
}

GradcheckOptions model_gradcheck_options() {
  GradcheckOptions o;
  o.coordinates = 12;
  o.five_point = true;
  o.step = 2e-6;
  o.convergence_check = true;
  o.kink_scale = 1e-3;
  o.parameter_jitter = 0.05;
  return o;
}

GradReport gradcheck_model(const ModelConfig& cfg, std::uint64_t seed, Index batch,
                           const GradcheckOptions& opts) {
  ModelConfig c = cfg;
  c.seed = seed;
  ModelGraph<double> model(c);
  auto fwd = [&model](const ComplexTensor<double>& x, ForwardContext<double>& ctx) {
    return model.forward(x, ctx);
  };
  std::vector<Parameter<double>*> params;
  std::vector<std::string> local;
  for (const auto& np : model.named_parameters()) {
    local.push_back(np.param->name);
    np.param->name = np.name;
    params.push_back(np.param);
  }
  GradReport r = check_gradients(c.builder, fwd, params, {batch, c.in_channels, c.input_size, c.input_size},
                                 seed, opts);
  for (std::size_t k = 0; k < params.size(); ++k) params[k]->name = local[k];
  return r;
}

void write_gradcheck_csv_header(std::ostream& os) {
  os << "layer,seed,max_rel_err,worst_coordinate,status\n";
}

void write_gradcheck_csv_row(std::ostream& os, const GradReport& r) {
  os << r.label << ',' << r.seed << ',' << r.max_rel_err << ',' << r.worst_coordinate << ','
     << to_string(r.status) << '\n';
}

}  // namespace cds
