#include "cds/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cds/evaluation.hpp"
#include "cds/log.hpp"

namespace cds {

using nlohmann::json;

namespace {

template <typename Scalar>
void check_logits(const ComplexTensor<Scalar>& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw ShapeError("logits must be [N,K], got " + shape_string(logits.shape()));
  if (static_cast<Index>(labels.size()) != logits.dim(0))
    throw ShapeError("label count does not match logits batch");
  for (int y : labels)
    if (y < 0 || y >= logits.dim(1)) throw ParameterError("label " + std::to_string(y) + " out of range");
}

/// Softmax rows in double and the mean loss.
template <typename Scalar>
double softmax_rows(const ComplexTensor<Scalar>& logits, const std::vector<int>& labels,
                    std::vector<double>* probs) {
  const Index n = logits.dim(0), k = logits.dim(1);
  if (probs) probs->assign(static_cast<std::size_t>(n * k), 0.0);
  double total = 0;
  for (Index i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < k; ++j) mx = std::max(mx, static_cast<double>(logits.re()[i * k + j]));
    double z = 0;
    for (Index j = 0; j < k; ++j) z += std::exp(static_cast<double>(logits.re()[i * k + j]) - mx);
    const double lse = mx + std::log(z);
    total += lse - static_cast<double>(logits.re()[i * k + labels[static_cast<std::size_t>(i)]]);
    if (probs)
      for (Index j = 0; j < k; ++j)
        (*probs)[static_cast<std::size_t>(i * k + j)] = std::exp(static_cast<double>(logits.re()[i * k + j]) - lse);
  }
  return total / static_cast<double>(n);
}

}  // namespace

template <typename Scalar>
double cross_entropy_value(const ComplexTensor<Scalar>& logits, const std::vector<int>& labels) {
  check_logits(logits, labels);
  return softmax_rows(logits, labels, nullptr);
}

template <typename Scalar>
ComplexTensor<Scalar> cross_entropy_logits(const ComplexTensor<Scalar>& logits, const std::vector<int>& labels,
                                           ForwardContext<Scalar>& ctx) {
  check_logits(logits, labels);
  std::vector<double> probs;
  const double loss = softmax_rows(logits, labels, ctx.recording() ? &probs : nullptr);
  ComplexTensor<Scalar> out(Shape{1});
  out.re()[0] = static_cast<Scalar>(loss);
  if (ctx.recording()) {
    const Shape shape = logits.shape();
    ctx.tape->record("cross_entropy", [shape, labels, probs = std::move(probs)](const ComplexTensor<Scalar>& g) {
      const Index n = shape[0], k = shape[1];
      const double scale = static_cast<double>(g.re()[0]) / static_cast<double>(n);
      ComplexTensor<Scalar> gx(shape);
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < k; ++j) {
          const double onehot = labels[static_cast<std::size_t>(i)] == j ? 1.0 : 0.0;
          gx.re()[i * k + j] = static_cast<Scalar>(scale * (probs[static_cast<std::size_t>(i * k + j)] - onehot));
        }
      return gx;
    });
  }
  return out;
}

std::string_view to_string(Algorithm a) { return a == Algorithm::adamw ? "adamw" : "sgd"; }

Algorithm parse_algorithm(std::string_view s) {
  if (s == "adamw") return Algorithm::adamw;
  if (s == "sgd") return Algorithm::sgd;
  throw ConfigError("unknown optimizer '" + std::string(s) + "' (expected adamw or sgd)");
}

json OptimizerConfig::to_json() const {
  return {{"algorithm", std::string(to_string(algorithm))},
          {"lr", lr},
          {"beta1", beta1},
          {"beta2", beta2},
          {"eps", eps},
          {"weight_decay", weight_decay},
          {"momentum", momentum}};
}

OptimizerConfig OptimizerConfig::from_json(const json& j) {
  OptimizerConfig c;
  try {
    c.algorithm = parse_algorithm(j.value("algorithm", std::string("adamw")));
    c.lr = j.value("lr", c.lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.momentum = j.value("momentum", c.momentum);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad optimizer config: ") + e.what());
  }
  return c;
}

template <typename Scalar>
Optimizer<Scalar>::Optimizer(std::vector<Parameter<Scalar>*> params, OptimizerConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr >= 0) || !(cfg_.weight_decay >= 0) || !(cfg_.eps > 0))
    throw ParameterError("optimizer needs lr >= 0, weight_decay >= 0, eps > 0");
  if (!(cfg_.beta1 >= 0 && cfg_.beta1 < 1) || !(cfg_.beta2 >= 0 && cfg_.beta2 < 1))
    throw ParameterError("optimizer betas must lie in [0, 1)");
  for (Parameter<Scalar>* p : params_) {
    state_.first.emplace_back(p->value.shape());
    state_.second.emplace_back(p->value.shape());
  }
}

template <typename Scalar>
void Optimizer<Scalar>::step() {
  for (Parameter<Scalar>* p : params_) {
    if (!p->trainable) continue;
    if (!p->grad.re().allFinite() || (!p->real && !p->grad.im().allFinite()))
      throw DivergenceError("non-finite gradient in " + p->name + "; step aborted");
  }
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double lr = cfg_.lr, decay = 1 - cfg_.lr * cfg_.weight_decay;
  const double bc1 = 1 - std::pow(cfg_.beta1, t), bc2 = 1 - std::pow(cfg_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter<Scalar>* p = params_[i];
    if (!p->trainable) continue;
    for (int part = 0; part < (p->real ? 1 : 2); ++part) {
      auto& w = part == 0 ? p->value.re() : p->value.im();
      const auto& g = part == 0 ? p->grad.re() : p->grad.im();
      auto& m = part == 0 ? state_.first[i].re() : state_.first[i].im();
      auto& v = part == 0 ? state_.second[i].re() : state_.second[i].im();
      for (Index k = 0; k < w.size(); ++k) {
        const double gk = g[k];
        double wk = static_cast<double>(w[k]) * decay;
        if (cfg_.algorithm == Algorithm::adamw) {
          const double mk = cfg_.beta1 * m[k] + (1 - cfg_.beta1) * gk;
          const double vk = cfg_.beta2 * v[k] + (1 - cfg_.beta2) * gk * gk;
          m[k] = static_cast<Scalar>(mk);
          v[k] = static_cast<Scalar>(vk);
          wk -= lr * (mk / bc1) / (std::sqrt(vk / bc2) + cfg_.eps);
        } else if (cfg_.momentum > 0) {
          const double mk = cfg_.momentum * m[k] + gk;
          m[k] = static_cast<Scalar>(mk);
          wk -= lr * mk;
        } else {
          wk -= lr * gk;
        }
        w[k] = static_cast<Scalar>(wk);
      }
    }
  }
}

std::string metrics_csv(const std::vector<MetricRecord>& records) {
  std::ostringstream os;
  os << "step,split,metric,value\n";
  char buf[40];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%.17g", r.value);
    os << r.step << ',' << r.split << ',' << r.metric << ',' << buf << '\n';
  }
  return os.str();
}

json TrainConfig::to_json() const {
  return {{"steps", steps},
          {"batch_size", batch_size},
          {"validate_every", validate_every},
          {"eval_batch_size", eval_batch_size},
          {"optimizer", optimizer.to_json()},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  try {
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.validate_every = j.value("validate_every", c.validate_every);
    c.eval_batch_size = j.value("eval_batch_size", c.eval_batch_size);
    if (j.contains("optimizer")) c.optimizer = OptimizerConfig::from_json(j.at("optimizer"));
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad training config: ") + e.what());
  }
  return c;
}

namespace {

template <typename Scalar>
Checkpoint<Scalar> snapshot(ModelGraph<Scalar>& model, const Optimizer<Scalar>& opt, std::int64_t step,
                            const std::string& digest) {
  Checkpoint<Scalar> c = capture(model);
  c.step = step;
  c.metrics_digest = digest;
  c.optimizer = opt.config().to_json();
  c.optimizer_step = opt.state().step;
  const auto& params = opt.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->trainable) continue;
    c.optimizer_state.emplace_back("first." + std::to_string(i), opt.state().first[i]);
    c.optimizer_state.emplace_back("second." + std::to_string(i), opt.state().second[i]);
  }
  return c;
}

}  // namespace

template <typename Scalar>
TrainResult<Scalar> train_loop(ModelGraph<Scalar>& model, const DatasetHandle& train, const DatasetHandle& val,
                               const TrainConfig& cfg, const std::optional<std::filesystem::path>& metrics_path) {
  if (cfg.steps < 0) throw ParameterError("steps must be >= 0");
  if (cfg.validate_every < 1) throw ParameterError("validate_every must be >= 1");
  if (cfg.batch_size < 1) throw ParameterError("batch size must be >= 1");
  if (train.size() == 0 && cfg.steps > 0) throw ParameterError("training split is empty");
  if (train.size() > 0 && train.channels() != model.config().in_channels)
    throw ConfigError("dataset has " + std::to_string(train.channels()) + " channels, model expects " +
                      std::to_string(model.config().in_channels));
  if (train.num_classes() != model.config().num_classes)
    throw ConfigError("dataset has " + std::to_string(train.num_classes()) + " classes, model expects " +
                      std::to_string(model.config().num_classes));

  Optimizer<Scalar> opt(model.parameters(), cfg.optimizer);
  TrainResult<Scalar> res;
  res.best = snapshot(model, opt, 0, hex32(crc32_of(metrics_csv({}))));

  DatasetHandle order = train;
  order.seed = cfg.seed;
  std::uint64_t epoch = 0;
  std::optional<BatchStream<Scalar>> stream;
  double loss_sum = 0;
  std::int64_t loss_count = 0;

  const auto validate = [&](std::int64_t step) {
    if (loss_count > 0) res.metrics.push_back({step, "train", "loss", loss_sum / static_cast<double>(loss_count)});
    loss_sum = 0;
    loss_count = 0;
    if (val.size() == 0) return;
    const double acc = evaluate_accuracy(model, val, cfg.eval_batch_size);
    res.metrics.push_back({step, "val", "accuracy", acc});
    const std::string csv = metrics_csv(res.metrics);
    if (metrics_path) std::ofstream(*metrics_path) << csv;
    log_info("step " + std::to_string(step) + " val accuracy " + std::to_string(acc));
    if (acc > res.best_val_accuracy) {
      res.best_val_accuracy = acc;
      res.best_step = step;
      res.best = snapshot(model, opt, step, hex32(crc32_of(csv)));
    }
  };

  std::int64_t step = 0;
  while (step < cfg.steps) {
    if (!stream || !stream->has_next()) stream.emplace(order, cfg.batch_size, epoch++);
    LabeledBatch<Scalar> batch = stream->next();
    // A trailing batch of one sample cannot feed batch statistics.
    if (batch.labels.size() < 2 && cfg.batch_size > 1) continue;

    model.zero_grad();
    Tape<Scalar> tape;
    ForwardContext<Scalar> ctx{&tape, Mode::train, nullptr};
    const ComplexTensor<Scalar> logits = model.forward(batch.inputs, ctx);
    const double loss = static_cast<double>(cross_entropy_logits(logits, batch.labels, ctx).re()[0]);
    if (!std::isfinite(loss)) {
      res.diverged = true;
      res.message = "loss became non-finite at step " + std::to_string(step + 1);
      break;
    }
    tape.backward(Scalar(1));
    try {
      opt.step();
    } catch (const DivergenceError& e) {
      res.diverged = true;
      res.message = std::string(e.what()) + " at step " + std::to_string(step + 1);
      break;
    }
    ++step;
    loss_sum += loss;
    ++loss_count;
    if (step % cfg.validate_every == 0 || step == cfg.steps) validate(step);
  }
  if (res.diverged) log_warn("training diverged: " + res.message);
  const std::string csv = metrics_csv(res.metrics);
  if (metrics_path) std::ofstream(*metrics_path) << csv;
  res.last = snapshot(model, opt, step, hex32(crc32_of(csv)));
  if (val.size() == 0 && !res.diverged) res.best = res.last;
  return res;
}

#define CDS_INSTANTIATE_TRAINING(S)                                                                     \
  template double cross_entropy_value<S>(const ComplexTensor<S>&, const std::vector<int>&);            \
  template ComplexTensor<S> cross_entropy_logits<S>(const ComplexTensor<S>&, const std::vector<int>&,   \
                                                    ForwardContext<S>&);                                \
  template class Optimizer<S>;                                                                          \
  template TrainResult<S> train_loop<S>(ModelGraph<S>&, const DatasetHandle&, const DatasetHandle&,     \
                                        const TrainConfig&, const std::optional<std::filesystem::path>&);

CDS_INSTANTIATE_TRAINING(float)
CDS_INSTANTIATE_TRAINING(double)

}  // namespace cds
