#include "cds/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <map>
#include <ostream>

#include "cds/checkpoint.hpp"
#include "cds/config.hpp"
#include "cds/gradcheck.hpp"
#include "cds/log.hpp"
#include "cds/serialize.hpp"

namespace cds {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Flag {
  const char* name;
  const char* key;
  const char* help;
  bool boolean = false;
};

const std::vector<Flag> kCommonFlags = {
    {"--out", "out", "output directory"},
    {"--seed", "seed", "random seed"},
    {"--precision", "precision", "fp32 | fp64"},
};

const std::vector<Flag> kDataFlags = {
    {"--data", "data.source", "synth | cifar10 | cifar100 | dir"},
    {"--data-root", "data.root", "dataset directory (default $CDS_DATA_DIR)"},
    {"--subset", "data.subset", "training images to use (0 = all)"},
    {"--val-subset", "data.val_subset", "validation images to use (0 = all)"},
    {"--split", "data.split", "evaluated split: train | val | test"},
    {"--encoding", "encoding", "lab | sliding | rgb | native"},
};

const std::vector<Flag> kTrainFlags = {
    {"--model", "model.builder", "type_i | type_e | dcn | real | surreal_wfm"},
    {"--metric", "model.metric", "prototype metric: manifold | euclidean"},
    {"--proto-batchnorm", "model.proto_batchnorm", "batch norm before the Type-I prototype head", true},
    {"--steps", "train.steps", "optimizer steps"},
    {"--batch-size", "train.batch_size", "training batch size"},
    {"--validate-every", "train.validate_every", "steps between validations"},
    {"--eval-batch-size", "train.eval_batch_size", "evaluation batch size"},
    {"--optimizer", "optim.algorithm", "adamw | sgd"},
    {"--lr", "optim.lr", "learning rate"},
    {"--beta1", "optim.beta1", "AdamW beta1"},
    {"--beta2", "optim.beta2", "AdamW beta2"},
    {"--weight-decay", "optim.weight_decay", "decoupled weight decay"},
    {"--momentum", "optim.momentum", "SGD momentum"},
};

const std::vector<Flag> kRobustnessFlags = {
    {"--phase-ranges", "robustness.phase_ranges", "comma-separated theta_max values"},
    {"--logmag-min", "robustness.logmag_min", "log-magnitude range lower end"},
    {"--logmag-max", "robustness.logmag_max", "log-magnitude range upper end"},
    {"--draws", "robustness.draws", "draws per range"},
    {"--phase-normalize", "robustness.phase_normalize", "cancel the mean input phase first", true},
};

/// One subcommand with its config-backed flags.
struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  std::vector<std::string> assignments;
  std::vector<Flag> flags;
  std::map<std::string, std::string> text;
  std::map<std::string, bool> on;

  void add(const std::vector<Flag>& list) {
    for (const Flag& f : list) {
      flags.push_back(f);
      if (f.boolean)
        app->add_flag(f.name, on[f.key], f.help);
      else
        app->add_option(f.name, text[f.key], f.help);
    }
  }

  RunConfig resolve(const std::string& name, const json& command_defaults) const {
    RunConfig cfg;
    cfg.set("command", name);
    cfg.merge(command_defaults, "defaults");
    if (!config_path.empty()) {
      cfg.merge(RunConfig::read_file(config_path), config_path);
      cfg.set("command", name);
    }
    for (const Flag& f : flags) {
      if (app->count(f.name) == 0) continue;
      if (f.boolean)
        cfg.set(f.key, on.at(f.key));
      else
        cfg.set_text(f.key, text.at(f.key));
    }
    for (const auto& a : assignments) cfg.set_assignment(a);
    return cfg;
  }
};

fs::path out_dir(const RunConfig& cfg, bool create = true) {
  fs::path dir = cfg.get<std::string>("out");
  if (dir.empty()) throw ConfigError("no output directory: pass --out");
  if (create) fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
}

const DatasetHandle& pick_split(const Splits& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  throw ConfigError("unknown data.split '" + name + "' (train | val | test)");
}

void check_compatible(const ModelConfig& m, const DatasetHandle& h) {
  if (h.size() == 0) throw ConfigError("the selected split is empty");
  if (m.in_channels != h.channels() || m.num_classes != h.num_classes() || m.input_size != h.store->height())
    throw ConfigMismatchError("checkpoint expects " + std::to_string(m.in_channels) + " channels, " +
                              std::to_string(m.num_classes) + " classes, size " + std::to_string(m.input_size) +
                              "; data has " + std::to_string(h.channels()) + ", " +
                              std::to_string(h.num_classes()) + ", " + std::to_string(h.store->height()));
}

template <typename Scalar>
struct TrainedModel {
  ModelGraph<Scalar> model;
  json summary;
  bool diverged = false;
};

/// Trains one model on fixed splits; writes metrics.csv, checkpoint.cds
/// (best validation), last.cds and summary.json into `dir`.
template <typename Scalar>
TrainedModel<Scalar> train_one(const RunConfig& cfg, const Splits& s, const std::string& builder,
                               std::uint64_t seed, const fs::path& dir) {
  fs::create_directories(dir);
  ModelConfig mc = cfg.model(s.train.num_classes(), s.train.channels(), s.train.store->height());
  mc.builder = builder;
  mc.seed = seed;
  TrainConfig tc = cfg.train();
  tc.seed = seed;
  TrainedModel<Scalar> t{ModelGraph<Scalar>(mc), json::object()};
  log_info("training " + builder + " seed " + std::to_string(seed) + " for " + std::to_string(tc.steps) +
           " steps");
  TrainResult<Scalar> r = train_loop(t.model, s.train, s.val, tc, dir / "metrics.csv");
  save_checkpoint(dir / "checkpoint.cds", r.best);
  save_checkpoint(dir / "last.cds", r.last);
  restore(t.model, r.best);
  t.diverged = r.diverged;
  json& j = t.summary;
  j["model"] = builder;
  j["seed"] = seed;
  j["parameters"] = t.model.parameter_count();
  j["steps"] = tc.steps;
  j["best_step"] = r.best_step;
  j["best_val_accuracy"] = r.best_val_accuracy;
  j["test_accuracy"] = s.test.size() > 0 ? json(evaluate_accuracy(t.model, s.test, tc.eval_batch_size)) : json();
  j["diverged"] = r.diverged;
  j["message"] = r.message;
  write_text(dir / "summary.json", j.dump(2) + "\n");
  return t;
}

template <typename Scalar>
int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const fs::path dir = out_dir(cfg);
  cfg.write(dir / "config.json");
  const Splits s = load_splits(cfg);
  auto t = train_one<Scalar>(cfg, s, cfg.get<std::string>("model.builder"), cfg.get<std::uint64_t>("seed"), dir);
  out << t.summary.dump(2) << '\n';
  if (t.diverged) {
    out << "training diverged; " << (dir / "checkpoint.cds").string() << " holds the last good checkpoint\n";
    return 1;
  }
  return 0;
}

template <typename Scalar>
ModelGraph<Scalar> load_model(const std::string& path) {
  return instantiate(load_checkpoint<Scalar>(path));
}

template <typename Scalar>
int cmd_eval(const RunConfig& cfg, const std::string& checkpoint, std::ostream& out) {
  const fs::path dir = out_dir(cfg);
  cfg.write(dir / "config.json");
  ModelGraph<Scalar> model = load_model<Scalar>(checkpoint);
  const Splits s = load_splits(cfg);
  const std::string split = cfg.get<std::string>("data.split");
  const DatasetHandle& h = pick_split(s, split);
  check_compatible(model.config(), h);
  const double acc = evaluate_accuracy(model, h, cfg.get<Index>("train.eval_batch_size"));
  json j{{"checkpoint", checkpoint}, {"split", split}, {"count", h.size()}, {"accuracy", acc}};
  write_text(dir / "eval.csv", "split,metric,value\n" + split + ",accuracy," + std::to_string(acc) + "\n");
  write_text(dir / "eval.json", j.dump(2) + "\n");
  out << j.dump(2) << '\n';
  return 0;
}

template <typename Scalar>
int cmd_robustness(const RunConfig& cfg, const std::string& checkpoint, std::ostream& out) {
  const fs::path dir = out_dir(cfg);
  cfg.write(dir / "config.json");
  ModelGraph<Scalar> model = load_model<Scalar>(checkpoint);
  const Splits s = load_splits(cfg);
  const DatasetHandle& h = pick_split(s, cfg.get<std::string>("data.split"));
  check_compatible(model.config(), h);
  const RobustnessCurve curve =
      robustness_sweep(model, h, cfg.robustness(), Rng(cfg.get<std::uint64_t>("seed"), stream_id("robustness")));
  json j = curve.to_json();
  j["checkpoint"] = checkpoint;
  j["model"] = model.config().builder;
  j["spread"] = curve.spread();
  write_text(dir / "robustness.csv", curve.to_csv());
  write_text(dir / "robustness.json", j.dump(2) + "\n");
  out << curve.to_csv();
  return 0;
}

template <typename Scalar>
int cmd_biasvar(const RunConfig& cfg, const std::vector<std::string>& checkpoints, std::ostream& out) {
  const fs::path dir = out_dir(cfg);
  cfg.write(dir / "config.json");
  const Splits s = load_splits(cfg);
  const DatasetHandle& h = pick_split(s, cfg.get<std::string>("data.split"));
  std::vector<ModelGraph<Scalar>> models;
  if (!checkpoints.empty()) {
    for (const auto& c : checkpoints) models.push_back(load_model<Scalar>(c));
  } else {
    const int n = cfg.get<int>("biasvar.replicas");
    if (n < 2) throw ConfigError("biasvar needs at least two replicas");
    const auto seed = cfg.get<std::uint64_t>("seed");
    for (int k = 0; k < n; ++k)
      models.push_back(train_one<Scalar>(cfg, s, cfg.get<std::string>("model.builder"), seed + static_cast<std::uint64_t>(k),
                                         dir / ("replica_" + std::to_string(k)))
                           .model);
  }
  std::vector<ModelGraph<Scalar>*> ptrs;
  for (auto& m : models) {
    check_compatible(m.config(), h);
    ptrs.push_back(&m);
  }
  const BiasVarianceTable t = bias_variance(ptrs, h, cfg.get<Index>("train.eval_batch_size"));
  write_text(dir / "biasvar.csv", t.to_csv());
  write_text(dir / "biasvar.json", t.to_json().dump(2) + "\n");
  out << t.to_csv();
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg, bool all, std::vector<std::string> names, std::ostream& out) {
  const fs::path dir = out_dir(cfg);
  cfg.write(dir / "config.json");
  const auto cases = default_gradcheck_cases();
  const std::vector<std::string> nets = {"cifarnet_type_i", "cifarnet_type_e"};
  if (all) {
    names.clear();
    for (const auto& c : cases) names.push_back(c.label);
    names.insert(names.end(), nets.begin(), nets.end());
  }
  if (names.empty()) throw ConfigError("gradcheck needs --all or at least one --layer");
  const int seeds = cfg.get<int>("gradcheck.seeds");
  if (seeds < 1) throw ConfigError("gradcheck.seeds must be >= 1");
  const auto base = cfg.get<std::uint64_t>("seed");

  std::ofstream rows(dir / "gradcheck.csv");
  write_gradcheck_csv_header(rows);
  std::string summary = "layer,seeds,max_rel_err,status\n";
  bool ok = true;
  for (const auto& name : names) {
    std::vector<GradReport> reports;
    for (int k = 0; k < seeds; ++k) {
      const std::uint64_t seed = base + static_cast<std::uint64_t>(k);
      if (name.rfind("cifarnet_", 0) == 0) {
        ModelConfig m;
        m.builder = name.substr(9);
        GradReport r = gradcheck_model(m, seed, 2, model_gradcheck_options());
        r.label = name;
        reports.push_back(std::move(r));
      } else {
        const auto it = std::find_if(cases.begin(), cases.end(), [&](const auto& c) { return c.label == name; });
        if (it == cases.end()) throw ConfigError("unknown gradcheck case '" + name + "'");
        reports.push_back(gradcheck(*it, seed));
      }
      write_gradcheck_csv_row(rows, reports.back());
    }
    double worst = 0;
    CheckStatus status = CheckStatus::pass;
    for (const auto& r : reports) {
      worst = std::max(worst, r.max_rel_err);
      if (r.status == CheckStatus::fail) status = CheckStatus::fail;
      else if (r.status == CheckStatus::inconclusive && status == CheckStatus::pass) status = r.status;
    }
    ok = ok && status == CheckStatus::pass;
    std::ostringstream line;
    line << name << ',' << seeds << ',' << worst << ',' << to_string(status) << '\n';
    summary += line.str();
    out << line.str() << std::flush;
  }
  write_text(dir / "gradcheck_summary.csv", summary);
  return ok ? 0 : 1;
}

int cmd_encode(const RunConfig& cfg, const std::string& in, double phase, double logmag, std::ostream& out) {
  const fs::path target = cfg.get<std::string>("out");
  if (target.empty()) throw ConfigError("no output file: pass --out");
  if (in.empty()) throw ConfigError("no input image: pass --in");
  const RgbImage rgb = read_ppm(in);
  EncodedImage enc = encode(rgb, cfg.encoding());
  enc = complex_scale_transform(enc, std::polar(std::exp(logmag), phase));
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  if (cfg.precision() == Precision::fp64)
    save_tensor(target, enc.tensor);
  else
    save_tensor(target, enc.tensor.template cast<float>());
  out << "wrote " << target.string() << ' ' << shape_string(enc.tensor.shape()) << '\n';
  return 0;
}

int cmd_wfmcheck(const RunConfig& cfg, std::ostream& out) {
  const fs::path dir = out_dir(cfg);
  cfg.write(dir / "config.json");
  const int trials = cfg.get<int>("wfmcheck.trials");
  if (trials < 1) throw ConfigError("wfmcheck.trials must be >= 1");
  Rng rng(cfg.get<std::uint64_t>("seed"), stream_id("wfmcheck"));
  const WfmCheckReport r = wfm_decomposability_check(rng, trials);
  write_text(dir / "wfmcheck.csv", r.to_csv());
  json j = r.to_json();
  write_text(dir / "wfmcheck.json", j.dump(2) + "\n");
  out << "trials " << r.trials << " max log-magnitude error " << r.max_logmag_error << " separation failures "
      << r.separation_failures << (r.passed ? " pass" : " FAIL") << '\n';
  return r.passed ? 0 : 1;
}

template <typename Scalar>
int cmd_table(const RunConfig& cfg, const std::vector<std::string>& models, std::ostream& out) {
  const fs::path dir = out_dir(cfg);
  cfg.write(dir / "config.json");
  const Splits s = load_splits(cfg);
  const auto seed = cfg.get<std::uint64_t>("seed");
  std::ostringstream csv;
  csv.precision(17);
  csv << "model,parameters,steps,best_step,best_val_accuracy,test_accuracy\n";
  for (const auto& m : models) {
    auto t = train_one<Scalar>(cfg, s, m, seed, dir / m);
    const json& j = t.summary;
    csv << m << ',' << j["parameters"].get<Index>() << ',' << j["steps"].get<std::int64_t>() << ','
        << j["best_step"].get<std::int64_t>() << ',' << j["best_val_accuracy"].get<double>() << ',';
    if (!j["test_accuracy"].is_null()) csv << j["test_accuracy"].get<double>();
    csv << '\n';
  }
  write_text(dir / "table.csv", csv.str());
  out << csv.str();
  return 0;
}

template <typename F>
int by_precision(Precision p, F&& f) {
  return p == Precision::fp64 ? f(double{}) : f(float{});
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Complex-valued deep sets: training, evaluation and checks", "cds"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  std::map<std::string, Command> commands;
  auto add_command = [&](const std::string& name, const std::string& help,
                         std::initializer_list<const std::vector<Flag>*> groups) -> Command& {
    Command& c = commands[name];
    c.app = app.add_subcommand(name, help);
    c.app->add_option("--config", c.config_path, "JSON run config; flags override its values")
        ->check(CLI::ExistingFile);
    c.app->add_option("--set", c.assignments, "override any config key: key=value");
    c.add(kCommonFlags);
    for (const auto* g : groups) c.add(*g);
    return c;
  };

  add_command("train", "train a model and keep the best-validation checkpoint", {&kDataFlags, &kTrainFlags});
  std::string checkpoint;
  Command& eval = add_command("eval", "top-1 accuracy of a checkpoint", {&kDataFlags});
  eval.app->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  std::string robust_checkpoint;
  Command& robust = add_command("robustness", "accuracy under random complex scalings",
                                {&kDataFlags, &kRobustnessFlags});
  robust.app->add_option("--checkpoint", robust_checkpoint, "checkpoint file")->required();
  std::vector<std::string> bv_checkpoints;
  Command& bv = add_command("biasvar", "bias-variance decomposition over replicas", {&kDataFlags, &kTrainFlags});
  bv.app->add_option("--checkpoint", bv_checkpoints, "replica checkpoints (else --replicas are trained)");
  bv.add({{"--replicas", "biasvar.replicas", "replicas to train when no checkpoints are given"}});
  bool gc_all = false;
  std::vector<std::string> gc_layers;
  Command& gc = add_command("gradcheck", "finite-difference gradient checks at fp64", {});
  gc.app->add_flag("--all", gc_all, "every layer kind and both CIFARnets");
  gc.app->add_option("--layer", gc_layers, "case name (layer kind, cifarnet_type_i, cifarnet_type_e)");
  gc.add({{"--seeds", "gradcheck.seeds", "seeds per case"}});
  std::string enc_in;
  double enc_phase = 0, enc_logmag = 0;
  Command& enc = add_command("encode", "encode a PPM image as a complex tensor file",
                             {&kDataFlags});
  enc.app->add_option("--in", enc_in, "input PPM (P6) image")->required();
  enc.app->add_option("--scale-phase", enc_phase, "multiply by exp(i * phase)");
  enc.app->add_option("--scale-logmag", enc_logmag, "multiply by exp(logmag)");
  Command& wfm = add_command("wfmcheck", "brute-force check of the wFM magnitude closed form", {});
  wfm.add({{"--trials", "wfmcheck.trials", "random trials"}});
  std::vector<std::string> table_models = {"type_i", "type_e", "dcn", "real"};
  Command& table = add_command("table", "train the four CIFARnets on CIFAR-10 and compare",
                               {&kDataFlags, &kTrainFlags});
  table.app->add_option("--models", table_models, "builders to train")->delimiter(',');

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    json defaults = json::object();
    if (name == "table")
      defaults = {{"data.source", "cifar10"}, {"data.subset", 5000},       {"train.steps", 5000},
                  {"train.batch_size", 256},  {"train.validate_every", 1000}, {"encoding", "lab"}};
    const RunConfig cfg = commands.at(name).resolve(name, defaults);

    if (name == "train")
      return by_precision(cfg.precision(), [&](auto s) { return cmd_train<decltype(s)>(cfg, out); });
    if (name == "eval")
      return by_precision(checkpoint_precision(checkpoint),
                          [&](auto s) { return cmd_eval<decltype(s)>(cfg, checkpoint, out); });
    if (name == "robustness")
      return by_precision(checkpoint_precision(robust_checkpoint),
                          [&](auto s) { return cmd_robustness<decltype(s)>(cfg, robust_checkpoint, out); });
    if (name == "biasvar") {
      Precision p = cfg.precision();
      if (!bv_checkpoints.empty()) {
        p = checkpoint_precision(bv_checkpoints.front());
        for (const auto& c : bv_checkpoints)
          if (checkpoint_precision(c) != p) throw ConfigError("replica checkpoints mix fp32 and fp64");
        if (bv_checkpoints.size() < 2) throw ConfigError("biasvar needs at least two replica checkpoints");
      }
      return by_precision(p, [&](auto s) { return cmd_biasvar<decltype(s)>(cfg, bv_checkpoints, out); });
    }
    if (name == "gradcheck") return cmd_gradcheck(cfg, gc_all, gc_layers, out);
    if (name == "encode") return cmd_encode(cfg, enc_in, enc_phase, enc_logmag, out);
    if (name == "wfmcheck") return cmd_wfmcheck(cfg, out);
    if (name == "table") {
      const auto& known = model_builders();
      for (const auto& m : table_models)
        if (std::find(known.begin(), known.end(), m) == known.end())
          throw ConfigError("unknown model '" + m + "' in --models");
      return by_precision(cfg.precision(), [&](auto s) { return cmd_table<decltype(s)>(cfg, table_models, out); });
    }
    err << "error: unhandled command " << name << '\n';
    return 2;
  } catch (const StateError& e) {
    err << "internal error: " << e.what() << '\n';
    return 2;
  } catch (const EvaluationError& e) {
    err << "internal error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace cds
