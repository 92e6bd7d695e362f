#include "cds/config.hpp"

#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

namespace cds {

using nlohmann::json;
namespace fs = std::filesystem;

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      {"command", "", "subcommand the config was written for"},
      {"seed", 0, "seed for model init, data generation and batch order"},
      {"out", "", "output directory"},
      {"precision", "fp32", "fp32 | fp64"},
      {"encoding", "lab", "lab | sliding | rgb | native"},
      {"model.builder", "type_i", "type_i | type_e | dcn | real | surreal_wfm"},
      {"model.metric", "manifold", "prototype distance: manifold | euclidean"},
      {"model.proto_batchnorm", false, "type_i: batch norm before the prototype head"},
      {"model.division_eps", 1e-7, "type_i: Division layer magnitude offset"},
      {"model.gtrelu_r", 0.0, "type_i: GTReLU magnitude threshold"},
      {"model.embedding", 128, "embedding width"},
      {"data.source", "synth", "synth | cifar10 | cifar100 | dir"},
      {"data.root", "", "dataset directory; defaults to $CDS_DATA_DIR"},
      {"data.subset", 0, "use this many training images (0 = all)"},
      {"data.val_subset", 0, "use this many validation images (0 = all)"},
      {"data.split", "test", "split evaluated by eval/robustness/biasvar: train | val | test"},
      {"data.val_per_class", 50, "synth/dir: validation items per class"},
      {"data.test_per_class", 50, "synth: test items per class"},
      {"data.synth.classes", 10, "synth: number of classes"},
      {"data.synth.per_class", 500, "synth: train+val items per class"},
      {"data.synth.size", 32, "synth: image side"},
      {"data.synth.channels", 2, "synth: complex channels"},
      {"data.synth.noise", 0.1, "synth: complex Gaussian noise sigma"},
      {"data.synth.logmag", 0.5, "synth: global log-magnitude range"},
      {"optim.algorithm", "adamw", "adamw | sgd"},
      {"optim.lr", 1e-3, "learning rate"},
      {"optim.beta1", 0.99, "AdamW first moment decay"},
      {"optim.beta2", 0.999, "AdamW second moment decay"},
      {"optim.eps", 1e-8, "AdamW epsilon"},
      {"optim.weight_decay", 0.1, "decoupled weight decay"},
      {"optim.momentum", 0.9, "SGD momentum (0 disables)"},
      {"train.steps", 2000, "optimizer steps"},
      {"train.batch_size", 64, "training batch size"},
      {"train.validate_every", 250, "steps between validations"},
      {"train.eval_batch_size", 256, "evaluation batch size"},
      {"robustness.phase_ranges",
       json::array({0.0, std::numbers::pi / 8, std::numbers::pi / 4, std::numbers::pi / 2, std::numbers::pi}),
       "phase ranges theta_max"},
      {"robustness.logmag_min", 0.0, "log-magnitude range lower end"},
      {"robustness.logmag_max", 0.0, "log-magnitude range upper end"},
      {"robustness.draws", 10, "draws per range"},
      {"robustness.phase_normalize", false, "cancel mean phase before the model"},
      {"biasvar.replicas", 3, "replicas trained when no checkpoints are given"},
      {"gradcheck.seeds", 10, "seeds per layer kind"},
      {"wfmcheck.trials", 100, "random trials"},
  };
  return schema;
}

namespace {

const ConfigKey* find_key(const std::string& key) {
  for (const auto& k : config_schema())
    if (k.key == key) return &k;
  return nullptr;
}

std::string type_name(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

bool compatible(const json& def, const json& v) {
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_number_integer()) return v.is_number_integer();
  if (def.is_number()) return v.is_number();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) {
    if (!v.is_array()) return false;
    for (const auto& e : v)
      if (!e.is_number()) return false;
    return true;
  }
  return false;
}

}  // namespace

RunConfig::RunConfig() : values_(json::object()) {
  for (const auto& k : config_schema()) values_[k.key] = k.default_value;
}

json RunConfig::read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError(path.string() + " is not a JSON object");
  return j;
}

RunConfig RunConfig::load(const fs::path& path) {
  RunConfig c;
  c.merge(read_file(path), path.string());
  return c;
}

void RunConfig::merge(const json& flat, const std::string& source) {
  std::vector<std::string> unknown;
  for (const auto& [k, v] : flat.items())
    if (!find_key(k)) unknown.push_back(k);
  if (!unknown.empty()) {
    std::string msg = "unknown config keys in " + source + ":";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  for (const auto& [k, v] : flat.items()) set(k, v);
}

void RunConfig::set(const std::string& key, const json& value) {
  const ConfigKey* k = find_key(key);
  if (!k) throw ConfigError("unknown config key: " + key);
  if (!compatible(k->default_value, value))
    throw ConfigTypeError("config key '" + key + "' expects " + type_name(k->default_value) + ", got " +
                          type_name(value));
  values_[key] = value;
}

namespace {

double parse_number(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size())
    throw ConfigTypeError("config key '" + key + "' expects a number, got '" + text + "'");
  return v;
}

}  // namespace

void RunConfig::set_text(const std::string& key, const std::string& text) {
  const ConfigKey* k = find_key(key);
  if (!k) throw ConfigError("unknown config key: " + key);
  const json& def = k->default_value;
  if (def.is_string()) return set(key, text);
  if (def.is_boolean()) {
    if (text == "true" || text == "1") return set(key, true);
    if (text == "false" || text == "0") return set(key, false);
    throw ConfigTypeError("config key '" + key + "' expects true or false, got '" + text + "'");
  }
  if (def.is_number_integer()) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != text.size())
      throw ConfigTypeError("config key '" + key + "' expects an integer, got '" + text + "'");
    return set(key, v);
  }
  if (def.is_number()) return set(key, parse_number(key, text));
  json list = json::array();
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) list.push_back(parse_number(key, item));
  set(key, list);
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("expected key=value, got '" + assignment + "'");
  set_text(assignment.substr(0, eq), assignment.substr(eq + 1));
}

const json& RunConfig::at(const std::string& key) const {
  if (!values_.contains(key)) throw ConfigError("unknown config key: " + key);
  return values_.at(key);
}

void RunConfig::write(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << values_.dump(2) << '\n';
}

ModelConfig RunConfig::model(int num_classes, Index in_channels, Index input_size) const {
  ModelConfig m;
  m.builder = get<std::string>("model.builder");
  m.num_classes = num_classes;
  m.in_channels = in_channels;
  m.input_size = input_size;
  m.embedding = get<Index>("model.embedding");
  m.gtrelu_r = get<double>("model.gtrelu_r");
  m.metric = get<std::string>("model.metric");
  m.proto_batchnorm = get<bool>("model.proto_batchnorm");
  m.division_eps = get<double>("model.division_eps");
  m.seed = get<std::uint64_t>("seed");
  parse_metric(m.metric);
  return m;
}

OptimizerConfig RunConfig::optimizer() const {
  OptimizerConfig o;
  o.algorithm = parse_algorithm(get<std::string>("optim.algorithm"));
  o.lr = get<double>("optim.lr");
  o.beta1 = get<double>("optim.beta1");
  o.beta2 = get<double>("optim.beta2");
  o.eps = get<double>("optim.eps");
  o.weight_decay = get<double>("optim.weight_decay");
  o.momentum = get<double>("optim.momentum");
  return o;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.steps = get<std::int64_t>("train.steps");
  t.batch_size = get<Index>("train.batch_size");
  t.validate_every = get<std::int64_t>("train.validate_every");
  t.eval_batch_size = get<Index>("train.eval_batch_size");
  t.optimizer = optimizer();
  t.seed = get<std::uint64_t>("seed");
  return t;
}

RobustnessOptions RunConfig::robustness() const {
  RobustnessOptions r;
  r.phase_ranges = get<std::vector<double>>("robustness.phase_ranges");
  r.logmag_min = get<double>("robustness.logmag_min");
  r.logmag_max = get<double>("robustness.logmag_max");
  r.draws = get<int>("robustness.draws");
  r.batch_size = get<Index>("train.eval_batch_size");
  r.phase_normalize = get<bool>("robustness.phase_normalize");
  return r;
}

Encoding RunConfig::encoding() const { return parse_encoding(get<std::string>("encoding")); }

Precision RunConfig::precision() const { return parse_precision(get<std::string>("precision")); }

fs::path default_data_root() {
  const char* env = std::getenv("CDS_DATA_DIR");
  return env ? fs::path(env) : fs::path();
}

bool cifar10_available(const fs::path& dir) {
  if (dir.empty()) return false;
  for (int b = 1; b <= 5; ++b)
    if (!fs::exists(dir / ("data_batch_" + std::to_string(b) + ".bin"))) return false;
  return fs::exists(dir / "test_batch.bin");
}

namespace {

std::string cifar_layout(const std::string& source) {
  if (source == "cifar10")
    return "Expected data_batch_1.bin ... data_batch_5.bin and test_batch.bin (the CIFAR-10 'binary "
           "version' archive), either directly in the dataset directory or in its cifar-10-batches-bin/ "
           "subdirectory.";
  if (source == "cifar100")
    return "Expected train.bin and test.bin (the CIFAR-100 'binary version' archive), either directly "
           "in the dataset directory or in its cifar-100-binary/ subdirectory.";
  return "Expected a directory written by save_dataset.";
}

fs::path resolve_root(const RunConfig& cfg, const std::string& sub) {
  fs::path root = cfg.get<std::string>("data.root");
  if (root.empty()) root = default_data_root();
  if (root.empty())
    throw ConfigError("no dataset directory: pass --data-root or set CDS_DATA_DIR. " +
                      cifar_layout(cfg.get<std::string>("data.source")));
  // Accept either the directory holding the .bin files or its parent.
  if (!sub.empty() && fs::exists(root / sub)) return root / sub;
  return root;
}

DatasetHandle limit(const DatasetHandle& h, Index count, std::uint64_t seed) {
  if (count <= 0 || count >= h.size()) return h;
  return subset(h, count, seed);
}

}  // namespace

Splits load_splits(const RunConfig& cfg) {
  const std::string source = cfg.get<std::string>("data.source");
  const auto seed = cfg.get<std::uint64_t>("seed");
  const Encoding enc = cfg.encoding();
  Splits s;
  if (source == "synth") {
    SynthOptions o;
    o.classes = cfg.get<int>("data.synth.classes");
    const Index test_pc = cfg.get<Index>("data.test_per_class");
    o.per_class = cfg.get<Index>("data.synth.per_class") + test_pc;
    o.size = cfg.get<Index>("data.synth.size");
    o.channels = cfg.get<Index>("data.synth.channels");
    o.noise = cfg.get<double>("data.synth.noise");
    o.logmag = cfg.get<double>("data.synth.logmag");
    Rng rng(seed, stream_id("synth"));
    SynthDataset ds = synth_complex_dataset(rng, o);
    auto [rest, test] = split_per_class(ds.handle, test_pc);
    auto [train, val] = split_per_class(rest, cfg.get<Index>("data.val_per_class"));
    s = {train, val, test};
  } else if (source == "cifar10" || source == "cifar100") {
    const bool ten = source == "cifar10";
    const fs::path dir = resolve_root(cfg, ten ? "cifar-10-batches-bin" : "cifar-100-binary");
    if (ten && !cifar10_available(dir))
      throw ConfigError("CIFAR-10 binaries not found in '" + dir.string() + "'. " + cifar_layout(source) +
                        " Set CDS_DATA_DIR or --data-root.");
    if (!ten && (!fs::exists(dir / "train.bin") || !fs::exists(dir / "test.bin")))
      throw ConfigError("CIFAR-100 binaries not found in '" + dir.string() + "'. " + cifar_layout(source) +
                        " Set CDS_DATA_DIR or --data-root.");
    CifarSplits c = ten ? load_cifar10_bin(dir, seed, enc) : load_cifar100_bin(dir, seed, enc);
    s = {c.train, c.val, c.test};
  } else if (source == "dir") {
    const fs::path dir = resolve_root(cfg, "");
    DatasetHandle all = load_dataset(dir);
    all.seed = seed;
    auto [train, val] = split_per_class(all, cfg.get<Index>("data.val_per_class"));
    s = {train, val, {all.store, {}, seed, all.encoding, "test"}};
  } else {
    throw ConfigError("unknown data.source '" + source + "' (synth | cifar10 | cifar100 | dir)");
  }
  s.train = limit(s.train, cfg.get<Index>("data.subset"), seed);
  s.val = limit(s.val, cfg.get<Index>("data.val_subset"), seed + 1);
  return s;
}

}  // namespace cds
