#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cds/cli.hpp"
#include "cds/config.hpp"
#include "cds/encodings.hpp"
#include "cds/serialize.hpp"

using namespace cds;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args, const std::vector<std::string>& extra = {}) {
  args.insert(args.end(), extra.begin(), extra.end());
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

// tiny synthetic problem: 10 classes, 8x8, 20 train + 5 val + 5 test per class
std::vector<std::string> tiny_data() {
  return {"--data",  "synth", "--set", "data.synth.per_class=25", "--set", "data.synth.size=8",
          "--set",   "data.val_per_class=5", "--set", "data.test_per_class=5"};
}

std::vector<std::string> operator+(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST(Dispatch, ExitCodes) {
  EXPECT_EQ(cli({"--help"}).code, 0);
  EXPECT_NE(cli({"--help"}).out.find("wfmcheck"), std::string::npos);
  EXPECT_EQ(cli({"train", "--help"}).code, 0);
  EXPECT_EQ(cli({}).code, 1);
  auto bad = cli({"train", "--no-such-flag"});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("--no-such-flag"), std::string::npos);
  EXPECT_NE(bad.err.find("--model"), std::string::npos);
  EXPECT_EQ(cli({"frobnicate"}).code, 1);
  EXPECT_EQ(cli({"eval", "--out", "x"}).code, 1);
}

TEST(Dispatch, ValidationErrorsExitOne) {
  TempDir d("cds_cli_validation");
  EXPECT_EQ(cli({"train", "--model", "resnet", "--out", d / "a"}, tiny_data()).code, 1);
  EXPECT_EQ(cli({"train", "--steps", "many", "--out", d / "b"}).code, 1);
  EXPECT_EQ(cli({"wfmcheck", "--set", "nope=1", "--out", d / "c"}).code, 1);
  auto missing = cli({"eval", "--checkpoint", d / "absent.cds", "--out", d / "d"});
  EXPECT_EQ(missing.code, 1);
  write_file(d.path / "junk.cds", "junk");
  EXPECT_EQ(cli({"eval", "--checkpoint", d / "junk.cds", "--out", d / "e"}).code, 1);
}

TEST(Config, EmptyFilePlusFlagsFlagsWin) {
  TempDir d("cds_cli_empty");
  write_file(d.path / "empty.json", "");
  auto r = cli({"wfmcheck", "--config", d / "empty.json", "--trials", "3", "--seed", "7", "--out", d / "o"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto echoed = read_json(d.path / "o" / "config.json");
  EXPECT_EQ(echoed["wfmcheck.trials"], 3);
  EXPECT_EQ(echoed["seed"], 7);
  EXPECT_EQ(echoed["command"], "wfmcheck");
}

TEST(Config, FileWithoutFlagsFileWins) {
  TempDir d("cds_cli_file");
  write_file(d.path / "c.json", R"({"wfmcheck.trials": 4, "seed": 11, "out": ")" + d / "o" + R"("})");
  ASSERT_EQ(cli({"wfmcheck", "--config", d / "c.json"}).code, 0);
  auto echoed = read_json(d.path / "o" / "config.json");
  EXPECT_EQ(echoed["wfmcheck.trials"], 4);
  EXPECT_EQ(echoed["seed"], 11);
  EXPECT_EQ(read_json(d.path / "o" / "wfmcheck.json")["trials"], 4);

  ASSERT_EQ(cli({"wfmcheck", "--config", d / "c.json", "--trials", "2", "--out", d / "p"}).code, 0);
  EXPECT_EQ(read_json(d.path / "p" / "config.json")["wfmcheck.trials"], 2);
  EXPECT_EQ(read_json(d.path / "p" / "config.json")["seed"], 11);
}

TEST(Config, TypeConflicts) {
  TempDir d("cds_cli_types");
  write_file(d.path / "c.json", R"({"train.steps": "many"})");
  EXPECT_THROW(RunConfig::load(d.path / "c.json"), ConfigTypeError);
  auto r = cli({"train", "--config", d / "c.json", "--out", d / "o"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("train.steps"), std::string::npos);
  RunConfig cfg;
  EXPECT_THROW(cfg.set("optim.lr", "fast"), ConfigTypeError);
  EXPECT_THROW(cfg.set_text("model.proto_batchnorm", "maybe"), ConfigTypeError);
  cfg.set_text("optim.lr", "0.5");
  EXPECT_EQ(cfg.get<double>("optim.lr"), 0.5);
  cfg.set("optim.lr", 1);
  EXPECT_EQ(cfg.get<double>("optim.lr"), 1.0);
}

TEST(Config, UnknownKeysListed) {
  TempDir d("cds_cli_unknown");
  write_file(d.path / "c.json", R"({"bogus.key": 1, "train.stepz": 3, "seed": 2})");
  try {
    RunConfig::load(d.path / "c.json");
    FAIL() << "no error";
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("bogus.key"), std::string::npos);
    EXPECT_NE(what.find("train.stepz"), std::string::npos);
  }
  write_file(d.path / "list.json", "[1, 2]");
  EXPECT_THROW(RunConfig::load(d.path / "list.json"), ConfigError);
}

TEST(Config, FullProtocolMirrorsPublishedSettings) {
  const auto cfg = RunConfig::load(fs::path(CDS_SOURCE_DIR) / "configs" / "cifar10_type_i_full.json");
  EXPECT_EQ(cfg.get<std::string>("model.builder"), "type_i");
  EXPECT_EQ(cfg.get<std::string>("data.source"), "cifar10");
  EXPECT_EQ(cfg.get<Index>("data.subset"), 0);
  EXPECT_EQ(cfg.encoding(), Encoding::lab_complex);
  const TrainConfig t = cfg.train();
  EXPECT_EQ(t.steps, 50000);
  EXPECT_EQ(t.batch_size, 256);
  EXPECT_EQ(t.validate_every, 1000);
  const OptimizerConfig o = t.optimizer;
  EXPECT_EQ(o.algorithm, Algorithm::adamw);
  EXPECT_EQ(o.lr, 1e-3);
  EXPECT_EQ(o.beta1, 0.99);
  EXPECT_EQ(o.beta2, 0.999);
  EXPECT_EQ(o.weight_decay, 0.1);
  EXPECT_EQ(cfg.get<double>("model.gtrelu_r"), 0.0);
  const ModelConfig m = cfg.model(10, 2, 32);
  EXPECT_EQ(m.widths, (std::vector<Index>{16, 32, 64}));
}

TEST(Commands, TrainEvalRobustnessBiasvar) {
  TempDir d("cds_cli_train");
  auto r = cli({"train", "--model", "type_i", "--steps", "6", "--batch-size", "16", "--validate-every", "3",
                "--seed", "1", "--out", d / "run1"}, tiny_data());
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"checkpoint.cds", "last.cds", "metrics.csv", "config.json", "summary.json"})
    EXPECT_TRUE(fs::exists(d.path / "run1" / f)) << f;
  EXPECT_EQ(slurp(d.path / "run1" / "metrics.csv").substr(0, 23), "step,split,metric,value");
  const auto summary = read_json(d.path / "run1" / "summary.json");
  // 8x8 input pools to 1x1, so the depthwise pool kernel is 64 x 1 x 1
  EXPECT_EQ(summary["parameters"], 34193 - 64 * 16 + 64);

  // the echoed config reruns identically
  ASSERT_EQ(cli({"train", "--config", d / "run1/config.json", "--out", d / "run2"}).code, 0);
  EXPECT_EQ(slurp(d.path / "run1" / "metrics.csv"), slurp(d.path / "run2" / "metrics.csv"));
  EXPECT_EQ(slurp(d.path / "run1" / "checkpoint.cds"), slurp(d.path / "run2" / "checkpoint.cds"));

  auto e = cli({"eval", "--checkpoint", d / "run1/checkpoint.cds", "--seed", "1", "--out", d / "eval"}, tiny_data());
  ASSERT_EQ(e.code, 0) << e.err;
  const auto ej = read_json(d.path / "eval" / "eval.json");
  EXPECT_EQ(ej["count"], 50);
  EXPECT_EQ(ej["accuracy"], summary["test_accuracy"]);

  auto rb = cli({"robustness", "--checkpoint", d / "run1/checkpoint.cds", "--draws", "2", "--phase-ranges",
                 "0,3.14159", "--out", d / "rob"}, tiny_data());
  ASSERT_EQ(rb.code, 0) << rb.err;
  EXPECT_EQ(read_json(d.path / "rob" / "robustness.json")["points"].size(), 2u);

  ASSERT_EQ(cli({"train", "--steps", "3", "--batch-size", "16", "--seed", "2", "--out", d / "run3"}, tiny_data()).code, 0);
  auto bv = cli({"biasvar", "--checkpoint", d / "run1/checkpoint.cds", "--checkpoint", d / "run3/checkpoint.cds",
                 "--out", d / "bv"}, tiny_data());
  ASSERT_EQ(bv.code, 0) << bv.err;
  EXPECT_EQ(read_json(d.path / "bv" / "biasvar.json")["replicas"], 2);
  EXPECT_EQ(cli({"biasvar", "--checkpoint", d / "run1/checkpoint.cds", "--out", d / "bv1"}, tiny_data()).code, 1);

  // checkpoint trained on 8x8 synth cannot score 3-channel rgb data
  auto mismatch = cli({"eval", "--checkpoint", d / "run1/checkpoint.cds", "--set", "data.synth.channels=3",
                       "--out", d / "mm"}, tiny_data());
  EXPECT_EQ(mismatch.code, 1);
}

TEST(Commands, TrainFp64) {
  TempDir d("cds_cli_fp64");
  ASSERT_EQ(cli({"train", "--model", "type_e", "--precision", "fp64", "--steps", "2", "--batch-size", "8", "--out",
                 d / "r"}, tiny_data())
                .code,
            0);
  EXPECT_EQ(checkpoint_precision(d.path / "r" / "checkpoint.cds"), Precision::fp64);
  EXPECT_EQ(cli({"eval", "--checkpoint", d / "r/checkpoint.cds", "--out", d / "e"}, tiny_data()).code, 0);
}

TEST(Commands, GradcheckAllWritesOnePassRowPerCase) {
  TempDir d("cds_cli_gc");
  auto r = cli({"gradcheck", "--all", "--seeds", "1", "--out", d / "gc"});
  ASSERT_EQ(r.code, 0) << r.out << r.err;
  std::istringstream rows(slurp(d.path / "gc" / "gradcheck_summary.csv"));
  std::string line;
  std::getline(rows, line);
  EXPECT_EQ(line, "layer,seeds,max_rel_err,status");
  int count = 0;
  while (std::getline(rows, line)) {
    ++count;
    EXPECT_EQ(line.substr(line.rfind(',') + 1), "pass") << line;
  }
  EXPECT_GE(count, 12);
  EXPECT_TRUE(fs::exists(d.path / "gc" / "gradcheck.csv"));
  EXPECT_EQ(cli({"gradcheck", "--out", d / "none"}).code, 1);
  EXPECT_EQ(cli({"gradcheck", "--layer", "nope", "--out", d / "bad"}).code, 1);
}

TEST(Commands, EncodeWritesTensor) {
  TempDir d("cds_cli_encode");
  RgbImage img = make_rgb(4, 3);
  Rng rng(3);
  for (Index i = 0; i < img.size(); ++i) img.data[i] = static_cast<double>(rng.below(256)) / 255;
  write_ppm(d.path / "img.ppm", img);
  auto r = cli({"encode", "--encoding", "lab", "--in", d / "img.ppm", "--scale-phase", "1.57", "--out",
                d / "enc.cds"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto t = load_tensor<float>(d.path / "enc.cds");
  auto expected = complex_scale_transform(rgb_to_lab_complex(read_ppm(d.path / "img.ppm")), std::polar(1.0, 1.57));
  ASSERT_EQ(t.shape(), (Shape{2, 4, 3}));
  EXPECT_LE(max_abs_diff(t.cast<double>(), expected.tensor), 1e-6);
  EXPECT_EQ(cli({"encode", "--in", d / "missing.ppm", "--out", d / "x.cds"}).code, 1);
}

TEST(Commands, Wfmcheck) {
  TempDir d("cds_cli_wfm");
  auto r = cli({"wfmcheck", "--out", d / "w"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("trials 100"), std::string::npos);
  EXPECT_TRUE(fs::exists(d.path / "w" / "wfmcheck.csv"));
}

TEST(Commands, TableNeedsCifar) {
  TempDir d("cds_cli_table");
  auto r = cli({"table", "--data-root", d / "nothing", "--out", d / "t"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("data_batch_1.bin"), std::string::npos) << r.err;
  EXPECT_EQ(cli({"table", "--models", "type_i,resnet", "--out", d / "t"}, tiny_data()).code, 1);
}

TEST(Commands, TableIsDeterministic) {
  TempDir d("cds_cli_table_synth");
  std::vector<std::string> args{"table", "--models", "type_i,type_e,dcn,real", "--steps", "2", "--batch-size", "8",
                                "--encoding", "native"};
  args = args + tiny_data();
  auto a = cli(args + std::vector<std::string>{"--out", d / "a"});
  ASSERT_EQ(a.code, 0) << a.err;
  auto b = cli(args + std::vector<std::string>{"--out", d / "b"});
  ASSERT_EQ(b.code, 0) << b.err;
  const std::string ta = slurp(d.path / "a" / "table.csv");
  EXPECT_EQ(ta, slurp(d.path / "b" / "table.csv"));
  int rows = 0;
  for (char c : ta) rows += c == '\n';
  EXPECT_EQ(rows, 5);
}
