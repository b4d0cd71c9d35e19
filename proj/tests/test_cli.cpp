#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "clora/cli.hpp"
#include "clora/data.hpp"
#include "test_support.hpp"

namespace clora::cli {
namespace {

namespace fs = std::filesystem;
using clora::testing::scratch_dir;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small model flags shared by the training-style commands.
std::vector<std::string> small_model(std::vector<std::string> args) {
  for (const char* a : {"--lookback", "24", "--horizon", "8", "--embed-dim", "16", "--adapt-dim", "4", "--rank",
                        "2", "--layers", "1", "--epochs", "2", "--batch", "32"})
    args.emplace_back(a);
  return args;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = scratch_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
    data = (dir / "data.csv").string();
    const CliRun r = run({"synth", "--out", data, "--channels", "4", "--length", "600", "--seed", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  fs::path dir;
  std::string data;
};

TEST(CliBasics, ParamCountPrintsAdapterExtras) {
  const CliRun r = run({"param-count", "--channels", "321", "--rank", "4", "--embed-dim", "128", "--adapt-dim", "16"});
  EXPECT_EQ(r.code, kOk);
  EXPECT_NE(r.out.find("adapter_extra 164416"), std::string::npos) << r.out;
}

TEST(CliBasics, UsageErrorsExitOne) {
  for (const auto& args : std::vector<std::vector<std::string>>{
           {}, {"bogus"}, {"param-count", "--nope"}, {"train", "--mixing", "sideways"}, {"train"}}) {
    const CliRun r = run(args);
    EXPECT_EQ(r.code, kUsage);
    EXPECT_FALSE(r.err.empty());
    EXPECT_TRUE(r.out.empty());
  }
}

TEST(CliBasics, HelpExitsZero) { EXPECT_EQ(run({"--help"}).code, kOk); }

TEST(CliBasics, InvalidModelValueIsUsageError) {
  EXPECT_EQ(run({"param-count", "--rank", "0"}).code, kUsage);
}

TEST_F(CliTest, TrainEvalIsBitwiseReproducible) {
  std::string first_metrics, first_eval, first_ckpt;
  for (int round = 0; round < 2; ++round) {
    const fs::path out = dir / ("run" + std::to_string(round));
    const CliRun t = run(small_model({"train", "--data", data, "--out", out.string(), "--mixing", "mlp", "--seed", "5"}));
    ASSERT_EQ(t.code, kOk) << t.err;
    EXPECT_NE(t.out.find("epoch 1 "), std::string::npos);
    const CliRun e = run({"eval", "--data", data, "--checkpoint", (out / "checkpoint.json").string(), "--out",
                       (out / "eval").string()});
    ASSERT_EQ(e.code, kOk) << e.err;
    for (const char* f : {"manifest.json", "checkpoint.json", "metrics.json", "record.jsonl"})
      EXPECT_TRUE(fs::exists(out / f)) << f;
    if (round == 0) {
      first_metrics = slurp(out / "metrics.json");
      first_eval = slurp(out / "eval" / "metrics.json");
      first_ckpt = slurp(out / "checkpoint.json");
    } else {
      EXPECT_EQ(slurp(out / "metrics.json"), first_metrics);
      EXPECT_EQ(slurp(out / "eval" / "metrics.json"), first_eval);
      EXPECT_EQ(slurp(out / "checkpoint.json"), first_ckpt);
    }
  }
  // train's test metrics and eval on the test split agree.
  EXPECT_EQ(first_metrics, first_eval);
}

TEST_F(CliTest, ManifestRecordsResolvedRun) {
  const fs::path out = dir / "run";
  ASSERT_EQ(run(small_model({"train", "--data", data, "--out", out.string()})).code, kOk);
  const auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(m["version"], kToolVersion);
  EXPECT_EQ(m["model"]["lookback"], 24);
  EXPECT_EQ(m["model"]["channels"], 4);
  EXPECT_EQ(m["training"]["learning_rate"], 1e-3);
  EXPECT_EQ(m["data"]["fingerprint"].get<std::string>().size(), 16u);
  EXPECT_TRUE(m["artifacts"].contains("checkpoint"));
}

TEST_F(CliTest, InputsAreNotMutated) {
  const std::string before = slurp(data);
  ASSERT_EQ(run(small_model({"train", "--data", data, "--out", (dir / "r").string()})).code, kOk);
  const std::string ckpt = slurp(dir / "r" / "checkpoint.json");
  ASSERT_EQ(run({"eval", "--data", data, "--checkpoint", (dir / "r" / "checkpoint.json").string()}).code, kOk);
  EXPECT_EQ(slurp(data), before);
  EXPECT_EQ(slurp(dir / "r" / "checkpoint.json"), ckpt);
}

TEST_F(CliTest, EvalChannelMismatchExitsTwo) {
  ASSERT_EQ(run(small_model({"train", "--data", data, "--out", (dir / "r").string()})).code, kOk);
  const std::string other = (dir / "other.csv").string();
  ASSERT_EQ(run({"synth", "--out", other, "--channels", "6", "--length", "600"}).code, kOk);
  const CliRun r = run({"eval", "--data", other, "--checkpoint", (dir / "r" / "checkpoint.json").string()});
  EXPECT_EQ(r.code, kDataError);
  EXPECT_NE(r.err.find("4 channels"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("6 channels"), std::string::npos) << r.err;
}

TEST_F(CliTest, DataErrorsExitTwo) {
  EXPECT_EQ(run(small_model({"train", "--data", (dir / "missing.csv").string(), "--out", (dir / "r").string()})).code,
            kDataError);
  std::ofstream(dir / "bad.csv") << "t,a,b\n1,2,3\n2,4\n";
  EXPECT_EQ(run(small_model({"train", "--data", (dir / "bad.csv").string(), "--out", (dir / "r").string()})).code,
            kDataError);
}

TEST_F(CliTest, DivergenceExitsThree) {
  const CliRun r = run(small_model({"train", "--data", data, "--out", (dir / "r").string(), "--lr", "1e300"}));
  EXPECT_EQ(r.code, kDivergence);
  EXPECT_NE(r.err.find("diverged"), std::string::npos) << r.err;
}

TEST_F(CliTest, ConfigFileSuppliesDefaultsAndFlagsOverride) {
  std::ofstream(dir / "run.cfg") << "lookback=12\nhorizon=4\nembed-dim=8\nadapt-dim=2\nrank=1\nepochs=1\nmixing=attention\n";
  const fs::path out = dir / "r";
  const CliRun r = run({"train", "--config", (dir / "run.cfg").string(), "--data", data, "--out", out.string(),
                     "--horizon", "6"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(m["model"]["lookback"], 12);
  EXPECT_EQ(m["model"]["horizon"], 6);
  EXPECT_EQ(m["model"]["mixing"], "attention");
}

TEST_F(CliTest, FinetuneShipsAdaptersThatEvalCanAttach) {
  const fs::path pre = dir / "pre";
  ASSERT_EQ(run(small_model({"train", "--data", data, "--out", pre.string(), "--mixing", "attention"})).code, kOk);
  const std::string target = (dir / "target.csv").string();
  ASSERT_EQ(run({"synth", "--out", target, "--channels", "5", "--length", "600", "--seed", "1",
                 "--phase-shift-seed", "9"})
                .code,
            kOk);
  const fs::path ft = dir / "ft";
  const CliRun f = run({"finetune", "--data", target, "--checkpoint", (pre / "checkpoint.json").string(), "--out",
                     ft.string(), "--epochs", "2"});
  ASSERT_EQ(f.code, kOk) << f.err;
  for (const char* name : {"adapters.json", "checkpoint.json", "metrics.json", "record.jsonl", "manifest.json"})
    EXPECT_TRUE(fs::exists(ft / name)) << name;
  const auto metrics = nlohmann::json::parse(slurp(ft / "metrics.json"));
  const CliRun e = run({"eval", "--data", target, "--checkpoint", (pre / "checkpoint.json").string(), "--adapters",
                     (ft / "adapters.json").string()});
  ASSERT_EQ(e.code, kOk) << e.err;
  EXPECT_EQ(nlohmann::json::parse(e.out)["mse"], metrics["finetuned"]["mse"]);
}

TEST_F(CliTest, ExperimentCommandsWriteReports) {
  const fs::path sw = dir / "sweep";
  const CliRun s = run(small_model({"sweep", "--data", data, "--axis", "rank", "--values", "1,2", "--out", sw.string()}));
  ASSERT_EQ(s.code, kOk) << s.err;
  EXPECT_EQ(slurp(sw / "sweep.csv").substr(0, 35), "value,train_mse,test_mse,mae,params");
  EXPECT_EQ(run(small_model({"sweep", "--data", data, "--axis", "rank", "--values", "2,1", "--out", sw.string()})).code,
            kUsage);

  ASSERT_EQ(run(small_model({"train", "--data", data, "--out", (dir / "r").string()})).code, kOk);
  const CliRun sh = run({"shuffle-test", "--data", data, "--checkpoint", (dir / "r" / "checkpoint.json").string(),
                      "--permutations", "3", "--out", (dir / "sh").string()});
  ASSERT_EQ(sh.code, kOk) << sh.err;
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "sh" / "shuffle.json"))["permutations"].size(), 3u);

  const CliRun g = run(small_model({"capacity-gap", "--data", data, "--out", (dir / "gap").string()}));
  ASSERT_EQ(g.code, kOk) << g.err;
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "gap" / "capacity.json"))["rows"].size(), 2u);
}

}  // namespace
}  // namespace clora::cli
