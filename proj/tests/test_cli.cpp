#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "support.hpp"
#include "transition_att/cli.hpp"

using namespace transition_att;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("transition_att_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    mr_ = path("mr.csv");
    write_panel_csv(mr_example(), mr_);
    unsetenv("TRANSITION_ATT_SEED");
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return cli::run(args, out_, err_);
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  }

  fs::path dir_;
  std::string mr_;
  std::ostringstream out_, err_;
};

const std::vector<std::string> kQuick = {"--n-short", "30", "--n-long", "3"};

std::vector<std::string> operator+(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_F(Cli, MrSummaries) {
  ASSERT_EQ(run({"att", "--input", mr_, "--lag", "1", "--types", "1", "--out", path("att")}), 0) << err_.str();
  EXPECT_NE(out_.str().find("0.0417"), std::string::npos) << out_.str();
  ASSERT_EQ(run({"did", "--input", mr_, "--out", path("did")}), 0) << err_.str();
  EXPECT_NE(out_.str().find("-0.1250"), std::string::npos) << out_.str();
  const auto j = Json::parse(slurp(path("did/did.json")));
  EXPECT_EQ(j["periods"][0]["effect"][0].get<double>(), -0.125);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run({"att", "--input", mr_, "--lag", "one"}), 64);
  EXPECT_EQ(run({"att", "--bogus"}), 64);
  EXPECT_EQ(run({"frobnicate"}), 64);
  EXPECT_EQ(run({}), 64);
  EXPECT_EQ(run({"att", "--input", path("missing.csv"), "--out", path("o")}), 74);
  std::ofstream(path("bad.csv")) << "unit,time,outcome,treated\n1,1,a,0\n1,2,b,1\n2,1,a,0\n";
  EXPECT_EQ(run({"validate", "--input", path("bad.csv"), "--out", path("o")}), 2);
  EXPECT_NE(err_.str().find("UnbalancedPanel"), std::string::npos);
  std::ofstream(path("gap.csv")) << "unit,time,outcome,treated\n1,1,a,0\n1,2,a,1\n2,1,b,0\n2,2,b,0\n";
  EXPECT_EQ(run({"att", "--input", path("gap.csv"), "--out", path("o")}), 3);
  EXPECT_NE(err_.str().find("EmptyControlCell"), std::string::npos);
  EXPECT_EQ(run({"att", "--input", path("gap.csv"), "--empty-cell", "sometimes", "--out", path("o")}), 64);
}

TEST_F(Cli, ConfigFilePrecedenceAndUnknownKeys) {
  std::ofstream(path("cfg.json")) << R"({"lag": 2, "types": 1, "seed": 11})";
  ASSERT_EQ(run({"att", "--config", path("cfg.json"), "--input", mr_, "--lag", "1", "--out", path("o")}), 0)
      << err_.str();
  const auto used = Json::parse(slurp(path("o/config.json")));
  EXPECT_EQ(used["lag"], 1);
  EXPECT_EQ(used["seed"], 11);

  std::ofstream(path("typo.json")) << R"({"lags": 2})";
  EXPECT_EQ(run({"att", "--config", path("typo.json"), "--input", mr_}), 64);
  std::ofstream(path("wrong.json")) << R"({"lag": "two"})";
  EXPECT_EQ(run({"att", "--config", path("wrong.json"), "--input", mr_}), 64);
}

TEST_F(Cli, EnvironmentSeedFallback) {
  setenv("TRANSITION_ATT_SEED", "42", 1);
  ASSERT_EQ(run({"att", "--input", mr_, "--out", path("a")}), 0);
  EXPECT_EQ(Json::parse(slurp(path("a/config.json")))["seed"], 42);
  ASSERT_EQ(run({"att", "--input", mr_, "--seed", "5", "--out", path("b")}), 0);
  EXPECT_EQ(Json::parse(slurp(path("b/config.json")))["seed"], 5);
  setenv("TRANSITION_ATT_SEED", "minus one", 1);
  EXPECT_EQ(run({"att", "--input", mr_, "--out", path("c")}), 64);
  unsetenv("TRANSITION_ATT_SEED");
}

TEST_F(Cli, DeterministicBytesAndManifest) {
  ASSERT_EQ(run({"simulate", "--spec", "two-type-effects", "--n", "600", "--seed", "3", "--out", path("p.csv")}), 0);
  const auto base = std::vector<std::string>{"mixture", "--input", path("p.csv"), "--types", "2", "--seed", "9"} + kQuick;
  ASSERT_EQ(run(base + std::vector<std::string>{"--out", path("a")}), 0) << err_.str();
  ASSERT_EQ(run(base + std::vector<std::string>{"--out", path("b"), "--workers", "4"}), 0);
  // workers only appear in config.json and hence the manifest
  EXPECT_EQ(slurp(path("a/mixture.json")), slurp(path("b/mixture.json")));
  ASSERT_EQ(run(base + std::vector<std::string>{"--out", path("c")}), 0);
  for (const auto* name : {"mixture.json", "config.json", "manifest.json"}) {
    EXPECT_EQ(slurp(path("a/") + name), slurp(path("c/") + name)) << name;
  }
  const auto manifest = Json::parse(slurp(path("a/manifest.json")));
  EXPECT_EQ(manifest["subcommand"], "mixture");
  for (const auto& f : manifest["files"]) {
    const auto content = slurp(path("a/") + f["file"].get<std::string>());
    EXPECT_EQ(f["sha256"], sha256_hex(content));
    EXPECT_EQ(f["bytes"], content.size());
    EXPECT_EQ(content.back(), '\n');
  }
}

TEST_F(Cli, SimulateThenEstimate) {
  const std::string spec = path("null.json");
  std::ofstream(spec) << spec_to_json(null_spec()).dump(2);
  ASSERT_EQ(run({"simulate", "--spec", spec, "--n", "1000", "--seed", "7", "--out", path("panel.csv")}), 0)
      << err_.str();
  ASSERT_EQ(run({"att", "--input", path("panel.csv"), "--out", path("o")}), 0) << err_.str();
  const auto j = Json::parse(slurp(path("o/att.json")));
  for (const auto& p : j["periods"]) {
    for (const auto& e : p["effect"]) {
      EXPECT_TRUE(std::isfinite(e.get<double>()));
      EXPECT_LT(std::abs(e.get<double>()), 0.1);
    }
  }
  std::ofstream(path("junk.json")) << R"({"params": {}, "colour": 1})";
  EXPECT_EQ(run({"simulate", "--spec", path("junk.json"), "--out", path("x.csv")}), 2);
  EXPECT_EQ(run({"simulate", "--spec", "no-such-spec", "--out", path("x.csv")}), 64);
}

TEST_F(Cli, HelpListsEveryKey) {
  for (const auto& [sub, keys] : cli::detail::subcommand_keys()) {
    ASSERT_EQ(run({sub, "--help"}), 0);
    for (const auto& k : keys) EXPECT_NE(out_.str().find("--" + k), std::string::npos) << sub << " " << k;
  }
}

TEST_F(Cli, CsvColumnOrder) {
  ASSERT_EQ(run({"att", "--input", mr_, "--out", path("att")}), 0);
  auto header = [&](const std::string& p) { return slurp(p).substr(0, slurp(p).find('\n')); };
  EXPECT_EQ(header(path("att/att.csv")),
            "history,weight,effect_employed,effect_unemployed,t,treated_share,treated_count,control_count");
  ASSERT_EQ(run({"simulate", "--spec", "staggered", "--n", "3000", "--out", path("s.csv")}), 0);
  ASSERT_EQ(run({"staggered", "--input", path("s.csv"), "--mode", "both", "--out", path("st")}), 0) << err_.str();
  EXPECT_EQ(header(path("st/staggered.csv")), "g,t,category,att,n_treated,n_control,mode");
  EXPECT_EQ(header(path("st/staggered.aggregate.csv")), "t,category,att");
  ASSERT_EQ(run({"flows", "--input", mr_, "--out", path("fl")}), 0) << err_.str();
  EXPECT_EQ(header(path("fl/flows.csv")), "type,period,channel,direction,effect");
}

TEST(SpecJson, RoundTrip) {
  for (const auto& spec : {separated_spec(), staggered_spec(10, 2, 0.1, 0.0), mr_example_spec()}) {
    const auto back = spec_from_json(spec_to_json(spec));
    EXPECT_EQ(back.params.flatten(), spec.params.flatten());
    EXPECT_EQ(back.cohort_list(), spec.cohort_list());
    EXPECT_EQ(back.n, spec.n);
    EXPECT_EQ(spec_to_json(back).dump(), spec_to_json(spec).dump());
  }
}

TEST(Report, NumberFormatRoundTrips) {
  for (double x : {0.1, 1.0 / 3.0, -0.125, 1e-17, 123456789.0}) EXPECT_EQ(std::stod(format_number(x)), x);
  EXPECT_EQ(format_number(0.5), "0.5");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
