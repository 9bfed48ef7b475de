#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <string>

#include "json.hpp"

namespace {

struct Invocation {
  int code = -1;
  std::string out;
  nlohmann::json json() const { return nlohmann::json::parse(out); }
};

Invocation cli(const std::string& args) {
  const std::string cmd = std::string(PB_CLI) + " " + args + " --quiet 2>/dev/null";
  Invocation r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int st = pclose(p);
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string fx(const std::string& name) { return std::string(PB_FIXTURES) + "/" + name; }

std::string ex1() { return " --model " + fx("example1_mdp_normalized.json") + " --spec " + fx("example1_gamma085.json"); }

// timing fields are the only part of a report allowed to differ between runs
void drop_timing(nlohmann::json& j) {
  if (j.is_object()) {
    j.erase("wall_time_s");
    j.erase("seconds");
  }
  if (j.is_structured())
    for (auto& v : j) drop_timing(v);
}

}  // namespace

TEST(Cli, VerifyCertified) {
  Invocation r = cli("verify" + ex1());
  ASSERT_EQ(r.code, 0) << r.out;
  nlohmann::json j = r.json();
  EXPECT_EQ(j["status"], "Certified");
  EXPECT_EQ(j["gamma"], 0.85);
  EXPECT_TRUE(j["validation"]["passed"]);
}

TEST(Cli, VerifyWitnessExitsTwo) {
  Invocation r = cli("verify --gamma 0.8" + ex1());
  EXPECT_EQ(r.code, 2);
  nlohmann::json j = r.json();
  EXPECT_EQ(j["status"], "Unknown");
  EXPECT_FALSE(j["falsifier"]["witness"].is_null());
}

TEST(Cli, VerifyUnknownExitsOne) {
  // the unlocalised conditions admit no strict margin, and 0.9 is not refuted either
  Invocation r = cli("verify --gamma 0.9 --no-localize-simplex" + ex1());
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_EQ(r.json()["status"], "Unknown");
  EXPECT_TRUE(r.json()["falsifier"]["witness"].is_null());
}

TEST(Cli, Falsify) {
  const std::string m = " --model " + fx("example1_mdp.json") + " --spec " + fx("example1_gamma085.json");
  Invocation w = cli("falsify --gamma 0.30 --depth 12" + m);
  EXPECT_EQ(w.code, 2);
  EXPECT_NEAR(w.json()["lower_bound"].get<double>(), 0.4015, 1e-12);
  EXPECT_FALSE(w.json()["witness"].is_null());
  Invocation ok = cli("falsify --depth 12" + m);
  EXPECT_EQ(ok.code, 0);
  EXPECT_TRUE(ok.json()["witness"].is_null());
}

TEST(Cli, Simulate) {
  Invocation r = cli("simulate --model " + fx("example1_mdp.json") + R"( --labels '["sigma1","sigma1"]' --b0 '[1,0,0]')");
  ASSERT_EQ(r.code, 0);
  nlohmann::json j = r.json();
  ASSERT_EQ(j["beliefs"].size(), 3u);
  EXPECT_NEAR(j["beliefs"][2][2].get<double>(), 0.53, 1e-12);

  Invocation p = cli("simulate --model " + fx("example2_pomdp.json") + " --spec " + fx("example2_gamma095.json") +
              R"( --labels '["sigma2/z1"]')");
  ASSERT_EQ(p.code, 0);
  EXPECT_EQ(p.json()["secret_mass"].size(), 2u);
}

TEST(Cli, Bound) {
  Invocation r = cli("bound --tol 0.02 --model " + fx("example1_mdp.json") + " --spec " + fx("example1_gamma085.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  nlohmann::json j = r.json();
  EXPECT_GE(j["gamma_star"].get<double>(), j["falsifier_lower_bound"].get<double>());
  EXPECT_LE(j["gamma_star"].get<double>(), 0.45);
}

TEST(Cli, DumpSdp) {
  const std::string path = ::testing::TempDir() + "/pb_dump.json";
  Invocation r = cli("verify --dump-sdp " + path + ex1());
  ASSERT_EQ(r.code, 0);
  std::ifstream in(path);
  nlohmann::json d = nlohmann::json::parse(in);
  ASSERT_TRUE(d.is_array());
  ASSERT_FALSE(d.empty());
  EXPECT_EQ(d[0]["kappa"], 1.0);
  EXPECT_TRUE(d[0]["program"].is_object());
}

TEST(Cli, InputErrors) {
  EXPECT_EQ(cli("verify --model /nonexistent.json --spec /nonexistent.json").code, 3);
  EXPECT_EQ(cli("verify --model " + fx("example1_mdp.json")).code, 3);
  EXPECT_EQ(cli("frobnicate").code, 3);
  EXPECT_EQ(cli("verify --horizon soon" + ex1()).code, 3);
  EXPECT_EQ(cli("verify --gamma 1.5" + ex1()).code, 3);
  EXPECT_EQ(cli("simulate --model " + fx("example1_mdp.json") + R"( --labels '["jump"]')").code, 3);
  EXPECT_EQ(cli("simulate --model " + fx("example1_mdp.json") + R"( --labels '["sigma1"]' --b0 '[1,0]')").code, 3);
  EXPECT_EQ(cli("sweep --model " + fx("example1_mdp.json") + " --spec " + fx("example1_gamma085.json")).code, 3);
  Invocation r = cli("verify --degree 3 --model " + fx("example2_pomdp.json") + " --spec " + fx("example2_gamma095.json"));
  EXPECT_EQ(r.code, 3);
  EXPECT_TRUE(r.json().contains("error"));
}

TEST(Cli, ReproducibleReports) {
  const std::string args = "verify --seed 5 --jobs 1" + ex1();
  nlohmann::json a = cli(args).json();
  nlohmann::json b = cli(args).json();
  drop_timing(a);
  drop_timing(b);
  EXPECT_EQ(a.dump(), b.dump());
}
