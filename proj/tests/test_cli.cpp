#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = GAMVAR_FIXTURES;
const std::string kCli = GAMVAR_CLI;

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run(const std::string& args) {
  const auto err_path = fs::temp_directory_path() / ("gamvar_cli_err_" + std::to_string(::getpid()));
  const std::string cmd = kCli + " " + args + " 2>" + err_path.string();
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t got = 0;
  while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(err_path);
  std::stringstream ss;
  ss << in.rdbuf();
  r.err = ss.str();
  fs::remove(err_path);
  return r;
}

std::string fx(const std::string& name) { return (kFixtures / name).string(); }

nlohmann::json parsed(const Run& r) { return nlohmann::json::parse(r.out); }

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run("--help").code == 0);
  CHECK(run("").code == 2);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("probs").code == 2);
  CHECK(run("probs -c " + fx("missing.toml")).code == 2);
  CHECK(run("assign -c " + fx("two_arm.toml")).code == 2);
}

TEST_CASE("probs") {
  const auto r = run("probs -c " + fx("two_arm.toml"));
  REQUIRE(r.code == 0);
  const auto j = parsed(r);
  CHECK(j["support_size"] == "6");
  CHECK(j["first_order"].size() == 8);
  CHECK(j["first_order"][0]["exact"] == "1/2");
  CHECK(j["second_order"]["total_pairs"] == 6 * 4);
  CHECK(j["all_pairs_positive"] == true);
  const auto sampled = run("probs --max-pairs 2 -c " + fx("stratified.toml"));
  CHECK(sampled.code == 2);
  CHECK(sampled.err.find("seed") != std::string::npos);
  const auto with_seed = run("probs --max-pairs 2 --seed 4 -c " + fx("stratified.toml"));
  CHECK(with_seed.code == 0);
  CHECK(parsed(with_seed)["second_order"]["complete"] == false);
}

TEST_CASE("assign is reproducible") {
  const auto a = run("assign --seed 11 -c " + fx("stratified.toml"));
  const auto b = run("assign --seed 11 -c " + fx("stratified.toml"));
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  const auto j = parsed(a);
  CHECK(j["partition"].size() == 9);
  const auto out = fs::temp_directory_path() / ("gamvar_cli_assign_" + std::to_string(::getpid()) + ".csv");
  CHECK(run("assign --seed 11 -o " + out.string() + " -c " + fx("stratified.toml")).code == 0);
  std::ifstream in(out);
  std::string header;
  std::getline(in, header);
  CHECK(header == "unit,treatment");
  fs::remove(out);
}

TEST_CASE("estimate and analyze") {
  const auto e = run("estimate -c " + fx("two_arm.toml") + " --observed " + fx("two_arm_observed.csv"));
  REQUIRE(e.code == 0);
  CHECK(parsed(e)["estimate"] == 2.0);
  const auto a = run("analyze -c " + fx("two_arm.toml") + " --observed " + fx("two_arm_observed.csv"));
  REQUIRE(a.code == 0);
  const auto j = parsed(a);
  CHECK(j["v_q_hat"] == 5.0);
  CHECK(j["sap_ok"] == true);
  CHECK(j["ga_ok"] == false);
  CHECK(run("analyze -c " + fx("two_arm.toml") + " --observed " + fx("two_arm_observed.csv") +
            " --partition " + fx("splitplot_partition.csv"))
            .code == 2);
}

TEST_CASE("analyze refuses without SAP") {
  const auto args = "-c " + fx("splitplot.toml") + " --observed " + fx("splitplot_observed.csv");
  CHECK(run("analyze " + args).code == 0);
  const auto r = run("analyze " + args + " --q strict");
  CHECK(r.code == 3);
  const auto j = parsed(r);
  CHECK(j["refused"] == true);
  CHECK(j["sap_witness"]["unit"] == "1");
  CHECK(j["sap_witness"]["other_unit"] == "2");
  CHECK(j["sap_witness"]["treatment"] == "Ax");
  CHECK(j["sap_witness"]["other_treatment"] == "Ax");
  CHECK(run("analyze -c " + fx("unicluster.toml") + " --observed " + fx("two_arm_observed.csv")).code == 2);
}

TEST_CASE("variance") {
  const auto r = run("variance -c " + fx("additive.toml"));
  REQUIRE(r.code == 0);
  const auto j = parsed(r);
  CHECK(j["variance"].get<double>() == doctest::Approx(5.0 / 3.0));
  CHECK(j["bias"].get<double>() == doctest::Approx(0.0));
  const auto s = parsed(run("variance -c " + fx("stratified.toml")));
  CHECK(s["variance"].get<double>() == doctest::Approx(0.76003086419753074).epsilon(1e-12));
  CHECK(s["stratified_closed_form"].get<double>() == doctest::Approx(0.76003086419753074).epsilon(1e-12));
  const auto sp = parsed(run("variance -c " + fx("splitplot.toml")));
  CHECK(sp["variance"].get<double>() == doctest::Approx(0.43294270833333337).epsilon(1e-12));
}

TEST_CASE("check") {
  const auto r = run("check -c " + fx("splitplot.toml") + " --q strict");
  REQUIRE(r.code == 0);
  const auto j = parsed(r);
  CHECK(j["q_validation"]["valid"] == true);
  CHECK(j["sap_sufficient"] == false);
  CHECK(j["minimax_q"] == "wholeplot");
  const auto u = parsed(run("check -c " + fx("unicluster.toml")));
  CHECK(u["minimax_q"].is_null());
}

TEST_CASE("oracle") {
  const auto r = run("oracle --battery cr --seed 3");
  REQUIRE(r.code == 0);
  CHECK(parsed(r)["passed"] == true);
  CHECK(run("oracle --battery cr").code == 2);
  CHECK(run("oracle --battery nope --seed 1").code == 2);
  const auto c = run("oracle -c " + fx("custom.toml"));
  CHECK(c.code == 0);
  CHECK(parsed(c)["passed"] == true);
}

TEST_CASE("simulate output is byte-identical") {
  const auto dir = fs::temp_directory_path() / ("gamvar_cli_sim_" + std::to_string(::getpid()));
  const auto a = run("simulate --models I,IV --reps 10 --seed 8 --threads 1 --out " + (dir / "a").string());
  const auto b = run("simulate --models I,IV --reps 10 --seed 8 --threads 3 --out " + (dir / "b").string());
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  CHECK(slurp(dir / "a" / "study.json") == slurp(dir / "b" / "study.json"));
  CHECK(slurp(dir / "a" / "boxplot.csv") == slurp(dir / "b" / "boxplot.csv"));
  CHECK_FALSE(slurp(dir / "a" / "boxplot.csv").empty());
  CHECK(run("simulate --models I --reps 3").code == 2);
  CHECK(run("simulate --models IX --reps 3 --seed 1").code == 2);
  fs::remove_all(dir);
}

TEST_CASE("factorial") {
  const auto r = run("factorial --levels 2,2 --effect 1,0");
  REQUIRE(r.code == 0);
  const auto j = parsed(r);
  CHECK(j["treatments"].size() == 4);
  CHECK(j["g"][0].get<double>() == doctest::Approx(-0.5 / std::sqrt(2.0)));
  CHECK(run("factorial --levels 2,2 --effect 0,0").code == 2);
  CHECK(parsed(run("factorial --levels 3,2 --effect 1,1 --basis"))["basis"].size() == 2);
}

TEST_CASE("config errors") {
  const auto s = run("probs -c " + fx("bad_syntax.toml"));
  CHECK(s.code == 2);
  CHECK(s.err.find("line 4 column 11") != std::string::npos);
  const auto f = run("probs -c " + fx("bad_field.toml"));
  CHECK(f.code == 2);
  CHECK(f.err.find("'7'") != std::string::npos);
}
