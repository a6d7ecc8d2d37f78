#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "gamvar/commands.hpp"
#include "gamvar/error.hpp"
#include "gamvar/oracle.hpp"

namespace fs = std::filesystem;
using namespace gamvar;

namespace {

struct Options {
  std::string config;
  std::string q;
  std::string q_file;
  double tol_ga = -1.0;
  std::uint64_t seed = 0;
  std::size_t cap = 0;
  std::size_t max_pairs = 20000;
  std::string observed;
  std::string partition;
  std::string out;
  std::string battery;

  std::vector<std::string> models{"I", "II", "III", "IV", "V", "VI"};
  std::size_t reps = 100;
  std::vector<double> g{1.0, -2.0, 1.0};
  std::vector<std::size_t> sizes{30, 20};
  unsigned threads = 0;
  bool end_to_end = false;
  std::size_t draws = 200;

  std::vector<std::size_t> levels;
  std::vector<int> effect;
  std::vector<double> vectors;
  bool basis = false;
};

std::optional<fs::path> maybe_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

bool given(const CLI::App* sub, const std::string& name) {
  const auto* opt = sub->get_option_no_throw(name);
  return opt != nullptr && opt->count() > 0;
}

RunConfig load(const Options& o, const CLI::App* sub) {
  RunConfig cfg = load_config(o.config);
  if (!o.q_file.empty()) cfg.q_file = fs::path(o.q_file);
  if (o.tol_ga >= 0.0) cfg.ga_tol = o.tol_ga;
  if (given(sub, "--seed")) cfg.seed = o.seed;
  if (given(sub, "--cap")) cfg.support_cap = o.cap;
  return cfg;
}

std::string q_choice(const Options& o, const RunConfig& cfg) {
  return o.q.empty() ? cfg.q_choice : o.q;
}

void add_config(CLI::App* sub, Options& o) {
  sub->add_option("-c,--config,--mech", o.config, "run config (TOML or JSON)")
      ->required()
      ->check(CLI::ExistingFile);
}

void add_q(CLI::App* sub, Options& o) {
  sub->add_option("--q", o.q, "Q choice")
      ->check(CLI::IsMember({"strict", "strat", "wholeplot", "half", "file"}));
  sub->add_option("--q-file", o.q_file, "CSV matrix for --q file")->check(CLI::ExistingFile);
}

int error(const char* kind, const std::string& what, int code) {
  std::cerr << "gamvar: " << kind << ": " << what << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Randomization-based variance estimation for general assignment mechanisms"};
  app.require_subcommand(1);
  Options o;

  auto* probs = app.add_subcommand("probs", "first- and second-order assignment probabilities");
  add_config(probs, o);
  probs->add_option("--max-pairs", o.max_pairs, "sample second-order rows above this count");
  probs->add_option("--seed", o.seed, "seed for sampled second-order rows");

  auto* assign = app.add_subcommand("assign", "draw one assignment");
  add_config(assign, o);
  assign->add_option("--seed", o.seed)->required();
  assign->add_option("-o,--out", o.out, "also write unit,treatment CSV here");

  auto* estimate = app.add_subcommand("estimate", "HT means and contrast estimate");
  add_config(estimate, o);
  estimate->add_option("--observed", o.observed)->required()->check(CLI::ExistingFile);
  estimate->add_option("--partition", o.partition)->check(CLI::ExistingFile);

  auto* variance = app.add_subcommand("variance", "exact sampling variance from the full table");
  add_config(variance, o);
  add_q(variance, o);

  auto* analyze = app.add_subcommand("analyze", "estimate and V-hat_Q from observed outcomes");
  add_config(analyze, o);
  add_q(analyze, o);
  analyze->add_option("--observed", o.observed)->required()->check(CLI::ExistingFile);
  analyze->add_option("--partition", o.partition)->check(CLI::ExistingFile);
  analyze->add_option("--tol-ga", o.tol_ga)->check(CLI::NonNegativeNumber);

  auto* check = app.add_subcommand("check", "Q validity, SAP/GA conditions and minimax Q");
  add_config(check, o);
  add_q(check, o);
  check->add_option("--tol-ga", o.tol_ga)->check(CLI::NonNegativeNumber);
  check->add_option("--partition", o.partition)->check(CLI::ExistingFile);
  check->add_option("--seed", o.seed, "draw a partition for V-hat_Q");

  auto* oracle = app.add_subcommand("oracle", "exact enumeration checks");
  auto* battery_opt = oracle->add_option("--battery", o.battery)
                          ->check(CLI::IsMember(battery_names()));
  oracle->add_option("-c,--config", o.config)->check(CLI::ExistingFile)->excludes(battery_opt);
  oracle->add_option("--seed", o.seed);
  oracle->add_option("--cap", o.cap, "largest support to enumerate");

  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo bias study");
  simulate->add_option("--models", o.models)
      ->delimiter(',')
      ->check(CLI::IsMember({"I", "II", "III", "IV", "V", "VI"}));
  simulate->add_option("--reps", o.reps)->check(CLI::PositiveNumber);
  simulate->add_option("--seed", o.seed)->required();
  simulate->add_option("--g", o.g)->delimiter(',');
  simulate->add_option("--sizes", o.sizes, "stratum sizes")->delimiter(',');
  simulate->add_option("--threads", o.threads, "0 reads GAMVAR_THREADS");
  simulate->add_flag("--end-to-end", o.end_to_end, "also average V-hat_Q over drawn partitions");
  simulate->add_option("--draws", o.draws)->check(CLI::PositiveNumber);
  simulate->add_option("--out", o.out, "directory for study.json and boxplot.csv");

  auto* factorial = app.add_subcommand("factorial", "factorial contrast vectors");
  factorial->add_option("--levels", o.levels)->delimiter(',')->required();
  factorial->add_option("--effect", o.effect, "0/1 per factor")->delimiter(',')->required();
  factorial->add_option("--vectors", o.vectors,
                        "per-factor vectors, concatenated in factor order")
      ->delimiter(',');
  factorial->add_flag("--basis", o.basis);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  CommandOutput result;
  try {
    if (probs->parsed()) {
      result = cmd_probs(load(o, probs), o.max_pairs);
    } else if (assign->parsed()) {
      result = cmd_assign(load(o, assign), o.seed, maybe_path(o.out));
    } else if (estimate->parsed()) {
      result = cmd_estimate(load(o, estimate), o.observed, maybe_path(o.partition));
    } else if (variance->parsed()) {
      const auto cfg = load(o, variance);
      result = cmd_variance(cfg, q_choice(o, cfg));
    } else if (analyze->parsed()) {
      const auto cfg = load(o, analyze);
      result = cmd_analyze(cfg, q_choice(o, cfg), o.observed, maybe_path(o.partition));
    } else if (check->parsed()) {
      const auto cfg = load(o, check);
      result = cmd_check(cfg, q_choice(o, cfg), maybe_path(o.partition));
    } else if (oracle->parsed()) {
      if (!o.config.empty()) {
        result = cmd_oracle(load(o, oracle));
      } else {
        if (o.battery.empty())
          return error("config error", "oracle needs --battery or --config", kExitConfigError);
        if (!given(oracle, "--seed"))
          return error("config error", "--seed is required", kExitConfigError);
        result = given(oracle, "--cap") ? cmd_oracle(o.battery, o.seed, o.cap)
                                        : cmd_oracle(o.battery, o.seed);
      }
    } else if (simulate->parsed()) {
      SimulateOptions s;
      s.models = o.models;
      s.reps = o.reps;
      s.seed = o.seed;
      s.g = o.g;
      s.sizes = o.sizes;
      s.threads = o.threads;
      s.end_to_end = o.end_to_end;
      s.draws = o.draws;
      s.out_dir = maybe_path(o.out);
      result = cmd_simulate(s);
    } else if (factorial->parsed()) {
      std::optional<std::vector<std::vector<double>>> vectors;
      if (!o.vectors.empty()) {
        vectors.emplace();
        std::size_t at = 0;
        for (auto s : o.levels) {
          if (at + s > o.vectors.size()) break;
          vectors->emplace_back(o.vectors.begin() + at, o.vectors.begin() + at + s);
          at += s;
        }
        if (vectors->size() != o.levels.size() || at != o.vectors.size())
          return error("config error", "--vectors must hold one vector per factor, concatenated",
                       kExitConfigError);
      }
      result = cmd_factorial(o.levels, o.effect, vectors, o.basis);
    }
  } catch (const ConfigError& e) {
    return error("config error", e.what(), kExitConfigError);
  } catch (const ContractViolation& e) {
    return error("config error", e.what(), kExitConfigError);
  } catch (const SapViolation& e) {
    return error("refused", e.what(), kExitRefused);
  } catch (const SupportTooLarge& e) {
    return error("refused", e.what(), kExitRefused);
  } catch (const std::exception& e) {
    return error("error", e.what(), 1);
  }

  std::cout << dump_json(result.json) << '\n';
  return result.exit_code;
}
