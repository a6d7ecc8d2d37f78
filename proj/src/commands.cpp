#include "gamvar/commands.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gamvar/error.hpp"
#include "gamvar/oracle.hpp"
#include "gamvar/rng.hpp"
#include "gamvar/simulation.hpp"

namespace gamvar {

namespace {

const AssignmentMechanism& need_mechanism(const RunConfig& cfg) {
  if (!cfg.mechanism) throw ConfigError("config has no [mechanism] section");
  return *cfg.mechanism;
}

const Contrast& need_contrast(const RunConfig& cfg) {
  if (!cfg.contrast) throw ConfigError("config has no [contrast] section");
  return *cfg.contrast;
}

PotentialOutcomesTable need_table(const RunConfig& cfg) {
  if (!cfg.population.outcomes)
    throw ConfigError(cfg.population_path.string() + " has no potential outcomes");
  return cfg.population.table();
}

Json contrast_json(const Contrast& c) {
  Json g = Json::object();
  for (std::size_t k = 0; k < c.treatments().size(); ++k) g[c.treatments()[k]] = c.weights()[k];
  return g;
}

Json witness_json(const PairWitness& w, const PopulationFile& pop) {
  Json out;
  out["unit"] = pop.frame.unit_ids[w.unit];
  out["other_unit"] = pop.frame.unit_ids[w.other_unit];
  out["treatment"] = pop.treatments[w.arm];
  out["other_treatment"] = pop.treatments[w.other_arm];
  return out;
}

Json means_json(const std::vector<double>& means, const std::vector<std::string>& labels) {
  Json out = Json::object();
  for (std::size_t z = 0; z < means.size(); ++z) out[labels[z]] = means[z];
  return out;
}

/// Exact first- and second-order tables in one pass over a custom support.
struct ExactTables {
  std::vector<Rational> first;
  std::vector<Rational> joint;
};

ExactTables custom_exact_tables(const CustomSupport& d) {
  const auto n = d.num_units, arms = d.num_arms;
  ExactTables t{std::vector<Rational>(n * arms), std::vector<Rational>(n * arms * n * arms)};
  for (std::size_t s = 0; s < d.partitions.size(); ++s) {
    const auto& part = d.partitions[s];
    for (std::size_t i = 0; i < n; ++i) {
      t.first[i * arms + part.arm_of(i)] += d.probabilities[s];
      for (std::size_t j = 0; j < n; ++j)
        if (j != i)
          t.joint[(i * arms + part.arm_of(i)) * n * arms + j * arms + part.arm_of(j)] +=
              d.probabilities[s];
    }
  }
  return t;
}

Json observed_partition_check(const ObservedOutcomes& obs, const RunConfig& cfg,
                              const std::optional<std::filesystem::path>& partition) {
  if (!partition) return Json();
  const auto t = read_partition_csv(*partition, cfg.population);
  for (std::size_t i = 0; i < t.num_units(); ++i)
    if (t.arm_of(i) != obs.partition().arm_of(i))
      throw ConfigError("observation for unit " + cfg.population.frame.unit_ids[i] +
                        " is under treatment " + cfg.population.treatments[obs.partition().arm_of(i)] +
                        " but the partition assigns " + cfg.population.treatments[t.arm_of(i)]);
  return Json(true);
}

}  // namespace

CommandOutput cmd_probs(const RunConfig& cfg, std::size_t max_pairs) {
  const auto& mech = need_mechanism(cfg);
  const auto& pop = cfg.population;
  const auto n = mech.num_units(), arms = mech.num_arms();
  const auto probs = assignment_probabilities(mech);
  std::optional<ExactTables> exact;
  if (const auto* d = std::get_if<CustomSupport>(&mech.design())) exact = custom_exact_tables(*d);

  Json out;
  out["command"] = "probs";
  out["mechanism"] = describe_mechanism(mech, pop);
  out["support_size"] = support_size(mech).str();
  out["positivity"] = positivity_holds(mech);
  out["all_pairs_positive"] = probs.all_pairs_positive();
  out["point_estimate_only"] = point_estimate_only(mech);

  Json first = Json::array();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t z = 0; z < arms; ++z) {
      const Rational r = exact ? exact->first[i * arms + z] : first_order_exact(mech, i, z);
      first.push_back(Json{{"unit", pop.frame.unit_ids[i]},
                           {"treatment", pop.treatments[z]},
                           {"pi", probs.pi(i, z)},
                           {"exact", to_string(r)}});
    }
  out["first_order"] = std::move(first);

  const std::size_t total = n * (n - 1) / 2 * arms * arms;
  auto pair_row = [&](std::size_t i, std::size_t j, std::size_t z, std::size_t w) {
    const Rational r = exact ? exact->joint[(i * arms + z) * n * arms + j * arms + w]
                             : second_order_exact(mech, i, j, z, w);
    return Json{{"unit", pop.frame.unit_ids[i]},
                {"other_unit", pop.frame.unit_ids[j]},
                {"treatment", pop.treatments[z]},
                {"other_treatment", pop.treatments[w]},
                {"pi", probs.pi(i, j, z, w)},
                {"exact", to_string(r)}};
  };
  Json second;
  second["total_pairs"] = total;
  Json rows = Json::array();
  if (total <= max_pairs) {
    second["complete"] = true;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        for (std::size_t z = 0; z < arms; ++z)
          for (std::size_t w = 0; w < arms; ++w) rows.push_back(pair_row(i, j, z, w));
  } else {
    second["complete"] = false;
    if (!cfg.seed)
      throw ConfigError("second-order table has " + std::to_string(total) +
                        " rows; a seed is needed to sample " + std::to_string(max_pairs));
    const std::uint64_t seed = *cfg.seed;
    second["sample_seed"] = seed;
    CounterRng rng(seed, 0x70616972);
    std::set<std::uint64_t> picked;
    while (picked.size() < max_pairs) picked.insert(rng.below(total));
    for (auto code : picked) {
      const auto w = code % arms;
      const auto z = (code / arms) % arms;
      auto pair = code / (arms * arms);
      std::size_t i = 0;
      while (pair >= n - 1 - i) pair -= n - 1 - i++;
      rows.push_back(pair_row(i, i + 1 + pair, z, w));
    }
  }
  second["pairs"] = std::move(rows);
  out["second_order"] = std::move(second);
  return {out, kExitOk};
}

CommandOutput cmd_assign(const RunConfig& cfg, std::uint64_t seed,
                         const std::optional<std::filesystem::path>& csv_out) {
  const auto& mech = need_mechanism(cfg);
  const auto t = sample(mech, seed);
  Json out;
  out["command"] = "assign";
  out["seed"] = seed;
  out["mechanism"] = describe_mechanism(mech, cfg.population);
  out["encoding"] = t.encode();
  Json rows = Json::array();
  for (std::size_t i = 0; i < t.num_units(); ++i)
    rows.push_back(Json{{"unit", cfg.population.frame.unit_ids[i]},
                        {"treatment", cfg.population.treatments[t.arm_of(i)]}});
  out["partition"] = std::move(rows);
  if (csv_out) {
    std::ofstream f(*csv_out);
    if (!f) throw ConfigError("cannot write " + csv_out->string());
    write_partition_csv(f, t, cfg.population);
    out["written"] = csv_out->string();
  }
  return {out, kExitOk};
}

CommandOutput cmd_estimate(const RunConfig& cfg, const std::filesystem::path& observed,
                           const std::optional<std::filesystem::path>& partition) {
  const auto& mech = need_mechanism(cfg);
  const auto obs = read_observed_csv(observed, cfg.population);
  observed_partition_check(obs, cfg, partition);
  const MeanEstimator est(mech, HorvitzThompson{});
  const auto means = est.means(obs);
  Json out;
  out["command"] = "estimate";
  out["estimator"] = "horvitz_thompson";
  out["means"] = means_json(means, cfg.population.treatments);
  if (cfg.contrast) {
    out["contrast"] = contrast_json(*cfg.contrast);
    out["estimate"] = contrast_estimate(*cfg.contrast, cfg.population.treatments, means);
  }
  out["point_estimate_only"] = point_estimate_only(mech);
  return {out, kExitOk};
}

CommandOutput cmd_variance(const RunConfig& cfg, const std::string& q_choice) {
  const auto& mech = need_mechanism(cfg);
  const auto& c = need_contrast(cfg);
  const auto table = need_table(cfg);
  const auto k = cross_moments(mech, HorvitzThompson{});
  Json out;
  out["command"] = "variance";
  out["mechanism"] = describe_mechanism(mech, cfg.population);
  out["contrast"] = contrast_json(c);
  out["tau_bar"] = population_contrast(table, c);
  out["variance"] = sampling_variance(table, k, c);
  out["variance_pairwise"] = sampling_variance_pairwise(table, k, c);
  if (const auto* cr = std::get_if<CompletelyRandomized>(&mech.design());
      cr && table.num_treatments() == 2) {
    const auto ney = neyman_two_arm_variance(table, cr->counts[0], cr->counts[1]);
    out["neyman"] = Json{{"s00", ney.s00}, {"s11", ney.s11}, {"s_tau", ney.s_tau},
                         {"variance", ney.variance}};
  }
  if (const auto* st = std::get_if<Stratified>(&mech.design()))
    out["stratified_closed_form"] = stratified_variance_closed_form(table, *st, c);
  const auto q = resolve_q(cfg, q_choice);
  out["q"] = q.name();
  out["v_q"] = v_q(table, k, c, q);
  out["bias"] = bias(q, unit_contrasts(table, c));
  return {out, kExitOk};
}

CommandOutput cmd_analyze(const RunConfig& cfg, const std::string& q_choice,
                          const std::filesystem::path& observed,
                          const std::optional<std::filesystem::path>& partition) {
  const auto& mech = need_mechanism(cfg);
  const auto& c = need_contrast(cfg);
  const auto obs = read_observed_csv(observed, cfg.population);
  observed_partition_check(obs, cfg, partition);
  const auto& order = cfg.population.treatments;
  const auto q = resolve_q(cfg, q_choice);
  const auto g = c.aligned(order);
  const auto probs = assignment_probabilities(mech);
  const auto sap = sap_condition(q, probs, g);
  const MeanEstimator est(mech, HorvitzThompson{});
  const auto means = est.means(obs);
  Json out;
  out["command"] = "analyze";
  out["mechanism"] = describe_mechanism(mech, cfg.population);
  out["contrast"] = contrast_json(c);
  if (!sap.holds) {
    out["q"] = q.name();
    out["refused"] = true;
    out["reason"] = "Q '" + q.name() +
                    "' needs a co-assignment probability that this design makes zero";
    out["sap_ok"] = false;
    out["sap_witness"] = witness_json(*sap.witness, cfg.population);
    return {out, kExitRefused};
  }
  out["means"] = means_json(means, order);
  out["estimate"] = contrast_estimate(c, order, means);
  out["q"] = q.name();
  out["v_q_hat"] = VqEstimator(mech, HorvitzThompson{}, g, q)(obs);
  out["sap_ok"] = true;
  if (cfg.population.outcomes) {
    const auto ga = ga_condition(q, cfg.population.table(), cfg.ga_tol);
    out["ga_ok"] = ga.holds;
    out["ga_residual"] = ga.max_residual;
  } else {
    out["ga_ok"] = nullptr;
  }
  return {out, kExitOk};
}

CommandOutput cmd_check(const RunConfig& cfg, const std::string& q_choice,
                        const std::optional<std::filesystem::path>& partition) {
  const auto& mech = need_mechanism(cfg);
  const auto& pop = cfg.population;
  const auto q = resolve_q(cfg, q_choice);
  const auto probs = assignment_probabilities(mech);
  Json out;
  out["command"] = "check";
  out["mechanism"] = describe_mechanism(mech, pop);
  out["q"] = q.name();

  const auto v = validate_q(q.matrix());
  out["q_validation"] = Json{{"valid", v.ok()},
                             {"max_row_sum", v.max_row_sum},
                             {"max_diagonal_error", v.max_diagonal_error},
                             {"min_eigenvalue", v.min_eigenvalue}};
  out["lambda_max"] = lambda_max(q);

  const auto suff = sap_sufficient(q, probs);
  out["sap_sufficient"] = suff.holds;
  if (suff.witness) out["sap_sufficient_witness"] = witness_json(*suff.witness, pop);

  const auto minimax = minimax_q(mech);
  out["minimax_q"] = minimax.q ? Json(minimax.q->name()) : Json(nullptr);
  out["minimax_rationale"] = minimax.rationale;

  if (cfg.contrast) {
    const auto& c = *cfg.contrast;
    out["contrast"] = contrast_json(c);
    const auto sap = sap_condition(q, probs, c.aligned(pop.treatments));
    Json report;
    report["sap_ok"] = sap.holds;
    if (sap.witness) report["sap_witness"] = witness_json(*sap.witness, pop);
    if (pop.outcomes) {
      const auto table = pop.table();
      std::optional<Partition> realized;
      if (partition)
        realized = read_partition_csv(*partition, pop);
      else if (cfg.seed)
        realized = sample(mech, *cfg.seed);
      const auto r = variance_report(table, mech, HorvitzThompson{}, c, q, realized, cfg.ga_tol);
      report["var"] = r.var;
      report["v_q"] = r.v_q;
      report["bias"] = r.bias;
      report["v_q_hat"] = r.v_q_hat ? Json(*r.v_q_hat) : Json(nullptr);
      report["ga_ok"] = r.ga_ok;
      report["ga_residual"] = r.ga_residual;
      if (realized) report["partition"] = realized->encode();
    }
    out["report"] = std::move(report);
  }
  return {out, kExitOk};
}

namespace {

Json case_json(const OracleCase& c) {
  Json checks = Json::array();
  for (const auto& k : c.checks) {
    Json row;
    row["name"] = k.name;
    if (!k.detail.empty()) row["detail"] = k.detail;
    row["relative"] = k.residual.relative;
    row["absolute"] = k.residual.absolute;
    row["passed"] = k.passed;
    checks.push_back(std::move(row));
  }
  return Json{{"label", c.label},
              {"support_size", c.support_size},
              {"passed", c.passed()},
              {"checks", std::move(checks)}};
}

Json max_json(const std::map<std::string, double>& m) {
  Json out = Json::object();
  for (const auto& [k, v] : m) out[k] = v;
  return out;
}

}  // namespace

CommandOutput cmd_oracle(const std::string& battery, std::uint64_t seed, std::size_t cap) {
  const auto report = run_battery(battery, seed, cap);
  Json out;
  out["command"] = "oracle";
  out["battery"] = battery;
  out["seed"] = seed;
  out["passed"] = report.passed();
  out["cases"] = report.cases.size();
  out["checks"] = report.num_checks();
  out["max_relative_residual"] = max_json(report.max_relative());
  Json cases = Json::array();
  for (const auto& c : report.cases) cases.push_back(case_json(c));
  out["results"] = std::move(cases);
  return {out, report.passed() ? kExitOk : kExitOracleFailure};
}

CommandOutput cmd_oracle(const RunConfig& cfg) {
  const auto& mech = need_mechanism(cfg);
  const auto& c = need_contrast(cfg);
  const auto table = need_table(cfg);
  std::vector<QMatrix> qs;
  for (const std::string choice : {"strict", "strat", "wholeplot", "half"}) {
    try {
      qs.push_back(resolve_q(cfg, choice));
    } catch (const ConfigError&) {
    }
  }
  const auto result =
      run_oracle_case(cfg.population_path.filename().string(), mech, table, {c}, qs,
                      HorvitzThompson{}, cfg.support_cap);
  BatteryReport report;
  report.cases.push_back(result);
  Json out;
  out["command"] = "oracle";
  out["battery"] = "config";
  out["passed"] = result.passed();
  out["checks"] = result.checks.size();
  out["max_relative_residual"] = max_json(report.max_relative());
  out["results"] = Json::array({case_json(result)});
  return {out, result.passed() ? kExitOk : kExitOracleFailure};
}

namespace {

Json five_json(const FiveNumber& f) {
  return Json{{"min", f.min}, {"q1", f.q1}, {"median", f.median}, {"q3", f.q3}, {"max", f.max}};
}

}  // namespace

CommandOutput cmd_simulate(const SimulateOptions& options) {
  StudyConfig config;
  for (const auto& m : options.models) config.models.push_back(builtin_model(m));
  config.reps = options.reps;
  config.seed = options.seed;
  config.g = options.g;
  config.sizes = options.sizes;
  config.threads = options.threads;
  config.end_to_end = options.end_to_end;
  config.draws = options.draws;
  const auto result = run_bias_study(config);

  Json out;
  out["command"] = "simulate";
  out["seed"] = result.seed;
  out["reps"] = result.reps;
  out["g"] = result.g;
  out["stratum_sizes"] = result.sizes;
  Json models = Json::array();
  for (std::size_t m = 0; m < result.models.size(); ++m) {
    const auto& r = result.models[m];
    const auto& gm = config.models[m];
    Json row;
    row["model"] = r.model;
    row["mu"] = gm.mu;
    row["sigma2"] = gm.sigma2;
    row["rho"] = gm.rho;
    row["bias_strict"] = five_json(r.strict_summary);
    row["bias_strat"] = five_json(r.strat_summary);
    row["median_ratio"] = r.median_ratio ? Json(*r.median_ratio) : Json(nullptr);
    if (!r.end_to_end.empty()) {
      CompensatedSum var, vs, vt, hs, ht;
      for (const auto& e : r.end_to_end) {
        var.add(e.var);
        vs.add(e.v_q_strict);
        vt.add(e.v_q_strat);
        hs.add(e.mean_v_hat_strict);
        ht.add(e.mean_v_hat_strat);
      }
      const double k = static_cast<double>(r.end_to_end.size());
      row["end_to_end"] = Json{{"draws_per_population", options.draws},
                               {"mean_var", var.value() / k},
                               {"mean_v_q_strict", vs.value() / k},
                               {"mean_v_q_strat", vt.value() / k},
                               {"mean_v_hat_strict", hs.value() / k},
                               {"mean_v_hat_strat", ht.value() / k}};
    }
    models.push_back(std::move(row));
  }
  out["models"] = std::move(models);

  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    const auto study_path = *options.out_dir / "study.json";
    const auto csv_path = *options.out_dir / "boxplot.csv";
    std::ofstream study(study_path);
    std::ofstream csv(csv_path);
    if (!study || !csv) throw ConfigError("cannot write into " + options.out_dir->string());
    study << dump_json(out) << '\n';
    export_boxplot_data(result, csv);
  }
  return {out, kExitOk};
}

CommandOutput cmd_factorial(const std::vector<std::size_t>& levels, const std::vector<int>& effect,
                            const std::optional<std::vector<std::vector<double>>>& vectors,
                            bool basis) {
  Json out;
  out["command"] = "factorial";
  out["levels"] = levels;
  out["effect"] = effect;
  out["treatments"] = factorial_treatment_labels(levels);
  try {
    if (basis) {
      Json rows = Json::array();
      for (const auto& c : factorial_effect_basis(levels, effect)) rows.push_back(c.weights());
      out["basis"] = std::move(rows);
    } else {
      const auto c = factorial_contrast(FactorialStructure{levels, effect, vectors});
      out["g"] = c.weights();
    }
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  return {out, kExitOk};
}

}  // namespace gamvar
