#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "gamvar/population.hpp"

namespace gamvar {

/// Y_i ~ N(mu_h, sigma2_h [(1 - rho_h) I + rho_h J]) for units in stratum h.
struct GeneratingModel {
  std::string name;
  std::vector<std::vector<double>> mu;  // per stratum, one mean per treatment
  std::vector<double> sigma2;           // per stratum
  std::vector<double> rho;              // per stratum

  std::size_t num_strata() const { return mu.size(); }
  std::size_t num_treatments() const { return mu.empty() ? 0 : mu.front().size(); }
  /// Throws ContractViolation on ragged means, sigma2 <= 0, or a rho outside
  /// [-1/(d-1), 1].
  void validate() const;
};

/// Models I-VI: three treatments, two strata.
std::vector<GeneratingModel> builtin_models();
/// Look up by roman numeral.
GeneratingModel builtin_model(const std::string& name);

/// One population; stratum h holds the next sizes[h] units. A pure function
/// of (model, sizes, seed, stream).
PotentialOutcomesTable generate_population(const GeneratingModel& model,
                                           const std::vector<std::size_t>& sizes,
                                           std::uint64_t seed, std::uint64_t stream = 0);

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7).
double quantile(std::vector<double> values, double p);

struct FiveNumber {
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};
FiveNumber five_number(const std::vector<double>& values);

struct StudyConfig {
  std::vector<GeneratingModel> models;
  std::size_t reps = 100;
  std::vector<double> g{1.0, -2.0, 1.0};
  std::vector<std::size_t> sizes{30, 20};
  std::uint64_t seed = 0;
  /// 0 means GAMVAR_THREADS from the environment, else hardware concurrency.
  unsigned threads = 0;
  /// Also draw stratified assignments and average V-hat_Q per population.
  bool end_to_end = false;
  std::size_t draws = 200;
};

/// Monte Carlo averages of V-hat_Q against the exact quantities, per population.
struct EndToEnd {
  double var = 0.0;
  double v_q_strict = 0.0;
  double v_q_strat = 0.0;
  double mean_v_hat_strict = 0.0;
  double mean_v_hat_strat = 0.0;
};

struct ModelResult {
  std::string model;
  std::vector<double> bias_strict;  // tau' Q_strict tau, per replicate
  std::vector<double> bias_strat;   // tau' Q_strat tau
  FiveNumber strict_summary;
  FiveNumber strat_summary;
  /// Median over replicates of bias_strat / bias_strict, taken over the
  /// replicates with bias_strict above 1e-9; empty when there are none.
  std::optional<double> median_ratio;
  std::vector<EndToEnd> end_to_end;  // per replicate, when requested
};

struct StudyResult {
  std::uint64_t seed = 0;
  std::size_t reps = 0;
  std::vector<double> g;
  std::vector<std::size_t> sizes;
  std::vector<ModelResult> models;
};

/// Replicate r of a model draws from a substream keyed by (model name, r), so
/// a model's populations do not depend on which other models run, on
/// scheduling, or on the thread count.
StudyResult run_bias_study(const StudyConfig& config);

/// Long format: model,q,replicate,bias with a header row.
void export_boxplot_data(const StudyResult& result, std::ostream& out);

}  // namespace gamvar
