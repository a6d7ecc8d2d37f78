#include "gamvar/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <thread>

#include "gamvar/assignment.hpp"
#include "gamvar/error.hpp"
#include "gamvar/estimation.hpp"
#include "gamvar/qframework.hpp"
#include "gamvar/rng.hpp"

namespace gamvar {

namespace {

Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

std::uint64_t name_key(const std::string& name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Lower Cholesky factor of sigma2 [(1 - rho) I + rho J]; negative pivots from
/// rounding at the psd boundary are clamped to zero.
Eigen::MatrixXd equicorrelation_factor(std::size_t d, double sigma2, double rho) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Constant(ix(d), ix(d), sigma2 * rho);
  s.diagonal().setConstant(sigma2);
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(ix(d), ix(d));
  for (Eigen::Index j = 0; j < s.rows(); ++j) {
    double pivot = s(j, j);
    for (Eigen::Index k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    pivot = std::max(pivot, 0.0);
    l(j, j) = std::sqrt(pivot);
    for (Eigen::Index i = j + 1; i < s.rows(); ++i) {
      double v = s(i, j);
      for (Eigen::Index k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = l(j, j) > 0.0 ? v / l(j, j) : 0.0;
    }
  }
  return l;
}

unsigned thread_count(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("GAMVAR_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace

void GeneratingModel::validate() const {
  if (mu.empty() || num_treatments() < 2)
    throw ContractViolation("model " + name + " needs at least one stratum and two treatments");
  if (sigma2.size() != mu.size() || rho.size() != mu.size())
    throw ContractViolation("model " + name + " needs sigma2 and rho for every stratum");
  const double d = static_cast<double>(num_treatments());
  for (std::size_t h = 0; h < mu.size(); ++h) {
    if (mu[h].size() != num_treatments())
      throw ContractViolation("model " + name + " has ragged mean vectors");
    if (!(sigma2[h] > 0.0)) throw ContractViolation("model " + name + " needs sigma2 > 0");
    if (!(rho[h] >= -1.0 / (d - 1.0) - 1e-15 && rho[h] <= 1.0))
      throw ContractViolation("model " + name + " has a non-psd equicorrelation matrix");
  }
}

std::vector<GeneratingModel> builtin_models() {
  const std::vector<double> flat{8, 7, 10};
  const std::vector<double> first{10, 12, 14};
  const std::vector<double> second{8, 6, 10};
  return {
      {"I", {flat, flat}, {2, 2}, {1, 1}},
      {"II", {first, second}, {2, 3}, {1, 1}},
      {"III", {first, second}, {2, 3}, {0.2, 0.9}},
      {"IV", {first, second}, {2, 3}, {0.5, 0.5}},
      {"V", {first, second}, {2, 3}, {0, 0}},
      {"VI", {flat, flat}, {3, 3}, {-0.5, -0.5}},
  };
}

GeneratingModel builtin_model(const std::string& name) {
  for (auto& m : builtin_models())
    if (m.name == name) return m;
  throw ConfigError("unknown generating model '" + name + "' (expected I-VI)");
}

PotentialOutcomesTable generate_population(const GeneratingModel& model,
                                           const std::vector<std::size_t>& sizes,
                                           std::uint64_t seed, std::uint64_t stream) {
  model.validate();
  if (sizes.size() != model.num_strata())
    throw ContractViolation("need one stratum size per stratum of the model");
  const auto d = model.num_treatments();
  std::size_t n = 0;
  for (auto s : sizes) n += s;
  CounterRng rng(seed, stream);
  Eigen::MatrixXd y(ix(n), ix(d));
  Eigen::VectorXd e(ix(d));
  std::size_t unit = 0;
  for (std::size_t h = 0; h < sizes.size(); ++h) {
    const double sigma = std::sqrt(model.sigma2[h]);
    const double rho = model.rho[h];
    const Eigen::MatrixXd factor =
        rho < 0.0 ? equicorrelation_factor(d, model.sigma2[h], rho) : Eigen::MatrixXd();
    for (std::size_t k = 0; k < sizes[h]; ++k, ++unit) {
      for (Eigen::Index z = 0; z < e.size(); ++z) e(z) = rng.normal();
      if (rho >= 0.0) {
        const double shared = std::sqrt(rho) * rng.normal();
        const double own = std::sqrt(1.0 - rho);
        for (std::size_t z = 0; z < d; ++z)
          y(ix(unit), ix(z)) = model.mu[h][z] + sigma * (own * e(ix(z)) + shared);
      } else {
        const Eigen::VectorXd draw = factor * e;
        for (std::size_t z = 0; z < d; ++z) y(ix(unit), ix(z)) = model.mu[h][z] + draw(ix(z));
      }
    }
  }
  UnitFrame frame;
  for (std::size_t i = 1; i <= n; ++i) frame.unit_ids.push_back(std::to_string(i));
  frame.strata = Grouping::contiguous(sizes);
  std::vector<std::string> labels;
  for (std::size_t z = 1; z <= d; ++z) labels.push_back(std::to_string(z));
  return PotentialOutcomesTable(std::move(frame), std::move(labels), std::move(y));
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw ContractViolation("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

FiveNumber five_number(const std::vector<double>& values) {
  return {quantile(values, 0.0), quantile(values, 0.25), quantile(values, 0.5),
          quantile(values, 0.75), quantile(values, 1.0)};
}

StudyResult run_bias_study(const StudyConfig& config) {
  if (config.reps < 1) throw ContractViolation("need at least one replicate");
  StudyResult result;
  result.seed = config.seed;
  result.reps = config.reps;
  result.g = config.g;
  result.sizes = config.sizes;

  std::size_t n = 0;
  for (auto s : config.sizes) n += s;
  const auto strata = Grouping::contiguous(config.sizes);
  const auto strict = q_strict(n);
  const auto strat = q_strat(strata);

  struct EndToEndSetup {
    AssignmentMechanism mech;
    CrossMomentCoefficients k;
    QuadraticCoefficients vq_strict, vq_strat;
    VqEstimator est_strict, est_strat;
  };
  std::vector<std::optional<EndToEndSetup>> setups(config.models.size());

  for (std::size_t m = 0; m < config.models.size(); ++m) {
    config.models[m].validate();
    const auto d = config.models[m].num_treatments();
    if (config.g.size() != d)
      throw ContractViolation("contrast length does not match model " + config.models[m].name);
    ModelResult r;
    r.model = config.models[m].name;
    r.bias_strict.resize(config.reps);
    r.bias_strat.resize(config.reps);
    if (config.end_to_end) {
      r.end_to_end.resize(config.reps);
      std::vector<std::vector<std::size_t>> counts;
      for (auto s : config.sizes) {
        std::vector<std::size_t> c(d, s / d);
        for (std::size_t z = 0; z < s % d; ++z) ++c[z];
        counts.push_back(c);
      }
      auto mech = AssignmentMechanism::stratified(strata, counts);
      auto k = cross_moments(mech, HorvitzThompson{});
      const Eigen::Map<const Eigen::VectorXd> g(config.g.data(), ix(d));
      setups[m].emplace(EndToEndSetup{mech, k, m_tilde_coefficients(k, g, strict),
                                      m_tilde_coefficients(k, g, strat),
                                      VqEstimator(mech, HorvitzThompson{}, g, strict),
                                      VqEstimator(mech, HorvitzThompson{}, g, strat)});
    }
    result.models.push_back(std::move(r));
  }

  const std::size_t tasks = config.models.size() * config.reps;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks; t = next++) {
      const std::size_t m = t / config.reps;
      const std::size_t rep = t % config.reps;
      const auto& model = config.models[m];
      const std::uint64_t stream = CounterRng::mix(name_key(model.name)) ^ rep;
      const auto table = generate_population(model, config.sizes, config.seed, stream);
      std::vector<std::string> labels = table.treatments();
      const Contrast c(labels, config.g);
      const auto tau = unit_contrasts(table, c);
      auto& out = result.models[m];
      out.bias_strict[rep] = bias(strict, tau);
      out.bias_strat[rep] = bias(strat, tau);
      if (setups[m]) {
        const auto& s = *setups[m];
        EndToEnd e;
        const double tau_bar = population_contrast(table, c);
        e.var = m_coefficients(s.k, c.aligned(labels)).evaluate(table) - tau_bar * tau_bar;
        e.v_q_strict = s.vq_strict.evaluate(table);
        e.v_q_strat = s.vq_strat.evaluate(table);
        CounterRng draws(config.seed, stream ^ 0xa55a5aa5a55a5aa5ULL);
        double sum_strict = 0.0, sum_strat = 0.0;
        for (std::size_t k = 0; k < config.draws; ++k) {
          const auto obs = ObservedOutcomes::observe(table, sample(s.mech, draws()));
          sum_strict += s.est_strict(obs);
          sum_strat += s.est_strat(obs);
        }
        e.mean_v_hat_strict = sum_strict / static_cast<double>(config.draws);
        e.mean_v_hat_strat = sum_strat / static_cast<double>(config.draws);
        out.end_to_end[rep] = e;
      }
    }
  };
  const unsigned threads =
      static_cast<unsigned>(std::min<std::size_t>(thread_count(config.threads), tasks));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (auto& r : result.models) {
    r.strict_summary = five_number(r.bias_strict);
    r.strat_summary = five_number(r.bias_strat);
    std::vector<double> ratios;
    for (std::size_t k = 0; k < r.bias_strict.size(); ++k)
      if (r.bias_strict[k] > 1e-9) ratios.push_back(r.bias_strat[k] / r.bias_strict[k]);
    if (!ratios.empty()) r.median_ratio = quantile(ratios, 0.5);
  }
  return result;
}

void export_boxplot_data(const StudyResult& result, std::ostream& out) {
  char buf[64];
  out << "model,q,replicate,bias\n";
  for (const auto& r : result.models)
    for (const auto* series : {&r.bias_strict, &r.bias_strat})
      for (std::size_t k = 0; k < series->size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", (*series)[k]);
        out << r.model << ',' << (series == &r.bias_strict ? "strict" : "strat") << ','
            << k + 1 << ',' << buf << '\n';
      }
}

}  // namespace gamvar
