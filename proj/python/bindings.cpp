#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gamvar/commands.hpp"
#include "gamvar/config.hpp"
#include "gamvar/error.hpp"
#include "gamvar/io.hpp"
#include "gamvar/linalg.hpp"
#include "gamvar/oracle.hpp"
#include "gamvar/qframework.hpp"

namespace py = pybind11;
using namespace gamvar;

namespace {

std::vector<std::string> labels(std::size_t arms) {
  std::vector<std::string> out;
  for (std::size_t z = 0; z < arms; ++z) out.push_back(std::to_string(z));
  return out;
}

PotentialOutcomesTable table_of(const Eigen::MatrixXd& y) {
  return PotentialOutcomesTable::from_matrix(labels(static_cast<std::size_t>(y.cols())), y);
}

Contrast contrast_of(const Eigen::VectorXd& g) {
  return Contrast(labels(static_cast<std::size_t>(g.size())),
                  std::vector<double>(g.data(), g.data() + g.size()));
}

ObservedOutcomes observed_of(const AssignmentMechanism& mech, std::vector<std::size_t> arms,
                             std::vector<double> y) {
  return ObservedOutcomes(Partition(std::move(arms), mech.num_arms()), std::move(y));
}

std::pair<std::string, int> emit(const CommandOutput& out) { return {dump_json(out.json), out.exit_code}; }

py::dict witness_dict(const std::optional<PairWitness>& w) {
  py::dict d;
  if (!w) return d;
  d["unit"] = w->unit;
  d["other_unit"] = w->other_unit;
  d["arm"] = w->arm;
  d["other_arm"] = w->other_arm;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Randomization-based variance estimation for general assignment mechanisms";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<SapViolation>(m, "SapViolation", PyExc_RuntimeError);
  py::register_exception<SupportTooLarge>(m, "SupportTooLarge", PyExc_RuntimeError);

  py::class_<AssignmentMechanism>(m, "Mechanism")
      .def_static("completely_randomized", &AssignmentMechanism::completely_randomized, py::arg("counts"))
      .def_static(
          "stratified",
          [](const std::vector<std::size_t>& sizes, std::vector<std::vector<std::size_t>> counts) {
            return AssignmentMechanism::stratified(Grouping::contiguous(sizes), std::move(counts));
          },
          py::arg("sizes"), py::arg("counts"), "Strata are contiguous blocks of the given sizes.")
      .def_static(
          "split_plot",
          [](std::size_t h, std::size_t n0, std::vector<std::size_t> r1, std::vector<std::size_t> r2) {
            return AssignmentMechanism::split_plot(h, n0, std::move(r1), std::move(r2));
          },
          py::arg("num_wholeplots"), py::arg("wholeplot_size"), py::arg("wholeplot_counts"),
          py::arg("subplot_counts"))
      .def_static(
          "unicluster",
          [](const std::vector<std::size_t>& sizes) {
            return AssignmentMechanism::unicluster(Grouping::contiguous(sizes));
          },
          py::arg("sizes"))
      .def_property_readonly("num_units", &AssignmentMechanism::num_units)
      .def_property_readonly("num_arms", &AssignmentMechanism::num_arms)
      .def("first_order", [](const AssignmentMechanism& mech, std::size_t i, std::size_t z) {
        return first_order(mech, i, z);
      })
      .def("first_order_exact", [](const AssignmentMechanism& mech, std::size_t i, std::size_t z) {
        return to_string(first_order_exact(mech, i, z));
      })
      .def("second_order",
           [](const AssignmentMechanism& mech, std::size_t i, std::size_t j, std::size_t z, std::size_t zs) {
             return second_order(mech, i, j, z, zs);
           })
      .def(
          "support_size",
          [](const AssignmentMechanism& mech, std::size_t cap) { return enumerate_support(mech, cap).size(); },
          py::arg("cap") = kDefaultSupportCap)
      .def(
          "sample", [](const AssignmentMechanism& mech, std::uint64_t seed) { return sample(mech, seed).arms(); },
          py::arg("seed"));

  m.def("q_strict", [](std::size_t n) { return q_strict(n).matrix(); }, py::arg("n"));
  m.def(
      "q_strat", [](const std::vector<std::size_t>& sizes) { return q_strat(sizes).matrix(); }, py::arg("sizes"));
  m.def(
      "q_wholeplot", [](std::size_t h, std::size_t n0) { return q_wholeplot(h, n0).matrix(); },
      py::arg("num_wholeplots"), py::arg("wholeplot_size"));
  m.def("q_half", [](std::size_t n0) { return q_half(n0).matrix(); }, py::arg("half_size"));
  m.def("lambda_max", [](const Eigen::MatrixXd& q) { return lambda_max(QMatrix(q)); }, py::arg("q"));
  m.def("max_eigenvalue", &max_eigenvalue, py::arg("a"));
  m.def(
      "validate_q",
      [](const Eigen::MatrixXd& q) {
        const auto v = validate_q(q);
        py::dict d;
        d["valid"] = v.ok();
        d["symmetric"] = v.symmetric;
        d["row_sums_zero"] = v.row_sums_zero;
        d["diagonal_ok"] = v.diagonal_ok;
        d["psd"] = v.psd;
        d["min_eigenvalue"] = v.min_eigenvalue;
        return d;
      },
      py::arg("q"));
  m.def(
      "bias", [](const Eigen::MatrixXd& q, const Eigen::VectorXd& tau) { return bias(QMatrix(q), tau); },
      py::arg("q"), py::arg("tau"));

  m.def(
      "variance",
      [](const AssignmentMechanism& mech, const Eigen::MatrixXd& y, const Eigen::VectorXd& g) {
        return sampling_variance(table_of(y), mech, HorvitzThompson{}, contrast_of(g));
      },
      py::arg("mechanism"), py::arg("y"), py::arg("g"), "Exact variance of the HT contrast estimator.");
  m.def(
      "v_q",
      [](const AssignmentMechanism& mech, const Eigen::MatrixXd& y, const Eigen::VectorXd& g,
         const Eigen::MatrixXd& q) {
        return v_q(table_of(y), mech, HorvitzThompson{}, contrast_of(g), QMatrix(q));
      },
      py::arg("mechanism"), py::arg("y"), py::arg("g"), py::arg("q"));
  m.def(
      "estimate",
      [](const AssignmentMechanism& mech, std::vector<std::size_t> arms, std::vector<double> y,
         const Eigen::VectorXd& g) {
        return MeanEstimator(mech, HorvitzThompson{}).contrast(observed_of(mech, std::move(arms), std::move(y)), g);
      },
      py::arg("mechanism"), py::arg("arms"), py::arg("observed"), py::arg("g"));
  m.def(
      "v_q_hat",
      [](const AssignmentMechanism& mech, std::vector<std::size_t> arms, std::vector<double> y,
         const Eigen::VectorXd& g, const Eigen::MatrixXd& q) {
        return VqEstimator(mech, HorvitzThompson{}, g, QMatrix(q))(observed_of(mech, std::move(arms), std::move(y)));
      },
      py::arg("mechanism"), py::arg("arms"), py::arg("observed"), py::arg("g"), py::arg("q"),
      "Raises SapViolation when Q is not admissible for the design and contrast.");
  m.def(
      "sap_condition",
      [](const Eigen::MatrixXd& q, const AssignmentMechanism& mech, const Eigen::VectorXd& g) {
        const auto r = sap_condition(QMatrix(q), mech, g);
        return py::make_tuple(r.holds, witness_dict(r.witness));
      },
      py::arg("q"), py::arg("mechanism"), py::arg("g"));
  m.def(
      "minimax_q",
      [](const AssignmentMechanism& mech) {
        const auto c = minimax_q(mech);
        if (!c.q) return py::tuple(py::make_tuple(py::none(), py::none(), c.rationale));
        return py::tuple(py::make_tuple(c.q->name(), c.q->matrix(), c.rationale));
      },
      py::arg("mechanism"));

  m.def(
      "_probs", [](const std::filesystem::path& cfg, std::size_t max_pairs) {
        return emit(cmd_probs(load_config(cfg), max_pairs));
      },
      py::arg("config"), py::arg("max_pairs") = 20000);
  m.def(
      "_variance", [](const std::filesystem::path& cfg, const std::string& q) {
        return emit(cmd_variance(load_config(cfg), q));
      },
      py::arg("config"), py::arg("q"));
  m.def(
      "_analyze",
      [](const std::filesystem::path& cfg, const std::filesystem::path& observed, const std::string& q,
         const std::optional<std::filesystem::path>& partition) {
        return emit(cmd_analyze(load_config(cfg), q, observed, partition));
      },
      py::arg("config"), py::arg("observed"), py::arg("q"), py::arg("partition") = std::nullopt);
  m.def(
      "_check",
      [](const std::filesystem::path& cfg, const std::string& q,
         const std::optional<std::filesystem::path>& partition) {
        return emit(cmd_check(load_config(cfg), q, partition));
      },
      py::arg("config"), py::arg("q"), py::arg("partition") = std::nullopt);
  m.def(
      "_oracle_battery", [](const std::string& name, std::uint64_t seed) { return emit(cmd_oracle(name, seed)); },
      py::arg("name"), py::arg("seed"));
  m.def("battery_names", &battery_names);
  m.def(
      "_simulate",
      [](std::vector<std::string> models, std::size_t reps, std::uint64_t seed, unsigned threads, bool end_to_end,
         std::size_t draws) {
        SimulateOptions o;
        o.models = std::move(models);
        o.reps = reps;
        o.seed = seed;
        o.threads = threads;
        o.end_to_end = end_to_end;
        o.draws = draws;
        py::gil_scoped_release release;
        return emit(cmd_simulate(o));
      },
      py::arg("models"), py::arg("reps"), py::arg("seed"), py::arg("threads") = 0, py::arg("end_to_end") = false,
      py::arg("draws") = 200);
  m.def(
      "_factorial",
      [](const std::vector<std::size_t>& levels, const std::vector<int>& effect, bool basis) {
        return emit(cmd_factorial(levels, effect, std::nullopt, basis));
      },
      py::arg("levels"), py::arg("effect"), py::arg("basis") = false);
}
