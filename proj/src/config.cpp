#include "gamvar/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "gamvar/error.hpp"

namespace gamvar {

namespace {

Json toml_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    Json out = Json::object();
    for (auto&& [k, v] : *t) out[std::string(k.str())] = toml_to_json(v);
    return out;
  }
  if (const auto* a = node.as_array()) {
    Json out = Json::array();
    for (auto&& v : *a) out.push_back(toml_to_json(v));
    return out;
  }
  if (const auto* v = node.as_integer()) return Json(v->get());
  if (const auto* v = node.as_floating_point()) return Json(v->get());
  if (const auto* v = node.as_boolean()) return Json(v->get());
  if (const auto* v = node.as_string()) return Json(v->get());
  std::ostringstream os;
  node.visit([&](auto&& n) { os << n; });
  return Json(os.str());
}

/// Field access with dotted-path diagnostics.
class Fields {
 public:
  Fields(const Json& doc, std::string path) : doc_(doc), path_(std::move(path)) {}

  bool has(const std::string& key) const { return doc_.is_object() && doc_.contains(key); }
  std::string at_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json& get(const std::string& key) const {
    if (!has(key)) throw ConfigError("missing required field '" + at_path(key) + "'");
    return doc_.at(key);
  }
  Fields sub(const std::string& key) const {
    const auto& v = get(key);
    if (!v.is_object()) throw ConfigError("field '" + at_path(key) + "' must be a table");
    return Fields(v, at_path(key));
  }
  std::string string(const std::string& key) const {
    const auto& v = get(key);
    if (!v.is_string()) throw ConfigError("field '" + at_path(key) + "' must be a string");
    return v.get<std::string>();
  }
  double number(const std::string& key) const {
    const auto& v = get(key);
    if (!v.is_number()) throw ConfigError("field '" + at_path(key) + "' must be a number");
    return v.get<double>();
  }
  std::size_t count(const std::string& key) const { return to_count(get(key), at_path(key)); }

  static std::size_t to_count(const Json& v, const std::string& where) {
    if (!v.is_number_integer() || v.get<long long>() < 0)
      throw ConfigError("field '" + where + "' must be a non-negative integer");
    return static_cast<std::size_t>(v.get<long long>());
  }
  std::vector<std::size_t> counts(const std::string& key) const {
    const auto& v = get(key);
    if (!v.is_array()) throw ConfigError("field '" + at_path(key) + "' must be an array");
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < v.size(); ++k)
      out.push_back(to_count(v[k], at_path(key) + "[" + std::to_string(k) + "]"));
    return out;
  }
  std::vector<std::string> strings(const std::string& key) const {
    const auto& v = get(key);
    if (!v.is_array()) throw ConfigError("field '" + at_path(key) + "' must be an array");
    std::vector<std::string> out;
    for (const auto& e : v) {
      if (!e.is_string()) throw ConfigError("field '" + at_path(key) + "' must hold strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }
  const Json& json() const { return doc_; }
  const std::string& path() const { return path_; }

 private:
  const Json& doc_;
  std::string path_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

/// Reorders treatment columns to `order`, which must be a permutation.
void reorder_treatments(PopulationFile& pop, const std::vector<std::string>& order) {
  if (order.size() != pop.treatments.size())
    throw ConfigError("mechanism defines " + std::to_string(order.size()) +
                      " treatments but the population file has " +
                      std::to_string(pop.treatments.size()));
  std::vector<std::size_t> src;
  for (const auto& label : order) src.push_back(pop.treatment_index(label));
  if (pop.outcomes) {
    Eigen::MatrixXd y(pop.outcomes->rows(), pop.outcomes->cols());
    for (std::size_t z = 0; z < src.size(); ++z)
      y.col(static_cast<Eigen::Index>(z)) = pop.outcomes->col(static_cast<Eigen::Index>(src[z]));
    pop.outcomes = std::move(y);
  }
  pop.treatments = order;
}

std::vector<std::size_t> label_counts(const Fields& f, const std::string& key,
                                      const std::vector<std::string>& treatments) {
  const auto& v = f.get(key);
  if (!v.is_object())
    throw ConfigError("field '" + f.at_path(key) + "' must map treatment labels to counts");
  std::vector<std::size_t> out(treatments.size(), 0);
  for (auto it = v.begin(); it != v.end(); ++it) {
    const auto pos = std::find(treatments.begin(), treatments.end(), it.key());
    if (pos == treatments.end())
      throw ConfigError("field '" + f.at_path(key) + "' names unknown treatment '" + it.key() + "'");
    out[static_cast<std::size_t>(pos - treatments.begin())] =
        Fields::to_count(it.value(), f.at_path(key) + "." + it.key());
  }
  return out;
}

AssignmentMechanism build_mechanism(const Fields& f, RunConfig& cfg) {
  auto& pop = cfg.population;
  const auto type = f.string("type");
  const auto wrap = [&](auto&& make) -> AssignmentMechanism {
    try {
      return make();
    } catch (const ContractViolation& e) {
      throw ConfigError("mechanism: " + std::string(e.what()));
    }
  };
  if (type == "completely_randomized" || type == "cr") {
    const auto counts = label_counts(f, "counts", pop.treatments);
    return wrap([&] { return AssignmentMechanism::completely_randomized(counts); });
  }
  if (type == "stratified") {
    if (!pop.frame.strata)
      throw ConfigError("mechanism type 'stratified' needs a stratum column in the population file");
    const auto& strata = *pop.frame.strata;
    const auto& v = f.get("counts");
    if (!v.is_object()) throw ConfigError("field 'mechanism.counts' must be a table");
    const bool shared = std::all_of(v.begin(), v.end(), [](const Json& e) { return e.is_number(); });
    std::vector<std::vector<std::size_t>> counts;
    if (shared) {
      const auto c = label_counts(f, "counts", pop.treatments);
      counts.assign(strata.num_groups(), c);
    } else {
      const auto sub = f.sub("counts");
      for (const auto& name : strata.names) counts.push_back(label_counts(sub, name, pop.treatments));
    }
    return wrap([&] { return AssignmentMechanism::stratified(strata, counts); });
  }
  if (type == "split_plot") {
    const auto levels1 = f.strings("whole_plot_levels");
    const auto levels2 = f.strings("sub_plot_levels");
    const auto r1 = f.counts("whole_plot_counts");
    const auto r2 = f.counts("sub_plot_counts");
    if (r1.size() != levels1.size() || r2.size() != levels2.size())
      throw ConfigError("split-plot counts must match the number of levels");
    const std::string sep = f.has("separator") ? f.string("separator") : "";
    std::vector<std::string> order;
    for (const auto& a : levels1)
      for (const auto& b : levels2) order.push_back(a + sep + b);
    reorder_treatments(pop, order);
    if (!pop.frame.wholeplots)
      throw ConfigError("mechanism type 'split_plot' needs a wholeplot column in the population file");
    return wrap([&] { return AssignmentMechanism::split_plot(*pop.frame.wholeplots, r1, r2); });
  }
  if (type == "unicluster") {
    if (!pop.frame.clusters)
      throw ConfigError("mechanism type 'unicluster' needs a cluster column in the population file");
    if (pop.frame.clusters->num_groups() != pop.treatments.size())
      throw ConfigError("unicluster assignment needs exactly one cluster per treatment");
    return wrap([&] { return AssignmentMechanism::unicluster(*pop.frame.clusters); });
  }
  if (type == "custom") {
    return read_custom_support_csv(resolve(cfg.base_dir, f.string("support_file")), pop);
  }
  throw ConfigError("field 'mechanism.type' has unknown value '" + type +
                    "' (expected completely_randomized, stratified, split_plot, unicluster, custom)");
}

Contrast build_contrast(const Fields& f, const PopulationFile& pop) {
  const bool explicit_g = f.has("g");
  const bool factorial = f.has("factorial");
  if (explicit_g == factorial)
    throw ConfigError("field 'contrast' needs exactly one of 'g' or 'factorial'");
  try {
    if (explicit_g) {
      const auto& g = f.get("g");
      if (!g.is_object()) throw ConfigError("field 'contrast.g' must map treatment labels to weights");
      std::vector<std::string> labels;
      std::vector<double> weights;
      for (auto it = g.begin(); it != g.end(); ++it) {
        if (!it.value().is_number())
          throw ConfigError("field 'contrast.g." + it.key() + "' must be a number");
        pop.treatment_index(it.key());
        labels.push_back(it.key());
        weights.push_back(it.value().get<double>());
      }
      return Contrast(labels, weights);
    }
    const auto sub = f.sub("factorial");
    FactorialStructure fs;
    fs.levels = sub.counts("levels");
    for (auto x : sub.counts("effect")) fs.effect.push_back(static_cast<int>(x));
    if (sub.has("vectors")) {
      const auto& v = sub.get("vectors");
      if (!v.is_array()) throw ConfigError("field 'contrast.factorial.vectors' must be an array");
      std::vector<std::vector<double>> vecs;
      for (const auto& row : v) vecs.push_back(row.get<std::vector<double>>());
      fs.per_factor_vectors = vecs;
    }
    const auto c = factorial_contrast(fs);
    const bool level_labels = std::all_of(c.treatments().begin(), c.treatments().end(),
                                          [&](const std::string& label) {
                                            return std::find(pop.treatments.begin(),
                                                             pop.treatments.end(),
                                                             label) != pop.treatments.end();
                                          });
    if (level_labels) return c;
    // Otherwise the population columns, in arm order, stand in for the level tuples.
    if (c.treatments().size() != pop.treatments.size())
      throw ConfigError("field 'contrast.factorial.levels' implies " +
                        std::to_string(c.treatments().size()) + " treatments but the population has " +
                        std::to_string(pop.treatments.size()));
    return Contrast(pop.treatments, c.weights());
  } catch (const ContractViolation& e) {
    throw ConfigError("contrast: " + std::string(e.what()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("contrast: " + std::string(e.what()));
  }
}

}  // namespace

Json read_config_document(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  if (path.extension() == ".json") {
    try {
      return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  try {
    const auto tbl = toml::parse(in, path.string());
    return toml_to_json(tbl);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << path.string() << " line " << e.source().begin.line << " column "
       << e.source().begin.column << ": " << e.description();
    throw ConfigError(os.str());
  }
}

RunConfig config_from_json(const Json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config must be a table");
  const Fields root(doc, "");
  RunConfig cfg;
  cfg.base_dir = base_dir;
  const auto pop = root.sub("population");
  cfg.population_path = resolve(base_dir, pop.string("file"));
  cfg.population = read_population_csv(cfg.population_path);
  if (pop.has("treatments")) reorder_treatments(cfg.population, pop.strings("treatments"));

  if (root.has("mechanism")) cfg.mechanism = build_mechanism(root.sub("mechanism"), cfg);
  if (root.has("contrast")) cfg.contrast = build_contrast(root.sub("contrast"), cfg.population);
  if (root.has("q")) {
    const auto q = root.sub("q");
    if (q.has("choice")) cfg.q_choice = q.string("choice");
    if (q.has("file")) cfg.q_file = resolve(base_dir, q.string("file"));
  }
  if (root.has("tolerances")) {
    const auto t = root.sub("tolerances");
    if (t.has("ga")) cfg.ga_tol = t.number("ga");
  }
  if (root.has("seed")) {
    const auto& s = root.get("seed");
    if (s.is_number_unsigned())
      cfg.seed = s.get<std::uint64_t>();
    else if (s.is_number_integer() && s.get<long long>() >= 0)
      cfg.seed = static_cast<std::uint64_t>(s.get<long long>());
    else if (s.is_string())
      try {
        cfg.seed = std::stoull(s.get<std::string>());
      } catch (const std::exception&) {
        throw ConfigError("field 'seed' must be a 64-bit unsigned integer");
      }
    else
      throw ConfigError("field 'seed' must be a 64-bit unsigned integer");
  }
  if (root.has("output")) {
    const auto o = root.sub("output");
    if (o.has("dir")) cfg.output_dir = resolve(base_dir, o.string("dir"));
  }
  if (root.has("limits")) {
    const auto l = root.sub("limits");
    if (l.has("support_cap")) cfg.support_cap = l.count("support_cap");
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_config_document(path), path.parent_path());
}

QMatrix resolve_q(const RunConfig& cfg, const std::string& choice) {
  const auto& frame = cfg.population.frame;
  const auto n = frame.size();
  try {
    if (choice == "strict") return q_strict(n);
    if (choice == "strat") {
      if (!frame.strata) throw ConfigError("q 'strat' needs stratum labels in the population file");
      return q_strat(*frame.strata);
    }
    if (choice == "wholeplot") {
      if (!frame.wholeplots)
        throw ConfigError("q 'wholeplot' needs wholeplot labels in the population file");
      return q_wholeplot(*frame.wholeplots);
    }
    if (choice == "half") {
      if (n % 2 != 0) throw ConfigError("q 'half' needs an even number of units");
      return q_half(n / 2);
    }
    if (choice == "file") {
      if (!cfg.q_file) throw ConfigError("q 'file' needs q.file in the config or --q-file");
      auto q = read_q_csv(*cfg.q_file);
      if (q.size() != n) throw ConfigError("Q from file does not match the number of units");
      return q;
    }
  } catch (const ContractViolation& e) {
    throw ConfigError("q '" + choice + "': " + e.what());
  }
  throw ConfigError("unknown Q choice '" + choice + "' (expected strict, strat, wholeplot, half, file)");
}

Json describe_mechanism(const AssignmentMechanism& mech, const PopulationFile& pop) {
  Json out;
  out["type"] = to_string(mech.kind());
  out["units"] = mech.num_units();
  out["treatments"] = pop.treatments;
  std::visit(
      [&](const auto& d) {
        using D = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<D, CompletelyRandomized>) {
          out["counts"] = d.counts;
        } else if constexpr (std::is_same_v<D, Stratified>) {
          Json strata = Json::object();
          for (std::size_t h = 0; h < d.counts.size(); ++h) strata[d.strata.names[h]] = d.counts[h];
          out["counts"] = strata;
        } else if constexpr (std::is_same_v<D, SplitPlot>) {
          out["whole_plots"] = d.wholeplots.num_groups();
          out["whole_plot_counts"] = d.wholeplot_counts;
          out["sub_plot_counts"] = d.subplot_counts;
        } else if constexpr (std::is_same_v<D, Unicluster>) {
          out["clusters"] = d.clusters.names;
        } else {
          out["support_size"] = d.partitions.size();
        }
      },
      mech.design());
  return out;
}

}  // namespace gamvar
