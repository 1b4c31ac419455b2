#include <fmt/format.h>
#include <fmt/ranges.h>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "drps/errors.hpp"
#include "drps/harness.hpp"

namespace drps {

namespace pt = boost::property_tree;

Environment EnvironmentSpec::build() const {
  if (kind == EnvironmentKind::Lqr) return lqr_make(lqr_dim, lqr_ineffective, env_seed, horizon, discount, clip);
  return ship_make(env_seed);
}

void ExperimentConfig::validate() const {
  const Index dim = parameter_count(environment.build());
  algorithm.validate(dim);
  if (!(environment.sigma_init > 0.0)) throw ConfigError("sigma must be positive");
  if (episodes_per_fit < 2) throw ConfigError("episodes_per_fit must be at least 2");
  if (n_epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (n_seeds < 1) throw ConfigError("seeds must be positive");
  if (eval_episodes < 1) throw ConfigError("eval_episodes must be positive");
  if (algorithm.algorithm == Algorithm::DrReps && episodes_per_fit < algorithm.m + 2)
    throw ConfigError(fmt::format("{} needs episodes_per_fit >= m + 2 = {} (got {})", to_string(algorithm.algorithm),
                                  algorithm.m + 2, episodes_per_fit));
  if (algorithm.algorithm == Algorithm::Cem && (algorithm.elite_count < 2 || algorithm.elite_count > episodes_per_fit))
    throw ConfigError("CEM needs 2 <= elites <= episodes_per_fit");
  for (auto m : pr_m)
    if (m < 1 || m > dim) throw ConfigError(fmt::format("pr_m entry {} outside [1, {}]", m, dim));
  for (auto c : mi_bench.sample_counts)
    if (c < 5) throw ConfigError("mi sample counts must be at least 5");
}

std::vector<std::uint64_t> ExperimentConfig::seeds() const {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < n_seeds; ++i) out.push_back(first_seed + static_cast<std::uint64_t>(i));
  return out;
}

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"environment", {"kind", "dim", "ineffective", "env_seed", "horizon", "discount", "clip", "sigma"}},
      {"algorithm", {"name", "eps", "kappa", "m", "lambda", "gamma", "metric", "beta", "elites", "bins", "k", "covariance",
        "reduce"}},
      {"run",
       {"episodes_per_fit", "epochs", "seeds", "first_seed", "eval_episodes", "output", "pr_m", "mi_sample_counts",
        "mi_a", "mi_sigma_e", "mi_sigma_x"}},
  };
  return keys;
}

template <typename T>
T get_value(const pt::ptree& tree, const std::string& key, T fallback) {
  const auto node = tree.get_child_optional(key);
  if (!node) return fallback;
  try {
    return node->get_value<T>();
  } catch (const pt::ptree_error&) {
    throw ConfigError(fmt::format("cannot parse value '{}' of key '{}'", node->data(), key));
  }
}

std::vector<Index> parse_index_list(const std::string& text, const std::string& key) {
  std::vector<Index> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const auto v = std::stoll(item, &used);
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
      out.push_back(static_cast<Index>(v));
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("cannot parse list entry '{}' of key '{}'", item, key));
    }
  }
  if (out.empty()) throw ConfigError(fmt::format("key '{}' needs at least one value", key));
  return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("malformed config: {}", e.what()));
  }
  for (const auto& [section, body] : tree) {
    const auto it = known_keys().find(section);
    if (it == known_keys().end()) throw ConfigError(fmt::format("unknown config section [{}]", section));
    for (const auto& [key, value] : body)
      if (!it->second.contains(key)) throw ConfigError(fmt::format("unknown key '{}' in [{}]", key, section));
  }

  ExperimentConfig cfg;
  if (const auto env = tree.get_child_optional("environment")) {
    auto& e = cfg.environment;
    const auto kind = get_value<std::string>(*env, "kind", "lqr");
    if (kind == "lqr")
      e.kind = EnvironmentKind::Lqr;
    else if (kind == "ship" || kind == "ship-steering")
      e.kind = EnvironmentKind::ShipSteering;
    else
      throw ConfigError(fmt::format("unknown environment kind '{}'", kind));
    e.lqr_dim = get_value<Index>(*env, "dim", e.lqr_dim);
    e.lqr_ineffective = get_value<Index>(*env, "ineffective", e.lqr_ineffective);
    e.env_seed = get_value<std::uint64_t>(*env, "env_seed", e.env_seed);
    e.horizon = get_value<int>(*env, "horizon", e.horizon);
    e.discount = get_value<double>(*env, "discount", e.discount);
    e.clip = get_value<double>(*env, "clip", e.clip);
    e.sigma_init = get_value<double>(*env, "sigma", e.kind == EnvironmentKind::Lqr ? 0.3 : 0.07);
  }
  if (const auto alg = tree.get_child_optional("algorithm")) {
    auto& a = cfg.algorithm;
    const auto name = get_value<std::string>(*alg, "name", std::string(to_string(a.algorithm)));
    const auto parsed = parse_algorithm(name);
    if (!parsed) throw ConfigError(fmt::format("unknown algorithm '{}'", name));
    a.algorithm = *parsed;
    a.eps = get_value<double>(*alg, "eps", a.eps);
    a.kappa = get_value<double>(*alg, "kappa", a.kappa);
    a.m = get_value<Index>(*alg, "m", a.m);
    // the hyperparameter tables call the exploration scaling "gamma"
    a.lambda = get_value<double>(*alg, "gamma", a.lambda);
    a.lambda = get_value<double>(*alg, "lambda", a.lambda);
    const auto metric_name = get_value<std::string>(*alg, "metric", std::string(to_string(a.metric)));
    const auto metric = parse_metric(metric_name);
    if (!metric) throw ConfigError(fmt::format("unknown metric '{}'", metric_name));
    a.metric = *metric;
    a.beta = get_value<double>(*alg, "beta", a.beta);
    a.elite_count = get_value<Index>(*alg, "elites", a.elite_count);
    a.mi.bins = get_value<int>(*alg, "bins", a.mi.bins);
    a.mi.neighbors = get_value<int>(*alg, "k", a.mi.neighbors);
    const auto cov = get_value<std::string>(*alg, "covariance", "full");
    if (cov == "full")
      a.covariance = CovarianceKind::Full;
    else if (cov == "diagonal" || cov == "diag")
      a.covariance = CovarianceKind::Diagonal;
    else
      throw ConfigError(fmt::format("unknown covariance '{}' (full or diagonal)", cov));
    a.reduce = get_value<bool>(*alg, "reduce", a.reduce);
  }
  if (const auto run = tree.get_child_optional("run")) {
    cfg.episodes_per_fit = get_value<Index>(*run, "episodes_per_fit", cfg.episodes_per_fit);
    cfg.n_epochs = get_value<int>(*run, "epochs", cfg.n_epochs);
    cfg.n_seeds = get_value<int>(*run, "seeds", cfg.n_seeds);
    cfg.first_seed = get_value<std::uint64_t>(*run, "first_seed", cfg.first_seed);
    cfg.eval_episodes = get_value<Index>(*run, "eval_episodes", cfg.eval_episodes);
    cfg.output = get_value<std::string>(*run, "output", cfg.output);
    if (auto v = run->get_optional<std::string>("pr_m")) cfg.pr_m = parse_index_list(*v, "pr_m");
    if (auto v = run->get_optional<std::string>("mi_sample_counts"))
      cfg.mi_bench.sample_counts = parse_index_list(*v, "mi_sample_counts");
    if (run->get_child_optional("mi_a")) cfg.mi_bench.a = get_value<double>(*run, "mi_a", 0.0);
    if (run->get_child_optional("mi_sigma_e")) cfg.mi_bench.sigma_e = get_value<double>(*run, "mi_sigma_e", 1.0);
    cfg.mi_bench.sigma_x = get_value<double>(*run, "mi_sigma_x", cfg.mi_bench.sigma_x);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file {}", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string format_config(const ExperimentConfig& c) {
  const auto& e = c.environment;
  const auto& a = c.algorithm;
  std::string out;
  out += "[environment]\n";
  out += fmt::format("kind = {}\n", e.kind == EnvironmentKind::Lqr ? "lqr" : "ship");
  if (e.kind == EnvironmentKind::Lqr) {
    out += fmt::format("dim = {}\nineffective = {}\nenv_seed = {}\nhorizon = {}\ndiscount = {}\nclip = {}\n", e.lqr_dim,
                       e.lqr_ineffective, e.env_seed, e.horizon, e.discount, e.clip);
  }
  out += fmt::format("sigma = {}\n\n", e.sigma_init);
  out += "[algorithm]\n";
  out += fmt::format("name = {}\neps = {}\nkappa = {}\nm = {}\nlambda = {}\nmetric = {}\nbeta = {}\nelites = {}\n",
                     to_string(a.algorithm), a.eps, a.kappa, a.m, a.lambda, to_string(a.metric), a.beta,
                     a.elite_count);
  out += fmt::format("bins = {}\nk = {}\n", a.mi.bins, a.mi.neighbors);
  out += fmt::format("covariance = {}\nreduce = {}\n\n",
                     a.covariance == CovarianceKind::Full ? "full" : "diagonal", a.reduce);
  out += "[run]\n";
  out += fmt::format("episodes_per_fit = {}\nepochs = {}\nseeds = {}\nfirst_seed = {}\neval_episodes = {}\n",
                     c.episodes_per_fit, c.n_epochs, c.n_seeds, c.first_seed, c.eval_episodes);
  out += fmt::format("output = {}\npr_m = {}\nmi_sample_counts = {}\n", c.output, fmt::join(c.pr_m, ","),
                     fmt::join(c.mi_bench.sample_counts, ","));
  if (c.mi_bench.a) out += fmt::format("mi_a = {}\n", *c.mi_bench.a);
  if (c.mi_bench.sigma_e) out += fmt::format("mi_sigma_e = {}\n", *c.mi_bench.sigma_e);
  out += fmt::format("mi_sigma_x = {}\n", c.mi_bench.sigma_x);
  return out;
}

// ---------------------------------------------------------------------------
// presets

namespace {

ExperimentConfig lqr_base() {
  ExperimentConfig c;
  c.environment.kind = EnvironmentKind::Lqr;
  c.environment.sigma_init = 0.3;
  c.n_seeds = 25;
  c.eval_episodes = 25;
  return c;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"lqr-diag-table2", "lqr-full-table3", "lqr-creps-table3", "lqr-pr-table5", "ship-table6", "mi-bench"};
}

ExperimentConfig preset(const std::string& name) {
  if (name == "lqr-diag-table2") {
    // C-REPS column of the diagonal-covariance LQR table
    auto c = lqr_base();
    c.algorithm.algorithm = Algorithm::Creps;
    c.algorithm.covariance = CovarianceKind::Diagonal;
    c.algorithm.eps = 2.5;
    c.algorithm.kappa = 6.0;
    c.algorithm.m = 30;
    c.algorithm.lambda = 0.1;
    c.algorithm.metric = Metric::MiKnnRegression;
    c.episodes_per_fit = 25;
    c.n_epochs = 80;
    c.output = "out/lqr-diag-table2";
    return c;
  }
  if (name == "lqr-full-table3") {
    auto c = lqr_base();
    c.algorithm.algorithm = Algorithm::DrCreps;
    c.algorithm.eps = 4.7;
    c.algorithm.kappa = 17.0;
    c.algorithm.m = 50;
    c.algorithm.lambda = 0.1;
    c.algorithm.metric = Metric::Pcc;
    c.episodes_per_fit = 50;
    c.n_epochs = 100;
    c.output = "out/lqr-full-table3";
    return c;
  }
  if (name == "lqr-creps-table3") {
    auto c = lqr_base();
    c.algorithm.algorithm = Algorithm::Creps;
    c.algorithm.eps = 4.7;
    c.algorithm.kappa = 17.0;
    c.episodes_per_fit = 150;
    c.n_epochs = 33;
    c.output = "out/lqr-creps-table3";
    return c;
  }
  if (name == "lqr-pr-table5") {
    auto c = lqr_base();
    c.algorithm.algorithm = Algorithm::DrCreps;
    c.algorithm.eps = 4.5;
    c.algorithm.kappa = 15.0;
    c.algorithm.m = 10;
    c.algorithm.lambda = 0.1;
    c.algorithm.metric = Metric::Pcc;
    c.algorithm.covariance = CovarianceKind::Diagonal;
    c.algorithm.reduce = false;
    c.episodes_per_fit = 50;
    c.n_epochs = 40;
    c.pr_m = {10, 30, 50};
    c.output = "out/lqr-pr-table5";
    return c;
  }
  if (name == "ship-table6") {
    // DR-REPS (PCC) column; the DR-CREPS column uses fewer episodes than m + 2
    ExperimentConfig c;
    c.environment.kind = EnvironmentKind::ShipSteering;
    c.environment.sigma_init = 0.07;
    c.algorithm.algorithm = Algorithm::DrReps;
    c.algorithm.eps = 0.5;
    c.algorithm.kappa = 20.0;
    c.algorithm.m = 100;
    c.algorithm.lambda = 0.1;
    c.algorithm.metric = Metric::Pcc;
    c.episodes_per_fit = 250;
    c.n_epochs = 14;
    c.n_seeds = 25;
    c.eval_episodes = 25;
    c.output = "out/ship-table6";
    return c;
  }
  if (name == "mi-bench") {
    ExperimentConfig c;
    c.n_seeds = 4;
    c.mi_bench.sample_counts = {10, 25, 50, 100, 200, 500, 1000};
    c.output = "out/mi-bench";
    return c;
  }
  throw ConfigError(fmt::format("unknown preset '{}'", name));
}

}  // namespace drps
