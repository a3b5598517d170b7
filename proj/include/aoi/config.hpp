#pragma once

#include <fstream>
#include <set>

#include <json.hpp>

#include "aoi/qlearn.hpp"
#include "aoi/sim.hpp"
#include "aoi/solver.hpp"
#include "aoi/util.hpp"
#include "aoi/whittle.hpp"

namespace aoi {

struct AuditGrid {
  double lo = 0.0;
  double hi = 12.0;
  int points = 40;

  std::vector<double> build() const {
    if (points < 2) throw ConfigError("whittle.audit_grid.points", "need at least 2 points");
    if (!(hi > lo)) throw ConfigError("whittle.audit_grid", "hi must exceed lo");
    std::vector<double> g(points);
    for (int i = 0; i < points; ++i) g[i] = lo + (hi - lo) * i / (points - 1);
    return g;
  }
};

struct SimConfig {
  long horizon = 100000;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10,
                                      11, 12, 13, 14, 15, 16, 17, 18, 19, 20};
  InitialConditions init;
};

struct LearnConfig {
  StepSchedule schedule;
  double epsilon = 0.1;
  bool know_p = true;
  long horizon = 1000000;
  long snapshot_every = 0;  // 0 picks horizon/1000
};

// Full experiment description; the hash of the normalized form is embedded in
// every output file so results stay traceable to their configuration.
struct ExperimentConfig {
  std::vector<SourceParams> sources;
  SolverSettings solver;   // mu_hat field unused here; set per run
  WhittleSettings whittle;
  AuditGrid audit_grid;
  SimConfig sim;
  LearnConfig learning;
  std::string output_dir = "out";
  std::string config_hash;

  std::vector<SourceParams> params() const { return sources; }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, const std::set<std::string>& known,
                                const std::string& where) {
  for (const auto& [key, _] : obj.items())
    if (!known.count(key)) throw ConfigError(where.empty() ? key : where + "." + key,
                                             "unknown field");
}

template <typename T>
T get_or(const nlohmann::json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where.empty() ? key : where + "." + key, e.what());
  }
}

}  // namespace detail

// Parses and validates a raw JSON experiment description, filling defaults
// and normalizing channel distributions. Violations surface as ConfigError
// with the offending field path.
inline ExperimentConfig validate_config(const nlohmann::json& raw) {
  if (!raw.is_object()) throw ConfigError("", "config root must be a JSON object");
  detail::reject_unknown_keys(
      raw, {"sources", "solver", "whittle", "sim", "learning", "output_dir"}, "");

  ExperimentConfig cfg;
  if (!raw.contains("sources") || !raw.at("sources").is_array() || raw.at("sources").empty())
    throw ConfigError("sources", "must be a nonempty array");

  int next_id = 1;
  for (const auto& js : raw.at("sources")) {
    const std::string where = "sources[" + std::to_string(next_id - 1) + "]";
    if (!js.is_object()) throw ConfigError(where, "must be an object");
    detail::reject_unknown_keys(js,
                                {"id", "lambda", "buffer", "sampling_cost", "channel_probs",
                                 "success_probs", "age_cap"},
                                where);
    SourceParams p;
    p.id = detail::get_or<int>(js, "id", next_id, where);
    if (p.id != next_id)
      throw ConfigError(where + ".id", "ids must run 1..N in order (expected " +
                                           std::to_string(next_id) + ")");
    p.lambda = detail::get_or<double>(js, "lambda", -1.0, where);
    p.buffer = detail::get_or<int>(js, "buffer", -1, where);
    p.sampling_cost = detail::get_or<int>(js, "sampling_cost", 1, where);
    p.channel_probs = detail::get_or<std::vector<double>>(js, "channel_probs", {}, where);
    p.success_probs = detail::get_or<std::vector<double>>(js, "success_probs", {}, where);
    p.age_cap = detail::get_or<int>(js, "age_cap", 10, where);
    p.validate_and_normalize(where);
    cfg.sources.push_back(std::move(p));
    ++next_id;
  }

  const nlohmann::json empty = nlohmann::json::object();
  {
    const auto& js = raw.contains("solver") ? raw.at("solver") : empty;
    detail::reject_unknown_keys(js, {"alpha", "tol", "max_iter"}, "solver");
    cfg.solver.alpha = detail::get_or<double>(js, "alpha", 0.99, "solver");
    cfg.solver.tol = detail::get_or<double>(js, "tol", 1e-9, "solver");
    cfg.solver.max_iter = detail::get_or<long>(js, "max_iter", 200000, "solver");
    try {
      cfg.solver.validate();
    } catch (const std::exception& e) {
      throw ConfigError("solver", e.what());
    }
  }
  {
    const auto& js = raw.contains("whittle") ? raw.at("whittle") : empty;
    detail::reject_unknown_keys(js, {"tol", "mu_max", "audit_grid"}, "whittle");
    cfg.whittle.alpha = cfg.solver.alpha;
    cfg.whittle.vi_tol = cfg.solver.tol;
    cfg.whittle.vi_max_iter = cfg.solver.max_iter;
    cfg.whittle.tol = detail::get_or<double>(js, "tol", 1e-4, "whittle");
    cfg.whittle.mu_max = detail::get_or<double>(js, "mu_max", -1.0, "whittle");
    if (!(cfg.whittle.tol > 0.0)) throw ConfigError("whittle.tol", "must be positive");
    if (js.contains("audit_grid")) {
      const auto& ag = js.at("audit_grid");
      detail::reject_unknown_keys(ag, {"lo", "hi", "points"}, "whittle.audit_grid");
      cfg.audit_grid.lo = detail::get_or<double>(ag, "lo", 0.0, "whittle.audit_grid");
      cfg.audit_grid.hi = detail::get_or<double>(ag, "hi", 12.0, "whittle.audit_grid");
      cfg.audit_grid.points = detail::get_or<int>(ag, "points", 40, "whittle.audit_grid");
    }
    cfg.audit_grid.build();  // validates
  }
  {
    const auto& js = raw.contains("sim") ? raw.at("sim") : empty;
    detail::reject_unknown_keys(js, {"horizon", "seeds", "initial_energy", "initial_age"},
                                "sim");
    cfg.sim.horizon = detail::get_or<long>(js, "horizon", 100000, "sim");
    if (cfg.sim.horizon < 1) throw ConfigError("sim.horizon", "must be >= 1");
    if (js.contains("seeds")) {
      cfg.sim.seeds = detail::get_or<std::vector<std::uint64_t>>(js, "seeds", {}, "sim");
      if (cfg.sim.seeds.empty()) throw ConfigError("sim.seeds", "must be nonempty");
    }
    if (js.contains("initial_energy"))
      cfg.sim.init.energy =
          detail::get_or<std::vector<int>>(js, "initial_energy", {}, "sim");
    if (js.contains("initial_age"))
      cfg.sim.init.age = detail::get_or<std::vector<int>>(js, "initial_age", {}, "sim");
    for (const auto* v : {&cfg.sim.init.energy, &cfg.sim.init.age})
      if (*v && (*v)->size() != cfg.sources.size())
        throw ConfigError("sim.initial_energy/initial_age",
                          "length must equal the number of sources");
    try {
      initial_system(cfg.sources, cfg.sim.init);
    } catch (const std::exception& e) {
      throw ConfigError("sim", e.what());
    }
  }
  {
    const auto& js = raw.contains("learning") ? raw.at("learning") : empty;
    detail::reject_unknown_keys(js,
                                {"fast_exponent", "slow_exponent", "fast_scale", "slow_scale",
                                 "epsilon", "know_p", "horizon", "snapshot_every"},
                                "learning");
    cfg.learning.schedule.fast_exponent =
        detail::get_or<double>(js, "fast_exponent", 0.6, "learning");
    cfg.learning.schedule.slow_exponent =
        detail::get_or<double>(js, "slow_exponent", 0.9, "learning");
    cfg.learning.schedule.fast_scale = detail::get_or<double>(js, "fast_scale", 1.0, "learning");
    cfg.learning.schedule.slow_scale = detail::get_or<double>(js, "slow_scale", 1.0, "learning");
    cfg.learning.epsilon = detail::get_or<double>(js, "epsilon", 0.1, "learning");
    cfg.learning.know_p = detail::get_or<bool>(js, "know_p", true, "learning");
    cfg.learning.horizon = detail::get_or<long>(js, "horizon", 1000000, "learning");
    cfg.learning.snapshot_every = detail::get_or<long>(js, "snapshot_every", 0, "learning");
    try {
      cfg.learning.schedule.validate();
    } catch (const std::exception& e) {
      throw ConfigError("learning", e.what());
    }
    if (cfg.learning.epsilon < 0.0 || cfg.learning.epsilon > 1.0)
      throw ConfigError("learning.epsilon", "must be in [0,1]");
    if (cfg.learning.horizon < 1) throw ConfigError("learning.horizon", "must be >= 1");
  }
  cfg.output_dir = detail::get_or<std::string>(raw, "output_dir", "out", "");

  cfg.config_hash = [&cfg] {
    nlohmann::json canon;
    for (const auto& p : cfg.sources)
      canon["sources"].push_back({{"id", p.id},
                                  {"lambda", p.lambda},
                                  {"buffer", p.buffer},
                                  {"sampling_cost", p.sampling_cost},
                                  {"channel_probs", p.channel_probs},
                                  {"success_probs", p.success_probs},
                                  {"age_cap", p.age_cap}});
    canon["solver"] = {{"alpha", cfg.solver.alpha},
                       {"tol", cfg.solver.tol},
                       {"max_iter", cfg.solver.max_iter}};
    canon["whittle"] = {{"tol", cfg.whittle.tol},
                        {"mu_max", cfg.whittle.mu_max},
                        {"audit_grid", {{"lo", cfg.audit_grid.lo},
                                        {"hi", cfg.audit_grid.hi},
                                        {"points", cfg.audit_grid.points}}}};
    canon["sim"] = {{"horizon", cfg.sim.horizon}, {"seeds", cfg.sim.seeds}};
    if (cfg.sim.init.energy) canon["sim"]["initial_energy"] = *cfg.sim.init.energy;
    if (cfg.sim.init.age) canon["sim"]["initial_age"] = *cfg.sim.init.age;
    canon["learning"] = {{"fast_exponent", cfg.learning.schedule.fast_exponent},
                         {"slow_exponent", cfg.learning.schedule.slow_exponent},
                         {"fast_scale", cfg.learning.schedule.fast_scale},
                         {"slow_scale", cfg.learning.schedule.slow_scale},
                         {"epsilon", cfg.learning.epsilon},
                         {"know_p", cfg.learning.know_p},
                         {"horizon", cfg.learning.horizon}};
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(canon.dump())));
    return std::string(buf);
  }();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file: " + path);
  nlohmann::json raw;
  try {
    raw = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("", std::string("config is not valid JSON: ") + e.what());
  }
  return validate_config(raw);
}

}  // namespace aoi
