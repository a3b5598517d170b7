#pragma once

#include <optional>

#include "aoi/solver.hpp"
#include "aoi/util.hpp"

namespace aoi {

struct WhittleSettings {
  double alpha = 0.99;
  double tol = 1e-4;     // bisection tolerance on the probing charge
  double mu_max = -1.0;  // non-positive means age_cap / (1 - alpha)
  double vi_tol = 1e-9;
  long vi_max_iter = 200000;

  // Probing can never save more than the maximal discounted age stream, so
  // the charge equalizing probe and not-probe lies below age_cap/(1-alpha).
  double resolved_mu_max(const SourceParams& p) const {
    return mu_max > 0.0 ? mu_max : p.age_cap / (1.0 - alpha);
  }
};

// Per-state probing charges that equalize probe and not-probe. `saturated`
// lists states whose bisection hit mu_max without a sign change.
struct WhittleTable {
  int source_id = 0;
  double alpha = 0.0;
  double tol = 0.0;
  double mu_max = 0.0;
  int buffer = 0;
  int sampling_cost = 1;
  int age_cap = 0;
  std::vector<double> indices;  // (buffer - sampling_cost + 1) * age_cap
  std::vector<SourceState> saturated;

  double at(int energy, int age) const {
    if (energy < sampling_cost)
      throw std::out_of_range("whittle index undefined below sampling_cost");
    return indices[static_cast<std::size_t>(energy - sampling_cost) * age_cap + (age - 1)];
  }
  double& at(int energy, int age) {
    return indices[static_cast<std::size_t>(energy - sampling_cost) * age_cap + (age - 1)];
  }
};

struct WhittleResult {
  double index = 0.0;
  bool saturated = false;
};

namespace detail {

// v - u at `state` for charge mu; warm reuses the previous value table.
inline double probe_gap(const SourceParams& p, SourceState state, const WhittleSettings& set,
                        double mu, StateTable& warm, bool& have_warm) {
  SolverSettings s;
  s.alpha = set.alpha;
  s.mu_hat = mu;
  s.tol = set.vi_tol;
  s.max_iter = set.vi_max_iter;
  ValueSolution sol = value_iterate(p, s, have_warm ? &warm : nullptr);
  warm = sol.J;
  have_warm = true;
  return sol.v.at(state.energy, state.age) - sol.u.at(state.energy, state.age);
}

}  // namespace detail

// Bisection on the probing charge for the sign change of v - u at one state.
// Returns 0 when not probing already weakly wins at zero charge, and mu_max
// (flagged) when probing still wins at the bracket top.
inline WhittleResult whittle_index(const SourceParams& p, SourceState state,
                                   const WhittleSettings& set) {
  if (state.energy < p.sampling_cost)
    throw std::invalid_argument("state not probe-feasible: energy below sampling_cost");
  if (!state_in_bounds(p, state)) throw std::invalid_argument("state out of bounds");

  const double mu_max = set.resolved_mu_max(p);
  StateTable warm;
  bool have_warm = false;
  if (detail::probe_gap(p, state, set, 0.0, warm, have_warm) >= 0.0) return {0.0, false};
  if (detail::probe_gap(p, state, set, mu_max, warm, have_warm) < 0.0) return {mu_max, true};

  double lo = 0.0, hi = mu_max;
  while (hi - lo > set.tol) {
    const double mid = 0.5 * (lo + hi);
    if (detail::probe_gap(p, state, set, mid, warm, have_warm) >= 0.0)
      hi = mid;
    else
      lo = mid;
  }
  return {0.5 * (lo + hi), false};
}

// Whittle indices for every probe-feasible (energy, age) of one source.
// Per-state bisections are independent and may run on several threads.
inline WhittleTable whittle_table(const SourceParams& p, const WhittleSettings& set,
                                  int threads = 1) {
  WhittleTable table;
  table.source_id = p.id;
  table.alpha = set.alpha;
  table.tol = set.tol;
  table.mu_max = set.resolved_mu_max(p);
  table.buffer = p.buffer;
  table.sampling_cost = p.sampling_cost;
  table.age_cap = p.age_cap;
  const std::size_t n_energy = static_cast<std::size_t>(p.buffer - p.sampling_cost + 1);
  table.indices.assign(n_energy * p.age_cap, 0.0);
  std::vector<char> sat(n_energy * p.age_cap, 0);

  parallel_for(n_energy * p.age_cap, resolve_thread_count(threads), [&](std::size_t i) {
    const int energy = p.sampling_cost + static_cast<int>(i / p.age_cap);
    const int age = 1 + static_cast<int>(i % p.age_cap);
    const WhittleResult r = whittle_index(p, {energy, age}, set);
    table.indices[i] = r.index;
    sat[i] = r.saturated ? 1 : 0;
  });
  for (std::size_t i = 0; i < sat.size(); ++i)
    if (sat[i])
      table.saturated.push_back({p.sampling_cost + static_cast<int>(i / p.age_cap),
                                 1 + static_cast<int>(i % p.age_cap)});
  return table;
}

struct IndexabilityViolation {
  double mu_before = 0.0;
  double mu_after = 0.0;
  SourceState state;  // left the not-probe set as the charge increased
};

struct IndexabilityReport {
  std::vector<double> mu_grid;
  std::vector<std::vector<SourceState>> not_probe_sets;  // one per grid point, sorted
  bool monotone = true;
  std::optional<IndexabilityViolation> first_violation;
};

// Audits indexability numerically: the not-probe set must grow (as a set)
// along an increasing grid of probing charges. A violation is reported, not
// thrown; the caller decides what to do with a non-indexable instance.
inline IndexabilityReport indexability_scan(const SourceParams& p, std::vector<double> mu_grid,
                                            const WhittleSettings& set) {
  if (mu_grid.empty()) throw std::invalid_argument("empty mu grid");
  for (std::size_t i = 0; i < mu_grid.size(); ++i) {
    if (mu_grid[i] < 0.0) throw std::invalid_argument("mu grid entries must be nonnegative");
    if (i > 0 && mu_grid[i] <= mu_grid[i - 1])
      throw std::invalid_argument("mu grid must be strictly increasing");
  }
  IndexabilityReport report;
  report.mu_grid = std::move(mu_grid);

  StateTable warm;
  bool have_warm = false;
  for (double mu : report.mu_grid) {
    SolverSettings s;
    s.alpha = set.alpha;
    s.mu_hat = mu;
    s.tol = set.vi_tol;
    s.max_iter = set.vi_max_iter;
    ValueSolution sol = value_iterate(p, s, have_warm ? &warm : nullptr);
    warm = sol.J;
    have_warm = true;
    report.not_probe_sets.push_back(sol.not_probe_set);
  }
  for (std::size_t i = 0; i + 1 < report.not_probe_sets.size() && report.monotone; ++i) {
    const auto& lo = report.not_probe_sets[i];
    const auto& hi = report.not_probe_sets[i + 1];
    for (const SourceState& s : lo) {
      if (!std::binary_search(hi.begin(), hi.end(), s)) {
        report.monotone = false;
        report.first_violation = {report.mu_grid[i], report.mu_grid[i + 1], s};
        break;
      }
    }
  }
  return report;
}

}  // namespace aoi
