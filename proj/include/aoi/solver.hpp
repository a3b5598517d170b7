#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <utility>

#include "aoi/model.hpp"
#include "aoi/types.hpp"

namespace aoi {

struct SolverSettings {
  double alpha = 0.99;    // discount factor
  double mu_hat = 0.0;    // per-probe charge
  double tol = 1e-9;      // sup-norm stopping tolerance
  long max_iter = 200000;
  bool record_residuals = false;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");
    if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
    if (mu_hat < 0.0) throw std::invalid_argument("mu_hat must be nonnegative");
    if (max_iter < 1) throw std::invalid_argument("max_iter must be positive");
  }
};

// Dense (energy, age) table; age is 1-based.
struct StateTable {
  int buffer = 0;
  int age_cap = 0;
  std::vector<double> data;

  StateTable() = default;
  StateTable(int b, int cap, double fill = 0.0)
      : buffer(b), age_cap(cap), data(static_cast<std::size_t>(b + 1) * cap, fill) {}

  double& at(int energy, int age) { return data[static_cast<std::size_t>(energy) * age_cap + (age - 1)]; }
  double at(int energy, int age) const {
    return data[static_cast<std::size_t>(energy) * age_cap + (age - 1)];
  }
};

// Sampling threshold for one (energy, age): sample iff the revealed channel's
// success probability is >= p_th. channel is the 0-based index of the lowest
// qualifying channel in ascending-success order; p_th = +inf and channel = -1
// when sampling is never optimal there.
struct ThresholdEntry {
  double p_th = std::numeric_limits<double>::infinity();
  int channel = -1;
};

struct ThresholdTable {
  int buffer = 0;
  int sampling_cost = 1;
  int age_cap = 0;
  std::vector<ThresholdEntry> entries;  // (buffer - sampling_cost + 1) * age_cap

  ThresholdTable() = default;
  ThresholdTable(int b, int es, int cap)
      : buffer(b),
        sampling_cost(es),
        age_cap(cap),
        entries(static_cast<std::size_t>(b - es + 1) * cap) {}

  ThresholdEntry& at(int energy, int age) {
    return entries[static_cast<std::size_t>(energy - sampling_cost) * age_cap + (age - 1)];
  }
  const ThresholdEntry& at(int energy, int age) const {
    return entries[static_cast<std::size_t>(energy - sampling_cost) * age_cap + (age - 1)];
  }
};

// Converged solution of the discounted single-source problem at one
// (alpha, mu_hat): value table J, intermediate cost-to-go W, the not-probe /
// probe costs u and v, and the derived sampling thresholds.
struct ValueSolution {
  double alpha = 0.0;
  double mu_hat = 0.0;
  int buffer = 0;
  int sampling_cost = 1;
  int age_cap = 0;
  int num_channels = 0;

  StateTable J, u, v;
  std::vector<double> W;  // (buffer+1) x age_cap x m; NaN below sampling_cost
  ThresholdTable thresholds;
  std::vector<SourceState> not_probe_set;  // E >= sampling_cost with u < v

  long iterations = 0;
  double residual = 0.0;
  bool converged = false;
  std::vector<double> residual_trace;

  double w_at(int energy, int age, int channel) const {
    return W[(static_cast<std::size_t>(energy) * age_cap + (age - 1)) * num_channels + channel];
  }
  double& w_at(int energy, int age, int channel) {
    return W[(static_cast<std::size_t>(energy) * age_cap + (age - 1)) * num_channels + channel];
  }
};

// Threshold-structure falsification: the set of channels where sampling is
// optimal failed to be upward-closed in the success probability.
class ThresholdStructureError : public std::runtime_error {
public:
  ThresholdStructureError(int energy, int age)
      : std::runtime_error("sampling decision not upward-closed in success probability at (E=" +
                           std::to_string(energy) + ", K=" + std::to_string(age) + ")"),
        energy(energy),
        age(age) {}
  int energy;
  int age;
};

namespace detail {

// One synchronous Bellman sweep; returns the sup-norm change.
inline double bellman_sweep(const SourceParams& p, const SolverSettings& set, const StateTable& J,
                            StateTable& out) {
  const double alpha = set.alpha;
  const double lam = p.lambda;
  const int m = p.num_channels();
  double res = 0.0;
  for (int E = 0; E <= p.buffer; ++E) {
    const int e_arr = std::min(E + 1, p.buffer);
    for (int K = 1; K <= p.age_cap; ++K) {
      const int aged = std::min(K + 1, p.age_cap);
      const double ea_keep = lam * J.at(e_arr, aged) + (1.0 - lam) * J.at(E, aged);
      const double u = K + alpha * ea_keep;
      double val = u;
      if (E >= p.sampling_cost) {
        const int e_sp = E - p.sampling_cost;
        const int e_sp_arr = std::min(e_sp + 1, p.buffer);
        const double ea_reset = lam * J.at(e_sp_arr, 1) + (1.0 - lam) * J.at(e_sp, 1);
        const double ea_fail = lam * J.at(e_sp_arr, aged) + (1.0 - lam) * J.at(e_sp, aged);
        double v = set.mu_hat;
        for (int j = 0; j < m; ++j) {
          const double pj = p.success_probs[j];
          const double samp = K * (1.0 - pj) + alpha * (pj * ea_reset + (1.0 - pj) * ea_fail);
          v += p.channel_probs[j] * std::min(u, samp);
        }
        val = std::min(u, v);
      }
      res = std::max(res, std::abs(val - J.at(E, K)));
      out.at(E, K) = val;
    }
  }
  return res;
}

}  // namespace detail

// The set of probe-feasible states where not probing is strictly cheaper.
inline std::vector<SourceState> probe_preference_set(const ValueSolution& sol) {
  std::vector<SourceState> set;
  for (int E = sol.sampling_cost; E <= sol.buffer; ++E)
    for (int K = 1; K <= sol.age_cap; ++K)
      if (sol.u.at(E, K) < sol.v.at(E, K)) set.push_back({E, K});
  return set;
}

// Derives the per-state sampling thresholds from a converged solution and
// verifies that the optimal-sampling channel set is upward-closed in the
// success probability. A violation throws rather than being repaired.
inline ThresholdTable extract_thresholds(const ValueSolution& sol, const SourceParams& p) {
  if (!sol.converged) throw std::invalid_argument("extract_thresholds requires a converged solution");
  ThresholdTable table(p.buffer, p.sampling_cost, p.age_cap);
  const std::vector<int> order = p.channels_by_success();
  for (int E = p.sampling_cost; E <= p.buffer; ++E) {
    for (int K = 1; K <= p.age_cap; ++K) {
      const double idle = sol.u.at(E, K);
      ThresholdEntry entry;
      bool sampling_seen = false;
      for (int j : order) {
        // Ties prefer sampling, so the threshold inequality is inclusive.
        const bool sample_opt = sol.w_at(E, K, j) <= idle;
        if (sampling_seen && !sample_opt && p.success_probs[j] > entry.p_th)
          throw ThresholdStructureError(E, K);
        if (sample_opt && !sampling_seen) {
          entry.p_th = p.success_probs[j];
          entry.channel = j;
          sampling_seen = true;
        }
      }
      table.at(E, K) = entry;
    }
  }
  return table;
}

// Solves the discounted Bellman system by synchronous value iteration from
// zero (or a caller-supplied warm start). u, v and W are recomputed from the
// converged table so the returned solution is internally consistent.
inline ValueSolution value_iterate(const SourceParams& p, const SolverSettings& set,
                                   const StateTable* warm_start = nullptr) {
  set.validate();
  ValueSolution sol;
  sol.alpha = set.alpha;
  sol.mu_hat = set.mu_hat;
  sol.buffer = p.buffer;
  sol.sampling_cost = p.sampling_cost;
  sol.age_cap = p.age_cap;
  sol.num_channels = p.num_channels();

  StateTable J = warm_start ? *warm_start : StateTable(p.buffer, p.age_cap, 0.0);
  StateTable next(p.buffer, p.age_cap, 0.0);
  double res = std::numeric_limits<double>::infinity();
  long it = 0;
  while (it < set.max_iter) {
    res = detail::bellman_sweep(p, set, J, next);
    std::swap(J, next);
    ++it;
    if (set.record_residuals) sol.residual_trace.push_back(res);
    if (res <= set.tol) break;
  }
  sol.iterations = it;
  sol.residual = res;
  sol.converged = res <= set.tol;

  // Finalization pass: evaluate u, v, W on the converged table and rebuild J
  // as their minimum so the stored tables satisfy the fixed-point identities.
  sol.u = StateTable(p.buffer, p.age_cap);
  sol.v = StateTable(p.buffer, p.age_cap, std::numeric_limits<double>::quiet_NaN());
  sol.W.assign(static_cast<std::size_t>(p.buffer + 1) * p.age_cap * p.num_channels(),
               std::numeric_limits<double>::quiet_NaN());
  sol.J = StateTable(p.buffer, p.age_cap);
  const double lam = p.lambda;
  for (int E = 0; E <= p.buffer; ++E) {
    const int e_arr = std::min(E + 1, p.buffer);
    for (int K = 1; K <= p.age_cap; ++K) {
      const int aged = std::min(K + 1, p.age_cap);
      const double u = K + set.alpha * (lam * J.at(e_arr, aged) + (1.0 - lam) * J.at(E, aged));
      sol.u.at(E, K) = u;
      if (E >= p.sampling_cost) {
        const int e_sp = E - p.sampling_cost;
        const int e_sp_arr = std::min(e_sp + 1, p.buffer);
        const double ea_reset = lam * J.at(e_sp_arr, 1) + (1.0 - lam) * J.at(e_sp, 1);
        const double ea_fail = lam * J.at(e_sp_arr, aged) + (1.0 - lam) * J.at(e_sp, aged);
        double v = set.mu_hat;
        for (int j = 0; j < p.num_channels(); ++j) {
          const double pj = p.success_probs[j];
          const double samp =
              K * (1.0 - pj) + set.alpha * (pj * ea_reset + (1.0 - pj) * ea_fail);
          const double w = std::min(u, samp);
          sol.w_at(E, K, j) = w;
          v += p.channel_probs[j] * w;
        }
        sol.v.at(E, K) = v;
        sol.J.at(E, K) = std::min(u, v);
      } else {
        sol.J.at(E, K) = u;
      }
    }
  }
  if (sol.converged) {
    sol.thresholds = extract_thresholds(sol, p);
    sol.not_probe_set = probe_preference_set(sol);
  }
  return sol;
}

namespace detail {

// Gaussian elimination with partial pivoting; a is n x n row-major.
inline std::vector<double> solve_linear(std::vector<double> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
    if (a[piv * n + col] == 0.0) throw std::runtime_error("singular policy-evaluation system");
    if (piv != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a[piv * n + c], a[col * n + c]);
      std::swap(b[piv], b[col]);
    }
    const double d = a[col * n + col];
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / d;
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t ri = n; ri-- > 0;) {
    double s = b[ri];
    for (std::size_t c = ri + 1; c < n; ++c) s -= a[ri * n + c] * x[c];
    x[ri] = s / a[ri * n + ri];
  }
  return x;
}

}  // namespace detail

// Exhaustive oracle: enumerates every stationary deterministic policy (idle,
// or probe with any per-channel sampling rule, per probe-feasible state),
// evaluates each exactly via the linear fixed point, and returns the
// pointwise minimum. Only intended for tiny instances.
inline StateTable brute_force_solve(const SourceParams& p, const SolverSettings& set) {
  set.validate();
  const int n = p.num_states();
  if (n > 200) throw std::invalid_argument("brute_force_solve: state space too large");
  const int m = p.num_channels();

  std::vector<SourceState> states;
  for (int E = 0; E <= p.buffer; ++E)
    for (int K = 1; K <= p.age_cap; ++K) states.push_back({E, K});
  auto index_of = [&](SourceState s) { return s.energy * p.age_cap + (s.age - 1); };

  std::vector<SourceState> feasible;
  for (const auto& s : states)
    if (s.energy >= p.sampling_cost) feasible.push_back(s);

  const long choices = 1L + (1L << m);  // idle, or probe with sampling bitmask
  double policy_count = 1.0;
  for (std::size_t i = 0; i < feasible.size(); ++i) policy_count *= choices;
  if (policy_count > 2e6) throw std::invalid_argument("brute_force_solve: policy space too large");

  StateTable best(p.buffer, p.age_cap, std::numeric_limits<double>::infinity());
  std::vector<long> choice(feasible.size(), 0);
  std::vector<double> P(static_cast<std::size_t>(n) * n);
  std::vector<double> cost(n);
  for (long pol = 0; pol < static_cast<long>(policy_count); ++pol) {
    long rem = pol;
    for (std::size_t i = 0; i < feasible.size(); ++i) {
      choice[i] = rem % choices;
      rem /= choices;
    }
    std::fill(P.begin(), P.end(), 0.0);
    std::fill(cost.begin(), cost.end(), 0.0);
    std::size_t fi = 0;
    for (const auto& s : states) {
      const int row = index_of(s);
      long c = 0;
      if (s.energy >= p.sampling_cost) c = choice[fi++];
      if (c == 0) {
        cost[row] = s.age;
        for (const auto& e : idle_transition_dist(p, s).entries)
          P[static_cast<std::size_t>(row) * n + index_of(e.state)] += e.prob;
      } else {
        const long mask = c - 1;
        cost[row] = set.mu_hat;
        for (int j = 0; j < m; ++j) {
          const bool samp = (mask >> j) & 1;
          cost[row] +=
              p.channel_probs[j] * stage_cost(s.age, samp ? Action::probe_and_sample()
                                                          : Action::probe_only(),
                                              p.success_probs[j]);
          for (const auto& e :
               intermediate_transition_dist(p, {s.energy, s.age, j}, samp).entries)
            P[static_cast<std::size_t>(row) * n + index_of(e.state)] +=
                p.channel_probs[j] * e.prob;
        }
      }
    }
    // (I - alpha P) J = cost
    std::vector<double> A(static_cast<std::size_t>(n) * n);
    for (int r = 0; r < n; ++r)
      for (int col = 0; col < n; ++col)
        A[static_cast<std::size_t>(r) * n + col] =
            (r == col ? 1.0 : 0.0) - set.alpha * P[static_cast<std::size_t>(r) * n + col];
    const std::vector<double> J = detail::solve_linear(std::move(A), cost);
    for (const auto& s : states) {
      double& b = best.at(s.energy, s.age);
      b = std::min(b, J[index_of(s)]);
    }
  }
  return best;
}

}  // namespace aoi
