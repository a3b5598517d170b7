#pragma once

#include <memory>
#include <optional>
#include <string>

#include "aoi/rng.hpp"
#include "aoi/whittle.hpp"

namespace aoi {

// One slot's choice: which source to probe (0-based index into the system
// vector, sources carry ids = index + 1) and, per revealed channel, whether
// the probed source samples.
struct PolicyDecision {
  std::optional<int> probe_target;
  std::vector<std::uint8_t> sample_rule;  // indexed by channel of the probed source

  bool sample_on(int channel) const {
    return probe_target && channel >= 0 &&
           channel < static_cast<int>(sample_rule.size()) && sample_rule[channel] != 0;
  }
};

// Everything a policy may learn from after the slot resolves.
struct SlotObservation {
  SystemState before;
  std::optional<int> probed;
  int channel = -1;
  bool sampled = false;
  bool success = false;
  SystemState after;
};

class Policy {
public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual PolicyDecision decide(const SystemState& system, Rng& rng) = 0;
  virtual void observe(const SlotObservation&) {}
};

// ---------------------------------------------------------------------------
// WITS3: probe the feasible source with the highest Whittle index, then
// sample iff the revealed channel clears that state's threshold.

// Highest-index feasible source; ties go to the lowest id. Returns nothing
// when no source can afford a sampled transmission.
inline std::optional<int> wits3_probe(const SystemState& system,
                                      const std::vector<WhittleTable>& tables) {
  if (system.size() != tables.size())
    throw std::invalid_argument("one whittle table per source required");
  std::optional<int> best;
  double best_index = 0.0;
  for (std::size_t i = 0; i < system.size(); ++i) {
    const auto& t = tables[i];
    const SourceState s = system[i];
    if (s.energy < t.sampling_cost) continue;
    if (s.energy > t.buffer || s.age < 1 || s.age > t.age_cap)
      throw std::invalid_argument("state outside whittle table domain");
    const double idx = t.at(s.energy, s.age);
    if (!best || idx > best_index) {
      best = static_cast<int>(i);
      best_index = idx;
    }
  }
  return best;
}

// Threshold test for the probed source; the inequality is inclusive.
inline bool wits3_sample(const IntermediateState& probed, const ThresholdTable& thresholds,
                         const SourceParams& p) {
  if (probed.energy < p.sampling_cost)
    throw std::invalid_argument("probed state below sampling cost");
  const ThresholdEntry& th = thresholds.at(probed.energy, probed.age);
  return p.success_probs[probed.channel] >= th.p_th;
}

// Which charge the deployed scheduler prices thresholds at: each state's own
// Whittle index (the charge that rationalizes probing it), or one global
// value shared by every state.
enum class ThresholdMode { per_state_index, global_mu };

struct Wits3Tables {
  WhittleTable whittle;
  ThresholdTable thresholds;
};

// Precomputes index and threshold tables for one source. In per-state mode
// each feasible state gets its threshold from a solve at that state's own
// index; solves are warm-started along the state sweep.
inline Wits3Tables build_wits3_tables(const SourceParams& p, const WhittleSettings& set,
                                      ThresholdMode mode, double global_mu = 0.0,
                                      int threads = 1) {
  Wits3Tables t;
  t.whittle = whittle_table(p, set, threads);
  SolverSettings vs;
  vs.alpha = set.alpha;
  vs.tol = set.vi_tol;
  vs.max_iter = set.vi_max_iter;
  if (mode == ThresholdMode::global_mu) {
    vs.mu_hat = global_mu;
    t.thresholds = value_iterate(p, vs).thresholds;
    return t;
  }
  t.thresholds = ThresholdTable(p.buffer, p.sampling_cost, p.age_cap);
  StateTable warm;
  bool have_warm = false;
  for (int E = p.sampling_cost; E <= p.buffer; ++E) {
    for (int K = 1; K <= p.age_cap; ++K) {
      vs.mu_hat = t.whittle.at(E, K);
      const ValueSolution sol = value_iterate(p, vs, have_warm ? &warm : nullptr);
      warm = sol.J;
      have_warm = true;
      t.thresholds.at(E, K) = sol.thresholds.at(E, K);
    }
  }
  return t;
}

class Wits3Policy : public Policy {
public:
  Wits3Policy(std::vector<SourceParams> params, std::vector<Wits3Tables> tables)
      : params_(std::move(params)), tables_(std::move(tables)) {
    whittle_only_.reserve(tables_.size());
    for (const auto& t : tables_) whittle_only_.push_back(t.whittle);
  }

  std::string name() const override { return "wits3"; }

  PolicyDecision decide(const SystemState& system, Rng&) override {
    PolicyDecision d;
    d.probe_target = wits3_probe(system, whittle_only_);
    if (d.probe_target) {
      const int i = *d.probe_target;
      const SourceParams& p = params_[i];
      d.sample_rule.resize(p.num_channels());
      for (int j = 0; j < p.num_channels(); ++j)
        d.sample_rule[j] =
            wits3_sample({system[i].energy, system[i].age, j}, tables_[i].thresholds, p) ? 1 : 0;
    }
    return d;
  }

private:
  std::vector<SourceParams> params_;
  std::vector<Wits3Tables> tables_;
  std::vector<WhittleTable> whittle_only_;
};

// ---------------------------------------------------------------------------
// Greedy baselines with retransmission: pick the feasible source with the
// largest age (GMA-R) or energy (GME-R), sample unconditionally, and keep
// probing the same source until it succeeds or runs out of energy.

struct BaselineLockState {
  std::optional<int> locked_source;
};

enum class GreedyCriterion { max_age, max_energy };

namespace detail {

inline std::pair<PolicyDecision, BaselineLockState> greedy_step(
    const BaselineLockState& lock, const SystemState& system,
    const std::vector<SourceParams>& params, GreedyCriterion crit) {
  PolicyDecision d;
  BaselineLockState next = lock;
  if (next.locked_source) {
    const int i = *next.locked_source;
    if (system[i].energy >= params[i].sampling_cost) {
      d.probe_target = i;
      d.sample_rule.assign(params[i].channel_probs.size(), 1);
      return {d, next};
    }
    next.locked_source.reset();  // depleted: retransmission ends
  }
  std::optional<int> best;
  int best_key = 0;
  for (std::size_t i = 0; i < system.size(); ++i) {
    if (system[i].energy < params[i].sampling_cost) continue;
    const int key = crit == GreedyCriterion::max_age ? system[i].age : system[i].energy;
    if (!best || key > best_key) {
      best = static_cast<int>(i);
      best_key = key;
    }
  }
  d.probe_target = best;
  if (best) d.sample_rule.assign(params[*best].channel_probs.size(), 1);
  return {d, next};
}

}  // namespace detail

inline std::pair<PolicyDecision, BaselineLockState> gma_r_step(
    const BaselineLockState& lock, const SystemState& system,
    const std::vector<SourceParams>& params) {
  return detail::greedy_step(lock, system, params, GreedyCriterion::max_age);
}

inline std::pair<PolicyDecision, BaselineLockState> gme_r_step(
    const BaselineLockState& lock, const SystemState& system,
    const std::vector<SourceParams>& params) {
  return detail::greedy_step(lock, system, params, GreedyCriterion::max_energy);
}

// A failed sampled transmission keeps the probed source locked for the next
// slot; success (or not having sampled) releases it.
inline BaselineLockState resolve_baseline_lock(std::optional<int> probed, bool sampled,
                                               bool success) {
  if (probed && sampled && !success) return {probed};
  return {};
}

class GreedyRetransmitPolicy : public Policy {
public:
  GreedyRetransmitPolicy(std::vector<SourceParams> params, GreedyCriterion crit)
      : params_(std::move(params)), crit_(crit) {}

  std::string name() const override {
    return crit_ == GreedyCriterion::max_age ? "gma-r" : "gme-r";
  }

  PolicyDecision decide(const SystemState& system, Rng&) override {
    auto [d, next] = detail::greedy_step(lock_, system, params_, crit_);
    lock_ = next;
    return d;
  }

  void observe(const SlotObservation& obs) override {
    lock_ = resolve_baseline_lock(obs.probed, obs.sampled, obs.success);
  }

private:
  std::vector<SourceParams> params_;
  GreedyCriterion crit_;
  BaselineLockState lock_;
};

// ---------------------------------------------------------------------------
// Uniform-random baseline: probe a uniformly chosen feasible source and
// sample with probability 1/2.

inline PolicyDecision random_step(const SystemState& system,
                                  const std::vector<SourceParams>& params, Rng& rng) {
  std::vector<int> feasible;
  for (std::size_t i = 0; i < system.size(); ++i)
    if (system[i].energy >= params[i].sampling_cost) feasible.push_back(static_cast<int>(i));
  PolicyDecision d;
  if (feasible.empty()) return d;
  const int pick = feasible[rng.uniform_int(static_cast<int>(feasible.size()))];
  d.probe_target = pick;
  d.sample_rule.assign(params[pick].channel_probs.size(), rng.bernoulli(0.5) ? 1 : 0);
  return d;
}

class RandomPolicy : public Policy {
public:
  explicit RandomPolicy(std::vector<SourceParams> params) : params_(std::move(params)) {}

  std::string name() const override { return "random"; }

  PolicyDecision decide(const SystemState& system, Rng& rng) override {
    return random_step(system, params_, rng);
  }

private:
  std::vector<SourceParams> params_;
};

}  // namespace aoi
