#pragma once

#include <cmath>
#include <span>
#include <stdexcept>

#include "aoi/types.hpp"

namespace aoi {

namespace detail {

// Accumulates (state, prob) pairs and emits the canonical sorted/merged form.
class DistBuilder {
public:
  void add(SourceState s, double prob) {
    if (prob > 0.0) entries_.push_back({s, prob});
  }

  TransitionDist finish() {
    std::sort(entries_.begin(), entries_.end(),
              [](const auto& a, const auto& b) { return a.state < b.state; });
    TransitionDist out;
    for (const auto& e : entries_) {
      if (!out.entries.empty() && out.entries.back().state == e.state)
        out.entries.back().prob += e.prob;
      else
        out.entries.push_back(e);
    }
    return out;
  }

private:
  std::vector<TransitionDist::Outcome> entries_;
};

}  // namespace detail

inline int capped_age(const SourceParams& p, int age) { return std::min(age + 1, p.age_cap); }

inline bool action_feasible(const SourceParams& p, SourceState s, Action act) {
  if (act.sample && !act.probe) return false;
  if (act.probe && s.energy < p.sampling_cost) return false;
  return true;
}

// Next-state distribution when the source idles (no probe): energy gains a
// Bernoulli arrival clipped at the buffer, age advances to the cap.
inline TransitionDist idle_transition_dist(const SourceParams& p, SourceState s) {
  detail::DistBuilder b;
  const int aged = capped_age(p, s.age);
  b.add({std::min(s.energy + 1, p.buffer), aged}, p.lambda);
  b.add({s.energy, aged}, 1.0 - p.lambda);
  return b.finish();
}

// Next-state distribution from an intermediate state (channel revealed).
// sample=false keeps the idle dynamics; sample=true spends sampling_cost,
// resets age to 1 on success and advances it otherwise, with the arrival
// credited after the spend.
inline TransitionDist intermediate_transition_dist(const SourceParams& p, IntermediateState v,
                                                   bool sample) {
  if (v.energy < p.sampling_cost)
    throw std::invalid_argument("intermediate state requires energy >= sampling_cost");
  if (v.channel < 0 || v.channel >= p.num_channels())
    throw std::invalid_argument("channel index out of range");
  if (!sample) return idle_transition_dist(p, v.primary());

  const double pj = p.success_probs[v.channel];
  const int aged = capped_age(p, v.age);
  const int e_spent = v.energy - p.sampling_cost;
  const int e_spent_arr = std::min(e_spent + 1, p.buffer);
  detail::DistBuilder b;
  b.add({e_spent_arr, 1}, p.lambda * pj);
  b.add({e_spent, 1}, (1.0 - p.lambda) * pj);
  b.add({e_spent_arr, aged}, p.lambda * (1.0 - pj));
  b.add({e_spent, aged}, (1.0 - p.lambda) * (1.0 - pj));
  return b.finish();
}

// Per-source transition kernel for a legal (probe, sample) action, with the
// probe branches averaged over the channel distribution.
inline TransitionDist transition_dist(const SourceParams& p, SourceState s, Action act) {
  if (!state_in_bounds(p, s)) throw std::invalid_argument("state out of bounds");
  if (!action_feasible(p, s, act)) throw std::invalid_argument("infeasible action");
  if (!act.probe) return idle_transition_dist(p, s);

  detail::DistBuilder b;
  for (int j = 0; j < p.num_channels(); ++j) {
    const TransitionDist cond =
        intermediate_transition_dist(p, {s.energy, s.age, j}, act.sample);
    for (const auto& e : cond.entries) b.add(e.state, p.channel_probs[j] * e.prob);
  }
  return b.finish();
}

// Expected one-slot age cost: the current age when not sampling, and the
// age weighted by the failure probability when sampling.
inline double stage_cost(int age, Action act, double success_prob_if_sampling = 0.0) {
  if (age < 1) throw std::invalid_argument("age must be >= 1");
  if (act.sample) return age * (1.0 - success_prob_if_sampling);
  return static_cast<double>(age);
}

// Joint kernel: the product of per-source transition probabilities. At most
// one source may probe per slot.
inline double joint_transition_prob(std::span<const SourceParams> params, const SystemState& s,
                                    std::span<const Action> acts, const SystemState& next) {
  const std::size_t n = params.size();
  if (s.size() != n || acts.size() != n || next.size() != n)
    throw std::invalid_argument("system state / action vector size mismatch");
  int probes = 0;
  for (const Action& a : acts) probes += a.probe ? 1 : 0;
  if (probes > 1) throw std::invalid_argument("collision: more than one probe");

  double prod = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    prod *= transition_dist(params[i], s[i], acts[i]).prob_of(next[i]);
    if (prod == 0.0) return 0.0;
  }
  return prod;
}

}  // namespace aoi
