#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace aoi {

// Thrown on malformed configuration; `field` carries a path like
// "sources[2].channel_probs".
class ConfigError : public std::runtime_error {
public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const { return field_; }

private:
  std::string field_;
};

// Static description of one energy-harvesting source.
//
// Channel j occurs with probability channel_probs[j] and delivers a packet
// with probability success_probs[j]. Probing is free; sampling (taking a
// measurement and transmitting it) costs sampling_cost energy units.
struct SourceParams {
  int id = 0;                         // 1-based source index
  double lambda = 0.0;                // Bernoulli energy-arrival rate
  int buffer = 0;                     // energy buffer size B
  int sampling_cost = 1;              // E_s, energy per sampled transmission
  std::vector<double> channel_probs;  // q_j, sums to 1
  std::vector<double> success_probs;  // p_j, each in [0,1]
  int age_cap = 2;                    // ages saturate at this value

  int num_channels() const { return static_cast<int>(channel_probs.size()); }

  int num_states() const { return (buffer + 1) * age_cap; }

  // Channel indices ordered by ascending success probability (stable).
  // Threshold extraction and shape checks walk channels in this order.
  std::vector<int> channels_by_success() const {
    std::vector<int> order(success_probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return success_probs[a] < success_probs[b];
    });
    return order;
  }

  // Validates all invariants; `where` prefixes field paths in error messages.
  // Accepts channel_probs summing to 1 within 1e-9 and renormalizes.
  void validate_and_normalize(const std::string& where = "") {
    auto path = [&](const char* f) { return where.empty() ? std::string(f) : where + "." + f; };
    if (lambda < 0.0 || lambda > 1.0)
      throw ConfigError(path("lambda"), "must be a probability in [0,1]");
    if (buffer < 0) throw ConfigError(path("buffer"), "must be nonnegative");
    if (sampling_cost < 1) throw ConfigError(path("sampling_cost"), "must be a positive integer");
    if (sampling_cost > buffer)
      throw ConfigError(path("sampling_cost"), "must not exceed buffer size");
    if (age_cap < 2) throw ConfigError(path("age_cap"), "must be at least 2");
    if (channel_probs.empty()) throw ConfigError(path("channel_probs"), "must be nonempty");
    if (channel_probs.size() != success_probs.size())
      throw ConfigError(path("success_probs"), "length must match channel_probs");
    double sum = 0.0;
    for (std::size_t j = 0; j < channel_probs.size(); ++j) {
      if (channel_probs[j] < 0.0 || channel_probs[j] > 1.0)
        throw ConfigError(path("channel_probs"), "entry " + std::to_string(j) + " not in [0,1]");
      if (success_probs[j] < 0.0 || success_probs[j] > 1.0)
        throw ConfigError(path("success_probs"), "entry " + std::to_string(j) + " not in [0,1]");
      sum += channel_probs[j];
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw ConfigError(path("channel_probs"), "sum != 1 (got " + std::to_string(sum) + ")");
    for (double& q : channel_probs) q /= sum;
  }
};

// Primary per-source state: buffer energy in [0, B], age in [1, age_cap].
struct SourceState {
  int energy = 0;
  int age = 1;

  friend auto operator<=>(const SourceState&, const SourceState&) = default;
};

// State observed between probing and the sampling decision: the primary
// state plus the revealed channel index (0-based).
struct IntermediateState {
  int energy = 0;
  int age = 1;
  int channel = 0;

  SourceState primary() const { return {energy, age}; }
};

// Per-source action. sample implies probe; the legal joint actions are
// (0,0), (1,0) and (1,1).
struct Action {
  bool probe = false;
  bool sample = false;

  static Action idle() { return {false, false}; }
  static Action probe_only() { return {true, false}; }
  static Action probe_and_sample() { return {true, true}; }
};

using SystemState = std::vector<SourceState>;

// Canonical next-state distribution: entries sorted by (energy, age),
// duplicates merged, probabilities strictly positive and summing to 1.
struct TransitionDist {
  struct Outcome {
    SourceState state;
    double prob;
  };
  std::vector<Outcome> entries;

  double prob_of(SourceState s) const {
    for (const auto& e : entries)
      if (e.state == s) return e.prob;
    return 0.0;
  }

  double total() const {
    double t = 0.0;
    for (const auto& e : entries) t += e.prob;
    return t;
  }
};

inline bool state_in_bounds(const SourceParams& p, SourceState s) {
  return s.energy >= 0 && s.energy <= p.buffer && s.age >= 1 && s.age <= p.age_cap;
}

}  // namespace aoi
