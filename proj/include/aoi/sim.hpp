#pragma once

#include <cmath>
#include <functional>
#include <memory>

#include "aoi/policies.hpp"
#include "aoi/util.hpp"

namespace aoi {

// One simulated slot. States are as seen by the scheduler at the start of
// the slot; metric_age applies the convention that a slot with a successful
// sampled transmission counts as age 0.
struct SlotRecord {
  long t = 0;  // 1-based
  std::vector<int> energy;
  std::vector<int> age;
  std::vector<int> metric_age;
  std::optional<int> probed;
  int channel = -1;
  bool sampled = false;
  bool success = false;
};

struct EpisodeTrace {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<SlotRecord> slots;
};

struct Metrics {
  double time_avg_aoi = 0.0;
  std::vector<double> per_source_avg;
  std::vector<double> cumulative_avg;  // element t-1 averages slots 1..t
  std::vector<long> probe_count;
  std::vector<long> success_count;
  std::vector<long> outage_slots;  // slots entered with energy below sampling cost
};

struct InitialConditions {
  std::optional<std::vector<int>> energy;  // defaults to full buffers
  std::optional<std::vector<int>> age;     // defaults to 1
};

inline SystemState initial_system(const std::vector<SourceParams>& params,
                                  const InitialConditions& init = {}) {
  SystemState s(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    s[i].energy = init.energy ? init.energy->at(i) : params[i].buffer;
    s[i].age = init.age ? init.age->at(i) : 1;
    if (!state_in_bounds(params[i], s[i]))
      throw std::invalid_argument("initial condition out of bounds for source " +
                                  std::to_string(params[i].id));
  }
  return s;
}

// Advances the environment one slot at a time against any policy.
//
// Slot order: decision, channel reveal, transmission, metric recording,
// arrivals, aging. Each source draws arrivals, channels and transmission
// outcomes from its own named substreams derived from the master seed, so
// traces are stable under adding sources or switching policies. The full
// stepping state (engines included) serializes for bit-exact resumption.
class EpisodeEngine {
public:
  EpisodeEngine(std::vector<SourceParams> params, std::uint64_t seed,
                const InitialConditions& init = {})
      : params_(std::move(params)), seed_(seed), sys_(initial_system(params_, init)) {
    for (const auto& p : params_) {
      arrival_.emplace_back(substream_seed(seed, p.id, StreamPurpose::arrival));
      channel_.emplace_back(substream_seed(seed, p.id, StreamPurpose::channel));
      transmission_.emplace_back(substream_seed(seed, p.id, StreamPurpose::transmission));
    }
    policy_rng_ = Rng(substream_seed(seed, 0, StreamPurpose::policy));
  }

  SlotRecord step(Policy& policy) {
    const std::size_t n = params_.size();
    SlotRecord rec;
    rec.t = ++t_;
    rec.energy.resize(n);
    rec.age.resize(n);
    rec.metric_age.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      rec.energy[i] = sys_[i].energy;
      rec.age[i] = sys_[i].age;
    }
    const SystemState before = sys_;

    const PolicyDecision decision = policy.decide(sys_, policy_rng_);
    if (decision.probe_target) {
      const int i = *decision.probe_target;
      if (i < 0 || i >= static_cast<int>(n) || sys_[i].energy < params_[i].sampling_cost)
        throw std::logic_error("policy probed an infeasible source");
      rec.probed = i;
      rec.channel = channel_[i].categorical(params_[i].channel_probs);
      rec.sampled = decision.sample_on(rec.channel);
      if (rec.sampled) {
        rec.success = transmission_[i].bernoulli(params_[i].success_probs[rec.channel]);
        sys_[i].energy -= params_[i].sampling_cost;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const bool fresh =
          rec.probed && *rec.probed == static_cast<int>(i) && rec.sampled && rec.success;
      rec.metric_age[i] = fresh ? 0 : before[i].age;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (arrival_[i].bernoulli(params_[i].lambda))
        sys_[i].energy = std::min(sys_[i].energy + 1, params_[i].buffer);
      const bool fresh =
          rec.probed && *rec.probed == static_cast<int>(i) && rec.sampled && rec.success;
      sys_[i].age = fresh ? 1 : std::min(before[i].age + 1, params_[i].age_cap);
    }

    SlotObservation obs;
    obs.before = before;
    obs.probed = rec.probed;
    obs.channel = rec.channel;
    obs.sampled = rec.sampled;
    obs.success = rec.success;
    obs.after = sys_;
    policy.observe(obs);
    return rec;
  }

  const std::vector<SourceParams>& params() const { return params_; }
  const SystemState& system() const { return sys_; }
  long slot() const { return t_; }
  std::uint64_t seed() const { return seed_; }

  struct Snapshot {
    long t = 0;
    SystemState system;
    std::vector<std::string> arrival, channel, transmission;
    std::string policy_rng;
  };

  Snapshot snapshot() const {
    Snapshot s;
    s.t = t_;
    s.system = sys_;
    for (const auto& r : arrival_) s.arrival.push_back(r.save_state());
    for (const auto& r : channel_) s.channel.push_back(r.save_state());
    for (const auto& r : transmission_) s.transmission.push_back(r.save_state());
    s.policy_rng = policy_rng_.save_state();
    return s;
  }

  void restore(const Snapshot& s) {
    if (s.arrival.size() != params_.size() || s.system.size() != params_.size())
      throw std::invalid_argument("snapshot does not match source count");
    t_ = s.t;
    sys_ = s.system;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      arrival_[i].restore_state(s.arrival[i]);
      channel_[i].restore_state(s.channel[i]);
      transmission_[i].restore_state(s.transmission[i]);
    }
    policy_rng_.restore_state(s.policy_rng);
  }

private:
  std::vector<SourceParams> params_;
  std::uint64_t seed_ = 0;
  SystemState sys_;
  long t_ = 0;
  std::vector<Rng> arrival_, channel_, transmission_;
  Rng policy_rng_;
};

// Runs one seeded episode and gathers the summary metrics.
inline std::pair<EpisodeTrace, Metrics> run_episode(const std::vector<SourceParams>& params,
                                                    Policy& policy, long T, std::uint64_t seed,
                                                    const InitialConditions& init = {},
                                                    bool keep_trace = true) {
  if (T < 1) throw std::invalid_argument("episode length must be >= 1");
  const std::size_t n = params.size();
  EpisodeEngine engine(params, seed, init);
  EpisodeTrace trace;
  trace.seed = seed;
  Metrics metrics;
  metrics.per_source_avg.assign(n, 0.0);
  metrics.cumulative_avg.assign(T, 0.0);
  metrics.probe_count.assign(n, 0);
  metrics.success_count.assign(n, 0);
  metrics.outage_slots.assign(n, 0);

  double running_sum = 0.0;
  for (long t = 1; t <= T; ++t) {
    for (std::size_t i = 0; i < n; ++i)
      if (engine.system()[i].energy < params[i].sampling_cost) ++metrics.outage_slots[i];
    SlotRecord rec = engine.step(policy);
    if (rec.probed) {
      ++metrics.probe_count[*rec.probed];
      if (rec.sampled && rec.success) ++metrics.success_count[*rec.probed];
    }
    for (std::size_t i = 0; i < n; ++i) {
      metrics.per_source_avg[i] += rec.metric_age[i];
      running_sum += rec.metric_age[i];
    }
    metrics.cumulative_avg[t - 1] = running_sum / (static_cast<double>(t) * n);
    if (keep_trace) trace.slots.push_back(std::move(rec));
  }
  metrics.time_avg_aoi = running_sum / (static_cast<double>(T) * n);
  for (double& v : metrics.per_source_avg) v /= static_cast<double>(T);
  return {std::move(trace), std::move(metrics)};
}

inline std::vector<double> cumulative_average_age(const EpisodeTrace& trace) {
  if (trace.slots.empty()) throw std::invalid_argument("empty trace");
  const std::size_t n = trace.slots.front().metric_age.size();
  std::vector<double> series(trace.slots.size());
  double sum = 0.0;
  for (std::size_t t = 0; t < trace.slots.size(); ++t) {
    for (int a : trace.slots[t].metric_age) sum += a;
    series[t] = sum / (static_cast<double>(t + 1) * n);
  }
  return series;
}

using PolicyFactory = std::function<std::unique_ptr<Policy>()>;

struct ReplicationAggregate {
  double mean_aoi = 0.0;
  double stderr_aoi = 0.0;
  std::vector<double> per_seed_aoi;
  std::vector<double> mean_cumulative;
  std::vector<std::uint64_t> seeds;
};

// Independent seeded episodes of the same policy; episodes may run
// concurrently, aggregation order follows the seed list.
inline ReplicationAggregate run_replications(const std::vector<SourceParams>& params,
                                             const PolicyFactory& factory, long T,
                                             const std::vector<std::uint64_t>& seeds,
                                             const InitialConditions& init = {},
                                             int threads = 1) {
  if (seeds.size() < 2) throw std::invalid_argument("at least two replication seeds required");
  ReplicationAggregate agg;
  agg.seeds = seeds;
  agg.per_seed_aoi.assign(seeds.size(), 0.0);
  std::vector<std::vector<double>> cumulative(seeds.size());

  parallel_for(seeds.size(), resolve_thread_count(threads), [&](std::size_t k) {
    auto policy = factory();
    auto [trace, m] = run_episode(params, *policy, T, seeds[k], init, /*keep_trace=*/false);
    agg.per_seed_aoi[k] = m.time_avg_aoi;
    cumulative[k] = std::move(m.cumulative_avg);
  });

  double mean = 0.0;
  for (double v : agg.per_seed_aoi) mean += v;
  mean /= static_cast<double>(seeds.size());
  double var = 0.0;
  for (double v : agg.per_seed_aoi) var += (v - mean) * (v - mean);
  var /= static_cast<double>(seeds.size() - 1);
  agg.mean_aoi = mean;
  agg.stderr_aoi = std::sqrt(var / static_cast<double>(seeds.size()));

  agg.mean_cumulative.assign(T, 0.0);
  for (const auto& series : cumulative)
    for (long t = 0; t < T; ++t) agg.mean_cumulative[t] += series[t];
  for (double& v : agg.mean_cumulative) v /= static_cast<double>(seeds.size());
  return agg;
}

}  // namespace aoi
