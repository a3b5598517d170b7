#pragma once

#include <cmath>

#include "aoi/model.hpp"
#include "aoi/sim.hpp"

namespace aoi {

// Polynomial step-size pair: d(n) = fast_scale * (n+1)^-fast_exponent drives
// the Q-value iterates, f(n) = slow_scale * (n+1)^-slow_exponent drives the
// index estimates. Exponents in (0.5, 1] with slow > fast give sequences that
// are nonincreasing, non-summable, square-summable, and f = o(d).
struct StepSchedule {
  double fast_exponent = 0.6;
  double slow_exponent = 0.9;
  double fast_scale = 1.0;
  double slow_scale = 1.0;

  void validate() const {
    auto in_range = [](double e) { return e > 0.5 && e <= 1.0; };
    if (!in_range(fast_exponent) || !in_range(slow_exponent))
      throw std::invalid_argument("step exponents must lie in (0.5, 1]");
    if (!(slow_exponent > fast_exponent))
      throw std::invalid_argument("slow exponent must exceed fast exponent");
    if (!(fast_scale > 0.0) || !(slow_scale > 0.0))
      throw std::invalid_argument("step scales must be positive");
  }
};

enum class Timescale { fast, slow };

inline double step_size(const StepSchedule& s, Timescale which, long n) {
  if (n < 0) throw std::invalid_argument("visit count must be nonnegative");
  const double e = which == Timescale::fast ? s.fast_exponent : s.slow_exponent;
  const double scale = which == Timescale::fast ? s.fast_scale : s.slow_scale;
  // Steps above 1 would break the convex-combination form of the updates.
  return std::min(1.0, scale * std::pow(static_cast<double>(n + 1), -e));
}

struct LearnerOptions {
  StepSchedule schedule;
  double epsilon = 0.1;
  double alpha = 0.99;
  bool know_p = true;    // false replaces p(C) by the realized success flag
  bool freeze_mu = false;
  double initial_mu = 0.0;
  double mu_max = -1.0;  // non-positive means age_cap / (1 - alpha) per source

  void validate() const {
    schedule.validate();
    if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("epsilon must be in [0,1]");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");
  }
};

// Learned tables of one source: Q over primary (E,K,b) pairs, Q over
// intermediate (E,K,channel,a) pairs, the per-state index estimate, and the
// visit counters that drive the per-pair step sizes.
struct SourceLearnTables {
  int buffer = 0;
  int sampling_cost = 1;
  int age_cap = 0;
  int num_channels = 0;
  double mu_max = 0.0;

  std::vector<double> qb;       // (B+1) * age_cap * 2
  std::vector<double> qa;       // (B+1) * age_cap * m * 2
  std::vector<double> mu;       // (B+1) * age_cap
  std::vector<long> visits_b;   // shape of qb
  std::vector<long> visits_a;   // shape of qa
  std::vector<long> visits_mu;  // shape of mu

  void init(const SourceParams& p, double initial_mu, double resolved_mu_max) {
    buffer = p.buffer;
    sampling_cost = p.sampling_cost;
    age_cap = p.age_cap;
    num_channels = p.num_channels();
    mu_max = resolved_mu_max;
    const std::size_t n = static_cast<std::size_t>(buffer + 1) * age_cap;
    qb.assign(n * 2, 0.0);
    qa.assign(n * num_channels * 2, 0.0);
    mu.assign(n, initial_mu);
    visits_b.assign(n * 2, 0);
    visits_a.assign(n * num_channels * 2, 0);
    visits_mu.assign(n, 0);
  }

  std::size_t sidx(int E, int K) const {
    return static_cast<std::size_t>(E) * age_cap + (K - 1);
  }
  double& qb_at(int E, int K, int b) { return qb[sidx(E, K) * 2 + b]; }
  double qb_at(int E, int K, int b) const { return qb[sidx(E, K) * 2 + b]; }
  double& qa_at(int E, int K, int j, int a) {
    return qa[(sidx(E, K) * num_channels + j) * 2 + a];
  }
  double qa_at(int E, int K, int j, int a) const {
    return qa[(sidx(E, K) * num_channels + j) * 2 + a];
  }
  double& mu_at(int E, int K) { return mu[sidx(E, K)]; }
  double mu_at(int E, int K) const { return mu[sidx(E, K)]; }

  // min over the probe actions feasible in (E,K).
  double min_qb(int E, int K) const {
    const double q0 = qb_at(E, K, 0);
    return E >= sampling_cost ? std::min(q0, qb_at(E, K, 1)) : q0;
  }
};

// Q-WITS3 learner: asynchronous two-timescale iterates over every source's
// tables, fed one observed system transition per slot.
class LearnerState {
public:
  LearnerState() = default;

  LearnerState(std::vector<SourceParams> params, LearnerOptions options)
      : params_(std::move(params)), options_(options) {
    options_.validate();
    tables_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const double mu_max = options_.mu_max > 0.0
                                ? options_.mu_max
                                : params_[i].age_cap / (1.0 - options_.alpha);
      tables_[i].init(params_[i], options_.initial_mu, mu_max);
    }
  }

  // Epsilon-greedy slot decision: explore a uniformly random feasible source,
  // otherwise probe the highest current index estimate (ties to lowest id).
  // The sampling rule is epsilon-greedy on the intermediate Q-values, with
  // ties preferring to idle.
  PolicyDecision act(const SystemState& system, Rng& rng) {
    PolicyDecision d;
    std::vector<int> feasible;
    for (std::size_t i = 0; i < system.size(); ++i)
      if (system[i].energy >= params_[i].sampling_cost) feasible.push_back(static_cast<int>(i));
    if (feasible.empty()) return d;

    if (options_.epsilon > 0.0 && rng.bernoulli(options_.epsilon)) {
      d.probe_target = feasible[rng.uniform_int(static_cast<int>(feasible.size()))];
    } else {
      int best = feasible.front();
      double best_mu = tables_[best].mu_at(system[best].energy, system[best].age);
      for (std::size_t k = 1; k < feasible.size(); ++k) {
        const int i = feasible[k];
        const double m = tables_[i].mu_at(system[i].energy, system[i].age);
        if (m > best_mu) {
          best = i;
          best_mu = m;
        }
      }
      d.probe_target = best;
    }

    const int i = *d.probe_target;
    const auto& tab = tables_[i];
    const SourceState s = system[i];
    d.sample_rule.resize(params_[i].num_channels());
    // The exploration coin is drawn once per slot; the revealed channel is
    // independent of it, so pre-materializing the rule is distribution-exact.
    if (options_.epsilon > 0.0 && rng.bernoulli(options_.epsilon)) {
      const std::uint8_t a = rng.bernoulli(0.5) ? 1 : 0;
      std::fill(d.sample_rule.begin(), d.sample_rule.end(), a);
    } else {
      for (int j = 0; j < params_[i].num_channels(); ++j)
        d.sample_rule[j] = tab.qa_at(s.energy, s.age, j, 1) < tab.qa_at(s.energy, s.age, j, 0)
                               ? 1
                               : 0;
    }
    return d;
  }

  // Applies one slot's observation. Every non-probed source factually idled,
  // so its (E,K,b=0) pair is updated; the probed source updates its probe
  // pair and the visited intermediate pair. Index estimates move on the slow
  // timescale toward the sign of Qb(.,0) - Qb(.,1) and stay clipped to
  // [0, mu_max]. All targets are evaluated on the pre-update tables.
  void update(const SlotObservation& obs) {
    if (obs.before.size() != params_.size() || obs.after.size() != params_.size())
      throw std::invalid_argument("observation size mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const SourceParams& p = params_[i];
      auto& tab = tables_[i];
      const SourceState s = obs.before[i];
      const SourceState s2 = obs.after[i];
      const bool probed = obs.probed && *obs.probed == static_cast<int>(i);

      check_support(p, s, s2, probed, obs);

      const double alpha = options_.alpha;
      const double qb0 = tab.qb_at(s.energy, s.age, 0);
      const double qb1 = s.energy >= p.sampling_cost ? tab.qb_at(s.energy, s.age, 1) : 0.0;

      if (!probed) {
        const long n = tab.visits_b[tab.sidx(s.energy, s.age) * 2 + 0]++;
        const double d = step_size(options_.schedule, Timescale::fast, n);
        const double target = s.age + alpha * tab.min_qb(s2.energy, s2.age);
        tab.qb_at(s.energy, s.age, 0) += d * (target - qb0);
      } else {
        const int j = obs.channel;
        // Probe pair: fixed point mu + E_j min_a Qa, evaluated at the
        // realized channel. The charge sits inside the step-size bracket.
        {
          const long n = tab.visits_b[tab.sidx(s.energy, s.age) * 2 + 1]++;
          const double d = step_size(options_.schedule, Timescale::fast, n);
          const double min_qa = std::min(tab.qa_at(s.energy, s.age, j, 0),
                                         tab.qa_at(s.energy, s.age, j, 1));
          const double target = tab.mu_at(s.energy, s.age) + min_qa;
          tab.qb_at(s.energy, s.age, 1) += d * (target - qb1);
        }
        // Intermediate pair at the revealed channel.
        const int a = obs.sampled ? 1 : 0;
        const long n = tab.visits_a[(tab.sidx(s.energy, s.age) * tab.num_channels + j) * 2 + a]++;
        const double d = step_size(options_.schedule, Timescale::fast, n);
        const double qa_old = tab.qa_at(s.energy, s.age, j, a);
        double target;
        if (!obs.sampled) {
          target = s.age + alpha * tab.min_qb(s2.energy, s2.age);
        } else if (options_.know_p) {
          const double pj = p.success_probs[j];
          const int aged = capped_age(p, s.age);
          target = s.age * (1.0 - pj) +
                   alpha * (pj * tab.min_qb(s2.energy, 1) +
                            (1.0 - pj) * tab.min_qb(s2.energy, aged));
        } else {
          const double r = obs.success ? 1.0 : 0.0;
          target = s.age * (1.0 - r) + alpha * tab.min_qb(s2.energy, s2.age);
        }
        tab.qa_at(s.energy, s.age, j, a) += d * (target - qa_old);
      }

      if (!options_.freeze_mu && s.energy >= p.sampling_cost) {
        const long n = tab.visits_mu[tab.sidx(s.energy, s.age)]++;
        const double f = step_size(options_.schedule, Timescale::slow, n);
        double& mu = tab.mu_at(s.energy, s.age);
        mu += f * (qb0 - qb1);
        mu = std::clamp(mu, 0.0, tab.mu_max);
      }
    }
    ++slots_seen_;
  }

  const std::vector<SourceParams>& params() const { return params_; }
  const LearnerOptions& options() const { return options_; }
  const SourceLearnTables& tables(std::size_t i) const { return tables_.at(i); }
  SourceLearnTables& tables(std::size_t i) { return tables_.at(i); }
  std::size_t num_sources() const { return tables_.size(); }
  long slots_seen() const { return slots_seen_; }
  void set_slots_seen(long t) { slots_seen_ = t; }

private:
  static void check_support(const SourceParams& p, SourceState s, SourceState s2, bool probed,
                            const SlotObservation& obs) {
    const TransitionDist dist =
        probed ? intermediate_transition_dist(p, {s.energy, s.age, obs.channel}, obs.sampled)
               : idle_transition_dist(p, s);
    if (dist.prob_of(s2) <= 0.0)
      throw std::logic_error("observed transition outside the model support");
  }

  std::vector<SourceParams> params_;
  LearnerOptions options_;
  std::vector<SourceLearnTables> tables_;
  long slots_seen_ = 0;
};

// Policy adapter: act on the live learner's tables and feed every slot back
// into it. This is what the "q-wits3" policy name runs.
class LearningPolicy : public Policy {
public:
  explicit LearningPolicy(LearnerState& learner) : learner_(learner) {}

  std::string name() const override { return "q-wits3"; }
  PolicyDecision decide(const SystemState& system, Rng& rng) override {
    return learner_.act(system, rng);
  }
  void observe(const SlotObservation& obs) override { learner_.update(obs); }

private:
  LearnerState& learner_;
};

struct CurvePoint {
  long t = 0;
  double cum_avg_aoi = 0.0;  // running average over slots 1..t
  double cum_age_sum = 0.0;  // sum of metric ages over slots 1..t, all sources
};

struct TrainResult {
  LearnerState learner;
  std::vector<CurvePoint> curve;
  double final_avg_aoi = 0.0;
};

// Windowed average over (t_from, t_to] computed from two curve points.
inline double window_avg_aoi(const CurvePoint& from, const CurvePoint& to, std::size_t n_sources) {
  return (to.cum_age_sum - from.cum_age_sum) /
         (static_cast<double>(to.t - from.t) * n_sources);
}

// Trains a learner by interleaving act / environment step / update on the
// live system, recording the learning curve. Resumable via snapshots.
class Qwits3Trainer {
public:
  Qwits3Trainer(std::vector<SourceParams> params, const LearnerOptions& options,
                std::uint64_t seed, const InitialConditions& init = {})
      : learner_(params, options), engine_(std::move(params), seed, init), adapter_(learner_) {}

  // Advances until the engine has executed t_end slots in total.
  void run_to(long t_end, std::vector<CurvePoint>* curve = nullptr, long snapshot_every = 0) {
    if (snapshot_every < 1) snapshot_every = std::max<long>(1, t_end / 1000);
    const std::size_t n = engine_.params().size();
    while (engine_.slot() < t_end) {
      const SlotRecord rec = engine_.step(adapter_);
      for (int a : rec.metric_age) cum_age_sum_ += a;
      if (curve && (engine_.slot() % snapshot_every == 0 || engine_.slot() == t_end))
        curve->push_back(point(n));
    }
  }

  CurvePoint point(std::size_t n_sources) const {
    return {engine_.slot(), cum_age_sum_ / (static_cast<double>(engine_.slot()) * n_sources),
            cum_age_sum_};
  }

  LearnerState& learner() { return learner_; }
  const LearnerState& learner() const { return learner_; }
  EpisodeEngine& engine() { return engine_; }
  const EpisodeEngine& engine() const { return engine_; }
  double cum_age_sum() const { return cum_age_sum_; }
  void set_cum_age_sum(double v) { cum_age_sum_ = v; }

private:
  LearnerState learner_;
  EpisodeEngine engine_;
  LearningPolicy adapter_;
  double cum_age_sum_ = 0.0;
};

inline TrainResult qwits3_train(const std::vector<SourceParams>& params, long T,
                                const LearnerOptions& options, std::uint64_t seed,
                                const InitialConditions& init = {}, long snapshot_every = 0) {
  if (T < 1) throw std::invalid_argument("training horizon must be >= 1");
  Qwits3Trainer trainer(params, options, seed, init);
  TrainResult result;
  trainer.run_to(T, &result.curve, snapshot_every);
  result.final_avg_aoi = result.curve.back().cum_avg_aoi;
  result.learner = std::move(trainer.learner());
  return result;
}

}  // namespace aoi
