#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace aoi {

// Derives independent substream seeds from a master seed so that adding a
// source or purpose never perturbs the other streams.
enum class StreamPurpose : std::uint64_t {
  arrival = 1,
  channel = 2,
  transmission = 3,
  policy = 4,
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace detail

inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t source_id,
                                    StreamPurpose purpose) {
  return detail::splitmix64(detail::splitmix64(master ^ (source_id * 0x9e3779b97f4a7c15ull)) ^
                            static_cast<std::uint64_t>(purpose));
}

// mt19937_64 with hand-rolled draw functions. The standard distribution
// objects are implementation-defined, so draws go through fixed bit
// arithmetic to keep traces reproducible across toolchains.
class Rng {
public:
  Rng() : engine_(0) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() {  // [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n).
  int uniform_int(int n) { return static_cast<int>(uniform() * n); }

  // Index drawn from an (unnormalized is fine) weight vector.
  int categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double x = uniform() * total;
    for (std::size_t j = 0; j + 1 < weights.size(); ++j) {
      if (x < weights[j]) return static_cast<int>(j);
      x -= weights[j];
    }
    return static_cast<int>(weights.size()) - 1;
  }

  std::string save_state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void restore_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    if (!is) throw std::runtime_error("bad rng state string");
  }

private:
  std::mt19937_64 engine_;
};

}  // namespace aoi
