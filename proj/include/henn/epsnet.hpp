#pragma once

// Ring ranges and epsilon-net construction.
//
// A ring <c, r1, r2> contains x iff r1 <= dist(x, c) <= r2. A subset A of a
// base set B is an epsilon-net when it intersects every ring holding at least
// ceil(eps * |B|) points of B. Verifying that over all rings is infeasible, so
// a net is checked against a battery of randomly drawn heavy rings.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "henn/core.hpp"
#include "henn/random.hpp"

namespace henn {

struct EpsNetParams {
  double c0 = 1.0;             // constant of the epsilon schedule
  int m = 4;                   // exponential decay: each layer ~2^m times smaller
  double phi = 0.5;            // per-trial failure probability
  std::size_t r_ranges = 64;   // rings per verification battery
  std::size_t max_trials = 32; // Las-Vegas retry cap
  unsigned threads = 1;        // concurrent trials

  void validate() const {
    if (!(c0 > 0.0)) throw std::invalid_argument("EpsNetParams: c0 must be > 0");
    if (m < 1 || m > 30) throw std::invalid_argument("EpsNetParams: m must be in [1, 30]");
    if (!(phi > 0.0 && phi < 1.0)) throw std::invalid_argument("EpsNetParams: phi must be in (0, 1)");
    if (r_ranges < 1) throw std::invalid_argument("EpsNetParams: r_ranges must be >= 1");
    if (max_trials < 1) throw std::invalid_argument("EpsNetParams: max_trials must be >= 1");
    if (threads < 1) throw std::invalid_argument("EpsNetParams: threads must be >= 1");
  }
};

struct RingRange {
  std::vector<float> center;
  double r1 = 0.0;
  double r2 = 0.0;
  std::size_t weight = 0;  // base points inside, at construction time
};

inline bool ring_contains(const RingRange& ring, std::span<const float> x, const Metric& metric) {
  const double dd = distance(metric, ring.center, x);
  return ring.r1 <= dd && dd <= ring.r2;
}

struct RangeBattery {
  std::vector<RingRange> rings;
  std::size_t threshold = 0;  // minimum weight that makes a ring heavy
};

class ConstructionFailure : public std::runtime_error {
 public:
  explicit ConstructionFailure(std::size_t trials)
      : std::runtime_error("epsilon-net construction failed after " + std::to_string(trials) + " trials"),
        trials_(trials) {}
  std::size_t trials() const { return trials_; }

 private:
  std::size_t trials_;
};

/// ceil(|base| / 2^m)
inline std::size_t layer_target_size(std::size_t base_size, int m) {
  const std::size_t div = std::size_t{1} << m;
  return (base_size + div - 1) / div;
}

/// eps(s) = c0 * d * log2(s) / s * 2^m, clamped to (0, 1].
inline double epsilon_of(std::size_t s, std::size_t d, const EpsNetParams& params) {
  if (s < 2) throw std::invalid_argument("epsilon_of: layer size must be >= 2");
  if (d < 1) throw std::invalid_argument("epsilon_of: dimension must be >= 1");
  const double raw = params.c0 * static_cast<double>(d) * std::log2(static_cast<double>(s)) /
                     static_cast<double>(s) * std::ldexp(1.0, params.m);
  return std::min(raw, 1.0);
}

/// Random-sample size that yields an eps-net with probability >= 1 - phi for a
/// range space of the given VC dimension:
///   ceil(1/eps * log2(1/phi) + vc/eps * log2(vc/eps)).
inline std::size_t sample_size(double eps, double vc_dim, double phi) {
  if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("sample_size: eps must be in (0, 1]");
  if (!(phi > 0.0 && phi < 1.0)) throw std::invalid_argument("sample_size: phi must be in (0, 1)");
  if (!(vc_dim >= 1.0)) throw std::invalid_argument("sample_size: vc_dim must be >= 1");
  const double s = std::log2(1.0 / phi) / eps + vc_dim / eps * std::log2(vc_dim / eps);
  return static_cast<std::size_t>(std::ceil(s - 1e-9));
}

/// Smallest point count that makes a ring heavy for a base of the given size.
inline std::size_t heavy_threshold(double eps, std::size_t base_size) {
  const double w = std::ceil(eps * static_cast<double>(base_size) - 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(w));
}

/// Draws r_ranges heavy rings over `base`. Each ring is centred at a uniform
/// base point and spans a uniformly placed window of heavy_threshold
/// consecutive distance ranks, so it holds at least that many base points
/// (more when distances tie at the window ends).
inline RangeBattery sample_heavy_rings(const PointSet& ps, std::span<const Id> base, double eps,
                                       std::size_t r_ranges, const Metric& metric, Rng& rng) {
  if (base.empty()) throw std::invalid_argument("sample_heavy_rings: empty base");
  if (!(eps > 0.0) || eps * static_cast<double>(base.size()) > static_cast<double>(base.size()) + 1e-9)
    throw std::invalid_argument("sample_heavy_rings: eps must be in (0, 1]");
  RangeBattery battery;
  battery.threshold = heavy_threshold(eps, base.size());
  const std::size_t w = battery.threshold;
  battery.rings.reserve(r_ranges);
  std::vector<double> dist(base.size());
  std::vector<double> work(base.size());
  for (std::size_t r = 0; r < r_ranges; ++r) {
    const Id c = base[uniform_index(rng, base.size())];
    const auto center = ps[c];
    for (std::size_t i = 0; i < base.size(); ++i) dist[i] = distance(metric, ps[base[i]], center);
    const std::size_t j = uniform_index(rng, base.size() - w + 1);
    work = dist;
    auto lo = work.begin() + static_cast<std::ptrdiff_t>(j);
    std::nth_element(work.begin(), lo, work.end());
    const double r1 = *lo;
    auto hi = work.begin() + static_cast<std::ptrdiff_t>(j + w - 1);
    std::nth_element(lo, hi, work.end());
    const double r2 = *hi;
    std::size_t weight = 0;
    for (double x : dist) weight += (r1 <= x && x <= r2);
    battery.rings.push_back({std::vector<float>(center.begin(), center.end()), r1, r2, weight});
  }
  return battery;
}

/// True iff every ring in the battery contains at least one candidate point.
inline bool is_eps_net(const PointSet& ps, std::span<const Id> candidate, const RangeBattery& battery,
                       const Metric& metric) {
  for (const auto& ring : battery.rings) {
    bool hit = false;
    for (Id id : candidate) {
      if (ring_contains(ring, ps[id], metric)) {
        hit = true;
        break;
      }
    }
    if (!hit) return false;
  }
  return true;
}

/// `target` distinct members of `base`, drawn uniformly with replacement and
/// deduplicated, topping up with fresh draws until the count is reached.
/// Returned sorted ascending.
inline std::vector<Id> uniform_layer_sample(std::span<const Id> base, std::size_t target, Rng& rng) {
  if (target > base.size()) throw std::invalid_argument("uniform_layer_sample: target exceeds base size");
  std::vector<char> taken(base.size(), 0);
  std::vector<Id> out;
  out.reserve(target);
  while (out.size() < target) {
    const std::size_t pos = uniform_index(rng, base.size());
    if (!taken[pos]) {
      taken[pos] = 1;
      out.push_back(base[pos]);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct EpsNetResult {
  std::vector<Id> ids;
  std::size_t trials = 0;
};

namespace detail {
inline constexpr std::uint64_t kSampleStream = 0x53414d50;   // per-trial sample draws
inline constexpr std::uint64_t kBatteryStream = 0x42415454;  // per-trial verification rings
}  // namespace detail

/// Las-Vegas sampling construction. The sample size defaults to
/// ceil(|base| / 2^m); eps only sets how heavy a verification ring must be.
/// Trial t draws its sample from stream
/// (seed, sample, t) and its battery from (seed, battery, t), so trial 0's
/// sample is exactly what a plain uniform layer sample with the same seed
/// would produce. With threads > 1 trials run in batches; the lowest
/// accepted trial index wins.
inline EpsNetResult build_eps_net_sampling(const PointSet& ps, std::span<const Id> base, double eps,
                                           const EpsNetParams& params, const Metric& metric,
                                           std::uint64_t seed,
                                           std::optional<std::size_t> target_size = std::nullopt) {
  params.validate();
  if (base.empty()) throw std::invalid_argument("build_eps_net_sampling: empty base");
  if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("build_eps_net_sampling: eps must be in (0, 1]");
  const std::size_t target =
      std::min(base.size(), target_size.value_or(layer_target_size(base.size(), params.m)));

  auto run_trial = [&](std::size_t t) -> std::optional<std::vector<Id>> {
    Rng sample_rng = make_rng(seed, {detail::kSampleStream, t});
    Rng battery_rng = make_rng(seed, {detail::kBatteryStream, t});
    auto cand = uniform_layer_sample(base, target, sample_rng);
    const auto battery = sample_heavy_rings(ps, base, eps, params.r_ranges, metric, battery_rng);
    if (is_eps_net(ps, cand, battery, metric)) return cand;
    return std::nullopt;
  };

  const std::size_t batch = std::max<std::size_t>(1, params.threads);
  for (std::size_t first = 0; first < params.max_trials; first += batch) {
    const std::size_t last = std::min(params.max_trials, first + batch);
    std::vector<std::optional<std::vector<Id>>> results(last - first);
    if (last - first == 1) {
      results[0] = run_trial(first);
    } else {
      std::vector<std::jthread> workers;
      for (std::size_t t = first; t < last; ++t)
        workers.emplace_back([&, t] { results[t - first] = run_trial(t); });
    }
    for (std::size_t i = 0; i < results.size(); ++i)
      if (results[i]) return {std::move(*results[i]), first + i + 1};
  }
  throw ConstructionFailure(params.max_trials);
}

/// Discrepancy-style halving: m rounds of random perfect matching, keeping a
/// uniformly chosen endpoint of each pair (an odd survivor passes through).
/// Output size is exactly ceil(|base| / 2^m), sorted ascending.
inline std::vector<Id> build_eps_net_halving(std::span<const Id> base, int m, Rng& rng) {
  if (m < 0 || m > 30) throw std::invalid_argument("build_eps_net_halving: m out of range");
  if (base.size() < (std::size_t{1} << m))
    throw std::invalid_argument("build_eps_net_halving: |base| must be >= 2^m");
  std::vector<Id> cur(base.begin(), base.end());
  std::bernoulli_distribution coin(0.5);
  for (int round = 0; round < m; ++round) {
    std::shuffle(cur.begin(), cur.end(), rng);
    std::vector<Id> next;
    next.reserve((cur.size() + 1) / 2);
    std::size_t i = 0;
    for (; i + 1 < cur.size(); i += 2) next.push_back(coin(rng) ? cur[i] : cur[i + 1]);
    if (i < cur.size()) next.push_back(cur[i]);
    cur = std::move(next);
  }
  std::sort(cur.begin(), cur.end());
  return cur;
}

}  // namespace henn
