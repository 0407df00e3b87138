#pragma once

// Synthetic data, ground truth, and the query benchmark.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "henn/core.hpp"
#include "henn/index.hpp"
#include "henn/navgraph.hpp"
#include "henn/random.hpp"

namespace henn {

enum class Distribution : std::uint8_t { Uniform = 0, Exponential = 1 };

struct SyntheticSpec {
  std::size_t n = 1000;
  std::size_t d = 16;
  Distribution dist = Distribution::Exponential;
  double lambda = 1.0;  // rate of the exponential; unused for uniform
  std::uint64_t seed = 1;
  std::size_t n_queries = 100;

  void validate() const {
    if (n < 1) throw std::invalid_argument("SyntheticSpec: n must be >= 1");
    if (d < 1) throw std::invalid_argument("SyntheticSpec: d must be >= 1");
    if (dist == Distribution::Exponential && !(lambda > 0.0 && std::isfinite(lambda)))
      throw std::invalid_argument("SyntheticSpec: lambda must be > 0");
  }
};

struct SyntheticData {
  PointSet points;
  PointSet queries;  // empty (0 rows) when n_queries == 0
};

namespace detail {
inline constexpr std::uint64_t kPointsStream = 0x504f494e;
inline constexpr std::uint64_t kQueriesStream = 0x51554552;
inline constexpr std::uint64_t kBenchStream = 0x42454e43;
inline constexpr std::uint64_t kRhoStream = 0x52484f00;

// U in [0, 1) from the top 53 bits; spelled out so the bytes do not depend on
// the standard library's distribution implementation.
inline double unit_double(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::vector<float> draw_rows(const SyntheticSpec& spec, std::size_t rows, Rng& rng) {
  std::vector<float> out(rows * spec.d);
  for (auto& v : out) {
    const double u = unit_double(rng);
    v = static_cast<float>(spec.dist == Distribution::Uniform ? u : -std::log1p(-u) / spec.lambda);
  }
  return out;
}
}  // namespace detail

/// Points and queries drawn i.i.d. per coordinate from the same distribution,
/// on separate streams of spec.seed.
inline SyntheticData gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng prng = make_rng(spec.seed, {detail::kPointsStream});
  Rng qrng = make_rng(spec.seed, {detail::kQueriesStream});
  SyntheticData out{PointSet(spec.n, spec.d, detail::draw_rows(spec, spec.n, prng)), PointSet::empty(spec.d)};
  if (spec.n_queries > 0)
    out.queries = PointSet(spec.n_queries, spec.d, detail::draw_rows(spec, spec.n_queries, qrng));
  return out;
}

/// Exact k nearest neighbour ids per query, ordered by (distance, id).
/// Cosine inputs are normalized first, matching what the index does.
inline std::vector<std::vector<Id>> compute_ground_truth(const PointSet& points, const PointSet& queries, std::size_t k,
                                                         const Metric& metric, unsigned threads = 1) {
  if (k < 1 || k > points.size()) throw std::invalid_argument("compute_ground_truth: need 1 <= k <= n");
  if (queries.size() > 0 && queries.dim() != points.dim())
    throw std::invalid_argument("compute_ground_truth: dimension mismatch");
  PointSet ps = points;
  PointSet qs = queries;
  if (metric.kind == MetricKind::Cosine) {
    normalize_rows(ps);
    if (qs.size() > 0) normalize_rows(qs);
  }
  std::vector<std::vector<Id>> out(queries.size());
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < qs.size(); i += step) {
      for (const auto& nb : brute_force_knn(ps, qs[i], k, metric)) out[i].push_back(nb.id);
    }
  };
  threads = std::max(1u, threads);
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  }
  return out;
}

/// |returned[0..k) ∩ truth[0..k)| / k; shorter lists just contribute fewer hits.
inline double recall_at_k(std::span<const Id> returned, std::span<const Id> truth, std::size_t k) {
  if (k < 1) throw std::invalid_argument("recall_at_k: k must be >= 1");
  const std::size_t rk = std::min(k, returned.size());
  std::vector<Id> want(truth.begin(), truth.begin() + static_cast<std::ptrdiff_t>(std::min(k, truth.size())));
  std::sort(want.begin(), want.end());
  std::vector<Id> got(returned.begin(), returned.begin() + static_cast<std::ptrdiff_t>(rk));
  std::sort(got.begin(), got.end());
  got.erase(std::unique(got.begin(), got.end()), got.end());
  std::size_t hits = 0;
  for (Id id : got) hits += std::binary_search(want.begin(), want.end(), id);
  return static_cast<double>(hits) / static_cast<double>(k);
}

struct BenchRow {
  std::string method;  // "henn" or "baseline"
  std::string graph;
  std::size_t n = 0;
  std::size_t d = 0;
  double lambda = 0.0;  // 0 for uniform or file data
  std::size_t ef = 0;
  std::size_t k = 0;
  double recall = 0.0;
  double qps = 0.0;
  double worst_case_ms = 0.0;  // slowest rep, whole query loop
  double mean_query_ms = 0.0;  // average per-query latency over all reps
  double mean_hops = 0.0;      // per-rep mean hops, maxed over reps
  std::size_t max_hops = 0;
  double rho_delta = std::numeric_limits<double>::quiet_NaN();
  double build_s = 0.0;
  std::size_t index_bytes = 0;
};

/// Runs every query `reps` times through query_knn. Rep r draws its start
/// nodes from stream (seed, bench, r), so all fields except the wall-time ones
/// are reproducible. Queries run one at a time on the calling thread.
inline BenchRow run_bench(const HennIndex& index, const PointSet& queries, const std::vector<std::vector<Id>>& truth,
                          std::size_t k, std::size_t ef, std::size_t reps, std::uint64_t seed = 1) {
  if (reps < 1) throw std::invalid_argument("run_bench: reps must be >= 1");
  if (ef < k) throw std::invalid_argument("run_bench: ef must be >= k");
  if (queries.size() == 0) throw std::invalid_argument("run_bench: no queries");
  if (truth.size() != queries.size()) throw std::invalid_argument("run_bench: truth/query count mismatch");
  BenchRow row;
  row.method = layer_mode_name(index.params().mode);
  row.graph = graph_kind_name(index.params().graph.kind);
  row.n = index.size();
  row.d = index.dim();
  row.ef = ef;
  row.k = k;
  row.build_s = index.stats().build_seconds;
  row.index_bytes = index.serialize_bytes().size();

  const std::size_t nq = queries.size();
  std::vector<std::vector<Neighbor>> results(nq);
  std::vector<QueryStats> qstats(nq);
  double recall_sum = 0.0, best_seconds = std::numeric_limits<double>::infinity(), total_seconds = 0.0;
  for (std::size_t rep = 0; rep < reps; ++rep) {
    Rng rng = make_rng(seed, {detail::kBenchStream, rep});
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < nq; ++i) results[i] = index.query_knn(queries[i], k, ef, rng, &qstats[i]);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    best_seconds = std::min(best_seconds, secs);
    total_seconds += secs;
    row.worst_case_ms = std::max(row.worst_case_ms, secs * 1e3);

    double hop_sum = 0.0;
    for (std::size_t i = 0; i < nq; ++i) {
      std::vector<Id> ids;
      for (const auto& nb : results[i]) ids.push_back(nb.id);
      recall_sum += recall_at_k(ids, truth[i], k);
      hop_sum += static_cast<double>(qstats[i].total_hops);
      row.max_hops = std::max(row.max_hops, qstats[i].total_hops);
    }
    row.mean_hops = std::max(row.mean_hops, hop_sum / static_cast<double>(nq));
  }
  row.recall = recall_sum / static_cast<double>(nq * reps);
  row.qps = best_seconds > 0.0 ? static_cast<double>(nq) / best_seconds : std::numeric_limits<double>::infinity();
  row.mean_query_ms = total_seconds * 1e3 / static_cast<double>(nq * reps);
  return row;
}

/// Recall bound of the index's layer-0 graph, estimated from the first
/// `max_queries` queries with `n_starts` greedy runs each.
inline RecallBoundEstimate estimate_rho(const HennIndex& index, const PointSet& queries, double delta = 0.9,
                                        std::size_t max_queries = 50, std::size_t n_starts = 20,
                                        std::uint64_t seed = 1) {
  if (queries.size() == 0) throw std::invalid_argument("estimate_rho: no queries");
  const std::size_t nq = std::min(max_queries, queries.size());
  PointSet qs(nq, queries.dim(),
              std::vector<float>(queries.data().begin(), queries.data().begin() + static_cast<std::ptrdiff_t>(nq * queries.dim())));
  if (index.metric().kind == MetricKind::Cosine) normalize_rows(qs);
  Rng rng = make_rng(seed, {detail::kRhoStream});
  return measure_recall_bound(index.layers()[0].graph, index.points(), qs, delta, n_starts, index.metric(), rng);
}

struct TrendFit {
  double polylog_a = 0.0, polylog_b = 0.0, polylog_rmse = 0.0;  // y = a * log2(x)^2 + b
  double linear_a = 0.0, linear_b = 0.0, linear_rmse = 0.0;     // y = a * x + b
};

namespace detail {
// Ordinary least squares for y = a*t + b; returns {a, b, rmse}.
inline std::array<double, 3> ols(std::span<const double> t, std::span<const double> y) {
  const auto n = static_cast<double>(t.size());
  double mt = 0.0, my = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    mt += t[i];
    my += y[i];
  }
  mt /= n;
  my /= n;
  double stt = 0.0, sty = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    stt += (t[i] - mt) * (t[i] - mt);
    sty += (t[i] - mt) * (y[i] - my);
  }
  const double a = stt > 0.0 ? sty / stt : 0.0;
  const double b = my - a * mt;
  double sse = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) sse += (y[i] - (a * t[i] + b)) * (y[i] - (a * t[i] + b));
  return {a, b, std::sqrt(sse / n)};
}
}  // namespace detail

/// Least-squares fits of y against log2(x)^2 and against x.
inline TrendFit fit_trends(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("fit_trends: xs and ys differ in length");
  if (xs.size() < 4) throw std::invalid_argument("fit_trends: need at least 4 points");
  std::vector<double> l2(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0)) throw std::invalid_argument("fit_trends: xs must be positive");
    l2[i] = std::log2(xs[i]) * std::log2(xs[i]);
  }
  const auto p = detail::ols(l2, ys);
  const auto l = detail::ols(xs, ys);
  return {p[0], p[1], p[2], l[0], l[1], l[2]};
}

inline const char* csv_header() {
  return "method,graph,n,d,lambda,ef,k,recall,qps,worst_case_ms,mean_hops,max_hops,rho_delta,build_s,index_bytes";
}

inline std::string csv_row(const BenchRow& r) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << r.method << ',' << r.graph << ',' << r.n << ',' << r.d << ',' << r.lambda << ',' << r.ef << ',' << r.k << ','
     << r.recall << ',' << r.qps << ',' << r.worst_case_ms << ',' << r.mean_hops << ',' << r.max_hops << ',';
  if (!std::isnan(r.rho_delta)) os << r.rho_delta;
  os << ',' << r.build_s << ',' << r.index_bytes;
  return os.str();
}

}  // namespace henn
