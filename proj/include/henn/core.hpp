#pragma once

// Point storage, distance metrics and the brute-force k-NN oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace henn {

using Id = std::uint32_t;

enum class MetricKind : std::uint8_t { L2 = 0, Lp = 1, Cosine = 2 };

/// Distance function tag. For Cosine the distance is 1 - cos(a, b); stored
/// points are expected to be unit length (see normalize_rows).
struct Metric {
  MetricKind kind = MetricKind::L2;
  double p = 2.0;

  static Metric l2() { return {MetricKind::L2, 2.0}; }
  static Metric lp(double p) {
    if (!(p > 0.0) || !std::isfinite(p))
      throw std::invalid_argument("Lp metric requires p > 0");
    return {MetricKind::Lp, p};
  }
  static Metric cosine() { return {MetricKind::Cosine, 2.0}; }

  std::string name() const {
    switch (kind) {
      case MetricKind::L2: return "l2";
      case MetricKind::Lp: return "lp:" + std::to_string(p);
      case MetricKind::Cosine: return "cosine";
    }
    return "?";
  }

  bool operator==(const Metric&) const = default;
};

namespace detail {

inline double l2(const float* a, const float* b, std::size_t d) {
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

inline double lp(const float* a, const float* b, std::size_t d, double p) {
  if (p == 1.0) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      acc += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    return acc;
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    acc += std::pow(std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])), p);
  return std::pow(acc, 1.0 / p);
}

// Computed against both norms so that dist(a, a) is zero to rounding even
// when float storage leaves |a| slightly off 1.
inline double cosine(const float* a, const float* b, std::size_t d) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double x = a[i], y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) return 1.0;
  const double c = dot / std::sqrt(na * nb);
  return std::max(0.0, 1.0 - c);
}

}  // namespace detail

/// Distance between two points, computed in double precision.
inline double distance(const Metric& metric, std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("distance: dimension mismatch (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  switch (metric.kind) {
    case MetricKind::L2: return detail::l2(a.data(), b.data(), a.size());
    case MetricKind::Lp: return detail::lp(a.data(), b.data(), a.size(), metric.p);
    case MetricKind::Cosine: return detail::cosine(a.data(), b.data(), a.size());
  }
  return 0.0;
}

/// Dense row-major n x d matrix of finite float coordinates. Row i is point id i.
class PointSet {
 public:
  PointSet() = default;

  PointSet(std::size_t n, std::size_t d, std::vector<float> data) : n_(n), d_(d), data_(std::move(data)) {
    if (n_ == 0 || d_ == 0) throw std::invalid_argument("PointSet requires n >= 1 and d >= 1");
    if (data_.size() != n_ * d_) throw std::invalid_argument("PointSet: data size != n*d");
    for (std::size_t i = 0; i < data_.size(); ++i)
      if (!std::isfinite(data_[i]))
        throw std::invalid_argument("PointSet: non-finite coordinate at row " + std::to_string(i / d_));
  }

  /// An empty, growable set of fixed dimension. Used by dynamic indexes.
  static PointSet empty(std::size_t d) {
    if (d == 0) throw std::invalid_argument("PointSet requires d >= 1");
    PointSet ps;
    ps.d_ = d;
    return ps;
  }

  std::size_t size() const { return n_; }
  std::size_t dim() const { return d_; }
  bool empty() const { return n_ == 0; }

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * d_, d_}; }
  std::span<const float> operator[](std::size_t i) const { return row(i); }
  const std::vector<float>& data() const { return data_; }

  /// Appends a row and returns its id.
  Id append(std::span<const float> x) {
    if (x.size() != d_) throw std::invalid_argument("PointSet::append: dimension mismatch");
    for (float v : x)
      if (!std::isfinite(v)) throw std::invalid_argument("PointSet::append: non-finite coordinate");
    data_.insert(data_.end(), x.begin(), x.end());
    return static_cast<Id>(n_++);
  }

  bool operator==(const PointSet&) const = default;

  friend void normalize_rows(PointSet& ps);

 private:
  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::vector<float> data_;
};

/// Scales each row to unit L2 length. Zero rows are left untouched.
inline void normalize_rows(PointSet& ps) {
  for (std::size_t i = 0; i < ps.n_; ++i) {
    float* r = ps.data_.data() + i * ps.d_;
    double norm = 0.0;
    for (std::size_t j = 0; j < ps.d_; ++j) norm += static_cast<double>(r[j]) * r[j];
    if (norm == 0.0) continue;
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < ps.d_; ++j) r[j] = static_cast<float>(r[j] / norm);
  }
}

inline std::vector<float> normalized(std::span<const float> x) {
  std::vector<float> out(x.begin(), x.end());
  double norm = 0.0;
  for (float v : out) norm += static_cast<double>(v) * v;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (float& v : out) v = static_cast<float>(v / norm);
  }
  return out;
}

struct Neighbor {
  Id id = 0;
  double dist = 0.0;

  bool operator==(const Neighbor&) const = default;
};

/// Ascending distance, ties by ascending id.
inline bool closer(const Neighbor& a, const Neighbor& b) {
  return a.dist < b.dist || (a.dist == b.dist && a.id < b.id);
}

/// One ground-truth row: exact k nearest ids, sorted by (distance, id).
using GroundTruth = std::vector<Neighbor>;

/// Exact k nearest neighbours of q among `ids` by full scan.
inline GroundTruth brute_force_knn(const PointSet& ps, std::span<const Id> ids, std::span<const float> q,
                                   std::size_t k, const Metric& metric) {
  if (k < 1 || k > ids.size())
    throw std::invalid_argument("brute_force_knn: need 1 <= k <= n (k=" + std::to_string(k) +
                                ", n=" + std::to_string(ids.size()) + ")");
  if (q.size() != ps.dim()) throw std::invalid_argument("brute_force_knn: dimension mismatch");
  std::vector<Neighbor> all;
  all.reserve(ids.size());
  for (Id id : ids) all.push_back({id, distance(metric, ps[id], q)});
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), closer);
  all.resize(k);
  return all;
}

inline GroundTruth brute_force_knn(const PointSet& ps, std::span<const float> q, std::size_t k,
                                   const Metric& metric) {
  std::vector<Id> ids(ps.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<Id>(i);
  return brute_force_knn(ps, ids, q, k, metric);
}

inline std::vector<Id> all_ids(std::size_t n) {
  std::vector<Id> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<Id>(i);
  return ids;
}

}  // namespace henn
