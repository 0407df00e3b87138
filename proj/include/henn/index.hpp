#pragma once

// The layered index.
//
// Layer 0 holds every live point. Layer i >= 1 is a sample of
// ceil(|L_{i-1}| / 2^m) points, either verified as an epsilon-net of its base
// (LayerMode::EpsNet) or taken as drawn (LayerMode::Random, the HNSW-style
// baseline). Both modes share the sample streams, graph builder and search
// code, so they differ only in whether a sample may be rejected.
//
// Queries start at a random node of the top layer and run greedy search
// layer by layer, carrying the result down by global id.
//
// Thread safety: build and the dynamic operations need exclusive access;
// const member functions may run concurrently.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "henn/core.hpp"
#include "henn/epsnet.hpp"
#include "henn/io.hpp"
#include "henn/navgraph.hpp"
#include "henn/random.hpp"

namespace henn {

enum class LayerMode : std::uint8_t { EpsNet = 0, Random = 1 };

inline const char* layer_mode_name(LayerMode m) { return m == LayerMode::EpsNet ? "henn" : "baseline"; }

struct HennParams {
  EpsNetParams eps;             // eps.m is the exponential decay
  std::size_t max_layers = 0;   // upper layers; 0 means floor(log2(n) / m)
  GraphParams graph;
  std::size_t ef_search = 50;
  LayerMode mode = LayerMode::EpsNet;
  bool nested = true;           // sample L_i from L_{i-1} (else from L_0)
  std::uint64_t seed = 42;
  double rebuild_beta = 0.75;   // delete-triggered resample threshold

  int m() const { return eps.m; }

  void validate() const {
    eps.validate();
    if (!(rebuild_beta > 0.0 && rebuild_beta <= 1.0)) throw std::invalid_argument("HennParams: rebuild_beta must be in (0, 1]");
    if (ef_search < 1) throw std::invalid_argument("HennParams: ef_search must be >= 1");
  }

  bool operator==(const HennParams& o) const {
    return eps.c0 == o.eps.c0 && eps.m == o.eps.m && eps.phi == o.eps.phi && eps.r_ranges == o.eps.r_ranges &&
           eps.max_trials == o.eps.max_trials && eps.threads == o.eps.threads && max_layers == o.max_layers &&
           graph == o.graph && ef_search == o.ef_search && mode == o.mode && nested == o.nested && seed == o.seed &&
           rebuild_beta == o.rebuild_beta;
  }
};

struct LayerStats {
  std::size_t trials = 0;  // sampling trials used (0 for layer 0 and baseline layers)
  bool fallback = false;   // sampling gave up and halving produced the layer
  double eps = 1.0;        // construction epsilon

  bool operator==(const LayerStats&) const = default;
};

struct BuildStats {
  std::vector<LayerStats> layers;
  double build_seconds = 0.0;
  std::uint64_t rebuilds = 0;
  std::uint64_t inserts = 0;
  std::uint64_t deletes = 0;
  std::uint64_t capped_promotions = 0;  // promotions refused by the decay cap

  bool operator==(const BuildStats&) const = default;
};

struct Layer {
  std::vector<Id> ids;  // sorted ascending
  NavGraph graph;
};

struct QueryStats {
  std::vector<std::size_t> layer_hops;  // indexed by layer number
  std::size_t total_hops = 0;
  std::size_t dist_evals = 0;
  double seconds = 0.0;
};

class NotFound : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class UnsupportedOperation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// floor(log2(n) / m): the largest upper-layer count for n points.
inline std::size_t auto_max_layers(std::size_t n, int m) {
  if (n < 2) return 0;
  const auto lg = static_cast<std::size_t>(std::bit_width(n) - 1);
  return lg / static_cast<std::size_t>(m);
}

namespace detail {
inline constexpr std::uint64_t kLayerStream = 0x4c415952;
inline constexpr std::uint64_t kGraphStream = 0x47524150;
inline constexpr std::uint64_t kFallbackStream = 0x46414c4c;
inline constexpr std::uint64_t kEvictStream = 0x45564943;
inline constexpr char kIndexMagic[8] = {'H', 'E', 'N', 'N', 'I', 'D', 'X', '1'};
inline constexpr std::uint32_t kIndexVersion = 1;
}  // namespace detail

class HennIndex {
 public:
  /// Builds the full hierarchy over `points`.
  static HennIndex build(PointSet points, const HennParams& params, const Metric& metric) {
    params.validate();
    if (points.empty()) throw std::invalid_argument("HennIndex::build: empty point set");
    HennIndex idx(std::move(points), params, metric);
    const auto t0 = std::chrono::steady_clock::now();
    idx.layers_.push_back({all_ids(idx.points_.size()), {}});
    idx.stats_.layers.push_back({});
    idx.build_graph_for(0);
    idx.build_layers_from(1);
    idx.stats_.build_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return idx;
  }

  /// An index with no points, ready for insert().
  static HennIndex empty(std::size_t dim, const HennParams& params, const Metric& metric) {
    params.validate();
    HennIndex idx(PointSet::empty(dim), params, metric);
    idx.layers_.push_back({{}, NavGraph(params.graph)});
    idx.stats_.layers.push_back({});
    return idx;
  }

  const PointSet& points() const { return points_; }
  const HennParams& params() const { return params_; }
  const Metric& metric() const { return metric_; }
  const BuildStats& stats() const { return stats_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t size() const { return layers_.front().ids.size(); }
  std::size_t dim() const { return points_.dim(); }
  bool contains(Id id) const { return std::binary_search(layers_[0].ids.begin(), layers_[0].ids.end(), id); }

  std::vector<std::size_t> layer_sizes() const {
    std::vector<std::size_t> s;
    for (const auto& l : layers_) s.push_back(l.ids.size());
    return s;
  }

  /// Approximate nearest neighbour by layered greedy descent.
  std::pair<Id, QueryStats> query(std::span<const float> q_in, Rng& rng) const {
    const auto t0 = std::chrono::steady_clock::now();
    const auto qbuf = prepare_query(q_in);
    QueryStats st;
    st.layer_hops.assign(layers_.size(), 0);
    Id cur = descend(qbuf, 0, rng, st);
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {cur, st};
  }

  /// k nearest neighbours: greedy descent to layer 1, then a beam of width ef
  /// on layer 0 seeded at the descent result.
  std::vector<Neighbor> query_knn(std::span<const float> q_in, std::size_t k, std::size_t ef, Rng& rng,
                                  QueryStats* stats_out = nullptr) const {
    if (ef < k) throw std::invalid_argument("query_knn: ef must be >= k");
    if (k < 1 || k > size()) throw std::invalid_argument("query_knn: need 1 <= k <= n");
    const auto t0 = std::chrono::steady_clock::now();
    const auto qbuf = prepare_query(q_in);
    QueryStats st;
    st.layer_hops.assign(layers_.size(), 0);
    const Id entry = descend(qbuf, 1, rng, st);
    auto beam = beam_search(layers_[0].graph, points_, std::span<const Id>(&entry, 1), qbuf, ef, metric_);
    st.layer_hops[0] += beam.hops;
    st.total_hops += beam.hops;
    st.dist_evals += beam.dist_evals;
    beam.results.resize(std::min(k, beam.results.size()));
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (stats_out) *stats_out = std::move(st);
    return std::move(beam.results);
  }

  /// Adds a point. It joins layer 0 and is promoted upward with independent
  /// probability 2^-m per level, as long as the decay cap and depth bound
  /// allow. Only NSW layers can absorb single insertions.
  Id insert(std::span<const float> x_in, Rng& rng) {
    if (params_.graph.kind != GraphKind::NSW)
      throw UnsupportedOperation(std::string("insert: ") + graph_kind_name(params_.graph.kind) +
                                 " layer graphs are batch-built");
    if (x_in.size() != dim()) throw std::invalid_argument("insert: dimension mismatch");
    const auto xbuf = prepare_query(x_in);
    const Id id = points_.append(xbuf);
    const std::size_t n_after = size() + 1;
    const std::size_t depth_cap = effective_max_layers(n_after);

    std::size_t level = 0;
    std::bernoulli_distribution promote(std::ldexp(1.0, -params_.m()));
    // At most one new layer can appear per insertion.
    while (level < depth_cap && level < layers_.size() && promote(rng)) {
      const std::size_t below = layers_[level].ids.size() + 1;  // x joins every layer up to `level`
      const std::size_t have = level + 1 < layers_.size() ? layers_[level + 1].ids.size() : 0;
      if (have + 1 > layer_target_size(below, params_.m())) {
        ++stats_.capped_promotions;
        break;
      }
      ++level;
    }

    // Entry points: greedy descent toward x through the layers above `level`.
    std::vector<Id> entry(layers_.size(), 0);
    bool have_entry = !layers_.back().ids.empty();
    if (have_entry) {
      QueryStats scratch;
      scratch.layer_hops.assign(layers_.size(), 0);
      Id cur = layers_.back().ids[uniform_index(rng, layers_.back().ids.size())];
      for (std::size_t i = layers_.size(); i-- > 0;) {
        cur = bridge_into(i, cur, rng, scratch);
        cur = greedy_search(layers_[i].graph, points_, cur, xbuf, metric_).id;
        entry[i] = cur;
      }
    }

    for (std::size_t j = 0; j <= level; ++j) {
      if (j == layers_.size()) {
        layers_.push_back({{}, NavGraph(params_.graph)});
        stats_.layers.push_back({});
        entry.push_back(0);
      }
      auto& layer = layers_[j];
      layer.ids.insert(std::upper_bound(layer.ids.begin(), layer.ids.end(), id), id);
      if (layer.graph.empty()) {
        layer.graph.add_node(id);
      } else {
        const Id e = (have_entry && j < entry.size() && layer.graph.contains(entry[j])) ? entry[j] : layer.graph.id_at(0);
        nsw_insert(layer.graph, points_, id, std::span<const Id>(&e, 1), metric_);
      }
    }
    ++stats_.inserts;
    return id;
  }

  /// Removes a point from every layer, re-linking its neighbourhoods. Layers
  /// that end up above the decay cap are thinned at random; a layer that
  /// falls below rebuild_beta of its target triggers a resample of it and
  /// everything above.
  void remove(Id id) {
    if (!contains(id)) throw NotFound("delete: id " + std::to_string(id) + " not in index");
    for (auto& layer : layers_) {
      auto it = std::lower_bound(layer.ids.begin(), layer.ids.end(), id);
      if (it == layer.ids.end() || *it != id) continue;
      layer.ids.erase(it);
      remove_and_relink(layer.graph, points_, id, metric_);
    }
    ++stats_.deletes;
    restore_invariants();
  }

  /// Checks every structural invariant; returns an empty string when all hold.
  std::string check_invariants() const {
    const int m = params_.m();
    if (layers_.empty()) return "no layers";
    const std::size_t n = size();
    if (layers_.size() > auto_max_layers(n, m) + 1) return "too many layers for n";
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (!std::is_sorted(l.ids.begin(), l.ids.end()) ||
          std::adjacent_find(l.ids.begin(), l.ids.end()) != l.ids.end())
        return "layer " + std::to_string(i) + " ids not strictly sorted";
      if (i > 0 && l.ids.size() > layer_target_size(layers_[i - 1].ids.size(), m))
        return "layer " + std::to_string(i) + " exceeds decay cap";
      if (i > 0 && l.ids.empty()) return "empty upper layer " + std::to_string(i);
      if (i > 0 && params_.nested &&
          !std::includes(layers_[i - 1].ids.begin(), layers_[i - 1].ids.end(), l.ids.begin(), l.ids.end()))
        return "layer " + std::to_string(i) + " not nested in layer " + std::to_string(i - 1);
      if (l.graph.size() != l.ids.size()) return "layer " + std::to_string(i) + " graph/node mismatch";
      for (Id id : l.ids)
        if (!l.graph.contains(id)) return "layer " + std::to_string(i) + " graph misses node";
      for (Id id : l.ids)
        if (!contains(id)) return "layer " + std::to_string(i) + " holds a dead id";
      const std::size_t cap = l.graph.params().max_degree();
      for (std::uint32_t s = 0; s < l.graph.size(); ++s) {
        const auto& adj = l.graph.adjacency(s);
        for (std::size_t k = 0; k < adj.size(); ++k) {
          if (adj[k] == s) return "self loop";
          if (k > 0 && l.graph.id_at(adj[k - 1]) >= l.graph.id_at(adj[k])) return "unsorted or duplicate neighbours";
        }
        if (l.graph.kind() == GraphKind::NSW && cap && adj.size() > cap) return "degree above cap";
      }
    }
    return {};
  }

  // Serialization ---------------------------------------------------------

  std::vector<char> serialize_bytes() const;
  void serialize(const std::string& path) const { detail::write_file(path, serialize_bytes()); }
  static HennIndex deserialize_bytes(const std::vector<char>& bytes, PointSet points);
  static HennIndex deserialize(const std::string& path, PointSet points) {
    return deserialize_bytes(detail::read_file(path), std::move(points));
  }

  /// Same layers, edges, parameters and stats.
  bool same_structure(const HennIndex& o) const {
    if (!(params_ == o.params_) || !(metric_ == o.metric_) || !(stats_ == o.stats_) ||
        layers_.size() != o.layers_.size())
      return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (layers_[i].ids != o.layers_[i].ids) return false;
      if (!layers_[i].graph.same_structure(o.layers_[i].graph)) return false;
    }
    return true;
  }

 private:
  HennIndex(PointSet points, const HennParams& params, const Metric& metric)
      : points_(std::move(points)), params_(params), metric_(metric) {
    if (metric_.kind == MetricKind::Cosine) normalize_rows(points_);
  }

  std::vector<float> prepare_query(std::span<const float> q) const {
    if (q.size() != dim()) throw std::invalid_argument("query: dimension mismatch");
    if (metric_.kind == MetricKind::Cosine) return normalized(q);
    return {q.begin(), q.end()};
  }

  std::size_t effective_max_layers(std::size_t n) const {
    const std::size_t a = auto_max_layers(n, params_.m());
    return params_.max_layers == 0 ? a : std::min(a, params_.max_layers);
  }

  void build_graph_for(std::size_t i) {
    Rng g = make_rng(params_.seed, {detail::kGraphStream, i, stats_.rebuilds});
    layers_[i].graph = build_graph(points_, layers_[i].ids, params_.graph, metric_, g);
  }

  // Samples and builds layers i, i+1, ... on top of layers_[0..i-1].
  void build_layers_from(std::size_t first) {
    const std::size_t max_upper = effective_max_layers(size());
    const int m = params_.m();
    for (std::size_t i = first; i <= max_upper; ++i) {
      const auto& prev = layers_[i - 1].ids;
      if (prev.size() <= 1) break;
      const auto& base = params_.nested ? prev : layers_[0].ids;
      const std::size_t target = std::min(base.size(), layer_target_size(prev.size(), m));
      const std::uint64_t seed = derive_seed(params_.seed, {detail::kLayerStream, i, stats_.rebuilds});
      LayerStats ls;
      std::vector<Id> ids;
      if (params_.mode == LayerMode::Random) {
        Rng rng = make_rng(seed, {detail::kSampleStream, 0});
        ids = uniform_layer_sample(base, target, rng);
      } else {
        ls.eps = epsilon_of(base.size(), dim(), params_.eps);
        try {
          auto res = build_eps_net_sampling(points_, base, ls.eps, params_.eps, metric_, seed, target);
          ids = std::move(res.ids);
          ls.trials = res.trials;
        } catch (const ConstructionFailure& f) {
          ls.trials = f.trials();
          ls.fallback = true;
          Rng rng = make_rng(seed, {detail::kFallbackStream});
          if (params_.nested && base.size() >= (std::size_t{1} << m))
            ids = build_eps_net_halving(base, m, rng);
          else
            ids = uniform_layer_sample(base, target, rng);
        }
      }
      layers_.push_back({std::move(ids), {}});
      stats_.layers.push_back(ls);
      build_graph_for(i);
    }
  }

  // Returns a node of layer i to start from, given the node carried down
  // from the layer above. Absent ids are bridged by a greedy walk from a
  // random layer-i node toward the carried point.
  Id bridge_into(std::size_t i, Id carried, Rng& rng, QueryStats& st) const {
    const auto& g = layers_[i].graph;
    if (g.contains(carried)) return carried;
    const Id e = g.id_at(uniform_index<std::uint32_t>(rng, static_cast<std::uint32_t>(g.size())));
    const auto r = greedy_search(g, points_, e, points_[carried], metric_);
    st.layer_hops[i] += r.hops;
    st.total_hops += r.hops;
    st.dist_evals += r.dist_evals;
    return r.id;
  }

  // Greedy descent from a random top-layer node down to layer `stop`.
  Id descend(std::span<const float> q, std::size_t stop, Rng& rng, QueryStats& st) const {
    if (size() == 0) throw std::logic_error("query on an empty index");
    const auto& top = layers_.back();
    Id cur = top.ids[uniform_index(rng, top.ids.size())];
    for (std::size_t i = layers_.size(); i-- > stop;) {
      cur = bridge_into(i, cur, rng, st);
      const auto r = greedy_search(layers_[i].graph, points_, cur, q, metric_);
      st.layer_hops[i] += r.hops;
      st.total_hops += r.hops;
      st.dist_evals += r.dist_evals;
      cur = r.id;
    }
    return cur;
  }

  void drop_layers_from(std::size_t i) {
    layers_.resize(i);
    stats_.layers.resize(i);
  }

  void evict(std::size_t j, Id id) {
    for (std::size_t t = j; t < layers_.size(); ++t) {
      auto& l = layers_[t];
      auto it = std::lower_bound(l.ids.begin(), l.ids.end(), id);
      if (it == l.ids.end() || *it != id) {
        if (params_.nested) break;
        continue;
      }
      l.ids.erase(it);
      remove_and_relink(l.graph, points_, id, metric_);
      if (!params_.nested) break;
    }
  }

  void restore_invariants() {
    const int m = params_.m();
    if (size() == 0) {
      drop_layers_from(1);
      layers_[0].graph = NavGraph(params_.graph);
      return;
    }
    for (std::size_t i = 1; i < layers_.size(); ++i)
      if (layers_[i].ids.empty()) {
        drop_layers_from(i);
        break;
      }
    if (layers_.size() > effective_max_layers(size()) + 1) drop_layers_from(effective_max_layers(size()) + 1);

    Rng rng = make_rng(params_.seed, {detail::kEvictStream, stats_.deletes});
    for (std::size_t j = 1; j < layers_.size(); ++j) {
      const std::size_t cap = layer_target_size(layers_[j - 1].ids.size(), m);
      while (layers_[j].ids.size() > cap) evict(j, layers_[j].ids[uniform_index(rng, layers_[j].ids.size())]);
    }
    for (std::size_t j = 1; j < layers_.size(); ++j) {
      const double target = static_cast<double>(layer_target_size(layers_[j - 1].ids.size(), m));
      if (static_cast<double>(layers_[j].ids.size()) < params_.rebuild_beta * target) {
        ++stats_.rebuilds;
        drop_layers_from(j);
        build_layers_from(j);
        break;
      }
    }
  }

  PointSet points_;
  HennParams params_;
  Metric metric_;
  std::vector<Layer> layers_;
  BuildStats stats_;
};

inline HennIndex build_henn(PointSet ps, HennParams params, const Metric& metric) {
  params.mode = LayerMode::EpsNet;
  return HennIndex::build(std::move(ps), params, metric);
}

inline HennIndex build_baseline(PointSet ps, HennParams params, const Metric& metric) {
  params.mode = LayerMode::Random;
  return HennIndex::build(std::move(ps), params, metric);
}

// HENNIDX1 layout (little-endian):
//   "HENNIDX1" u32 version
//   params: u8 metric, f64 p, i32 m, f64 c0, f64 phi, u64 r_ranges,
//           u64 max_trials, u32 threads, u64 max_layers, u8 graph kind,
//           u64 M, u64 ef_construction, u8 diversify, u64 knn_k, u8 reducer,
//           u64 ef_search, u8 mode, u8 nested, u64 seed, f64 beta
//   u64 point rows, u32 dim, u32 layer count
//   per layer: varint count, varint deltas of sorted ids, then for each node
//              in id order varint degree + varint deltas of neighbour
//              positions within the layer
//   stats: u32 count, per layer (u64 trials, u8 fallback, f64 eps),
//          f64 build seconds, u64 rebuilds, inserts, deletes, capped

namespace detail {

class ByteWriter {
 public:
  template <class T>
  void put(T v) {
    store_le<T>(buf_, v);
  }
  void varint(std::uint64_t v) {
    while (v >= 0x80) {
      buf_.push_back(static_cast<char>((v & 0x7f) | 0x80));
      v >>= 7;
    }
    buf_.push_back(static_cast<char>(v));
  }
  void raw(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  std::vector<char> take() { return std::move(buf_); }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<char>& b) : b_(b) {}
  template <class T>
  T get() {
    need(sizeof(T), "truncated field");
    T v = load_le<T>(b_.data() + off_);
    off_ += sizeof(T);
    return v;
  }
  std::uint64_t varint() {
    std::uint64_t v = 0;
    const std::size_t at = off_;
    for (int shift = 0; shift < 64; shift += 7) {
      need(1, "truncated varint");
      const auto byte = static_cast<std::uint8_t>(b_[off_++]);
      v |= static_cast<std::uint64_t>(byte & 0x7f) << shift;
      if (!(byte & 0x80)) return v;
    }
    throw FormatError("overlong varint", at);
  }
  std::uint8_t enum_byte(std::uint8_t max, const char* what) {
    const std::size_t at = off_;
    const auto v = get<std::uint8_t>();
    if (v > max) throw FormatError(std::string("bad ") + what + " tag", at);
    return v;
  }
  std::size_t offset() const { return off_; }
  bool done() const { return off_ == b_.size(); }
  void need(std::size_t n, const char* what) const {
    if (b_.size() - off_ < n) throw FormatError(what, off_);
  }

 private:
  const std::vector<char>& b_;
  std::size_t off_ = 0;
};

}  // namespace detail

inline std::vector<char> HennIndex::serialize_bytes() const {
  detail::ByteWriter w;
  w.raw(detail::kIndexMagic, 8);
  w.put<std::uint32_t>(detail::kIndexVersion);
  const auto& p = params_;
  w.put<std::uint8_t>(static_cast<std::uint8_t>(metric_.kind));
  w.put<double>(metric_.p);
  w.put<std::int32_t>(p.eps.m);
  w.put<double>(p.eps.c0);
  w.put<double>(p.eps.phi);
  w.put<std::uint64_t>(p.eps.r_ranges);
  w.put<std::uint64_t>(p.eps.max_trials);
  w.put<std::uint32_t>(p.eps.threads);
  w.put<std::uint64_t>(p.max_layers);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(p.graph.kind));
  w.put<std::uint64_t>(p.graph.M);
  w.put<std::uint64_t>(p.graph.ef_construction);
  w.put<std::uint8_t>(p.graph.diversify ? 1 : 0);
  w.put<std::uint64_t>(p.graph.knn_k);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(p.graph.reducer));
  w.put<std::uint64_t>(p.ef_search);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(p.mode));
  w.put<std::uint8_t>(p.nested ? 1 : 0);
  w.put<std::uint64_t>(p.seed);
  w.put<double>(p.rebuild_beta);
  w.put<std::uint64_t>(points_.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(points_.dim()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(layers_.size()));
  for (const auto& layer : layers_) {
    w.varint(layer.ids.size());
    Id prev = 0;
    for (Id id : layer.ids) {
      w.varint(id - prev);
      prev = id;
    }
    // Neighbour lists are sorted by global id, hence by position too.
    std::vector<std::uint32_t> pos_of_slot(layer.graph.size());
    for (std::uint32_t pos = 0; pos < layer.ids.size(); ++pos) pos_of_slot[layer.graph.slot_of(layer.ids[pos])] = pos;
    for (Id id : layer.ids) {
      const auto& adj = layer.graph.adjacency(layer.graph.slot_of(id));
      w.varint(adj.size());
      std::uint32_t last = 0;
      for (auto s : adj) {
        const auto pos = pos_of_slot[s];
        w.varint(pos - last);
        last = pos;
      }
    }
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(stats_.layers.size()));
  for (const auto& ls : stats_.layers) {
    w.put<std::uint64_t>(ls.trials);
    w.put<std::uint8_t>(ls.fallback ? 1 : 0);
    w.put<double>(ls.eps);
  }
  w.put<double>(stats_.build_seconds);
  w.put<std::uint64_t>(stats_.rebuilds);
  w.put<std::uint64_t>(stats_.inserts);
  w.put<std::uint64_t>(stats_.deletes);
  w.put<std::uint64_t>(stats_.capped_promotions);
  return w.take();
}

inline HennIndex HennIndex::deserialize_bytes(const std::vector<char>& bytes, PointSet points) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), detail::kIndexMagic, 8) != 0)
    throw FormatError("bad HENNIDX1 magic", 0);
  detail::ByteReader r(bytes);
  r.need(8, "truncated magic");
  for (int i = 0; i < 8; ++i) r.get<char>();
  {
    const std::size_t at = r.offset();
    if (r.get<std::uint32_t>() != detail::kIndexVersion) throw FormatError("unsupported HENNIDX version", at);
  }
  Metric metric;
  metric.kind = static_cast<MetricKind>(r.enum_byte(2, "metric"));
  metric.p = r.get<double>();
  HennParams p;
  p.eps.m = r.get<std::int32_t>();
  p.eps.c0 = r.get<double>();
  p.eps.phi = r.get<double>();
  p.eps.r_ranges = r.get<std::uint64_t>();
  p.eps.max_trials = r.get<std::uint64_t>();
  p.eps.threads = r.get<std::uint32_t>();
  p.max_layers = r.get<std::uint64_t>();
  p.graph.kind = static_cast<GraphKind>(r.enum_byte(2, "graph kind"));
  p.graph.M = r.get<std::uint64_t>();
  p.graph.ef_construction = r.get<std::uint64_t>();
  p.graph.diversify = r.enum_byte(1, "flag") != 0;
  p.graph.knn_k = r.get<std::uint64_t>();
  p.graph.reducer = static_cast<Reducer>(r.enum_byte(1, "reducer"));
  p.ef_search = r.get<std::uint64_t>();
  p.mode = static_cast<LayerMode>(r.enum_byte(1, "layer mode"));
  p.nested = r.enum_byte(1, "flag") != 0;
  p.seed = r.get<std::uint64_t>();
  p.rebuild_beta = r.get<double>();
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid parameters: ") + e.what(), r.offset());
  }
  const std::size_t rows_at = r.offset();
  const auto rows = r.get<std::uint64_t>();
  const auto dim = r.get<std::uint32_t>();
  if (rows != points.size() || dim != points.dim())
    throw FormatError("index expects " + std::to_string(rows) + "x" + std::to_string(dim) + " points, got " +
                          std::to_string(points.size()) + "x" + std::to_string(points.dim()),
                      rows_at);
  const std::size_t nl_at = r.offset();
  const auto n_layers = r.get<std::uint32_t>();
  if (n_layers == 0) throw FormatError("index with zero layers", nl_at);

  HennIndex idx(std::move(points), p, metric);
  for (std::uint32_t li = 0; li < n_layers; ++li) {
    Layer layer{{}, NavGraph(p.graph)};
    const std::size_t count_at = r.offset();
    const auto count = r.varint();
    if (count > rows) throw FormatError("layer larger than point count", count_at);
    std::uint64_t id = 0;
    for (std::uint64_t k = 0; k < count; ++k) {
      const std::size_t at = r.offset();
      const auto delta = r.varint();
      if (k > 0 && delta == 0) throw FormatError("duplicate id in layer", at);
      id += delta;
      if (id >= rows) throw FormatError("id out of range", at);
      layer.ids.push_back(static_cast<Id>(id));
      layer.graph.add_node(static_cast<Id>(id));
    }
    for (std::uint64_t k = 0; k < count; ++k) {
      const auto slot = static_cast<std::uint32_t>(k);
      const std::size_t deg_at = r.offset();
      const auto deg = r.varint();
      if (deg >= count + (count == 0)) throw FormatError("degree exceeds layer size", deg_at);
      std::vector<std::uint32_t> nbrs;
      std::uint64_t pos = 0;
      for (std::uint64_t e = 0; e < deg; ++e) {
        const std::size_t at = r.offset();
        pos += r.varint();
        if (pos >= count || (e > 0 && nbrs.back() == pos) || pos == k) throw FormatError("bad neighbour position", at);
        nbrs.push_back(static_cast<std::uint32_t>(pos));
      }
      layer.graph.set_adjacency(slot, std::move(nbrs));
    }
    if (li > 0 && layer.ids.empty()) throw FormatError("empty upper layer", count_at);
    idx.layers_.push_back(std::move(layer));
  }
  const std::size_t stats_at = r.offset();
  const auto n_stats = r.get<std::uint32_t>();
  if (n_stats != n_layers) throw FormatError("stats/layer count mismatch", stats_at);
  for (std::uint32_t i = 0; i < n_stats; ++i) {
    LayerStats ls;
    ls.trials = r.get<std::uint64_t>();
    ls.fallback = r.enum_byte(1, "flag") != 0;
    ls.eps = r.get<double>();
    idx.stats_.layers.push_back(ls);
  }
  idx.stats_.build_seconds = r.get<double>();
  idx.stats_.rebuilds = r.get<std::uint64_t>();
  idx.stats_.inserts = r.get<std::uint64_t>();
  idx.stats_.deletes = r.get<std::uint64_t>();
  idx.stats_.capped_promotions = r.get<std::uint64_t>();
  if (!r.done()) throw FormatError("trailing bytes after index", r.offset());
  return idx;
}

}  // namespace henn
