#pragma once

// Per-layer navigable graphs and the searches that run over them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "henn/core.hpp"
#include "henn/delaunay.hpp"
#include "henn/random.hpp"
#include "henn/reduce.hpp"

namespace henn {

enum class GraphKind : std::uint8_t { NSW = 0, KNN = 1, DimRedDT = 2 };

inline const char* graph_kind_name(GraphKind k) {
  switch (k) {
    case GraphKind::NSW: return "nsw";
    case GraphKind::KNN: return "knn";
    case GraphKind::DimRedDT: return "dimred";
  }
  return "?";
}

struct GraphParams {
  GraphKind kind = GraphKind::NSW;
  std::size_t M = 16;
  std::size_t ef_construction = 100;
  bool diversify = false;  // hnswlib-style neighbour-diversity pruning
  std::size_t knn_k = 16;
  Reducer reducer = Reducer::PCA;

  /// Degree cap enforced on insertion and re-linking; 0 means unbounded.
  std::size_t max_degree() const {
    switch (kind) {
      case GraphKind::NSW: return 2 * M;
      case GraphKind::KNN: return knn_k;
      case GraphKind::DimRedDT: return 0;
    }
    return 0;
  }

  bool operator==(const GraphParams&) const = default;
};

/// Directed adjacency over a subset of global ids. Nodes live in dense slots;
/// every adjacency list is kept sorted by neighbour global id, which is what
/// gives the searches their ascending-id tie-break.
class NavGraph {
 public:
  NavGraph() = default;
  explicit NavGraph(GraphParams params) : params_(params) {}

  const GraphParams& params() const { return params_; }
  /// Relabels the construction parameters; edges are untouched.
  void set_params(const GraphParams& p) { params_ = p; }
  GraphKind kind() const { return params_.kind; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  bool contains(Id id) const { return slot_.count(id) != 0; }
  std::uint32_t slot_of(Id id) const {
    auto it = slot_.find(id);
    if (it == slot_.end()) throw std::out_of_range("NavGraph: id " + std::to_string(id) + " not in graph");
    return it->second;
  }
  Id id_at(std::uint32_t slot) const { return ids_[slot]; }
  const std::vector<Id>& ids() const { return ids_; }
  const std::vector<std::uint32_t>& adjacency(std::uint32_t slot) const { return adj_[slot]; }

  std::vector<Id> neighbors(Id id) const {
    std::vector<Id> out;
    for (auto s : adj_[slot_of(id)]) out.push_back(ids_[s]);
    return out;
  }

  std::uint32_t add_node(Id id) {
    if (contains(id)) throw std::invalid_argument("NavGraph: duplicate node " + std::to_string(id));
    const auto s = static_cast<std::uint32_t>(ids_.size());
    ids_.push_back(id);
    adj_.emplace_back();
    slot_.emplace(id, s);
    return s;
  }

  bool has_edge(std::uint32_t from, std::uint32_t to) const {
    const auto& a = adj_[from];
    auto it = std::lower_bound(a.begin(), a.end(), to, [&](std::uint32_t x, std::uint32_t y) { return ids_[x] < ids_[y]; });
    return it != a.end() && *it == to;
  }

  /// Adds from -> to unless it is a self loop or already present.
  bool add_edge(std::uint32_t from, std::uint32_t to) {
    if (from == to) return false;
    auto& a = adj_[from];
    auto it = std::lower_bound(a.begin(), a.end(), to, [&](std::uint32_t x, std::uint32_t y) { return ids_[x] < ids_[y]; });
    if (it != a.end() && *it == to) return false;
    a.insert(it, to);
    return true;
  }

  void remove_edge(std::uint32_t from, std::uint32_t to) {
    auto& a = adj_[from];
    a.erase(std::remove(a.begin(), a.end(), to), a.end());
  }

  /// Replaces a list; the input need not be sorted or unique.
  void set_adjacency(std::uint32_t slot, std::vector<std::uint32_t> nbrs) {
    std::sort(nbrs.begin(), nbrs.end(), [&](std::uint32_t x, std::uint32_t y) { return ids_[x] < ids_[y]; });
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    nbrs.erase(std::remove(nbrs.begin(), nbrs.end(), slot), nbrs.end());
    adj_[slot] = std::move(nbrs);
  }

  /// Drops a node and every edge that touches it. The last slot is moved into
  /// the vacated one.
  void erase_node(Id id) {
    const auto x = slot_of(id);
    const auto last = static_cast<std::uint32_t>(ids_.size() - 1);
    for (auto& a : adj_) a.erase(std::remove(a.begin(), a.end(), x), a.end());
    if (x != last) {
      for (auto& a : adj_)
        for (auto& s : a)
          if (s == last) s = x;
      ids_[x] = ids_[last];
      adj_[x] = std::move(adj_[last]);
      slot_[ids_[x]] = x;
    }
    ids_.pop_back();
    adj_.pop_back();
    slot_.erase(id);
  }

  std::size_t edge_count() const {
    std::size_t e = 0;
    for (const auto& a : adj_) e += a.size();
    return e;
  }

  double average_degree() const { return ids_.empty() ? 0.0 : static_cast<double>(edge_count()) / ids_.size(); }

  std::size_t max_out_degree() const {
    std::size_t m = 0;
    for (const auto& a : adj_) m = std::max(m, a.size());
    return m;
  }

  /// Structural equality as an id-labelled digraph, independent of slot order.
  bool same_structure(const NavGraph& o) const {
    if (size() != o.size() || params_ != o.params_) return false;
    for (std::uint32_t s = 0; s < ids_.size(); ++s) {
      if (!o.contains(ids_[s])) return false;
      if (neighbors(ids_[s]) != o.neighbors(ids_[s])) return false;
    }
    return true;
  }

 private:
  GraphParams params_;
  std::vector<Id> ids_;
  std::vector<std::vector<std::uint32_t>> adj_;
  std::unordered_map<Id, std::uint32_t> slot_;
};

namespace detail {

class VisitedTags {
 public:
  void reset(std::size_t n) {
    if (tags_.size() < n) tags_.resize(n, 0);
    if (++epoch_ == 0) {
      std::fill(tags_.begin(), tags_.end(), 0);
      epoch_ = 1;
    }
  }
  /// Marks s; returns whether it was already marked.
  bool test_and_set(std::uint32_t s) {
    if (tags_[s] == epoch_) return true;
    tags_[s] = epoch_;
    return false;
  }

 private:
  std::vector<std::uint32_t> tags_;
  std::uint32_t epoch_ = 0;
};

inline VisitedTags& visited_tags() {
  thread_local VisitedTags tags;
  return tags;
}

struct SlotDist {
  double dist;
  std::uint32_t slot;
  Id id;
};

struct FartherFirst {
  bool operator()(const SlotDist& a, const SlotDist& b) const {
    return a.dist < b.dist || (a.dist == b.dist && a.id < b.id);
  }
};
struct CloserFirst {
  bool operator()(const SlotDist& a, const SlotDist& b) const {
    return a.dist > b.dist || (a.dist == b.dist && a.id > b.id);
  }
};

}  // namespace detail

struct SearchResult {
  Id id = 0;
  double dist = 0.0;
  std::size_t hops = 0;
  std::size_t dist_evals = 0;
  std::vector<Id> visited;  // filled only when a trace is requested
};

/// Moves to the closest out-neighbour while it is strictly closer to q than
/// the current node. Ties among neighbours go to the lowest id.
inline SearchResult greedy_search(const NavGraph& g, const PointSet& ps, Id start, std::span<const float> q,
                                  const Metric& metric, bool trace = false) {
  std::uint32_t cur = g.slot_of(start);
  SearchResult r;
  r.id = start;
  r.dist = distance(metric, ps[start], q);
  r.dist_evals = 1;
  if (trace) r.visited.push_back(start);
  for (;;) {
    std::uint32_t best = cur;
    double best_d = r.dist;
    for (auto s : g.adjacency(cur)) {
      const double dd = distance(metric, ps[g.id_at(s)], q);
      ++r.dist_evals;
      if (dd < best_d) {
        best_d = dd;
        best = s;
      }
    }
    if (best == cur) break;
    cur = best;
    r.dist = best_d;
    r.id = g.id_at(cur);
    ++r.hops;
    if (trace) r.visited.push_back(r.id);
  }
  return r;
}

struct BeamResult {
  std::vector<Neighbor> results;  // ascending (dist, id), at most ef entries
  std::size_t hops = 0;           // expansions beyond the first
  std::size_t dist_evals = 0;
};

/// Best-first search keeping the ef closest nodes seen. Stops once the
/// closest unexpanded candidate is farther than the worst kept result.
inline BeamResult beam_search(const NavGraph& g, const PointSet& ps, std::span<const Id> starts,
                              std::span<const float> q, std::size_t ef, const Metric& metric) {
  if (ef < 1) throw std::invalid_argument("beam_search: ef must be >= 1");
  if (starts.empty()) throw std::invalid_argument("beam_search: no start nodes");
  using detail::SlotDist;
  auto& visited = detail::visited_tags();
  visited.reset(g.size());
  std::priority_queue<SlotDist, std::vector<SlotDist>, detail::CloserFirst> frontier;
  std::priority_queue<SlotDist, std::vector<SlotDist>, detail::FartherFirst> best;
  BeamResult out;
  for (Id sid : starts) {
    const auto s = g.slot_of(sid);
    if (visited.test_and_set(s)) continue;
    const SlotDist c{distance(metric, ps[sid], q), s, sid};
    ++out.dist_evals;
    frontier.push(c);
    best.push(c);
    if (best.size() > ef) best.pop();
  }
  std::size_t expansions = 0;
  while (!frontier.empty()) {
    const SlotDist c = frontier.top();
    if (best.size() >= ef && c.dist > best.top().dist) break;
    frontier.pop();
    ++expansions;
    for (auto s : g.adjacency(c.slot)) {
      if (visited.test_and_set(s)) continue;
      const Id id = g.id_at(s);
      const double dd = distance(metric, ps[id], q);
      ++out.dist_evals;
      if (best.size() < ef || dd < best.top().dist) {
        frontier.push({dd, s, id});
        best.push({dd, s, id});
        if (best.size() > ef) best.pop();
      }
    }
  }
  out.hops = expansions > 0 ? expansions - 1 : 0;
  out.results.resize(best.size());
  for (std::size_t i = best.size(); i-- > 0;) {
    out.results[i] = {best.top().id, best.top().dist};
    best.pop();
  }
  return out;
}

namespace detail {

// hnswlib's getNeighborsByHeuristic2: keep a candidate only if it is closer to
// the base than to every neighbour already kept. `cands` is sorted ascending.
inline std::vector<Neighbor> diversify(const PointSet& ps, const std::vector<Neighbor>& cands, std::size_t limit,
                                       const Metric& metric) {
  std::vector<Neighbor> kept;
  for (const auto& c : cands) {
    if (kept.size() >= limit) break;
    bool good = true;
    for (const auto& k : kept) {
      if (distance(metric, ps[c.id], ps[k.id]) < c.dist) {
        good = false;
        break;
      }
    }
    if (good) kept.push_back(c);
  }
  return kept;
}

inline void prune_to(NavGraph& g, const PointSet& ps, std::uint32_t slot, std::size_t cap, const Metric& metric,
                     bool use_heuristic) {
  const auto& adj = g.adjacency(slot);
  if (cap == 0 || adj.size() <= cap) return;
  const auto base = ps[g.id_at(slot)];
  std::vector<Neighbor> c;
  c.reserve(adj.size());
  for (auto s : adj) c.push_back({g.id_at(s), distance(metric, ps[g.id_at(s)], base)});
  std::sort(c.begin(), c.end(), closer);
  std::vector<Neighbor> keep = use_heuristic ? diversify(ps, c, cap, metric) : std::vector<Neighbor>(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(cap));
  std::vector<std::uint32_t> slots;
  for (const auto& k : keep) slots.push_back(g.slot_of(k.id));
  g.set_adjacency(slot, std::move(slots));
}

/// Pruning can strip a node's last in-edge. Adds edges until every node is
/// reachable from `entry` and can reach it back. Each new edge leaves the
/// nearest eligible node with spare degree; the cap is exceeded only when no
/// such node exists.
inline void make_strongly_connected(NavGraph& g, const PointSet& ps, std::uint32_t entry, std::size_t cap,
                                    const Metric& metric) {
  const auto n = static_cast<std::uint32_t>(g.size());
  auto has_room = [&](std::uint32_t s) { return cap == 0 || g.adjacency(s).size() < cap; };
  auto dist = [&](std::uint32_t a, std::uint32_t b) { return distance(metric, ps[g.id_at(a)], ps[g.id_at(b)]); };
  auto flood = [](std::vector<char>& mark, std::uint32_t from, const auto& next) {
    if (mark[from]) return;
    mark[from] = 1;
    std::vector<std::uint32_t> stack{from};
    while (!stack.empty()) {
      const auto s = stack.back();
      stack.pop_back();
      for (auto t : next(s))
        if (!mark[t]) {
          mark[t] = 1;
          stack.push_back(t);
        }
    }
  };
  auto out_edges = [&](std::uint32_t s) -> const std::vector<std::uint32_t>& { return g.adjacency(s); };

  // Forward: link each unreached node from the nearest reached node with room.
  std::vector<char> fwd(n, 0);
  flood(fwd, entry, out_edges);
  for (std::uint32_t u = 0; u < n; ++u) {
    if (fwd[u]) continue;
    std::uint32_t best = entry, fallback = entry;
    double best_d = std::numeric_limits<double>::infinity(), fallback_d = best_d;
    for (std::uint32_t v = 0; v < n; ++v) {
      if (!fwd[v]) continue;
      const double d = dist(u, v);
      if (d < fallback_d) fallback_d = d, fallback = v;
      if (d < best_d && has_room(v)) best_d = d, best = v;
    }
    g.add_edge(std::isfinite(best_d) ? best : fallback, u);
    flood(fwd, u, out_edges);
  }

  // Backward: every node must reach the entry. Links go from a node with room
  // inside the stranded node's forward closure to the nearest node that can
  // already reach the entry.
  std::vector<std::vector<std::uint32_t>> rev(n);
  for (std::uint32_t s = 0; s < n; ++s)
    for (auto t : g.adjacency(s)) rev[t].push_back(s);
  auto in_edges = [&](std::uint32_t s) -> const std::vector<std::uint32_t>& { return rev[s]; };
  std::vector<char> back(n, 0);
  flood(back, entry, in_edges);
  for (std::uint32_t u = 0; u < n; ++u) {
    if (back[u]) continue;
    std::vector<char> closure(n, 0);
    flood(closure, u, out_edges);
    std::uint32_t src = u;
    for (std::uint32_t s = 0; s < n; ++s)
      if (closure[s] && has_room(s) && (!has_room(src) || dist(s, u) < dist(src, u))) src = s;
    std::uint32_t dst = entry;
    double dst_d = std::numeric_limits<double>::infinity();
    for (std::uint32_t v = 0; v < n; ++v)
      if (back[v]) {
        const double d = dist(src, v);
        if (d < dst_d) dst_d = d, dst = v;
      }
    if (g.add_edge(src, dst)) rev[dst].push_back(src);
    flood(back, src, in_edges);
  }
}

}  // namespace detail

/// Links `id` into an NSW graph: beam search of width ef_construction from
/// `entries`, bidirectional edges to the M best candidates, and pruning of any
/// neighbour pushed above 2M out-edges.
inline void nsw_insert(NavGraph& g, const PointSet& ps, Id id, std::span<const Id> entries, const Metric& metric) {
  const auto& p = g.params();
  std::vector<Id> live_entries;
  for (Id e : entries)
    if (g.contains(e)) live_entries.push_back(e);
  const auto slot = g.add_node(id);
  if (live_entries.empty()) return;
  const auto q = ps[id];
  auto found = beam_search(g, ps, live_entries, q, std::max(p.ef_construction, p.M), metric).results;
  found.erase(std::remove_if(found.begin(), found.end(), [&](const Neighbor& n) { return n.id == id; }), found.end());
  std::vector<Neighbor> chosen;
  if (p.diversify) {
    chosen = detail::diversify(ps, found, p.M, metric);
  } else {
    chosen.assign(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(std::min(p.M, found.size())));
  }
  const std::size_t cap = p.max_degree();
  for (const auto& c : chosen) {
    const auto s = g.slot_of(c.id);
    g.add_edge(slot, s);
    g.add_edge(s, slot);
    detail::prune_to(g, ps, s, cap, metric, p.diversify);
  }
}

/// NSW by incremental insertion in random order; the first inserted node is
/// the construction entry point.
inline NavGraph build_nsw(const PointSet& ps, std::span<const Id> ids, const GraphParams& params, const Metric& metric,
                          Rng& rng) {
  if (ids.empty()) throw std::invalid_argument("build_nsw: empty id set");
  if (params.M < 1) throw std::invalid_argument("build_nsw: M must be >= 1");
  if (params.ef_construction < params.M) throw std::invalid_argument("build_nsw: ef_construction must be >= M");
  GraphParams p = params;
  p.kind = GraphKind::NSW;
  NavGraph g(p);
  std::vector<Id> order(ids.begin(), ids.end());
  std::shuffle(order.begin(), order.end(), rng);
  const Id entry = order.front();
  for (Id id : order) nsw_insert(g, ps, id, std::span<const Id>(&entry, 1), metric);
  detail::make_strongly_connected(g, ps, g.slot_of(entry), p.max_degree(), metric);
  return g;
}

/// Exact directed k-NN graph. k is clamped to |ids| - 1.
inline NavGraph build_knn_graph(const PointSet& ps, std::span<const Id> ids, std::size_t k, const Metric& metric) {
  if (ids.empty()) throw std::invalid_argument("build_knn_graph: empty id set");
  if (k < 1) throw std::invalid_argument("build_knn_graph: k must be >= 1");
  k = std::min(k, ids.size() - 1);
  GraphParams p;
  p.kind = GraphKind::KNN;
  p.knn_k = k;
  NavGraph g(p);
  std::vector<Id> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  for (Id id : sorted) g.add_node(id);
  if (k == 0) return g;
  std::vector<Neighbor> all(sorted.size());
  for (std::uint32_t s = 0; s < sorted.size(); ++s) {
    const auto x = ps[sorted[s]];
    for (std::size_t j = 0; j < sorted.size(); ++j) all[j] = {sorted[j], distance(metric, ps[sorted[j]], x)};
    // The node itself sits at distance 0; move it behind every other node.
    all[s].dist = std::numeric_limits<double>::infinity();
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), closer);
    std::vector<std::uint32_t> nbrs;
    for (std::size_t j = 0; j < k; ++j) nbrs.push_back(g.slot_of(all[j].id));
    g.set_adjacency(s, std::move(nbrs));
  }
  return g;
}

/// Projects the layer to the plane, triangulates it, and uses the Delaunay
/// edges (both directions) as the layer graph. Search still runs in the
/// original space. Collinear or tiny layers fall back to a path through the
/// points in projected order.
inline NavGraph build_dimred_dt(const PointSet& ps, std::span<const Id> ids, Reducer reducer, Rng& rng) {
  if (ids.empty()) throw std::invalid_argument("build_dimred_dt: empty id set");
  GraphParams p;
  p.kind = GraphKind::DimRedDT;
  p.reducer = reducer;
  NavGraph g(p);
  std::vector<Id> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  for (Id id : sorted) g.add_node(id);
  if (sorted.size() == 1) return g;

  const auto pts = reducer == Reducer::PCA ? reduce_pca(ps, sorted) : reduce_random_projection(ps, sorted, rng);
  auto link = [&](std::uint32_t a, std::uint32_t b) {
    g.add_edge(a, b);
    g.add_edge(b, a);
  };

  Triangulation2 tri;
  if (sorted.size() >= 3) {
    // Insert in random order; Bowyer-Watson walks degrade on sorted input.
    std::vector<std::uint32_t> order(sorted.size());
    std::iota(order.begin(), order.end(), 0u);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Point2> shuffled(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) shuffled[i] = pts[order[i]];
    tri = delaunay_triangulate(shuffled);
    if (!tri.degenerate) {
      for (auto [a, b] : tri.edges) link(order[a], order[b]);
      for (std::uint32_t i = 0; i < tri.duplicate_of.size(); ++i)
        if (tri.duplicate_of[i] != i) link(order[i], order[tri.duplicate_of[i]]);
      return g;
    }
  }
  std::vector<std::uint32_t> path(sorted.size());
  std::iota(path.begin(), path.end(), 0u);
  std::sort(path.begin(), path.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (pts[a].x != pts[b].x) return pts[a].x < pts[b].x;
    if (pts[a].y != pts[b].y) return pts[a].y < pts[b].y;
    return a < b;
  });
  for (std::size_t i = 0; i + 1 < path.size(); ++i) link(path[i], path[i + 1]);
  return g;
}

inline NavGraph build_graph(const PointSet& ps, std::span<const Id> ids, const GraphParams& params,
                            const Metric& metric, Rng& rng) {
  switch (params.kind) {
    case GraphKind::NSW: return build_nsw(ps, ids, params, metric, rng);
    case GraphKind::KNN: {
      auto g = build_knn_graph(ps, ids, params.knn_k, metric);
      g.set_params(params);
      return g;
    }
    case GraphKind::DimRedDT: {
      auto g = build_dimred_dt(ps, ids, params.reducer, rng);
      g.set_params(params);
      return g;
    }
  }
  throw std::invalid_argument("build_graph: unknown graph kind");
}

/// Removes a node and patches the hole: every pair of its former in/out
/// neighbours that is not yet adjacent gets linked, nearest first, while the
/// graph's degree cap allows.
inline void remove_and_relink(NavGraph& g, const PointSet& ps, Id id, const Metric& metric) {
  const auto x = g.slot_of(id);
  std::vector<Id> orphans;
  for (auto s : g.adjacency(x)) orphans.push_back(g.id_at(s));
  for (std::uint32_t s = 0; s < g.size(); ++s)
    if (s != x && g.has_edge(s, x)) orphans.push_back(g.id_at(s));
  std::sort(orphans.begin(), orphans.end());
  orphans.erase(std::unique(orphans.begin(), orphans.end()), orphans.end());
  g.erase_node(id);
  const std::size_t cap = g.params().max_degree();
  for (Id u : orphans) {
    const auto su = g.slot_of(u);
    std::vector<Neighbor> cands;
    for (Id v : orphans) {
      if (v == u) continue;
      const auto sv = g.slot_of(v);
      if (!g.has_edge(su, sv)) cands.push_back({v, distance(metric, ps[u], ps[v])});
    }
    std::sort(cands.begin(), cands.end(), closer);
    for (const auto& c : cands) {
      if (cap != 0 && g.adjacency(su).size() >= cap) break;
      g.add_edge(su, g.slot_of(c.id));
    }
  }
}

/// Number of nodes reachable from `from` along out-edges (including itself).
inline std::size_t reachable_count(const NavGraph& g, Id from) {
  std::vector<char> seen(g.size(), 0);
  std::vector<std::uint32_t> stack{g.slot_of(from)};
  seen[stack.back()] = 1;
  std::size_t count = 1;
  while (!stack.empty()) {
    const auto s = stack.back();
    stack.pop_back();
    for (auto t : g.adjacency(s)) {
      if (!seen[t]) {
        seen[t] = 1;
        ++count;
        stack.push_back(t);
      }
    }
  }
  return count;
}

struct RecallBoundEstimate {
  std::size_t rho = 1;                  // max over queries of per_query_k
  double delta = 0.9;
  std::vector<std::size_t> per_query_k; // smallest k with hit fraction >= delta
  std::vector<std::vector<std::size_t>> ranks;  // 1-based rank of each greedy result, per query

  /// Fraction of (query, start) pairs whose greedy result is within the true k-NN.
  double average_hits(std::size_t k) const {
    std::size_t hit = 0, total = 0;
    for (const auto& r : ranks)
      for (auto x : r) {
        hit += x <= k;
        ++total;
      }
    return total ? static_cast<double>(hit) / total : 0.0;
  }

  /// Smallest k whose pooled average-hits fraction reaches delta.
  std::size_t pooled_rho() const {
    std::vector<std::size_t> all;
    for (const auto& r : ranks) all.insert(all.end(), r.begin(), r.end());
    if (all.empty()) return 1;
    std::sort(all.begin(), all.end());
    const auto need = static_cast<std::size_t>(std::ceil(delta * static_cast<double>(all.size()) - 1e-9));
    return all[std::max<std::size_t>(need, 1) - 1];
  }
};

/// Empirical recall bound: for each query, greedy search from n_starts uniform
/// start nodes; a query's k is the ceil(delta * n_starts)-th smallest rank of
/// the returned node among the layer's true neighbours, and rho is the max.
inline RecallBoundEstimate measure_recall_bound(const NavGraph& g, const PointSet& ps, const PointSet& queries,
                                                double delta, std::size_t n_starts, const Metric& metric, Rng& rng) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("measure_recall_bound: delta must be in (0, 1)");
  if (n_starts < 1) throw std::invalid_argument("measure_recall_bound: n_starts must be >= 1");
  if (g.empty()) throw std::invalid_argument("measure_recall_bound: empty graph");
  RecallBoundEstimate est;
  est.delta = delta;
  const auto need = static_cast<std::size_t>(std::ceil(delta * static_cast<double>(n_starts) - 1e-9));
  std::vector<Neighbor> order(g.size());
  std::vector<std::size_t> rank_of(g.size());
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const auto q = queries[qi];
    for (std::uint32_t s = 0; s < g.size(); ++s) order[s] = {s, distance(metric, ps[g.id_at(s)], q)};
    // Rank by (dist, global id); `order[].id` holds the slot here.
    std::sort(order.begin(), order.end(), [&](const Neighbor& a, const Neighbor& b) {
      return a.dist < b.dist || (a.dist == b.dist && g.id_at(a.id) < g.id_at(b.id));
    });
    for (std::size_t r = 0; r < order.size(); ++r) rank_of[order[r].id] = r + 1;
    std::vector<std::size_t> ranks;
    ranks.reserve(n_starts);
    for (std::size_t t = 0; t < n_starts; ++t) {
      const auto start = g.id_at(uniform_index<std::uint32_t>(rng, static_cast<std::uint32_t>(g.size())));
      const auto res = greedy_search(g, ps, start, q, metric);
      ranks.push_back(rank_of[g.slot_of(res.id)]);
    }
    auto sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t k = sorted[std::max<std::size_t>(need, 1) - 1];
    est.per_query_k.push_back(k);
    est.rho = std::max(est.rho, k);
    est.ranks.push_back(std::move(ranks));
  }
  return est;
}

}  // namespace henn
