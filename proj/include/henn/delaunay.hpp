#pragma once

// Incremental Bowyer-Watson Delaunay triangulation in the plane.
//
// Points are inserted in the given order into a large enclosing triangle.
// Each insertion walks to the containing triangle, grows the cavity of
// triangles whose circumcircle strictly contains the point, and re-fans the
// cavity boundary to the new vertex. The cavity is widened whenever a
// boundary edge would produce a non-positive triangle, which keeps the
// mesh valid under floating-point predicate errors.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

namespace henn {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

inline double orient2d(const Point2& a, const Point2& b, const Point2& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

/// > 0 when d lies strictly inside the circumcircle of counter-clockwise abc.
inline double incircle(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  const double adx = a.x - d.x, ady = a.y - d.y;
  const double bdx = b.x - d.x, bdy = b.y - d.y;
  const double cdx = c.x - d.x, cdy = c.y - d.y;
  const double alift = adx * adx + ady * ady;
  const double blift = bdx * bdx + bdy * bdy;
  const double clift = cdx * cdx + cdy * cdy;
  return alift * (bdx * cdy - bdy * cdx) + blift * (cdx * ady - cdy * adx) + clift * (adx * bdy - ady * bdx);
}

struct Triangulation2 {
  std::vector<std::array<std::uint32_t, 3>> triangles;  // counter-clockwise, input indices
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;  // i < j, unique
  std::vector<std::uint32_t> duplicate_of;  // representative index for each input point
  bool degenerate = false;  // true when no proper triangle exists (collinear / < 3 distinct)
};

namespace detail {

class BowyerWatson {
 public:
  explicit BowyerWatson(std::span<const Point2> input) : n_(input.size()) {
    double minx = std::numeric_limits<double>::infinity(), miny = minx;
    double maxx = -minx, maxy = -minx;
    for (const auto& p : input) {
      minx = std::min(minx, p.x);
      maxx = std::max(maxx, p.x);
      miny = std::min(miny, p.y);
      maxy = std::max(maxy, p.y);
    }
    const double cx = 0.5 * (minx + maxx), cy = 0.5 * (miny + maxy);
    double scale = std::max(maxx - minx, maxy - miny);
    if (!(scale > 0.0)) scale = 1.0;
    pts_.reserve(n_ + 3);
    for (const auto& p : input) pts_.push_back({(p.x - cx) / scale, (p.y - cy) / scale});
    constexpr double K = 1.0e3;
    pts_.push_back({-2.0 * K, -K});
    pts_.push_back({2.0 * K, -K});
    pts_.push_back({0.0, 2.0 * K});
    tris_.push_back({{uint32_t(n_), uint32_t(n_ + 1), uint32_t(n_ + 2)}, {kNone, kNone, kNone}, true});
  }

  Triangulation2 run() {
    Triangulation2 out;
    out.duplicate_of.resize(n_);
    for (std::uint32_t i = 0; i < n_; ++i) out.duplicate_of[i] = insert(i);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    for (const auto& t : tris_) {
      if (!t.alive) continue;
      bool real = true;
      for (int k = 0; k < 3; ++k) {
        const auto a = t.v[k], b = t.v[(k + 1) % 3];
        if (a >= n_) real = false;
        if (a < n_ && b < n_) edges.emplace_back(std::min(a, b), std::max(a, b));
      }
      if (real) out.triangles.push_back(t.v);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    out.edges = std::move(edges);
    out.degenerate = out.triangles.empty();
    return out;
  }

 private:
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

  struct Tri {
    std::array<std::uint32_t, 3> v;   // ccw vertices
    std::array<std::uint32_t, 3> nb;  // nb[k] is across the edge opposite v[k]
    bool alive;
  };

  double orient(std::uint32_t a, std::uint32_t b, std::uint32_t c) const { return orient2d(pts_[a], pts_[b], pts_[c]); }

  bool in_circle(const Tri& t, std::uint32_t p) const {
    return incircle(pts_[t.v[0]], pts_[t.v[1]], pts_[t.v[2]], pts_[p]) > 0.0;
  }

  std::uint32_t locate(std::uint32_t p) {
    std::uint32_t cur = last_;
    std::uint32_t step = 0;
    const std::size_t limit = 4 * tris_.size() + 16;
    for (std::size_t iter = 0; iter < limit; ++iter) {
      const Tri& t = tris_[cur];
      bool moved = false;
      const std::uint32_t rot = step++ % 3;
      for (std::uint32_t kk = 0; kk < 3; ++kk) {
        const std::uint32_t k = (kk + rot) % 3;
        if (orient(t.v[(k + 1) % 3], t.v[(k + 2) % 3], p) < 0.0 && t.nb[k] != kNone) {
          cur = t.nb[k];
          moved = true;
          break;
        }
      }
      if (!moved) return cur;
    }
    // Walk failed to converge on inconsistent predicates; fall back to a scan.
    for (std::uint32_t i = 0; i < tris_.size(); ++i) {
      const Tri& t = tris_[i];
      if (!t.alive) continue;
      if (orient(t.v[0], t.v[1], p) >= 0.0 && orient(t.v[1], t.v[2], p) >= 0.0 && orient(t.v[2], t.v[0], p) >= 0.0)
        return i;
    }
    return cur;
  }

  // Returns the representative index (itself unless p duplicates a vertex).
  std::uint32_t insert(std::uint32_t p) {
    const std::uint32_t start = locate(p);
    for (auto v : tris_[start].v) {
      if (v < n_ && pts_[v].x == pts_[p].x && pts_[v].y == pts_[p].y) return v;
    }

    std::vector<std::uint32_t> cavity{start};
    in_cavity_.resize(tris_.size(), 0);
    in_cavity_[start] = 1;
    for (std::size_t head = 0; head < cavity.size(); ++head) {
      const Tri& t = tris_[cavity[head]];
      for (auto nb : t.nb) {
        if (nb == kNone || in_cavity_[nb]) continue;
        if (in_circle(tris_[nb], p)) {
          in_cavity_[nb] = 1;
          cavity.push_back(nb);
        }
      }
    }

    struct Boundary {
      std::uint32_t a, b, outside;
    };
    std::vector<Boundary> boundary;
    for (;;) {
      boundary.clear();
      std::uint32_t widen = kNone;
      for (auto ti : cavity) {
        const Tri& t = tris_[ti];
        for (int k = 0; k < 3; ++k) {
          const auto nb = t.nb[k];
          if (nb != kNone && in_cavity_[nb]) continue;
          const auto a = t.v[(k + 1) % 3], b = t.v[(k + 2) % 3];
          if (orient(a, b, p) <= 0.0 && nb != kNone && widen == kNone) widen = nb;
          boundary.push_back({a, b, nb});
        }
      }
      if (widen == kNone) break;
      in_cavity_[widen] = 1;
      cavity.push_back(widen);
    }

    const auto base = static_cast<std::uint32_t>(tris_.size());
    start_at_.resize(pts_.size(), kNone);
    for (std::uint32_t i = 0; i < boundary.size(); ++i) start_at_[boundary[i].a] = base + i;
    for (std::uint32_t i = 0; i < boundary.size(); ++i) {
      const auto& e = boundary[i];
      Tri t{{e.a, e.b, p}, {start_at_[e.b], kNone, e.outside}, true};
      tris_.push_back(t);
    }
    for (std::uint32_t i = 0; i < boundary.size(); ++i) {
      // The new triangle ending at a (edge p-a) is the one whose boundary edge ends at a.
      tris_[start_at_[boundary[i].b]].nb[1] = base + i;
      const auto out = boundary[i].outside;
      if (out == kNone) continue;
      Tri& o = tris_[out];
      for (int k = 0; k < 3; ++k) {
        const auto a = o.v[(k + 1) % 3], b = o.v[(k + 2) % 3];
        if (a == boundary[i].b && b == boundary[i].a) o.nb[k] = base + i;
      }
    }
    for (const auto& e : boundary) start_at_[e.a] = kNone;
    for (auto ti : cavity) {
      tris_[ti].alive = false;
      in_cavity_[ti] = 0;
    }
    in_cavity_.resize(tris_.size(), 0);
    last_ = base;
    return p;
  }

  std::size_t n_;
  std::vector<Point2> pts_;
  std::vector<Tri> tris_;
  std::vector<char> in_cavity_;
  std::vector<std::uint32_t> start_at_;
  std::uint32_t last_ = 0;
};

}  // namespace detail

/// Delaunay triangulation of the input points. Exact duplicates are reported
/// through `duplicate_of` and do not appear as vertices.
inline Triangulation2 delaunay_triangulate(std::span<const Point2> pts) {
  if (pts.empty()) return {{}, {}, {}, true};
  return detail::BowyerWatson(pts).run();
}

}  // namespace henn
