#include <algorithm>
#include <cmath>
#include <numeric>

#include "utk/ingest.hpp"

namespace utk::ingest {

using geo::Polygon;
using geo::Vec2;
using geo::Vec3;

namespace {

double dist2(Vec2 a, Vec2 b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

bool collinear(Vec2 a, Vec2 b, Vec2 c) {
  const double scale = std::max(dist2(a, c), std::max(dist2(a, b), dist2(b, c)));
  return std::abs(geo::orient(a, b, c)) <= 1e-10 * scale;
}

std::vector<std::size_t> ring_offsets(const Polygon& poly) {
  std::vector<std::size_t> off{0};
  for (auto s : poly.ring_sizes) off.push_back(off.back() + s);
  return off;
}

// Closed point-in-triangle for a CCW triangle.
bool in_triangle(Vec2 p, Vec2 a, Vec2 b, Vec2 c) {
  return geo::orient(a, b, p) >= 0 && geo::orient(b, c, p) >= 0 && geo::orient(c, a, p) >= 0;
}

using Loop = std::vector<std::uint32_t>;

// Joins `hole` into `loop` through a segment from the hole's rightmost
// vertex to the nearest loop vertex that sees it.
void bridge(Loop& loop, const Loop& hole, const std::vector<Loop>& blockers, std::span<const Vec2> pts) {
  std::size_t m = 0;
  for (std::size_t i = 1; i < hole.size(); ++i) {
    const auto a = pts[hole[i]], b = pts[hole[m]];
    if (a.x > b.x || (a.x == b.x && a.y < b.y)) m = i;
  }
  const Vec2 mp = pts[hole[m]];

  auto blocked = [&](Vec2 p, const Loop& ring) {
    for (std::size_t i = 0; i < ring.size(); ++i) {
      const Vec2 a = pts[ring[i]], b = pts[ring[(i + 1) % ring.size()]];
      if (a == p || b == p || a == mp || b == mp) continue;
      if (geo::segments_intersect(mp, p, a, b)) return true;
    }
    return false;
  };

  std::optional<std::size_t> best;
  double best_d = 0;
  std::vector<std::size_t> order(loop.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dist2(pts[loop[a]], mp) < dist2(pts[loop[b]], mp);
  });
  for (auto i : order) {
    const Vec2 p = pts[loop[i]];
    const double d = dist2(p, mp);
    if (best && d > best_d) break;
    if (blocked(p, loop) || blocked(p, hole)) continue;
    bool clear = true;
    for (const auto& other : blockers)
      if (&other != &hole && blocked(p, other)) {
        clear = false;
        break;
      }
    if (!clear) continue;
    // The bridge must leave p into the polygon interior: it has to lie in
    // the wedge between p's incoming and outgoing edges.
    const Vec2 prev = pts[loop[(i + loop.size() - 1) % loop.size()]];
    const Vec2 next = pts[loop[(i + 1) % loop.size()]];
    const bool convex = geo::orient(prev, p, next) >= 0;
    const bool in_wedge = convex ? (geo::orient(p, next, mp) >= 0 && geo::orient(prev, p, mp) >= 0)
                                 : !(geo::orient(p, next, mp) < 0 && geo::orient(prev, p, mp) < 0);
    if (!in_wedge) continue;
    best = i;
    best_d = d;
    break;
  }
  if (!best) best = order.front();

  Loop spliced;
  spliced.reserve(loop.size() + hole.size() + 2);
  spliced.insert(spliced.end(), loop.begin(), loop.begin() + static_cast<std::ptrdiff_t>(*best) + 1);
  for (std::size_t k = 0; k <= hole.size(); ++k) spliced.push_back(hole[(m + k) % hole.size()]);
  spliced.push_back(loop[*best]);
  spliced.insert(spliced.end(), loop.begin() + static_cast<std::ptrdiff_t>(*best) + 1, loop.end());
  loop = std::move(spliced);
}

void ear_clip(Loop v, std::span<const Vec2> pts, std::vector<std::uint32_t>& out) {
  std::size_t guard = 0;
  std::size_t i = 0;
  while (v.size() > 3 && guard < v.size() * 4) {
    const std::size_t n = v.size();
    bool clipped = false;
    for (std::size_t step = 0; step < n; ++step) {
      const std::size_t cur = (i + step) % n;
      const std::size_t prev = (cur + n - 1) % n, next = (cur + 1) % n;
      const Vec2 a = pts[v[prev]], b = pts[v[cur]], c = pts[v[next]];
      // Repeated vertices and straight-through vertices carry no area.
      const bool straight = collinear(a, b, c) && (b.x - a.x) * (c.x - b.x) + (b.y - a.y) * (c.y - b.y) > 0;
      if (b == a || b == c || straight) {
        v.erase(v.begin() + static_cast<std::ptrdiff_t>(cur));
        i = cur % v.size();
        clipped = true;
        break;
      }
      if (collinear(a, b, c)) continue;
      if (geo::orient(a, b, c) <= 0) continue;
      bool ear = true;
      for (std::size_t k = 0; k < n && ear; ++k) {
        if (k == prev || k == cur || k == next) continue;
        const Vec2 p = pts[v[k]];
        if (p == a || p == b || p == c) continue;
        if (in_triangle(p, a, b, c)) ear = false;
      }
      if (!ear) continue;
      out.insert(out.end(), {v[prev], v[cur], v[next]});
      v.erase(v.begin() + static_cast<std::ptrdiff_t>(cur));
      i = cur % v.size();
      clipped = true;
      break;
    }
    if (clipped) {
      guard = 0;
      continue;
    }
    // Numerically stuck: take the first convex corner to make progress.
    ++guard;
    bool forced = false;
    for (std::size_t cur = 0; cur < n; ++cur) {
      const std::size_t prev = (cur + n - 1) % n, next = (cur + 1) % n;
      if (geo::orient(pts[v[prev]], pts[v[cur]], pts[v[next]]) > 0) {
        out.insert(out.end(), {v[prev], v[cur], v[next]});
        v.erase(v.begin() + static_cast<std::ptrdiff_t>(cur));
        forced = true;
        break;
      }
    }
    if (!forced) return;
  }
  if (v.size() == 3 && geo::orient(pts[v[0]], pts[v[1]], pts[v[2]]) > 0 &&
      !collinear(pts[v[0]], pts[v[1]], pts[v[2]]))
    out.insert(out.end(), {v[0], v[1], v[2]});
}

}  // namespace

std::vector<std::uint32_t> triangulate(const Polygon& poly) {
  const auto off = ring_offsets(poly);
  const std::span<const Vec2> pts(poly.points);
  std::vector<Loop> exteriors, holes;
  std::vector<double> exterior_area;
  for (std::size_t r = 0; r < poly.ring_sizes.size(); ++r) {
    if (poly.ring_sizes[r] < 3) continue;
    Loop loop(poly.ring_sizes[r]);
    std::iota(loop.begin(), loop.end(), static_cast<std::uint32_t>(off[r]));
    const double a = geo::signed_area(poly.ring(r));
    if (a > 0) {
      exteriors.push_back(std::move(loop));
      exterior_area.push_back(a);
    } else if (a < 0) {
      holes.push_back(std::move(loop));
    }
  }

  // Each hole goes to the smallest exterior that contains it.
  std::vector<std::vector<Loop>> assigned(exteriors.size());
  for (auto& hole : holes) {
    std::optional<std::size_t> owner;
    for (std::size_t e = 0; e < exteriors.size(); ++e) {
      Polygon outer;
      for (auto idx : exteriors[e]) outer.points.push_back(pts[idx]);
      outer.ring_sizes = {static_cast<std::uint32_t>(outer.points.size())};
      const bool inside = std::all_of(hole.begin(), hole.end(),
                                      [&](std::uint32_t idx) { return geo::point_in_polygon(pts[idx], outer); });
      if (inside && (!owner || exterior_area[e] < exterior_area[*owner])) owner = e;
    }
    if (owner) assigned[*owner].push_back(std::move(hole));
  }

  std::vector<std::uint32_t> out;
  for (std::size_t e = 0; e < exteriors.size(); ++e) {
    auto& group = assigned[e];
    std::sort(group.begin(), group.end(), [&](const Loop& a, const Loop& b) {
      auto max_x = [&](const Loop& l) {
        double m = -1e300;
        for (auto idx : l) m = std::max(m, pts[idx].x);
        return m;
      };
      return max_x(a) > max_x(b);
    });
    Loop loop = exteriors[e];
    for (std::size_t h = 0; h < group.size(); ++h) {
      std::vector<Loop> pending(group.begin() + static_cast<std::ptrdiff_t>(h) + 1, group.end());
      bridge(loop, group[h], pending, pts);
    }
    ear_clip(std::move(loop), pts, out);
  }
  return out;
}

Polygon simplify_rings(const Polygon& poly) {
  Polygon out;
  for (std::size_t r = 0; r < poly.ring_sizes.size(); ++r) {
    const auto ring = poly.ring(r);
    std::vector<Vec2> v;
    for (const auto& p : ring)
      if (v.empty() || dist2(v.back(), p) > 1e-18) v.push_back(p);
    while (v.size() > 1 && dist2(v.front(), v.back()) <= 1e-18) v.pop_back();
    bool changed = true;
    while (changed && v.size() >= 3) {
      changed = false;
      for (std::size_t i = 0; i < v.size() && v.size() >= 3; ++i) {
        const std::size_t n = v.size();
        if (collinear(v[(i + n - 1) % n], v[i], v[(i + 1) % n])) {
          v.erase(v.begin() + static_cast<std::ptrdiff_t>(i));
          changed = true;
          break;
        }
      }
    }
    if (v.size() < 3) continue;
    out.points.insert(out.points.end(), v.begin(), v.end());
    out.ring_sizes.push_back(static_cast<std::uint32_t>(v.size()));
  }
  return out;
}

Prism extrude(const Polygon& footprint, double base, double height) {
  const auto n = static_cast<std::uint32_t>(footprint.points.size());
  Prism prism;
  prism.vertices.reserve(2 * n);
  for (const auto& p : footprint.points) prism.vertices.push_back({p.x, p.y, base});
  for (const auto& p : footprint.points) prism.vertices.push_back({p.x, p.y, base + height});

  const auto roof = triangulate(footprint);
  for (std::size_t t = 0; t < roof.size(); t += 3) {
    prism.indices.insert(prism.indices.end(), {n + roof[t], n + roof[t + 1], n + roof[t + 2]});
  }
  for (std::size_t t = 0; t < roof.size(); t += 3) {
    prism.indices.insert(prism.indices.end(), {roof[t + 2], roof[t + 1], roof[t]});
  }
  const auto off = ring_offsets(footprint);
  for (std::size_t r = 0; r < footprint.ring_sizes.size(); ++r) {
    const auto size = footprint.ring_sizes[r];
    for (std::uint32_t i = 0; i < size; ++i) {
      const auto a0 = static_cast<std::uint32_t>(off[r] + i);
      const auto b0 = static_cast<std::uint32_t>(off[r] + (i + 1) % size);
      prism.indices.insert(prism.indices.end(), {a0, b0, b0 + n, a0, b0 + n, a0 + n});
    }
  }
  return prism;
}

}  // namespace utk::ingest
