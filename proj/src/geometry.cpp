#include "utk/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <queue>
#include <tuple>

#include "utk/error.hpp"

namespace utk::geo {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

Vec2 lerp(Vec2 a, Vec2 b, double t) { return {a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t}; }

template <typename Fn>
void for_each_edge(const Polygon& poly, Fn&& fn) {
  std::size_t offset = 0;
  for (auto size : poly.ring_sizes) {
    for (std::size_t i = 0; i < size; ++i) {
      fn(poly.points[offset + i], poly.points[offset + (i + 1) % size]);
    }
    offset += size;
  }
}

template <typename Fn>
void for_each_segment(const Polyline& line, Fn&& fn) {
  std::size_t offset = 0;
  for (auto size : line.part_sizes) {
    for (std::size_t i = 0; i + 1 < size; ++i) {
      fn(line.points[offset + i], line.points[offset + i + 1]);
    }
    offset += size;
  }
}

bool on_region_boundary(Vec2 p, const Polygon& poly) {
  bool hit = false;
  for_each_edge(poly, [&](Vec2 a, Vec2 b) {
    if (!hit && point_on_segment(p, a, b)) hit = true;
  });
  return hit;
}

// Parameters along [a, b] where it meets the edges of poly.
std::vector<double> split_parameters(Vec2 a, Vec2 b, const Polygon& poly) {
  std::vector<double> ts{0.0, 1.0};
  const Vec2 d{b.x - a.x, b.y - a.y};
  const double len2 = d.x * d.x + d.y * d.y;
  if (len2 == 0) return ts;
  auto param_of = [&](Vec2 p) { return ((p.x - a.x) * d.x + (p.y - a.y) * d.y) / len2; };
  for_each_edge(poly, [&](Vec2 c, Vec2 e) {
    const Vec2 f{e.x - c.x, e.y - c.y};
    const double denom = d.x * f.y - d.y * f.x;
    if (denom != 0) {
      const double t = ((c.x - a.x) * f.y - (c.y - a.y) * f.x) / denom;
      const double u = ((c.x - a.x) * d.y - (c.y - a.y) * d.x) / denom;
      if (t > 0 && t < 1 && u >= 0 && u <= 1) ts.push_back(t);
    } else {
      // Parallel: collinear overlaps contribute their endpoints.
      if (point_on_segment(c, a, b)) ts.push_back(std::clamp(param_of(c), 0.0, 1.0));
      if (point_on_segment(e, a, b)) ts.push_back(std::clamp(param_of(e), 0.0, 1.0));
    }
  });
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  return ts;
}

// Every piece of segment [a, b] lies inside poly.
bool segment_inside(Vec2 a, Vec2 b, const Polygon& poly) {
  if (!point_in_polygon(a, poly) || !point_in_polygon(b, poly)) return false;
  const auto ts = split_parameters(a, b, poly);
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    if (!point_in_polygon(lerp(a, b, 0.5 * (ts[i] + ts[i + 1])), poly)) return false;
  }
  return true;
}

bool region_contains_region(const Polygon& a, const Polygon& b) {
  if (b.points.empty()) return false;
  bool ok = true;
  for_each_edge(b, [&](Vec2 p, Vec2 q) {
    if (ok && !segment_inside(p, q, a)) ok = false;
  });
  if (!ok) return false;
  // A boundary point of a strictly inside b means a hole of a sits in b.
  for (const auto& p : a.points) {
    if (point_in_polygon(p, b) && !on_region_boundary(p, b)) return false;
  }
  return true;
}

bool region_contains_polyline(const Polygon& a, const Polyline& b) {
  if (b.points.empty()) return false;
  for (const auto& p : b.points)
    if (!point_in_polygon(p, a)) return false;
  bool ok = true;
  for_each_segment(b, [&](Vec2 p, Vec2 q) {
    if (ok && !segment_inside(p, q, a)) ok = false;
  });
  return ok;
}

bool regions_intersect(const Polygon& a, const Polygon& b) {
  if (!a.bounds().intersects(b.bounds())) return false;
  bool hit = false;
  for_each_edge(a, [&](Vec2 p, Vec2 q) {
    if (hit) return;
    for_each_edge(b, [&](Vec2 r, Vec2 s) {
      if (!hit && segments_intersect(p, q, r, s)) hit = true;
    });
  });
  if (hit) return true;
  for (std::size_t i = 0, off = 0; i < a.ring_sizes.size(); off += a.ring_sizes[i++])
    if (point_in_polygon(a.points[off], b)) return true;
  for (std::size_t i = 0, off = 0; i < b.ring_sizes.size(); off += b.ring_sizes[i++])
    if (point_in_polygon(b.points[off], a)) return true;
  return false;
}

bool region_intersects_polyline(const Polygon& a, const Polyline& b) {
  if (!a.bounds().intersects(b.bounds())) return false;
  for (const auto& p : b.points)
    if (point_in_polygon(p, a)) return true;
  bool hit = false;
  for_each_segment(b, [&](Vec2 p, Vec2 q) {
    if (hit) return;
    for_each_edge(a, [&](Vec2 r, Vec2 s) {
      if (!hit && segments_intersect(p, q, r, s)) hit = true;
    });
  });
  return hit;
}

bool polylines_intersect(const Polyline& a, const Polyline& b) {
  if (!a.bounds().intersects(b.bounds())) return false;
  bool hit = false;
  for_each_segment(a, [&](Vec2 p, Vec2 q) {
    if (hit) return;
    for_each_segment(b, [&](Vec2 r, Vec2 s) {
      if (!hit && segments_intersect(p, q, r, s)) hit = true;
    });
  });
  return hit;
}

bool points_equal(Vec2 a, Vec2 b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy <= kBoundaryTolerance * kBoundaryTolerance;
}

}  // namespace

double norm(Vec3 v) { return std::sqrt(dot(v, v)); }

Vec3 normalized(Vec3 v) {
  const double n = norm(v);
  return n > 0 ? v * (1.0 / n) : v;
}

void Box2::expand(Vec2 p) {
  min_x = std::min(min_x, p.x);
  min_y = std::min(min_y, p.y);
  max_x = std::max(max_x, p.x);
  max_y = std::max(max_y, p.y);
}

void Box2::expand(const Box2& b) {
  if (b.empty()) return;
  expand(Vec2{b.min_x, b.min_y});
  expand(Vec2{b.max_x, b.max_y});
}

bool Box2::intersects(const Box2& b) const {
  return !(b.min_x > max_x || b.max_x < min_x || b.min_y > max_y || b.max_y < min_y);
}

bool Box2::contains(Vec2 p) const {
  return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y;
}

double Box2::distance2(Vec2 p) const {
  const double dx = p.x < min_x ? min_x - p.x : (p.x > max_x ? p.x - max_x : 0.0);
  const double dy = p.y < min_y ? min_y - p.y : (p.y > max_y ? p.y - max_y : 0.0);
  return dx * dx + dy * dy;
}

Vec3 LocalFrame::project(double lat, double lon, double height) const {
  const double x = kEarthRadius * std::cos(lat0 * kDegToRad) * ((lon - lon0) * kDegToRad);
  const double y = kEarthRadius * ((lat - lat0) * kDegToRad);
  return {x, y, height};
}

Geodetic LocalFrame::unproject(Vec3 p) const {
  const double lat = lat0 + p.y / kEarthRadius / kDegToRad;
  const double lon = lon0 + p.x / (kEarthRadius * std::cos(lat0 * kDegToRad)) / kDegToRad;
  return {lat, lon, p.z};
}

double great_circle_distance(const Geodetic& a, const Geodetic& b) {
  const double p1 = a.lat * kDegToRad, p2 = b.lat * kDegToRad;
  const double dp = p2 - p1, dl = (b.lon - a.lon) * kDegToRad;
  const double h = std::sin(dp / 2) * std::sin(dp / 2) +
                   std::cos(p1) * std::cos(p2) * std::sin(dl / 2) * std::sin(dl / 2);
  return 2 * LocalFrame::kEarthRadius * std::asin(std::min(1.0, std::sqrt(h)));
}

std::span<const Vec2> Polygon::ring(std::size_t i) const {
  std::size_t offset = 0;
  for (std::size_t k = 0; k < i; ++k) offset += ring_sizes[k];
  return {points.data() + offset, ring_sizes[i]};
}

Box2 Polygon::bounds() const {
  Box2 b;
  for (const auto& p : points) b.expand(p);
  return b;
}

double Polygon::area() const {
  double total = 0;
  std::size_t offset = 0;
  for (auto size : ring_sizes) {
    total += signed_area({points.data() + offset, size});
    offset += size;
  }
  return total;
}

Vec2 Polygon::centroid() const {
  double a = 0, cx = 0, cy = 0;
  for_each_edge(*this, [&](Vec2 p, Vec2 q) {
    const double w = p.x * q.y - q.x * p.y;
    a += w;
    cx += (p.x + q.x) * w;
    cy += (p.y + q.y) * w;
  });
  if (std::abs(a) < 1e-12) {
    Vec2 m;
    for (const auto& p : points) { m.x += p.x; m.y += p.y; }
    const double n = points.empty() ? 1.0 : static_cast<double>(points.size());
    return {m.x / n, m.y / n};
  }
  return {cx / (3 * a), cy / (3 * a)};
}

std::span<const Vec2> Polyline::part(std::size_t i) const {
  std::size_t offset = 0;
  for (std::size_t k = 0; k < i; ++k) offset += part_sizes[k];
  return {points.data() + offset, part_sizes[i]};
}

Box2 Polyline::bounds() const {
  Box2 b;
  for (const auto& p : points) b.expand(p);
  return b;
}

Vec2 Polyline::centroid() const {
  double total = 0, cx = 0, cy = 0;
  for_each_segment(*this, [&](Vec2 a, Vec2 b) {
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    total += len;
    cx += 0.5 * (a.x + b.x) * len;
    cy += 0.5 * (a.y + b.y) * len;
  });
  if (total == 0) {
    if (points.empty()) return {};
    return points.front();
  }
  return {cx / total, cy / total};
}

double signed_area(std::span<const Vec2> ring) {
  double a = 0;
  for (std::size_t i = 0; i < ring.size(); ++i) {
    const auto& p = ring[i];
    const auto& q = ring[(i + 1) % ring.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

double orient(Vec2 a, Vec2 b, Vec2 c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

double distance2_to_segment(Vec2 p, Vec2 a, Vec2 b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
  return ex * ex + ey * ey;
}

bool point_on_segment(Vec2 p, Vec2 a, Vec2 b) {
  if (p.x < std::min(a.x, b.x) - kBoundaryTolerance || p.x > std::max(a.x, b.x) + kBoundaryTolerance ||
      p.y < std::min(a.y, b.y) - kBoundaryTolerance || p.y > std::max(a.y, b.y) + kBoundaryTolerance)
    return false;
  return distance2_to_segment(p, a, b) <= kBoundaryTolerance * kBoundaryTolerance;
}

bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const double d1 = orient(c, d, a), d2 = orient(c, d, b);
  const double d3 = orient(a, b, c), d4 = orient(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  return point_on_segment(a, c, d) || point_on_segment(b, c, d) ||
         point_on_segment(c, a, b) || point_on_segment(d, a, b);
}

bool point_in_polygon(Vec2 p, const Polygon& poly) {
  // Closed boundary first, then crossing-number parity.
  bool inside = false;
  bool boundary = false;
  for_each_edge(poly, [&](Vec2 a, Vec2 b) {
    if (boundary) return;
    if (point_on_segment(p, a, b)) {
      boundary = true;
      return;
    }
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x) inside = !inside;
    }
  });
  return boundary || inside;
}

double distance_to_polygon(Vec2 p, const Polygon& poly) {
  if (point_in_polygon(p, poly)) return 0.0;
  double best = 1e300;
  for_each_edge(poly, [&](Vec2 a, Vec2 b) { best = std::min(best, distance2_to_segment(p, a, b)); });
  return std::sqrt(best);
}

double distance_to_polyline(Vec2 p, const Polyline& line) {
  double best = 1e300;
  for_each_segment(line, [&](Vec2 a, Vec2 b) { best = std::min(best, distance2_to_segment(p, a, b)); });
  if (best == 1e300 && !line.points.empty()) {
    const auto& q = line.points.front();
    best = (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y);
  }
  return std::sqrt(best);
}

bool point_on_polyline(Vec2 p, const Polyline& line) {
  bool hit = false;
  for_each_segment(line, [&](Vec2 a, Vec2 b) {
    if (!hit && point_on_segment(p, a, b)) hit = true;
  });
  return hit;
}

bool normalize_winding(Polygon& poly) {
  const std::size_t n = poly.ring_sizes.size();
  std::vector<std::size_t> offsets(n);
  for (std::size_t i = 0, off = 0; i < n; off += poly.ring_sizes[i++]) offsets[i] = off;

  bool flipped = false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 probe = poly.points[offsets[i]];
    int depth = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      Polygon other;
      other.points.assign(poly.points.begin() + offsets[j],
                          poly.points.begin() + offsets[j] + poly.ring_sizes[j]);
      other.ring_sizes = {poly.ring_sizes[j]};
      if (point_in_polygon(probe, other) && !on_region_boundary(probe, other)) ++depth;
    }
    const bool want_ccw = depth % 2 == 0;
    auto first = poly.points.begin() + offsets[i];
    auto last = first + poly.ring_sizes[i];
    const double area = signed_area({&*first, poly.ring_sizes[i]});
    if ((area > 0) != want_ccw && area != 0) {
      // Keep the first vertex in place.
      std::reverse(first + 1, last);
      flipped = true;
    }
  }
  return flipped;
}

std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return std::tie(a.x, a.y) < std::tie(b.x, b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && orient(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && orient(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

Shape Shape::of_point(Vec3 p) {
  Shape s;
  s.kind = ShapeKind::point;
  s.point = p;
  return s;
}

Shape Shape::of_region(Polygon poly) {
  Shape s;
  s.kind = ShapeKind::region;
  s.region = std::move(poly);
  return s;
}

Shape Shape::of_polyline(Polyline line) {
  Shape s;
  s.kind = ShapeKind::polyline;
  s.line = std::move(line);
  return s;
}

Box2 Shape::bounds() const {
  switch (kind) {
    case ShapeKind::point: return Box2::of_point(point.xy());
    case ShapeKind::region: return region.bounds();
    case ShapeKind::polyline: return line.bounds();
  }
  return {};
}

Vec2 Shape::centroid() const {
  switch (kind) {
    case ShapeKind::point: return point.xy();
    case ShapeKind::region: return region.centroid();
    case ShapeKind::polyline: return line.centroid();
  }
  return {};
}

bool relate(const Shape& a, const Shape& b, Predicate predicate) {
  if (predicate == Predicate::within) return relate(b, a, Predicate::contains);

  if (predicate == Predicate::intersects) {
    if (a.kind == ShapeKind::point && b.kind == ShapeKind::point) return points_equal(a.point.xy(), b.point.xy());
    if (a.kind == ShapeKind::point) return relate(b, a, Predicate::intersects);
    // a is a region or polyline from here on
    if (b.kind == ShapeKind::point) {
      return a.kind == ShapeKind::region ? point_in_polygon(b.point.xy(), a.region)
                                         : point_on_polyline(b.point.xy(), a.line);
    }
    if (a.kind == ShapeKind::region && b.kind == ShapeKind::region) return regions_intersect(a.region, b.region);
    if (a.kind == ShapeKind::region) return region_intersects_polyline(a.region, b.line);
    if (b.kind == ShapeKind::region) return region_intersects_polyline(b.region, a.line);
    return polylines_intersect(a.line, b.line);
  }

  // contains
  switch (a.kind) {
    case ShapeKind::point:
      return b.kind == ShapeKind::point && points_equal(a.point.xy(), b.point.xy());
    case ShapeKind::region:
      if (b.kind == ShapeKind::point) return point_in_polygon(b.point.xy(), a.region);
      if (b.kind == ShapeKind::region) return region_contains_region(a.region, b.region);
      return region_contains_polyline(a.region, b.line);
    case ShapeKind::polyline:
      if (b.kind == ShapeKind::point) return point_on_polyline(b.point.xy(), a.line);
      if (b.kind == ShapeKind::polyline)
        throw Error(ErrorCode::UnsupportedKindPair, "containment between polylines is not supported");
      return false;
  }
  return false;
}

double shape_distance(Vec3 q, const Shape& target) {
  switch (target.kind) {
    case ShapeKind::point: {
      const double dx = q.x - target.point.x, dy = q.y - target.point.y, dz = q.z - target.point.z;
      return std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    case ShapeKind::region: return distance_to_polygon(q.xy(), target.region);
    case ShapeKind::polyline: return distance_to_polyline(q.xy(), target.line);
  }
  return 0;
}

SpatialIndex::SpatialIndex(IndexKind kind, std::vector<Box2> boxes)
  : kind_(kind), boxes_(std::move(boxes)) {
  if (kind_ == IndexKind::uniform_grid) build_grid();
  else build_rtree();
}

void SpatialIndex::build_grid() {
  for (const auto& b : boxes_) extent_.expand(b);
  if (boxes_.empty()) return;
  const double w = extent_.max_x - extent_.min_x, h = extent_.max_y - extent_.min_y;
  // Aim for about two items per cell.
  const double target_cells = std::max(1.0, static_cast<double>(boxes_.size()) / 2.0);
  const double area = std::max(w * h, 1e-12);
  cell_ = std::max({std::sqrt(area / target_cells), w / 4096.0, h / 4096.0, 1e-9});
  nx_ = static_cast<std::size_t>(w / cell_) + 1;
  ny_ = static_cast<std::size_t>(h / cell_) + 1;
  cells_.assign(nx_ * ny_, {});
  for (std::uint32_t id = 0; id < boxes_.size(); ++id) {
    const auto& b = boxes_[id];
    const auto x0 = static_cast<std::size_t>((b.min_x - extent_.min_x) / cell_);
    const auto x1 = std::min(nx_ - 1, static_cast<std::size_t>((b.max_x - extent_.min_x) / cell_));
    const auto y0 = static_cast<std::size_t>((b.min_y - extent_.min_y) / cell_);
    const auto y1 = std::min(ny_ - 1, static_cast<std::size_t>((b.max_y - extent_.min_y) / cell_));
    for (auto y = y0; y <= y1; ++y)
      for (auto x = x0; x <= x1; ++x) cells_[y * nx_ + x].push_back(id);
  }
}

void SpatialIndex::build_rtree() {
  constexpr std::size_t kFanout = 16;
  nodes_.clear();
  items_.resize(boxes_.size());
  std::iota(items_.begin(), items_.end(), 0u);
  if (boxes_.empty()) return;

  auto cx = [](const Box2& b) { return 0.5 * (b.min_x + b.max_x); };
  auto cy = [](const Box2& b) { return 0.5 * (b.min_y + b.max_y); };

  // Sort-Tile-Recursive packing of the leaves.
  const std::size_t n = items_.size();
  const std::size_t leaves = (n + kFanout - 1) / kFanout;
  const auto slices = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(leaves))));
  const std::size_t per_slice = slices * kFanout;
  std::stable_sort(items_.begin(), items_.end(),
                   [&](auto a, auto b) { return cx(boxes_[a]) < cx(boxes_[b]); });
  for (std::size_t s = 0; s < n; s += per_slice) {
    const auto end = std::min(n, s + per_slice);
    std::stable_sort(items_.begin() + s, items_.begin() + end,
                     [&](auto a, auto b) { return cy(boxes_[a]) < cy(boxes_[b]); });
  }

  std::vector<std::uint32_t> level;
  for (std::size_t s = 0; s < n; s += kFanout) {
    Node node;
    node.first = static_cast<std::uint32_t>(s);
    node.count = static_cast<std::uint32_t>(std::min(kFanout, n - s));
    node.leaf = true;
    for (std::size_t i = 0; i < node.count; ++i) node.box.expand(boxes_[items_[s + i]]);
    level.push_back(static_cast<std::uint32_t>(nodes_.size()));
    nodes_.push_back(node);
  }
  // Upper levels: consecutive runs of child nodes are contiguous in nodes_.
  while (level.size() > 1) {
    std::vector<std::uint32_t> next;
    for (std::size_t s = 0; s < level.size(); s += kFanout) {
      Node node;
      node.first = level[s];
      node.count = static_cast<std::uint32_t>(std::min(kFanout, level.size() - s));
      node.leaf = false;
      for (std::size_t i = 0; i < node.count; ++i) node.box.expand(nodes_[level[s + i]].box);
      next.push_back(static_cast<std::uint32_t>(nodes_.size()));
      nodes_.push_back(node);
    }
    level = std::move(next);
  }
  root_ = level.front();
}

std::vector<std::uint32_t> SpatialIndex::query(const Box2& probe) const {
  std::vector<std::uint32_t> out;
  if (boxes_.empty() || probe.empty()) return out;
  if (kind_ == IndexKind::uniform_grid) {
    if (!probe.intersects(extent_)) return out;
    auto clampi = [](double v, std::size_t hi) {
      if (v < 0) return std::size_t{0};
      return std::min(hi - 1, static_cast<std::size_t>(v));
    };
    const auto x0 = clampi((probe.min_x - extent_.min_x) / cell_, nx_);
    const auto x1 = clampi((probe.max_x - extent_.min_x) / cell_, nx_);
    const auto y0 = clampi((probe.min_y - extent_.min_y) / cell_, ny_);
    const auto y1 = clampi((probe.max_y - extent_.min_y) / cell_, ny_);
    for (auto y = y0; y <= y1; ++y)
      for (auto x = x0; x <= x1; ++x)
        for (auto id : cells_[y * nx_ + x])
          if (boxes_[id].intersects(probe)) out.push_back(id);
  } else {
    std::vector<std::uint32_t> stack{root_};
    while (!stack.empty()) {
      const Node& node = nodes_[stack.back()];
      stack.pop_back();
      if (!node.box.intersects(probe)) continue;
      for (std::uint32_t i = 0; i < node.count; ++i) {
        if (node.leaf) {
          const auto id = items_[node.first + i];
          if (boxes_[id].intersects(probe)) out.push_back(id);
        } else {
          stack.push_back(node.first + i);
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<NearestHit> nearest(std::span<const Vec3> queries, std::span<const Shape> targets) {
  if (targets.empty()) throw Error(ErrorCode::EmptyTarget, "nearest join needs at least one target");
  std::vector<Box2> boxes;
  boxes.reserve(targets.size());
  for (const auto& t : targets) boxes.push_back(t.bounds());
  const SpatialIndex index(IndexKind::rtree, std::move(boxes));
  const auto& nodes = index.nodes();
  const auto& items = index.items();

  std::vector<NearestHit> hits(queries.size());
  // Best-first search. Queue entries: (distance bound, is_item, id). Nodes sort
  // before items at equal distance so an item is only accepted once no node
  // could hold a closer or equally close, lower-indexed target.
  using Entry = std::tuple<double, int, std::uint32_t>;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const Vec3 q = queries[qi];
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
    queue.emplace(std::sqrt(nodes[index.root()].box.distance2(q.xy())), 0, index.root());
    while (!queue.empty()) {
      const auto [dist, is_item, id] = queue.top();
      queue.pop();
      if (is_item) {
        hits[qi] = {id, dist};
        break;
      }
      const auto& node = nodes[id];
      for (std::uint32_t i = 0; i < node.count; ++i) {
        if (node.leaf) {
          const auto target = items[node.first + i];
          queue.emplace(shape_distance(q, targets[target]), 1, target);
        } else {
          const auto child = node.first + i;
          queue.emplace(std::sqrt(nodes[child].box.distance2(q.xy())), 0, child);
        }
      }
    }
  }
  return hits;
}

}  // namespace utk::geo
