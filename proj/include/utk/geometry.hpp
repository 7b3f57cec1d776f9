#pragma once

// Workspace-local projection, planar predicates, and spatial indexes.
//
// Conventions: x points east, y north, z up, all in meters. Region
// boundaries are closed (a point on an edge is inside). Exterior rings are
// counter-clockwise and holes clockwise.

#include <cstdint>
#include <span>
#include <vector>

namespace utk::geo {

struct Vec2 {
  double x = 0, y = 0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;
  friend bool operator==(const Vec3&, const Vec3&) = default;
  Vec2 xy() const { return {x, y}; }
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
double norm(Vec3 v);
Vec3 normalized(Vec3 v);

struct Geodetic {
  double lat = 0, lon = 0, height = 0;
  friend bool operator==(const Geodetic&, const Geodetic&) = default;
};

/// Axis-aligned 2D box. Default-constructed boxes are empty.
struct Box2 {
  double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;

  bool empty() const { return min_x > max_x || min_y > max_y; }
  void expand(Vec2 p);
  void expand(const Box2& b);
  bool intersects(const Box2& b) const;
  bool contains(Vec2 p) const;
  /// Squared planar distance from p to the box (0 inside).
  double distance2(Vec2 p) const;
  static Box2 of_point(Vec2 p) { return {p.x, p.y, p.x, p.y}; }
};

/// Local equirectangular tangent frame around (lat0, lon0).
struct LocalFrame {
  static constexpr double kEarthRadius = 6371000.0;
  double lat0 = 0, lon0 = 0;

  Vec3 project(double lat, double lon, double height) const;
  Vec3 project(const Geodetic& g) const { return project(g.lat, g.lon, g.height); }
  Geodetic unproject(Vec3 p) const;
  friend bool operator==(const LocalFrame&, const LocalFrame&) = default;
};

/// Great-circle distance on the frame's sphere (haversine), meters.
double great_circle_distance(const Geodetic& a, const Geodetic& b);

/// Planar polygon made of one or more rings stored back to back.
struct Polygon {
  std::vector<Vec2> points;
  std::vector<std::uint32_t> ring_sizes;

  std::span<const Vec2> ring(std::size_t i) const;
  std::size_t ring_count() const { return ring_sizes.size(); }
  Box2 bounds() const;
  double area() const;  // signed sum; positive for valid polygons
  Vec2 centroid() const;
};

struct Polyline {
  std::vector<Vec2> points;
  std::vector<std::uint32_t> part_sizes;

  std::span<const Vec2> part(std::size_t i) const;
  Box2 bounds() const;
  Vec2 centroid() const;
};

/// Edge-on-boundary tolerance in meters.
inline constexpr double kBoundaryTolerance = 1e-7;

double signed_area(std::span<const Vec2> ring);
double orient(Vec2 a, Vec2 b, Vec2 c);
bool point_on_segment(Vec2 p, Vec2 a, Vec2 b);
bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d);
double distance2_to_segment(Vec2 p, Vec2 a, Vec2 b);

bool point_in_polygon(Vec2 p, const Polygon& poly);
double distance_to_polygon(Vec2 p, const Polygon& poly);
double distance_to_polyline(Vec2 p, const Polyline& line);
bool point_on_polyline(Vec2 p, const Polyline& line);

/// Reorders rings so exterior rings are CCW and holes CW, using nesting
/// depth to decide which is which. Returns true if anything was flipped.
bool normalize_winding(Polygon& poly);

/// Convex hull (CCW, no repeated first vertex).
std::vector<Vec2> convex_hull(std::vector<Vec2> pts);

enum class ShapeKind { point, region, polyline };

/// Element geometry used by joins: a 3D point, a region, or a polyline.
struct Shape {
  ShapeKind kind = ShapeKind::point;
  Vec3 point;
  Polygon region;
  Polyline line;

  static Shape of_point(Vec3 p);
  static Shape of_region(Polygon poly);
  static Shape of_polyline(Polyline line);

  Box2 bounds() const;
  /// Representative point: the point itself, or the area/length centroid.
  Vec2 centroid() const;
};

enum class Predicate { contains, within, intersects };

/// relate(a, b, contains) is true iff b lies in a (closed semantics).
/// Throws Error(UnsupportedKindPair) for polyline/polyline containment.
bool relate(const Shape& a, const Shape& b, Predicate predicate);

/// Distance used by nearest joins: 3D for point targets, planar distance to
/// the geometry (0 inside a region) for region and polyline targets.
double shape_distance(Vec3 query, const Shape& target);

enum class IndexKind { uniform_grid, rtree };

/// Build-once box index. Queries return candidate ids (ascending, unique)
/// whose boxes intersect the probe; a superset of the exact answer.
class SpatialIndex {
public:
  SpatialIndex() = default;
  SpatialIndex(IndexKind kind, std::vector<Box2> boxes);

  IndexKind kind() const { return kind_; }
  std::size_t size() const { return boxes_.size(); }
  std::vector<std::uint32_t> query(const Box2& probe) const;
  const Box2& box(std::uint32_t id) const { return boxes_[id]; }

  struct Node {
    Box2 box;
    std::uint32_t first = 0;  // child node or item slot
    std::uint32_t count = 0;
    bool leaf = true;
  };
  // rtree internals, exposed for nearest-neighbour search.
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<std::uint32_t>& items() const { return items_; }
  std::uint32_t root() const { return root_; }

private:
  void build_grid();
  void build_rtree();

  IndexKind kind_ = IndexKind::rtree;
  std::vector<Box2> boxes_;
  // uniform grid
  Box2 extent_;
  double cell_ = 1;
  std::size_t nx_ = 0, ny_ = 0;
  std::vector<std::vector<std::uint32_t>> cells_;
  // rtree (STR packed)
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> items_;
  std::uint32_t root_ = 0;
};

struct NearestHit {
  std::uint32_t index = 0;
  double distance = 0;
};

/// Nearest target per query. Ties resolve to the lowest target index.
/// Throws Error(EmptyTarget) when targets is empty.
std::vector<NearestHit> nearest(std::span<const Vec3> queries,
                                std::span<const Shape> targets);

}  // namespace utk::geo
