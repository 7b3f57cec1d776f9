#pragma once

// Shadow accumulation: a low-accuracy solar ephemeris, a BVH over building
// triangles and per-sample occlusion counts over a sun path.

#include <array>
#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "utk/error.hpp"
#include "utk/geometry.hpp"
#include "utk/ingest.hpp"
#include "utk/layers.hpp"

namespace utk::shadow {

using TimePoint = std::chrono::sys_seconds;

/// "2021-12-21T08:00Z", "2021-12-21T08:00:30-05:00", "2021-12-21 08:00".
/// A missing offset means UTC. Throws Error(SyntaxError).
TimePoint parse_iso_time(std::string_view text);
std::string format_iso_time(TimePoint t);

/// "10m", "1h", "30s" or a bare number of minutes. Throws SyntaxError.
std::chrono::seconds parse_step(std::string_view text);

struct SunAngles {
  double azimuth = 0;    // degrees clockwise from north
  double elevation = 0;  // degrees above the horizon, no refraction
};

/// Valid for 1950-2100; about 0.05 deg against NREL SPA.
SunAngles sun_position(double lat, double lon, TimePoint t);

/// Unit vector toward the sun in the local frame (x east, y north, z up).
geo::Vec3 sun_direction(const SunAngles& a);

struct SunInstant {
  TimePoint time;
  SunAngles sun;
};

struct SunPath {
  double lat = 0, lon = 0;
  std::chrono::seconds step{600};  // weight of each instant
  std::vector<SunInstant> instants;
};

/// Instants from, from + step, ... strictly before `to`. Throws EmptyPath.
SunPath make_sun_path(double lat, double lon, TimePoint from, TimePoint to, std::chrono::seconds step);

struct Box3 {
  geo::Vec3 lo{1e300, 1e300, 1e300};
  geo::Vec3 hi{-1e300, -1e300, -1e300};
  void expand(geo::Vec3 p);
  void expand(const Box3& b);
  bool contains(const Box3& b) const;
};

using Triangle = std::array<geo::Vec3, 3>;

/// Möller-Trumbore; hits with t in (1e-9, tmax].
bool ray_hits_triangle(geo::Vec3 origin, geo::Vec3 dir, const Triangle& tri, double tmax = 1e300);

class Bvh {
public:
  struct Node {
    Box3 box;
    std::uint32_t left = 0, right = 0;  // children when count == 0
    std::uint32_t first = 0, count = 0;  // leaf range in order()
  };

  /// Median split on the longest centroid axis. Throws EmptyScene.
  explicit Bvh(std::vector<Triangle> triangles, std::uint32_t leaf_size = 4);

  bool any_hit(geo::Vec3 origin, geo::Vec3 dir, double tmax = 1e300) const;

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  /// Leaf ranges index into this permutation of triangles().
  const std::vector<std::uint32_t>& order() const { return order_; }
  std::size_t leaf_count() const;

private:
  std::uint32_t build(std::uint32_t first, std::uint32_t count, std::uint32_t leaf_size);

  std::vector<Triangle> triangles_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

bool linear_any_hit(std::span<const Triangle> triangles, geo::Vec3 origin, geo::Vec3 dir, double tmax = 1e300);

/// Triangles of every mesh3d layer, in local coordinates.
std::vector<Triangle> scene_triangles(std::span<const layers::PhysicalLayer* const> meshes);

inline constexpr double kRayOffset = 1e-3;

struct ShadowOptions {
  std::string name = "shadow";
  geo::LocalFrame frame;  // frame of the sample and scene coordinates
};

/// Fraction of above-horizon instants at which each sample is occluded or
/// faces away from the sun. A null scene pointer means nothing occludes.
/// Output points sit at the sample positions; metadata carries
/// accumulation_minutes. Throws EmptyPath.
layers::ThematicLayer accumulate_shadow(std::span<const ingest::SurfaceSample> samples, const Bvh* scene,
                                        const SunPath& path, const ShadowOptions& options, WarningLog* log = nullptr);

/// Upward-facing samples at cell centers of a ground grid covering `box`.
std::vector<ingest::SurfaceSample> ground_samples(const geo::Box2& box, double cell, double z = 0);

}  // namespace utk::shadow
