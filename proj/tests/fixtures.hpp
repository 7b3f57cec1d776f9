#pragma once

// Small scene builders shared by the test binaries.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "utk/engine.hpp"
#include "utk/geometry.hpp"
#include "utk/ingest.hpp"
#include "utk/layers.hpp"

namespace fixtures {

using utk::geo::LocalFrame;
using utk::geo::Vec2;
using utk::geo::Vec3;

inline const LocalFrame kFrame{42.36, -71.06};

/// CCW rectangle ring without a repeated closing vertex.
inline std::vector<Vec3> rect(double x0, double y0, double x1, double y1, double z = 0) {
  return {{x0, y0, z}, {x1, y0, z}, {x1, y1, z}, {x0, y1, z}};
}

inline utk::layers::PhysicalLayer empty_layer(const std::string& name, utk::layers::PhysicalKind kind,
                                              const LocalFrame& frame = kFrame) {
  utk::layers::PhysicalLayer l;
  l.name = name;
  l.kind = kind;
  l.crs_origin = frame;
  return l;
}

inline void add_region(utk::layers::PhysicalLayer& layer, std::vector<Vec3> ring) {
  const auto n = static_cast<std::uint32_t>(ring.size());
  layer.add_local(std::move(ring)).rings = {n};
}

inline void add_line(utk::layers::PhysicalLayer& layer, std::vector<Vec3> pts) {
  const auto n = static_cast<std::uint32_t>(pts.size());
  layer.add_local(std::move(pts)).rings = {n};
}

/// Closed box mesh object via extrusion.
inline void add_box(utk::layers::PhysicalLayer& layer, double x0, double y0, double x1, double y1, double height) {
  utk::geo::Polygon fp;
  for (const auto& p : rect(x0, y0, x1, y1)) fp.points.push_back(p.xy());
  fp.ring_sizes = {4};
  auto prism = utk::ingest::extrude(fp, 0, height);
  layer.add_local(std::move(prism.vertices)).indices = std::move(prism.indices);
}

/// Grid of `nx` x `ny` square cells of side `cell` starting at the origin.
inline utk::layers::PhysicalLayer cell_grid(const std::string& name, int nx, int ny, double cell,
                                            const LocalFrame& frame = kFrame) {
  auto l = empty_layer(name, utk::layers::PhysicalKind::polygons2d, frame);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) add_region(l, rect(i * cell, j * cell, (i + 1) * cell, (j + 1) * cell));
  return l;
}

inline utk::layers::ThematicLayer thematic(const std::string& name, const std::vector<Vec3>& pts,
                                           const std::vector<utk::Scalar>& values, const LocalFrame& frame = kFrame) {
  utk::layers::ThematicLayer t;
  t.name = name;
  t.crs_origin = frame;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto g = frame.unproject(pts[i]);
    t.add(g.lat, g.lon, g.height, values[i]);
  }
  return t;
}

/// Scratch directory removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("utk_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

private:
  std::filesystem::path path_;
};

/// Recursive halving sum over [lo, hi); the engine's reduction order.
inline double reference_sum(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return v[lo];
  const std::size_t mid = lo + (hi - lo) / 2;
  return reference_sum(v, lo, mid) + reference_sum(v, mid, hi);
}

/// Reference join: scans every pair, no index. entries[out] = in indices.
inline std::vector<std::vector<std::uint32_t>> brute_entries(utk::grammar::Relation relation,
                                                             const std::vector<utk::geo::Shape>& out,
                                                             const std::vector<utk::geo::Shape>& in) {
  using utk::grammar::Relation;
  std::vector<std::vector<std::uint32_t>> entries(out.size());
  if (relation == Relation::nearest) {
    for (std::uint32_t j = 0; j < in.size(); ++j) {
      const auto q = in[j].kind == utk::geo::ShapeKind::point ? in[j].point
                                                               : Vec3{in[j].centroid().x, in[j].centroid().y, 0};
      std::uint32_t best = 0;
      double best_d = utk::geo::shape_distance(q, out[0]);
      for (std::uint32_t i = 1; i < out.size(); ++i) {
        const double d = utk::geo::shape_distance(q, out[i]);
        if (d < best_d) best = i, best_d = d;
      }
      entries[best].push_back(j);
    }
    return entries;
  }
  for (std::uint32_t i = 0; i < out.size(); ++i) {
    const auto ob = out[i].bounds();
    for (std::uint32_t j = 0; j < in.size(); ++j) {
      if (!ob.intersects(in[j].bounds())) continue;
      bool hit = false;
      if (relation == Relation::contains) hit = utk::geo::relate(out[i], in[j], utk::geo::Predicate::contains);
      else if (relation == Relation::within) hit = utk::geo::relate(in[j], out[i], utk::geo::Predicate::contains);
      else hit = utk::geo::relate(out[i], in[j], utk::geo::Predicate::intersects);
      if (hit) entries[i].push_back(j);
    }
  }
  return entries;
}

/// Reference aggregation over a join: index order, recursive halving sums.
inline std::vector<utk::Scalar> brute_aggregate(const std::vector<std::vector<std::uint32_t>>& entries,
                                                const std::vector<utk::Scalar>& values,
                                                std::optional<utk::grammar::Aggregation> agg) {
  std::vector<utk::Scalar> result(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    std::vector<double> nums;
    for (auto j : entries[i])
      if (values[j].is_number()) nums.push_back(values[j].number());
    if (!agg) {
      if (entries[i].size() == 1) result[i] = values[entries[i][0]];
      continue;
    }
    if (*agg == utk::grammar::Aggregation::count) {
      result[i] = static_cast<double>(entries[i].size());
      continue;
    }
    if (nums.empty()) continue;
    switch (*agg) {
      case utk::grammar::Aggregation::sum: result[i] = reference_sum(nums, 0, nums.size()); break;
      case utk::grammar::Aggregation::mean:
        result[i] = reference_sum(nums, 0, nums.size()) / static_cast<double>(nums.size());
        break;
      case utk::grammar::Aggregation::min: result[i] = *std::min_element(nums.begin(), nums.end()); break;
      case utk::grammar::Aggregation::max: result[i] = *std::max_element(nums.begin(), nums.end()); break;
      default: break;
    }
  }
  return result;
}

inline std::vector<utk::Scalar> brute_force(utk::grammar::Relation relation, const std::vector<utk::geo::Shape>& out,
                                            const std::vector<utk::geo::Shape>& in,
                                            const std::vector<utk::Scalar>& values,
                                            std::optional<utk::grammar::Aggregation> agg) {
  return brute_aggregate(brute_entries(relation, out, in), values, agg);
}

}  // namespace fixtures
