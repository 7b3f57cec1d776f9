#pragma once

// Conversion of OSM extracts, GeoJSON, CSV and bounded grids into layers,
// plus the polygon triangulation and extrusion used for buildings.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "utk/geocoder.hpp"
#include "utk/geometry.hpp"
#include "utk/grammar.hpp"
#include "utk/layers.hpp"

namespace utk::ingest {

/// Overpass-API JSON extract.
struct OsmExtract {
  struct Node {
    double lat = 0, lon = 0;
  };
  struct Way {
    std::int64_t id = 0;
    std::vector<std::int64_t> refs;
    std::map<std::string, std::string> tags;
  };
  struct Member {
    std::string type;  // node | way | relation
    std::int64_t ref = 0;
    std::string role;
  };
  struct Relation {
    std::int64_t id = 0;
    std::vector<Member> members;
    std::map<std::string, std::string> tags;
  };

  std::map<std::int64_t, Node> nodes;
  std::vector<Way> ways;
  std::vector<Relation> relations;

  /// Throws FormatError on a document that is not an Overpass extract.
  static OsmExtract parse(std::string_view text);
};

enum class OsmFeature { buildings, parks, water, roads };

std::string_view to_string(OsmFeature f);
std::optional<OsmFeature> osm_feature_from_string(std::string_view s);

/// Region of interest: a box, a polygon (lat/lon vertices) or an address.
struct Region {
  std::optional<grammar::BoundingBox> box;
  std::vector<geo::Geodetic> polygon;
  std::optional<std::string> address;
};

struct IngestConfig {
  Region region;
  std::vector<OsmFeature> features{OsmFeature::buildings, OsmFeature::parks, OsmFeature::water, OsmFeature::roads};
  double default_building_height = 10.0;
  double meters_per_level = 3.5;
  double grid_cell = 10.0;
  double surface_sample_edge = 5.0;

  /// Throws Error(InvariantViolation) if a length parameter is not positive.
  void check() const;
};

/// Buildings become a mesh3d layer, parks and water polygons2d, roads lines.
/// Layers are named after their feature and only returned when non-empty.
/// Throws EmptyRegion when nothing survives clipping and MalformedWay when
/// every candidate feature had unresolvable node references.
std::vector<layers::PhysicalLayer> ingest_osm(const OsmExtract& extract, const IngestConfig& config,
                                              const geo::LocalFrame& frame, WarningLog* log = nullptr,
                                              const Geocoder* geocoder = nullptr);

/// Polygon/MultiPolygon features for polygons2d (or mesh3d, extruded by the
/// `height` property), LineString/MultiLineString for lines.
/// Throws UnsupportedGeometry or EmptyCollection.
layers::PhysicalLayer ingest_geojson(const nlohmann::json& doc, const std::string& name, layers::PhysicalKind kind,
                                     const geo::LocalFrame& frame, WarningLog* log = nullptr,
                                     double default_height = 10.0);

struct CsvColumns {
  std::string lat = "lat";
  std::string lon = "lon";
  std::optional<std::string> height;
  std::string value = "value";
};

/// Throws MissingColumn or IoError.
layers::ThematicLayer ingest_csv(const std::filesystem::path& path, const CsvColumns& columns, const std::string& name,
                                 WarningLog* log = nullptr);
layers::ThematicLayer ingest_csv_text(std::string_view text, const CsvColumns& columns, const std::string& name,
                                      WarningLog* log = nullptr);

inline constexpr std::size_t kDefaultCellLimit = 1'000'000;

/// Square cells tiling the projected box, row-major from the south-west
/// corner. Throws TooManyCells.
layers::PhysicalLayer make_grid(const grammar::BoundingBox& box, double cell, const geo::LocalFrame& frame,
                                const std::string& name = "grid", std::size_t limit = kDefaultCellLimit);

/// Triangle indices into poly.points covering the polygon (ear clipping with
/// hole bridging). Exterior rings CCW, holes CW; output triangles are CCW.
std::vector<std::uint32_t> triangulate(const geo::Polygon& poly);

/// Drops repeated and collinear vertices from every ring.
geo::Polygon simplify_rings(const geo::Polygon& poly);

/// Closed prism over a footprint: shared vertices (ground ring then roof
/// ring), outward-facing triangles.
struct Prism {
  std::vector<geo::Vec3> vertices;
  std::vector<std::uint32_t> indices;
};
Prism extrude(const geo::Polygon& footprint, double base, double height);

struct SurfaceSample {
  geo::Vec3 position;
  geo::Vec3 normal;
  std::uint32_t object_id = 0;
};

inline constexpr double kWeldTolerance = 1e-6;

/// Subdivides every triangle until edges are at most max_edge and returns
/// the welded vertices of each object with area-weighted outward normals.
std::vector<SurfaceSample> sample_surfaces(const layers::PhysicalLayer& layer, double max_edge);

}  // namespace utk::ingest
