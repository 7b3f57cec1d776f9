#pragma once

// Physical and thematic layers, the .utk container, the workspace catalog
// and the persistent join cache.
//
// A .utk file is one JSON document:
//   {"container_version": 1, "type": "physical" | "thematic", "name": ...,
//    "crs_origin": [lat0, lon0], "payload": {...}}
// Coordinates are geodetic on disk and projected into the workspace frame on
// load.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "utk/error.hpp"
#include "utk/geometry.hpp"
#include "utk/grammar.hpp"
#include "utk/scalar.hpp"

namespace utk::layers {

inline constexpr int kContainerVersion = 1;

enum class PhysicalKind { mesh3d, polygons2d, lines, grid };

std::string_view to_string(PhysicalKind kind);
std::optional<PhysicalKind> physical_kind_from_string(std::string_view s);

/// Polygons and grids share the ring layout and region semantics.
inline bool is_region_kind(PhysicalKind k) { return k == PhysicalKind::polygons2d || k == PhysicalKind::grid; }

using Attributes = std::map<std::string, Scalar>;

struct PhysicalObject {
  std::uint32_t id = 0;
  std::vector<geo::Geodetic> geodetic;  // authoritative, written to disk
  std::vector<geo::Vec3> local;         // projected into the owning frame
  std::vector<std::uint32_t> indices;   // mesh3d triangles
  std::vector<std::uint32_t> rings;     // ring (or line part) lengths
  Attributes attributes;
};

/// Compares everything except the derived local coordinates.
bool operator==(const PhysicalObject& a, const PhysicalObject& b);

struct PhysicalLayer {
  std::string name;
  PhysicalKind kind = PhysicalKind::polygons2d;
  geo::LocalFrame crs_origin;
  std::vector<PhysicalObject> objects;
  std::string content_hash;  // set by save/load; empty for unsaved layers

  std::size_t coordinate_count() const;
  /// Object owning each coordinate, in flattened coordinate order.
  std::vector<std::uint32_t> coordinate_owners() const;
  /// First flattened coordinate index of every object, plus the total.
  std::vector<std::size_t> coordinate_offsets() const;
  std::vector<geo::Vec3> coordinates() const;

  /// Adds an object from workspace-local coordinates; geodetic values are
  /// derived through `crs_origin`.
  PhysicalObject& add_local(std::vector<geo::Vec3> local);
  /// Recomputes local coordinates in another frame.
  void reproject(const geo::LocalFrame& frame);

  friend bool operator==(const PhysicalLayer& a, const PhysicalLayer& b) {
    return a.name == b.name && a.kind == b.kind && a.crs_origin == b.crs_origin && a.objects == b.objects;
  }
};

struct ThematicPoint {
  geo::Geodetic position;
  Scalar value;
  friend bool operator==(const ThematicPoint& a, const ThematicPoint& b) {
    return a.position == b.position && a.value == b.value;
  }
};

struct ThematicLayer {
  std::string name;
  geo::LocalFrame crs_origin;
  std::vector<ThematicPoint> points;
  grammar::ColorScaleDef color_scale;
  nlohmann::json metadata = nlohmann::json::object();
  std::string content_hash;

  /// Appends a point; a non-finite number is stored as null with a warning.
  void add(double lat, double lon, double height, double value, WarningLog* log = nullptr);
  void add(double lat, double lon, double height, Scalar value);
  std::vector<geo::Vec3> positions(const geo::LocalFrame& frame) const;

  friend bool operator==(const ThematicLayer& a, const ThematicLayer& b) {
    return a.name == b.name && a.crs_origin == b.crs_origin && a.points == b.points &&
           a.color_scale == b.color_scale && a.metadata == b.metadata;
  }
};

using Layer = std::variant<PhysicalLayer, ThematicLayer>;

/// Throws Error(InvariantViolation) describing the first broken invariant.
void check_invariants(const PhysicalLayer& layer);
void check_invariants(const ThematicLayer& layer);

/// Canonical container text (compact JSON, sorted keys, trailing newline).
std::string encode(const PhysicalLayer& layer);
std::string encode(const ThematicLayer& layer);

/// Parses container text, projecting into `frame`. Clockwise exterior rings
/// are normalized with a warning. Throws FormatError or InvariantViolation.
Layer decode(std::string_view text, const geo::LocalFrame& frame, WarningLog* log = nullptr);

/// Reads a .utk file. Throws IoError, FormatError, InvariantViolation.
Layer load_layer(const std::filesystem::path& path, const geo::LocalFrame& frame, WarningLog* log = nullptr);

/// Footprint of a mesh object (outline of its upward-facing triangles), or
/// the region itself for polygons; z is dropped.
geo::Polygon footprint(const PhysicalLayer& layer, std::size_t object);

/// Join geometry of an object: a region, a polyline, or (mesh) a footprint.
geo::Shape object_shape(const PhysicalLayer& layer, std::size_t object);

struct JoinKey {
  std::string left_hash;   // layer receiving values (out)
  std::string right_hash;  // layer providing values (in)
  grammar::Relation relation = grammar::Relation::contains;
  grammar::Level out_level = grammar::Level::objects;
  grammar::Level in_level = grammar::Level::coordinates;

  std::string digest() const;
  friend bool operator==(const JoinKey&, const JoinKey&) = default;
};

/// For each left (out) element, the ascending right (in) element indices.
struct JoinMap {
  JoinKey key;
  std::vector<std::vector<std::uint32_t>> entries;
  friend bool operator==(const JoinMap&, const JoinMap&) = default;
};

/// Content-addressed join cache: in memory, and on disk under `dir` when
/// one is given. Safe for concurrent use.
class JoinCache {
public:
  explicit JoinCache(std::optional<std::filesystem::path> dir = std::nullopt);

  std::optional<JoinMap> lookup(const JoinKey& key) const;
  void store(const JoinMap& map);

  std::size_t hits() const;
  std::size_t misses() const;

private:
  std::optional<std::filesystem::path> dir_;
  mutable std::shared_mutex mutex_;
  mutable std::map<std::string, JoinMap> memory_;
  mutable std::size_t hits_ = 0, misses_ = 0;
};

struct CatalogEntry {
  std::string name;
  std::filesystem::path path;  // empty for in-memory layers
  bool physical = true;
  std::string kind;            // physical kind, empty for thematic
  std::string content_hash;
};

/// A directory of .utk files plus its join cache. A default-constructed
/// workspace lives in memory only. Loaded layers are shared and immutable.
class Workspace : public grammar::LayerCatalog {
public:
  Workspace();
  explicit Workspace(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  bool in_memory() const { return root_.empty(); }

  /// Frame from workspace.json, else the first layer's origin.
  geo::LocalFrame frame() const;
  bool has_frame() const;
  void set_frame(const geo::LocalFrame& frame);

  /// Rescans the directory, rehashing files.
  void refresh();
  std::vector<CatalogEntry> entries() const;
  std::optional<grammar::LayerInfo> resolve(std::string_view ref) const override;
  std::optional<CatalogEntry> entry(std::string_view ref) const;

  std::shared_ptr<const PhysicalLayer> physical(std::string_view ref, WarningLog* log = nullptr) const;
  std::shared_ptr<const ThematicLayer> thematic(std::string_view ref, WarningLog* log = nullptr) const;

  /// Writes <root>/<name>.utk (or registers in memory) and returns its path.
  /// Throws InvariantViolation or IoError.
  std::filesystem::path save(const PhysicalLayer& layer);
  std::filesystem::path save(const ThematicLayer& layer);

  JoinCache& cache() const { return *cache_; }

private:
  std::filesystem::path save_text(const std::string& name, const std::string& text, bool physical,
                                  std::string kind, const geo::LocalFrame& origin);
  std::shared_ptr<const Layer> load(std::string_view ref, WarningLog* log) const;

  std::filesystem::path root_;
  mutable std::mutex mutex_;
  std::map<std::string, CatalogEntry> entries_;
  std::map<std::string, std::string> memory_text_;  // in-memory layers by name
  mutable std::map<std::string, std::shared_ptr<const Layer>> loaded_;  // by content hash
  std::optional<geo::LocalFrame> frame_;
  std::unique_ptr<JoinCache> cache_;
};

}  // namespace utk::layers
