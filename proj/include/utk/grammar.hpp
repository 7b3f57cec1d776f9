#pragma once

// The declarative specification: parse, validate, canonicalize, serialize.
//
// Documents are UTF-8 JSON; see schema/utk-spec-1.0.schema.json for the
// machine-readable form of the layout implemented here.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace utk::grammar {

inline constexpr std::string_view kGrammarVersion = "1.0";

enum class Interaction { brush, pick, none };
enum class Relation { nearest, contains, within, intersects, direct, inner_aggregate };
enum class Aggregation { min, max, sum, mean, count };
enum class Level { coordinates, objects };
enum class Arrangement { linked, embedded_surface, embedded_footprint };
enum class ColorScheme { sequential, diverging, categorical };

std::string_view to_string(Interaction v);
std::string_view to_string(Relation v);
std::string_view to_string(Aggregation v);
std::string_view to_string(Level v);
std::string_view to_string(Arrangement v);
std::string_view to_string(ColorScheme v);

std::optional<Relation> relation_from_string(std::string_view s);
std::optional<Aggregation> aggregation_from_string(std::string_view s);
std::optional<Level> level_from_string(std::string_view s);

/// Level a scheme lands on when the document leaves it out.
Level default_level(Relation relation);

struct ColorScaleDef {
  ColorScheme scheme = ColorScheme::sequential;
  std::optional<std::array<double, 2>> domain;  // absent means auto
  std::string no_data_color = "#bdbdbd";
  friend bool operator==(const ColorScaleDef&, const ColorScaleDef&) = default;
};

ColorScaleDef parse_color_scale(const nlohmann::json& j, const std::string& path);
nlohmann::json to_json(const ColorScaleDef& c);

struct CameraDef {
  std::string camera_id;
  std::array<double, 3> position{};
  std::array<double, 3> direction{0, 0, -1};
  friend bool operator==(const CameraDef&, const CameraDef&) = default;
};

struct KnotBinding {
  std::string knot_id;
  Interaction interaction = Interaction::none;
  friend bool operator==(const KnotBinding&, const KnotBinding&) = default;
};

struct MapDef {
  std::string camera_id;
  std::vector<KnotBinding> knots;
  friend bool operator==(const MapDef&, const MapDef&) = default;
};

struct PlotKnotBinding {
  std::string knot_id;
  Arrangement arrangement = Arrangement::linked;
  friend bool operator==(const PlotKnotBinding&, const PlotKnotBinding&) = default;
};

struct PlotDef {
  nlohmann::json chart_spec = nlohmann::json::object();  // passed through verbatim
  std::vector<PlotKnotBinding> knots;
  std::optional<Interaction> interaction;
  nlohmann::json args = nlohmann::json::object();
  friend bool operator==(const PlotDef&, const PlotDef&) = default;
};

struct ViewDef {
  MapDef map;
  std::vector<PlotDef> plots;
  friend bool operator==(const ViewDef&, const ViewDef&) = default;
};

/// Reference to a stored layer (by name or .utk path) or to a knot.
struct Ref {
  enum class Kind { layer, knot };
  Kind kind = Kind::layer;
  std::string name;
  friend bool operator==(const Ref&, const Ref&) = default;
};

struct IntegrationSchemeDef {
  Ref in;
  Ref out;
  std::optional<Relation> relation;
  std::optional<Level> level;
  std::optional<Aggregation> aggregation;
  std::optional<std::string> expression;  // custom function text, if any
  friend bool operator==(const IntegrationSchemeDef&, const IntegrationSchemeDef&) = default;
};

struct BoundingBox {
  double lat_min = 0, lon_min = 0, lat_max = 0, lon_max = 0;
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct FilterDef {
  std::optional<BoundingBox> bounding_box;
  std::optional<std::string> address;
  friend bool operator==(const FilterDef&, const FilterDef&) = default;
};

struct OperationInput {
  std::string knot;
  std::optional<std::string> alias;
  /// Identifier the expression uses for this input.
  const std::string& identifier() const { return alias ? *alias : knot; }
  friend bool operator==(const OperationInput&, const OperationInput&) = default;
};

/// Element-wise expression over knots that share one physical layer.
struct OperationDef {
  std::string expression;
  std::vector<OperationInput> inputs;
  std::optional<Relation> relation;  // kept for diagnostics; alignment is by index
  friend bool operator==(const OperationDef&, const OperationDef&) = default;
};

struct KnotDef {
  std::string name;
  std::vector<IntegrationSchemeDef> schemes;
  std::optional<FilterDef> filter;
  std::optional<OperationDef> operation;
  friend bool operator==(const KnotDef&, const KnotDef&) = default;
};

struct Specification {
  std::string grammar_version{kGrammarVersion};
  std::vector<ViewDef> views;
  std::vector<CameraDef> cameras;
  std::vector<KnotDef> knots;
  friend bool operator==(const Specification&, const Specification&) = default;

  const KnotDef* find_knot(std::string_view name) const;
  const CameraDef* find_camera(std::string_view id) const;
};

/// Throws utk::Error with code SyntaxError, UnknownField or WrongType; the
/// error's path() is a JSON pointer to the offending node.
Specification parse_spec(std::string_view text);
Specification parse_spec(const nlohmann::json& doc);
inline Specification parse_spec(const std::string& text) { return parse_spec(std::string_view(text)); }
inline Specification parse_spec(const char* text) { return parse_spec(std::string_view(text)); }

nlohmann::json to_json(const Specification& spec);
nlohmann::json to_json(const KnotDef& knot);
/// Canonical text form (sorted keys, two-space indent, trailing newline).
std::string serialize(const Specification& spec);

/// Materializes defaults and normalizes camera directions. Idempotent.
Specification canonicalize(Specification spec);

enum class Severity { error, warning };

struct Diagnostic {
  Severity severity = Severity::error;
  std::string code;
  std::string path;  // JSON pointer
  std::string message;
};

nlohmann::json to_json(const Diagnostic& d);
bool has_errors(const std::vector<Diagnostic>& diagnostics);

struct LayerInfo {
  std::string name;     // canonical catalog name
  bool physical = true;
  std::string kind;     // mesh3d | polygons2d | lines | grid, empty for thematic
};

/// What validation needs to know about the stored layers.
class LayerCatalog {
public:
  virtual ~LayerCatalog() = default;
  virtual std::optional<LayerInfo> resolve(std::string_view ref) const = 0;
};

/// Layer reference with directories and a .utk suffix stripped.
std::string layer_base_name(std::string_view ref);

/// Checks references, the layer-reference rule, shared physical layers for
/// operation knots, aggregation presence and acyclicity. With no catalog,
/// layer existence and kinds are not checked.
std::vector<Diagnostic> validate_spec(const Specification& spec, const LayerCatalog* catalog = nullptr);

/// Final physical layer of each knot, in document order; unresolvable knots
/// are absent.
std::vector<std::pair<std::string, std::string>> final_physical_layers(const Specification& spec,
                                                                       const LayerCatalog* catalog = nullptr);

}  // namespace utk::grammar
