#pragma once

// Knot evaluation: chained integration schemes, aggregation, filters,
// operation knots and plot-table extraction.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "utk/error.hpp"
#include "utk/geocoder.hpp"
#include "utk/geometry.hpp"
#include "utk/grammar.hpp"
#include "utk/layers.hpp"
#include "utk/scalar.hpp"

namespace utk::engine {

using grammar::Aggregation;
using grammar::Level;
using grammar::Relation;

struct ProvenanceStep {
  std::size_t scheme = 0;
  Relation relation = Relation::direct;
  std::string join_key;  // digest of the JoinMap key
  bool cache_hit = false;
};

struct EvaluatedKnot {
  std::string name;
  std::string physical_layer;
  std::shared_ptr<const layers::PhysicalLayer> layer;
  Level level = Level::coordinates;
  std::vector<Scalar> coord_values;
  std::optional<std::vector<Scalar>> object_values;
  std::vector<ProvenanceStep> provenance;
  /// Color scale of the thematic layer feeding the knot, if any.
  grammar::ColorScaleDef color_scale;
};

/// Index-ordered pairwise sum: n == 1 gives the value, otherwise the sum of
/// the halves split at n / 2. Fixed order makes results reproducible.
double pairwise_sum(std::span<const double> values);

/// Aggregates the values at `indices`. sum/mean/min/max skip nulls and give
/// null when nothing numeric remains; count is the number of matches.
/// Throws Error(TypeError) when a numeric aggregation meets text.
Scalar aggregate(Aggregation agg, std::span<const Scalar> values, std::span<const std::uint32_t> indices);

/// Element geometry on one side of a join.
struct ElementSet {
  std::vector<geo::Shape> shapes;
  std::vector<Scalar> values;  // empty for the output side
};

/// Builds entries[out] = ascending matching in-element indices.
/// `index` selects the acceleration structure for the candidate search.
std::vector<std::vector<std::uint32_t>> compute_join(Relation relation, std::span<const geo::Shape> out,
                                                     std::span<const geo::Shape> in,
                                                     geo::IndexKind index = geo::IndexKind::rtree);

/// Applies one relation's join map to input values.
std::vector<Scalar> map_values(const std::vector<std::vector<std::uint32_t>>& entries, std::span<const Scalar> in_values,
                               std::optional<Aggregation> aggregation, Relation relation);

struct EngineOptions {
  geo::IndexKind index = geo::IndexKind::rtree;
  const Geocoder* geocoder = nullptr;  // null: offline
  bool use_cache = true;
};

/// Element shapes of a physical layer at a level.
std::vector<geo::Shape> element_shapes(const layers::PhysicalLayer& layer, Level level);

class Evaluator {
public:
  explicit Evaluator(const layers::Workspace& workspace, EngineOptions options = {});

  /// Evaluates one knot; its input knots must already be in `done`.
  EvaluatedKnot evaluate(const grammar::KnotDef& def, const std::map<std::string, EvaluatedKnot>& done,
                         WarningLog* log = nullptr) const;

  /// Evaluates every knot in document order (inputs precede users).
  std::map<std::string, EvaluatedKnot> evaluate_all(const grammar::Specification& spec,
                                                    WarningLog* log = nullptr) const;

private:
  EvaluatedKnot evaluate_join(const grammar::KnotDef& def, const std::map<std::string, EvaluatedKnot>& done,
                              WarningLog* log) const;

  const layers::Workspace& workspace_;
  EngineOptions options_;
};

/// Element-wise expression over knots on one physical layer.
/// Throws TypeError (with element index), UnboundIdentifier, ExprSyntaxError.
EvaluatedKnot evaluate_operation(const std::string& name, const grammar::OperationDef& op,
                                 const std::map<std::string, EvaluatedKnot>& done, WarningLog* log = nullptr);

/// Nulls elements whose representative point lies outside the filter box.
/// Addresses are resolved through `geocoder` (offline when null).
EvaluatedKnot apply_filter(EvaluatedKnot knot, const grammar::FilterDef& filter, const geo::LocalFrame& frame,
                           const Geocoder* geocoder = nullptr);

struct PlotRow {
  std::uint32_t element_id = 0;
  std::uint32_t object_id = 0;
  Scalar value;
};

struct PlotTable {
  std::string knot;
  Level level = Level::objects;
  std::vector<PlotRow> rows;
};

/// One row per element at `level`. Throws LevelUnavailable when objects are
/// requested from a coordinate-level knot.
PlotTable plot_table(const EvaluatedKnot& knot, Level level);

struct Sector {
  std::uint32_t index = 0;
  double angle_from = 0, angle_to = 0;  // degrees counter-clockwise from east
  Scalar value;
  std::uint32_t samples = 0;
};

struct FootprintSlice {
  std::string knot;
  std::uint32_t object_id = 0;
  double slice_height = 0;
  geo::Vec2 centroid;
  std::vector<Sector> sectors;
};

/// Radial summary of an object's values in the band |z - slice_height| <=
/// band_width / 2. Sector k spans [k*w - w/2, k*w + w/2) with w = 360 / n,
/// so sector 0 faces east and sector n/4 faces north.
/// Throws ObjectNotFound, NoSamplesInBand, LevelUnavailable.
FootprintSlice footprint_slice(const EvaluatedKnot& knot, std::uint32_t object_id, double slice_height,
                               double band_width, std::uint32_t n_segments);

/// Columnar knot data: {"knot", "physical_layer", "level", "element_id",
/// "object_id", "value"}. Shared by the CLI export and the HTTP API.
nlohmann::json knot_data_json(const EvaluatedKnot& knot, std::optional<Level> level = std::nullopt);
std::string knot_data_text(const EvaluatedKnot& knot, std::optional<Level> level = std::nullopt);
/// element_id,object_id,value rows with a header line.
std::string knot_data_csv(const EvaluatedKnot& knot, std::optional<Level> level = std::nullopt);

nlohmann::json to_json(const PlotTable& table);
nlohmann::json to_json(const FootprintSlice& slice);

}  // namespace utk::engine
