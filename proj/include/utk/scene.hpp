#pragma once

// Self-contained scene bundles: canonical spec, layer geometry, knot values
// with their colors, and plot tables.

#include <map>
#include <span>
#include <string>

#include <json.hpp>

#include "utk/engine.hpp"
#include "utk/grammar.hpp"
#include "utk/layers.hpp"

namespace utk::scene {

inline constexpr const char* kBundleVersion = "1.0";

/// Projected positions (flat x,y,z), per-object coordinate offsets, mesh
/// indices into the flat positions, and ring sizes per object.
nlohmann::json layer_geometry(const layers::PhysicalLayer& layer);
nlohmann::json layer_geometry(const layers::ThematicLayer& layer, const geo::LocalFrame& frame);

/// Resolved [lo, hi] for a color scale: the explicit domain, else the
/// numeric range of `values` ([0, 1] when none are numeric).
std::array<double, 2> color_domain(const grammar::ColorScaleDef& scale, std::span<const Scalar> values);

/// "#rrggbb" for one value; nulls (and text on numeric scales) get the
/// no-data color. Categorical scales index a fixed palette by `category`.
std::string color_of(const grammar::ColorScaleDef& scale, const std::array<double, 2>& domain, const Scalar& value,
                     std::size_t category = 0);

/// Per-coordinate colors of a knot.
nlohmann::json knot_colors(const engine::EvaluatedKnot& knot);

/// Tables behind plot `plot` of the spec, in view order. Footprint plots
/// carry one slice per object that has samples in the band.
nlohmann::json plot_data(const grammar::Specification& spec, std::size_t plot,
                         const std::map<std::string, engine::EvaluatedKnot>& knots);

/// Number of plots across all views.
std::size_t plot_count(const grammar::Specification& spec);

nlohmann::json build_scene(const grammar::Specification& spec, const std::map<std::string, engine::EvaluatedKnot>& knots,
                           const layers::Workspace& workspace);

}  // namespace utk::scene
