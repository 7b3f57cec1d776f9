#include "utk/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace utk::scene {

using grammar::ColorScheme;
using nlohmann::json;

json layer_geometry(const layers::PhysicalLayer& layer) {
  json positions = json::array(), offsets = json::array(), indices = json::array(), rings = json::array();
  std::uint32_t base = 0;
  for (const auto& o : layer.objects) {
    offsets.push_back(base);
    for (const auto& p : o.local) {
      positions.push_back(p.x);
      positions.push_back(p.y);
      positions.push_back(p.z);
    }
    for (auto i : o.indices) indices.push_back(base + i);
    rings.push_back(o.rings);
    base += static_cast<std::uint32_t>(o.local.size());
  }
  offsets.push_back(base);
  json g{{"name", layer.name},
         {"type", "physical"},
         {"kind", layers::to_string(layer.kind)},
         {"crs_origin", {layer.crs_origin.lat0, layer.crs_origin.lon0}},
         {"positions", std::move(positions)},
         {"object_offsets", std::move(offsets)}};
  if (layer.kind == layers::PhysicalKind::mesh3d) g["indices"] = std::move(indices);
  else g["rings"] = std::move(rings);
  return g;
}

json layer_geometry(const layers::ThematicLayer& layer, const geo::LocalFrame& frame) {
  json positions = json::array(), values = json::array();
  for (const auto& p : layer.positions(frame)) {
    positions.push_back(p.x);
    positions.push_back(p.y);
    positions.push_back(p.z);
  }
  for (const auto& p : layer.points) values.push_back(p.value);
  return {{"name", layer.name},
          {"type", "thematic"},
          {"positions", std::move(positions)},
          {"values", std::move(values)},
          {"color_scale", grammar::to_json(layer.color_scale)},
          {"metadata", layer.metadata}};
}

std::array<double, 2> color_domain(const grammar::ColorScaleDef& scale, std::span<const Scalar> values) {
  if (scale.domain) return *scale.domain;
  double lo = 1e300, hi = -1e300;
  for (const auto& v : values)
    if (v.is_number()) {
      lo = std::min(lo, v.number());
      hi = std::max(hi, v.number());
    }
  if (lo > hi) return {0.0, 1.0};
  return {lo, hi};
}

namespace {

struct Rgb {
  double r, g, b;
};

Rgb lerp(Rgb a, Rgb b, double t) { return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t}; }

Rgb ramp(std::span<const Rgb> stops, double t) {
  t = std::clamp(t, 0.0, 1.0) * static_cast<double>(stops.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(t), stops.size() - 2);
  return lerp(stops[i], stops[i + 1], t - static_cast<double>(i));
}

std::string hex(Rgb c) {
  char buf[8];
  auto byte = [](double v) { return static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 255.0))); };
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", byte(c.r), byte(c.g), byte(c.b));
  return buf;
}

constexpr Rgb kSequential[] = {{255, 255, 204}, {253, 141, 60}, {128, 0, 38}};
constexpr Rgb kDiverging[] = {{33, 102, 172}, {247, 247, 247}, {178, 24, 43}};
constexpr Rgb kCategorical[] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},  {148, 103, 189},
                                {140, 86, 75},  {227, 119, 194}, {127, 127, 127}, {188, 189, 34}, {23, 190, 207}};

std::string category_key(const Scalar& s) { return s.is_number() ? json(s.number()).dump() : "~" + s.text(); }

bool category_less(const Scalar& a, const Scalar& b) { return category_key(a) < category_key(b); }

}  // namespace

std::string color_of(const grammar::ColorScaleDef& scale, const std::array<double, 2>& domain, const Scalar& value,
                     std::size_t category) {
  if (value.is_null()) return scale.no_data_color;
  if (scale.scheme == ColorScheme::categorical) return hex(kCategorical[category % std::size(kCategorical)]);
  if (!value.is_number()) return scale.no_data_color;
  const double span = domain[1] - domain[0];
  const double t = span > 0 ? (value.number() - domain[0]) / span : 0.5;
  return hex(scale.scheme == ColorScheme::diverging ? ramp(kDiverging, t) : ramp(kSequential, t));
}

json knot_colors(const engine::EvaluatedKnot& knot) {
  const auto& scale = knot.color_scale;
  const auto domain = color_domain(scale, knot.coord_values);
  // Categories are numbered by sorted distinct value so colors do not depend
  // on element order.
  std::vector<Scalar> distinct;
  if (scale.scheme == ColorScheme::categorical) {
    for (const auto& v : knot.coord_values)
      if (!v.is_null()) distinct.push_back(v);
    std::sort(distinct.begin(), distinct.end(), category_less);
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  }
  json colors = json::array();
  for (const auto& v : knot.coord_values) {
    std::size_t category = 0;
    if (!distinct.empty() && !v.is_null()) {
      const auto it = std::lower_bound(distinct.begin(), distinct.end(), v, category_less);
      category = static_cast<std::size_t>(it - distinct.begin());
    }
    colors.push_back(color_of(scale, domain, v, category));
  }
  return {{"scale", grammar::to_json(scale)}, {"domain", domain}, {"colors", std::move(colors)}};
}

std::size_t plot_count(const grammar::Specification& spec) {
  std::size_t n = 0;
  for (const auto& v : spec.views) n += v.plots.size();
  return n;
}

json plot_data(const grammar::Specification& spec, std::size_t plot,
               const std::map<std::string, engine::EvaluatedKnot>& knots) {
  const grammar::PlotDef* def = nullptr;
  std::size_t view = 0, n = 0;
  for (std::size_t v = 0; v < spec.views.size() && !def; ++v)
    for (const auto& p : spec.views[v].plots) {
      if (n++ == plot) {
        def = &p;
        view = v;
        break;
      }
    }
  if (!def) throw Error(ErrorCode::UnresolvedReference, "plot " + std::to_string(plot) + " does not exist");

  json tables = json::array();
  for (const auto& binding : def->knots) {
    const auto it = knots.find(binding.knot_id);
    if (it == knots.end()) throw Error(ErrorCode::UnresolvedReference, "knot '" + binding.knot_id + "' is not evaluated");
    const auto& knot = it->second;
    json t{{"knot", binding.knot_id}, {"arrangement", grammar::to_string(binding.arrangement)}};
    if (binding.arrangement == grammar::Arrangement::embedded_footprint) {
      const auto n_segments = def->args.at("n_segments").get<std::uint32_t>();
      const auto slice_height = def->args.at("slice_height").get<double>();
      const auto band_width = def->args.at("band_width").get<double>();
      json slices = json::array();
      for (std::uint32_t o = 0; o < knot.layer->objects.size(); ++o) {
        try {
          slices.push_back(engine::to_json(engine::footprint_slice(knot, o, slice_height, band_width, n_segments)));
        } catch (const Error& e) {
          if (e.code() != ErrorCode::NoSamplesInBand) throw;
        }
      }
      t["slices"] = std::move(slices);
    } else {
      t["table"] = engine::to_json(engine::plot_table(knot, knot.level));
    }
    tables.push_back(std::move(t));
  }
  return {{"plot", plot},
          {"view", view},
          {"chart_spec", def->chart_spec},
          {"interaction", grammar::to_string(def->interaction.value_or(grammar::Interaction::none))},
          {"args", def->args},
          {"knots", std::move(tables)}};
}

json build_scene(const grammar::Specification& spec, const std::map<std::string, engine::EvaluatedKnot>& knots,
                 const layers::Workspace& workspace) {
  json layer_map = json::object(), knot_map = json::object();
  for (const auto& [name, knot] : knots) {
    if (!layer_map.contains(knot.physical_layer)) layer_map[knot.physical_layer] = layer_geometry(*knot.layer);
    json k = engine::knot_data_json(knot);
    k["coordinate_values"] = knot.coord_values;
    k["colors"] = knot_colors(knot);
    knot_map[name] = std::move(k);
  }
  json plots = json::array();
  for (std::size_t i = 0; i < plot_count(spec); ++i) plots.push_back(plot_data(spec, i, knots));
  const auto frame = workspace.frame();
  return {{"bundle_version", kBundleVersion},
          {"frame", {{"origin", {frame.lat0, frame.lon0}}, {"projection", "local-equirectangular"}}},
          {"spec", grammar::to_json(spec)},
          {"layers", std::move(layer_map)},
          {"knots", std::move(knot_map)},
          {"plots", std::move(plots)}};
}

}  // namespace utk::scene
