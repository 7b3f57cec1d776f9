#include "utk/engine.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <sstream>

#include "utk/expression.hpp"
#include "utk/parallel.hpp"

namespace utk::engine {

using geo::Shape;
using layers::PhysicalLayer;
using nlohmann::json;

double pairwise_sum(std::span<const double> values) {
  if (values.empty()) return 0.0;
  if (values.size() == 1) return values[0];
  const std::size_t mid = values.size() / 2;
  return pairwise_sum(values.first(mid)) + pairwise_sum(values.subspan(mid));
}

Scalar aggregate(Aggregation agg, std::span<const Scalar> values, std::span<const std::uint32_t> indices) {
  if (agg == Aggregation::count) return Scalar(static_cast<double>(indices.size()));
  std::vector<double> nums;
  nums.reserve(indices.size());
  for (auto i : indices) {
    const auto& v = values[i];
    if (v.is_null()) continue;
    if (v.is_text())
      throw Error(ErrorCode::TypeError, std::string(grammar::to_string(agg)) + " over text value '" + v.text() +
                                            "' at input element " + std::to_string(i));
    nums.push_back(v.number());
  }
  if (nums.empty()) return Scalar::null();
  switch (agg) {
    case Aggregation::sum: return Scalar(pairwise_sum(nums));
    case Aggregation::mean: return Scalar(pairwise_sum(nums) / static_cast<double>(nums.size()));
    case Aggregation::min: return Scalar(*std::min_element(nums.begin(), nums.end()));
    case Aggregation::max: return Scalar(*std::max_element(nums.begin(), nums.end()));
    case Aggregation::count: break;
  }
  return Scalar::null();
}

std::vector<std::vector<std::uint32_t>> compute_join(Relation relation, std::span<const Shape> out,
                                                     std::span<const Shape> in, geo::IndexKind index) {
  std::vector<std::vector<std::uint32_t>> entries(out.size());
  switch (relation) {
    case Relation::direct:
    case Relation::inner_aggregate: {
      if (out.size() != in.size())
        throw Error(ErrorCode::CountMismatch, "direct relation needs equal element counts (" + std::to_string(out.size()) +
                                                  " vs " + std::to_string(in.size()) + ")");
      for (std::uint32_t i = 0; i < out.size(); ++i) entries[i] = {i};
      return entries;
    }
    case Relation::nearest: {
      if (in.empty()) return entries;
      std::vector<geo::Vec3> queries;
      queries.reserve(in.size());
      for (const auto& s : in) {
        if (s.kind == geo::ShapeKind::point) {
          queries.push_back(s.point);
        } else {
          const auto c = s.centroid();
          queries.push_back({c.x, c.y, 0});
        }
      }
      const auto hits = geo::nearest(queries, out);
      for (std::uint32_t j = 0; j < hits.size(); ++j) entries[hits[j].index].push_back(j);
      return entries;
    }
    case Relation::contains:
    case Relation::within:
    case Relation::intersects: break;
  }

  std::vector<geo::Box2> boxes;
  boxes.reserve(out.size());
  for (const auto& s : out) boxes.push_back(s.bounds());
  const geo::SpatialIndex idx(index, std::move(boxes));
  std::vector<std::vector<std::uint32_t>> per_in(in.size());
  parallel_for(in.size(), [&](std::size_t j) {
    for (auto i : idx.query(in[j].bounds())) {
      bool hit = false;
      if (relation == Relation::contains) hit = geo::relate(out[i], in[j], geo::Predicate::contains);
      else if (relation == Relation::within) hit = geo::relate(in[j], out[i], geo::Predicate::contains);
      else hit = geo::relate(out[i], in[j], geo::Predicate::intersects);
      if (hit) per_in[j].push_back(i);
    }
  });
  for (std::uint32_t j = 0; j < per_in.size(); ++j)
    for (auto i : per_in[j]) entries[i].push_back(j);
  return entries;
}

std::vector<Scalar> map_values(const std::vector<std::vector<std::uint32_t>>& entries, std::span<const Scalar> in_values,
                               std::optional<Aggregation> aggregation, Relation relation) {
  std::vector<Scalar> out(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) {
    const auto& list = entries[i];
    if (aggregation) {
      out[i] = aggregate(*aggregation, in_values, list);
    } else if (list.size() == 1) {
      out[i] = in_values[list[0]];
    } else if (list.size() > 1) {
      throw Error(ErrorCode::MissingAggregation, "relation '" + std::string(grammar::to_string(relation)) + "' maps " +
                                                     std::to_string(list.size()) + " inputs onto output element " +
                                                     std::to_string(i) + " and no aggregation is given");
    }
  });
  return out;
}

std::vector<Shape> element_shapes(const PhysicalLayer& layer, Level level) {
  std::vector<Shape> shapes;
  if (level == Level::coordinates) {
    shapes.reserve(layer.coordinate_count());
    for (const auto& o : layer.objects)
      for (const auto& p : o.local) shapes.push_back(Shape::of_point(p));
  } else {
    shapes.reserve(layer.objects.size());
    for (std::size_t i = 0; i < layer.objects.size(); ++i) shapes.push_back(layers::object_shape(layer, i));
  }
  return shapes;
}

namespace {

std::vector<Scalar> broadcast(const PhysicalLayer& layer, const std::vector<Scalar>& object_values) {
  std::vector<Scalar> out;
  out.reserve(layer.coordinate_count());
  for (std::size_t i = 0; i < layer.objects.size(); ++i)
    out.insert(out.end(), layer.objects[i].local.size(), object_values[i]);
  return out;
}

// Values carried between schemes: either thematic points or one level of a
// physical layer.
struct Running {
  std::shared_ptr<const PhysicalLayer> layer;  // null for thematic input
  std::string layer_name;
  std::string hash;
  Level level = Level::coordinates;
  std::vector<Shape> shapes;
  std::vector<Scalar> values;
};

Running from_knot(const EvaluatedKnot& k) {
  Running r;
  r.layer = k.layer;
  r.layer_name = k.physical_layer;
  r.hash = k.layer->content_hash;
  r.level = k.level;
  r.values = k.level == Level::objects ? *k.object_values : k.coord_values;
  return r;
}

}  // namespace

Evaluator::Evaluator(const layers::Workspace& workspace, EngineOptions options)
    : workspace_(workspace), options_(options) {}

EvaluatedKnot Evaluator::evaluate(const grammar::KnotDef& def, const std::map<std::string, EvaluatedKnot>& done,
                                  WarningLog* log) const {
  EvaluatedKnot k = def.operation ? evaluate_operation(def.name, *def.operation, done, log)
                                  : evaluate_join(def, done, log);
  if (def.filter) k = apply_filter(std::move(k), *def.filter, workspace_.frame(), options_.geocoder);
  return k;
}

EvaluatedKnot Evaluator::evaluate_join(const grammar::KnotDef& def, const std::map<std::string, EvaluatedKnot>& done,
                                       WarningLog* log) const {
  if (def.schemes.empty())
    throw Error(ErrorCode::UnresolvedReference, "knot '" + def.name + "' has no integration schemes");
  auto knot_ref = [&](const std::string& name) -> const EvaluatedKnot& {
    const auto it = done.find(name);
    if (it == done.end())
      throw Error(ErrorCode::UnresolvedReference, "knot '" + name + "' is not evaluated before '" + def.name + "'");
    return it->second;
  };

  EvaluatedKnot result;
  result.name = def.name;
  Running cur;
  const auto frame = workspace_.frame();

  for (std::size_t s = 0; s < def.schemes.size(); ++s) {
    const auto& scheme = def.schemes[s];
    const auto relation = scheme.relation.value_or(Relation::nearest);
    if (scheme.expression)
      throw Error(ErrorCode::TypeError, "knot '" + def.name + "': custom functions apply to operation knots only");

    // Input side.
    if (s == 0 || scheme.in.kind == grammar::Ref::Kind::knot) {
      if (scheme.in.kind == grammar::Ref::Kind::knot) {
        cur = from_knot(knot_ref(scheme.in.name));
      } else {
        const auto entry = workspace_.entry(scheme.in.name);
        if (!entry)
          throw Error(ErrorCode::UnresolvedReference, "layer '" + scheme.in.name + "' is not in the workspace");
        if (entry->physical)
          throw Error(ErrorCode::UnresolvedReference,
                      "knot '" + def.name + "' starts from physical layer '" + entry->name + "', which carries no values");
        const auto thematic = workspace_.thematic(scheme.in.name, log);
        cur = Running{};
        cur.layer_name = thematic->name;
        cur.hash = thematic->content_hash;
        cur.level = Level::coordinates;
        for (const auto& p : thematic->positions(frame)) cur.shapes.push_back(Shape::of_point(p));
        cur.values.reserve(thematic->points.size());
        for (const auto& p : thematic->points) cur.values.push_back(p.value);
        result.color_scale = thematic->color_scale;
      }
    } else if (grammar::layer_base_name(scheme.in.name) != cur.layer_name) {
      throw Error(ErrorCode::UnresolvedReference, "knot '" + def.name + "': scheme " + std::to_string(s) +
                                                      " does not continue from layer '" + cur.layer_name + "'");
    }

    // Output side.
    std::shared_ptr<const PhysicalLayer> out_layer;
    if (scheme.out.kind == grammar::Ref::Kind::knot) out_layer = knot_ref(scheme.out.name).layer;
    else out_layer = workspace_.physical(scheme.out.name, log);
    const auto out_level = relation == Relation::inner_aggregate
                               ? Level::objects
                               : scheme.level.value_or(grammar::default_level(relation));

    layers::JoinKey key{out_layer->content_hash, cur.hash, relation, out_level, cur.level};
    std::optional<layers::JoinMap> cached;
    if (options_.use_cache && !key.left_hash.empty() && !key.right_hash.empty())
      cached = workspace_.cache().lookup(key);
    std::vector<std::vector<std::uint32_t>> entries;
    if (cached) {
      entries = std::move(cached->entries);
    } else if (relation == Relation::inner_aggregate) {
      if (cur.layer != out_layer && cur.layer_name != out_layer->name)
        throw Error(ErrorCode::UnresolvedReference, "inner_aggregate needs input and output on one physical layer");
      entries.resize(out_layer->objects.size());
      if (cur.level == Level::objects) {
        for (std::uint32_t i = 0; i < entries.size(); ++i) entries[i] = {i};
      } else {
        std::uint32_t c = 0;
        for (std::size_t i = 0; i < out_layer->objects.size(); ++i)
          for (std::size_t n = 0; n < out_layer->objects[i].local.size(); ++n) entries[i].push_back(c++);
      }
    } else {
      if (cur.shapes.empty() && cur.layer) cur.shapes = element_shapes(*cur.layer, cur.level);
      const auto out_shapes = element_shapes(*out_layer, out_level);
      if (relation == Relation::nearest && cur.layer && cur.layer->content_hash == out_layer->content_hash &&
          cur.level == out_level) {
        // Same elements on both sides: the nearest element is the element.
        entries = compute_join(Relation::direct, out_shapes, cur.shapes, options_.index);
      } else {
        entries = compute_join(relation, out_shapes, cur.shapes, options_.index);
      }
    }
    if (!cached && options_.use_cache && !key.left_hash.empty() && !key.right_hash.empty())
      workspace_.cache().store({key, entries});

    const bool one_to_one = relation == Relation::direct ||
                            (relation == Relation::inner_aggregate && cur.level == Level::objects);
    auto aggregation = scheme.aggregation;
    if (!aggregation && relation == Relation::inner_aggregate && !one_to_one)
      throw Error(ErrorCode::MissingAggregation, "knot '" + def.name + "': inner_aggregate needs an aggregation");
    auto values = map_values(entries, cur.values, aggregation, relation);

    result.provenance.push_back({s, relation, key.digest(), cached.has_value()});
    cur = Running{};
    cur.layer = out_layer;
    cur.layer_name = out_layer->name;
    cur.hash = out_layer->content_hash;
    cur.level = out_level;
    cur.values = std::move(values);
  }

  result.physical_layer = cur.layer_name;
  result.layer = cur.layer;
  result.level = cur.level;
  if (cur.level == Level::objects) {
    result.coord_values = broadcast(*cur.layer, cur.values);
    result.object_values = std::move(cur.values);
  } else {
    result.coord_values = std::move(cur.values);
  }
  return result;
}

std::map<std::string, EvaluatedKnot> Evaluator::evaluate_all(const grammar::Specification& spec, WarningLog* log) const {
  std::map<std::string, EvaluatedKnot> done;
  for (const auto& k : spec.knots) done[k.name] = evaluate(k, done, log);
  return done;
}

EvaluatedKnot evaluate_operation(const std::string& name, const grammar::OperationDef& op,
                                 const std::map<std::string, EvaluatedKnot>& done, WarningLog* log) {
  const auto expr = expr::Expression::parse(op.expression);
  if (op.inputs.empty()) throw Error(ErrorCode::UnresolvedReference, "operation knot '" + name + "' has no inputs");

  std::vector<const EvaluatedKnot*> inputs;
  for (const auto& in : op.inputs) {
    const auto it = done.find(in.knot);
    if (it == done.end())
      throw Error(ErrorCode::UnresolvedReference, "knot '" + in.knot + "' is not evaluated before '" + name + "'");
    inputs.push_back(&it->second);
  }
  const auto& first = *inputs.front();
  for (const auto* k : inputs)
    if (k->physical_layer != first.physical_layer || k->coord_values.size() != first.coord_values.size())
      throw Error(ErrorCode::CountMismatch, "knots must share physical layer: '" + k->name + "' is on '" +
                                                k->physical_layer + "', '" + first.name + "' on '" +
                                                first.physical_layer + "'");

  // Slot i of the expression binds to input slot_input[i].
  std::vector<std::size_t> slot_input;
  for (const auto& id : expr.identifiers()) {
    const auto it = std::find_if(op.inputs.begin(), op.inputs.end(), [&](const auto& in) { return in.identifier() == id; });
    if (it == op.inputs.end())
      throw Error(ErrorCode::UnboundIdentifier, "identifier '" + id + "' is not an input of '" + name + "'");
    slot_input.push_back(static_cast<std::size_t>(it - op.inputs.begin()));
  }

  const bool objects = std::all_of(inputs.begin(), inputs.end(), [](const auto* k) { return k->object_values.has_value(); });
  auto column = [&](const EvaluatedKnot* k) -> const std::vector<Scalar>& {
    return objects ? *k->object_values : k->coord_values;
  };
  const std::size_t n = column(inputs.front()).size();

  std::vector<Scalar> out(n);
  std::vector<std::string> warnings;
  std::mutex log_mutex;
  parallel_for(n, [&](std::size_t e) {
    std::vector<Scalar> bound;
    bound.reserve(slot_input.size());
    for (auto s : slot_input) bound.push_back(column(inputs[s])[e]);
    WarningLog local;
    try {
      out[e] = expr.eval(bound, &local);
    } catch (const Error& err) {
      if (err.code() == ErrorCode::TypeError)
        throw Error(ErrorCode::TypeError, "element " + std::to_string(e) + ": " + err.detail());
      throw;
    }
    if (!local.empty() && log) {
      std::lock_guard lock(log_mutex);
      for (const auto& m : local.messages()) warnings.push_back("knot '" + name + "' element " + std::to_string(e) + ": " + m);
    }
  });
  // Workers finish in any order; sorting keeps the log deterministic.
  std::sort(warnings.begin(), warnings.end());
  for (auto& m : warnings) warn(log, std::move(m));

  EvaluatedKnot k;
  k.name = name;
  k.physical_layer = first.physical_layer;
  k.layer = first.layer;
  k.color_scale = first.color_scale;
  if (objects) {
    k.level = Level::objects;
    k.coord_values = broadcast(*first.layer, out);
    k.object_values = std::move(out);
  } else {
    k.level = Level::coordinates;
    k.coord_values = std::move(out);
  }
  return k;
}

EvaluatedKnot apply_filter(EvaluatedKnot knot, const grammar::FilterDef& filter, const geo::LocalFrame& frame,
                           const Geocoder* geocoder) {
  grammar::BoundingBox bb;
  if (filter.bounding_box) {
    bb = *filter.bounding_box;
  } else if (filter.address) {
    const OfflineGeocoder offline;
    bb = (geocoder ? geocoder : &offline)->lookup(*filter.address);
  } else {
    return knot;
  }
  geo::Box2 box;
  box.expand(frame.project(bb.lat_min, bb.lon_min, 0).xy());
  box.expand(frame.project(bb.lat_max, bb.lon_max, 0).xy());
  const auto& layer = *knot.layer;
  if (knot.object_values) {
    auto& values = *knot.object_values;
    for (std::size_t i = 0; i < values.size(); ++i)
      if (!box.contains(layers::object_shape(layer, i).centroid())) values[i] = Scalar::null();
    knot.coord_values = broadcast(layer, values);
  } else {
    std::size_t c = 0;
    for (const auto& o : layer.objects)
      for (const auto& p : o.local) {
        if (!box.contains(p.xy())) knot.coord_values[c] = Scalar::null();
        ++c;
      }
  }
  return knot;
}

PlotTable plot_table(const EvaluatedKnot& knot, Level level) {
  PlotTable t;
  t.knot = knot.name;
  t.level = level;
  if (level == Level::objects) {
    if (!knot.object_values)
      throw Error(ErrorCode::LevelUnavailable, "knot '" + knot.name + "' has no object-level values");
    t.rows.reserve(knot.object_values->size());
    for (std::uint32_t i = 0; i < knot.object_values->size(); ++i) t.rows.push_back({i, i, (*knot.object_values)[i]});
    return t;
  }
  const auto owners = knot.layer->coordinate_owners();
  t.rows.reserve(knot.coord_values.size());
  for (std::uint32_t i = 0; i < knot.coord_values.size(); ++i) t.rows.push_back({i, owners[i], knot.coord_values[i]});
  return t;
}

FootprintSlice footprint_slice(const EvaluatedKnot& knot, std::uint32_t object_id, double slice_height,
                               double band_width, std::uint32_t n_segments) {
  const auto& layer = *knot.layer;
  if (object_id >= layer.objects.size())
    throw Error(ErrorCode::ObjectNotFound, "object " + std::to_string(object_id) + " is not in layer '" + layer.name + "'");
  if (n_segments == 0) throw Error(ErrorCode::InvariantViolation, "n_segments must be positive");
  const auto offsets = layer.coordinate_offsets();
  const auto& o = layer.objects[object_id];

  std::vector<std::size_t> band;
  geo::Vec2 c{0, 0};
  for (std::size_t i = 0; i < o.local.size(); ++i) {
    if (std::abs(o.local[i].z - slice_height) <= band_width / 2) {
      band.push_back(i);
      c.x += o.local[i].x;
      c.y += o.local[i].y;
    }
  }
  if (band.empty())
    throw Error(ErrorCode::NoSamplesInBand, "object " + std::to_string(object_id) + " has no coordinates within " +
                                                std::to_string(band_width / 2) + " m of height " +
                                                std::to_string(slice_height));
  c.x /= static_cast<double>(band.size());
  c.y /= static_cast<double>(band.size());

  const double width = 360.0 / n_segments;
  std::vector<std::vector<double>> bins(n_segments);
  std::vector<std::uint32_t> counts(n_segments, 0);
  for (auto i : band) {
    const auto& p = o.local[i];
    double angle = std::atan2(p.y - c.y, p.x - c.x) * 180.0 / std::numbers::pi;
    angle = std::fmod(angle + width / 2 + 720.0, 360.0);
    auto k = static_cast<std::uint32_t>(angle / width);
    if (k >= n_segments) k = 0;
    ++counts[k];
    const auto& v = knot.coord_values[offsets[object_id] + i];
    if (v.is_null()) continue;
    if (v.is_text()) throw Error(ErrorCode::TypeError, "footprint slice needs numeric values");
    bins[k].push_back(v.number());
  }

  FootprintSlice slice;
  slice.knot = knot.name;
  slice.object_id = object_id;
  slice.slice_height = slice_height;
  slice.centroid = c;
  for (std::uint32_t k = 0; k < n_segments; ++k) {
    Sector s;
    s.index = k;
    s.angle_from = k * width - width / 2;
    s.angle_to = k * width + width / 2;
    s.samples = counts[k];
    if (!bins[k].empty()) s.value = Scalar(pairwise_sum(bins[k]) / static_cast<double>(bins[k].size()));
    slice.sectors.push_back(std::move(s));
  }
  return slice;
}

json knot_data_json(const EvaluatedKnot& knot, std::optional<Level> level) {
  const auto table = plot_table(knot, level.value_or(knot.level));
  json ids = json::array(), objects = json::array(), values = json::array();
  for (const auto& r : table.rows) {
    ids.push_back(r.element_id);
    objects.push_back(r.object_id);
    values.push_back(r.value);
  }
  return {{"knot", knot.name},
          {"physical_layer", knot.physical_layer},
          {"level", grammar::to_string(table.level)},
          {"element_id", std::move(ids)},
          {"object_id", std::move(objects)},
          {"value", std::move(values)}};
}

std::string knot_data_text(const EvaluatedKnot& knot, std::optional<Level> level) {
  return knot_data_json(knot, level).dump() + "\n";
}

std::string knot_data_csv(const EvaluatedKnot& knot, std::optional<Level> level) {
  const auto table = plot_table(knot, level.value_or(knot.level));
  std::ostringstream out;
  out << "element_id,object_id,value\n";
  for (const auto& r : table.rows) {
    out << r.element_id << ',' << r.object_id << ',';
    if (r.value.is_number()) out << json(r.value.number()).dump();
    else if (r.value.is_text()) {
      std::string t = r.value.text();
      if (t.find_first_of(",\"\n\r") != std::string::npos) {
        std::string q = "\"";
        for (char ch : t) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        t = q + "\"";
      }
      out << t;
    }
    out << '\n';
  }
  return out.str();
}

json to_json(const PlotTable& table) {
  json rows = json::array();
  for (const auto& r : table.rows) rows.push_back({{"element_id", r.element_id}, {"object_id", r.object_id}, {"value", r.value}});
  return {{"knot", table.knot}, {"level", grammar::to_string(table.level)}, {"rows", std::move(rows)}};
}

json to_json(const FootprintSlice& slice) {
  json sectors = json::array();
  for (const auto& s : slice.sectors)
    sectors.push_back({{"sector", s.index},
                       {"angle_from", s.angle_from},
                       {"angle_to", s.angle_to},
                       {"value", s.value},
                       {"samples", s.samples}});
  return {{"knot", slice.knot},
          {"object_id", slice.object_id},
          {"slice_height", slice.slice_height},
          {"centroid", {slice.centroid.x, slice.centroid.y}},
          {"sectors", std::move(sectors)}};
}

}  // namespace utk::engine
