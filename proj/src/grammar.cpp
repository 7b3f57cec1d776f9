#include "utk/grammar.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "utk/error.hpp"
#include "utk/expression.hpp"

namespace utk::grammar {

using nlohmann::json;

namespace {

template <typename E, std::size_t N>
std::optional<E> lookup(std::string_view s, const std::array<E, N>& values) {
  for (E v : values)
    if (to_string(v) == s) return v;
  return std::nullopt;
}

constexpr std::array kInteractions{Interaction::brush, Interaction::pick, Interaction::none};
constexpr std::array kRelations{Relation::nearest, Relation::contains, Relation::within,
                                Relation::intersects, Relation::direct, Relation::inner_aggregate};
constexpr std::array kAggregations{Aggregation::min, Aggregation::max, Aggregation::sum,
                                   Aggregation::mean, Aggregation::count};
constexpr std::array kLevels{Level::coordinates, Level::objects};
constexpr std::array kArrangements{Arrangement::linked, Arrangement::embedded_surface,
                                   Arrangement::embedded_footprint};
constexpr std::array kSchemes{ColorScheme::sequential, ColorScheme::diverging, ColorScheme::categorical};

template <typename E, std::size_t N>
std::string choices(const std::array<E, N>& values) {
  std::string s = "one of {";
  for (std::size_t i = 0; i < N; ++i) {
    if (i) s += ", ";
    s += to_string(values[i]);
  }
  return s + "}";
}

std::string type_name(const json& j) {
  return j.type_name();
}

// Strict reader over one JSON object: every key must be consumed.
class ObjectReader {
public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(ErrorCode::WrongType, "expected object, found " + type_name(j_), path_);
  }

  std::string child(std::string_view key) const { return path_ + "/" + std::string(key); }

  const json* optional(std::string_view key) {
    const auto it = j_.find(std::string(key));
    if (it == j_.end()) return nullptr;
    seen_.insert(std::string(key));
    return &*it;
  }

  const json& required(std::string_view key) {
    const json* v = optional(key);
    if (!v) throw Error(ErrorCode::SyntaxError, "missing required field '" + std::string(key) + "'", child(key));
    return *v;
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw Error(ErrorCode::UnknownField, "unknown field '" + key + "'", child(key));
  }

  const std::string& path() const { return path_; }

private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw Error(ErrorCode::WrongType, "expected string, found " + type_name(j), path);
  return j.get<std::string>();
}

double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw Error(ErrorCode::WrongType, "expected number, found " + type_name(j), path);
  return j.get<double>();
}

const json& as_array(const json& j, const std::string& path) {
  if (!j.is_array()) throw Error(ErrorCode::WrongType, "expected array, found " + type_name(j), path);
  return j;
}

std::array<double, 3> as_vec3(const json& j, const std::string& path) {
  as_array(j, path);
  if (j.size() != 3) throw Error(ErrorCode::WrongType, "expected array of 3 numbers", path);
  return {as_number(j[0], path + "/0"), as_number(j[1], path + "/1"), as_number(j[2], path + "/2")};
}

template <typename E, std::size_t N>
E as_enum(const json& j, const std::string& path, const std::array<E, N>& values) {
  const auto s = as_string(j, path);
  if (auto v = lookup(s, values)) return *v;
  throw Error(ErrorCode::WrongType, "'" + s + "' is not " + choices(values), path);
}

Ref parse_ref(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  const json* layer = r.optional("layer");
  const json* knot = r.optional("knot");
  r.finish();
  if ((layer != nullptr) == (knot != nullptr))
    throw Error(ErrorCode::SyntaxError, "reference needs exactly one of 'layer' or 'knot'", path);
  if (layer) return {Ref::Kind::layer, as_string(*layer, path + "/layer")};
  return {Ref::Kind::knot, as_string(*knot, path + "/knot")};
}

json ref_to_json(const Ref& ref) {
  return json{{ref.kind == Ref::Kind::layer ? "layer" : "knot", ref.name}};
}

IntegrationSchemeDef parse_scheme(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  IntegrationSchemeDef s;
  s.in = parse_ref(r.required("in"), r.child("in"));
  s.out = parse_ref(r.required("out"), r.child("out"));
  if (const json* v = r.optional("relation")) s.relation = as_enum(*v, r.child("relation"), kRelations);
  if (const json* v = r.optional("level")) s.level = as_enum(*v, r.child("level"), kLevels);
  if (const json* v = r.optional("operation")) {
    const auto text = as_string(*v, r.child("operation"));
    if (auto agg = aggregation_from_string(text)) s.aggregation = agg;
    else s.expression = text;
  }
  r.finish();
  return s;
}

OperationDef parse_operation(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  OperationDef op;
  op.expression = as_string(r.required("expression"), r.child("expression"));
  const auto inputs_path = r.child("inputs");
  const json& inputs = as_array(r.required("inputs"), inputs_path);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto p = inputs_path + "/" + std::to_string(i);
    if (inputs[i].is_string()) {
      op.inputs.push_back({inputs[i].get<std::string>(), std::nullopt});
      continue;
    }
    ObjectReader ir(inputs[i], p);
    OperationInput in;
    in.knot = as_string(ir.required("knot"), ir.child("knot"));
    if (const json* a = ir.optional("alias")) in.alias = as_string(*a, ir.child("alias"));
    ir.finish();
    op.inputs.push_back(std::move(in));
  }
  if (const json* v = r.optional("relation")) op.relation = as_enum(*v, r.child("relation"), kRelations);
  r.finish();
  return op;
}

FilterDef parse_filter(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  FilterDef f;
  if (const json* bb = r.optional("bounding_box")) {
    const auto p = r.child("bounding_box");
    as_array(*bb, p);
    if (bb->size() != 4) throw Error(ErrorCode::WrongType, "expected [lat_min, lon_min, lat_max, lon_max]", p);
    f.bounding_box = BoundingBox{as_number((*bb)[0], p + "/0"), as_number((*bb)[1], p + "/1"),
                                 as_number((*bb)[2], p + "/2"), as_number((*bb)[3], p + "/3")};
  }
  if (const json* a = r.optional("address")) f.address = as_string(*a, r.child("address"));
  r.finish();
  if (f.bounding_box.has_value() == f.address.has_value())
    throw Error(ErrorCode::SyntaxError, "filter needs exactly one of 'bounding_box' or 'address'", path);
  return f;
}

KnotDef parse_knot(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  KnotDef k;
  k.name = as_string(r.required("name"), r.child("name"));
  if (const json* schemes = r.optional("schemes")) {
    const auto p = r.child("schemes");
    as_array(*schemes, p);
    for (std::size_t i = 0; i < schemes->size(); ++i)
      k.schemes.push_back(parse_scheme((*schemes)[i], p + "/" + std::to_string(i)));
  }
  if (const json* f = r.optional("filter")) k.filter = parse_filter(*f, r.child("filter"));
  if (const json* op = r.optional("operation")) k.operation = parse_operation(*op, r.child("operation"));
  r.finish();

  // The compact form (knot_a, knot_b, relation, expression) is an operation
  // knot over the two knots.
  if (!k.operation && k.schemes.size() == 1) {
    const auto& s = k.schemes.front();
    if (s.in.kind == Ref::Kind::knot && s.out.kind == Ref::Kind::knot && s.expression) {
      OperationDef op;
      op.expression = *s.expression;
      op.inputs = {{s.in.name, std::nullopt}, {s.out.name, std::nullopt}};
      op.relation = s.relation;
      k.operation = std::move(op);
      k.schemes.clear();
    }
  }
  return k;
}

PlotDef parse_plot(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  PlotDef p;
  p.chart_spec = r.required("chart_spec");
  if (!p.chart_spec.is_object())
    throw Error(ErrorCode::WrongType, "expected object, found " + type_name(p.chart_spec), r.child("chart_spec"));
  const auto kp = r.child("knots");
  const json& knots = as_array(r.required("knots"), kp);
  for (std::size_t i = 0; i < knots.size(); ++i) {
    ObjectReader kr(knots[i], kp + "/" + std::to_string(i));
    PlotKnotBinding b;
    b.knot_id = as_string(kr.required("knot_id"), kr.child("knot_id"));
    b.arrangement = as_enum(kr.required("arrangement"), kr.child("arrangement"), kArrangements);
    kr.finish();
    p.knots.push_back(std::move(b));
  }
  if (const json* v = r.optional("interaction")) p.interaction = as_enum(*v, r.child("interaction"), kInteractions);
  if (const json* v = r.optional("args")) {
    if (!v->is_object()) throw Error(ErrorCode::WrongType, "expected object, found " + type_name(*v), r.child("args"));
    p.args = *v;
  }
  r.finish();
  return p;
}

ViewDef parse_view(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  ViewDef v;
  {
    ObjectReader mr(r.required("map"), r.child("map"));
    v.map.camera_id = as_string(mr.required("camera_id"), mr.child("camera_id"));
    const auto kp = mr.child("knots");
    const json& knots = as_array(mr.required("knots"), kp);
    for (std::size_t i = 0; i < knots.size(); ++i) {
      ObjectReader kr(knots[i], kp + "/" + std::to_string(i));
      KnotBinding b;
      b.knot_id = as_string(kr.required("knot_id"), kr.child("knot_id"));
      if (const json* it = kr.optional("interaction")) b.interaction = as_enum(*it, kr.child("interaction"), kInteractions);
      kr.finish();
      v.map.knots.push_back(std::move(b));
    }
    mr.finish();
  }
  if (const json* plots = r.optional("plots")) {
    const auto pp = r.child("plots");
    as_array(*plots, pp);
    for (std::size_t i = 0; i < plots->size(); ++i)
      v.plots.push_back(parse_plot((*plots)[i], pp + "/" + std::to_string(i)));
  }
  r.finish();
  return v;
}

}  // namespace

std::string_view to_string(Interaction v) {
  switch (v) {
    case Interaction::brush: return "brush";
    case Interaction::pick: return "pick";
    case Interaction::none: return "none";
  }
  return "";
}

std::string_view to_string(Relation v) {
  switch (v) {
    case Relation::nearest: return "nearest";
    case Relation::contains: return "contains";
    case Relation::within: return "within";
    case Relation::intersects: return "intersects";
    case Relation::direct: return "direct";
    case Relation::inner_aggregate: return "inner_aggregate";
  }
  return "";
}

std::string_view to_string(Aggregation v) {
  switch (v) {
    case Aggregation::min: return "min";
    case Aggregation::max: return "max";
    case Aggregation::sum: return "sum";
    case Aggregation::mean: return "mean";
    case Aggregation::count: return "count";
  }
  return "";
}

std::string_view to_string(Level v) {
  return v == Level::coordinates ? "coordinates" : "objects";
}

std::string_view to_string(Arrangement v) {
  switch (v) {
    case Arrangement::linked: return "linked";
    case Arrangement::embedded_surface: return "embedded_surface";
    case Arrangement::embedded_footprint: return "embedded_footprint";
  }
  return "";
}

std::string_view to_string(ColorScheme v) {
  switch (v) {
    case ColorScheme::sequential: return "sequential";
    case ColorScheme::diverging: return "diverging";
    case ColorScheme::categorical: return "categorical";
  }
  return "";
}

std::optional<Relation> relation_from_string(std::string_view s) { return lookup(s, kRelations); }
std::optional<Aggregation> aggregation_from_string(std::string_view s) { return lookup(s, kAggregations); }
std::optional<Level> level_from_string(std::string_view s) { return lookup(s, kLevels); }

Level default_level(Relation relation) {
  switch (relation) {
    case Relation::nearest:
    case Relation::direct: return Level::coordinates;
    default: return Level::objects;
  }
}

ColorScaleDef parse_color_scale(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  ColorScaleDef c;
  if (const json* v = r.optional("scheme")) c.scheme = as_enum(*v, r.child("scheme"), kSchemes);
  if (const json* v = r.optional("domain")) {
    const auto p = r.child("domain");
    if (v->is_string() && v->get<std::string>() == "auto") {
      c.domain.reset();
    } else {
      as_array(*v, p);
      if (v->size() != 2) throw Error(ErrorCode::WrongType, "expected \"auto\" or [lo, hi]", p);
      c.domain = std::array<double, 2>{as_number((*v)[0], p + "/0"), as_number((*v)[1], p + "/1")};
      if (!((*c.domain)[0] < (*c.domain)[1]))
        throw Error(ErrorCode::SyntaxError, "color scale domain needs lo < hi", p);
    }
  }
  if (const json* v = r.optional("no_data_color")) c.no_data_color = as_string(*v, r.child("no_data_color"));
  r.finish();
  return c;
}

json to_json(const ColorScaleDef& c) {
  json j;
  j["scheme"] = to_string(c.scheme);
  if (c.domain) j["domain"] = {(*c.domain)[0], (*c.domain)[1]};
  else j["domain"] = "auto";
  j["no_data_color"] = c.no_data_color;
  return j;
}

const KnotDef* Specification::find_knot(std::string_view name) const {
  for (const auto& k : knots)
    if (k.name == name) return &k;
  return nullptr;
}

const CameraDef* Specification::find_camera(std::string_view id) const {
  for (const auto& c : cameras)
    if (c.camera_id == id) return &c;
  return nullptr;
}

Specification parse_spec(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SyntaxError, e.what(), "");
  }
  return parse_spec(doc);
}

Specification parse_spec(const json& doc) {
  ObjectReader r(doc, "");
  Specification spec;
  spec.grammar_version = as_string(r.required("grammar_version"), "/grammar_version");

  const json& views = as_array(r.required("views"), "/views");
  for (std::size_t i = 0; i < views.size(); ++i)
    spec.views.push_back(parse_view(views[i], "/views/" + std::to_string(i)));

  const json& cameras = as_array(r.required("cameras"), "/cameras");
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    ObjectReader cr(cameras[i], "/cameras/" + std::to_string(i));
    CameraDef c;
    c.camera_id = as_string(cr.required("camera_id"), cr.child("camera_id"));
    c.position = as_vec3(cr.required("position"), cr.child("position"));
    c.direction = as_vec3(cr.required("direction"), cr.child("direction"));
    cr.finish();
    spec.cameras.push_back(std::move(c));
  }

  const json& knots = as_array(r.required("knots"), "/knots");
  for (std::size_t i = 0; i < knots.size(); ++i)
    spec.knots.push_back(parse_knot(knots[i], "/knots/" + std::to_string(i)));

  r.finish();
  return spec;
}

json to_json(const KnotDef& k) {
  json j;
  j["name"] = k.name;
  if (!k.schemes.empty()) {
    json schemes = json::array();
    for (const auto& s : k.schemes) {
      json sj;
      sj["in"] = ref_to_json(s.in);
      sj["out"] = ref_to_json(s.out);
      if (s.relation) sj["relation"] = to_string(*s.relation);
      if (s.level) sj["level"] = to_string(*s.level);
      if (s.aggregation) sj["operation"] = to_string(*s.aggregation);
      else if (s.expression) sj["operation"] = *s.expression;
      schemes.push_back(std::move(sj));
    }
    j["schemes"] = std::move(schemes);
  }
  if (k.filter) {
    json f;
    if (k.filter->bounding_box) {
      const auto& b = *k.filter->bounding_box;
      f["bounding_box"] = {b.lat_min, b.lon_min, b.lat_max, b.lon_max};
    }
    if (k.filter->address) f["address"] = *k.filter->address;
    j["filter"] = std::move(f);
  }
  if (k.operation) {
    json op;
    op["expression"] = k.operation->expression;
    json inputs = json::array();
    for (const auto& in : k.operation->inputs) {
      if (in.alias) inputs.push_back({{"knot", in.knot}, {"alias", *in.alias}});
      else inputs.push_back(in.knot);
    }
    op["inputs"] = std::move(inputs);
    if (k.operation->relation) op["relation"] = to_string(*k.operation->relation);
    j["operation"] = std::move(op);
  }
  return j;
}

json to_json(const Specification& spec) {
  json j;
  j["grammar_version"] = spec.grammar_version;
  json cameras = json::array();
  for (const auto& c : spec.cameras)
    cameras.push_back({{"camera_id", c.camera_id}, {"position", c.position}, {"direction", c.direction}});
  j["cameras"] = std::move(cameras);
  json knots = json::array();
  for (const auto& k : spec.knots) knots.push_back(to_json(k));
  j["knots"] = std::move(knots);
  json views = json::array();
  for (const auto& v : spec.views) {
    json vj;
    json bindings = json::array();
    for (const auto& b : v.map.knots)
      bindings.push_back({{"knot_id", b.knot_id}, {"interaction", to_string(b.interaction)}});
    vj["map"] = {{"camera_id", v.map.camera_id}, {"knots", std::move(bindings)}};
    json plots = json::array();
    for (const auto& p : v.plots) {
      json pj;
      pj["chart_spec"] = p.chart_spec;
      json pk = json::array();
      for (const auto& b : p.knots) pk.push_back({{"knot_id", b.knot_id}, {"arrangement", to_string(b.arrangement)}});
      pj["knots"] = std::move(pk);
      if (p.interaction) pj["interaction"] = to_string(*p.interaction);
      pj["args"] = p.args;
      plots.push_back(std::move(pj));
    }
    vj["plots"] = std::move(plots);
    views.push_back(std::move(vj));
  }
  j["views"] = std::move(views);
  return j;
}

std::string serialize(const Specification& spec) {
  return to_json(spec).dump(2) + "\n";
}

Specification canonicalize(Specification spec) {
  for (auto& c : spec.cameras) {
    const double n = std::sqrt(c.direction[0] * c.direction[0] + c.direction[1] * c.direction[1] +
                               c.direction[2] * c.direction[2]);
    if (n > 0 && n != 1.0)
      for (auto& d : c.direction) d /= n;
  }
  for (auto& k : spec.knots)
    for (auto& s : k.schemes)
      if (!s.level && s.relation) s.level = default_level(*s.relation);
  for (auto& v : spec.views)
    for (auto& p : v.plots)
      if (!p.interaction) p.interaction = Interaction::none;
  return spec;
}

json to_json(const Diagnostic& d) {
  return {{"severity", d.severity == Severity::error ? "error" : "warning"},
          {"code", d.code},
          {"path", d.path},
          {"message", d.message}};
}

bool has_errors(const std::vector<Diagnostic>& diagnostics) {
  return std::any_of(diagnostics.begin(), diagnostics.end(),
                     [](const Diagnostic& d) { return d.severity == Severity::error; });
}

std::string layer_base_name(std::string_view ref) {
  std::string s(ref);
  if (const auto slash = s.find_last_of("/\\"); slash != std::string::npos) s = s.substr(slash + 1);
  if (s.size() > 4 && s.ends_with(".utk")) s.resize(s.size() - 4);
  return s;
}

namespace {

struct Validator {
  const Specification& spec;
  const LayerCatalog* catalog;
  std::vector<Diagnostic> out;
  // knot name -> final physical layer ("" when unknown)
  std::map<std::string, std::string> final_layer;
  std::map<std::string, std::size_t> knot_index;

  void error(std::string code, std::string path, std::string message) {
    out.push_back({Severity::error, std::move(code), std::move(path), std::move(message)});
  }
  void warning(std::string code, std::string path, std::string message) {
    out.push_back({Severity::warning, std::move(code), std::move(path), std::move(message)});
  }

  // Resolves a layer ref; returns nullopt (after reporting) when missing.
  std::optional<LayerInfo> layer(const Ref& ref, const std::string& path) {
    if (!catalog) return LayerInfo{layer_base_name(ref.name), true, ""};
    auto info = catalog->resolve(ref.name);
    if (!info) error("UnresolvedReference", path, "layer '" + ref.name + "' is not in the workspace");
    return info;
  }

  // Knot referenced from knot number `self`; must be declared earlier.
  bool earlier_knot(const std::string& name, std::size_t self, const std::string& path) {
    const auto it = knot_index.find(name);
    if (it == knot_index.end()) {
      error("UnresolvedReference", path, "knot '" + name + "' is not defined");
      return false;
    }
    if (it->second >= self) {
      error("CyclicDependency", path,
            "knot '" + name + "' must be declared before it is used (knot dependencies must form a DAG)");
      return false;
    }
    return true;
  }

  void run() {
    if (spec.grammar_version != kGrammarVersion)
      error("UnsupportedVersion", "/grammar_version",
            "grammar version '" + spec.grammar_version + "' is not supported (expected " +
                std::string(kGrammarVersion) + ")");

    std::set<std::string> camera_ids;
    for (std::size_t i = 0; i < spec.cameras.size(); ++i) {
      const auto& c = spec.cameras[i];
      const auto p = "/cameras/" + std::to_string(i);
      if (!camera_ids.insert(c.camera_id).second)
        error("DuplicateName", p + "/camera_id", "camera id '" + c.camera_id + "' is not unique");
      if (c.direction == std::array<double, 3>{0, 0, 0})
        error("InvalidCamera", p + "/direction", "camera direction must be non-zero");
    }

    for (std::size_t i = 0; i < spec.knots.size(); ++i) {
      const auto& k = spec.knots[i];
      if (!knot_index.emplace(k.name, i).second)
        error("DuplicateName", "/knots/" + std::to_string(i) + "/name", "knot name '" + k.name + "' is not unique");
    }
    for (std::size_t i = 0; i < spec.knots.size(); ++i) check_knot(i);

    if (spec.views.empty()) error("EmptyViews", "/views", "a specification needs at least one view");
    for (std::size_t v = 0; v < spec.views.size(); ++v) check_view(v);
  }

  void check_knot(std::size_t index) {
    const auto& k = spec.knots[index];
    const auto p = "/knots/" + std::to_string(index);
    if (k.schemes.empty() == !k.operation.has_value()) {
      error("InvalidKnot", p, k.schemes.empty() ? "knot has neither integration schemes nor an operation"
                                                : "knot cannot have both integration schemes and an operation");
      return;
    }
    if (k.filter) {
      const auto fp = p + "/filter";
      if (k.filter->bounding_box) {
        const auto& b = *k.filter->bounding_box;
        if (!(b.lat_min < b.lat_max) || !(b.lon_min < b.lon_max))
          error("InvalidFilter", fp + "/bounding_box", "bounding box needs lat_min < lat_max and lon_min < lon_max");
        if (b.lat_min < -90 || b.lat_max > 90 || b.lon_min < -180 || b.lon_max > 180)
          error("InvalidFilter", fp + "/bounding_box", "bounding box is outside geodetic range");
      }
    }
    if (k.operation) check_operation(index, p);
    else check_schemes(index, p);
  }

  void check_schemes(std::size_t index, const std::string& p) {
    const auto& k = spec.knots[index];
    std::string current;  // physical layer carrying the running values
    bool known = true;
    for (std::size_t s = 0; s < k.schemes.size(); ++s) {
      const auto& sc = k.schemes[s];
      const auto sp = p + "/schemes/" + std::to_string(s);

      // input side
      std::string in_layer;
      bool in_physical = true;
      if (sc.in.kind == Ref::Kind::knot) {
        if (earlier_knot(sc.in.name, index, sp + "/in/knot")) in_layer = final_layer[sc.in.name];
        else known = false;
      } else if (auto info = layer(sc.in, sp + "/in/layer")) {
        in_layer = info->name;
        in_physical = info->physical;
      } else {
        known = false;
      }
      if (s > 0 && known && !in_layer.empty() && !current.empty() && in_layer != current)
        error("ChainBreak", sp + "/in",
              "scheme input '" + sc.in.name + "' does not continue the chain from physical layer '" + current + "'");
      if (s > 0 && !in_physical)
        error("ChainBreak", sp + "/in", "only the first scheme of a knot may read a thematic layer");
      if (s == 0 && catalog && sc.in.kind == Ref::Kind::layer && !in_layer.empty() && in_physical)
        error("ChainBreak", sp + "/in/layer",
              "the first scheme must read a thematic layer or a knot; '" + sc.in.name + "' carries no values");

      // output side
      std::string out_layer;
      if (sc.out.kind == Ref::Kind::knot) {
        if (earlier_knot(sc.out.name, index, sp + "/out/knot")) out_layer = final_layer[sc.out.name];
        else known = false;
      } else if (auto info = layer(sc.out, sp + "/out/layer")) {
        if (!info->physical)
          error("LayerReferenceRule", sp + "/out/layer",
                "scheme output '" + sc.out.name + "' is a thematic layer; outputs must be physical layers");
        out_layer = info->name;
      } else {
        known = false;
      }

      if (!sc.relation) {
        error("MissingRelation", sp, "integration scheme needs a spatial_relation");
      } else {
        const auto rel = *sc.relation;
        if (rel == Relation::inner_aggregate) {
          if (!in_layer.empty() && !out_layer.empty() && in_layer != out_layer)
            error("InvalidRelation", sp + "/relation", "inner_aggregate needs input and output on the same physical layer");
          if (sc.level && *sc.level != Level::objects)
            error("InvalidRelation", sp + "/level", "inner_aggregate always lands on objects");
        }
        const bool one_to_many = rel == Relation::contains || rel == Relation::intersects ||
                                 rel == Relation::inner_aggregate;
        if (one_to_many && !sc.aggregation && !sc.expression)
          error("MissingAggregation", sp,
                "relation '" + std::string(to_string(rel)) + "' is 1:n and needs an aggregation operation");
        if (rel == Relation::nearest && sc.in.kind == Ref::Kind::knot && sc.out.kind == Ref::Kind::knot &&
            !in_layer.empty() && in_layer == out_layer)
          warning("RedundantNearest", sp + "/relation",
                  "knots share a physical layer; the nearest element is redundant and aligns by index");
      }
      if (sc.expression)
        error("UnsupportedOperation", sp + "/operation",
              "custom functions are only supported between knots (operation knots); use one of " +
                  choices(kAggregations));
      current = out_layer;
    }
    final_layer[k.name] = known ? current : "";
  }

  void check_operation(std::size_t index, const std::string& p) {
    const auto& k = spec.knots[index];
    const auto& op = *k.operation;
    const auto op_path = p + "/operation";
    if (op.inputs.empty()) error("InvalidKnot", op_path + "/inputs", "operation needs at least one input knot");

    std::string shared;
    bool mismatch = false;
    std::set<std::string> identifiers;
    for (std::size_t i = 0; i < op.inputs.size(); ++i) {
      const auto ip = op_path + "/inputs/" + std::to_string(i);
      const auto& in = op.inputs[i];
      if (!identifiers.insert(in.identifier()).second)
        error("DuplicateName", ip, "input identifier '" + in.identifier() + "' is used twice");
      if (!earlier_knot(in.knot, index, ip)) continue;
      const auto& layer_name = final_layer[in.knot];
      if (layer_name.empty()) continue;
      if (shared.empty()) shared = layer_name;
      else if (layer_name != shared && !mismatch) {
        mismatch = true;
        error("PhysicalLayerMismatch", ip,
              "knots must share physical layer: '" + in.knot + "' is on '" + layer_name + "', expected '" + shared + "'");
      }
    }
    if (op.relation) {
      if (*op.relation == Relation::nearest || *op.relation == Relation::direct)
        warning("RedundantNearest", op_path + "/relation",
                "operation inputs share a physical layer; the relation is redundant and aligns by index");
      else
        error("InvalidRelation", op_path + "/relation",
              "relation '" + std::string(to_string(*op.relation)) + "' has no meaning between knots on one layer");
    }
    try {
      const auto e = expr::Expression::parse(op.expression);
      for (const auto& id : e.identifiers())
        if (!identifiers.count(id))
          error("UnboundIdentifier", op_path + "/expression",
                "identifier '" + id + "' is not an input knot name or alias");
    } catch (const ExprSyntaxError& e) {
      error("ExprSyntaxError", op_path + "/expression", e.detail());
    }
    final_layer[k.name] = mismatch ? "" : shared;
  }

  void check_view(std::size_t v) {
    const auto& view = spec.views[v];
    const auto p = "/views/" + std::to_string(v);
    if (!spec.find_camera(view.map.camera_id))
      error("UnresolvedReference", p + "/map/camera_id", "camera '" + view.map.camera_id + "' is not defined");
    if (view.map.knots.empty()) error("EmptyMap", p + "/map/knots", "a map needs at least one knot");

    std::map<std::string, std::string> layer_owner;
    for (std::size_t i = 0; i < view.map.knots.size(); ++i) {
      const auto& b = view.map.knots[i];
      const auto bp = p + "/map/knots/" + std::to_string(i) + "/knot_id";
      if (!check_knot_ref(b.knot_id, bp)) continue;
      const auto& layer_name = final_layer[b.knot_id];
      if (layer_name.empty()) continue;
      auto [it, inserted] = layer_owner.emplace(layer_name, b.knot_id);
      if (!inserted)
        error("DuplicatePhysicalLayer", bp,
              "knots '" + it->second + "' and '" + b.knot_id + "' both render physical layer '" + layer_name +
                  "' in one map");
    }

    for (std::size_t i = 0; i < view.plots.size(); ++i) {
      const auto& plot = view.plots[i];
      const auto pp = p + "/plots/" + std::to_string(i);
      if (plot.knots.empty()) error("EmptyPlot", pp + "/knots", "a plot needs at least one knot");
      bool footprint = false;
      for (std::size_t b = 0; b < plot.knots.size(); ++b) {
        const auto& kb = plot.knots[b];
        const auto bp = pp + "/knots/" + std::to_string(b);
        if (!check_knot_ref(kb.knot_id, bp + "/knot_id")) continue;
        if (kb.arrangement == Arrangement::embedded_surface)
          warning("unsupported-rendering", bp + "/arrangement",
                  "surface-embedded plots are accepted but not rendered; values are exposed per coordinate");
        if (kb.arrangement == Arrangement::embedded_footprint) {
          footprint = true;
          if (catalog) {
            const auto& layer_name = final_layer[kb.knot_id];
            auto info = layer_name.empty() ? std::nullopt : catalog->resolve(layer_name);
            if (info && info->kind != "mesh3d")
              error("InvalidArrangement", bp + "/arrangement",
                    "footprint plots need a knot on a mesh3d layer; '" + layer_name + "' is " + info->kind);
          }
        }
      }
      check_plot_args(plot, pp + "/args", footprint);
    }
  }

  void check_plot_args(const PlotDef& plot, const std::string& ap, bool footprint) {
    const auto& args = plot.args;
    if (const auto it = args.find("n_segments"); it != args.end()) {
      if (!it->is_number_integer() || it->get<long long>() <= 0)
        error("InvalidArgument", ap + "/n_segments", "n_segments must be a positive integer");
    } else if (footprint) {
      error("InvalidArgument", ap, "footprint plots need 'n_segments'");
    }
    for (const char* key : {"slice_height", "band_width"}) {
      const auto it = args.find(key);
      if (it == args.end()) {
        if (footprint) error("InvalidArgument", ap, std::string("footprint plots need '") + key + "'");
        continue;
      }
      if (!it->is_number()) error("InvalidArgument", ap + "/" + key, std::string(key) + " must be a number");
      else if (std::string(key) == "band_width" && !(it->get<double>() > 0))
        error("InvalidArgument", ap + "/" + key, "band_width must be positive");
    }
  }

  bool check_knot_ref(const std::string& id, const std::string& path) {
    if (knot_index.count(id)) return true;
    if (catalog && catalog->resolve(id))
      error("LayerReferenceRule", path,
            "'" + id + "' names a layer; maps and plots may only reference knots");
    else
      error("UnresolvedReference", path, "knot '" + id + "' is not defined");
    return false;
  }
};

}  // namespace

std::vector<Diagnostic> validate_spec(const Specification& spec, const LayerCatalog* catalog) {
  Validator v{spec, catalog, {}, {}, {}};
  v.run();
  return std::move(v.out);
}

std::vector<std::pair<std::string, std::string>> final_physical_layers(const Specification& spec,
                                                                       const LayerCatalog* catalog) {
  Validator v{spec, catalog, {}, {}, {}};
  v.run();
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : spec.knots) {
    const auto it = v.final_layer.find(k.name);
    if (it != v.final_layer.end() && !it->second.empty()) out.emplace_back(k.name, it->second);
  }
  return out;
}

}  // namespace utk::grammar
