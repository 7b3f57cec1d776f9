#include "utk/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace utk::ingest {

using geo::Polygon;
using geo::Polyline;
using geo::Vec2;
using geo::Vec3;
using layers::PhysicalKind;
using layers::PhysicalLayer;
using nlohmann::json;

std::string_view to_string(OsmFeature f) {
  switch (f) {
    case OsmFeature::buildings: return "buildings";
    case OsmFeature::parks: return "parks";
    case OsmFeature::water: return "water";
    case OsmFeature::roads: return "roads";
  }
  return "";
}

std::optional<OsmFeature> osm_feature_from_string(std::string_view s) {
  for (auto f : {OsmFeature::buildings, OsmFeature::parks, OsmFeature::water, OsmFeature::roads})
    if (to_string(f) == s) return f;
  return std::nullopt;
}

void IngestConfig::check() const {
  for (double v : {default_building_height, meters_per_level, grid_cell, surface_sample_edge})
    if (!(v > 0) || !std::isfinite(v))
      throw Error(ErrorCode::InvariantViolation, "ingest length parameters must be positive");
}

OsmExtract OsmExtract::parse(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::FormatError, std::string("OSM extract is not JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("elements") || !doc["elements"].is_array())
    throw Error(ErrorCode::FormatError, "OSM extract needs an 'elements' array", "/elements");
  OsmExtract out;
  auto tags_of = [](const json& e) {
    std::map<std::string, std::string> tags;
    if (const auto it = e.find("tags"); it != e.end() && it->is_object())
      for (const auto& [k, v] : it->items()) tags[k] = v.is_string() ? v.get<std::string>() : v.dump();
    return tags;
  };
  const auto& elements = doc["elements"];
  for (std::size_t i = 0; i < elements.size(); ++i) {
    const auto& e = elements[i];
    const auto path = "/elements/" + std::to_string(i);
    try {
      const auto type = e.at("type").get<std::string>();
      if (type == "node") {
        out.nodes[e.at("id").get<std::int64_t>()] = {e.at("lat").get<double>(), e.at("lon").get<double>()};
      } else if (type == "way") {
        Way w;
        w.id = e.at("id").get<std::int64_t>();
        w.refs = e.value("nodes", std::vector<std::int64_t>{});
        w.tags = tags_of(e);
        out.ways.push_back(std::move(w));
      } else if (type == "relation") {
        Relation r;
        r.id = e.at("id").get<std::int64_t>();
        for (const auto& m : e.value("members", json::array()))
          r.members.push_back({m.at("type").get<std::string>(), m.at("ref").get<std::int64_t>(), m.value("role", "")});
        r.tags = tags_of(e);
        out.relations.push_back(std::move(r));
      }
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::FormatError, ex.what(), path);
    }
  }
  return out;
}

namespace {

using Tags = std::map<std::string, std::string>;

std::optional<OsmFeature> classify(const Tags& tags) {
  auto has = [&](const char* k, const char* v = nullptr) {
    const auto it = tags.find(k);
    return it != tags.end() && (v == nullptr || it->second == v);
  };
  if (has("building") && !has("building", "no")) return OsmFeature::buildings;
  if (has("leisure", "park")) return OsmFeature::parks;
  if (has("natural", "water") || has("waterway", "riverbank")) return OsmFeature::water;
  if (has("highway")) return OsmFeature::roads;
  return std::nullopt;
}

// Leading number of a tag such as "20", "20 m" or "12.5m".
std::optional<double> leading_number(const std::string& s) {
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && *b == ' ') ++b;
  double v = 0;
  const auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc() || !std::isfinite(v) || v <= 0) return std::nullopt;
  return v;
}

double building_height(const Tags& tags, const IngestConfig& config) {
  if (const auto it = tags.find("height"); it != tags.end())
    if (auto h = leading_number(it->second)) return *h;
  if (const auto it = tags.find("building:levels"); it != tags.end())
    if (auto l = leading_number(it->second)) return *l * config.meters_per_level;
  return config.default_building_height;
}

layers::Attributes attributes_of(const Tags& tags, std::int64_t id) {
  layers::Attributes a;
  for (const auto& [k, v] : tags) a[k] = Scalar(v);
  a["osm_id"] = Scalar(static_cast<double>(id));
  return a;
}

// Chains way node lists into closed rings by matching endpoints.
std::optional<std::vector<std::vector<std::int64_t>>> assemble_rings(std::vector<std::vector<std::int64_t>> parts) {
  std::vector<std::vector<std::int64_t>> rings;
  while (!parts.empty()) {
    auto ring = std::move(parts.front());
    parts.erase(parts.begin());
    while (ring.size() < 2 || ring.front() != ring.back()) {
      bool extended = false;
      for (auto it = parts.begin(); it != parts.end(); ++it) {
        auto& p = *it;
        if (p.empty()) continue;
        if (p.front() == ring.back()) {
          ring.insert(ring.end(), p.begin() + 1, p.end());
        } else if (p.back() == ring.back()) {
          ring.insert(ring.end(), p.rbegin() + 1, p.rend());
        } else {
          continue;
        }
        parts.erase(it);
        extended = true;
        break;
      }
      if (!extended) return std::nullopt;
    }
    rings.push_back(std::move(ring));
  }
  return rings;
}

struct RegionTest {
  std::optional<geo::Box2> box;
  std::optional<Polygon> polygon;

  bool contains(Vec2 p) const {
    if (box) return box->contains(p);
    if (polygon) return geo::point_in_polygon(p, *polygon);
    return true;
  }
};

RegionTest region_test(const Region& region, const geo::LocalFrame& frame, const Geocoder* geocoder) {
  RegionTest t;
  std::optional<grammar::BoundingBox> box = region.box;
  if (region.address) {
    const OfflineGeocoder offline;
    box = (geocoder ? geocoder : &offline)->lookup(*region.address);
  }
  if (box) {
    geo::Box2 b;
    b.expand(frame.project(box->lat_min, box->lon_min, 0).xy());
    b.expand(frame.project(box->lat_max, box->lon_max, 0).xy());
    t.box = b;
  } else if (!region.polygon.empty()) {
    Polygon poly;
    for (const auto& g : region.polygon) poly.points.push_back(frame.project(g).xy());
    poly.ring_sizes = {static_cast<std::uint32_t>(poly.points.size())};
    geo::normalize_winding(poly);
    t.polygon = std::move(poly);
  }
  return t;
}

// Liang-Barsky clip of segment a-b to a box; nullopt when outside.
std::optional<std::pair<Vec2, Vec2>> clip_segment(Vec2 a, Vec2 b, const geo::Box2& box) {
  double t0 = 0, t1 = 1;
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double p[4] = {-dx, dx, -dy, dy};
  const double q[4] = {a.x - box.min_x, box.max_x - a.x, a.y - box.min_y, box.max_y - a.y};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0) {
      if (q[i] < 0) return std::nullopt;
      continue;
    }
    const double r = q[i] / p[i];
    if (p[i] < 0) t0 = std::max(t0, r);
    else t1 = std::min(t1, r);
    if (t0 > t1) return std::nullopt;
  }
  const Vec2 c{a.x + t0 * dx, a.y + t0 * dy};
  const Vec2 d{a.x + t1 * dx, a.y + t1 * dy};
  return std::pair{t0 == 0 ? a : c, t1 == 1 ? b : d};
}

Polyline clip_line(const std::vector<Vec2>& pts, const RegionTest& region) {
  Polyline out;
  std::vector<Vec2> part;
  auto flush = [&] {
    if (part.size() >= 2) {
      out.points.insert(out.points.end(), part.begin(), part.end());
      out.part_sizes.push_back(static_cast<std::uint32_t>(part.size()));
    }
    part.clear();
  };
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    std::optional<std::pair<Vec2, Vec2>> seg;
    if (region.box) {
      seg = clip_segment(pts[i], pts[i + 1], *region.box);
    } else {
      const Vec2 mid{(pts[i].x + pts[i + 1].x) / 2, (pts[i].y + pts[i + 1].y) / 2};
      if (region.contains(mid)) seg = std::pair{pts[i], pts[i + 1]};
    }
    if (!seg || seg->first == seg->second) {
      flush();
      continue;
    }
    if (!part.empty() && !(part.back() == seg->first)) flush();
    if (part.empty()) part.push_back(seg->first);
    part.push_back(seg->second);
  }
  flush();
  return out;
}

struct AreaFeature {
  std::int64_t id;
  OsmFeature feature;
  const Tags* tags;
  Polygon footprint;
};

void add_region_object(PhysicalLayer& layer, const Polygon& poly, layers::Attributes attrs) {
  std::vector<Vec3> local;
  for (const auto& p : poly.points) local.push_back({p.x, p.y, 0});
  auto& o = layer.add_local(std::move(local));
  o.rings = poly.ring_sizes;
  o.attributes = std::move(attrs);
}

bool add_building(PhysicalLayer& layer, const Polygon& footprint, double height, layers::Attributes attrs) {
  const auto prism = extrude(footprint, 0.0, height);
  if (prism.indices.size() < 3 * (2 + 2 * footprint.points.size())) return false;
  auto& o = layer.add_local(prism.vertices);
  o.indices = prism.indices;
  o.attributes = std::move(attrs);
  return true;
}

// Cleans a footprint in place; false when nothing with area is left.
bool clean_polygon(Polygon& poly) {
  poly = simplify_rings(poly);
  if (poly.ring_sizes.empty()) return false;
  geo::normalize_winding(poly);
  return poly.area() > 1e-9;
}

}  // namespace

std::vector<PhysicalLayer> ingest_osm(const OsmExtract& extract, const IngestConfig& config,
                                      const geo::LocalFrame& frame, WarningLog* log, const Geocoder* geocoder) {
  config.check();
  const auto region = region_test(config.region, frame, geocoder);
  auto wanted = [&](OsmFeature f) {
    return std::find(config.features.begin(), config.features.end(), f) != config.features.end();
  };

  std::size_t candidates = 0, malformed = 0;
  auto resolve = [&](const std::vector<std::int64_t>& refs, std::int64_t id, std::vector<Vec2>& out) {
    out.clear();
    for (auto r : refs) {
      const auto it = extract.nodes.find(r);
      if (it == extract.nodes.end()) {
        warn(log, "way " + std::to_string(id) + " references missing node " + std::to_string(r) + "; skipped");
        return false;
      }
      out.push_back(frame.project(it->second.lat, it->second.lon, 0).xy());
    }
    return true;
  };

  std::map<OsmFeature, PhysicalLayer> out;
  auto layer_for = [&](OsmFeature f) -> PhysicalLayer& {
    auto& l = out[f];
    if (l.name.empty()) {
      l.name = std::string(to_string(f));
      l.kind = f == OsmFeature::buildings ? PhysicalKind::mesh3d
               : f == OsmFeature::roads   ? PhysicalKind::lines
                                          : PhysicalKind::polygons2d;
      l.crs_origin = frame;
    }
    return l;
  };

  std::vector<AreaFeature> areas;
  std::vector<Vec2> pts;
  for (const auto& w : extract.ways) {
    const auto f = classify(w.tags);
    if (!f || !wanted(*f)) continue;
    ++candidates;
    if (!resolve(w.refs, w.id, pts)) {
      ++malformed;
      continue;
    }
    if (*f == OsmFeature::roads) {
      auto line = clip_line(pts, region);
      if (line.points.empty()) continue;
      std::vector<Vec3> local;
      for (const auto& p : line.points) local.push_back({p.x, p.y, 0});
      auto& o = layer_for(*f).add_local(std::move(local));
      o.rings = line.part_sizes;
      o.attributes = attributes_of(w.tags, w.id);
      continue;
    }
    if (w.refs.size() < 4 || w.refs.front() != w.refs.back()) {
      warn(log, "way " + std::to_string(w.id) + " is not a closed ring; skipped");
      ++malformed;
      continue;
    }
    pts.pop_back();
    Polygon poly{pts, {static_cast<std::uint32_t>(pts.size())}};
    areas.push_back({w.id, *f, &w.tags, std::move(poly)});
  }

  for (const auto& r : extract.relations) {
    const auto type = r.tags.find("type");
    if (type == r.tags.end() || type->second != "multipolygon") continue;
    const auto f = classify(r.tags);
    if (!f || !wanted(*f) || *f == OsmFeature::roads) continue;
    ++candidates;
    std::vector<std::vector<std::int64_t>> outer, inner;
    bool ok = true;
    for (const auto& m : r.members) {
      if (m.type != "way") continue;
      const auto w = std::find_if(extract.ways.begin(), extract.ways.end(), [&](const auto& x) { return x.id == m.ref; });
      if (w == extract.ways.end()) {
        ok = false;
        break;
      }
      (m.role == "inner" ? inner : outer).push_back(w->refs);
    }
    auto outer_rings = ok ? assemble_rings(std::move(outer)) : std::nullopt;
    auto inner_rings = ok ? assemble_rings(std::move(inner)) : std::nullopt;
    if (!outer_rings || !inner_rings || outer_rings->empty()) {
      warn(log, "relation " + std::to_string(r.id) + " has unresolvable members; skipped");
      ++malformed;
      continue;
    }
    Polygon poly;
    bool resolved = true;
    for (const auto* rings : {&*outer_rings, &*inner_rings}) {
      for (const auto& ring : *rings) {
        if (!resolve(ring, r.id, pts)) {
          resolved = false;
          break;
        }
        pts.pop_back();
        poly.points.insert(poly.points.end(), pts.begin(), pts.end());
        poly.ring_sizes.push_back(static_cast<std::uint32_t>(pts.size()));
      }
    }
    if (!resolved) {
      ++malformed;
      continue;
    }
    areas.push_back({r.id, *f, &r.tags, std::move(poly)});
  }

  for (auto& a : areas) {
    if (!clean_polygon(a.footprint)) {
      warn(log, "feature " + std::to_string(a.id) + " has no area; skipped");
      continue;
    }
    if (!region.contains(a.footprint.centroid())) continue;
    auto attrs = attributes_of(*a.tags, a.id);
    if (a.feature == OsmFeature::buildings) {
      if (!add_building(layer_for(a.feature), a.footprint, building_height(*a.tags, config), std::move(attrs)))
        warn(log, "building " + std::to_string(a.id) + " could not be triangulated; skipped");
    } else {
      add_region_object(layer_for(a.feature), a.footprint, std::move(attrs));
    }
  }

  if (candidates > 0 && malformed == candidates)
    throw Error(ErrorCode::MalformedWay, "every candidate feature has unresolvable node references");
  std::vector<PhysicalLayer> result;
  for (auto& [f, layer] : out)
    if (!layer.objects.empty()) result.push_back(std::move(layer));
  if (result.empty()) throw Error(ErrorCode::EmptyRegion, "no requested features inside the region");
  return result;
}

namespace {

layers::Attributes properties_of(const json& feature) {
  layers::Attributes a;
  const auto it = feature.find("properties");
  if (it == feature.end() || !it->is_object()) return a;
  for (const auto& [k, v] : it->items()) {
    if (v.is_object() || v.is_array()) a[k] = Scalar(v.dump());
    else a[k] = scalar_from_json(v);
  }
  return a;
}

std::vector<Vec2> ring_from_json(const json& ring, const geo::LocalFrame& frame, const std::string& path) {
  if (!ring.is_array()) throw Error(ErrorCode::FormatError, "expected a coordinate array", path);
  std::vector<Vec2> pts;
  for (const auto& c : ring) {
    if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number())
      throw Error(ErrorCode::FormatError, "expected [lon, lat] positions", path);
    pts.push_back(frame.project(c[1].get<double>(), c[0].get<double>(), 0).xy());
  }
  return pts;
}

void append_polygon(Polygon& poly, const json& rings, const geo::LocalFrame& frame, const std::string& path) {
  if (!rings.is_array()) throw Error(ErrorCode::FormatError, "expected an array of rings", path);
  for (const auto& ring : rings) {
    auto pts = ring_from_json(ring, frame, path);
    if (pts.size() > 1 && pts.front() == pts.back()) pts.pop_back();
    if (pts.size() < 3) throw Error(ErrorCode::FormatError, "ring with fewer than 3 distinct positions", path);
    poly.points.insert(poly.points.end(), pts.begin(), pts.end());
    poly.ring_sizes.push_back(static_cast<std::uint32_t>(pts.size()));
  }
}

}  // namespace

PhysicalLayer ingest_geojson(const json& doc, const std::string& name, PhysicalKind kind,
                             const geo::LocalFrame& frame, WarningLog* log, double default_height) {
  std::vector<json> features;
  const auto type = doc.value("type", "");
  if (type == "FeatureCollection") {
    for (const auto& f : doc.value("features", json::array())) features.push_back(f);
  } else if (type == "Feature") {
    features.push_back(doc);
  } else if (!type.empty()) {
    features.push_back(json{{"type", "Feature"}, {"geometry", doc}, {"properties", json::object()}});
  } else {
    throw Error(ErrorCode::FormatError, "not a GeoJSON object", "/type");
  }
  if (features.empty()) throw Error(ErrorCode::EmptyCollection, "GeoJSON document has no features");

  PhysicalLayer layer;
  layer.name = name;
  layer.kind = kind;
  layer.crs_origin = frame;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto path = "/features/" + std::to_string(i) + "/geometry";
    const auto& f = features[i];
    const auto git = f.find("geometry");
    if (git == f.end() || git->is_null()) {
      warn(log, "feature " + std::to_string(i) + " has no geometry; skipped");
      continue;
    }
    const auto& g = *git;
    const auto gtype = g.value("type", "");
    const auto& coords = g.contains("coordinates") ? g["coordinates"] : json();
    auto attrs = properties_of(f);

    if (is_region_kind(kind) || kind == PhysicalKind::mesh3d) {
      Polygon poly;
      if (gtype == "Polygon") {
        append_polygon(poly, coords, frame, path);
      } else if (gtype == "MultiPolygon") {
        if (!coords.is_array()) throw Error(ErrorCode::FormatError, "expected an array of polygons", path);
        for (const auto& part : coords) append_polygon(poly, part, frame, path);
      } else {
        throw Error(ErrorCode::UnsupportedGeometry,
                    "'" + gtype + "' geometry cannot form a " + std::string(layers::to_string(kind)) + " layer", path);
      }
      if (geo::normalize_winding(poly)) warn(log, "feature " + std::to_string(i) + " ring winding normalized");
      if (kind == PhysicalKind::mesh3d) {
        if (!clean_polygon(poly)) {
          warn(log, "feature " + std::to_string(i) + " has no area; skipped");
          continue;
        }
        double height = default_height;
        if (const auto h = attrs.find("height"); h != attrs.end() && h->second.is_number() && h->second.number() > 0)
          height = h->second.number();
        if (!add_building(layer, poly, height, std::move(attrs)))
          warn(log, "feature " + std::to_string(i) + " could not be triangulated; skipped");
      } else {
        add_region_object(layer, poly, std::move(attrs));
      }
    } else {
      Polyline line;
      auto add_part = [&](const json& part) {
        auto pts = ring_from_json(part, frame, path);
        if (pts.size() < 2) throw Error(ErrorCode::FormatError, "line with fewer than 2 positions", path);
        line.points.insert(line.points.end(), pts.begin(), pts.end());
        line.part_sizes.push_back(static_cast<std::uint32_t>(pts.size()));
      };
      if (gtype == "LineString") {
        add_part(coords);
      } else if (gtype == "MultiLineString") {
        if (!coords.is_array()) throw Error(ErrorCode::FormatError, "expected an array of lines", path);
        for (const auto& part : coords) add_part(part);
      } else {
        throw Error(ErrorCode::UnsupportedGeometry, "'" + gtype + "' geometry cannot form a lines layer", path);
      }
      std::vector<Vec3> local;
      for (const auto& p : line.points) local.push_back({p.x, p.y, 0});
      auto& o = layer.add_local(std::move(local));
      o.rings = line.part_sizes;
      o.attributes = std::move(attrs);
    }
  }
  if (layer.objects.empty()) throw Error(ErrorCode::EmptyCollection, "GeoJSON document has no usable features");
  return layer;
}

namespace {

// RFC 4180 style: commas, double quotes with "" escapes, CRLF or LF.
std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field.push_back(c);
      any = true;
    }
  }
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

// nullopt: not a number; NaN: a number token that is not finite.
std::optional<double> parse_number(const std::string& s) {
  double v = 0;
  const char* b = s.data();
  const char* e = b + s.size();
  if (b != e && *b == '+') ++b;
  const auto r = std::from_chars(b, e, v);
  if (r.ptr != e || (r.ec != std::errc() && r.ec != std::errc::result_out_of_range)) return std::nullopt;
  if (r.ec == std::errc::result_out_of_range) return std::nan("");
  return v;
}

}  // namespace

layers::ThematicLayer ingest_csv_text(std::string_view text, const CsvColumns& columns, const std::string& name,
                                      WarningLog* log) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  const auto rows = parse_csv(text);
  if (rows.empty()) throw Error(ErrorCode::MissingColumn, "CSV has no header row");
  const auto& header = rows.front();
  auto column = [&](const std::string& wanted) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (trim(header[i]) == wanted) return i;
    throw Error(ErrorCode::MissingColumn, "CSV has no column '" + wanted + "'");
  };
  const auto lat_col = column(columns.lat);
  const auto lon_col = column(columns.lon);
  const auto value_col = column(columns.value);
  // SIZE_MAX marks an absent height column.
  const std::size_t height_col = columns.height ? column(*columns.height) : SIZE_MAX;

  layers::ThematicLayer layer;
  layer.name = name;
  if (rows.size() == 1) warn(log, "CSV '" + name + "' has no data rows");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const auto line = std::to_string(r + 1);
    auto cell = [&](std::size_t c) { return c < row.size() ? trim(row[c]) : std::string(); };
    const auto lat = parse_number(cell(lat_col));
    const auto lon = parse_number(cell(lon_col));
    if (!lat || !lon || !std::isfinite(*lat) || !std::isfinite(*lon) || std::abs(*lat) > 90 || std::abs(*lon) > 180) {
      warn(log, "CSV line " + line + ": invalid latitude/longitude; row skipped");
      continue;
    }
    double height = 0;
    if (height_col != SIZE_MAX) {
      const auto h = cell(height_col);
      if (!h.empty()) {
        const auto hv = parse_number(h);
        if (hv && std::isfinite(*hv)) height = *hv;
        else warn(log, "CSV line " + line + ": invalid height; using 0");
      }
    }
    const auto raw = cell(value_col);
    if (raw.empty()) {
      warn(log, "CSV line " + line + ": empty value; stored as null");
      layer.add(*lat, *lon, height, Scalar::null());
    } else if (const auto v = parse_number(raw)) {
      layer.add(*lat, *lon, height, *v, log);
    } else {
      std::string lower = raw;
      std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
      if (lower == "nan" || lower == "inf" || lower == "-inf" || lower == "infinity") {
        warn(log, "CSV line " + line + ": non-finite value; stored as null");
        layer.add(*lat, *lon, height, Scalar::null());
      } else {
        layer.add(*lat, *lon, height, Scalar(raw));
      }
    }
  }
  if (!layer.points.empty()) layer.crs_origin = geo::LocalFrame{layer.points[0].position.lat, layer.points[0].position.lon};
  return layer;
}

layers::ThematicLayer ingest_csv(const std::filesystem::path& path, const CsvColumns& columns, const std::string& name,
                                 WarningLog* log) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ingest_csv_text(ss.str(), columns, name, log);
}

PhysicalLayer make_grid(const grammar::BoundingBox& box, double cell, const geo::LocalFrame& frame,
                        const std::string& name, std::size_t limit) {
  if (!(cell > 0) || !std::isfinite(cell)) throw Error(ErrorCode::InvariantViolation, "grid cell must be positive");
  if (!(box.lat_min < box.lat_max) || !(box.lon_min < box.lon_max))
    throw Error(ErrorCode::InvariantViolation, "grid region is degenerate");
  const auto lo = frame.project(box.lat_min, box.lon_min, 0);
  const auto hi = frame.project(box.lat_max, box.lon_max, 0);
  const double w = hi.x - lo.x, h = hi.y - lo.y;
  const auto nx = static_cast<std::size_t>(std::max(1.0, std::ceil(w / cell - 1e-9)));
  const auto ny = static_cast<std::size_t>(std::max(1.0, std::ceil(h / cell - 1e-9)));
  if (nx > limit || ny > limit || nx * ny > limit)
    throw Error(ErrorCode::TooManyCells, std::to_string(nx) + " x " + std::to_string(ny) + " cells exceed the limit of " +
                                             std::to_string(limit));
  PhysicalLayer layer;
  layer.name = name;
  layer.kind = PhysicalKind::grid;
  layer.crs_origin = frame;
  layer.objects.reserve(nx * ny);
  for (std::size_t row = 0; row < ny; ++row) {
    for (std::size_t col = 0; col < nx; ++col) {
      const double x0 = lo.x + static_cast<double>(col) * cell, y0 = lo.y + static_cast<double>(row) * cell;
      auto& o = layer.add_local({{x0, y0, 0}, {x0 + cell, y0, 0}, {x0 + cell, y0 + cell, 0}, {x0, y0 + cell, 0}});
      o.rings = {4};
    }
  }
  return layer;
}

namespace {

struct WeldKey {
  std::int64_t x, y, z;
  bool operator==(const WeldKey&) const = default;
};

struct WeldHash {
  std::size_t operator()(const WeldKey& k) const {
    std::size_t h = static_cast<std::size_t>(k.x) * 73856093u;
    h ^= static_cast<std::size_t>(k.y) * 19349663u;
    h ^= static_cast<std::size_t>(k.z) * 83492791u;
    return h;
  }
};

}  // namespace

std::vector<SurfaceSample> sample_surfaces(const PhysicalLayer& layer, double max_edge) {
  if (layer.kind != PhysicalKind::mesh3d)
    throw Error(ErrorCode::UnsupportedGeometry, "surface sampling needs a mesh3d layer");
  if (!(max_edge > 0)) throw Error(ErrorCode::InvariantViolation, "max_edge must be positive");
  std::vector<SurfaceSample> out;
  for (const auto& o : layer.objects) {
    const std::size_t first = out.size();
    std::vector<Vec3> normal_sum;
    std::unordered_map<WeldKey, std::vector<std::size_t>, WeldHash> cells;
    auto weld = [&](Vec3 p, Vec3 n) {
      const WeldKey k{static_cast<std::int64_t>(std::floor(p.x / kWeldTolerance)),
                      static_cast<std::int64_t>(std::floor(p.y / kWeldTolerance)),
                      static_cast<std::int64_t>(std::floor(p.z / kWeldTolerance))};
      for (std::int64_t dx = -1; dx <= 1; ++dx)
        for (std::int64_t dy = -1; dy <= 1; ++dy)
          for (std::int64_t dz = -1; dz <= 1; ++dz) {
            const auto it = cells.find({k.x + dx, k.y + dy, k.z + dz});
            if (it == cells.end()) continue;
            for (auto idx : it->second)
              if (geo::norm(out[first + idx].position - p) <= kWeldTolerance) {
                normal_sum[idx] = normal_sum[idx] + n;
                return;
              }
          }
      cells[k].push_back(normal_sum.size());
      normal_sum.push_back(n);
      out.push_back({p, {}, o.id});
    };
    for (std::size_t t = 0; t + 2 < o.indices.size(); t += 3) {
      const Vec3 a = o.local[o.indices[t]], b = o.local[o.indices[t + 1]], c = o.local[o.indices[t + 2]];
      const Vec3 n = geo::cross(b - a, c - a);  // length = 2 * area
      if (geo::norm(n) * 0.5 < 1e-9) continue;
      const double longest = std::max({geo::norm(b - a), geo::norm(c - b), geo::norm(a - c)});
      int levels = 0;
      if (longest > max_edge) levels = static_cast<int>(std::ceil(std::log2(longest / max_edge) - 1e-12));
      const int m = 1 << std::max(0, levels);
      for (int i = 0; i <= m; ++i)
        for (int j = 0; i + j <= m; ++j)
          weld(a + (b - a) * (static_cast<double>(i) / m) + (c - a) * (static_cast<double>(j) / m), n);
    }
    for (std::size_t i = 0; i < normal_sum.size(); ++i) out[first + i].normal = geo::normalized(normal_sum[i]);
  }
  return out;
}

}  // namespace utk::ingest
