#include "utk/layers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "utk/hash.hpp"

namespace utk::layers {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(PhysicalKind kind) {
  switch (kind) {
    case PhysicalKind::mesh3d: return "mesh3d";
    case PhysicalKind::polygons2d: return "polygons2d";
    case PhysicalKind::lines: return "lines";
    case PhysicalKind::grid: return "grid";
  }
  return "";
}

std::optional<PhysicalKind> physical_kind_from_string(std::string_view s) {
  for (auto k : {PhysicalKind::mesh3d, PhysicalKind::polygons2d, PhysicalKind::lines, PhysicalKind::grid})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

bool operator==(const PhysicalObject& a, const PhysicalObject& b) {
  return a.id == b.id && a.geodetic == b.geodetic && a.indices == b.indices && a.rings == b.rings &&
         a.attributes == b.attributes;
}

std::size_t PhysicalLayer::coordinate_count() const {
  std::size_t n = 0;
  for (const auto& o : objects) n += o.local.size();
  return n;
}

std::vector<std::uint32_t> PhysicalLayer::coordinate_owners() const {
  std::vector<std::uint32_t> owners;
  owners.reserve(coordinate_count());
  for (std::size_t i = 0; i < objects.size(); ++i)
    owners.insert(owners.end(), objects[i].local.size(), static_cast<std::uint32_t>(i));
  return owners;
}

std::vector<std::size_t> PhysicalLayer::coordinate_offsets() const {
  std::vector<std::size_t> offsets{0};
  for (const auto& o : objects) offsets.push_back(offsets.back() + o.local.size());
  return offsets;
}

std::vector<geo::Vec3> PhysicalLayer::coordinates() const {
  std::vector<geo::Vec3> out;
  out.reserve(coordinate_count());
  for (const auto& o : objects) out.insert(out.end(), o.local.begin(), o.local.end());
  return out;
}

PhysicalObject& PhysicalLayer::add_local(std::vector<geo::Vec3> local) {
  PhysicalObject o;
  o.id = static_cast<std::uint32_t>(objects.size());
  o.geodetic.reserve(local.size());
  for (const auto& p : local) o.geodetic.push_back(crs_origin.unproject(p));
  o.local = std::move(local);
  objects.push_back(std::move(o));
  return objects.back();
}

void PhysicalLayer::reproject(const geo::LocalFrame& frame) {
  for (auto& o : objects) {
    o.local.clear();
    o.local.reserve(o.geodetic.size());
    for (const auto& g : o.geodetic) o.local.push_back(frame.project(g));
  }
}

void ThematicLayer::add(double lat, double lon, double height, double value, WarningLog* log) {
  if (!std::isfinite(value))
    warn(log, "layer '" + name + "': point " + std::to_string(points.size()) + " has a non-finite value; stored as null");
  points.push_back({{lat, lon, height}, Scalar(value)});
}

void ThematicLayer::add(double lat, double lon, double height, Scalar value) {
  points.push_back({{lat, lon, height}, std::move(value)});
}

std::vector<geo::Vec3> ThematicLayer::positions(const geo::LocalFrame& frame) const {
  std::vector<geo::Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(frame.project(p.position));
  return out;
}

namespace {

[[noreturn]] void violation(const std::string& layer, const std::string& message) {
  throw Error(ErrorCode::InvariantViolation, "layer '" + layer + "': " + message);
}

constexpr double kDegenerateArea = 1e-9;

double triangle_area(geo::Vec3 a, geo::Vec3 b, geo::Vec3 c) {
  return 0.5 * geo::norm(geo::cross(b - a, c - a));
}

geo::Polygon object_polygon(const PhysicalObject& o) {
  geo::Polygon poly;
  for (const auto& p : o.local) poly.points.push_back(p.xy());
  poly.ring_sizes = o.rings;
  return poly;
}

void check_geodetic(const std::string& layer, const geo::Geodetic& g, const std::string& where) {
  if (!(g.lat >= -90 && g.lat <= 90) || !(g.lon >= -180 && g.lon <= 180) || !std::isfinite(g.height))
    violation(layer, where + " has coordinates outside the geodetic range");
}

}  // namespace

void check_invariants(const PhysicalLayer& layer) {
  const auto& name = layer.name;
  if (name.empty()) violation(name, "name is empty");
  for (std::size_t i = 0; i < layer.objects.size(); ++i) {
    const auto& o = layer.objects[i];
    const auto where = "object " + std::to_string(i);
    if (o.id != i) violation(name, where + " has id " + std::to_string(o.id) + "; ids must be dense and 0-based");
    if (o.geodetic.empty()) violation(name, where + " has no coordinates");
    if (o.local.size() != o.geodetic.size()) violation(name, where + " is not projected");
    for (const auto& g : o.geodetic) check_geodetic(name, g, where);

    switch (layer.kind) {
      case PhysicalKind::mesh3d: {
        if (o.indices.empty() || o.indices.size() % 3 != 0)
          violation(name, where + " needs a non-empty triangle index list");
        for (auto idx : o.indices)
          if (idx >= o.local.size())
            violation(name, where + " has triangle index " + std::to_string(idx) + " out of range");
        for (std::size_t t = 0; t < o.indices.size(); t += 3)
          if (triangle_area(o.local[o.indices[t]], o.local[o.indices[t + 1]], o.local[o.indices[t + 2]]) <
              kDegenerateArea)
            violation(name, where + " has a zero-area triangle at " + std::to_string(t / 3));
        break;
      }
      case PhysicalKind::polygons2d:
      case PhysicalKind::grid: {
        std::size_t total = 0;
        for (auto r : o.rings) {
          if (r < 3) violation(name, where + " has a ring with fewer than 3 vertices");
          total += r;
        }
        if (o.rings.empty() || total != o.local.size())
          violation(name, where + " ring lengths do not cover its coordinates");
        std::size_t begin = 0;
        for (auto r : o.rings) {
          if (o.geodetic[begin] == o.geodetic[begin + r - 1])
            violation(name, where + " repeats the first vertex of a ring");
          begin += r;
        }
        auto poly = object_polygon(o);
        if (geo::normalize_winding(poly))
          violation(name, where + " ring winding must be CCW for exteriors and CW for holes");
        break;
      }
      case PhysicalKind::lines: {
        std::size_t total = 0;
        for (auto r : o.rings) {
          if (r < 2) violation(name, where + " has a line part with fewer than 2 vertices");
          total += r;
        }
        if (o.rings.empty() || total != o.local.size())
          violation(name, where + " part lengths do not cover its coordinates");
        break;
      }
    }
  }
}

void check_invariants(const ThematicLayer& layer) {
  if (layer.name.empty()) violation(layer.name, "name is empty");
  for (std::size_t i = 0; i < layer.points.size(); ++i)
    check_geodetic(layer.name, layer.points[i].position, "point " + std::to_string(i));
  if (layer.color_scale.domain && !((*layer.color_scale.domain)[0] < (*layer.color_scale.domain)[1]))
    violation(layer.name, "color scale domain needs lo < hi");
}

namespace {

json header(std::string_view type, const std::string& name, const geo::LocalFrame& origin) {
  return {{"container_version", kContainerVersion},
          {"type", type},
          {"name", name},
          {"crs_origin", {origin.lat0, origin.lon0}}};
}

json attributes_to_json(const Attributes& attrs) {
  json j = json::object();
  for (const auto& [k, v] : attrs) j[k] = v;
  return j;
}

}  // namespace

std::string encode(const PhysicalLayer& layer) {
  check_invariants(layer);
  json objects = json::array();
  for (const auto& o : layer.objects) {
    json coords = json::array();
    for (const auto& g : o.geodetic) {
      coords.push_back(g.lat);
      coords.push_back(g.lon);
      coords.push_back(g.height);
    }
    json oj{{"id", o.id}, {"coordinates", std::move(coords)}};
    if (layer.kind == PhysicalKind::mesh3d) oj["indices"] = o.indices;
    else oj["rings"] = o.rings;
    if (!o.attributes.empty()) oj["attributes"] = attributes_to_json(o.attributes);
    objects.push_back(std::move(oj));
  }
  json doc = header("physical", layer.name, layer.crs_origin);
  doc["payload"] = {{"kind", to_string(layer.kind)}, {"objects", std::move(objects)}};
  return doc.dump() + "\n";
}

std::string encode(const ThematicLayer& layer) {
  check_invariants(layer);
  json points = json::array();
  for (const auto& p : layer.points)
    points.push_back({p.position.lat, p.position.lon, p.position.height, p.value});
  json doc = header("thematic", layer.name, layer.crs_origin);
  doc["payload"] = {{"points", std::move(points)},
                    {"color_scale", grammar::to_json(layer.color_scale)},
                    {"metadata", layer.metadata}};
  return doc.dump() + "\n";
}

namespace {

[[noreturn]] void format_error(const std::string& message, const std::string& path = {}) {
  throw Error(ErrorCode::FormatError, message, path);
}

const json& field(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) format_error("expected object", path);
  const auto it = j.find(key);
  if (it == j.end()) format_error(std::string("missing field '") + key + "'", path + "/" + key);
  return *it;
}

double number_at(const json& j, const std::string& path) {
  if (!j.is_number()) format_error("expected number", path);
  return j.get<double>();
}

std::vector<std::uint32_t> index_array(const json& j, const std::string& path) {
  if (!j.is_array()) format_error("expected array", path);
  std::vector<std::uint32_t> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number_unsigned()) format_error("expected non-negative integer", path + "/" + std::to_string(i));
    out.push_back(j[i].get<std::uint32_t>());
  }
  return out;
}

PhysicalLayer decode_physical(const json& doc, const std::string& name, const geo::LocalFrame& origin,
                              const geo::LocalFrame& frame, WarningLog* log) {
  PhysicalLayer layer;
  layer.name = name;
  layer.crs_origin = origin;
  const json& payload = field(doc, "payload", "");
  const json& kind = field(payload, "kind", "/payload");
  if (!kind.is_string()) format_error("expected string", "/payload/kind");
  const auto k = physical_kind_from_string(kind.get<std::string>());
  if (!k) format_error("unknown physical kind '" + kind.get<std::string>() + "'", "/payload/kind");
  layer.kind = *k;

  const json& objects = field(payload, "objects", "/payload");
  if (!objects.is_array()) format_error("expected array", "/payload/objects");
  layer.objects.reserve(objects.size());
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto p = "/payload/objects/" + std::to_string(i);
    const json& oj = objects[i];
    PhysicalObject o;
    const json& id = field(oj, "id", p);
    if (!id.is_number_unsigned()) format_error("expected non-negative integer", p + "/id");
    o.id = id.get<std::uint32_t>();
    const json& coords = field(oj, "coordinates", p);
    if (!coords.is_array() || coords.size() % 3 != 0)
      format_error("coordinates must be a flat lat,lon,height array", p + "/coordinates");
    for (std::size_t c = 0; c < coords.size(); c += 3) {
      const auto cp = p + "/coordinates/" + std::to_string(c);
      o.geodetic.push_back({number_at(coords[c], cp), number_at(coords[c + 1], cp), number_at(coords[c + 2], cp)});
    }
    if (layer.kind == PhysicalKind::mesh3d) o.indices = index_array(field(oj, "indices", p), p + "/indices");
    else o.rings = index_array(field(oj, "rings", p), p + "/rings");
    if (const auto it = oj.find("attributes"); it != oj.end()) {
      if (!it->is_object()) format_error("expected object", p + "/attributes");
      for (const auto& [key, value] : it->items()) o.attributes[key] = scalar_from_json(value);
    }
    layer.objects.push_back(std::move(o));
  }
  layer.reproject(frame);

  // Hand-written files may carry clockwise exteriors; fix them up.
  if (is_region_kind(layer.kind)) {
    for (auto& o : layer.objects) {
      std::size_t total = 0;
      for (auto r : o.rings) total += r;
      if (total != o.local.size() || o.rings.empty()) continue;  // reported by check_invariants
      auto poly = object_polygon(o);
      if (!geo::normalize_winding(poly)) continue;
      warn(log, "layer '" + name + "': object " + std::to_string(o.id) + " ring winding normalized");
      std::size_t begin = 0;
      for (std::size_t r = 0; r < o.rings.size(); ++r) {
        const auto ring = poly.ring(r);
        // normalize_winding keeps the first vertex; a flip reverses the rest.
        if (ring.size() > 1 && !(ring[1] == o.local[begin + 1].xy())) {
          std::reverse(o.geodetic.begin() + begin + 1, o.geodetic.begin() + begin + o.rings[r]);
          std::reverse(o.local.begin() + begin + 1, o.local.begin() + begin + o.rings[r]);
        }
        begin += o.rings[r];
      }
    }
  }
  check_invariants(layer);
  return layer;
}

ThematicLayer decode_thematic(const json& doc, const std::string& name, const geo::LocalFrame& origin,
                              WarningLog* log) {
  ThematicLayer layer;
  layer.name = name;
  layer.crs_origin = origin;
  const json& payload = field(doc, "payload", "");
  const json& points = field(payload, "points", "/payload");
  if (!points.is_array()) format_error("expected array", "/payload/points");
  layer.points.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto p = "/payload/points/" + std::to_string(i);
    const json& pt = points[i];
    if (!pt.is_array() || pt.size() != 4) format_error("expected [lat, lon, height, value]", p);
    const json& v = pt[3];
    if (!(v.is_null() || v.is_number() || v.is_string() || v.is_boolean()))
      format_error("value must be a number, text or null", p + "/3");
    layer.add(number_at(pt[0], p + "/0"), number_at(pt[1], p + "/1"), number_at(pt[2], p + "/2"),
              scalar_from_json(v));
  }
  if (const auto it = payload.find("color_scale"); it != payload.end()) {
    try {
      layer.color_scale = grammar::parse_color_scale(*it, "/payload/color_scale");
    } catch (const Error& e) {
      format_error(e.detail(), e.path());
    }
  }
  if (const auto it = payload.find("metadata"); it != payload.end()) layer.metadata = *it;
  (void)log;
  check_invariants(layer);
  return layer;
}

}  // namespace

Layer decode(std::string_view text, const geo::LocalFrame& frame, WarningLog* log) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    format_error(std::string("not a JSON document: ") + e.what());
  }
  const json& version = field(doc, "container_version", "");
  if (!version.is_number_integer() || version.get<int>() != kContainerVersion)
    format_error("unsupported container version " + version.dump(), "/container_version");
  const json& type = field(doc, "type", "");
  const json& name = field(doc, "name", "");
  if (!name.is_string()) format_error("expected string", "/name");
  const json& origin = field(doc, "crs_origin", "");
  if (!origin.is_array() || origin.size() != 2) format_error("expected [lat0, lon0]", "/crs_origin");
  const geo::LocalFrame crs{number_at(origin[0], "/crs_origin/0"), number_at(origin[1], "/crs_origin/1")};
  if (type == "physical") return decode_physical(doc, name.get<std::string>(), crs, frame, log);
  if (type == "thematic") return decode_thematic(doc, name.get<std::string>(), crs, log);
  format_error("type must be 'physical' or 'thematic'", "/type");
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp);
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename " + tmp + ": " + ec.message());
}

}  // namespace

Layer load_layer(const fs::path& path, const geo::LocalFrame& frame, WarningLog* log) {
  const auto text = read_file(path);
  auto layer = decode(text, frame, log);
  const auto hash = sha256_hex(text);
  std::visit([&](auto& l) { l.content_hash = hash; }, layer);
  return layer;
}

geo::Polygon footprint(const PhysicalLayer& layer, std::size_t object) {
  const auto& o = layer.objects.at(object);
  if (layer.kind != PhysicalKind::mesh3d) return object_polygon(o);

  // Directed boundary edges of the upward-facing triangles.
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> edges;
  for (std::size_t t = 0; t + 2 < o.indices.size(); t += 3) {
    const std::uint32_t v[3] = {o.indices[t], o.indices[t + 1], o.indices[t + 2]};
    const auto n = geo::cross(o.local[v[1]] - o.local[v[0]], o.local[v[2]] - o.local[v[0]]);
    if (n.z <= 1e-12 * geo::norm(n)) continue;
    for (int e = 0; e < 3; ++e) {
      const auto a = v[e], b = v[(e + 1) % 3];
      const auto rev = edges.find({b, a});
      if (rev != edges.end()) edges.erase(rev);
      else ++edges[{a, b}];
    }
  }

  geo::Polygon poly;
  bool ok = !edges.empty();
  std::map<std::uint32_t, std::uint32_t> next;
  for (const auto& [e, count] : edges) {
    if (count != 1 || !next.emplace(e.first, e.second).second) ok = false;
  }
  while (ok && !next.empty()) {
    const auto start = next.begin()->first;
    std::uint32_t cur = start;
    std::uint32_t size = 0;
    do {
      const auto it = next.find(cur);
      if (it == next.end()) {
        ok = false;
        break;
      }
      poly.points.push_back(o.local[cur].xy());
      ++size;
      cur = it->second;
      next.erase(it);
    } while (cur != start);
    if (size < 3) ok = false;
    poly.ring_sizes.push_back(size);
  }
  if (ok) {
    geo::normalize_winding(poly);
    return poly;
  }

  std::vector<geo::Vec2> pts;
  for (const auto& p : o.local) pts.push_back(p.xy());
  poly.points = geo::convex_hull(std::move(pts));
  poly.ring_sizes = {static_cast<std::uint32_t>(poly.points.size())};
  return poly;
}

geo::Shape object_shape(const PhysicalLayer& layer, std::size_t object) {
  const auto& o = layer.objects.at(object);
  if (layer.kind == PhysicalKind::lines) {
    geo::Polyline line;
    for (const auto& p : o.local) line.points.push_back(p.xy());
    line.part_sizes = o.rings;
    return geo::Shape::of_polyline(std::move(line));
  }
  return geo::Shape::of_region(footprint(layer, object));
}

std::string JoinKey::digest() const {
  const json j{{"left", left_hash},
               {"right", right_hash},
               {"relation", grammar::to_string(relation)},
               {"out_level", grammar::to_string(out_level)},
               {"in_level", grammar::to_string(in_level)}};
  return sha256_hex(j.dump());
}

JoinCache::JoinCache(std::optional<fs::path> dir) : dir_(std::move(dir)) {}

std::optional<JoinMap> JoinCache::lookup(const JoinKey& key) const {
  const auto digest = key.digest();
  {
    std::shared_lock lock(mutex_);
    if (const auto it = memory_.find(digest); it != memory_.end() && it->second.key == key) {
      ++hits_;
      return it->second;
    }
  }
  if (dir_) {
    const auto path = *dir_ / (digest + ".json");
    std::error_code ec;
    if (fs::exists(path, ec)) {
      try {
        const auto j = json::parse(read_file(path));
        JoinMap map;
        map.key = key;
        const auto& k = j.at("key");
        if (k.at("left") == key.left_hash && k.at("right") == key.right_hash &&
            k.at("relation") == grammar::to_string(key.relation) &&
            k.at("out_level") == grammar::to_string(key.out_level) &&
            k.at("in_level") == grammar::to_string(key.in_level)) {
          map.entries = j.at("entries").get<std::vector<std::vector<std::uint32_t>>>();
          std::unique_lock lock(mutex_);
          memory_[digest] = map;
          ++hits_;
          return map;
        }
      } catch (const std::exception&) {
        // unreadable or foreign file: treat as a miss and let store overwrite it
      }
    }
  }
  std::unique_lock lock(mutex_);
  ++misses_;
  return std::nullopt;
}

void JoinCache::store(const JoinMap& map) {
  const auto digest = map.key.digest();
  std::unique_lock lock(mutex_);
  memory_[digest] = map;
  if (!dir_) return;
  std::error_code ec;
  fs::create_directories(*dir_, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir_->string() + ": " + ec.message());
  const json j{{"key",
                {{"left", map.key.left_hash},
                 {"right", map.key.right_hash},
                 {"relation", grammar::to_string(map.key.relation)},
                 {"out_level", grammar::to_string(map.key.out_level)},
                 {"in_level", grammar::to_string(map.key.in_level)}}},
               {"entries", map.entries}};
  write_file_atomic(*dir_ / (digest + ".json"), j.dump() + "\n");
}

std::size_t JoinCache::hits() const {
  std::shared_lock lock(mutex_);
  return hits_;
}

std::size_t JoinCache::misses() const {
  std::shared_lock lock(mutex_);
  return misses_;
}

Workspace::Workspace() : cache_(std::make_unique<JoinCache>()) {}

Workspace::Workspace(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  if (!fs::is_directory(root_, ec)) throw Error(ErrorCode::IoError, "workspace " + root_.string() + " is not a directory");
  cache_ = std::make_unique<JoinCache>(root_ / ".cache" / "joins");
  refresh();
}

geo::LocalFrame Workspace::frame() const {
  std::lock_guard lock(mutex_);
  return frame_.value_or(geo::LocalFrame{});
}

bool Workspace::has_frame() const {
  std::lock_guard lock(mutex_);
  return frame_.has_value();
}

void Workspace::set_frame(const geo::LocalFrame& frame) {
  std::lock_guard lock(mutex_);
  frame_ = frame;
  loaded_.clear();
  if (!root_.empty()) {
    const json j{{"origin", {frame.lat0, frame.lon0}}};
    write_file_atomic(root_ / "workspace.json", j.dump(2) + "\n");
  }
}

void Workspace::refresh() {
  if (root_.empty()) return;
  std::lock_guard lock(mutex_);
  std::map<std::string, CatalogEntry> found;
  std::optional<geo::LocalFrame> first_origin;
  std::vector<fs::path> files;
  for (const auto& de : fs::directory_iterator(root_))
    if (de.is_regular_file() && de.path().extension() == ".utk") files.push_back(de.path());
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    const auto text = read_file(path);
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::parse_error&) {
      continue;  // not a container; load_layer reports it if referenced
    }
    CatalogEntry e;
    e.name = path.stem().string();
    e.path = path;
    e.content_hash = sha256_hex(text);
    e.physical = doc.value("type", "") == "physical";
    if (e.physical && doc.contains("payload") && doc["payload"].is_object())
      e.kind = doc["payload"].value("kind", "");
    if (!first_origin && doc.contains("crs_origin") && doc["crs_origin"].is_array() && doc["crs_origin"].size() == 2 &&
        doc["crs_origin"][0].is_number() && doc["crs_origin"][1].is_number())
      first_origin = geo::LocalFrame{doc["crs_origin"][0].get<double>(), doc["crs_origin"][1].get<double>()};
    found[e.name] = std::move(e);
  }
  entries_ = std::move(found);

  const auto ws_file = root_ / "workspace.json";
  std::error_code ec;
  if (fs::exists(ws_file, ec)) {
    try {
      const auto j = json::parse(read_file(ws_file));
      frame_ = geo::LocalFrame{j.at("origin").at(0).get<double>(), j.at("origin").at(1).get<double>()};
    } catch (const std::exception& e) {
      throw Error(ErrorCode::FormatError, std::string("workspace.json: ") + e.what());
    }
  } else if (!frame_) {
    frame_ = first_origin;
  }
}

std::vector<CatalogEntry> Workspace::entries() const {
  std::lock_guard lock(mutex_);
  std::vector<CatalogEntry> out;
  for (const auto& [_, e] : entries_) out.push_back(e);
  return out;
}

std::optional<CatalogEntry> Workspace::entry(std::string_view ref) const {
  std::lock_guard lock(mutex_);
  const auto it = entries_.find(grammar::layer_base_name(ref));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::optional<grammar::LayerInfo> Workspace::resolve(std::string_view ref) const {
  const auto e = entry(ref);
  if (!e) return std::nullopt;
  return grammar::LayerInfo{e->name, e->physical, e->kind};
}

std::shared_ptr<const Layer> Workspace::load(std::string_view ref, WarningLog* log) const {
  const auto e = entry(ref);
  if (!e) throw Error(ErrorCode::UnresolvedReference, "layer '" + std::string(ref) + "' is not in the workspace");
  const auto frame = this->frame();
  {
    std::lock_guard lock(mutex_);
    if (const auto it = loaded_.find(e->content_hash); it != loaded_.end()) return it->second;
  }
  std::string text;
  if (e->path.empty()) {
    std::lock_guard lock(mutex_);
    text = memory_text_.at(e->name);
  } else {
    text = read_file(e->path);
  }
  auto layer = decode(text, frame, log);
  const auto hash = sha256_hex(text);
  std::visit([&](auto& l) { l.content_hash = hash; }, layer);
  auto shared = std::make_shared<const Layer>(std::move(layer));
  std::lock_guard lock(mutex_);
  loaded_[hash] = shared;
  return shared;
}

std::shared_ptr<const PhysicalLayer> Workspace::physical(std::string_view ref, WarningLog* log) const {
  auto layer = load(ref, log);
  if (!std::holds_alternative<PhysicalLayer>(*layer))
    throw Error(ErrorCode::UnresolvedReference, "layer '" + std::string(ref) + "' is not a physical layer");
  return {layer, &std::get<PhysicalLayer>(*layer)};
}

std::shared_ptr<const ThematicLayer> Workspace::thematic(std::string_view ref, WarningLog* log) const {
  auto layer = load(ref, log);
  if (!std::holds_alternative<ThematicLayer>(*layer))
    throw Error(ErrorCode::UnresolvedReference, "layer '" + std::string(ref) + "' is not a thematic layer");
  return {layer, &std::get<ThematicLayer>(*layer)};
}

fs::path Workspace::save_text(const std::string& name, const std::string& text, bool physical, std::string kind,
                              const geo::LocalFrame& origin) {
  CatalogEntry e;
  e.name = name;
  e.physical = physical;
  e.kind = std::move(kind);
  e.content_hash = sha256_hex(text);
  if (!root_.empty()) {
    e.path = root_ / (name + ".utk");
    write_file_atomic(e.path, text);
  }
  std::lock_guard lock(mutex_);
  if (root_.empty()) memory_text_[name] = text;
  if (!frame_) {
    frame_ = origin;
    if (!root_.empty()) {
      const json j{{"origin", {origin.lat0, origin.lon0}}};
      write_file_atomic(root_ / "workspace.json", j.dump(2) + "\n");
    }
  }
  const auto path = e.path;
  entries_[name] = std::move(e);
  return path;
}

fs::path Workspace::save(const PhysicalLayer& layer) {
  return save_text(layer.name, encode(layer), true, std::string(to_string(layer.kind)), layer.crs_origin);
}

fs::path Workspace::save(const ThematicLayer& layer) {
  return save_text(layer.name, encode(layer), false, "", layer.crs_origin);
}

}  // namespace utk::layers
