#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "utk/error.hpp"
#include "utk/ingest.hpp"

using namespace utk;
using namespace utk::ingest;
using fixtures::kFrame;
using geo::Vec2;
using geo::Vec3;
using nlohmann::json;

namespace {

// Overpass extract with one closed way per footprint (local meters).
json osm_doc(const std::vector<std::pair<std::vector<Vec2>, json>>& ways) {
  json elements = json::array();
  std::int64_t node = 1;
  std::int64_t way = 1000;
  for (const auto& [pts, tags] : ways) {
    json refs = json::array();
    const auto first = node;
    for (const auto& p : pts) {
      const auto g = kFrame.unproject({p.x, p.y, 0});
      elements.push_back({{"type", "node"}, {"id", node}, {"lat", g.lat}, {"lon", g.lon}});
      refs.push_back(node++);
    }
    const bool closed = tags.contains("building") || tags.contains("leisure");
    if (closed) refs.push_back(first);
    elements.push_back({{"type", "way"}, {"id", way++}, {"nodes", refs}, {"tags", tags}});
  }
  return {{"elements", elements}};
}

std::vector<Vec2> square(double x0, double y0, double s) { return {{x0, y0}, {x0 + s, y0}, {x0 + s, y0 + s}, {x0, y0 + s}}; }

IngestConfig config_around(double half) {
  IngestConfig c;
  const auto lo = kFrame.unproject({-half, -half, 0});
  const auto hi = kFrame.unproject({half, half, 0});
  c.region.box = grammar::BoundingBox{lo.lat, lo.lon, hi.lat, hi.lon};
  return c;
}

double max_z(const layers::PhysicalObject& o) {
  double z = -1e300;
  for (const auto& p : o.local) z = std::max(z, p.z);
  return z;
}

// Each undirected edge of a closed, consistently oriented mesh appears once
// in each direction.
void check_closed(const std::vector<std::uint32_t>& idx, std::size_t vertices) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
  for (std::size_t t = 0; t < idx.size(); t += 3)
    for (int e = 0; e < 3; ++e) ++directed[{idx[t + e], idx[t + (e + 1) % 3]}];
  std::set<std::pair<std::uint32_t, std::uint32_t>> undirected;
  for (const auto& [edge, count] : directed) {
    CHECK(count == 1);
    CHECK(directed.count({edge.second, edge.first}) == 1);
    undirected.insert({std::min(edge.first, edge.second), std::max(edge.first, edge.second)});
  }
  const long v = static_cast<long>(vertices), e = static_cast<long>(undirected.size()),
             f = static_cast<long>(idx.size() / 3);
  CHECK(v - e + f == 2);
}

}  // namespace

TEST_CASE("building heights from tags") {
  const auto doc = osm_doc({{square(0, 0, 10), {{"building", "yes"}, {"height", "20"}}},
                            {square(20, 0, 10), {{"building", "yes"}, {"building:levels", "4"}}},
                            {square(40, 0, 10), {{"building", "yes"}}},
                            {square(60, 0, 10), {{"building", "yes"}, {"height", "12.5 m"}}}});
  auto cfg = config_around(200);
  cfg.features = {OsmFeature::buildings};
  const auto layers = ingest_osm(OsmExtract::parse(doc.dump()), cfg, kFrame);
  REQUIRE(layers.size() == 1);
  const auto& b = layers[0];
  CHECK(b.name == "buildings");
  CHECK(b.kind == layers::PhysicalKind::mesh3d);
  REQUIRE(b.objects.size() == 4);
  CHECK(max_z(b.objects[0]) == doctest::Approx(20));
  CHECK(max_z(b.objects[1]) == doctest::Approx(14));
  CHECK(max_z(b.objects[2]) == doctest::Approx(cfg.default_building_height));
  CHECK(max_z(b.objects[3]) == doctest::Approx(12.5));
  for (const auto& o : b.objects) check_closed(o.indices, o.local.size());
  layers::check_invariants(b);
}

TEST_CASE("features split into their layers and are clipped to the region") {
  const auto doc = osm_doc({{square(0, 0, 10), {{"building", "yes"}}},
                            {square(20, 20, 30), {{"leisure", "park"}}},
                            {{{-50, 5}, {50, 5}}, {{"highway", "residential"}}},
                            {square(5000, 5000, 10), {{"building", "yes"}}}});
  WarningLog log;
  const auto layers = ingest_osm(OsmExtract::parse(doc.dump()), config_around(100), kFrame, &log);
  std::map<std::string, const layers::PhysicalLayer*> by_name;
  for (const auto& l : layers) by_name[l.name] = &l;
  REQUIRE(by_name.count("buildings"));
  REQUIRE(by_name.count("parks"));
  REQUIRE(by_name.count("roads"));
  CHECK_FALSE(by_name.count("water"));
  CHECK(by_name["buildings"]->objects.size() == 1);
  CHECK(by_name["parks"]->kind == layers::PhysicalKind::polygons2d);
  const auto& road = by_name["roads"]->objects.at(0);
  double xmin = 1e9, xmax = -1e9;
  for (const auto& p : road.local) xmin = std::min(xmin, p.x), xmax = std::max(xmax, p.x);
  CHECK(xmin >= -50 - 1e-6);
  CHECK(xmax <= 50 + 1e-6);
}

TEST_CASE("empty regions and broken ways") {
  const auto far = osm_doc({{square(5000, 5000, 10), {{"building", "yes"}}}});
  try {
    ingest_osm(OsmExtract::parse(far.dump()), config_around(100), kFrame);
    FAIL("expected EmptyRegion");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyRegion);
  }
  json broken{{"elements", json::array({{{"type", "way"}, {"id", 1}, {"nodes", {1, 2, 3, 1}},
                                          {"tags", {{"building", "yes"}}}}})}};
  try {
    ingest_osm(OsmExtract::parse(broken.dump()), config_around(100), kFrame);
    FAIL("expected MalformedWay");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MalformedWay);
  }
  CHECK_THROWS_AS(OsmExtract::parse("{\"foo\": 1}"), Error);
}

TEST_CASE("ingest configuration rejects non-positive lengths") {
  IngestConfig c;
  c.grid_cell = 0;
  CHECK_THROWS_AS(c.check(), Error);
}

TEST_CASE("grid cell counts") {
  const double deg = 180.0 / (std::numbers::pi * geo::LocalFrame::kEarthRadius);
  const double lat = kFrame.lat0;
  const double lon_deg = deg / std::cos(lat * std::numbers::pi / 180.0);
  SUBCASE("100 m square at 10 m") {
    const grammar::BoundingBox box{lat, kFrame.lon0, lat + 100 * deg, kFrame.lon0 + 100 * lon_deg};
    const auto g = make_grid(box, 10, kFrame);
    CHECK(g.kind == layers::PhysicalKind::grid);
    CHECK(g.objects.size() == 100);
    layers::check_invariants(g);
  }
  SUBCASE("one square kilometre at 5 m") {
    const grammar::BoundingBox box{lat, kFrame.lon0, lat + 1000 * deg, kFrame.lon0 + 1000 * lon_deg};
    CHECK(make_grid(box, 5, kFrame).objects.size() == 40000);
    CHECK_THROWS_AS(make_grid(box, 5, kFrame, "g", 1000), Error);
  }
}

TEST_CASE("triangulation covers the polygon area") {
  SUBCASE("square with a hole") {
    geo::Polygon p{{{0, 0}, {10, 0}, {10, 10}, {0, 10}, {3, 3}, {3, 6}, {6, 6}, {6, 3}}, {4, 4}};
    const auto idx = triangulate(p);
    REQUIRE(idx.size() % 3 == 0);
    double area = 0;
    for (std::size_t t = 0; t < idx.size(); t += 3) {
      const auto a = p.points[idx[t]], b = p.points[idx[t + 1]], c = p.points[idx[t + 2]];
      const double s = 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
      CHECK(s > 0);
      area += s;
    }
    CHECK(area == doctest::Approx(91));
  }
  SUBCASE("random star-shaped polygons") {
    std::mt19937 rng(21);
    std::uniform_real_distribution<double> r(5, 20);
    for (int trial = 0; trial < 50; ++trial) {
      geo::Polygon p;
      const int n = 5 + trial % 20;
      for (int i = 0; i < n; ++i) {
        const double a = 2 * std::numbers::pi * i / n, rad = r(rng);
        p.points.push_back({rad * std::cos(a), rad * std::sin(a)});
      }
      p.ring_sizes = {static_cast<std::uint32_t>(n)};
      const auto idx = triangulate(p);
      CHECK(idx.size() == static_cast<std::size_t>(3 * (n - 2)));
      double area = 0;
      for (std::size_t t = 0; t < idx.size(); t += 3) {
        const auto a = p.points[idx[t]], b = p.points[idx[t + 1]], c = p.points[idx[t + 2]];
        area += 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
      }
      CHECK(area == doctest::Approx(p.area()).epsilon(1e-9));
    }
  }
}

TEST_CASE("simplify drops repeated and collinear vertices") {
  geo::Polygon p{{{0, 0}, {5, 0}, {10, 0}, {10, 0}, {10, 10}, {0, 10}}, {6}};
  const auto s = simplify_rings(p);
  CHECK(s.points.size() == 4);
  CHECK(s.area() == doctest::Approx(100));
}

TEST_CASE("extruded prisms are closed with outward faces") {
  geo::Polygon l_shape{{{0, 0}, {20, 0}, {20, 10}, {10, 10}, {10, 20}, {0, 20}}, {6}};
  const auto prism = extrude(l_shape, 2, 15);
  check_closed(prism.indices, prism.vertices.size());
  double volume = 0;
  for (std::size_t t = 0; t < prism.indices.size(); t += 3) {
    const auto a = prism.vertices[prism.indices[t]], b = prism.vertices[prism.indices[t + 1]],
               c = prism.vertices[prism.indices[t + 2]];
    volume += geo::dot(a, geo::cross(b, c)) / 6.0;
  }
  CHECK(volume == doctest::Approx(300 * 15));
}

TEST_CASE("surface sampling") {
  auto single = fixtures::empty_layer("t", layers::PhysicalKind::mesh3d);
  single.add_local({{0, 0, 0}, {4, 0, 0}, {0, 4, 0}}).indices = {0, 1, 2};
  SUBCASE("no subdivision keeps the three vertices") {
    const auto s = sample_surfaces(single, 100);
    CHECK(s.size() == 3);
    for (const auto& p : s) CHECK(p.normal.z == doctest::Approx(1));
  }
  SUBCASE("one subdivision level gives six") {
    CHECK(sample_surfaces(single, 4.5).size() == 6);
  }
  SUBCASE("vertices on a shared edge are welded") {
    auto quad = fixtures::empty_layer("q", layers::PhysicalKind::mesh3d);
    quad.add_local({{0, 0, 0}, {4, 0, 0}, {4, 4, 0}, {0, 0, 0}, {4, 4, 0}, {0, 4, 0}}).indices = {0, 1, 2, 3, 4, 5};
    CHECK(sample_surfaces(quad, 100).size() == 4);
  }
  SUBCASE("box samples carry outward normals") {
    auto box = fixtures::empty_layer("b", layers::PhysicalKind::mesh3d);
    fixtures::add_box(box, 0, 0, 10, 10, 10);
    const auto s = sample_surfaces(box, 2);
    REQUIRE_FALSE(s.empty());
    for (const auto& p : s) {
      const Vec3 c{5, 5, 5};
      CHECK(geo::dot(p.normal, p.position - c) > 0);
      CHECK(geo::norm(p.normal) == doctest::Approx(1));
    }
  }
}

TEST_CASE("GeoJSON features") {
  auto ring = [](double x0, double y0, double s) {
    json r = json::array();
    for (const auto& p : square(x0, y0, s)) {
      const auto g = kFrame.unproject({p.x, p.y, 0});
      r.push_back({g.lon, g.lat});
    }
    r.push_back(r[0]);
    return r;
  };
  json fc{{"type", "FeatureCollection"},
          {"features",
           {{{"type", "Feature"},
             {"properties", {{"name", "a"}, {"height", 30}}},
             {"geometry", {{"type", "Polygon"}, {"coordinates", {ring(0, 0, 10)}}}}},
            {{"type", "Feature"},
             {"properties", json::object()},
             {"geometry", {{"type", "MultiPolygon"}, {"coordinates", {{ring(20, 0, 5)}, {ring(40, 0, 5)}}}}}}}}};
  const auto polys = ingest_geojson(fc, "blocks", layers::PhysicalKind::polygons2d, kFrame);
  CHECK(polys.objects.size() >= 2);
  CHECK(polys.objects[0].attributes.at("name") == Scalar("a"));
  layers::check_invariants(polys);

  const auto mesh = ingest_geojson(fc, "blocks3d", layers::PhysicalKind::mesh3d, kFrame, nullptr, 8);
  CHECK(max_z(mesh.objects[0]) == doctest::Approx(30));
  CHECK(max_z(mesh.objects.back()) == doctest::Approx(8));

  json line{{"type", "Feature"},
            {"properties", json::object()},
            {"geometry", {{"type", "LineString"}, {"coordinates", {{-71.06, 42.36}, {-71.05, 42.36}}}}}};
  const auto lines = ingest_geojson(line, "l", layers::PhysicalKind::lines, kFrame);
  CHECK(lines.objects.size() == 1);

  json point{{"type", "Feature"}, {"properties", json::object()},
             {"geometry", {{"type", "Point"}, {"coordinates", {-71.06, 42.36}}}}};
  try {
    ingest_geojson(point, "p", layers::PhysicalKind::polygons2d, kFrame);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnsupportedGeometry);
  }
  try {
    ingest_geojson({{"type", "FeatureCollection"}, {"features", json::array()}}, "e",
                   layers::PhysicalKind::polygons2d, kFrame);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyCollection);
  }
}

TEST_CASE("CSV values: numbers, text, nulls and skipped rows") {
  const char* text =
      "lat,lon,value,h\n"
      "42.36,-71.06,3.5,10\n"
      "42.37,-71.05,brick,\n"
      "42.38,-71.04,,2\n"
      "42.39,-71.03,NaN,0\n"
      "bad,-71.02,1,0\n"
      "\"42.40\",\"-71.01\",\"7\",1\n";
  WarningLog log;
  CsvColumns cols;
  cols.height = "h";
  const auto t = ingest_csv_text(text, cols, "pts", &log);
  REQUIRE(t.points.size() == 5);
  CHECK(t.points[0].value == Scalar(3.5));
  CHECK(t.points[0].position.height == 10);
  CHECK(t.points[1].value == Scalar("brick"));
  CHECK(t.points[2].value.is_null());
  CHECK(t.points[3].value.is_null());
  CHECK(t.points[4].value == Scalar(7.0));
  CHECK(log.messages().size() >= 3);
  CHECK(t.crs_origin.lat0 == 42.36);

  cols.value = "noise";
  try {
    ingest_csv_text(text, cols, "pts");
    FAIL("expected MissingColumn");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingColumn);
  }
  CHECK_THROWS_AS(ingest_csv("/nonexistent.csv", {}, "x"), Error);
}
