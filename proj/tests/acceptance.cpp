// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "fixtures.hpp"
#include "utk/engine.hpp"
#include "utk/error.hpp"
#include "utk/grammar.hpp"
#include "utk/service.hpp"
#include "utk/shadow.hpp"

using namespace utk;
using engine::Aggregation;
using engine::Evaluator;
using engine::Level;
using engine::Relation;
using geo::Vec2;
using geo::Vec3;
using grammar::IntegrationSchemeDef;
using grammar::KnotDef;
using grammar::Ref;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Check {
  bool ok = true;
  std::ostringstream note;
  void expect(bool cond, const std::string& what) {
    if (!cond && ok) note << what << "; ";
    ok = ok && cond;
  }
};

int failures = 0;

void criterion(int id, const std::string& title, double budget_s, const std::function<void(Check&)>& body) {
  Check c;
  const auto t0 = Clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.ok = false;
    c.note << "exception: " << e.what();
  }
  const double elapsed = seconds_since(t0);
  c.expect(elapsed < budget_s, "over the " + std::to_string(budget_s) + " s budget");
  std::printf("%s %d %s (%.2fs)%s%s\n", c.ok ? "PASS" : "FAIL", id, title.c_str(), elapsed,
              c.note.str().empty() ? "" : " ", c.note.str().c_str());
  std::fflush(stdout);
  failures += !c.ok;
}

const std::vector<Aggregation> kAggregations{Aggregation::sum, Aggregation::mean, Aggregation::min, Aggregation::max,
                                             Aggregation::count};

Ref layer(const std::string& n) { return {Ref::Kind::layer, n}; }
Ref knot(const std::string& n) { return {Ref::Kind::knot, n}; }

KnotDef join_knot(const std::string& name, Ref in, Ref out, Relation rel, std::optional<Aggregation> agg) {
  KnotDef k;
  k.name = name;
  k.schemes.push_back(IntegrationSchemeDef{std::move(in), std::move(out), rel, Level::objects, agg, std::nullopt});
  return k;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Independent convex-region oracle: half-plane tests, no shared predicates.

struct Convex {
  std::vector<Vec2> v;  // one ring, either winding
  geo::Box2 box;
  double sign = 1;
};

Convex convex_of(const geo::Shape& s) {
  Convex c;
  c.v.assign(s.region.points.begin(), s.region.points.end());
  double a = 0;
  for (std::size_t i = 0; i < c.v.size(); ++i) {
    const auto& p = c.v[i];
    const auto& q = c.v[(i + 1) % c.v.size()];
    a += p.x * q.y - q.x * p.y;
  }
  c.sign = a >= 0 ? 1 : -1;
  c.box = s.bounds();
  return c;
}

bool inside(const Convex& c, Vec2 p) {
  if (p.x < c.box.min_x || p.x > c.box.max_x || p.y < c.box.min_y || p.y > c.box.max_y) return false;
  for (std::size_t i = 0; i < c.v.size(); ++i) {
    const auto& a = c.v[i];
    const auto& b = c.v[(i + 1) % c.v.size()];
    if (c.sign * ((b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)) < 0) return false;
  }
  return true;
}

double distance(const Convex& c, Vec2 p) {
  if (inside(c, p)) return 0;
  double best = 1e300;
  for (std::size_t i = 0; i < c.v.size(); ++i) {
    const auto& a = c.v[i];
    const auto& b = c.v[(i + 1) % c.v.size()];
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
    best = std::min(best, std::hypot(p.x - a.x - t * dx, p.y - a.y - t * dy));
  }
  return best;
}

using Entries = std::vector<std::vector<std::uint32_t>>;

Entries oracle_points(Relation rel, const std::vector<Convex>& out, const std::vector<Vec2>& pts) {
  Entries e(out.size());
  if (rel == Relation::nearest) {
    for (std::uint32_t j = 0; j < pts.size(); ++j) {
      std::uint32_t best = 0;
      double d = distance(out[0], pts[j]);
      for (std::uint32_t i = 1; i < out.size() && d > 0; ++i) {
        const double di = distance(out[i], pts[j]);
        if (di < d) best = i, d = di;
      }
      e[best].push_back(j);
    }
    return e;
  }
  // contains and intersects agree for point inputs under closed semantics.
  for (std::uint32_t i = 0; i < out.size(); ++i)
    for (std::uint32_t j = 0; j < pts.size(); ++j)
      if (inside(out[i], pts[j])) e[i].push_back(j);
  return e;
}

// Output region i lies within input region j: every vertex of i is in j.
Entries oracle_within(const std::vector<Convex>& out, const std::vector<Convex>& in) {
  Entries e(out.size());
  for (std::uint32_t i = 0; i < out.size(); ++i)
    for (std::uint32_t j = 0; j < in.size(); ++j)
      if (std::all_of(out[i].v.begin(), out[i].v.end(), [&](Vec2 p) { return inside(in[j], p); }))
        e[i].push_back(j);
  return e;
}

std::vector<Vec3> random_convex(std::mt19937& rng, double rmin, double rmax, double extent) {
  std::uniform_real_distribution<double> u(0, extent), r(rmin, rmax), a(0, 2 * std::numbers::pi);
  const Vec2 c{u(rng), u(rng)};
  const double radius = r(rng);
  std::vector<Vec2> pts;
  for (int k = 0; k < 12; ++k) {
    const double t = a(rng);
    pts.push_back({c.x + radius * std::cos(t), c.y + radius * std::sin(t)});
  }
  std::vector<Vec3> ring;
  for (const auto& p : geo::convex_hull(pts)) ring.push_back({p.x, p.y, 0});
  return ring;
}

struct Instance {
  layers::Workspace ws;
  std::vector<Scalar> values;
};

void random_instance(Instance& inst, unsigned seed, std::size_t max_points, std::size_t max_polygons,
                     double extent = 1000) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<std::size_t> np(1, max_points), npoly(1, max_polygons), nreg(1, 12);
  std::uniform_real_distribution<double> u(-50, extent + 50), v(-100, 100);
  auto parcels = fixtures::empty_layer("parcels", layers::PhysicalKind::polygons2d);
  const auto n_poly = npoly(rng);
  for (std::size_t i = 0; i < n_poly; ++i) fixtures::add_region(parcels, random_convex(rng, 10, 150, extent));
  auto regions = fixtures::empty_layer("regions", layers::PhysicalKind::polygons2d);
  const auto n_reg = nreg(rng);
  for (std::size_t i = 0; i < n_reg; ++i) fixtures::add_region(regions, random_convex(rng, 150, 450, extent));
  std::vector<Vec3> pts;
  inst.values.clear();
  const auto n = np(rng);
  for (std::size_t i = 0; i < n; ++i) {
    pts.push_back({u(rng), u(rng), 0});
    inst.values.push_back(i % 11 == 3 ? Scalar() : Scalar(std::round(v(rng) * 1000) / 1000));
  }
  inst.ws.save(parcels);
  inst.ws.save(regions);
  inst.ws.save(fixtures::thematic("pts", pts, inst.values));
}

std::vector<Vec2> point_positions(const layers::Workspace& ws, const std::string& name) {
  std::vector<Vec2> out;
  for (const auto& p : ws.thematic(name)->positions(ws.frame())) out.push_back(p.xy());
  return out;
}

std::vector<Convex> regions_of(const layers::Workspace& ws, const std::string& name) {
  std::vector<Convex> out;
  for (const auto& s : engine::element_shapes(*ws.physical(name), Level::objects)) out.push_back(convex_of(s));
  return out;
}

bool same(const std::vector<Scalar>& a, const std::vector<Scalar>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(a[i] == b[i])) return false;
  return true;
}

// 1: the four example specifications.
void grammar_examples(Check& c) {
  const fs::path dir = fs::path(UTK_TEST_DATA) / "specs";
  int n = 0;
  for (const auto* file : {"example1_energy.json", "example2_preservation.json", "example3_signatures.json",
                           "example4_tripping.json"}) {
    const auto text = read_file(dir / file);
    const auto spec = grammar::parse_spec(text);
    const auto diagnostics = grammar::validate_spec(grammar::canonicalize(spec));
    c.expect(!grammar::has_errors(diagnostics), std::string(file) + " has validation errors");
    c.expect(grammar::parse_spec(grammar::serialize(spec)) == spec, std::string(file) + " does not round-trip");
    if (std::string(file) == "example3_signatures.json")
      c.expect(std::count(text.begin(), text.end(), '\n') < 200, "example 3 is 200 lines or more");
    ++n;
  }
  c.expect(n == 4, "missing examples");
}

// 2: random instances against the oracle.
void join_oracle(Check& c) {
  std::size_t compared = 0, within_pairs = 0;
  for (unsigned inst_id = 0; inst_id < 100; ++inst_id) {
    Instance inst;
    random_instance(inst, 1000 + inst_id, 2000, 100);
    const auto pts = point_positions(inst.ws, "pts");
    const auto parcels = regions_of(inst.ws, "parcels");
    const auto regions = regions_of(inst.ws, "regions");
    const Evaluator ev(inst.ws);
    const std::string tag = "instance " + std::to_string(inst_id) + " ";

    for (auto rel : {Relation::contains, Relation::intersects, Relation::nearest}) {
      const auto entries = oracle_points(rel, parcels, pts);
      for (auto agg : kAggregations) {
        const auto k = ev.evaluate(join_knot("k", layer("pts"), layer("parcels"), rel, agg), {});
        const auto expected = fixtures::brute_aggregate(entries, inst.values, agg);
        c.expect(k.object_values && same(*k.object_values, expected),
                 tag + std::string(grammar::to_string(rel)) + "/" + std::string(grammar::to_string(agg)));
        ++compared;
      }
    }

    // within: parcels lying inside a region take the region's point sum.
    std::map<std::string, engine::EvaluatedKnot> done;
    done["reg"] = ev.evaluate(join_knot("reg", layer("pts"), layer("regions"), Relation::contains, Aggregation::sum), {});
    const auto reg_values = fixtures::brute_aggregate(oracle_points(Relation::contains, regions, pts), inst.values,
                                                      Aggregation::sum);
    c.expect(same(*done["reg"].object_values, reg_values), tag + "regions");
    const auto within = oracle_within(parcels, regions);
    for (const auto& e : within) within_pairs += e.size();
    for (auto agg : kAggregations) {
      const auto k = ev.evaluate(join_knot("w", knot("reg"), layer("parcels"), Relation::within, agg), done);
      const auto expected = fixtures::brute_aggregate(within, reg_values, agg);
      c.expect(k.object_values && same(*k.object_values, expected),
               tag + "within/" + std::string(grammar::to_string(agg)));
      ++compared;
    }
  }
  c.note << compared << " knots compared, " << within_pairs << " within pairs";
  c.expect(compared == 2000, "wrong knot count");
}

// 3: operation knots.
void operations(Check& c) {
  layers::Workspace ws;
  ws.save(fixtures::cell_grid("cells", 100, 100, 10));
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> v(-1e6, 1e6);
  std::vector<Vec3> pts;
  std::vector<Scalar> vals;
  for (int j = 0; j < 100; ++j)
    for (int i = 0; i < 100; ++i) pts.push_back({i * 10 + 5.0, j * 10 + 5.0, 0}), vals.push_back(Scalar(v(rng)));
  ws.save(fixtures::thematic("vals", pts, vals));
  const auto spec = grammar::canonicalize(grammar::parse_spec(R"({
    "grammar_version": "1.0",
    "knots": [
      {"name": "a", "schemes": [{"in": {"layer": "vals"}, "out": {"layer": "cells"}, "relation": "contains", "operation": "sum"}]},
      {"name": "d", "operation": {"expression": "a - a", "inputs": ["a"]}}
    ],
    "cameras": [{"camera_id": "c", "position": [500, -500, 800], "direction": [0, 0.6, -0.8]}],
    "views": [{"map": {"camera_id": "c", "knots": [{"knot_id": "d"}]}}]
  })"));
  const auto knots = Evaluator(ws).evaluate_all(spec);
  const auto& d = knots.at("d");
  const auto& values = d.object_values ? *d.object_values : d.coord_values;
  c.expect(values.size() == 10000, "self-difference has " + std::to_string(values.size()) + " elements");
  c.expect(std::all_of(values.begin(), values.end(), [](const Scalar& s) { return s == Scalar(0.0); }),
           "self-difference is not identically zero");

  // Six sidewalks: material and mean shadow decide the classification.
  layers::Workspace w4;
  auto sidewalks = fixtures::empty_layer("sidewalks", layers::PhysicalKind::lines);
  const std::vector<std::string> mats{"brick", "conc", "asphalt", "brick", "conc", "asphalt"};
  const std::vector<double> shade{0.8, 0.3, 0.9, 0.6, 0.7, 0.2};
  const std::vector<double> expected{0, 1, 1, 0, 0, 1};
  std::vector<Vec3> shadow_pts, mat_pts;
  std::vector<Scalar> shadow_vals, mat_vals;
  for (int i = 0; i < 6; ++i) {
    const double x = i * 50.0;
    fixtures::add_line(sidewalks, {{x, 0, 0}, {x + 30, 0, 0}});
    for (int k = 0; k < 3; ++k)
      shadow_pts.push_back({x + 5 + 10 * k, 1, 0}), shadow_vals.push_back(Scalar(shade[i] + 0.1 * (k - 1)));
    mat_pts.push_back({x + 15, -1, 0}), mat_vals.push_back(Scalar(mats[i]));
  }
  w4.save(sidewalks);
  w4.save(fixtures::thematic("shadow_dec", shadow_pts, shadow_vals));
  w4.save(fixtures::thematic("sidewalk_material", mat_pts, mat_vals));
  const auto s4 = grammar::canonicalize(
      grammar::parse_spec(read_file(fs::path(UTK_TEST_DATA) / "specs" / "example4_tripping.json")));
  const auto k4 = Evaluator(w4).evaluate_all(s4);
  const auto& danger = k4.at("danger");
  c.expect(danger.object_values.has_value(), "classification is not per sidewalk");
  if (danger.object_values) {
    std::vector<Scalar> want;
    for (double e : expected) want.push_back(Scalar(e));
    c.expect(same(*danger.object_values, want), "sidewalk classification differs");
  }
}

std::vector<shadow::Triangle> box_triangles(double x0, double y0, double x1, double y1, double h) {
  auto l = fixtures::empty_layer("b", layers::PhysicalKind::mesh3d);
  fixtures::add_box(l, x0, y0, x1, y1, h);
  const layers::PhysicalLayer* p = &l;
  return shadow::scene_triangles(std::span<const layers::PhysicalLayer* const>(&p, 1));
}

std::vector<double> fractions(const layers::ThematicLayer& t) {
  std::vector<double> out;
  for (const auto& p : t.points) out.push_back(p.value.is_null() ? -1 : p.value.number());
  return out;
}

// 4: analytic box shadow and occluder monotonicity.
void box_shadow(Check& c) {
  // 10 x 10 x 20 box, sun due south at 45 degrees: the shadow is the strip
  // 0 < x < 10, 0 < y < 30.
  shadow::SunPath sun;
  sun.step = std::chrono::seconds(600);
  sun.instants.push_back({shadow::TimePoint(std::chrono::seconds(1'600'000'000)), {180, 45}});
  const shadow::Bvh scene(box_triangles(0, 0, 10, 10, 20));
  const auto samples = shadow::ground_samples({-20, -20, 30, 50}, 1.0);
  const auto f = fractions(shadow::accumulate_shadow(samples, &scene, sun, {}));
  std::size_t wrong = 0, checked = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto p = samples[i].position;
    const bool in = p.x > 0 && p.x < 10 && p.y > 0 && p.y < 30;
    const bool out = p.x < -1 || p.x > 11 || p.y < -1 || p.y > 31;
    if (in || out) ++checked, wrong += f[i] != (in ? 1.0 : 0.0);
  }
  c.expect(wrong == 0, std::to_string(wrong) + " of " + std::to_string(checked) + " cells disagree");
  c.note << checked << " cells checked";

  const auto t0 = shadow::parse_iso_time("2021-12-21T14:00Z");
  const auto path = shadow::make_sun_path(42.36, -71.06, t0, t0 + std::chrono::hours(7), std::chrono::minutes(15));
  const auto grid = shadow::ground_samples({-40, -40, 80, 80}, 1.0);
  auto tris = box_triangles(0, 0, 10, 10, 20);
  const auto base = fractions(shadow::accumulate_shadow(grid, std::make_unique<shadow::Bvh>(tris).get(), path, {}));
  const auto extra = box_triangles(25, 5, 35, 15, 12);
  tris.insert(tris.end(), extra.begin(), extra.end());
  const auto more = fractions(shadow::accumulate_shadow(grid, std::make_unique<shadow::Bvh>(tris).get(), path, {}));
  std::size_t lowered = 0;
  for (std::size_t i = 0; i < base.size(); ++i) lowered += more[i] < base[i];
  c.expect(lowered == 0, std::to_string(lowered) + " fractions dropped after adding an occluder");
}

// 5: ephemeris.
struct SpaRow {
  const char* site;
  double lat, lon;
  const char* time;
  double azimuth, elevation;
};

const SpaRow kSpa[] = {
#include "data/spa_reference.txt"
};

double angle_diff(double a, double b) {
  const double d = std::fmod(std::abs(a - b), 360.0);
  return d > 180 ? 360 - d : d;
}

void ephemeris(Check& c) {
  double worst = 0;
  for (const auto& r : kSpa) {
    const auto s = shadow::sun_position(r.lat, r.lon, shadow::parse_iso_time(r.time));
    worst = std::max({worst, angle_diff(s.azimuth, r.azimuth), std::abs(s.elevation - r.elevation)});
  }
  c.note << std::size(kSpa) << " fixtures, worst " << worst << " deg";
  c.expect(worst <= 0.5, "error above 0.5 deg");
}

// 6: scale.
void scale(Check& c) {
  layers::Workspace ws;
  auto polys = fixtures::empty_layer("polys", layers::PhysicalKind::polygons2d);
  std::mt19937 rng(77);
  for (int i = 0; i < 1000; ++i) fixtures::add_region(polys, random_convex(rng, 20, 120, 5000));
  std::uniform_real_distribution<double> u(0, 5000), v(0, 10);
  std::vector<Vec3> pts;
  std::vector<Scalar> vals;
  for (int i = 0; i < 100000; ++i) pts.push_back({u(rng), u(rng), 0}), vals.push_back(Scalar(std::round(v(rng) * 100) / 100));
  ws.save(polys);
  ws.save(fixtures::thematic("pts", pts, vals));

  engine::EngineOptions opts;
  opts.use_cache = false;
  const Evaluator ev(ws, opts);
  const auto def = join_knot("k", layer("pts"), layer("polys"), Relation::contains, Aggregation::sum);
  const auto t0 = Clock::now();
  const auto k = ev.evaluate(def, {});
  const double join_s = seconds_since(t0);
  c.note << "join " << join_s << "s";
  c.expect(join_s < 2.0, "join took 2 s or more");
  const auto expected = fixtures::brute_aggregate(
      oracle_points(Relation::contains, regions_of(ws, "polys"), point_positions(ws, "pts")), vals, Aggregation::sum);
  c.expect(k.object_values && same(*k.object_values, expected), "join differs from the oracle");

  std::uniform_real_distribution<double> w(0, 2000), small(-4, 4), dir(-1, 1);
  std::vector<shadow::Triangle> tris;
  for (int i = 0; i < 100000; ++i) {
    const Vec3 p{w(rng), w(rng), w(rng) / 20};
    tris.push_back({{p, p + Vec3{small(rng), small(rng), small(rng)}, p + Vec3{small(rng), small(rng), small(rng)}}});
  }
  std::vector<std::pair<Vec3, Vec3>> rays;
  for (int i = 0; i < 10000; ++i)
    rays.push_back({{w(rng), w(rng), -1}, geo::normalized({dir(rng), dir(rng), std::abs(dir(rng)) + 0.05})});
  const auto t1 = Clock::now();
  const shadow::Bvh bvh(tris);
  std::vector<char> got(rays.size());
  for (std::size_t i = 0; i < rays.size(); ++i) got[i] = bvh.any_hit(rays[i].first, rays[i].second);
  const double bvh_s = seconds_since(t1);
  c.note << ", bvh build+query " << bvh_s << "s";
  c.expect(bvh_s < 1.0, "BVH took 1 s or more");

  std::vector<char> want(rays.size());
  const unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < rays.size(); i += threads)
        want[i] = shadow::linear_any_hit(tris, rays[i].first, rays[i].second);
    });
  for (auto& t : pool) t.join();
  c.expect(got == want, "BVH differs from the linear scan");
  c.note << ", " << std::count(want.begin(), want.end(), 1) << " hits";
}

// 7: live service against the batch CLI.
json service_spec() {
  return json::parse(R"SPEC({
    "grammar_version": "1.0",
    "cameras": [{"camera_id": "c", "position": [0, -100, 80], "direction": [0, 0.8, -0.6]}],
    "knots": [
      {"name": "noise", "schemes": [{"in": {"layer": "noise"}, "out": {"layer": "zip"}, "relation": "contains", "operation": "sum"}]},
      {"name": "crime", "schemes": [{"in": {"layer": "crime"}, "out": {"layer": "zip"}, "relation": "contains", "operation": "count"}]},
      {"name": "ratio", "operation": {"expression": "noise / (crime + 1)", "inputs": ["noise", "crime"]}},
      {"name": "near", "schemes": [{"in": {"layer": "noise"}, "out": {"layer": "zip"}, "relation": "nearest", "level": "coordinates", "operation": "mean"}]}
    ],
    "views": [{"map": {"camera_id": "c", "knots": [{"knot_id": "ratio", "interaction": "brush"}]}}]
  })SPEC");
}

void live_service(Check& c) {
  fixtures::TempDir dir("acceptance");
  const auto ws_dir = dir.path() / "ws";
  {
    fs::create_directories(ws_dir);
    layers::Workspace ws(ws_dir);
    ws.save(fixtures::cell_grid("zip", 5, 5, 20));
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> u(0, 100), v(0, 80);
    for (const char* name : {"noise", "crime"}) {
      std::vector<Vec3> pts;
      std::vector<Scalar> vals;
      for (int i = 0; i < 500; ++i) pts.push_back({u(rng), u(rng), 0}), vals.push_back(Scalar(v(rng)));
      ws.save(fixtures::thematic(name, pts, vals));
    }
  }
  const auto spec_path = dir.path() / "spec.json";
  std::ofstream(spec_path) << service_spec().dump(2);
  const auto out = dir.path() / "out";
  const std::string cmd = std::string("\"") + UTK_BINARY + "\" eval --spec \"" + spec_path.string() + "\" --out \"" +
                          out.string() + "\" --workspace \"" + ws_dir.string() + "\" > /dev/null";
  c.expect(std::system(cmd.c_str()) == 0, "CLI eval failed");

  layers::Workspace ws(ws_dir);
  app::Service svc(ws);
  c.expect(svc.load(service_spec().dump()).status == 200, "service rejected the spec");
  app::HttpServer server(svc);
  const int port = server.bind("127.0.0.1", 0);
  std::thread t([&] { server.listen(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);
  for (const auto* name : {"noise", "crime", "ratio", "near"}) {
    const auto res = client.Get(std::string("/api/knots/") + name + "/data");
    c.expect(res && res->status == 200, std::string(name) + " not served");
    if (res) c.expect(res->body == read_file(out / "knots" / (std::string(name) + ".json")),
                      std::string(name) + " differs from the CLI export");
  }

  auto s = service_spec();
  s["cameras"][0]["position"] = {50, -300, 200};
  auto put = client.Put("/api/spec", {{"If-Match", "\"1\""}}, s.dump(), "application/json");
  c.expect(put && put->status == 200, "camera edit rejected");
  if (put) c.expect(json::parse(put->body)["reevaluated"].empty(), "camera edit re-evaluated knots");

  s["knots"][1]["schemes"][0]["operation"] = "max";
  put = client.Put("/api/spec", {{"If-Match", "\"2\""}}, s.dump(), "application/json");
  c.expect(put && put->status == 200, "aggregation edit rejected");
  if (put) {
    const auto r = json::parse(put->body)["reevaluated"];
    c.expect(std::set<std::string>(r.begin(), r.end()) == std::set<std::string>{"crime", "ratio"},
             "aggregation edit re-evaluated " + r.dump());
  }
  server.stop();
  t.join();
}

}  // namespace

int main() {
  criterion(1, "example specifications parse, validate and round-trip", 1.0, grammar_examples);
  criterion(2, "contains/within/intersects/nearest match the brute-force oracle", 30.0, join_oracle);
  criterion(3, "operation knots: self-difference and sidewalk classification", 1.0, operations);
  criterion(4, "analytic box shadow and occluder monotonicity", 10.0, box_shadow);
  criterion(5, "solar position within 0.5 degrees of reference", 1.0, ephemeris);
  criterion(6, "join and BVH scale", 60.0, scale);
  criterion(7, "live service matches batch export and re-evaluates minimally", 30.0, live_service);
  return failures == 0 ? 0 : 1;
}
