#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fixtures.hpp"
#include "utk/scene.hpp"

using namespace utk;
using namespace utk::scene;
using nlohmann::json;

TEST_CASE("color domains and ramps") {
  grammar::ColorScaleDef seq;
  const std::vector<Scalar> vals{Scalar(2.0), Scalar(), Scalar(6.0), Scalar("x")};
  const auto d = color_domain(seq, vals);
  CHECK(d == std::array<double, 2>{2, 6});
  CHECK(color_domain(seq, std::vector<Scalar>{Scalar()}) == std::array<double, 2>{0, 1});
  seq.domain = std::array<double, 2>{-1, 1};
  CHECK(color_domain(seq, vals) == std::array<double, 2>{-1, 1});

  grammar::ColorScaleDef s;
  CHECK(color_of(s, d, Scalar(2.0)) == "#ffffcc");
  CHECK(color_of(s, d, Scalar(6.0)) == "#800026");
  CHECK(color_of(s, d, Scalar(100.0)) == "#800026");
  CHECK(color_of(s, d, Scalar()) == s.no_data_color);
  CHECK(color_of(s, d, Scalar("x")) == s.no_data_color);
  grammar::ColorScaleDef div;
  div.scheme = grammar::ColorScheme::diverging;
  CHECK(color_of(div, {-1, 1}, Scalar(0.0)) == "#f7f7f7");
}

TEST_CASE("categorical colors follow sorted distinct values") {
  engine::EvaluatedKnot k;
  k.color_scale.scheme = grammar::ColorScheme::categorical;
  k.coord_values = {Scalar("conc"), Scalar("brick"), Scalar(), Scalar("conc")};
  const auto c = knot_colors(k)["colors"];
  CHECK(c[0] == c[3]);
  CHECK(c[0] != c[1]);
  CHECK(c[2] == k.color_scale.no_data_color);
  std::swap(k.coord_values[0], k.coord_values[1]);
  const auto swapped = knot_colors(k)["colors"];
  CHECK(swapped[0] == c[1]);
  CHECK(swapped[1] == c[0]);
}

TEST_CASE("layer geometry buffers") {
  auto mesh = fixtures::empty_layer("b", layers::PhysicalKind::mesh3d);
  fixtures::add_box(mesh, 0, 0, 10, 10, 20);
  fixtures::add_box(mesh, 20, 0, 30, 10, 10);
  const auto g = layer_geometry(mesh);
  CHECK(g["kind"] == "mesh3d");
  CHECK(g["positions"].size() == 16 * 3);
  CHECK(g["object_offsets"] == json({0, 8, 16}));
  std::uint32_t max_index = 0;
  for (const auto& i : g["indices"]) max_index = std::max(max_index, i.get<std::uint32_t>());
  CHECK(max_index == 15);
  CHECK(g["indices"].size() == mesh.objects[0].indices.size() * 2);

  const auto poly = layer_geometry(fixtures::cell_grid("g", 2, 1, 5));
  CHECK(poly["rings"] == json({{4}, {4}}));
  CHECK_FALSE(poly.contains("indices"));
}

TEST_CASE("bundle holds spec, layers, knots and plots") {
  layers::Workspace ws;
  auto b = fixtures::empty_layer("buildings", layers::PhysicalKind::mesh3d);
  fixtures::add_box(b, 0, 0, 10, 10, 30);
  ws.save(b);
  std::vector<geo::Vec3> pts;
  std::vector<Scalar> vals;
  for (int i = 0; i <= 10; ++i)
    for (double z : {0.0, 30.0}) pts.push_back({double(i), 10, z}), vals.push_back(Scalar(i / 10.0));
  ws.save(fixtures::thematic("sh", pts, vals));
  const auto spec = grammar::canonicalize(grammar::parse_spec(R"({
    "grammar_version": "1.0",
    "cameras": [{"camera_id": "c", "position": [0, 0, 100], "direction": [0, 0, -1]}],
    "knots": [{"name": "k", "schemes": [{"in": {"layer": "sh"}, "out": {"layer": "buildings"}, "relation": "nearest", "level": "coordinates", "operation": "mean"}]}],
    "views": [{"map": {"camera_id": "c", "knots": [{"knot_id": "k", "interaction": "pick"}]},
               "plots": [{"chart_spec": {}, "knots": [{"knot_id": "k", "arrangement": "embedded_footprint"}],
                          "args": {"n_segments": 8, "slice_height": 30, "band_width": 4}},
                         {"chart_spec": {"mark": "bar"}, "knots": [{"knot_id": "k", "arrangement": "linked"}]}]}]
  })"));
  const auto knots = engine::Evaluator(ws).evaluate_all(spec);
  const auto bundle = build_scene(spec, knots, ws);
  CHECK(bundle["bundle_version"] == kBundleVersion);
  CHECK(grammar::parse_spec(bundle["spec"]) == spec);
  CHECK(bundle["layers"]["buildings"]["positions"].size() == 24);
  CHECK(bundle["knots"]["k"]["colors"]["colors"].size() == 8);
  REQUIRE(bundle["plots"].size() == 2);
  const auto& slices = bundle["plots"][0]["knots"][0]["slices"];
  REQUIRE(slices.size() == 1);
  CHECK(slices[0]["sectors"].size() == 8);
  CHECK(bundle["plots"][1]["knots"][0]["table"]["rows"].size() == 8);
  CHECK(plot_count(spec) == 2);
}
