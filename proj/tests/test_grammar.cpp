#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "utk/error.hpp"
#include "utk/grammar.hpp"

using namespace utk;
using namespace utk::grammar;

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::filesystem::path kSpecs = UTK_TEST_DATA "/specs";

const char* kMinimal = R"({
  "grammar_version": "1.0",
  "cameras": [{"camera_id": "c", "position": [0, 0, 100], "direction": [0, 3, -4]}],
  "knots": [
    {"name": "noise", "schemes": [{"in": {"layer": "noise_pts"}, "out": {"layer": "zip"}, "relation": "contains", "operation": "sum"}]}
  ],
  "views": [{"map": {"camera_id": "c", "knots": [{"knot_id": "noise", "interaction": "pick"}]}}]
})";

bool has_code(const std::vector<Diagnostic>& ds, const std::string& code) {
  for (const auto& d : ds)
    if (d.code == code) return true;
  return false;
}

class FakeCatalog : public LayerCatalog {
public:
  std::map<std::string, LayerInfo> layers;
  std::optional<LayerInfo> resolve(std::string_view ref) const override {
    const auto it = layers.find(layer_base_name(ref));
    if (it == layers.end()) return std::nullopt;
    return it->second;
  }
};

}  // namespace

TEST_CASE("empty object is a syntax error at the root") {
  try {
    parse_spec("{}");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SyntaxError);
    CHECK(e.path() == "/grammar_version");
  }
}

TEST_CASE("malformed JSON and unknown fields") {
  CHECK_THROWS_AS(parse_spec("{\"grammar_version\": "), Error);
  auto doc = nlohmann::json::parse(kMinimal);
  doc["knots"][0]["colour"] = "red";
  try {
    parse_spec(doc);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownField);
    CHECK(e.path() == "/knots/0/colour");
  }
  doc = nlohmann::json::parse(kMinimal);
  doc["cameras"][0]["position"] = "up";
  try {
    parse_spec(doc);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::WrongType);
    CHECK(e.path() == "/cameras/0/position");
  }
}

TEST_CASE("minimal spec validates and round-trips") {
  const auto spec = parse_spec(kMinimal);
  CHECK(validate_spec(spec).empty());
  const auto text = serialize(spec);
  CHECK(parse_spec(text) == spec);
  CHECK(serialize(parse_spec(text)) == text);
}

TEST_CASE("canonicalize normalizes cameras, fills levels, and is idempotent") {
  const auto c = canonicalize(parse_spec(kMinimal));
  const auto& d = c.cameras[0].direction;
  CHECK(d[0] == 0);
  CHECK(d[1] == doctest::Approx(0.6));
  CHECK(d[2] == doctest::Approx(-0.8));
  REQUIRE(c.knots[0].schemes[0].level);
  CHECK(*c.knots[0].schemes[0].level == default_level(Relation::contains));
  CHECK(canonicalize(c) == c);
  CHECK(serialize(canonicalize(c)) == serialize(c));
}

TEST_CASE("compact two-knot form becomes an operation knot") {
  auto doc = nlohmann::json::parse(kMinimal);
  doc["knots"].push_back(nlohmann::json::parse(
      R"({"name": "noise2", "schemes": [{"in": {"layer": "noise_pts"}, "out": {"layer": "zip"}, "relation": "contains", "operation": "sum"}]})"));
  doc["knots"].push_back(nlohmann::json::parse(
      R"({"name": "d", "schemes": [{"in": {"knot": "noise"}, "out": {"knot": "noise2"}, "relation": "nearest", "operation": "noise-noise2"}]})"));
  const auto spec = parse_spec(doc);
  const auto* k = spec.find_knot("d");
  REQUIRE(k);
  CHECK(k->schemes.empty());
  REQUIRE(k->operation);
  CHECK(k->operation->expression == "noise-noise2");
  REQUIRE(k->operation->inputs.size() == 2);
  CHECK(k->operation->inputs[0].knot == "noise");
  CHECK(k->operation->inputs[1].knot == "noise2");
  const auto ds = validate_spec(spec);
  CHECK_FALSE(has_errors(ds));
  CHECK(has_code(ds, "RedundantNearest"));
  CHECK(parse_spec(serialize(spec)) == spec);
}

TEST_CASE("two knots on one physical layer in one map are rejected") {
  auto doc = nlohmann::json::parse(kMinimal);
  doc["knots"].push_back(nlohmann::json::parse(
      R"({"name": "crime", "schemes": [{"in": {"layer": "crime_pts"}, "out": {"layer": "zip"}, "relation": "contains", "operation": "count"}]})"));
  doc["views"][0]["map"]["knots"].push_back({{"knot_id", "crime"}, {"interaction", "none"}});
  const auto ds = validate_spec(parse_spec(doc));
  REQUIRE(has_code(ds, "DuplicatePhysicalLayer"));
  for (const auto& d : ds)
    if (d.code == "DuplicatePhysicalLayer") CHECK(d.path == "/views/0/map/knots/1/knot_id");
}

TEST_CASE("structural diagnostics carry JSON pointers") {
  SUBCASE("1:n relation without aggregation") {
    auto doc = nlohmann::json::parse(kMinimal);
    doc["knots"][0]["schemes"][0].erase("operation");
    const auto ds = validate_spec(parse_spec(doc));
    REQUIRE(has_code(ds, "MissingAggregation"));
    CHECK(ds[0].path == "/knots/0/schemes/0");
  }
  SUBCASE("forward knot reference") {
    auto doc = nlohmann::json::parse(kMinimal);
    doc["knots"].insert(doc["knots"].begin(), nlohmann::json::parse(
        R"({"name": "early", "schemes": [{"in": {"knot": "noise"}, "out": {"layer": "zip"}, "relation": "direct"}]})"));
    CHECK(has_code(validate_spec(parse_spec(doc)), "CyclicDependency"));
  }
  SUBCASE("unknown camera and knot") {
    auto doc = nlohmann::json::parse(kMinimal);
    doc["views"][0]["map"]["camera_id"] = "nope";
    doc["views"][0]["map"]["knots"][0]["knot_id"] = "ghost";
    const auto ds = validate_spec(parse_spec(doc));
    CHECK(has_code(ds, "UnresolvedReference"));
  }
  SUBCASE("custom function inside a layer scheme") {
    auto doc = nlohmann::json::parse(kMinimal);
    doc["knots"][0]["schemes"][0]["operation"] = "x*2";
    CHECK(has_code(validate_spec(parse_spec(doc)), "UnsupportedOperation"));
  }
  SUBCASE("unknown identifier in an operation") {
    auto doc = nlohmann::json::parse(kMinimal);
    doc["knots"].push_back(nlohmann::json::parse(
        R"({"name": "twice", "operation": {"expression": "noise * k", "inputs": [{"knot": "noise"}]}})"));
    const auto ds = validate_spec(parse_spec(doc));
    REQUIRE(has_code(ds, "UnboundIdentifier"));
  }
  SUBCASE("unsupported grammar version") {
    auto doc = nlohmann::json::parse(kMinimal);
    doc["grammar_version"] = "9.9";
    CHECK(has_code(validate_spec(parse_spec(doc)), "UnsupportedVersion"));
  }
}

TEST_CASE("catalog checks: layer-reference rule and starting layer") {
  FakeCatalog cat;
  cat.layers["noise_pts"] = {"noise_pts", false, ""};
  cat.layers["zip"] = {"zip", true, "polygons2d"};
  cat.layers["buildings"] = {"buildings", true, "mesh3d"};
  CHECK_FALSE(has_errors(validate_spec(parse_spec(kMinimal), &cat)));

  auto doc = nlohmann::json::parse(kMinimal);
  doc["knots"][0]["schemes"][0]["out"] = {{"layer", "noise_pts"}};
  CHECK(has_code(validate_spec(parse_spec(doc), &cat), "LayerReferenceRule"));

  doc = nlohmann::json::parse(kMinimal);
  doc["knots"][0]["schemes"][0]["in"] = {{"layer", "buildings"}};
  CHECK(has_code(validate_spec(parse_spec(doc), &cat), "ChainBreak"));

  doc = nlohmann::json::parse(kMinimal);
  doc["knots"][0]["schemes"][0]["in"] = {{"layer", "missing"}};
  CHECK(has_code(validate_spec(parse_spec(doc), &cat), "UnresolvedReference"));
}

TEST_CASE("layer references accept paths and the .utk suffix") {
  CHECK(layer_base_name("ws/layers/zip.utk") == "zip");
  CHECK(layer_base_name("zip") == "zip");
}

TEST_CASE("golden specs parse, validate and round-trip") {
  for (const auto* name : {"example1_energy.json", "example2_preservation.json", "example3_signatures.json",
                           "example4_tripping.json"}) {
    CAPTURE(name);
    const auto text = read_file(kSpecs / name);
    const auto spec = parse_spec(text);
    CHECK_FALSE(has_errors(validate_spec(spec)));
    CHECK(parse_spec(serialize(spec)) == spec);
    const auto canon = canonicalize(spec);
    CHECK(parse_spec(serialize(canon)) == canon);
  }
}

TEST_CASE("enum spellings round-trip") {
  for (auto r : {Relation::nearest, Relation::contains, Relation::within, Relation::intersects, Relation::direct,
                 Relation::inner_aggregate})
    CHECK(relation_from_string(to_string(r)) == r);
  for (auto a : {Aggregation::min, Aggregation::max, Aggregation::sum, Aggregation::mean, Aggregation::count})
    CHECK(aggregation_from_string(to_string(a)) == a);
  CHECK(level_from_string("objects") == Level::objects);
  CHECK_FALSE(level_from_string("pixels"));
}
