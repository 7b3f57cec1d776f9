// utk: command-line front end for validation, ingestion, shadow jobs,
// evaluation, scene export and the live-authoring server.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "utk/engine.hpp"
#include "utk/grammar.hpp"
#include "utk/ingest.hpp"
#include "utk/layers.hpp"
#include "utk/scene.hpp"
#include "utk/service.hpp"
#include "utk/shadow.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace utk;

namespace {

constexpr int kOk = 0;
constexpr int kDiagnostics = 1;
constexpr int kIoFailure = 2;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw Error(ErrorCode::IoError, "cannot write " + path.string());
}

void print_warnings(const WarningLog& log) {
  for (const auto& m : log.messages()) std::cerr << "warning: " << m << "\n";
}

void print_diagnostics(const std::vector<grammar::Diagnostic>& diagnostics) {
  for (const auto& d : diagnostics)
    std::cerr << (d.severity == grammar::Severity::error ? "error" : "warning") << " [" << d.code << "] "
              << (d.path.empty() ? "/" : d.path) << ": " << d.message << "\n";
}

grammar::BoundingBox parse_bbox(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      v.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw Error(ErrorCode::SyntaxError, "bounding box needs lat_min,lon_min,lat_max,lon_max: '" + text + "'");
    }
  }
  if (v.size() != 4 || v[0] >= v[2] || v[1] >= v[3])
    throw Error(ErrorCode::SyntaxError, "bounding box needs lat_min,lon_min,lat_max,lon_max: '" + text + "'");
  return {v[0], v[1], v[2], v[3]};
}

std::vector<geo::Geodetic> parse_polygon(const std::string& text) {
  std::vector<geo::Geodetic> out;
  std::stringstream ss(text);
  std::string pair;
  while (std::getline(ss, pair, ';')) {
    const auto comma = pair.find(',');
    if (comma == std::string::npos) throw Error(ErrorCode::SyntaxError, "polygon vertices are 'lat,lon;lat,lon;...'");
    out.push_back({std::stod(pair.substr(0, comma)), std::stod(pair.substr(comma + 1)), 0});
  }
  if (out.size() < 3) throw Error(ErrorCode::SyntaxError, "a region polygon needs at least 3 vertices");
  return out;
}

geo::LocalFrame box_center(const grammar::BoundingBox& b) {
  return {(b.lat_min + b.lat_max) / 2, (b.lon_min + b.lon_max) / 2};
}

// First [lon, lat] position anywhere in a GeoJSON document.
std::optional<geo::LocalFrame> first_position(const json& j) {
  if (j.is_array() && j.size() >= 2 && j[0].is_number() && j[1].is_number())
    return geo::LocalFrame{j[1].get<double>(), j[0].get<double>()};
  if (j.is_array() || j.is_object())
    for (const auto& child : j) {
      if (auto p = first_position(child)) return p;
    }
  return std::nullopt;
}

layers::Workspace open_workspace(const std::string& dir, bool create) {
  if (dir.empty()) throw Error(ErrorCode::IoError, "no workspace given (use --workspace or UTK_WORKSPACE)");
  if (create) fs::create_directories(dir);
  return layers::Workspace(dir);
}

std::string default_workspace() {
  const char* env = std::getenv("UTK_WORKSPACE");
  return env ? env : "";
}

// Diagnostics were already printed; exit with kDiagnostics.
struct Rejected {};

grammar::Specification load_valid_spec(const std::string& path, const layers::Workspace* ws) {
  const auto text = read_text(path);
  auto spec = grammar::canonicalize(grammar::parse_spec(text));
  const auto diagnostics = grammar::validate_spec(spec, ws);
  print_diagnostics(diagnostics);
  if (grammar::has_errors(diagnostics)) throw Rejected{};
  return spec;
}

std::string overpass_query(const grammar::BoundingBox& b) {
  std::ostringstream bbox;
  bbox.precision(10);
  bbox << b.lat_min << ',' << b.lon_min << ',' << b.lat_max << ',' << b.lon_max;
  const auto box = "(" + bbox.str() + ")";
  return "[out:json][timeout:120];(way[\"building\"]" + box + ";relation[\"building\"]" + box +
         ";way[\"leisure\"=\"park\"]" + box + ";way[\"natural\"=\"water\"]" + box + ";relation[\"natural\"=\"water\"]" +
         box + ";way[\"highway\"]" + box + ";);(._;>;);out body;";
}

std::string fetch_overpass(const grammar::BoundingBox& b) {
  httplib::Client client("http://overpass-api.de");
  client.set_read_timeout(180, 0);
  const auto res = client.Post("/api/interpreter", httplib::Params{{"data", overpass_query(b)}});
  if (!res || res->status != 200)
    throw Error(ErrorCode::IoError, "Overpass query failed" + (res ? " with HTTP " + std::to_string(res->status) : ""));
  return res->body;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Urban visual analytics toolkit"};
  app.require_subcommand(1);

  // validate
  auto* validate = app.add_subcommand("validate", "Check a specification");
  std::string validate_spec_path, validate_ws;
  validate->add_option("spec", validate_spec_path, "Specification file")->required();
  validate->add_option("--workspace", validate_ws, "Also check layer references against this workspace");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Create layers from external data");
  ingest->require_subcommand(1);
  std::string ws_dir = default_workspace();

  auto* osm = ingest->add_subcommand("osm", "Overpass JSON extract to buildings/parks/water/roads layers");
  std::string osm_input, osm_bbox, osm_polygon, osm_address, osm_geocoder;
  std::vector<std::string> osm_features;
  ingest::IngestConfig osm_config;
  bool osm_fetch = false;
  osm->add_option("--input", osm_input, "Overpass JSON file");
  osm->add_flag("--fetch", osm_fetch, "Query the Overpass API for the bounding box");
  osm->add_option("--bbox", osm_bbox, "lat_min,lon_min,lat_max,lon_max");
  osm->add_option("--polygon", osm_polygon, "lat,lon;lat,lon;...");
  osm->add_option("--address", osm_address, "Region by address (needs --geocoder)");
  osm->add_option("--geocoder", osm_geocoder, "JSON table of address -> [lat_min, lon_min, lat_max, lon_max]");
  osm->add_option("--features", osm_features, "Subset of buildings, parks, water, roads")->delimiter(',');
  osm->add_option("--default-height", osm_config.default_building_height, "Building height without tags (m)");
  osm->add_option("--meters-per-level", osm_config.meters_per_level, "Height per building:levels (m)");
  osm->add_option("--workspace", ws_dir, "Workspace directory");

  auto* geojson = ingest->add_subcommand("geojson", "GeoJSON features to a physical layer");
  std::string gj_input, gj_name, gj_kind = "polygons2d";
  double gj_height = 10.0;
  geojson->add_option("--input", gj_input)->required();
  geojson->add_option("--name", gj_name)->required();
  geojson->add_option("--kind", gj_kind, "polygons2d | mesh3d | lines");
  geojson->add_option("--default-height", gj_height, "Extrusion height without a height property (m)");
  geojson->add_option("--workspace", ws_dir);

  auto* csv = ingest->add_subcommand("csv", "Point CSV to a thematic layer");
  std::string csv_input, csv_name, csv_height, csv_scheme, csv_domain;
  ingest::CsvColumns csv_columns;
  csv->add_option("--input", csv_input)->required();
  csv->add_option("--name", csv_name)->required();
  csv->add_option("--lat", csv_columns.lat, "Latitude column");
  csv->add_option("--lon", csv_columns.lon, "Longitude column");
  csv->add_option("--value", csv_columns.value, "Value column");
  csv->add_option("--height", csv_height, "Height column");
  csv->add_option("--scheme", csv_scheme, "sequential | diverging | categorical");
  csv->add_option("--domain", csv_domain, "lo,hi");
  csv->add_option("--workspace", ws_dir);

  auto* grid = ingest->add_subcommand("grid", "Square cells over a bounding box");
  std::string grid_bbox, grid_name = "grid";
  double grid_cell = 10.0;
  grid->add_option("--bbox", grid_bbox, "lat_min,lon_min,lat_max,lon_max")->required();
  grid->add_option("--cell", grid_cell, "Cell size (m)");
  grid->add_option("--name", grid_name);
  grid->add_option("--workspace", ws_dir);

  // shadow
  auto* shadow_cmd = app.add_subcommand("shadow", "Accumulate shadow over a time window");
  std::vector<std::string> shadow_layers;
  double shadow_lat = 0, shadow_lon = 0, shadow_edge = 5.0, shadow_ground = 0, shadow_margin = 30;
  std::string shadow_from, shadow_to, shadow_step = "10m", shadow_name = "shadow";
  shadow_cmd->add_option("--layer", shadow_layers, "mesh3d layer(s) to sample")->required();
  shadow_cmd->add_option("--lat", shadow_lat)->required();
  shadow_cmd->add_option("--lon", shadow_lon)->required();
  shadow_cmd->add_option("--from", shadow_from, "ISO-8601 start")->required();
  shadow_cmd->add_option("--to", shadow_to, "ISO-8601 end (exclusive)")->required();
  shadow_cmd->add_option("--step", shadow_step, "Time step, e.g. 10m");
  shadow_cmd->add_option("--sample-edge", shadow_edge, "Longest triangle edge after subdivision (m)");
  shadow_cmd->add_option("--ground-cell", shadow_ground, "Also sample the ground at this spacing (m)");
  shadow_cmd->add_option("--ground-margin", shadow_margin, "Ground extent beyond the layers (m)");
  shadow_cmd->add_option("--name", shadow_name, "Output layer name");
  shadow_cmd->add_option("--workspace", ws_dir);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate every knot and export its values");
  std::string eval_spec, eval_out, eval_index = "rtree";
  bool eval_no_cache = false;
  eval->add_option("--spec", eval_spec)->required();
  eval->add_option("--out", eval_out, "Output directory")->required();
  eval->add_option("--index", eval_index, "rtree | grid");
  eval->add_flag("--no-cache", eval_no_cache, "Ignore the join cache");
  eval->add_option("--workspace", ws_dir);

  // export-scene
  auto* export_scene = app.add_subcommand("export-scene", "Write a self-contained scene bundle");
  std::string export_spec, export_out;
  export_scene->add_option("--spec", export_spec)->required();
  export_scene->add_option("--out", export_out, "Bundle file")->required();
  export_scene->add_option("--workspace", ws_dir);

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Serve the authoring API");
  std::string serve_spec, serve_host = "127.0.0.1";
  int serve_port = 8008;
  serve_cmd->add_option("--spec", serve_spec, "Initial specification");
  serve_cmd->add_option("--host", serve_host);
  serve_cmd->add_option("--port", serve_port);
  serve_cmd->add_option("--workspace", ws_dir);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kDiagnostics;
  }

  try {
    if (*validate) {
      const auto text = read_text(validate_spec_path);
      grammar::Specification spec;
      try {
        spec = grammar::parse_spec(text);
      } catch (const Error& e) {
        print_diagnostics({{grammar::Severity::error, std::string(to_string(e.code())), e.path(), e.detail()}});
        return kDiagnostics;
      }
      std::optional<layers::Workspace> ws;
      if (!validate_ws.empty()) ws.emplace(validate_ws);
      const auto diagnostics = grammar::validate_spec(spec, ws ? &*ws : nullptr);
      print_diagnostics(diagnostics);
      return grammar::has_errors(diagnostics) ? kDiagnostics : kOk;
    }

    if (*osm) {
      auto ws = open_workspace(ws_dir, true);
      ingest::IngestConfig config = osm_config;
      if (!osm_bbox.empty()) config.region.box = parse_bbox(osm_bbox);
      if (!osm_polygon.empty()) config.region.polygon = parse_polygon(osm_polygon);
      if (!osm_address.empty()) config.region.address = osm_address;
      if (!osm_features.empty()) {
        config.features.clear();
        for (const auto& f : osm_features) {
          const auto feature = ingest::osm_feature_from_string(f);
          if (!feature) throw Error(ErrorCode::SyntaxError, "unknown feature '" + f + "'");
          config.features.push_back(*feature);
        }
      }
      config.check();
      std::optional<TableGeocoder> geocoder;
      if (!osm_geocoder.empty()) geocoder = TableGeocoder::from_file(osm_geocoder);
      const Geocoder* gc = geocoder ? &*geocoder : nullptr;
      std::optional<grammar::BoundingBox> region_box = config.region.box;
      if (!region_box && config.region.address) {
        const OfflineGeocoder offline;
        region_box = (gc ? gc : &offline)->lookup(*config.region.address);
      }
      if (!ws.has_frame()) {
        if (region_box) ws.set_frame(box_center(*region_box));
        else if (!config.region.polygon.empty())
          ws.set_frame({config.region.polygon[0].lat, config.region.polygon[0].lon});
      }
      std::string text;
      if (osm_fetch) {
        if (!region_box) throw Error(ErrorCode::SyntaxError, "--fetch needs --bbox or --address");
        text = fetch_overpass(*region_box);
      } else {
        if (osm_input.empty()) throw Error(ErrorCode::SyntaxError, "give --input or --fetch");
        text = read_text(osm_input);
      }
      const auto extract = ingest::OsmExtract::parse(text);
      WarningLog log;
      const auto result = ingest::ingest_osm(extract, config, ws.frame(), &log, gc);
      print_warnings(log);
      for (const auto& layer : result) {
        const auto path = ws.save(layer);
        std::cout << layer.name << " (" << layers::to_string(layer.kind) << ", " << layer.objects.size()
                  << " objects) -> " << path.string() << "\n";
      }
      return kOk;
    }

    if (*geojson) {
      auto ws = open_workspace(ws_dir, true);
      const auto kind = layers::physical_kind_from_string(gj_kind);
      if (!kind) throw Error(ErrorCode::SyntaxError, "unknown layer kind '" + gj_kind + "'");
      json doc;
      try {
        doc = json::parse(read_text(gj_input));
      } catch (const json::parse_error& e) {
        throw Error(ErrorCode::FormatError, gj_input + ": " + e.what());
      }
      if (!ws.has_frame())
        if (const auto p = first_position(doc)) ws.set_frame(*p);
      WarningLog log;
      const auto layer = ingest::ingest_geojson(doc, gj_name, *kind, ws.frame(), &log, gj_height);
      print_warnings(log);
      std::cout << layer.name << " (" << layer.objects.size() << " objects) -> " << ws.save(layer).string() << "\n";
      return kOk;
    }

    if (*csv) {
      auto ws = open_workspace(ws_dir, true);
      if (!csv_height.empty()) csv_columns.height = csv_height;
      WarningLog log;
      auto layer = ingest::ingest_csv(csv_input, csv_columns, csv_name, &log);
      json scale = json::object();
      if (!csv_scheme.empty()) scale["scheme"] = csv_scheme;
      if (!csv_domain.empty()) {
        const auto comma = csv_domain.find(',');
        if (comma == std::string::npos) throw Error(ErrorCode::SyntaxError, "--domain needs lo,hi");
        scale["domain"] = {std::stod(csv_domain.substr(0, comma)), std::stod(csv_domain.substr(comma + 1))};
      }
      if (!scale.empty()) layer.color_scale = grammar::parse_color_scale(scale, "/color_scale");
      print_warnings(log);
      std::cout << layer.name << " (" << layer.points.size() << " points) -> " << ws.save(layer).string() << "\n";
      return kOk;
    }

    if (*grid) {
      auto ws = open_workspace(ws_dir, true);
      const auto box = parse_bbox(grid_bbox);
      if (!ws.has_frame()) ws.set_frame(box_center(box));
      const auto layer = ingest::make_grid(box, grid_cell, ws.frame(), grid_name);
      std::cout << layer.name << " (" << layer.objects.size() << " cells) -> " << ws.save(layer).string() << "\n";
      return kOk;
    }

    if (*shadow_cmd) {
      auto ws = open_workspace(ws_dir, false);
      WarningLog log;
      std::vector<std::shared_ptr<const layers::PhysicalLayer>> held;
      std::vector<ingest::SurfaceSample> samples;
      geo::Box2 extent;
      for (const auto& name : shadow_layers) {
        auto layer = ws.physical(name, &log);
        if (layer->kind != layers::PhysicalKind::mesh3d)
          throw Error(ErrorCode::InvariantViolation, "layer '" + name + "' is not a mesh3d layer");
        const auto s = ingest::sample_surfaces(*layer, shadow_edge);
        samples.insert(samples.end(), s.begin(), s.end());
        for (const auto& o : layer->objects)
          for (const auto& p : o.local) extent.expand(p.xy());
        held.push_back(std::move(layer));
      }
      if (shadow_ground > 0 && !extent.empty()) {
        extent.min_x -= shadow_margin;
        extent.min_y -= shadow_margin;
        extent.max_x += shadow_margin;
        extent.max_y += shadow_margin;
        const auto g = shadow::ground_samples(extent, shadow_ground);
        samples.insert(samples.end(), g.begin(), g.end());
      }
      // Every mesh layer in the workspace can cast shadows.
      std::vector<std::shared_ptr<const layers::PhysicalLayer>> occluders;
      for (const auto& e : ws.entries())
        if (e.physical && e.kind == "mesh3d") occluders.push_back(ws.physical(e.name, &log));
      std::vector<const layers::PhysicalLayer*> meshes;
      for (const auto& l : occluders) meshes.push_back(l.get());
      const shadow::Bvh bvh(shadow::scene_triangles(meshes));
      const auto path = shadow::make_sun_path(shadow_lat, shadow_lon, shadow::parse_iso_time(shadow_from),
                                              shadow::parse_iso_time(shadow_to), shadow::parse_step(shadow_step));
      const auto result = shadow::accumulate_shadow(samples, &bvh, path, {shadow_name, ws.frame()}, &log);
      print_warnings(log);
      const auto saved = ws.save(result);
      std::cout << json{{"layer", result.name},
                        {"path", saved.string()},
                        {"samples", result.points.size()},
                        {"triangles", bvh.triangles().size()},
                        {"accumulation_minutes", result.metadata.at("accumulation_minutes")}}
                       .dump()
                << "\n";
      return kOk;
    }

    if (*eval) {
      auto ws = open_workspace(ws_dir, false);
      const auto spec = load_valid_spec(eval_spec, &ws);
      engine::EngineOptions options;
      if (eval_index == "grid") options.index = geo::IndexKind::uniform_grid;
      else if (eval_index != "rtree") throw Error(ErrorCode::SyntaxError, "unknown index '" + eval_index + "'");
      options.use_cache = !eval_no_cache;
      WarningLog log;
      const auto knots = engine::Evaluator(ws, options).evaluate_all(spec, &log);
      print_warnings(log);
      const fs::path out(eval_out);
      write_text(out / "spec.json", grammar::serialize(spec));
      for (const auto& def : spec.knots) {
        const auto& k = knots.at(def.name);
        write_text(out / "knots" / (def.name + ".json"), engine::knot_data_text(k));
        write_text(out / "knots" / (def.name + ".csv"), engine::knot_data_csv(k));
      }
      std::cout << knots.size() << " knots -> " << (out / "knots").string() << "\n";
      return kOk;
    }

    if (*export_scene) {
      auto ws = open_workspace(ws_dir, false);
      const auto spec = load_valid_spec(export_spec, &ws);
      WarningLog log;
      const auto knots = engine::Evaluator(ws).evaluate_all(spec, &log);
      print_warnings(log);
      write_text(export_out, scene::build_scene(spec, knots, ws).dump() + "\n");
      return kOk;
    }

    if (*serve_cmd) {
      auto ws = open_workspace(ws_dir, false);
      app::Service service(ws);
      if (!serve_spec.empty()) {
        const auto r = service.load(read_text(serve_spec));
        if (r.status != 200) {
          std::cerr << r.body;
          return kDiagnostics;
        }
      }
      std::cerr << "serving " << ws.root().string() << " on http://" << serve_host << ":" << serve_port << "\n";
      app::serve(service, serve_host, serve_port);
      return kOk;
    }
  } catch (const Rejected&) {
    return kDiagnostics;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]" << (e.path().empty() ? "" : " " + e.path()) << ": "
              << e.detail() << "\n";
    return e.code() == ErrorCode::IoError ? kIoFailure : kDiagnostics;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error [IoError]: " << e.what() << "\n";
    return kIoFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDiagnostics;
  }
  return kOk;
}
