#include "utk/service.hpp"

#include <chrono>

#include "utk/hash.hpp"
#include "utk/scene.hpp"

namespace utk::app {

using nlohmann::json;

namespace {

Response json_response(int status, const json& body) { return {status, body.dump() + "\n"}; }

Response error_response(int status, std::string_view code, const std::string& message) {
  return json_response(status, {{"error", code}, {"message", message}});
}

std::vector<std::string_view> split_path(std::string_view path) {
  std::vector<std::string_view> parts;
  while (!path.empty()) {
    while (!path.empty() && path.front() == '/') path.remove_prefix(1);
    const auto slash = path.find('/');
    const auto part = path.substr(0, slash);
    if (!part.empty()) parts.push_back(part);
    path = slash == std::string_view::npos ? std::string_view{} : path.substr(slash);
  }
  return parts;
}

json diagnostics_json(const std::vector<grammar::Diagnostic>& diagnostics) {
  json out = json::array();
  for (const auto& d : diagnostics) out.push_back(grammar::to_json(d));
  return out;
}

std::string etag(std::uint64_t revision) { return "\"" + std::to_string(revision) + "\""; }

}  // namespace

std::string definition_hash(const grammar::KnotDef& knot, const layers::Workspace& workspace,
                            const std::map<std::string, std::string>& known) {
  std::string material = grammar::to_json(knot).dump();
  auto add_ref = [&](const grammar::Ref& ref) {
    if (ref.kind == grammar::Ref::Kind::knot) {
      const auto it = known.find(ref.name);
      material += "|knot:" + ref.name + "=" + (it == known.end() ? std::string("?") : it->second);
    } else {
      const auto e = workspace.entry(ref.name);
      material += "|layer:" + ref.name + "=" + (e ? e->content_hash : std::string("?"));
    }
  };
  for (const auto& s : knot.schemes) {
    add_ref(s.in);
    add_ref(s.out);
  }
  if (knot.operation)
    for (const auto& in : knot.operation->inputs) add_ref({grammar::Ref::Kind::knot, in.knot});
  const auto frame = workspace.frame();
  material += "|frame:" + json({frame.lat0, frame.lon0}).dump();
  return sha256_hex(material);
}

Service::Service(layers::Workspace& workspace, engine::EngineOptions options)
    : workspace_(workspace), options_(options) {}

std::shared_ptr<const Service::Snapshot> Service::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return snapshot_;
}

std::uint64_t Service::revision() const {
  const auto s = snapshot();
  return s ? s->revision : 0;
}

Response Service::load(std::string_view text) { return put_spec(text, {}); }

Response Service::put_spec(std::string_view body, const std::map<std::string, std::string>& headers) {
  std::unique_lock writer(writer_, std::try_to_lock);
  if (!writer.owns_lock()) return error_response(409, "Conflict", "another spec update is in progress");
  const auto previous = snapshot();
  if (const auto it = headers.find("if-match"); it != headers.end()) {
    const auto current = etag(previous ? previous->revision : 0);
    if (it->second != current && "\"" + it->second + "\"" != current)
      return error_response(409, "Conflict", "spec changed since revision " + it->second + "; now " + current);
  }

  grammar::Specification spec;
  try {
    spec = grammar::canonicalize(grammar::parse_spec(body));
  } catch (const Error& e) {
    return json_response(422, {{"diagnostics", json::array({{{"severity", "error"},
                                                             {"code", std::string(to_string(e.code()))},
                                                             {"path", e.path()},
                                                             {"message", e.detail()}}})}});
  }
  workspace_.refresh();
  const auto diagnostics = grammar::validate_spec(spec, &workspace_);
  if (grammar::has_errors(diagnostics)) return json_response(422, {{"diagnostics", diagnostics_json(diagnostics)}});

  const auto started = std::chrono::steady_clock::now();
  auto next = std::make_shared<Snapshot>();
  next->spec = spec;
  next->text = grammar::serialize(spec);
  next->revision = (previous ? previous->revision : 0) + 1;
  next->diagnostics = diagnostics;
  json reevaluated = json::array(), reused = json::array();
  const engine::Evaluator evaluator(workspace_, options_);
  WarningLog log;
  for (std::size_t i = 0; i < spec.knots.size(); ++i) {
    const auto& def = spec.knots[i];
    const auto hash = definition_hash(def, workspace_, next->hashes);
    next->hashes[def.name] = hash;
    if (previous) {
      const auto h = previous->hashes.find(def.name);
      const auto k = previous->knots.find(def.name);
      if (h != previous->hashes.end() && h->second == hash && k != previous->knots.end()) {
        next->knots[def.name] = k->second;
        reused.push_back(def.name);
        continue;
      }
    }
    try {
      next->knots[def.name] = evaluator.evaluate(def, next->knots, &log);
    } catch (const Error& e) {
      grammar::Diagnostic d{grammar::Severity::error, std::string(to_string(e.code())),
                            "/knots/" + std::to_string(i), "knot '" + def.name + "': " + e.detail()};
      auto all = diagnostics;
      all.push_back(std::move(d));
      return json_response(422, {{"diagnostics", diagnostics_json(all)}});
    }
    reevaluated.push_back(def.name);
  }
  for (const auto& m : log.messages())
    next->diagnostics.push_back({grammar::Severity::warning, "EvaluationWarning", "", m});
  const auto elapsed =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  next->job = {{"status", "completed"}, {"evaluated", reevaluated.size()}, {"elapsed_ms", elapsed}};

  json payload{{"revision", next->revision},
               {"diagnostics", diagnostics_json(next->diagnostics)},
               {"reevaluated", std::move(reevaluated)},
               {"reused", std::move(reused)},
               {"job", next->job}};
  const auto revision = next->revision;
  {
    std::lock_guard lock(snapshot_mutex_);
    snapshot_ = std::move(next);
  }
  auto r = json_response(200, payload);
  r.headers["ETag"] = etag(revision);
  return r;
}

Response Service::handle(std::string_view method, std::string_view path,
                         const std::map<std::string, std::string>& query, std::string_view body,
                         const std::map<std::string, std::string>& headers) {
  const auto parts = split_path(path);
  if (parts.size() < 2 || parts[0] != "api") return error_response(404, "NotFound", "no route " + std::string(path));
  const auto route = parts[1];

  if (route == "spec" && parts.size() == 2) {
    if (method == "PUT") return put_spec(body, headers);
    if (method != "GET") return error_response(405, "MethodNotAllowed", std::string(method));
    const auto s = snapshot();
    if (!s) return error_response(404, "NotFound", "no spec has been accepted yet");
    Response r{200, s->text};
    r.headers["ETag"] = etag(s->revision);
    return r;
  }
  if (method != "GET") return error_response(405, "MethodNotAllowed", std::string(method));
  const auto s = snapshot();

  try {
    if (route == "knots" && parts.size() == 2) {
      json list = json::array();
      if (s)
        for (const auto& def : s->spec.knots) {
          const auto& k = s->knots.at(def.name);
          list.push_back({{"name", def.name},
                          {"physical_layer", k.physical_layer},
                          {"level", grammar::to_string(k.level)},
                          {"definition_hash", s->hashes.at(def.name)},
                          {"coordinates", k.coord_values.size()},
                          {"objects", k.object_values ? json(k.object_values->size()) : json(nullptr)}});
        }
      return json_response(200, {{"revision", s ? s->revision : 0},
                                 {"knots", std::move(list)},
                                 {"job", s ? s->job : json::object()}});
    }
    if (route == "knots" && parts.size() == 4 && parts[3] == "data") {
      const std::string name(parts[2]);
      if (!s || !s->knots.contains(name)) return error_response(404, "NotFound", "unknown knot '" + name + "'");
      std::optional<grammar::Level> level;
      if (const auto it = query.find("level"); it != query.end() && !it->second.empty()) {
        level = grammar::level_from_string(it->second);
        if (!level) return error_response(400, "BadRequest", "unknown level '" + it->second + "'");
      }
      return {200, engine::knot_data_text(s->knots.at(name), level)};
    }
    if (route == "layers" && parts.size() == 4 && parts[3] == "geometry") {
      const std::string name(parts[2]);
      const auto entry = workspace_.entry(name);
      if (!entry) return error_response(404, "NotFound", "unknown layer '" + name + "'");
      if (entry->physical) return json_response(200, scene::layer_geometry(*workspace_.physical(name)));
      return json_response(200, scene::layer_geometry(*workspace_.thematic(name), workspace_.frame()));
    }
    if (route == "plots" && parts.size() == 4 && parts[3] == "data") {
      std::size_t index = 0;
      try {
        std::size_t used = 0;
        index = std::stoul(std::string(parts[2]), &used);
        if (used != parts[2].size()) throw std::invalid_argument("index");
      } catch (const std::exception&) {
        return error_response(404, "NotFound", "unknown plot '" + std::string(parts[2]) + "'");
      }
      if (!s || index >= scene::plot_count(s->spec))
        return error_response(404, "NotFound", "unknown plot " + std::to_string(index));
      return json_response(200, scene::plot_data(s->spec, index, s->knots));
    }
    if (route == "scene" && parts.size() == 2) {
      if (!s) return error_response(404, "NotFound", "no spec has been accepted yet");
      return json_response(200, scene::build_scene(s->spec, s->knots, workspace_));
    }
  } catch (const Error& e) {
    const int status = e.code() == ErrorCode::LevelUnavailable ? 400 : 500;
    return error_response(status, to_string(e.code()), e.detail());
  }
  return error_response(404, "NotFound", "no route " + std::string(path));
}

}  // namespace utk::app
