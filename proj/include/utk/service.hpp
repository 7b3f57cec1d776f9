#pragma once

// Live-authoring service over one workspace. handle() is transport-free so
// tests drive it directly; serve() binds it to HTTP.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "utk/engine.hpp"
#include "utk/grammar.hpp"
#include "utk/layers.hpp"

namespace utk::app {

struct Response {
  Response() = default;
  Response(int s, std::string b) : status(s), body(std::move(b)) {}

  int status = 200;
  std::string body;
  std::string content_type = "application/json";
  std::map<std::string, std::string> headers;
};

/// Hash of a knot's canonical definition, the content of every layer it
/// reads and the hashes of its input knots. Missing entries in `known`
/// must be computed first (document order guarantees that).
std::string definition_hash(const grammar::KnotDef& knot, const layers::Workspace& workspace,
                            const std::map<std::string, std::string>& known);

class Service {
public:
  explicit Service(layers::Workspace& workspace, engine::EngineOptions options = {});

  /// Installs the first spec; returns the same payload as a PUT.
  Response load(std::string_view text);

  /// method: GET | PUT. `headers` keys are lower-case.
  Response handle(std::string_view method, std::string_view path, const std::map<std::string, std::string>& query = {},
                  std::string_view body = {}, const std::map<std::string, std::string>& headers = {});

  std::uint64_t revision() const;

private:
  struct Snapshot {
    grammar::Specification spec;
    std::string text;  // canonical serialization
    std::uint64_t revision = 0;
    std::map<std::string, engine::EvaluatedKnot> knots;
    std::map<std::string, std::string> hashes;
    std::vector<grammar::Diagnostic> diagnostics;
    nlohmann::json job = nlohmann::json::object();
  };

  Response put_spec(std::string_view body, const std::map<std::string, std::string>& headers);
  std::shared_ptr<const Snapshot> snapshot() const;

  layers::Workspace& workspace_;
  engine::EngineOptions options_;
  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const Snapshot> snapshot_;
  std::mutex writer_;  // held for the whole of a PUT
};

/// HTTP transport for a Service: GET and PUT under /api/.
class HttpServer {
public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds host:port (port 0 picks a free one) and returns the bound port.
  /// Throws Error(IoError).
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void listen();
  /// Blocks until a concurrent listen() accepts connections.
  void wait_until_ready() const;
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocks serving `service` on host:port.
void serve(Service& service, const std::string& host, int port);

}  // namespace utk::app
