#include <algorithm>
#include <atomic>
#include <cctype>

#include <httplib.h>

#include "utk/service.hpp"

namespace utk::app {

struct HttpServer::Impl {
  httplib::Server server;
  std::atomic<bool> stopping{false};
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>()) {
  auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query(req.params.begin(), req.params.end());
    std::map<std::string, std::string> headers;
    for (const auto& [k, v] : req.headers) {
      std::string key = k;
      std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
      headers[key] = v;
    }
    const auto r = service.handle(req.method, req.path, query, req.body, headers);
    res.status = r.status;
    for (const auto& [k, v] : r.headers) res.set_header(k, v);
    res.set_content(r.body, r.content_type);
  };
  impl_->server.Get(R"(/api/.*)", forward);
  impl_->server.Put(R"(/api/.*)", forward);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound <= 0) throw Error(ErrorCode::IoError, "cannot listen on " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() {
  if (!impl_->server.listen_after_bind() && !impl_->stopping)
    throw Error(ErrorCode::IoError, "HTTP server stopped unexpectedly");
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

void HttpServer::stop() {
  impl_->stopping = true;
  if (impl_->server.is_running()) impl_->server.stop();
}

void serve(Service& service, const std::string& host, int port) {
  HttpServer server(service);
  server.bind(host, port);
  server.listen();
}

}  // namespace utk::app
