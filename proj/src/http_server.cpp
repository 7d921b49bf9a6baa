#include "poprank/http_server.hpp"

#include "httplib.h"
#include "poprank/error.hpp"

namespace poprank {

namespace {

using nlohmann::json;

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
  reply(res, status, json{{"error", message}});
}

json parse_body(const httplib::Request& req) {
  json body = json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) {
    throw ServiceError(ServiceErrorKind::rejected, "request body must be a JSON object");
  }
  return body;
}

template <class T>
T field(const json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end()) throw ServiceError(ServiceErrorKind::rejected, std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ServiceError(ServiceErrorKind::rejected, std::string("field '") + key + "' has the wrong type");
  }
}

std::string placeholder_svg(const ExperimentService::ImageInfo& info) {
  const bool cat = info.item_class == 0;
  const std::string label = std::string(cat ? "cat " : "dog ") + std::to_string(info.index);
  const char* fill = cat ? "#f3d9b1" : "#c9ddf2";
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"240\" height=\"160\" viewBox=\"0 0 240 160\">"
         "<rect width=\"240\" height=\"160\" rx=\"12\" fill=\"" +
         std::string(fill) +
         "\"/><text x=\"120\" y=\"92\" font-family=\"sans-serif\" font-size=\"32\" text-anchor=\"middle\">" + label +
         "</text></svg>";
}

/// Runs a handler, mapping service errors to status codes.
template <class F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ServiceError& err) {
      reply_error(res, http_status(err.kind()), err.what());
    } catch (const std::exception& err) {
      reply_error(res, 500, err.what());
    }
  };
}

}  // namespace

int http_status(ServiceErrorKind kind) {
  switch (kind) {
    case ServiceErrorKind::not_found: return 404;
    case ServiceErrorKind::conflict: return 409;
    case ServiceErrorKind::rejected: return 400;
    case ServiceErrorKind::storage: return 500;
  }
  return 500;
}

HttpFrontend::HttpFrontend(ExperimentService& service)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;
  ExperimentService& svc = service_;

  s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                         {"Access-Control-Allow-Headers", "Content-Type"},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  s.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  s.Post("/sessions", guarded([&svc](const httplib::Request&, httplib::Response& res) {
           const auto info = svc.create_session();
           reply(res, 201, json{{"session_id", info.session_id}, {"condition", info.condition}});
         }));

  s.Post(R"(/sessions/([^/]+)/type)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
           const json body = parse_body(req);
           svc.record_type(req.matches[1], field<std::string>(body, "answer"));
           reply(res, 200, json{{"ok", true}});
         }));

  s.Get(R"(/sessions/([^/]+)/options)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
          json items = json::array();
          for (const auto& o : svc.get_options(req.matches[1])) {
            items.push_back({{"position", o.position}, {"item", o.item}, {"handle", o.handle},
                             {"image", "/images/" + o.handle}});
          }
          reply(res, 200, json{{"options", std::move(items)}});
        }));

  s.Post(R"(/sessions/([^/]+)/click)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
           const json body = parse_body(req);
           const int rank = svc.record_click(req.matches[1], field<std::string>(body, "item"));
           reply(res, 200, json{{"ok", true}, {"position", rank}});
         }));

  s.Post(R"(/sessions/([^/]+)/rating)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
           const json body = parse_body(req);
           svc.record_rating(req.matches[1], field<int>(body, "stars"));
           reply(res, 200, json{{"ok", true}});
         }));

  s.Get("/admin/summary", guarded([&svc](const httplib::Request&, httplib::Response& res) {
          reply(res, 200, svc.results_summary());
        }));

  s.Get("/admin/export", guarded([&svc](const httplib::Request&, httplib::Response& res) {
          std::string out;
          for (const auto& line : svc.export_log()) {
            out += line;
            out += '\n';
          }
          res.status = 200;
          res.set_content(out, "application/x-ndjson");
        }));

  s.Get(R"(/images/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
          const auto info = svc.image(req.matches[1]);
          if (!info) throw ServiceError(ServiceErrorKind::not_found, "unknown image");
          res.status = 200;
          res.set_content(placeholder_svg(*info), "image/svg+xml");
        }));
}

HttpFrontend::~HttpFrontend() { stop(); }

int HttpFrontend::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool HttpFrontend::listen() { return server_->listen_after_bind(); }

void HttpFrontend::stop() {
  if (server_->is_running()) server_->stop();
}

}  // namespace poprank
