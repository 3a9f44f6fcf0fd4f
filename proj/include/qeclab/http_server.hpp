#pragma once

#include <string>

#include <httplib.h>

#include "qeclab/service.hpp"

namespace qeclab::service {

inline void install_routes(httplib::Server& server, const ModelRegistry& models) {
  auto route = [&models](const httplib::Request& req, httplib::Response& res) {
    const Response r = handle(req.method, req.path, req.body, models);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Get(R"(/api/layouts/([^/]+))", route);
  server.Get("/api/models", route);
  server.Post("/api/decode", route);
  server.Post("/api/saliency", route);
  server.Post("/api/sample", route);
  server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    const ApiError e(res.status, res.status == 404 ? "not_found" : "http_error",
                     "no route for " + req.method + " " + req.path);
    res.set_content(error_body(e).dump(), "application/json");
  });
}

}  // namespace qeclab::service
