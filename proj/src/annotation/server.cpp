#include "objcomp/annotation/server.hpp"

#include <httplib.h>

#include "objcomp/errors.hpp"

namespace objcomp::annotation {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message,
                const std::vector<std::string>& fields = {}) {
  json body = {{"error", message}};
  if (!fields.empty()) body["fields"] = fields;
  send_json(res, status, body);
}

json entry_json(const AssetEntry& e) {
  return {{"id", e.id},
          {"kind", to_string(e.kind)},
          {"width", e.width},
          {"height", e.height},
          {"thumbnail_path", e.thumbnail_path}};
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ValidationError& e) {
      send_error(res, 400, e.what(), e.fields());
    } catch (const NotFoundError& e) {
      send_error(res, 404, e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, std::string("malformed JSON: ") + e.what(), {"body"});
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  };
}

std::string required_param(const httplib::Request& req, const std::string& name) {
  if (!req.has_param(name)) throw ValidationError("missing query parameter '" + name + "'", {name});
  return req.get_param_value(name);
}

}  // namespace

json export_json(const std::vector<AnnotationRecord>& records,
                 const std::vector<generator::CompositeRequest>& requests) {
  json out = json::array();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto& q = requests.at(i);
    json rows = json::array();
    for (int y = 0; y < q.mask.height; ++y) {
      std::string row(q.mask.width, '1');
      for (int x = 0; x < q.mask.width; ++x)
        if (q.mask.at(x, y, 0) == 0.0f) row[x] = '0';
      rows.push_back(row);
    }
    out.push_back({{"annotation_id", r.id},
                   {"object_id", r.object_id},
                   {"background_id", r.background_id},
                   {"bbox", bbox_json(r.bbox)},
                   {"width", q.background.width},
                   {"height", q.background.height},
                   {"steps", q.steps},
                   {"seed", q.seed},
                   {"mask", rows}});
  }
  return out;
}

AnnotationServer::AnnotationServer(ServerOptions options)
    : options_(std::move(options)),
      catalog_(options_.asset_dir, options_.warn),
      store_(options_.store_path),
      http_(std::make_unique<httplib::Server>()) {
  install_routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

void AnnotationServer::install_routes() {
  auto& s = *http_;
  s.Get("/assets", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const AssetKind kind = asset_kind_from_string(required_param(req, "kind"));
          json list = json::array();
          for (const auto& e : catalog_.list(kind)) list.push_back(entry_json(e));
          send_json(res, 200, list);
        }));
  s.Get(R"(/assets/([^/]+)/image)", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const auto bytes = encode_png(catalog_.load(req.matches[1].str()));
          res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
        }));
  s.Get("/preview", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const std::string object_id = required_param(req, "object");
          const std::string background_id = required_param(req, "background");
          const BBox bbox = parse_bbox(required_param(req, "bbox"));
          const Image bg = catalog_.load(background_id);
          const Image obj = catalog_.load(object_id);
          const auto bytes = encode_png(copy_paste(bg, obj, bbox));
          res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
        }));
  s.Post("/annotations", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const json body = json::parse(req.body);
           const auto record = store_.append(validate_new_record(body, catalog_));
           send_json(res, 201, record.to_json());
         }));
  s.Get("/annotations", guarded([this](const httplib::Request&, httplib::Response& res) {
          json list = json::array();
          for (const auto& r : store_.list()) list.push_back(r.to_json());
          send_json(res, 200, list);
        }));
  s.Get("/annotations/export", guarded([this](const httplib::Request&, httplib::Response& res) {
          const auto records = store_.list();
          send_json(res, 200,
                    export_json(records, export_requests(records, catalog_, options_.export_steps,
                                                         options_.export_seed)));
        }));
}

bool AnnotationServer::listen(const std::string& host, int port) { return http_->listen(host, port); }

int AnnotationServer::bind_any_port(const std::string& host) { return http_->bind_to_any_port(host); }

bool AnnotationServer::listen_after_bind() { return http_->listen_after_bind(); }

void AnnotationServer::stop() {
  if (http_) http_->stop();
}

void AnnotationServer::wait_until_ready() const { http_->wait_until_ready(); }

}  // namespace objcomp::annotation
