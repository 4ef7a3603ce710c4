#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "objcomp/annotation/store.hpp"

namespace httplib {
class Server;
}

namespace objcomp::annotation {

struct ServerOptions {
  std::filesystem::path asset_dir;
  std::filesystem::path store_path;
  /// Steps and base seed attached to exported composite requests.
  int export_steps = 100;
  std::uint64_t export_seed = 0;
  WarningFn warn;
};

/// HTTP/JSON front end over an AssetCatalog and AnnotationStore.
///   GET  /assets?kind=object|background
///   GET  /assets/{id}/image
///   GET  /preview?object=..&background=..&bbox=x,y,w,h   (PNG)
///   POST /annotations
///   GET  /annotations
///   GET  /annotations/export
class AnnotationServer {
 public:
  explicit AnnotationServer(ServerOptions options);
  ~AnnotationServer();

  /// Binds and serves until stop(); returns false when binding fails.
  bool listen(const std::string& host, int port);
  /// Binds to a free port and returns it (or -1); call listen_after_bind().
  int bind_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

  const AssetCatalog& catalog() const { return catalog_; }
  AnnotationStore& store() { return store_; }

 private:
  void install_routes();

  ServerOptions options_;
  AssetCatalog catalog_;
  AnnotationStore store_;
  std::unique_ptr<httplib::Server> http_;
};

/// Export payload: one entry per record with the mask as rows of '0'/'1'.
nlohmann::json export_json(const std::vector<AnnotationRecord>& records,
                           const std::vector<generator::CompositeRequest>& requests);

}  // namespace objcomp::annotation
