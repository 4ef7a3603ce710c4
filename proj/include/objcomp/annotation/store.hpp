#pragma once

#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "objcomp/generator/diffusion.hpp"
#include "objcomp/image.hpp"

namespace objcomp::annotation {

/// Bad request content; `fields` names the offending keys.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(const std::string& what, std::vector<std::string> fields)
      : std::runtime_error(what), fields_(std::move(fields)) {}
  const std::vector<std::string>& fields() const { return fields_; }

 private:
  std::vector<std::string> fields_;
};

class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AssetKind { Object, Background };

std::string to_string(AssetKind kind);
AssetKind asset_kind_from_string(const std::string& s);

struct AssetEntry {
  std::string id;  // "<kind>-<file stem>"
  AssetKind kind;
  int width = 0;
  int height = 0;
  std::string thumbnail_path;  // relative to the asset root
};

using WarningFn = std::function<void(const std::string&)>;

/// PNG files under `<root>/objects` and `<root>/backgrounds`, scanned once.
/// Other files are skipped and reported through `warn`.
class AssetCatalog {
 public:
  explicit AssetCatalog(std::filesystem::path root, const WarningFn& warn = {});

  /// Lexicographic by id.
  std::vector<AssetEntry> list(AssetKind kind) const;
  const AssetEntry& find(const std::string& id) const;
  std::filesystem::path file(const std::string& id) const;
  Image load(const std::string& id) const;

 private:
  std::filesystem::path root_;
  std::vector<AssetEntry> entries_;
};

/// Object resized to fit inside `bbox` with its aspect ratio kept, centred,
/// then alpha-composited over the background. Result is RGB on the 8-bit grid.
Image copy_paste(const Image& background, const Image& object, const BBox& bbox);

/// Integer placement used by copy_paste: resized size and top-left corner.
struct Placement {
  int x = 0, y = 0, width = 0, height = 0;
};
Placement fit_placement(int object_width, int object_height, const BBox& bbox);

/// bbox inside [0, width] x [0, height] with positive extent; throws
/// ValidationError naming "bbox".
void validate_bbox(const BBox& bbox, int width, int height);

/// "x,y,w,h" -> BBox; throws ValidationError.
BBox parse_bbox(const std::string& text);
nlohmann::json bbox_json(const BBox& b);
BBox bbox_from_json(const nlohmann::json& j, const std::string& field = "bbox");

struct AnnotationRecord {
  std::string id;
  std::string object_id;
  std::string background_id;
  BBox bbox;
  double scale = 1.0;
  std::string created_at;  // ISO 8601 UTC

  nlohmann::json to_json() const;
  static AnnotationRecord from_json(const nlohmann::json& j);
  bool operator==(const AnnotationRecord&) const = default;
};

/// Append-only JSONL file. Appends are serialised and flushed to disk before
/// returning; ids are "ann-<n>", counting from 1 in creation order.
class AnnotationStore {
 public:
  explicit AnnotationStore(std::filesystem::path path);

  /// Assigns id and created_at (unless already set) and persists.
  AnnotationRecord append(AnnotationRecord record);
  std::vector<AnnotationRecord> list() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::vector<AnnotationRecord> records_;
};

/// Validates a POST body against the catalog and fills scale when absent.
AnnotationRecord validate_new_record(const nlohmann::json& body, const AssetCatalog& catalog);

/// One request per record: background and object from the catalog, mask zero
/// inside the bbox.
std::vector<generator::CompositeRequest> export_requests(const std::vector<AnnotationRecord>& records,
                                                         const AssetCatalog& catalog, int steps,
                                                         std::uint64_t seed);

}  // namespace objcomp::annotation
