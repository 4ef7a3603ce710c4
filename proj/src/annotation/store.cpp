#include "objcomp/annotation/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "objcomp/errors.hpp"

namespace objcomp::annotation {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(AssetKind kind) { return kind == AssetKind::Object ? "object" : "background"; }

AssetKind asset_kind_from_string(const std::string& s) {
  if (s == "object") return AssetKind::Object;
  if (s == "background") return AssetKind::Background;
  throw ValidationError("kind must be 'object' or 'background' (got '" + s + "')", {"kind"});
}

AssetCatalog::AssetCatalog(fs::path root, const WarningFn& warn) : root_(std::move(root)) {
  const std::pair<const char*, AssetKind> dirs[] = {{"objects", AssetKind::Object},
                                                    {"backgrounds", AssetKind::Background}};
  for (const auto& [sub, kind] : dirs) {
    const fs::path dir = root_ / sub;
    if (!fs::is_directory(dir)) continue;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (!e.is_regular_file()) continue;
      if (!is_png_file(e.path())) {
        if (warn) warn("skipping non-image file " + e.path().string());
        continue;
      }
      Image img;
      try {
        img = read_png(e.path());
      } catch (const std::exception& ex) {
        if (warn) warn("skipping unreadable image " + e.path().string() + ": " + ex.what());
        continue;
      }
      entries_.push_back({to_string(kind) + "-" + e.path().stem().string(), kind, img.width, img.height,
                          (fs::path(sub) / e.path().filename()).generic_string()});
    }
  }
  std::sort(entries_.begin(), entries_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
}

std::vector<AssetEntry> AssetCatalog::list(AssetKind kind) const {
  std::vector<AssetEntry> out;
  for (const auto& e : entries_)
    if (e.kind == kind) out.push_back(e);
  return out;
}

const AssetEntry& AssetCatalog::find(const std::string& id) const {
  const auto it = std::lower_bound(entries_.begin(), entries_.end(), id,
                                   [](const AssetEntry& e, const std::string& key) { return e.id < key; });
  if (it == entries_.end() || it->id != id) throw NotFoundError("unknown asset id '" + id + "'");
  return *it;
}

fs::path AssetCatalog::file(const std::string& id) const { return root_ / find(id).thumbnail_path; }

Image AssetCatalog::load(const std::string& id) const { return read_png(file(id)); }

Placement fit_placement(int object_width, int object_height, const BBox& bbox) {
  if (object_width <= 0 || object_height <= 0) throw ValidationError("object image is empty", {"object"});
  const double scale = std::min(bbox.w / object_width, bbox.h / object_height);
  Placement p;
  p.width = std::max(1, static_cast<int>(std::lround(object_width * scale)));
  p.height = std::max(1, static_cast<int>(std::lround(object_height * scale)));
  p.x = static_cast<int>(std::lround(bbox.x + (bbox.w - p.width) / 2.0));
  p.y = static_cast<int>(std::lround(bbox.y + (bbox.h - p.height) / 2.0));
  return p;
}

Image copy_paste(const Image& background, const Image& object, const BBox& bbox) {
  validate_bbox(bbox, background.width, background.height);
  Image out = background.channels == 3 ? background : to_rgb(background);
  const Placement p = fit_placement(object.width, object.height, bbox);
  const Image obj = (p.width == object.width && p.height == object.height)
                        ? object
                        : resize_bilinear(object, p.width, p.height);
  const bool has_alpha = obj.channels == 4;
  for (int y = 0; y < p.height; ++y) {
    const int ty = p.y + y;
    if (ty < 0 || ty >= out.height) continue;
    for (int x = 0; x < p.width; ++x) {
      const int tx = p.x + x;
      if (tx < 0 || tx >= out.width) continue;
      const double a = has_alpha ? std::clamp(obj.at(x, y, 3), 0.0f, 1.0f) : 1.0;
      for (int c = 0; c < 3; ++c) {
        const double src = obj.channels == 1 ? obj.at(x, y, 0) : obj.at(x, y, c);
        const double v = a * src + (1.0 - a) * out.at(tx, ty, c);
        out.at(tx, ty, c) = static_cast<float>(v);
      }
    }
  }
  quantize8(out);
  return out;
}

void validate_bbox(const BBox& b, int width, int height) {
  std::vector<std::string> bad;
  if (!std::isfinite(b.x) || !std::isfinite(b.y) || !std::isfinite(b.w) || !std::isfinite(b.h)) {
    throw ValidationError("bbox values must be finite", {"bbox"});
  }
  if (!(b.w > 0)) bad.push_back("bbox.w");
  if (!(b.h > 0)) bad.push_back("bbox.h");
  if (b.x < 0 || b.x + b.w > width) bad.push_back("bbox.x");
  if (b.y < 0 || b.y + b.h > height) bad.push_back("bbox.y");
  if (!bad.empty()) {
    std::string msg = "bbox must have positive size and lie within the " + std::to_string(width) + "x" +
                      std::to_string(height) + " background (invalid:";
    for (const auto& f : bad) msg += " " + f;
    throw ValidationError(msg + ")", bad);
  }
}

BBox parse_bbox(const std::string& text) {
  BBox b;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%lf,%lf,%lf,%lf%c", &b.x, &b.y, &b.w, &b.h, &tail) != 4) {
    throw ValidationError("bbox must be four comma-separated numbers x,y,w,h (got '" + text + "')", {"bbox"});
  }
  return b;
}

json bbox_json(const BBox& b) { return json::array({b.x, b.y, b.w, b.h}); }

BBox bbox_from_json(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 4) throw ValidationError(field + " must be an array [x, y, w, h]", {field});
  for (const auto& v : j)
    if (!v.is_number()) throw ValidationError(field + " entries must be numbers", {field});
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json AnnotationRecord::to_json() const {
  return {{"id", id},
          {"object_id", object_id},
          {"background_id", background_id},
          {"bbox", bbox_json(bbox)},
          {"scale", scale},
          {"created_at", created_at}};
}

AnnotationRecord AnnotationRecord::from_json(const json& j) {
  AnnotationRecord r;
  r.id = j.at("id").get<std::string>();
  r.object_id = j.at("object_id").get<std::string>();
  r.background_id = j.at("background_id").get<std::string>();
  r.bbox = bbox_from_json(j.at("bbox"));
  r.scale = j.at("scale").get<double>();
  r.created_at = j.at("created_at").get<std::string>();
  return r;
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

std::string record_id(std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ann-%06zu", n);
  return buf;
}

}  // namespace

AnnotationStore::AnnotationStore(fs::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records_.push_back(AnnotationRecord::from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(path_.filename().string() + ":" + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
}

AnnotationRecord AnnotationStore::append(AnnotationRecord record) {
  std::lock_guard lock(mutex_);
  record.id = record_id(records_.size() + 1);
  if (record.created_at.empty()) record.created_at = utc_now();
  const std::string line = record.to_json().dump() + "\n";
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw std::runtime_error("cannot open " + path_.string());
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(fd, line.data() + written, line.size() - written);
    if (n <= 0) {
      ::close(fd);
      throw std::runtime_error("write to " + path_.string() + " failed");
    }
    written += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
  records_.push_back(record);
  return record;
}

std::vector<AnnotationRecord> AnnotationStore::list() const {
  std::lock_guard lock(mutex_);
  return records_;
}

AnnotationRecord validate_new_record(const json& body, const AssetCatalog& catalog) {
  if (!body.is_object()) throw ValidationError("request body must be a JSON object", {"body"});
  std::vector<std::string> missing;
  for (const char* f : {"object_id", "background_id", "bbox"})
    if (!body.contains(f)) missing.push_back(f);
  if (!missing.empty()) {
    std::string msg = "missing required field(s):";
    for (const auto& f : missing) msg += " " + f;
    throw ValidationError(msg, missing);
  }
  for (const char* f : {"object_id", "background_id"})
    if (!body.at(f).is_string()) throw ValidationError(std::string(f) + " must be a string", {f});
  AnnotationRecord r;
  r.object_id = body.at("object_id").get<std::string>();
  r.background_id = body.at("background_id").get<std::string>();
  r.bbox = bbox_from_json(body.at("bbox"));
  const auto& obj = catalog.find(r.object_id);
  const auto& bg = catalog.find(r.background_id);
  if (obj.kind != AssetKind::Object) throw ValidationError("object_id does not name an object", {"object_id"});
  if (bg.kind != AssetKind::Background) {
    throw ValidationError("background_id does not name a background", {"background_id"});
  }
  validate_bbox(r.bbox, bg.width, bg.height);
  if (body.contains("scale")) {
    const auto& s = body.at("scale");
    if (!s.is_number() || !(s.get<double>() > 0)) throw ValidationError("scale must be a positive number", {"scale"});
    r.scale = s.get<double>();
  } else {
    r.scale = std::min(r.bbox.w / obj.width, r.bbox.h / obj.height);
  }
  return r;
}

std::vector<generator::CompositeRequest> export_requests(const std::vector<AnnotationRecord>& records,
                                                         const AssetCatalog& catalog, int steps,
                                                         std::uint64_t seed) {
  std::vector<generator::CompositeRequest> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    generator::CompositeRequest req;
    req.background = to_rgb(catalog.load(r.background_id));
    req.object = catalog.load(r.object_id);
    req.mask = hole_mask(req.background.width, req.background.height, r.bbox);
    req.steps = steps;
    req.seed = Rng::derive(seed, i);
    out.push_back(std::move(req));
  }
  return out;
}

}  // namespace objcomp::annotation
