#include "anchorflow/io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <set>

namespace anchorflow::io {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(std::uint8_t(v & 0xff));
  out.push_back(std::uint8_t(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

std::uint16_t get_u16(const std::vector<std::uint8_t>& b, std::size_t at) {
  return std::uint16_t(b[at] | (b[at + 1] << 8));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[at + i]) << (8 * i);
  return v;
}

float get_f32(const std::vector<std::uint8_t>& b, std::size_t at) {
  const std::uint32_t bits = get_u32(b, at);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

std::uint32_t checked_u32(std::int64_t v, const char* what) {
  if (v < 0 || v > std::int64_t(std::numeric_limits<std::uint32_t>::max()))
    fail(ErrorCode::kDimOverflow, std::string(what) + " does not fit in u32");
  return std::uint32_t(v);
}

}  // namespace

// ---------------------------------------------------------------------------
// Feature container

std::vector<std::uint8_t> encode_feature_file(const FeatureFile& file) {
  const FeatureGrid& g = file.grid;
  if (file.has_mask() && file.mask.size() != std::size_t(g.cells()))
    fail(ErrorCode::kMaskMismatch, "mask size does not match the grid");
  std::vector<std::uint8_t> out;
  out.reserve(kFeatureHeaderBytes + std::size_t(g.cells()) * g.dim() * 4 + file.mask.size());
  for (char ch : {'M', 'R', 'C', 'F'}) out.push_back(std::uint8_t(ch));
  put_u16(out, kFeatureVersion);
  put_u32(out, checked_u32(g.rows(), "height"));
  put_u32(out, checked_u32(g.cols(), "width"));
  put_u32(out, checked_u32(g.dim(), "dim"));
  put_f32(out, static_cast<float>(g.stride()));
  std::uint16_t flags = 0;
  if (g.normalized()) flags |= kFlagNormalized;
  if (file.has_mask()) flags |= kFlagMask;
  put_u16(out, flags);
  const auto& d = g.data();
  for (Index r = 0; r < d.rows(); ++r)
    for (Index c = 0; c < d.cols(); ++c) put_f32(out, d(r, c));
  for (auto m : file.mask) out.push_back(m ? 1 : 0);
  return out;
}

FeatureFile decode_feature_file(const std::vector<std::uint8_t>& b) {
  const std::size_t size = b.size();
  if (size < 4) throw ParseError(ErrorCode::kTruncated, size, "file shorter than the magic");
  if (std::memcmp(b.data(), "MRCF", 4) != 0)
    throw ParseError(ErrorCode::kBadMagic, 0, "magic is not \"MRCF\"");
  if (size < kFeatureHeaderBytes)
    throw ParseError(ErrorCode::kTruncated, size,
                     "header needs " + std::to_string(kFeatureHeaderBytes) + " bytes, got " +
                         std::to_string(size));
  const std::uint16_t version = get_u16(b, 4);
  if (version != kFeatureVersion)
    throw ParseError(ErrorCode::kBadVersion, 4,
                     "unsupported version " + std::to_string(version));
  const std::uint32_t h = get_u32(b, 6), w = get_u32(b, 10), dim = get_u32(b, 14);
  if (h == 0) throw ParseError(ErrorCode::kFormat, 6, "height must be >= 1");
  if (w == 0) throw ParseError(ErrorCode::kFormat, 10, "width must be >= 1");
  if (dim == 0) throw ParseError(ErrorCode::kFormat, 14, "dim must be >= 1");
  const float stride = get_f32(b, 18);
  if (!std::isfinite(stride) || !(stride > 0.0f))
    throw ParseError(ErrorCode::kFormat, 18, "stride must be positive and finite");
  const std::uint16_t flags = get_u16(b, 22);
  if (flags & ~(kFlagNormalized | kFlagMask))
    throw ParseError(ErrorCode::kFormat, 22, "unknown flag bits " + std::to_string(flags));

  // Sizes in 64 bits; anything that cannot be addressed is an overflow.
  const std::uint64_t cells = std::uint64_t(h) * w;
  std::uint64_t values = 0, payload = 0;
  if (__builtin_mul_overflow(cells, std::uint64_t(dim), &values) ||
      __builtin_mul_overflow(values, std::uint64_t(4), &payload) ||
      cells > std::uint64_t(std::numeric_limits<int>::max()) ||
      payload > std::uint64_t(std::numeric_limits<std::ptrdiff_t>::max()) - kFeatureHeaderBytes - cells)
    throw ParseError(ErrorCode::kDimOverflow, 6,
                     "height*width*dim overflows (" + std::to_string(h) + "x" +
                         std::to_string(w) + "x" + std::to_string(dim) + ")");
  const bool has_mask = flags & kFlagMask;
  const std::uint64_t expected = kFeatureHeaderBytes + payload + (has_mask ? cells : 0);
  if (size < expected)
    throw ParseError(ErrorCode::kTruncated, size,
                     "expected " + std::to_string(expected) + " bytes, got " +
                         std::to_string(size));
  if (size > expected)
    throw ParseError(ErrorCode::kFormat, expected,
                     std::to_string(size - expected) + " trailing bytes after the payload");

  FeatureGrid::Matrix data{Index(cells), Index(dim)};
  std::size_t at = kFeatureHeaderBytes;
  for (Index r = 0; r < data.rows(); ++r)
    for (Index c = 0; c < data.cols(); ++c, at += 4) {
      const float v = get_f32(b, at);
      if (!std::isfinite(v)) throw ParseError(ErrorCode::kFormat, at, "non-finite descriptor");
      data(r, c) = v;
    }
  FeatureFile out;
  if (has_mask) {
    out.mask.resize(cells);
    for (std::uint64_t i = 0; i < cells; ++i, ++at) {
      if (b[at] > 1)
        throw ParseError(ErrorCode::kMaskMismatch, at,
                         "mask byte " + std::to_string(b[at]) + " is not 0 or 1");
      out.mask[i] = b[at];
    }
  }
  out.grid = FeatureGrid(GridGeometry{int(h), int(w), double(stride)}, std::move(data),
                         flags & kFlagNormalized);
  return out;
}

FeatureFile read_feature_file(const fs::path& path) { return decode_feature_file(read_bytes(path)); }

void write_feature_file(const FeatureFile& file, const fs::path& path) {
  write_atomic(path, encode_feature_file(file));
}

// ---------------------------------------------------------------------------
// Files

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> out((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorCode::kIo, "read failed: " + path.string());
  return out;
}

namespace {

void write_atomic_raw(const fs::path& path, const char* data, std::size_t n) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(data, std::streamsize(n));
    out.flush();
    if (!out) fail(ErrorCode::kIo, "write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorCode::kIo, "cannot rename onto " + path.string());
  }
}

}  // namespace

void write_atomic(const fs::path& path, const std::string& contents) {
  write_atomic_raw(path, contents.data(), contents.size());
}

void write_atomic(const fs::path& path, const std::vector<std::uint8_t>& contents) {
  write_atomic_raw(path, reinterpret_cast<const char*>(contents.data()), contents.size());
}

json read_json(const fs::path& path) {
  const auto bytes = read_bytes(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ParseError(ErrorCode::kFormat, e.byte, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_atomic(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Correspondence JSON

namespace {

template <typename T>
T get_as(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key))
    fail(ErrorCode::kFormat, where + ": missing \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::kFormat, where + ": \"" + key + "\" has the wrong type");
  }
}

std::optional<ImageSize> size_from(const json& j, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  const auto v = get_as<std::vector<int>>(j, key, "image_pair");
  if (v.size() != 2 || v[0] < 1 || v[1] < 1)
    fail(ErrorCode::kFormat, std::string("image_pair.") + key + " must be [h, w] >= 1");
  return ImageSize{v[0], v[1]};
}

std::optional<std::array<double, 4>> box_from(const json& j, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  const auto v = get_as<std::vector<double>>(j, key, "bbox");
  if (v.size() != 4) fail(ErrorCode::kFormat, std::string("bbox.") + key + " needs 4 numbers");
  for (double x : v)
    if (!std::isfinite(x)) fail(ErrorCode::kFormat, "bbox with non-finite coordinate");
  if (!(v[2] > v[0] && v[3] > v[1]))
    fail(ErrorCode::kDegenerateRegion, std::string("bbox.") + key + " must have max > min");
  return std::array<double, 4>{v[0], v[1], v[2], v[3]};
}

bool inside(const PixelPoint& p, const std::optional<ImageSize>& hw) {
  if (!hw) return true;
  return p.x() >= 0 && p.y() >= 0 && p.x() <= hw->width && p.y() <= hw->height;
}

}  // namespace

CorrespondenceSet CorrespondenceFile::anchors() const {
  CorrespondenceSet out;
  if (!seen.empty()) {
    for (int id : seen) out.add(pairs[std::size_t(id)].src, pairs[std::size_t(id)].tgt,
                                Provenance::kAnnotated);
    return out;
  }
  for (const auto& c : pairs)
    if (c.provenance == Provenance::kAnnotated) out.add(c);
  return out;
}

CorrespondenceFile correspondence_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorCode::kFormat, "correspondence file must be a JSON object");
  CorrespondenceFile f;
  if (j.contains("image_pair")) {
    const json& ip = j.at("image_pair");
    if (!ip.is_object()) fail(ErrorCode::kFormat, "image_pair must be an object");
    if (ip.contains("src")) f.src = get_as<std::string>(ip, "src", "image_pair");
    if (ip.contains("tgt")) f.tgt = get_as<std::string>(ip, "tgt", "image_pair");
    f.src_hw = size_from(ip, "src_hw");
    f.tgt_hw = size_from(ip, "tgt_hw");
  }
  if (j.contains("bbox")) {
    const json& bb = j.at("bbox");
    if (!bb.is_object()) fail(ErrorCode::kFormat, "bbox must be an object");
    f.bbox_src = box_from(bb, "src");
    f.bbox_tgt = box_from(bb, "tgt");
  }
  const json& pairs = j.contains("pairs") ? j.at("pairs") : json::array();
  if (!pairs.is_array()) fail(ErrorCode::kFormat, "pairs must be an array");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::string where = "pairs[" + std::to_string(i) + "]";
    const json& p = pairs[i];
    const PixelPoint s(get_as<double>(p, "sx", where), get_as<double>(p, "sy", where));
    const PixelPoint t(get_as<double>(p, "tx", where), get_as<double>(p, "ty", where));
    if (!is_finite(s) || !is_finite(t)) fail(ErrorCode::kFormat, where + ": non-finite point");
    if (!inside(s, f.src_hw) || !inside(t, f.tgt_hw))
      fail(ErrorCode::kFormat, where + ": point outside its image");
    Provenance prov = Provenance::kAnnotated;
    if (p.contains("provenance")) {
      try {
        prov = provenance_from_string(get_as<std::string>(p, "provenance", where));
      } catch (const Error&) {
        fail(ErrorCode::kFormat, where + ": unknown provenance");
      }
    }
    if (!f.pairs.add(s, t, prov)) fail(ErrorCode::kFormat, where + ": duplicate pair");
  }
  if (j.contains("splits")) {
    const json& sp = j.at("splits");
    if (!sp.is_object()) fail(ErrorCode::kFormat, "splits must be an object");
    if (sp.contains("seen")) f.seen = get_as<std::vector<int>>(sp, "seen", "splits");
    if (sp.contains("unseen")) f.unseen = get_as<std::vector<int>>(sp, "unseen", "splits");
    std::set<int> ids;
    for (const auto* list : {&f.seen, &f.unseen})
      for (int id : *list) {
        if (id < 0 || std::size_t(id) >= f.pairs.size())
          fail(ErrorCode::kFormat, "split id " + std::to_string(id) + " out of range");
        if (!ids.insert(id).second)
          fail(ErrorCode::kFormat, "split id " + std::to_string(id) + " listed twice");
      }
  }
  if (j.contains("diagnostics")) f.diagnostics = j.at("diagnostics");
  return f;
}

json correspondence_to_json(const CorrespondenceFile& f) {
  json j;
  json ip = {{"src", f.src}, {"tgt", f.tgt}};
  if (f.src_hw) ip["src_hw"] = {f.src_hw->height, f.src_hw->width};
  if (f.tgt_hw) ip["tgt_hw"] = {f.tgt_hw->height, f.tgt_hw->width};
  j["image_pair"] = ip;
  if (f.bbox_src || f.bbox_tgt) {
    json bb = json::object();
    if (f.bbox_src) bb["src"] = *f.bbox_src;
    if (f.bbox_tgt) bb["tgt"] = *f.bbox_tgt;
    j["bbox"] = bb;
  }
  json pairs = json::array();
  for (const auto& c : f.pairs)
    pairs.push_back({{"sx", c.src.x()},
                     {"sy", c.src.y()},
                     {"tx", c.tgt.x()},
                     {"ty", c.tgt.y()},
                     {"provenance", std::string(to_string(c.provenance))}});
  j["pairs"] = pairs;
  j["splits"] = {{"seen", f.seen}, {"unseen", f.unseen}};
  if (!f.diagnostics.is_null()) j["diagnostics"] = f.diagnostics;
  return j;
}

// ---------------------------------------------------------------------------
// PCK inputs

namespace {

struct Keypoint {
  PixelPoint p;
  std::string split;
};

std::map<int, Keypoint> keypoints_of(const json& image, const std::string& where) {
  std::map<int, Keypoint> out;
  const auto& kps = image.contains("keypoints") ? image.at("keypoints") : json::array();
  if (!kps.is_array()) fail(ErrorCode::kFormat, where + ": keypoints must be an array");
  for (const auto& k : kps) {
    const int id = get_as<int>(k, "id", where);
    const PixelPoint p(get_as<double>(k, "x", where), get_as<double>(k, "y", where));
    if (!is_finite(p)) fail(ErrorCode::kFormat, where + ": non-finite keypoint");
    std::string split = k.contains("split") ? get_as<std::string>(k, "split", where) : "";
    if (!split.empty() && split != "seen" && split != "unseen")
      fail(ErrorCode::kFormat, where + ": split must be \"seen\" or \"unseen\"");
    if (!out.emplace(id, Keypoint{p, split}).second)
      fail(ErrorCode::kFormat, where + ": keypoint id " + std::to_string(id) + " repeated");
  }
  return out;
}

std::map<std::string, json> images_by_id(const json& j, const char* what) {
  if (!j.is_object() || !j.contains("images") || !j.at("images").is_array())
    fail(ErrorCode::kFormat, std::string(what) + ": expected {\"images\": [...]}");
  std::map<std::string, json> out;
  for (const auto& im : j.at("images")) {
    const auto id = get_as<std::string>(im, "id", what);
    if (!out.emplace(id, im).second)
      fail(ErrorCode::kFormat, std::string(what) + ": image id \"" + id + "\" repeated");
  }
  return out;
}

}  // namespace

PckInputs pck_inputs_from_json(const json& predictions, const json& annotations) {
  const auto preds = images_by_id(predictions, "predictions");
  const auto anns = images_by_id(annotations, "annotations");
  std::map<std::string, std::vector<PckRecord>> by_split;
  for (const auto& [id, ann] : anns) {
    const std::string where = "image \"" + id + "\"";
    const auto it = preds.find(id);
    if (it == preds.end()) fail(ErrorCode::kFormat, where + ": no prediction");
    const auto gt = keypoints_of(ann, where);
    const auto pr = keypoints_of(it->second, where);
    if (gt.empty()) fail(ErrorCode::kFormat, where + ": no annotated keypoints");

    double h = 0, w = 0;
    if (ann.contains("bbox")) {
      const auto b = *box_from(ann, "bbox");
      w = b[2] - b[0];
      h = b[3] - b[1];
    } else {
      Eigen::AlignedBox2d box;
      for (const auto& [k, kp] : gt) box.extend(kp.p);
      w = box.sizes().x();
      h = box.sizes().y();
      if (!(w > 0.0) && !(h > 0.0))
        fail(ErrorCode::kDegenerateRegion, where + ": keypoint box has zero extent");
      if (!(w > 0.0)) w = h;
      if (!(h > 0.0)) h = w;
    }

    std::map<std::string, PckRecord> recs;
    for (const auto& [k, kp] : gt) {
      const auto p = pr.find(k);
      if (p == pr.end())
        fail(ErrorCode::kFormat, where + ": keypoint " + std::to_string(k) + " not predicted");
      const PckKeypoint entry{k, p->second.p, kp.p};
      recs["all"].keypoints.push_back(entry);
      if (!kp.split.empty()) recs[kp.split].keypoints.push_back(entry);
    }
    for (auto& [split, r] : recs) {
      r.bbox_h = h;
      r.bbox_w = w;
      by_split[split].push_back(std::move(r));
    }
  }
  PckInputs out;
  for (const char* s : {"all", "seen", "unseen"})
    if (by_split.count(s)) out.splits.emplace_back(s, std::move(by_split[s]));
  return out;
}

// ---------------------------------------------------------------------------
// Scene spec

#define ANCHORFLOW_SPEC_FIELDS(X)                                                     \
  X(rows) X(cols) X(stride) X(dim) X(n_instances) X(object_px) X(correlation_cells)  \
  X(rotation_deg) X(scale_jitter) X(translation_px) X(jitter_px) X(mesh_vertices)    \
  X(noise) X(clutter) X(symmetric) X(symmetric_from) X(n_seen) X(n_unseen)           \
  X(seen_visibility) X(annotation_noise_px)

json spec_to_json(const SceneSpec& spec) {
  json j = json::object();
#define X(name) j[#name] = spec.name;
  ANCHORFLOW_SPEC_FIELDS(X)
#undef X
  return j;
}

SceneSpec spec_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorCode::kFormat, "scene spec must be a JSON object");
  SceneSpec spec;
  std::set<std::string> known;
#define X(name)                                                                   \
  known.insert(#name);                                                            \
  if (j.contains(#name)) spec.name = get_as<decltype(spec.name)>(j, #name, "spec");
  ANCHORFLOW_SPEC_FIELDS(X)
#undef X
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) fail(ErrorCode::kFormat, "spec: unknown key \"" + key + "\"");
  validate_spec(spec);
  return spec;
}

json diagnostics_to_json(const MiningDiagnostics& d) {
  return {{"mnn_pairs", d.mnn_pairs},
          {"seed_pairs", d.seed_pairs},
          {"triangles", d.triangles},
          {"skipped_triangles", d.skipped_triangles},
          {"valid_cells", d.valid_cells},
          {"clusters_before_merge", d.clusters_before_merge},
          {"clusters_after_merge", d.clusters_after_merge},
          {"anchored_clusters", d.anchored_clusters},
          {"dense_pairs", d.dense_pairs},
          {"anchored_pairs", d.anchored_pairs},
          {"collinear_seeds", d.collinear_seeds},
          {"k_lowered", d.k_lowered},
          {"no_anchored_cluster", d.no_anchored_cluster}};
}

}  // namespace anchorflow::io
