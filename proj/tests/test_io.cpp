#include "doctest.h"

#include <cstring>
#include <fstream>

#include <unistd.h>

#include "anchorflow/io.hpp"
#include "oracles.hpp"

using namespace anchorflow;
namespace io = anchorflow::io;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("anchorflow_io_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

io::FeatureFile random_file(Rng& rng, int rows, int cols, int dim, bool mask) {
  io::FeatureFile f{oracle::random_grid<FeatureGrid>(rng, rows, cols, dim, 3.5), {}};
  if (mask) {
    f.mask.resize(std::size_t(rows) * cols);
    for (auto& m : f.mask) m = std::uint8_t(rng.below(2));
  }
  return f;
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + i] = std::uint8_t(v >> (8 * i));
}

// Code and byte offset of the decode failure.
std::pair<ErrorCode, std::size_t> decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    io::decode_feature_file(bytes);
  } catch (const ParseError& e) {
    return {e.code(), e.offset()};
  }
  FAIL("decode accepted malformed bytes");
  return {};
}

}  // namespace

TEST_CASE("feature files round-trip bit-exactly") {
  Rng rng(1);
  for (bool mask : {false, true}) {
    const auto f = random_file(rng, 5, 7, 3, mask);
    const auto bytes = io::encode_feature_file(f);
    CHECK(bytes.size() == io::kFeatureHeaderBytes + 5 * 7 * 3 * 4 + (mask ? 35 : 0));
    CHECK(std::memcmp(bytes.data(), "MRCF", 4) == 0);
    const auto back = io::decode_feature_file(bytes);
    CHECK(back.grid.geometry() == f.grid.geometry());
    CHECK(std::memcmp(back.grid.data().data(), f.grid.data().data(), 5 * 7 * 3 * sizeof(float)) == 0);
    CHECK(back.mask == f.mask);
    CHECK(io::encode_feature_file(back) == bytes);
  }

  // header fields land where documented, little-endian
  const auto f = random_file(rng, 2, 3, 4, false);
  const auto b = io::encode_feature_file(f);
  CHECK(b[4] == 1);
  CHECK(b[5] == 0);
  CHECK(b[6] == 2);
  CHECK(b[10] == 3);
  CHECK(b[14] == 4);
  float stride;
  std::memcpy(&stride, &b[18], 4);
  CHECK(stride == 3.5f);

  io::FeatureFile n{normalize_descriptors(f.grid).grid, {}};
  CHECK(io::decode_feature_file(io::encode_feature_file(n)).grid.normalized());
}

TEST_CASE("malformed feature files") {
  Rng rng(2);
  const auto good = io::encode_feature_file(random_file(rng, 3, 4, 2, true));

  auto b = good;
  b[0] = 'X';
  CHECK(decode_error(b) == std::pair{ErrorCode::kBadMagic, std::size_t(0)});
  b = good;
  b[4] = 9;
  CHECK(decode_error(b) == std::pair{ErrorCode::kBadVersion, std::size_t(4)});
  CHECK(decode_error({'M', 'R'}).first == ErrorCode::kTruncated);
  CHECK(decode_error(std::vector<std::uint8_t>(good.begin(), good.begin() + 10)).first ==
        ErrorCode::kTruncated);

  b = std::vector<std::uint8_t>(good.begin(), good.end() - 5);
  try {
    io::decode_feature_file(b);
    FAIL("truncated file accepted");
  } catch (const ParseError& e) {
    CHECK(e.code() == ErrorCode::kTruncated);
    const std::string msg = e.what();
    CHECK(msg.find(std::to_string(good.size())) != std::string::npos);
    CHECK(msg.find(std::to_string(b.size())) != std::string::npos);
  }

  b = good;
  put_u32(b, 6, 0x40000000u);
  put_u32(b, 10, 0x40000000u);
  put_u32(b, 14, 0x40000000u);
  CHECK(decode_error(b) == std::pair{ErrorCode::kDimOverflow, std::size_t(6)});

  b = good;
  put_u32(b, 14, 0);
  CHECK(decode_error(b) == std::pair{ErrorCode::kFormat, std::size_t(14)});
  b = good;
  b[22] |= 0x80;
  CHECK(decode_error(b) == std::pair{ErrorCode::kFormat, std::size_t(22)});
  b = good;
  b.push_back(0);
  CHECK(decode_error(b).first == ErrorCode::kFormat);

  b = good;
  b.back() = 7;
  CHECK(decode_error(b) == std::pair{ErrorCode::kMaskMismatch, good.size() - 1});
  // mask flag without the mask block reads as a short payload
  b = std::vector<std::uint8_t>(good.begin(), good.end() - 12);
  CHECK(decode_error(b).first == ErrorCode::kTruncated);

  b = good;
  const float nan = NAN;
  std::memcpy(&b[24 + 8], &nan, 4);
  CHECK(decode_error(b) == std::pair{ErrorCode::kFormat, std::size_t(32)});
}

TEST_CASE("file writes") {
  TempDir dir;
  Rng rng(3);
  const auto f = random_file(rng, 4, 4, 5, true);
  const fs::path p = dir.path / "a.mrcf";
  io::write_feature_file(f, p);
  CHECK_FALSE(fs::exists(p.string() + ".tmp"));
  CHECK(io::read_bytes(p) == io::encode_feature_file(f));
  CHECK(io::read_feature_file(p).mask == f.mask);

  io::write_atomic(p, std::string("replaced"));
  CHECK(io::read_bytes(p).size() == 8);

  try {
    io::read_bytes(dir.path / "missing.mrcf");
    FAIL("missing file read");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
  }
  CHECK_THROWS_AS(io::write_atomic(dir.path / "no" / "such" / "dir.json", std::string("x")), Error);

  io::write_json(dir.path / "j.json", {{"a", 1}});
  CHECK(io::read_json(dir.path / "j.json")["a"] == 1);
  std::ofstream(dir.path / "bad.json") << "{\"a\": ";
  try {
    io::read_json(dir.path / "bad.json");
    FAIL("bad json parsed");
  } catch (const ParseError& e) {
    CHECK(e.code() == ErrorCode::kFormat);
  }
}

TEST_CASE("correspondence JSON") {
  const io::json j = io::json::parse(R"({
    "image_pair": {"src": "a", "tgt": "b", "src_hw": [40, 50], "tgt_hw": [40, 50]},
    "bbox": {"src": [1, 2, 30, 35], "tgt": [3, 4, 31, 36]},
    "pairs": [
      {"sx": 10, "sy": 12, "tx": 11, "ty": 13, "provenance": "annotated"},
      {"sx": 20, "sy": 22, "tx": 21, "ty": 23},
      {"sx": 5, "sy": 6, "tx": 7, "ty": 8, "provenance": "pseudo"}
    ],
    "splits": {"seen": [0], "unseen": [1]}
  })");
  const auto f = io::correspondence_from_json(j);
  CHECK(f.src == "a");
  CHECK(f.src_hw->height == 40);
  CHECK(f.src_hw->width == 50);
  CHECK((*f.bbox_tgt)[3] == 36);
  REQUIRE(f.pairs.size() == 3);
  CHECK(f.pairs[1].provenance == Provenance::kAnnotated);
  CHECK(f.pairs[2].provenance == Provenance::kPseudo);
  const auto anchors = f.anchors();
  REQUIRE(anchors.size() == 1);
  CHECK(anchors[0].src == PixelPoint(10, 12));

  const auto again = io::correspondence_from_json(io::correspondence_to_json(f));
  CHECK(io::correspondence_to_json(again) == io::correspondence_to_json(f));

  io::json no_splits = j;
  no_splits.erase("splits");
  CHECK(io::correspondence_from_json(no_splits).anchors().size() == 2);

  auto rejects = [&](const char* pointer, const io::json& value,
                     ErrorCode code = ErrorCode::kFormat) {
    io::json bad = j;
    bad[io::json::json_pointer(pointer)] = value;
    try {
      io::correspondence_from_json(bad);
    } catch (const Error& e) {
      return e.code() == code;
    }
    return false;
  };
  CHECK(rejects("/pairs/0/sx", 60));
  CHECK(rejects("/pairs/0/ty", -1));
  CHECK(rejects("/pairs/0/sx", "ten"));
  CHECK(rejects("/pairs/0/provenance", "guess"));
  CHECK(rejects("/pairs/1", io::json{{"sx", 10}, {"sy", 12}, {"tx", 11}, {"ty", 13}}));
  CHECK(rejects("/splits/unseen", io::json{0}));
  CHECK(rejects("/splits/seen", io::json{7}));
  CHECK(rejects("/bbox/src", io::json{5, 5, 1, 1}, ErrorCode::kDegenerateRegion));
  CHECK(rejects("/image_pair/src_hw", io::json{40}));
  CHECK_THROWS_AS(io::correspondence_from_json(io::json::array()), Error);
}

TEST_CASE("PCK inputs") {
  const io::json ann = io::json::parse(R"({"images": [
    {"id": "x", "bbox": [0, 0, 100, 50], "keypoints": [
      {"id": 0, "x": 10, "y": 10, "split": "seen"},
      {"id": 1, "x": 20, "y": 20, "split": "unseen"},
      {"id": 2, "x": 30, "y": 30, "split": "unseen"}]},
    {"id": "y", "keypoints": [
      {"id": 0, "x": 0, "y": 0}, {"id": 1, "x": 40, "y": 30}]}
  ]})");
  const io::json pred = io::json::parse(R"({"images": [
    {"id": "x", "keypoints": [{"id": 0, "x": 10, "y": 10}, {"id": 1, "x": 29, "y": 20},
                              {"id": 2, "x": 30, "y": 30}]},
    {"id": "y", "keypoints": [{"id": 0, "x": 0, "y": 0}, {"id": 1, "x": 40, "y": 30}]}
  ]})");
  const auto in = io::pck_inputs_from_json(pred, ann);
  std::map<std::string, std::vector<PckRecord>> splits(in.splits.begin(), in.splits.end());
  REQUIRE(splits.count("all"));
  REQUIRE(splits.count("seen"));
  REQUIRE(splits.count("unseen"));
  CHECK(splits["all"].size() == 2);
  const PckRecord& x = splits["all"][0];
  CHECK(x.bbox_w == 100);
  CHECK(x.bbox_h == 50);
  // y has no box: the keypoint extent stands in
  CHECK(splits["all"][1].bbox_w == 40);
  CHECK(splits["all"][1].bbox_h == 30);
  // error 9 px against 0.10 * 100
  CHECK(pck_aggregate(splits["unseen"], {0.10})[0] == 100.0);
  CHECK(pck_aggregate(splits["unseen"], {0.05})[0] == 50.0);

  io::json missing = pred;
  missing["images"][0]["keypoints"].erase(2);
  CHECK_THROWS_AS(io::pck_inputs_from_json(missing, ann), Error);
  io::json dup = ann;
  dup["images"][1]["id"] = "x";
  CHECK_THROWS_AS(io::pck_inputs_from_json(pred, dup), Error);
}

TEST_CASE("scene spec JSON") {
  SceneSpec s;
  s.rows = 20;
  s.noise = 0.5;
  s.symmetric = false;
  const auto back = io::spec_from_json(io::spec_to_json(s));
  CHECK(io::spec_to_json(back) == io::spec_to_json(s));
  CHECK(back.rows == 20);
  CHECK_FALSE(back.symmetric);
  CHECK(io::spec_from_json(io::json::object()).rows == SceneSpec{}.rows);
  CHECK_THROWS_AS(io::spec_from_json({{"rowz", 3}}), Error);
  CHECK_THROWS_AS(io::spec_from_json({{"n_seen", 1}}), Error);
  CHECK_THROWS_AS(io::spec_from_json({{"rows", "many"}}), Error);
}
