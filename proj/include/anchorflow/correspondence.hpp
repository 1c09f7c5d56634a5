#pragma once

#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "anchorflow/grid.hpp"

namespace anchorflow {

enum class Provenance { kAnnotated, kMnn, kPseudo };

constexpr std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kAnnotated: return "annotated";
    case Provenance::kMnn: return "mnn";
    case Provenance::kPseudo: return "pseudo";
  }
  return "unknown";
}

inline Provenance provenance_from_string(std::string_view s) {
  if (s == "annotated") return Provenance::kAnnotated;
  if (s == "mnn") return Provenance::kMnn;
  if (s == "pseudo") return Provenance::kPseudo;
  fail(ErrorCode::kFormat, "unknown provenance '" + std::string(s) + "'");
}

struct Correspondence {
  PixelPoint src;
  PixelPoint tgt;
  Provenance provenance = Provenance::kAnnotated;
};

/// Ordered list of (source, target) pixel pairs without exact duplicates.
class CorrespondenceSet {
 public:
  CorrespondenceSet() = default;

  /// Returns false (and keeps the set unchanged) for an exact duplicate pair.
  bool add(const PixelPoint& src, const PixelPoint& tgt, Provenance provenance) {
    if (!is_finite(src) || !is_finite(tgt))
      fail(ErrorCode::kInvalidInput, "correspondence with non-finite point");
    if (!keys_.emplace(src.x(), src.y(), tgt.x(), tgt.y()).second) return false;
    pairs_.push_back({src, tgt, provenance});
    return true;
  }
  bool add(const Correspondence& c) { return add(c.src, c.tgt, c.provenance); }

  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  const Correspondence& operator[](std::size_t i) const { return pairs_[i]; }
  const std::vector<Correspondence>& pairs() const { return pairs_; }
  auto begin() const { return pairs_.begin(); }
  auto end() const { return pairs_.end(); }

  std::size_t count(Provenance p) const {
    std::size_t n = 0;
    for (const auto& c : pairs_) n += c.provenance == p;
    return n;
  }

 private:
  std::vector<Correspondence> pairs_;
  std::set<std::tuple<double, double, double, double>> keys_;
};

}  // namespace anchorflow
