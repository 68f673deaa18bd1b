#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "hmap/image.hpp"

namespace hmap {

/// Binary k-space row-sampling pattern. Row indices refer to DC-first
/// (unshifted) k-space ordering. factor/offset are zero for masks that were
/// not produced by make_uniform_mask.
class MaskSpec {
 public:
  MaskSpec() = default;

  MaskSpec(std::size_t height, std::size_t width, std::vector<std::size_t> sampled_rows,
           std::size_t factor = 0, std::size_t offset = 0)
      : height_(height), width_(width), rows_(std::move(sampled_rows)), factor_(factor), offset_(offset) {
    if (height == 0 || width == 0) throw DimensionError("mask dimensions must be positive");
    if (rows_.empty()) throw ParameterError("mask must sample at least one row");
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      if (rows_[i] >= height) throw ParameterError("mask row " + std::to_string(rows_[i]) + " out of range");
      if (i > 0 && rows_[i] <= rows_[i - 1]) throw ParameterError("mask rows must be strictly increasing");
    }
    row_used_.assign(height, false);
    for (auto r : rows_) row_used_[r] = true;
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  const std::vector<std::size_t>& sampled_rows() const noexcept { return rows_; }
  std::size_t factor() const noexcept { return factor_; }
  std::size_t offset() const noexcept { return offset_; }

  bool is_sampled(std::size_t row) const { return row_used_.at(row); }

  /// Number of retained k-space samples (range dimension of the operator).
  std::size_t sample_count() const noexcept { return rows_.size() * width_; }

  friend bool operator==(const MaskSpec& a, const MaskSpec& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.rows_ == b.rows_ && a.factor_ == b.factor_ &&
           a.offset_ == b.offset_;
  }

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::size_t> rows_;
  std::vector<bool> row_used_;
  std::size_t factor_ = 0;
  std::size_t offset_ = 0;
};

/// Samples rows {offset, offset + factor, ...}. factor 1 is full sampling.
inline MaskSpec make_uniform_mask(std::size_t height, std::size_t width, std::size_t factor, std::size_t offset) {
  if (factor < 1) throw ParameterError("undersampling factor must be >= 1");
  if (factor > height) throw ParameterError("undersampling factor exceeds image height");
  if (offset >= factor) throw ParameterError("mask offset must be smaller than the factor");
  std::vector<std::size_t> rows;
  for (std::size_t r = offset; r < height; r += factor) rows.push_back(r);
  return MaskSpec(height, width, std::move(rows), factor, offset);
}

inline nlohmann::json to_json(const MaskSpec& m) {
  return nlohmann::json{{"height", m.height()},
                        {"width", m.width()},
                        {"sampled_rows", m.sampled_rows()},
                        {"factor", m.factor()},
                        {"offset", m.offset()}};
}

inline MaskSpec mask_from_json(const nlohmann::json& j) {
  try {
    return MaskSpec(j.at("height").get<std::size_t>(), j.at("width").get<std::size_t>(),
                    j.at("sampled_rows").get<std::vector<std::size_t>>(), j.value("factor", std::size_t{0}),
                    j.value("offset", std::size_t{0}));
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("invalid mask JSON: ") + e.what());
  }
}

}  // namespace hmap
