#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hmap/analysis.hpp"
#include "hmap/mask.hpp"

namespace hmap::io {

namespace fs = std::filesystem;

class IoError : public Error {
 public:
  using Error::Error;
};

inline constexpr std::array<char, 8> kCgridMagic{'C', 'G', 'R', 'I', 'D', '\0', '\0', '\1'};

inline std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes to a sibling temp file and renames it over the target, so readers
/// never see a partial file.
inline void write_atomic(const fs::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

// ---------------------------------------------------------------------------
// .cgrid
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64le(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_le(std::string_view bytes, std::size_t pos, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string encode_cgrid(const ImageGrid& image) {
  nlohmann::json header{{"height", image.height()}, {"width", image.width()}, {"dtype", "c128"}, {"order", "row-major"}};
  const auto text = header.dump();
  std::string out(kCgridMagic.begin(), kCgridMagic.end());
  detail::put_u32le(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  out.reserve(out.size() + 16 * image.size());
  for (const auto& z : image.data()) {
    detail::put_f64le(out, z.real());
    detail::put_f64le(out, z.imag());
  }
  return out;
}

inline ImageGrid decode_cgrid(std::string_view bytes) {
  if (bytes.size() < 8) throw FormatError("truncated magic", bytes.size());
  for (std::size_t i = 0; i < 8; ++i)
    if (bytes[i] != kCgridMagic[i]) throw FormatError("bad cgrid magic", i);
  if (bytes.size() < 12) throw FormatError("truncated header length", bytes.size());
  const auto hlen = static_cast<std::size_t>(detail::get_le(bytes, 8, 4));
  if (bytes.size() < 12 + hlen) throw FormatError("truncated header", bytes.size());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(12, hlen));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("malformed header JSON: ") + e.what(), 12 + e.byte);
  }
  std::size_t h = 0, w = 0;
  try {
    h = header.at("height").get<std::size_t>();
    w = header.at("width").get<std::size_t>();
    if (header.at("dtype").get<std::string>() != "c128") throw FormatError("unsupported dtype", 12);
    if (header.at("order").get<std::string>() != "row-major") throw FormatError("unsupported order", 12);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid header: ") + e.what(), 12);
  }
  if (h == 0 || w == 0) throw FormatError("empty grid", 12);
  const std::size_t start = 12 + hlen;
  const std::size_t need = start + 16 * h * w;
  if (bytes.size() < need) throw FormatError("truncated payload", bytes.size());
  if (bytes.size() > need) throw FormatError("trailing bytes after payload", need);
  ImageGrid img(h, w);
  for (std::size_t i = 0; i < h * w; ++i) {
    std::uint64_t re = detail::get_le(bytes, start + 16 * i, 8), im = detail::get_le(bytes, start + 16 * i + 8, 8);
    double dr, di;
    std::memcpy(&dr, &re, 8);
    std::memcpy(&di, &im, 8);
    img[i] = Complex{dr, di};
  }
  return img;
}

inline void write_cgrid(const fs::path& path, const ImageGrid& image) { write_atomic(path, encode_cgrid(image)); }

inline ImageGrid read_cgrid(const fs::path& path) { return decode_cgrid(read_bytes(path)); }

/// Measurements are stored as a (sampled rows x width) grid.
inline ImageGrid measurement_grid(std::span<const Complex> meas, const MaskSpec& mask) {
  if (meas.size() != mask.sample_count())
    throw DimensionError("measurement length " + std::to_string(meas.size()) + " does not match mask sample count " +
                         std::to_string(mask.sample_count()));
  return ImageGrid(mask.sampled_rows().size(), mask.width(), std::vector<Complex>(meas.begin(), meas.end()));
}

inline Measurement grid_measurement(const ImageGrid& grid, const MaskSpec& mask) {
  if (grid.height() != mask.sampled_rows().size() || grid.width() != mask.width())
    throw DimensionError("measurement grid " + shape_string(grid.height(), grid.width()) + " does not match mask (" +
                         std::to_string(mask.sampled_rows().size()) + " sampled rows, width " +
                         std::to_string(mask.width()) + ")");
  return grid.values();
}

// ---------------------------------------------------------------------------
// PGM
// ---------------------------------------------------------------------------

/// Binary PGM (P5). Samples are divided by maxval, so a 16-bit file with
/// maxval 65535 maps to [0, 1].
inline ImageGrid decode_pgm(std::string_view bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip_space();
    const std::size_t start = pos;
    std::uint64_t v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::uint64_t>(bytes[pos] - '0');
      if (v > (1u << 30)) throw FormatError(std::string("PGM ") + what + " too large", start);
      ++pos;
    }
    if (pos == start) throw FormatError(std::string("expected PGM ") + what, start);
    return static_cast<std::size_t>(v);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError("not a binary PGM (P5)", 0);
  pos = 2;
  const auto w = number("width");
  const auto h = number("height");
  const auto maxval = number("maxval");
  if (w == 0 || h == 0) throw FormatError("empty PGM", pos);
  if (maxval == 0 || maxval > 65535) throw FormatError("PGM maxval out of range", pos);
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw FormatError("missing whitespace before PGM raster", pos);
  ++pos;
  const std::size_t bps = maxval > 255 ? 2 : 1;
  if (bytes.size() - pos < bps * w * h) throw FormatError("truncated PGM raster", bytes.size());
  ImageGrid img(h, w);
  for (std::size_t i = 0; i < h * w; ++i) {
    std::size_t v = static_cast<unsigned char>(bytes[pos + bps * i]);
    if (bps == 2) v = (v << 8) | static_cast<unsigned char>(bytes[pos + 2 * i + 1]);
    if (v > maxval) throw FormatError("PGM sample exceeds maxval", pos + bps * i);
    img[i] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return img;
}

inline std::string encode_pgm16(const ImageGrid& image) {
  std::string out = "P5\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n65535\n";
  for (const auto& z : image.data()) {
    const double v = std::clamp(z.real(), 0.0, 1.0);
    const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0));
    out.push_back(static_cast<char>(q >> 8));
    out.push_back(static_cast<char>(q & 0xFF));
  }
  return out;
}

/// Reads a .cgrid or binary PGM, chosen by the file's leading bytes.
inline ImageGrid ingest_external(const fs::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes);
  return decode_cgrid(bytes);
}

// ---------------------------------------------------------------------------
// Directory listing, JSON and CSV
// ---------------------------------------------------------------------------

struct InputFile {
  std::string image_id;  ///< filename stem
  fs::path path;
};

/// Regular files in `dir` whose extension is in `extensions`, sorted by name.
/// No recursion.
inline std::vector<InputFile> list_inputs(const fs::path& dir, const std::vector<std::string>& extensions) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<InputFile> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (std::find(extensions.begin(), extensions.end(), ext) == extensions.end()) continue;
    out.push_back({entry.path().stem().string(), entry.path()});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.path.filename() < b.path.filename(); });
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i].image_id == out[i - 1].image_id)
      throw IoError("duplicate image_id '" + out[i].image_id + "' in " + dir.string());
  return out;
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_atomic(path, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const fs::path& path) {
  const auto text = read_bytes(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
}

/// Shortest decimal that round-trips, so CSV values are exact and stable.
inline std::string fmt_double(double v) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string fmt_optional(const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); }

inline std::string regions_csv(std::span<const CentroidRow> rows) {
  std::string out = "image_id,component_id,centroid_row,centroid_col,area\n";
  for (const auto& r : rows)
    out += r.image_id + "," + std::to_string(r.component_id) + "," + fmt_double(r.centroid_row) + "," +
           fmt_double(r.centroid_col) + "," + std::to_string(r.area) + "\n";
  return out;
}

inline std::vector<CentroidRow> region_rows(const std::string& image_id, std::span<const Region> regions) {
  std::vector<CentroidRow> rows;
  for (std::size_t k = 0; k < regions.size(); ++k)
    rows.push_back({image_id, k, regions[k].centroid_row, regions[k].centroid_col, regions[k].area});
  return rows;
}

struct SsimTableRow {
  std::string image_id;
  std::string method;
  RegionSsim value;
};

inline std::string ssim_table_csv(std::span<const SsimTableRow> rows) {
  std::string out = "image_id,method,region_mean,background_mean,global\n";
  for (const auto& r : rows)
    out += r.image_id + "," + r.method + "," + fmt_optional(r.value.region_mean) + "," +
           fmt_optional(r.value.background_mean) + "," + fmt_double(r.value.global) + "\n";
  return out;
}

inline std::string pdf_csv(std::span<const PdfBin> bins) {
  std::string out = "bin_left,bin_right,density\n";
  for (const auto& b : bins) out += fmt_double(b.left) + "," + fmt_double(b.right) + "," + fmt_double(b.density) + "\n";
  return out;
}

inline std::string median_table_csv(std::span<const MedianCell> cells) {
  std::string out = "method,distribution,median,count\n";
  for (const auto& c : cells)
    out += c.method + "," + c.distribution + "," + fmt_double(c.median) + "," + std::to_string(c.count) + "\n";
  return out;
}

}  // namespace hmap::io
