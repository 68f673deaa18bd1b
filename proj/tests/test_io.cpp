#include <random>

#include <gtest/gtest.h>

#include "hmap/io.hpp"
#include "test_support.hpp"

using namespace hmap;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("hmap_test_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Cgrid, LayoutIsExact) {
  ImageGrid img(1, 2);
  img[0] = Complex{1.0, -2.0};
  img[1] = Complex{0.5, 0.0};
  const auto bytes = io::encode_cgrid(img);
  ASSERT_EQ(bytes.substr(0, 8), std::string("CGRID\0\0\1", 8));
  const std::string header = R"({"dtype":"c128","height":1,"order":"row-major","width":2})";
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), header.size());
  EXPECT_EQ(bytes[9], 0);
  EXPECT_EQ(bytes.substr(12, header.size()), header);
  ASSERT_EQ(bytes.size(), 12 + header.size() + 32);
  // 1.0 = 0x3FF0000000000000 little-endian.
  const auto p = 12 + header.size();
  EXPECT_EQ(static_cast<unsigned char>(bytes[p + 7]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(bytes[p + 6]), 0xF0);
  // -2.0 = 0xC000000000000000.
  EXPECT_EQ(static_cast<unsigned char>(bytes[p + 15]), 0xC0);
}

TEST(Cgrid, RoundTripThroughFile) {
  std::mt19937_64 gen(1);
  auto img = hmap::testing::random_image(7, 5, gen);
  img[3] = Complex{-0.0, 1e-310};
  auto dir = scratch_dir("roundtrip");
  io::write_cgrid(dir / "a.cgrid", img);
  EXPECT_FALSE(fs::exists(dir / "a.cgrid.tmp"));
  auto back = io::ingest_external(dir / "a.cgrid");
  EXPECT_EQ(back, img);
  EXPECT_EQ(io::encode_cgrid(back), io::encode_cgrid(img));
}

TEST(Cgrid, MalformedFilesReportOffsets) {
  ImageGrid img(3, 3);
  const auto good = io::encode_cgrid(img);
  try {
    io::decode_cgrid(good.substr(0, good.size() - 5));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), good.size() - 5);
  }
  auto bad_magic = good;
  bad_magic[3] = 'X';
  try {
    io::decode_cgrid(bad_magic);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 3u);
  }
  EXPECT_THROW(io::decode_cgrid(good.substr(0, 6)), FormatError);
  EXPECT_THROW(io::decode_cgrid(good.substr(0, 20)), FormatError);
  EXPECT_THROW(io::decode_cgrid(good + "x"), FormatError);
  auto bad_json = good;
  bad_json[12] = '[';
  EXPECT_THROW(io::decode_cgrid(bad_json), FormatError);
}

TEST(Pgm, SixteenBitScaling) {
  std::string bytes = "P5\n# comment\n2 2\n65535\n";
  for (std::uint16_t v : {0, 65535, 65535, 0}) {
    bytes.push_back(static_cast<char>(v >> 8));
    bytes.push_back(static_cast<char>(v & 0xFF));
  }
  auto dir = scratch_dir("pgm");
  io::write_atomic(dir / "p.pgm", bytes);
  auto img = io::ingest_external(dir / "p.pgm");
  ASSERT_EQ(img.height(), 2u);
  EXPECT_EQ(img[0], Complex(0.0, 0.0));
  EXPECT_EQ(img[1], Complex(1.0, 0.0));
  EXPECT_EQ(img[2], Complex(1.0, 0.0));
  EXPECT_EQ(img[3], Complex(0.0, 0.0));
  EXPECT_EQ(io::decode_pgm(io::encode_pgm16(img)), img);
}

TEST(Pgm, Errors) {
  EXPECT_THROW(io::decode_pgm("P2\n1 1\n255\n0"), FormatError);
  EXPECT_THROW(io::decode_pgm("P5\n2 2\n65535\n\x01"), FormatError);
  EXPECT_THROW(io::decode_pgm("P5\n2 2\n70000\n"), FormatError);
  EXPECT_THROW(io::decode_pgm("P5\nx 2\n255\n"), FormatError);
  std::string over = "P5\n1 1\n1000\n";
  over += '\xFF';
  over += '\xFF';
  EXPECT_THROW(io::decode_pgm(over), FormatError);
}

TEST(Io, MissingFileIsIoError) {
  EXPECT_THROW(io::ingest_external("/nonexistent/hmap/x.cgrid"), io::IoError);
}

TEST(Io, ListInputsIsSortedAndFlat) {
  auto dir = scratch_dir("list");
  fs::create_directories(dir / "sub");
  io::write_cgrid(dir / "sub" / "z.cgrid", ImageGrid(1, 1));
  io::write_cgrid(dir / "b.cgrid", ImageGrid(1, 1));
  io::write_cgrid(dir / "a.cgrid", ImageGrid(1, 1));
  io::write_atomic(dir / "notes.txt", "x");
  auto files = io::list_inputs(dir, {".cgrid", ".pgm"});
  ASSERT_EQ(files.size(), 2u);
  EXPECT_EQ(files[0].image_id, "a");
  EXPECT_EQ(files[1].image_id, "b");
  io::write_atomic(dir / "a.pgm", io::encode_pgm16(ImageGrid(1, 1)));
  EXPECT_THROW(io::list_inputs(dir, {".cgrid", ".pgm"}), io::IoError);
}

TEST(Io, MeasurementGridShape) {
  auto mask = make_uniform_mask(9, 4, 3, 1);
  Measurement g(mask.sample_count());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = Complex{double(i), 0.0};
  auto grid = io::measurement_grid(g, mask);
  EXPECT_EQ(grid.height(), 3u);
  EXPECT_EQ(grid.width(), 4u);
  EXPECT_EQ(io::grid_measurement(grid, mask), g);
  EXPECT_THROW(io::grid_measurement(ImageGrid(4, 4), mask), DimensionError);
}

TEST(Csv, FormatsAndHeaders) {
  EXPECT_EQ(io::fmt_double(0.1), "0.1");
  EXPECT_EQ(io::fmt_double(1.0 / 3.0), "0.3333333333333333");
  EXPECT_EQ(std::strtod(io::fmt_double(1.0 / 3.0).c_str(), nullptr), 1.0 / 3.0);
  EXPECT_EQ(io::regions_csv({}), "image_id,component_id,centroid_row,centroid_col,area\n");
  std::vector<CentroidRow> rows{{"img", 0, 1.5, 2.0, 120}};
  EXPECT_EQ(io::regions_csv(rows), "image_id,component_id,centroid_row,centroid_col,area\nimg,0,1.5,2,120\n");
  std::vector<io::SsimTableRow> s{{"img", "tp", RegionSsim{std::nullopt, 0.5, 0.25}}};
  EXPECT_EQ(io::ssim_table_csv(s), "image_id,method,region_mean,background_mean,global\nimg,tp,,0.5,0.25\n");
  std::vector<PdfBin> bins{{0.0, 0.5, 2.0}};
  EXPECT_EQ(io::pdf_csv(bins), "bin_left,bin_right,density\n0,0.5,2\n");
}
