#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "tuckerdiff/dataset_io.hpp"
#include "tuckerdiff/error.hpp"

using namespace tucker;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "tuckerdiff_io_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<unsigned char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint64_t le_u64(const std::vector<unsigned char>& b, std::size_t off) {
  std::uint64_t v = 0;
  for (int k = 7; k >= 0; --k) v = (v << 8) | b[off + static_cast<std::size_t>(k)];
  return v;
}

}  // namespace

TEST(DatasetIo, ByteLayout) {
  Dataset d;
  d.samples.push_back(DenseTensor(Shape{2, 2}, {1.0, -2.5, 3.25, 0.0}));
  const fs::path p = temp_path("layout.ten");
  io::write_dataset(d, p);
  const auto b = read_bytes(p);
  ASSERT_EQ(b.size(), 62u);
  EXPECT_EQ(io::file_bytes(std::vector<std::size_t>{1, 2, 2}, io::Dtype::kFloat64), 62u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "TEN1");
  EXPECT_EQ(b[4], 1);  // dtype
  EXPECT_EQ(b[5], 3);  // ndim
  EXPECT_EQ(le_u64(b, 6), 1u);
  EXPECT_EQ(le_u64(b, 14), 2u);
  EXPECT_EQ(le_u64(b, 22), 2u);
  const double expect[4] = {1.0, -2.5, 3.25, 0.0};
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(std::bit_cast<double>(le_u64(b, 30 + 8 * k)), expect[k]);
}

TEST(DatasetIo, Float64RoundTripBitwise) {
  Rng rng(1);
  Dataset d = test::random_dataset(Shape{3, 4, 2}, 7, rng);
  d.samples[0][0] = -0.0;
  d.samples[0][1] = 1e-310;
  d.samples[0][2] = std::numeric_limits<double>::max();
  const fs::path p = temp_path("rt64.ten");
  io::write_dataset(d, p);
  const Dataset back = io::read_dataset(p);
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t k = 0; k < d.samples[i].size(); ++k)
      EXPECT_EQ(std::bit_cast<std::uint64_t>(back.samples[i][k]), std::bit_cast<std::uint64_t>(d.samples[i][k]));
}

TEST(DatasetIo, Float32RoundTripQuantized) {
  Rng rng(2);
  const Dataset d = test::random_dataset(Shape{5, 3}, 4, rng);
  const fs::path p = temp_path("rt32.ten");
  io::write_dataset(d, p, io::Dtype::kFloat32);
  EXPECT_EQ(fs::file_size(p), io::file_bytes(std::vector<std::size_t>{4, 5, 3}, io::Dtype::kFloat32));
  const Dataset back = io::read_dataset(p);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t k = 0; k < d.samples[i].size(); ++k)
      EXPECT_EQ(back.samples[i][k], static_cast<double>(static_cast<float>(d.samples[i][k])));
}

TEST(DatasetIo, TensorRoundTrip) {
  Rng rng(3);
  const DenseTensor x = sample_standard_normal(Shape{4, 6}, rng);
  const fs::path p = temp_path("tensor.ten");
  io::write_tensor(x, p);
  EXPECT_EQ(io::read_tensor(p), x);
}

TEST(DatasetIo, Errors) {
  const fs::path bad = temp_path("bad.ten");
  {
    std::ofstream out(bad, std::ios::binary);
    out << "NOPE and some more bytes to fill a header";
  }
  try {
    io::read_dataset(bad);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("not a TEN1 file"), std::string::npos);
  }
  Rng rng(4);
  const fs::path good = temp_path("trunc.ten");
  io::write_dataset(test::random_dataset(Shape{3, 3}, 2, rng), good);
  fs::resize_file(good, fs::file_size(good) - 5);
  try {
    io::read_dataset(good);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
  const fs::path one = temp_path("vector.ten");
  io::write_tensor(DenseTensor(Shape{4}, 1.0), one);
  EXPECT_THROW(io::read_dataset(one), IoError);
  EXPECT_THROW(io::read_tensor(temp_path("does_not_exist.ten")), IoError);
}

TEST(DatasetIo, MetricsCsv) {
  const fs::path p = temp_path("m.csv");
  io::write_metrics_csv({"D", "CFD"}, {}, p);
  auto b = read_bytes(p);
  EXPECT_EQ(std::string(b.begin(), b.end()), "D,CFD\n");

  std::vector<io::MetricRecord> rows{io::MetricRecord{}.add("D", 0.0).add("CFD", 0.0)};
  io::write_metrics_csv({"D", "CFD"}, rows, p);
  b = read_bytes(p);
  const std::string text(b.begin(), b.end());
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);

  rows = {io::MetricRecord{}.add("model", std::string("net-warm")).add("D", 0.123456789012345).add("CFD", 1.5e-7),
          io::MetricRecord{}.add("model", std::string("oracle")).add("D", -3.25).add("CFD", 12345.678)};
  io::write_metrics_csv({"model", "D", "CFD"}, rows, p);
  const auto back = io::read_metrics_csv(p);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(std::get<std::string>(*back[i].find("model")), std::get<std::string>(*rows[i].find("model")));
    for (const char* k : {"D", "CFD"}) EXPECT_NEAR(back[i].number(k), rows[i].number(k), 1e-9 * std::abs(rows[i].number(k)));
  }
  EXPECT_EQ(io::format_number(0.5), "0.5");
}
