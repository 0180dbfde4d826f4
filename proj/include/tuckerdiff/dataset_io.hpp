#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tuckerdiff/dataset.hpp"
#include "tuckerdiff/tensor.hpp"

namespace tucker::io {

// TEN1 container, all integers little-endian:
//   bytes 0..3  magic "TEN1"
//   byte  4     dtype (0 = float32, 1 = float64)
//   byte  5     ndim
//   ndim × u64  dims
//   payload     row-major IEEE-754 values, Π dims of them
// Datasets put the sample index on the leading axis (ndim >= 2).
enum class Dtype : std::uint8_t { kFloat32 = 0, kFloat64 = 1 };

inline constexpr char kMagic[4] = {'T', 'E', 'N', '1'};

std::size_t header_bytes(std::size_t ndim);
std::size_t file_bytes(std::span<const std::size_t> dims, Dtype dtype);

void write_tensor(const DenseTensor& x, const std::filesystem::path& path, Dtype dtype = Dtype::kFloat64);
DenseTensor read_tensor(const std::filesystem::path& path);

void write_dataset(const Dataset& data, const std::filesystem::path& path, Dtype dtype = Dtype::kFloat64);
Dataset read_dataset(const std::filesystem::path& path);

using MetricValue = std::variant<double, std::string>;

/// Ordered named fields; one CSV row.
struct MetricRecord {
  std::vector<std::pair<std::string, MetricValue>> fields;

  MetricRecord& add(std::string name, MetricValue value) {
    fields.emplace_back(std::move(name), std::move(value));
    return *this;
  }
  const MetricValue* find(const std::string& name) const;
  double number(const std::string& name) const;
};

/// Header row then one line per record. Numbers are written with 10
/// significant digits independent of the C locale.
void write_metrics_csv(const std::vector<std::string>& columns, std::span<const MetricRecord> rows,
                       const std::filesystem::path& path);
std::vector<MetricRecord> read_metrics_csv(const std::filesystem::path& path);

std::string format_number(double v);

}  // namespace tucker::io
