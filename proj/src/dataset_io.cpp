#include "tuckerdiff/dataset_io.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace tucker::io {

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

template <typename T, typename U>
void put_float(std::string& out, double value) {
  const T f = static_cast<T>(value);
  U bits;
  std::memcpy(&bits, &f, sizeof bits);
  for (std::size_t i = 0; i < sizeof bits; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename T, typename U>
double get_float(const unsigned char* p) {
  U bits = 0;
  for (int i = static_cast<int>(sizeof bits) - 1; i >= 0; --i) bits = (bits << 8) | p[i];
  T f;
  std::memcpy(&f, &bits, sizeof f);
  return static_cast<double>(f);
}

std::size_t dtype_size(Dtype d) { return d == Dtype::kFloat32 ? 4 : 8; }

std::string encode(std::span<const std::size_t> dims, std::span<const double> values, Dtype dtype) {
  if (dims.size() > 255) throw ValidationError("TEN1 supports at most 255 dimensions");
  std::string out;
  out.reserve(file_bytes(dims, dtype));
  out.append(kMagic, 4);
  out.push_back(static_cast<char>(dtype));
  out.push_back(static_cast<char>(dims.size()));
  for (std::size_t d : dims) put_u64(out, d);
  for (double v : values) {
    if (dtype == Dtype::kFloat32)
      put_float<float, std::uint32_t>(out, v);
    else
      put_float<double, std::uint64_t>(out, v);
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

struct Decoded {
  std::vector<std::size_t> dims;
  std::vector<double> values;
};

Decoded decode(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  const std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());

  if (raw.size() < 6 || std::memcmp(raw.data(), kMagic, 4) != 0)
    throw IoError(path.string() + ": not a TEN1 file");
  const auto dtype = static_cast<Dtype>(p[4]);
  if (p[4] > 1) throw IoError(path.string() + ": unknown TEN1 dtype " + std::to_string(p[4]));
  const std::size_t ndim = p[5];
  if (ndim == 0) throw IoError(path.string() + ": TEN1 header has ndim 0");
  if (raw.size() < header_bytes(ndim)) throw IoError(path.string() + ": truncated TEN1 header");

  Decoded out;
  std::size_t count = 1;
  for (std::size_t k = 0; k < ndim; ++k) {
    const std::uint64_t d = get_u64(p + 6 + 8 * k);
    if (d == 0) throw IoError(path.string() + ": TEN1 dimension is zero");
    if (count > std::numeric_limits<std::size_t>::max() / 8 / d)
      throw IoError(path.string() + ": TEN1 dims overflow");
    count *= d;
    out.dims.push_back(static_cast<std::size_t>(d));
  }
  const std::size_t need = header_bytes(ndim) + count * dtype_size(dtype);
  if (raw.size() < need)
    throw IoError(path.string() + ": truncated TEN1 payload (" + std::to_string(raw.size()) + " of " +
                  std::to_string(need) + " bytes)");
  if (raw.size() > need) throw IoError(path.string() + ": trailing bytes after TEN1 payload");

  out.values.resize(count);
  const unsigned char* payload = p + header_bytes(ndim);
  for (std::size_t i = 0; i < count; ++i) {
    out.values[i] = dtype == Dtype::kFloat32 ? get_float<float, std::uint32_t>(payload + 4 * i)
                                             : get_float<double, std::uint64_t>(payload + 8 * i);
  }
  return out;
}

}  // namespace

std::size_t header_bytes(std::size_t ndim) { return 4 + 1 + 1 + 8 * ndim; }

std::size_t file_bytes(std::span<const std::size_t> dims, Dtype dtype) {
  std::size_t count = 1;
  for (std::size_t d : dims) count *= d;
  return header_bytes(dims.size()) + count * dtype_size(dtype);
}

void write_tensor(const DenseTensor& x, const std::filesystem::path& path, Dtype dtype) {
  write_file(path, encode(x.shape().dims(), x.data(), dtype));
}

DenseTensor read_tensor(const std::filesystem::path& path) {
  Decoded d = decode(path);
  return DenseTensor(Shape(std::move(d.dims)), std::move(d.values));
}

void write_dataset(const Dataset& data, const std::filesystem::path& path, Dtype dtype) {
  data.validate();
  std::vector<std::size_t> dims{data.size()};
  for (std::size_t d : data.sample_shape().dims()) dims.push_back(d);
  std::vector<double> flat;
  flat.reserve(data.size() * data.sample_shape().total());
  for (const DenseTensor& s : data.samples) flat.insert(flat.end(), s.data().begin(), s.data().end());
  write_file(path, encode(dims, flat, dtype));
}

Dataset read_dataset(const std::filesystem::path& path) {
  Decoded d = decode(path);
  if (d.dims.size() < 2)
    throw IoError(path.string() + ": TEN1 dataset needs ndim >= 2 (sample axis first)");
  const std::size_t n = d.dims.front();
  const Shape shape(std::vector<std::size_t>(d.dims.begin() + 1, d.dims.end()));
  Dataset out;
  out.samples.reserve(n);
  const std::size_t stride = shape.total();
  for (std::size_t i = 0; i < n; ++i) {
    out.samples.emplace_back(shape, std::vector<double>(d.values.begin() + static_cast<std::ptrdiff_t>(i * stride),
                                                        d.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * stride)));
  }
  out.meta.provenance = "external";
  out.meta.split = path.stem().string();
  return out;
}

const MetricValue* MetricRecord::find(const std::string& name) const {
  for (const auto& [k, v] : fields)
    if (k == name) return &v;
  return nullptr;
}

double MetricRecord::number(const std::string& name) const {
  const MetricValue* v = find(name);
  if (!v || !std::holds_alternative<double>(*v)) throw ValidationError("metric record has no number '" + name + "'");
  return std::get<double>(*v);
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 10);
  return std::string(buf, res.ptr);
}

namespace {

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        in_quotes = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

MetricValue parse_cell(const std::string& cell) {
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec == std::errc() && res.ptr == cell.data() + cell.size() && !cell.empty()) return v;
  return cell;
}

}  // namespace

void write_metrics_csv(const std::vector<std::string>& columns, std::span<const MetricRecord> rows,
                       const std::filesystem::path& path) {
  std::ostringstream os;
  for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << quote(columns[c]);
  os << '\n';
  for (const MetricRecord& row : rows) {
    if (row.fields.size() != columns.size())
      throw ValidationError("metric record has " + std::to_string(row.fields.size()) + " fields, expected " +
                            std::to_string(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (row.fields[c].first != columns[c])
        throw ValidationError("metric record field '" + row.fields[c].first + "' does not match column '" +
                              columns[c] + "'");
      if (c) os << ',';
      const MetricValue& v = row.fields[c].second;
      if (std::holds_alternative<double>(v))
        os << format_number(std::get<double>(v));
      else
        os << quote(std::get<std::string>(v));
    }
    os << '\n';
  }
  write_file(path, os.str());
}

std::vector<MetricRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw IoError(path.string() + ": empty CSV");
  const std::vector<std::string> columns = split_csv_line(line);
  std::vector<MetricRecord> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != columns.size()) throw IoError(path.string() + ": ragged CSV row");
    MetricRecord r;
    for (std::size_t c = 0; c < cells.size(); ++c) r.add(columns[c], parse_cell(cells[c]));
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace tucker::io
