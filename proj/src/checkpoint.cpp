#include "tuckerdiff/checkpoint.hpp"

#include <bit>
#include <fstream>

#include <nlohmann/json.hpp>

#include "tuckerdiff/dataset_io.hpp"

namespace tucker {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

DenseTensor matrix_to_tensor(const Matrix& m) {
  DenseTensor t(Shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  return t;
}

Matrix tensor_to_matrix(const DenseTensor& t, Eigen::Index rows, Eigen::Index cols) {
  if (t.order() != 2 || t.shape()[0] != static_cast<std::size_t>(rows) || t.shape()[1] != static_cast<std::size_t>(cols))
    throw IoError("checkpoint tensor has shape " + to_string(t.shape()) + ", manifest says " + std::to_string(rows) +
                  " × " + std::to_string(cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = t[static_cast<std::size_t>(i * cols + j)];
  return m;
}

json config_to_json(const NetConfig& c) {
  return {{"shape", c.shape.dims()},
          {"ranks", c.ranks},
          {"betas", c.betas},
          {"t0", c.sched.t0},
          {"T", c.sched.T},
          {"mode", to_string(c.mode)},
          {"heterogeneity", c.heterogeneity},
          {"hidden", c.resolved_hidden()},
          {"sigma_max2", c.sigma_max2},
          {"seed", c.seed}};
}

NetConfig config_from_json(const json& j) {
  NetConfig c;
  c.shape = Shape(j.at("shape").get<std::vector<std::size_t>>());
  c.ranks = j.at("ranks").get<std::vector<std::size_t>>();
  c.betas = j.at("betas").get<std::vector<double>>();
  c.sched.t0 = j.at("t0").get<double>();
  c.sched.T = j.at("T").get<double>();
  c.mode = parse_init_mode(j.at("mode").get<std::string>());
  c.heterogeneity = j.at("heterogeneity").get<bool>();
  c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  c.sigma_max2 = j.at("sigma_max2").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

// Doubles in the manifest are written as bit patterns so round trips are exact.
std::vector<std::uint64_t> to_bits(const std::vector<double>& v) {
  std::vector<std::uint64_t> out;
  for (double d : v) out.push_back(std::bit_cast<std::uint64_t>(d));
  return out;
}

std::vector<double> from_bits(const std::vector<std::uint64_t>& v) {
  std::vector<double> out;
  for (std::uint64_t b : v) out.push_back(std::bit_cast<double>(b));
  return out;
}

}  // namespace

void save_checkpoint(const fs::path& dir, const TuckerScoreNet& net, const TrainState& state) {
  const fs::path tmp = dir.string() + ".tmp";
  std::error_code ec;
  fs::remove_all(tmp, ec);
  if (!fs::create_directories(tmp, ec) && ec) throw IoError("cannot create " + tmp.string() + ": " + ec.message());

  json params = json::array();
  for (const nn::Param& p : net.params().all()) {
    params.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}, {"trainable", p.trainable}});
    io::write_tensor(matrix_to_tensor(p.value), tmp / (p.name + ".value.ten"));
    io::write_tensor(matrix_to_tensor(p.m), tmp / (p.name + ".m.ten"));
    io::write_tensor(matrix_to_tensor(p.v), tmp / (p.name + ".v.ten"));
  }
  json manifest = {{"format", "tuckerdiff-checkpoint"},
                   {"version", 1},
                   {"config", config_to_json(net.config())},
                   {"adam_step", net.params().step()},
                   {"params", params},
                   {"epoch", state.epoch},
                   {"loss_history", state.loss_history},
                   {"loss_history_bits", to_bits(state.loss_history)}};
  {
    std::ofstream f(tmp / "manifest.json");
    if (!f) throw IoError("cannot write manifest in " + tmp.string());
    f << manifest.dump(2) << '\n';
    if (!f) throw IoError("manifest write failed in " + tmp.string());
  }
  // Replace the previous checkpoint only once the new one is complete.
  fs::remove_all(dir, ec);
  fs::rename(tmp, dir, ec);
  if (ec) throw IoError("cannot move checkpoint into " + dir.string() + ": " + ec.message());
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  std::ifstream f(mpath);
  if (!f) throw IoError("missing checkpoint manifest " + mpath.string());
  json manifest;
  try {
    manifest = json::parse(f);
  } catch (const json::exception& e) {
    throw IoError(mpath.string() + ": " + e.what());
  }
  try {
    if (manifest.at("format").get<std::string>() != "tuckerdiff-checkpoint")
      throw IoError(mpath.string() + ": not a checkpoint manifest");
    NetConfig cfg = config_from_json(manifest.at("config"));

    // Build a skeleton with the right structure, then overwrite every buffer.
    std::vector<Matrix> frames;
    for (std::size_t d = 0; d < cfg.shape.order(); ++d)
      frames.push_back(Matrix::Identity(static_cast<Eigen::Index>(cfg.shape[d]), static_cast<Eigen::Index>(cfg.ranks[d])));
    std::vector<Vector> omega;
    if (cfg.heterogeneity)
      for (std::size_t d = 0; d < cfg.shape.order(); ++d) omega.push_back(Vector::Zero(static_cast<Eigen::Index>(cfg.shape[d])));
    else
      omega.push_back(Vector::Zero(1));
    LoadedCheckpoint out{TuckerScoreNet(cfg, frames, omega), {}};

    nn::ParamStore& store = out.net.params();
    const json& params = manifest.at("params");
    if (params.size() != store.size()) throw IoError(mpath.string() + ": parameter count mismatch");
    for (const json& p : params) {
      const auto name = p.at("name").get<std::string>();
      const auto rows = p.at("rows").get<Eigen::Index>();
      const auto cols = p.at("cols").get<Eigen::Index>();
      nn::Param& dst = store[store.index(name)];
      if (dst.value.rows() != rows || dst.value.cols() != cols)
        throw IoError(mpath.string() + ": parameter '" + name + "' shape mismatch");
      dst.value = tensor_to_matrix(io::read_tensor(dir / (name + ".value.ten")), rows, cols);
      dst.m = tensor_to_matrix(io::read_tensor(dir / (name + ".m.ten")), rows, cols);
      dst.v = tensor_to_matrix(io::read_tensor(dir / (name + ".v.ten")), rows, cols);
      dst.grad.setZero();
    }
    store.set_step(manifest.at("adam_step").get<std::uint64_t>());
    store.touch();

    out.state.epoch = manifest.at("epoch").get<std::size_t>();
    out.state.loss_history = from_bits(manifest.at("loss_history_bits").get<std::vector<std::uint64_t>>());
    return out;
  } catch (const json::exception& e) {
    throw IoError(mpath.string() + ": malformed manifest: " + e.what());
  }
}

}  // namespace tucker
