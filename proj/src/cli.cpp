#include "tuckerdiff/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <variant>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "tuckerdiff/checkpoint.hpp"
#include "tuckerdiff/dataset_io.hpp"
#include "tuckerdiff/factor_model.hpp"
#include "tuckerdiff/kernels.hpp"
#include "tuckerdiff/metrics.hpp"
#include "tuckerdiff/sampler.hpp"
#include "tuckerdiff/trainer.hpp"

namespace tucker::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Field {
  SchemaEntry entry;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename T>
Field make(const std::string& key, const std::string& type, const std::string& allowed, const std::string& help,
           T RunConfig::*member) {
  return Field{{key, type, allowed, help},
               [member](const RunConfig& c) { return json(c.*member); },
               [member](RunConfig& c, const json& v) { c.*member = v.get<T>(); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      make("seed", "uint", "", "root seed for every random stream", &RunConfig::seed),
      make("out", "string", "", "run directory", &RunConfig::out),
      make("threads", "uint", "", "OpenMP thread cap (0 = runtime default)", &RunConfig::threads),
      make("p1", "uint", ">= 1", "rows of each sample", &RunConfig::p1),
      make("p2", "uint", ">= 1", "columns of each sample", &RunConfig::p2),
      make("r1", "uint", "1..p1", "row rank", &RunConfig::r1),
      make("r2", "uint", "1..p2", "column rank", &RunConfig::r2),
      make("sigma", "number", "> 0", "noise level of the synthetic data", &RunConfig::sigma),
      make("n_train", "uint", ">= 2", "training samples", &RunConfig::n_train),
      make("n_test", "uint", ">= 1", "test samples", &RunConfig::n_test),
      make("noise_field", "string", "variance|stddev", "how the heterogeneity draw u is read", &RunConfig::noise_field),
      make("init", "string", "cold|warm|fixed", "frame initialization", &RunConfig::init),
      make("epochs", "uint", ">= 1", "training epochs", &RunConfig::epochs),
      make("batch_size", "uint", ">= 1", "minibatch size", &RunConfig::batch_size),
      make("lr", "number", "> 0", "Adam learning rate", &RunConfig::lr),
      make("times_per_sample", "uint", ">= 1", "diffusion times drawn per sample per epoch", &RunConfig::times_per_sample),
      make("t0", "number", "> 0", "early-stopping time", &RunConfig::t0),
      make("T", "number", "> t0", "terminal time", &RunConfig::T),
      make("heterogeneity", "bool", "", "learn per-entry noise scales", &RunConfig::heterogeneity),
      make("hidden", "uint_list", "entries >= 1", "core MLP widths (empty = 4 x max(128, 8r))", &RunConfig::hidden),
      make("checkpoint_every", "uint", "", "epochs between checkpoints (0 = only at the end)", &RunConfig::checkpoint_every),
      make("resume", "bool", "", "continue from the run directory's checkpoint", &RunConfig::resume),
      make("steps", "uint", ">= 1", "sampler steps N", &RunConfig::steps),
      make("scheme", "string", "em|ddim", "sampler scheme", &RunConfig::scheme),
      make("grid", "string", "uniform|geometric", "sampler time grid", &RunConfig::grid),
      make("n_gen", "uint", ">= 1", "samples to generate", &RunConfig::n_gen),
      make("score", "string", "net|oracle", "score source for generate", &RunConfig::score),
      make("perturb_score", "number", "", "relative perturbation of oracle scores (negative control)", &RunConfig::perturb_score),
      make("oracle_cases", "uint", ">= 1", "random cases in the oracle triangle", &RunConfig::oracle_cases),
      make("sampler_ngen", "uint", ">= 2", "samples in the sampler covariance check", &RunConfig::sampler_ngen),
      make("sampler_steps", "uint", ">= 1", "steps in the sampler covariance check", &RunConfig::sampler_steps),
  };
  return f;
}

const Field& field(const std::string& key) {
  for (const Field& f : fields())
    if (f.entry.key == key) return f;
  throw ValidationError("unknown config key '" + key + "'");
}

void check_type(const Field& f, const json& v) {
  const std::string& t = f.entry.type;
  bool ok = false;
  if (t == "uint") ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  else if (t == "number") ok = v.is_number();
  else if (t == "string") ok = v.is_string();
  else if (t == "bool") ok = v.is_boolean();
  else if (t == "uint_list") {
    ok = v.is_array();
    if (ok)
      for (const json& e : v) ok = ok && (e.is_number_unsigned() || (e.is_number_integer() && e.get<std::int64_t>() >= 0));
  }
  if (!ok) throw ValidationError("config key '" + f.entry.key + "' expects " + t + ", got " + v.dump());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed for " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("missing " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void require(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing input " + path.string());
}

json file_entry(const fs::path& path) {
  return {{"file", path.filename().string()}, {"bytes", fs::file_size(path)}};
}

void write_manifest(const RunConfig& cfg, const std::string& command, json extra) {
  json m = {{"command", command}, {"config", json::parse(to_json_text(cfg))}};
  for (auto& [k, v] : extra.items()) m[k] = v;
  write_text(fs::path(cfg.out) / ("manifest_" + command + ".json"), m.dump(2) + "\n");
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

DiffusionSchedule schedule(const RunConfig& cfg) {
  DiffusionSchedule s;
  s.t0 = cfg.t0;
  s.T = cfg.T;
  s.validate();
  return s;
}

void setup_threads(const RunConfig& cfg) {
  if (cfg.threads > 0) kernels::set_max_threads(static_cast<int>(cfg.threads));
}

std::string model_label(const RunConfig& cfg) { return cfg.score == "oracle" ? "oracle" : "net-" + cfg.init; }

}  // namespace

void RunConfig::validate() const {
  if (out.empty()) throw ValidationError("out must be non-empty");
  if (p1 == 0 || p2 == 0) throw ValidationError("p1 and p2 must be >= 1");
  if (r1 == 0 || r1 > p1 || r2 == 0 || r2 > p2) throw ValidationError("ranks must satisfy 1 <= r_d <= p_d");
  if (!(sigma > 0.0)) throw ValidationError("sigma must be positive");
  if (n_train < 2) throw ValidationError("n_train must be >= 2");
  if (n_test == 0) throw ValidationError("n_test must be >= 1");
  if (noise_field != "variance" && noise_field != "stddev") throw ValidationError("noise_field must be variance or stddev");
  parse_init_mode(init);
  if (epochs == 0) throw ValidationError("epochs must be >= 1");
  if (batch_size == 0) throw ValidationError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ValidationError("lr must be positive");
  if (times_per_sample == 0) throw ValidationError("times_per_sample must be >= 1");
  if (!(t0 > 0.0) || !(T > t0)) throw ValidationError("need 0 < t0 < T");
  for (std::size_t h : hidden)
    if (h == 0) throw ValidationError("hidden widths must be >= 1");
  if (steps == 0) throw ValidationError("steps must be >= 1");
  parse_scheme(scheme);
  parse_time_grid(grid);
  if (n_gen == 0) throw ValidationError("n_gen must be >= 1");
  if (score != "net" && score != "oracle") throw ValidationError("score must be net or oracle");
  if (!std::isfinite(perturb_score)) throw ValidationError("perturb_score must be finite");
  if (oracle_cases == 0 || sampler_ngen < 2 || sampler_steps == 0) throw ValidationError("oracle-check sizes out of range");
}

const std::vector<SchemaEntry>& config_schema() {
  static const std::vector<SchemaEntry> s = [] {
    std::vector<SchemaEntry> out;
    for (const Field& f : fields()) out.push_back(f.entry);
    return out;
  }();
  return s;
}

void apply_json_text(RunConfig& cfg, const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  RunConfig next = cfg;
  for (auto& [key, value] : j.items()) {
    const Field& f = field(key);
    check_type(f, value);
    f.set(next, value);
  }
  cfg = next;
}

void apply_config_file(RunConfig& cfg, const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  apply_json_text(cfg, ss.str());
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  const Field& f = field(key);
  json v;
  if (f.entry.type == "string") {
    v = value;
  } else {
    try {
      v = json::parse(value);
    } catch (const json::exception&) {
      throw ValidationError("cannot parse value '" + value + "' for key '" + key + "'");
    }
  }
  check_type(f, v);
  f.set(cfg, v);
}

std::string to_json_text(const RunConfig& cfg) {
  json j = json::object();
  for (const Field& f : fields()) j[f.entry.key] = f.get(cfg);
  return j.dump();
}

void save_gaussian_model(const GaussianModel& m, const fs::path& dir) {
  fs::create_directories(dir);
  json j = {{"order", m.basis.order()}, {"betas", m.betas}};
  write_text(dir / "model.json", j.dump(2) + "\n");
  for (std::size_t d = 0; d < m.basis.order(); ++d) {
    const Matrix& u = m.basis.frames[d];
    DenseTensor t(Shape{static_cast<std::size_t>(u.rows()), static_cast<std::size_t>(u.cols())});
    for (Eigen::Index i = 0; i < u.rows(); ++i)
      for (Eigen::Index k = 0; k < u.cols(); ++k) t[static_cast<std::size_t>(i * u.cols() + k)] = u(i, k);
    io::write_tensor(t, dir / ("U" + std::to_string(d) + ".ten"));
  }
  io::write_tensor(from_vec(m.core_mean, Shape{static_cast<std::size_t>(m.core_mean.size())}), dir / "core_mean.ten");
  const auto r = static_cast<std::size_t>(m.core_cov.rows());
  DenseTensor cov(Shape{r, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t k = 0; k < r; ++k)
      cov[i * r + k] = m.core_cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
  io::write_tensor(cov, dir / "core_cov.ten");
  io::write_tensor(m.noise_var, dir / "noise_var.ten");
}

GaussianModel load_gaussian_model(const fs::path& dir) {
  const json j = read_json(dir / "model.json");
  GaussianModel m;
  try {
    m.betas = j.at("betas").get<std::vector<double>>();
    const auto order = j.at("order").get<std::size_t>();
    for (std::size_t d = 0; d < order; ++d) {
      const DenseTensor t = io::read_tensor(dir / ("U" + std::to_string(d) + ".ten"));
      if (t.order() != 2) throw IoError("frame file is not a matrix");
      Matrix u(static_cast<Eigen::Index>(t.shape()[0]), static_cast<Eigen::Index>(t.shape()[1]));
      for (Eigen::Index i = 0; i < u.rows(); ++i)
        for (Eigen::Index k = 0; k < u.cols(); ++k) u(i, k) = t[static_cast<std::size_t>(i * u.cols() + k)];
      m.basis.frames.push_back(u);
    }
  } catch (const json::exception& e) {
    throw IoError((dir / "model.json").string() + ": " + e.what());
  }
  const DenseTensor mean = io::read_tensor(dir / "core_mean.ten");
  m.core_mean = mean.vec();
  const DenseTensor cov = io::read_tensor(dir / "core_cov.ten");
  if (cov.order() != 2 || cov.shape()[0] != cov.shape()[1]) throw IoError("core_cov.ten is not square");
  const auto r = static_cast<Eigen::Index>(cov.shape()[0]);
  m.core_cov.resize(r, r);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index k = 0; k < r; ++k) m.core_cov(i, k) = cov[static_cast<std::size_t>(i * r + k)];
  m.noise_var = io::read_tensor(dir / "noise_var.ten");
  m.validate();
  return m;
}

void cmd_simulate(const RunConfig& cfg) {
  cfg.validate();
  setup_threads(cfg);
  const fs::path out(cfg.out);
  fs::create_directories(out);
  const Rng root(cfg.seed);
  const NoiseFieldMode field_mode = cfg.noise_field == "stddev" ? NoiseFieldMode::kStddev : NoiseFieldMode::kVariance;
  const FactorModelSpec spec = build_matrix_benchmark_spec(cfg.p1, cfg.p2, cfg.r1, cfg.r2, cfg.sigma, root, field_mode);
  const std::size_t total = cfg.n_train + cfg.n_test;
  const Dataset all = sample_dataset(spec, total, root, ScaleMode::kRaw);
  const SplitResult parts =
      split(all, static_cast<double>(cfg.n_train) / static_cast<double>(total), root);

  io::write_dataset(parts.train, out / "train.ten");
  io::write_dataset(parts.test, out / "test.ten");
  json files = json::array({file_entry(out / "train.ten"), file_entry(out / "test.ten")});
  for (std::size_t d = 0; d < spec.frames.size(); ++d) {
    const Matrix& u = spec.frames[d];
    DenseTensor t(Shape{static_cast<std::size_t>(u.rows()), static_cast<std::size_t>(u.cols())});
    for (Eigen::Index i = 0; i < u.rows(); ++i)
      for (Eigen::Index k = 0; k < u.cols(); ++k) t[static_cast<std::size_t>(i * u.cols() + k)] = u(i, k);
    const fs::path p = out / ("truth_U" + std::to_string(d) + ".ten");
    io::write_tensor(t, p);
    files.push_back(file_entry(p));
  }
  save_gaussian_model(gaussian_model_from_raw_spec(spec), out / "gaussian_model");
  write_manifest(cfg, "simulate",
                 {{"synthetic", true},
                  {"spec_hash", hex(spec.hash())},
                  {"n_train", parts.train.size()},
                  {"n_test", parts.test.size()},
                  {"files", files}});
  spdlog::info("simulate: {} train / {} test samples of {}x{} in {}", parts.train.size(), parts.test.size(), cfg.p1,
               cfg.p2, out.string());
}

void cmd_train(const RunConfig& cfg) {
  cfg.validate();
  setup_threads(cfg);
  const fs::path out(cfg.out);
  require(out / "train.ten");
  const Dataset train = io::read_dataset(out / "train.ten");
  const fs::path ckpt = out / "checkpoint";

  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.times_per_sample = cfg.times_per_sample;
  tc.adam.lr = cfg.lr;
  tc.seed = cfg.seed;
  tc.checkpoint_every = cfg.checkpoint_every == 0 ? cfg.epochs : cfg.checkpoint_every;
  tc.checkpoint_dir = ckpt;

  TuckerScoreNet net;
  TrainState state;
  std::vector<io::MetricRecord> time_rows;
  if (cfg.resume && fs::exists(ckpt / "manifest.json")) {
    LoadedCheckpoint loaded = load_checkpoint(ckpt);
    net = std::move(loaded.net);
    state = std::move(loaded.state);
    if (fs::exists(out / "train_timing.csv"))
      for (const io::MetricRecord& r : io::read_metrics_csv(out / "train_timing.csv"))
        if (r.number("epoch") <= static_cast<double>(state.epoch)) time_rows.push_back(r);
    spdlog::info("train: resuming after epoch {}", state.epoch);
  } else {
    NetConfig nc;
    nc.shape = train.sample_shape();
    if (nc.shape.order() != 2 || nc.shape[0] != cfg.p1 || nc.shape[1] != cfg.p2)
      throw ValidationError("training data shape " + to_string(nc.shape) + " does not match p1 x p2");
    nc.ranks = {cfg.r1, cfg.r2};
    nc.sched = schedule(cfg);
    nc.mode = parse_init_mode(cfg.init);
    nc.heterogeneity = cfg.heterogeneity;
    nc.hidden = cfg.hidden;
    nc.seed = cfg.seed;
    net = init_net(nc, &train);
  }
  state = tucker::train(net, train, tc, std::move(state), [](const TrainState& s) {
    spdlog::info("epoch {} loss {:.6g} ({:.2f} s)", s.epoch, s.loss_history.back(), s.epoch_seconds.back());
  });

  std::vector<io::MetricRecord> loss_rows;
  for (std::size_t e = 0; e < state.loss_history.size(); ++e)
    loss_rows.push_back(io::MetricRecord{}.add("epoch", static_cast<double>(e + 1)).add("loss", state.loss_history[e]));
  // epoch_seconds covers only the epochs run by this process
  const std::size_t first = state.epoch - state.epoch_seconds.size();
  for (std::size_t k = 0; k < state.epoch_seconds.size(); ++k)
    time_rows.push_back(
        io::MetricRecord{}.add("epoch", static_cast<double>(first + k + 1)).add("seconds", state.epoch_seconds[k]));
  io::write_metrics_csv({"epoch", "loss"}, loss_rows, out / "loss.csv");
  io::write_metrics_csv({"epoch", "seconds"}, time_rows, out / "train_timing.csv");
  write_manifest(cfg, "train", {{"epochs_completed", state.epoch}, {"parameters", net.params().parameter_count()}});
}


void cmd_generate(const RunConfig& cfg) {
  cfg.validate();
  setup_threads(cfg);
  const fs::path out(cfg.out);
  fs::create_directories(out);
  SamplerConfig sc;
  sc.steps = cfg.steps;
  sc.scheme = parse_scheme(cfg.scheme);
  sc.grid = parse_time_grid(cfg.grid);
  sc.sched = schedule(cfg);
  sc.n_gen = cfg.n_gen;

  std::optional<LoadedCheckpoint> loaded;
  ScoreSource source;
  Shape shape;
  if (cfg.score == "oracle") {
    require(out / "gaussian_model" / "model.json");
    const GaussianModel m = load_gaussian_model(out / "gaussian_model");
    shape = m.shape();
    source = gaussian_score_source(m, sc.sched, cfg.perturb_score);
  } else {
    if (!fs::exists(out / "checkpoint" / "manifest.json"))
      throw IoError("missing checkpoint " + (out / "checkpoint").string() + " (run train first)");
    loaded = load_checkpoint(out / "checkpoint");
    sc.sched = loaded->net.config().sched;
    shape = loaded->net.config().shape;
    source = net_score_source(loaded->net);
  }

  const auto start = std::chrono::steady_clock::now();
  const Dataset gen = generate(source, shape, sc, Rng(cfg.seed));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  io::write_dataset(gen, out / "generated.ten");
  const json timing = {{"seconds", seconds},      {"steps", sc.steps}, {"scheme", to_string(sc.scheme)},
                       {"grid", to_string(sc.grid)}, {"n_gen", sc.n_gen}, {"score", cfg.score}};
  write_text(out / "generate_timing.json", timing.dump(2) + "\n");
  write_manifest(cfg, "generate", {{"model", model_label(cfg)}, {"files", json::array({file_entry(out / "generated.ten")})}});
  spdlog::info("generate: {} samples, {} {} steps, backward process {:.3f} s", sc.n_gen, sc.steps,
               to_string(sc.scheme), seconds);
}

void cmd_evaluate(const RunConfig& cfg) {
  cfg.validate();
  setup_threads(cfg);
  const fs::path out(cfg.out);
  require(out / "train.ten");
  require(out / "generated.ten");
  const Dataset train = io::read_dataset(out / "train.ten");
  const Dataset generated = io::read_dataset(out / "generated.ten");
  std::optional<Dataset> test;
  if (fs::exists(out / "test.ten")) test = io::read_dataset(out / "test.ten");

  bool synthetic = false;
  if (fs::exists(out / "manifest_simulate.json"))
    synthetic = read_json(out / "manifest_simulate.json").value("synthetic", false);
  std::optional<TuckerBasis> truth;
  if (synthetic) {
    std::vector<std::string> missing;
    TuckerBasis b;
    for (std::size_t d = 0; d < 2; ++d) {
      const fs::path p = out / ("truth_U" + std::to_string(d) + ".ten");
      if (!fs::exists(p)) {
        missing.push_back(p.string());
        continue;
      }
      const DenseTensor t = io::read_tensor(p);
      if (t.order() != 2) throw IoError(p.string() + " is not a matrix");
      Matrix u(static_cast<Eigen::Index>(t.shape()[0]), static_cast<Eigen::Index>(t.shape()[1]));
      for (Eigen::Index i = 0; i < u.rows(); ++i)
        for (Eigen::Index k = 0; k < u.cols(); ++k) u(i, k) = t[static_cast<std::size_t>(i * u.cols() + k)];
      b.frames.push_back(u);
    }
    if (!missing.empty()) {
      std::string list;
      for (const std::string& m : missing) list += (list.empty() ? "" : ", ") + m;
      throw IoError("synthetic run is missing its truth basis: " + list);
    }
    truth = std::move(b);
  }

  std::string label = model_label(cfg);
  if (fs::exists(out / "manifest_generate.json"))
    label = read_json(out / "manifest_generate.json").value("model", label);

  const io::MetricRecord rec = evaluate_generation(train, test ? &*test : nullptr, generated, truth ? &*truth : nullptr,
                                                   {cfg.r1, cfg.r2});
  io::MetricRecord row;
  row.add("model", label).add("seed", static_cast<double>(cfg.seed));
  for (const auto& [k, v] : rec.fields) row.add(k, v);
  std::vector<std::string> columns;
  for (const auto& f : row.fields) columns.push_back(f.first);

  const fs::path csv = out / "metrics.csv";
  std::vector<io::MetricRecord> rows;
  auto key = [](const io::MetricRecord& r) {
    const io::MetricValue* m = r.find("model");
    const io::MetricValue* s = r.find("seed");
    std::string k = m && std::holds_alternative<std::string>(*m) ? std::get<std::string>(*m) : "";
    k += "|";
    if (s) k += std::holds_alternative<double>(*s) ? io::format_number(std::get<double>(*s)) : std::get<std::string>(*s);
    return k;
  };
  if (fs::exists(csv)) {
    for (io::MetricRecord& old : io::read_metrics_csv(csv)) {
      std::vector<std::string> cols;
      for (const auto& f : old.fields) cols.push_back(f.first);
      if (cols != columns) {
        spdlog::warn("evaluate: dropping a metrics row with different columns");
        continue;
      }
      if (key(old) != key(row)) rows.push_back(std::move(old));
    }
  }
  rows.push_back(row);
  io::write_metrics_csv(columns, rows, csv);
  std::ostringstream os;
  for (const auto& [k, v] : rec.fields)
    os << ' ' << k << '=' << (std::holds_alternative<double>(v) ? io::format_number(std::get<double>(v)) : std::get<std::string>(v));
  spdlog::info("evaluate {} seed {}:{}", label, cfg.seed, os.str());
}

std::vector<checks::CheckResult> cmd_oracle_check(const RunConfig& cfg) {
  cfg.validate();
  setup_threads(cfg);
  std::vector<checks::CheckResult> results;
  results.push_back(checks::oracle_triangle(cfg.seed, cfg.oracle_cases, cfg.perturb_score));
  results.push_back(checks::representability(cfg.seed));
  results.push_back(checks::network_gradients(cfg.seed));
  for (checks::CheckResult& r : checks::sampler_covariance(cfg.seed, cfg.sampler_ngen, cfg.sampler_steps))
    results.push_back(std::move(r));

  const fs::path out(cfg.out);
  fs::create_directories(out);
  std::vector<io::MetricRecord> rows;
  for (const checks::CheckResult& r : results)
    rows.push_back(io::MetricRecord{}
                       .add("check", r.name)
                       .add("pass", std::string(r.pass ? "yes" : "no"))
                       .add("value", r.value)
                       .add("tol", r.tol));
  io::write_metrics_csv({"check", "pass", "value", "tol"}, rows, out / "oracle_check.csv");
  return results;
}

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("tuckerdiff");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("TUCKERDIFF_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
}

}  // namespace

int run(int argc, const char* const* argv) {
  if (!spdlog::get("tuckerdiff")) setup_logging();

  CLI::App app{"Tucker-structured diffusion models: simulate, train, generate, evaluate, verify"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file");
  struct Flag {
    const char* name;
    const char* key;
    const char* help;
    std::string value;
  };
  std::vector<Flag> flags = {
      {"--seed", "seed", "root seed", {}},
      {"--init", "init", "cold | warm | fixed", {}},
      {"--epochs", "epochs", "training epochs", {}},
      {"--steps", "steps", "sampler steps", {}},
      {"--scheme", "scheme", "em | ddim", {}},
      {"--ngen", "n_gen", "samples to generate", {}},
      {"--threads", "threads", "worker thread cap", {}},
      {"--out", "out", "run directory", {}},
      {"--score", "score", "net | oracle", {}},
      {"--perturb-score", "perturb_score", "oracle score perturbation", {}},
      {"--sigma", "sigma", "synthetic noise level", {}},
  };
  for (Flag& f : flags) app.add_option(f.name, f.value, f.help);
  bool resume = false;
  app.add_flag("--resume", resume, "continue training from the run directory's checkpoint");
  std::vector<std::string> sets;
  app.add_option("--set", sets, "KEY=VALUE override for any config key")->take_all();

  std::string command;
  for (const char* name : {"simulate", "train", "generate", "evaluate", "oracle-check"})
    app.add_subcommand(name)->callback([&command, name] { command = name; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ValidationError("--set expects KEY=VALUE, got '" + s + "'");
      apply_override(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    for (const Flag& f : flags)
      if (app.count(f.name) > 0) apply_override(cfg, f.key, f.value);
    if (resume) cfg.resume = true;
    cfg.validate();

    if (command == "simulate") cmd_simulate(cfg);
    else if (command == "train") cmd_train(cfg);
    else if (command == "generate") cmd_generate(cfg);
    else if (command == "evaluate") cmd_evaluate(cfg);
    else {
      bool ok = true;
      for (const checks::CheckResult& r : cmd_oracle_check(cfg)) {
        std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << ": " << io::format_number(r.value)
                  << (r.pass ? " <= " : " > ") << io::format_number(r.tol) << " (" << r.detail << ", "
                  << io::format_number(r.seconds) << " s)\n";
        ok = ok && r.pass;
      }
      return ok ? 0 : 2;
    }
    return 0;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
}

}  // namespace tucker::cli
