#include "tuckerdiff/factor_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>

#include "tuckerdiff/linalg.hpp"

namespace tucker {

Matrix FactorModelSpec::loading(std::size_t d) const {
  return std::pow(static_cast<double>(shape[d]), betas[d] / 2.0) * frames[d];
}

double FactorModelSpec::p_beta() const {
  double v = 1.0;
  for (std::size_t d = 0; d < shape.order(); ++d) v *= std::pow(static_cast<double>(shape[d]), betas[d]);
  return v;
}

double FactorModelSpec::sigma_min() const {
  return *std::min_element(noise_stddev.data().begin(), noise_stddev.data().end());
}

double FactorModelSpec::sigma_max() const {
  return *std::max_element(noise_stddev.data().begin(), noise_stddev.data().end());
}

void FactorModelSpec::validate() const {
  const std::size_t order = shape.order();
  if (ranks.size() != order || frames.size() != order || betas.size() != order)
    throw ValidationError("factor model needs ranks, frames and betas for every mode");
  for (std::size_t d = 0; d < order; ++d) {
    if (ranks[d] == 0 || ranks[d] > shape[d]) throw ValidationError("rank exceeds mode dimension");
    if (static_cast<std::size_t>(frames[d].rows()) != shape[d] ||
        static_cast<std::size_t>(frames[d].cols()) != ranks[d])
      throw ValidationError("frame " + std::to_string(d) + " has the wrong shape");
    if (stiefel_defect(frames[d]) > 1e-8)
      throw ValidationError("frame " + std::to_string(d) + " is not orthonormal");
    if (betas[d] < 0.0 || betas[d] > 1.0) throw ValidationError("betas must lie in [0, 1]");
  }
  if (!core_sampler) {
    if (core_mean.shape() != core_shape() || core_stddev.shape() != core_shape())
      throw ValidationError("core mean/stddev must have the core shape");
    for (double s : core_stddev.data())
      if (!(s >= 0.0)) throw ValidationError("core stddev must be non-negative");
  }
  if (noise_stddev.shape() != shape) throw ValidationError("noise field must have the data shape");
  for (double s : noise_stddev.data())
    if (!(s >= 0.0) || !std::isfinite(s)) throw ValidationError("noise stddev must be finite and >= 0");
  if (!raw_loadings.empty()) {
    if (raw_loadings.size() != order) throw ValidationError("need one raw loading per mode");
    for (std::size_t d = 0; d < order; ++d)
      if (static_cast<std::size_t>(raw_loadings[d].rows()) != shape[d] ||
          static_cast<std::size_t>(raw_loadings[d].cols()) != ranks[d])
        throw ValidationError("raw loading " + std::to_string(d) + " has the wrong shape");
  }
}

namespace {

struct Fnv1a {
  std::uint64_t h = 1469598103934665603ULL;
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u64(bits);
  }
  void matrix(const Matrix& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) f64(m(i, j));
  }
  void tensor(const DenseTensor& t) {
    for (double v : t.data()) f64(v);
  }
};

}  // namespace

std::uint64_t FactorModelSpec::hash() const {
  Fnv1a f;
  for (std::size_t d : shape.dims()) f.u64(d);
  for (std::size_t r : ranks) f.u64(r);
  for (double b : betas) f.f64(b);
  for (const Matrix& m : frames) f.matrix(m);
  for (const Matrix& m : raw_loadings) f.matrix(m);
  f.u64(core_sampler ? 1 : 0);
  if (!core_sampler) {
    f.tensor(core_mean);
    f.tensor(core_stddev);
  }
  f.tensor(noise_stddev);
  return f.h;
}

Dataset sample_dataset(const FactorModelSpec& spec, std::size_t n, const Rng& rng, ScaleMode mode) {
  if (n == 0) throw ValidationError("sample count must be >= 1");
  spec.validate();
  if (mode == ScaleMode::kRaw && spec.shape.order() != 2)
    throw ValidationError("raw scaling is defined for order-2 tensors only");

  std::vector<Matrix> loadings;
  double divisor = 1.0;
  if (mode == ScaleMode::kRaw && !spec.raw_loadings.empty()) {
    loadings = spec.raw_loadings;
  } else if (mode == ScaleMode::kRaw) {
    loadings = spec.frames;
  } else {
    for (std::size_t d = 0; d < spec.shape.order(); ++d) loadings.push_back(spec.loading(d));
    divisor = std::sqrt(spec.p_beta());
  }

  Dataset out;
  out.samples.resize(n);
  const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    Rng local = rng.substream(Stream::kCoreDraw, static_cast<std::uint64_t>(i));
    DenseTensor core;
    if (spec.core_sampler) {
      core = spec.core_sampler(local);
    } else {
      core = DenseTensor(spec.core_shape());
      for (std::size_t k = 0; k < core.size(); ++k)
        core[k] = spec.core_mean[k] + spec.core_stddev[k] * local.normal();
    }
    DenseTensor x = multi_mode_product(core, loadings);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += spec.noise_stddev[k] * local.normal();
    if (divisor != 1.0) x *= 1.0 / divisor;
    out.samples[static_cast<std::size_t>(i)] = std::move(x);
  }

  out.meta.seed = rng.seed();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(spec.hash()));
  out.meta.provenance = buf;
  return out;
}

FactorModelSpec build_matrix_benchmark_spec(std::size_t p1, std::size_t p2, std::size_t r1, std::size_t r2,
                                            double sigma, const Rng& rng, NoiseFieldMode field) {
  if (r1 == 0 || r2 == 0 || r1 > p1 || r2 > p2) throw ValidationError("ranks must satisfy 1 <= r_d <= p_d");
  if (!(sigma > 0.0)) throw ValidationError("sigma must be positive");

  FactorModelSpec spec;
  spec.shape = Shape{p1, p2};
  spec.ranks = {r1, r2};
  spec.betas = {0.0, 0.0};

  Rng core_rng = rng.substream(Stream::kLoadings, 0);
  spec.core_mean = DenseTensor(Shape{r1, r2});
  spec.core_stddev = DenseTensor(Shape{r1, r2});
  for (std::size_t k = 0; k < spec.core_mean.size(); ++k) {
    spec.core_mean[k] = core_rng.uniform(0.0, 0.1);
    spec.core_stddev[k] = 1.5 * spec.core_mean[k];
  }

  Rng load_rng = rng.substream(Stream::kLoadings, 1);
  for (auto [p, r] : {std::pair{p1, r1}, std::pair{p2, r2}}) {
    Matrix raw(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(r));
    for (Eigen::Index j = 0; j < raw.cols(); ++j)
      for (Eigen::Index i = 0; i < raw.rows(); ++i) raw(i, j) = load_rng.normal();
    spec.frames.push_back(qr_orthonormalize(raw));
    spec.raw_loadings.push_back(std::move(raw));
  }

  Rng field_rng = rng.substream(Stream::kNoiseField, 0);
  spec.noise_stddev = DenseTensor(spec.shape);
  for (double& s : spec.noise_stddev.data()) {
    const double u = field_rng.uniform(0.0, 2.0);
    const double scale = field == NoiseFieldMode::kVariance ? std::sqrt(u) : u;
    s = sigma * std::abs(scale * field_rng.normal());
  }
  return spec;
}

SplitResult split(const Dataset& data, double train_fraction, const Rng& rng) {
  data.validate();
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ValidationError("train fraction must lie strictly between 0 and 1");
  const std::size_t n = data.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n)
    throw ValidationError("split of " + std::to_string(n) + " samples at fraction " +
                          std::to_string(train_fraction) + " leaves an empty side");

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng local = rng.substream(Stream::kSplit, 0);
  std::shuffle(perm.begin(), perm.end(), local.engine());

  SplitResult out;
  out.train_index.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test_index.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(out.train_index.begin(), out.train_index.end());
  std::sort(out.test_index.begin(), out.test_index.end());
  for (std::size_t i : out.train_index) out.train.samples.push_back(data.samples[i]);
  for (std::size_t i : out.test_index) out.test.samples.push_back(data.samples[i]);
  out.train.meta = data.meta;
  out.train.meta.split = "train";
  out.test.meta = data.meta;
  out.test.meta.split = "test";
  return out;
}

}  // namespace tucker
