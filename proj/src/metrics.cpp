#include "tuckerdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tucker {

namespace {

void check_basis(const Shape& shape, const TuckerBasis& basis) {
  if (basis.order() != shape.order()) throw ValidationError("basis order does not match the data");
  for (std::size_t d = 0; d < shape.order(); ++d)
    if (static_cast<std::size_t>(basis.frames[d].rows()) != shape[d])
      throw ValidationError("basis frame " + std::to_string(d) + " does not match data shape " + to_string(shape));
}

Matrix psd_sqrt(const Matrix& a) {
  const SymmetricEigen e = symmetric_eigen(a);
  const Vector root = e.values.cwiseMax(0.0).cwiseSqrt();
  return e.vectors * root.asDiagonal() * e.vectors.transpose();
}

}  // namespace

std::vector<Vector> project_cores(const Dataset& data, const TuckerBasis& basis) {
  data.validate();
  check_basis(data.sample_shape(), basis);
  std::vector<Vector> out(data.size());
  const auto n = static_cast<std::ptrdiff_t>(data.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = multi_mode_product_t(data.samples[i], basis.frames).vec();
  return out;
}

void MomentSummary::validate() const {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) throw ValidationError("moment summary is inconsistent");
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, cov.cwiseAbs().maxCoeff()))
    throw ValidationError("moment covariance is not symmetric");
}

MomentSummary summarize(std::span<const Vector> cores) {
  if (cores.size() < 2) throw ValidationError("moment summary needs at least two samples");
  const Eigen::Index r = cores.front().size();
  MomentSummary m;
  m.mean = Vector::Zero(r);
  for (const Vector& c : cores) {
    if (c.size() != r) throw ValidationError("core vectors differ in length");
    m.mean += c;
  }
  m.mean /= static_cast<double>(cores.size());
  m.cov = Matrix::Zero(r, r);
  for (const Vector& c : cores) {
    const Vector d = c - m.mean;
    m.cov.noalias() += d * d.transpose();
  }
  m.cov /= static_cast<double>(cores.size() - 1);
  m.cov = 0.5 * (m.cov + m.cov.transpose());
  return m;
}

double core_frechet_distance(const MomentSummary& a, const MomentSummary& b) {
  if (a.mean.size() != b.mean.size()) throw ValidationError("CFD needs summaries of equal dimension");
  a.validate();
  b.validate();
  const Matrix ra = psd_sqrt(a.cov);
  Matrix inner = ra * b.cov * ra;
  inner = 0.5 * (inner + inner.transpose());
  const SymmetricEigen e = symmetric_eigen(inner);
  const double cross = e.values.cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
  return std::max(d, 0.0);
}

double reconstruction_error(const Dataset& test, const TuckerBasis& basis) {
  test.validate();
  check_basis(test.sample_shape(), basis);
  double num = 0.0;
  double den = 0.0;
  for (const DenseTensor& x : test.samples) {
    const DenseTensor xh = multi_mode_product(multi_mode_product_t(x, basis.frames), basis.frames);
    num += squared_norm(x - xh);
    den += squared_norm(x);
  }
  if (!(den > 0.0)) throw ValidationError("reconstruction error undefined for all-zero data");
  return std::clamp(num / den, 0.0, 1.0);
}

std::size_t topk_overlap(std::span<const double> a, std::span<const double> b, std::size_t k) {
  if (a.size() != b.size()) throw ValidationError("top-k overlap needs equal lengths");
  if (k > a.size()) throw ValidationError("k exceeds the number of regions");
  auto top = [k](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&v](std::size_t i, std::size_t j) { return v[i] > v[j]; });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
  };
  const auto ta = top(a);
  const auto tb = top(b);
  std::vector<std::size_t> both;
  std::set_intersection(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(both));
  return both.size();
}

io::MetricRecord evaluate_generation(const Dataset& train, const Dataset* test, const Dataset& generated,
                                     const TuckerBasis* truth, const std::vector<std::size_t>& ranks) {
  train.validate();
  generated.validate();
  if (generated.sample_shape() != train.sample_shape())
    throw ValidationError("generated and training shapes differ");
  io::MetricRecord rec;
  if (truth) {
    const HooiResult est = hooi(generated, ranks);
    double mean = 0.0;
    for (std::size_t d = 0; d < truth->order(); ++d) {
      const double dist = projection_metric(est.basis.frames[d], truth->frames[d]);
      rec.add("D_mode" + std::to_string(d), dist);
      mean += dist / static_cast<double>(truth->order());
    }
    rec.add("D_mean", mean);
    const auto real = project_cores(train, *truth);
    const auto fake = project_cores(generated, *truth);
    rec.add("CFD", core_frechet_distance(summarize(real), summarize(fake)));
    return rec;
  }
  if (!test) throw ValidationError("evaluation without a truth basis needs a test set");
  test->validate();
  const HooiResult gen_basis = hooi(generated, ranks);
  rec.add("RE_test", reconstruction_error(*test, gen_basis.basis));
  const HooiResult train_basis = hooi(train, ranks);
  const MomentSummary fake = summarize(project_cores(generated, train_basis.basis));
  rec.add("CFD_train", core_frechet_distance(summarize(project_cores(train, train_basis.basis)), fake));
  rec.add("CFD_test", core_frechet_distance(summarize(project_cores(*test, train_basis.basis)), fake));
  return rec;
}

}  // namespace tucker
