#include "tuckerdiff/diffusion.hpp"

#include <cmath>

namespace tucker {

void DiffusionSchedule::validate() const {
  if (!(t0 > 0.0)) throw ValidationError("t0 must be positive");
  if (!(T > t0)) throw ValidationError("T must exceed t0");
}

AlphaH alpha_h(const DiffusionSchedule&, double t) {
  if (!(t >= 0.0)) throw ValidationError("diffusion time must be non-negative, got " + std::to_string(t));
  const double alpha = std::exp(-0.5 * t);
  return {alpha, -std::expm1(-t)};
}

DenseTensor forward_sample(const DenseTensor& x0, double t, const DiffusionSchedule& sched, const DenseTensor& z) {
  const AlphaH ah = alpha_h(sched, t);
  if (z.shape() != x0.shape()) throw ValidationError("noise shape does not match x0");
  DenseTensor xt(x0.shape());
  const double s = std::sqrt(ah.h);
  for (std::size_t i = 0; i < xt.size(); ++i) xt[i] = ah.alpha * x0[i] + s * z[i];
  return xt;
}

DenseTensor forward_sample(const DenseTensor& x0, double t, const DiffusionSchedule& sched, Rng& rng) {
  return forward_sample(x0, t, sched, sample_standard_normal(x0.shape(), rng));
}

DenseTensor transition_score(const DenseTensor& xt, const DenseTensor& x0, double t,
                             const DiffusionSchedule& sched) {
  const AlphaH ah = alpha_h(sched, t);
  if (!(ah.h > 0.0)) throw NumericalError("transition score is undefined at t = 0");
  if (xt.shape() != x0.shape()) throw ValidationError("x_t and x_0 shapes differ");
  DenseTensor out(xt.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -(xt[i] - ah.alpha * x0[i]) / ah.h;
  return out;
}

Shape GaussianModel::shape() const {
  std::vector<std::size_t> dims;
  for (const Matrix& f : basis.frames) dims.push_back(static_cast<std::size_t>(f.rows()));
  return Shape(std::move(dims));
}

double GaussianModel::p_beta() const {
  double v = 1.0;
  for (std::size_t d = 0; d < betas.size(); ++d)
    v *= std::pow(static_cast<double>(basis.frames[d].rows()), betas[d]);
  return v;
}

bool GaussianModel::homogeneous_noise() const {
  const double first = noise_var[0];
  for (double v : noise_var.data())
    if (std::abs(v - first) > 1e-14 * std::max(1.0, std::abs(first))) return false;
  return true;
}

bool GaussianModel::diagonal_core() const {
  const Matrix off = core_cov - Matrix(core_cov.diagonal().asDiagonal());
  return off.cwiseAbs().maxCoeff() == 0.0;
}

void GaussianModel::validate() const {
  if (basis.frames.empty()) throw ValidationError("Gaussian model has no frames");
  if (betas.size() != basis.order()) throw ValidationError("Gaussian model needs one beta per mode");
  for (const Matrix& f : basis.frames)
    if (stiefel_defect(f) > 1e-8) throw ValidationError("Gaussian model frames must be orthonormal");
  const auto r = static_cast<Eigen::Index>(core_size());
  if (core_cov.rows() != r || core_cov.cols() != r) throw ValidationError("core covariance must be r × r");
  if (core_mean.size() != r) throw ValidationError("core mean must have length r");
  if ((core_cov - core_cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, core_cov.norm()))
    throw ValidationError("core covariance must be symmetric");
  if (noise_var.shape() != shape()) throw ValidationError("noise variance must have the data shape");
  for (double v : noise_var.data())
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("noise variances must be finite and >= 0");
}

GaussianModel gaussian_model_from_raw_spec(const FactorModelSpec& spec) {
  spec.validate();
  if (spec.shape.order() != 2 || spec.raw_loadings.size() != 2)
    throw ValidationError("conversion needs an order-2 spec with raw loadings");
  GaussianModel m;
  m.basis.frames = spec.frames;
  m.betas = {0.0, 0.0};
  // raw_d = A_d T_d with T_d = A_dᵀ raw_d; then R F Cᵀ = A_1 (T_1 F T_2ᵀ) A_2ᵀ and
  // vec(T_1 F T_2ᵀ) = (T_1 ⊗ T_2) vec(F) under row-major vec.
  const Matrix t1 = spec.frames[0].transpose() * spec.raw_loadings[0];
  const Matrix t2 = spec.frames[1].transpose() * spec.raw_loadings[1];
  const std::vector<Matrix> ts{t1, t2};
  const Matrix k = kron_all(ts);
  const Vector mean = spec.core_mean.vec();
  Vector var = spec.core_stddev.vec().array().square();
  m.core_mean = k * mean;
  m.core_cov = k * var.asDiagonal() * k.transpose();
  m.core_cov = 0.5 * (m.core_cov + m.core_cov.transpose());
  m.noise_var = elementwise_mul(spec.noise_stddev, spec.noise_stddev);
  return m;
}

DenseTensor sigma_t_tucker(const GaussianModel& m, double t, const DiffusionSchedule& sched) {
  const AlphaH ah = alpha_h(sched, t);
  const double scale = ah.alpha * ah.alpha / m.p_beta();
  DenseTensor s(m.noise_var.shape());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = ah.h + scale * m.noise_var[i];
  return s;
}

namespace {

void check_time(const DiffusionSchedule& sched, double t) {
  if (!(t >= sched.t0 && t <= sched.T))
    throw ValidationError("time " + std::to_string(t) + " outside [t0, T] = [" + std::to_string(sched.t0) +
                          ", " + std::to_string(sched.T) + "]");
}

DenseTensor decode(const GaussianModel& m, const Vector& core) {
  return multi_mode_product(from_vec(core, m.basis.core_shape()), m.basis.frames);
}

}  // namespace

GaussianScoreContext::GaussianScoreContext(const GaussianModel& m, double t, const DiffusionSchedule& sched)
    : model_(&m), t_(t), ah_(alpha_h(sched, t)), sigma_t_(sigma_t_tucker(m, t, sched)) {
  check_time(sched, t);
  for (double v : sigma_t_.data())
    if (!(v > 0.0)) throw NumericalError("Σ_t has a non-positive entry at t = " + std::to_string(t));

  // Aᵀ Σ_t^{-1} A column by column: decode a unit core, weight, encode.
  const Shape core_shape = m.basis.core_shape();
  const auto r = static_cast<Eigen::Index>(core_shape.total());
  Matrix precision(r, r);
  for (Eigen::Index l = 0; l < r; ++l) {
    DenseTensor unit(core_shape);
    unit[static_cast<std::size_t>(l)] = 1.0;
    const DenseTensor weighted = elementwise_div(multi_mode_product(unit, m.basis.frames), sigma_t_);
    precision.col(l) = multi_mode_product_t(weighted, m.basis.frames).vec();
  }
  precision = 0.5 * (precision + precision.transpose());
  precision_.compute(precision);
  if (precision_.info() != Eigen::Success)
    throw NumericalError("Aᵀ Σ_t^{-1} A is not positive definite at t = " + std::to_string(t));
  sigma_a_ = precision_.solve(Matrix::Identity(r, r));
  sigma_a_ = 0.5 * (sigma_a_ + sigma_a_.transpose());

  core_marginal_.compute(sigma_a_ + ah_.alpha * ah_.alpha * m.core_cov);
  if (core_marginal_.info() != Eigen::Success)
    throw NumericalError("core marginal covariance is not positive definite at t = " + std::to_string(t));
}

Vector GaussianScoreContext::encode(const DenseTensor& xt) const {
  const Vector b = multi_mode_product_t(elementwise_div(xt, sigma_t_), model_->basis.frames).vec();
  return precision_.solve(b);
}

Vector GaussianScoreContext::core_score(const Vector& g) const {
  return -core_marginal_.solve(g - ah_.alpha * model_->core_mean);
}

Vector GaussianScoreContext::xi(const Vector& g) const { return sigma_a_ * core_score(g) + g; }

DenseTensor GaussianScoreContext::score(const DenseTensor& xt) const {
  if (xt.shape() != sigma_t_.shape()) throw ValidationError("x_t shape does not match the model");
  const Vector g = encode(xt);
  const DenseTensor subspace = elementwise_div(decode(*model_, sigma_a_ * core_score(g)), sigma_t_);
  const DenseTensor complement = elementwise_div(xt - decode(*model_, g), sigma_t_);
  return subspace - complement;
}

DenseTensor oracle_score_general(const GaussianModel& m, const DenseTensor& xt, double t,
                                 const DiffusionSchedule& sched) {
  return GaussianScoreContext(m, t, sched).score(xt);
}

Vector encode_core(const GaussianModel& m, const DenseTensor& xt, double t, const DiffusionSchedule& sched) {
  return GaussianScoreContext(m, t, sched).encode(xt);
}

Vector core_function_xi(const GaussianModel& m, const Vector& g, double t, const DiffusionSchedule& sched) {
  return GaussianScoreContext(m, t, sched).xi(g);
}

DenseTensor oracle_score_gaussian_homog(const GaussianModel& m, const DenseTensor& xt, double t,
                                        const DiffusionSchedule& sched) {
  check_time(sched, t);
  if (!m.homogeneous_noise()) throw ValidationError("homogeneous oracle called with heterogeneous noise");
  if (!m.diagonal_core()) throw ValidationError("homogeneous oracle needs a diagonal core covariance");
  if (m.core_mean.cwiseAbs().maxCoeff() != 0.0) throw ValidationError("homogeneous oracle needs a zero core mean");
  const AlphaH ah = alpha_h(sched, t);
  const double a2 = ah.alpha * ah.alpha;
  const double c = ah.h + m.noise_var[0] * a2 / m.p_beta();
  if (!(c > 0.0)) throw NumericalError("degenerate noise level at t = " + std::to_string(t));

  const DenseTensor core = multi_mode_product_t(xt, m.basis.frames);
  DenseTensor scaled(core.shape());
  for (std::size_t k = 0; k < core.size(); ++k)
    scaled[k] = core[k] / (c + a2 * m.core_cov(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)));
  const DenseTensor subspace = multi_mode_product(scaled, m.basis.frames);
  const DenseTensor projected = multi_mode_product(core, m.basis.frames);
  DenseTensor complement = xt - projected;
  complement *= 1.0 / c;
  DenseTensor out = subspace + complement;
  out *= -1.0;
  return out;
}

Matrix full_covariance(const GaussianModel& m, double t, const DiffusionSchedule& sched) {
  const std::size_t p = m.shape().total();
  if (p > 4096) throw ValidationError("dense covariance limited to p <= 4096, got " + std::to_string(p));
  const AlphaH ah = alpha_h(sched, t);
  const Matrix a = m.basis.kron();
  Matrix cov = ah.alpha * ah.alpha * (a * m.core_cov * a.transpose());
  const double scale = ah.alpha * ah.alpha / m.p_beta();
  for (std::size_t i = 0; i < p; ++i)
    cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += ah.h + scale * m.noise_var[i];
  return 0.5 * (cov + cov.transpose());
}

DenseTensor brute_force_gaussian_score(const GaussianModel& m, const DenseTensor& xt, double t,
                                       const DiffusionSchedule& sched) {
  if (xt.shape() != m.shape()) throw ValidationError("x_t shape does not match the model");
  const Matrix cov = full_covariance(m, t, sched);
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("Σ_full is not symmetric positive definite");
  const AlphaH ah = alpha_h(sched, t);
  const Vector mean = ah.alpha * (m.basis.kron() * m.core_mean);
  const Vector s = -llt.solve(xt.vec() - mean);
  return from_vec(s, xt.shape());
}

}  // namespace tucker
