#include "tuckerdiff/nn.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace tucker::nn {

std::size_t ParamStore::add(std::string name, Matrix init, bool trainable) {
  if (find(name)) throw ValidationError("duplicate parameter '" + name + "'");
  Param p;
  p.name = std::move(name);
  p.grad = Matrix::Zero(init.rows(), init.cols());
  p.m = Matrix::Zero(init.rows(), init.cols());
  p.v = Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  p.trainable = trainable;
  params_.push_back(std::move(p));
  ++version_;
  return params_.size() - 1;
}

std::optional<std::size_t> ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  return std::nullopt;
}

std::size_t ParamStore::index(const std::string& name) const {
  auto i = find(name);
  if (!i) throw ValidationError("no parameter named '" + name + "'");
  return *i;
}

void ParamStore::zero_grad() {
  for (Param& p : params_) p.grad.setZero();
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const Param& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ValidationError("Adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ValidationError("Adam eps must be positive");
}

void adam_step(ParamStore& params, const AdamConfig& cfg) {
  cfg.validate();
  for (const Param& p : params.all())
    if (p.trainable && !p.grad.allFinite())
      throw NumericalError("non-finite gradient in parameter '" + p.name + "'");

  const std::uint64_t t = params.step() + 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (Param& p : params.all()) {
    if (!p.trainable) continue;
    p.m = cfg.beta1 * p.m + (1.0 - cfg.beta1) * p.grad;
    p.v = cfg.beta2 * p.v + (1.0 - cfg.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= cfg.lr * (p.m.array() / c1) / ((p.v.array() / c2).sqrt() + cfg.eps);
  }
  params.set_step(t);
  params.zero_grad();
  params.touch();
}

void MlpSpec::validate() const {
  if (input_dim == 0 || output_dim == 0) throw ValidationError("MLP dimensions must be >= 1");
  for (std::size_t w : hidden)
    if (w == 0) throw ValidationError("MLP hidden widths must be >= 1");
}

Mlp::Mlp(MlpSpec spec, ParamStore& params, const std::string& prefix, Rng& rng, bool zero_output)
    : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t fan_in = spec_.input_dim;
  for (std::size_t l = 0; l < spec_.layers(); ++l) {
    const std::size_t fan_out = l < spec_.hidden.size() ? spec_.hidden[l] : spec_.output_dim;
    Matrix w(static_cast<Eigen::Index>(fan_out), static_cast<Eigen::Index>(fan_in));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-limit, limit);
    if (zero_output && l + 1 == spec_.layers()) w.setZero();
    w_.push_back(params.add(prefix + ".W" + std::to_string(l), std::move(w)));
    b_.push_back(params.add(prefix + ".b" + std::to_string(l), Matrix::Zero(static_cast<Eigen::Index>(fan_out), 1)));
    fan_in = fan_out;
  }
}

Mlp Mlp::attach(MlpSpec spec, const ParamStore& params, const std::string& prefix) {
  spec.validate();
  Mlp m;
  m.spec_ = std::move(spec);
  std::size_t fan_in = m.spec_.input_dim;
  for (std::size_t l = 0; l < m.spec_.layers(); ++l) {
    const std::size_t fan_out = l < m.spec_.hidden.size() ? m.spec_.hidden[l] : m.spec_.output_dim;
    const std::size_t wi = params.index(prefix + ".W" + std::to_string(l));
    const std::size_t bi = params.index(prefix + ".b" + std::to_string(l));
    if (params[wi].value.rows() != static_cast<Eigen::Index>(fan_out) ||
        params[wi].value.cols() != static_cast<Eigen::Index>(fan_in) ||
        params[bi].value.rows() != static_cast<Eigen::Index>(fan_out) || params[bi].value.cols() != 1)
      throw ValidationError("parameter shapes for '" + prefix + "' do not match the MLP spec");
    m.w_.push_back(wi);
    m.b_.push_back(bi);
    fan_in = fan_out;
  }
  return m;
}

Matrix Mlp::forward(const ParamStore& params, const Matrix& input, MlpTape* tape) const {
  if (input.rows() != static_cast<Eigen::Index>(spec_.input_dim))
    throw ValidationError("MLP input has " + std::to_string(input.rows()) + " rows, expected " +
                          std::to_string(spec_.input_dim));
  if (tape) {
    tape->version = params.version();
    tape->inputs.clear();
    tape->pre.clear();
  }
  Matrix a = input;
  for (std::size_t l = 0; l < spec_.layers(); ++l) {
    const Matrix& w = params[w_[l]].value;
    const Matrix& b = params[b_[l]].value;
    if (tape) tape->inputs.push_back(a);
    Matrix z = w * a;
    z.colwise() += b.col(0);
#ifndef NDEBUG
    for (Eigen::Index j = 0; j < z.cols(); ++j)
      assert(z.col(j).norm() <= w.norm() * a.col(j).norm() + b.norm() + 1e-9 * (1.0 + z.col(j).norm()));
#endif
    if (l + 1 == spec_.layers()) return z;
    if (tape) tape->pre.push_back(z);
    a = z.cwiseMax(0.0);
  }
  return a;
}

Matrix Mlp::backward(ParamStore& params, const MlpTape& tape, const Matrix& output_grad) const {
  if (tape.version != params.version())
    throw ValidationError("MLP tape is stale: parameters changed since the forward pass");
  if (tape.inputs.size() != spec_.layers()) throw ValidationError("MLP tape does not match this network");
  Matrix dz = output_grad;
  for (std::size_t l = spec_.layers(); l-- > 0;) {
    Param& w = params[w_[l]];
    Param& b = params[b_[l]];
    w.grad.noalias() += dz * tape.inputs[l].transpose();
    b.grad.col(0) += dz.rowwise().sum();
    Matrix da = w.value.transpose() * dz;
    if (l == 0) return da;
    dz = (tape.pre[l - 1].array() > 0.0).select(da, 0.0);
  }
  return dz;
}

double GradCheckResult::worst_mean() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.mean_rel_err);
  return w;
}

double GradCheckResult::worst_max() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_err);
  return w;
}

GradCheckResult check_gradients(ParamStore& params, const std::function<double(bool)>& loss, Rng& rng,
                                int directions, double step) {
  params.zero_grad();
  loss(true);
  std::vector<Matrix> analytic;
  for (const Param& p : params.all()) analytic.push_back(p.grad);
  params.zero_grad();

  GradCheckResult out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k].trainable) continue;
    GradCheckEntry e;
    e.name = params[k].name;
    const Matrix saved = params[k].value;
    for (int r = 0; r < directions; ++r) {
      Matrix dir(saved.rows(), saved.cols());
      for (Eigen::Index j = 0; j < dir.cols(); ++j)
        for (Eigen::Index i = 0; i < dir.rows(); ++i) dir(i, j) = rng.normal();
      dir /= dir.norm();
      params[k].value = saved + step * dir;
      params.touch();
      const double up = loss(false);
      params[k].value = saved - step * dir;
      params.touch();
      const double down = loss(false);
      const double numeric = (up - down) / (2.0 * step);
      const double exact = (analytic[k].array() * dir.array()).sum();
      const double denom = std::max({std::abs(numeric), std::abs(exact), 1e-10});
      const double rel = std::abs(numeric - exact) / denom;
      e.mean_rel_err += rel / directions;
      e.max_rel_err = std::max(e.max_rel_err, rel);
    }
    params[k].value = saved;
    params.touch();
    out.entries.push_back(e);
  }
  return out;
}

}  // namespace tucker::nn
