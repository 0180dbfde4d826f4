#include "tuckerdiff/tucker_net.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace tucker {

std::string to_string(InitMode mode) {
  switch (mode) {
    case InitMode::kCold: return "cold";
    case InitMode::kWarm: return "warm";
    case InitMode::kFixed: return "fixed";
  }
  return "?";
}

InitMode parse_init_mode(const std::string& s) {
  if (s == "cold") return InitMode::kCold;
  if (s == "warm") return InitMode::kWarm;
  if (s == "fixed") return InitMode::kFixed;
  throw ValidationError("init mode must be cold, warm or fixed, got '" + s + "'");
}

void NetConfig::validate() const {
  if (shape.order() == 0) throw ValidationError("network shape is empty");
  if (ranks.size() != shape.order()) throw ValidationError("network needs one rank per mode");
  for (std::size_t d = 0; d < ranks.size(); ++d)
    if (ranks[d] == 0 || ranks[d] > shape[d]) throw ValidationError("network rank out of range for mode " + std::to_string(d));
  if (!betas.empty() && betas.size() != shape.order()) throw ValidationError("network needs one beta per mode");
  sched.validate();
  for (std::size_t w : hidden)
    if (w == 0) throw ValidationError("hidden widths must be >= 1");
}

std::size_t NetConfig::core_size() const {
  std::size_t r = 1;
  for (std::size_t v : ranks) r *= v;
  return r;
}

std::vector<std::size_t> NetConfig::resolved_hidden() const {
  if (!hidden.empty()) return hidden;
  return std::vector<std::size_t>(4, std::max<std::size_t>(128, 8 * core_size()));
}

double NetConfig::p_beta() const {
  double v = 1.0;
  for (std::size_t d = 0; d < betas.size(); ++d) v *= std::pow(static_cast<double>(shape[d]), betas[d]);
  return v;
}

TuckerScoreNet::TuckerScoreNet(NetConfig cfg, std::vector<Matrix> frames, std::vector<Vector> omega)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (cfg_.betas.empty()) cfg_.betas.assign(cfg_.shape.order(), 0.0);
  if (!(cfg_.sigma_max2 > 0.0)) throw ValidationError("sigma_max2 must be resolved before building the network");
  const std::size_t order = cfg_.shape.order();
  if (frames.size() != order) throw ValidationError("need one frame per mode");
  for (std::size_t d = 0; d < order; ++d) {
    if (frames[d].rows() != static_cast<Eigen::Index>(cfg_.shape[d]) ||
        frames[d].cols() != static_cast<Eigen::Index>(cfg_.ranks[d]))
      throw ValidationError("frame " + std::to_string(d) + " has the wrong shape");
    frame_idx_.push_back(params_.add("U" + std::to_string(d), std::move(frames[d]), cfg_.mode != InitMode::kFixed));
  }
  if (cfg_.heterogeneity) {
    if (omega.size() != order) throw ValidationError("heterogeneous ω needs one vector per mode");
    for (std::size_t d = 0; d < order; ++d) {
      if (omega[d].size() != static_cast<Eigen::Index>(cfg_.shape[d]))
        throw ValidationError("ω vector " + std::to_string(d) + " has the wrong length");
      omega_idx_.push_back(params_.add("omega" + std::to_string(d), Matrix(omega[d])));
    }
  } else {
    if (omega.size() != 1 || omega[0].size() != 1) throw ValidationError("shared ω must be a single scalar");
    omega_idx_.push_back(params_.add("omega", Matrix(omega[0])));
  }
  nn::MlpSpec spec{cfg_.core_size() + 1, cfg_.core_size(), cfg_.resolved_hidden()};
  Rng rng = Rng(cfg_.seed).substream(Stream::kInit, 1000);
  core_ = nn::Mlp(spec, params_, "core", rng, true);
}

TuckerBasis TuckerScoreNet::basis() const {
  TuckerBasis b;
  for (std::size_t i : frame_idx_) b.frames.push_back(params_[i].value);
  return b;
}

std::vector<Vector> TuckerScoreNet::omega() const {
  std::vector<Vector> out;
  for (std::size_t i : omega_idx_) out.emplace_back(params_[i].value.col(0));
  return out;
}

void TuckerScoreNet::set_omega(const std::vector<Vector>& omega) {
  if (omega.size() != omega_idx_.size()) throw ValidationError("ω group count mismatch");
  for (std::size_t k = 0; k < omega.size(); ++k) {
    if (omega[k].size() != params_[omega_idx_[k]].value.rows()) throw ValidationError("ω length mismatch");
    params_[omega_idx_[k]].value.col(0) = omega[k];
  }
  params_.touch();
}

void TuckerScoreNet::set_frames(const std::vector<Matrix>& frames) {
  if (frames.size() != frame_idx_.size()) throw ValidationError("frame count mismatch");
  for (std::size_t d = 0; d < frames.size(); ++d) {
    Matrix& u = params_[frame_idx_[d]].value;
    if (frames[d].rows() != u.rows() || frames[d].cols() != u.cols()) throw ValidationError("frame shape mismatch");
    u = frames[d];
  }
  params_.touch();
}

DenseTensor TuckerScoreNet::omega_field() const {
  DenseTensor out(cfg_.shape);
  if (!cfg_.heterogeneity) {
    const double w = params_[omega_idx_[0]].value(0, 0);
    for (double& v : out.data()) v = w;
    return out;
  }
  const std::size_t order = cfg_.shape.order();
  std::vector<std::size_t> idx(order, 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = 1.0;
    for (std::size_t d = 0; d < order; ++d) v *= params_[omega_idx_[d]].value(static_cast<Eigen::Index>(idx[d]), 0);
    out[i] = v;
    for (std::size_t d = order; d-- > 0;) {
      if (++idx[d] < cfg_.shape[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

std::shared_ptr<const NetTimeContext> TuckerScoreNet::make_context(double t, const Vector& omega, const Matrix& u,
                                                                   const Matrix* utu) const {
  if (!(t >= cfg_.sched.t0 && t <= cfg_.sched.T))
    throw ValidationError("time " + std::to_string(t) + " outside [t0, T]");
  auto ctx = std::make_shared<NetTimeContext>();
  const AlphaH ah = alpha_h(cfg_.sched, t);
  ctx->t = t;
  ctx->alpha = ah.alpha;
  ctx->h = ah.h;
  const double scale = ah.alpha * ah.alpha / cfg_.p_beta();
  ctx->omega_t = (ah.h + scale * omega.array()).matrix();
  if (!(ctx->omega_t.minCoeff() > 0.0))
    throw NumericalError("Ω_t has a non-positive entry at t = " + std::to_string(t));
  ctx->w = ctx->omega_t.cwiseInverse();
  if (utu) {
    ctx->llt.compute(ctx->w[0] * *utu);
  } else {
    const Matrix wu = ctx->w.asDiagonal() * u;
    ctx->llt.compute(u.transpose() * wu);
  }
  if (ctx->llt.info() != Eigen::Success)
    throw NumericalError("Uᵀ Ω_t^{-1} U is not positive definite at t = " + std::to_string(t));
  return ctx;
}

std::vector<DenseTensor> TuckerScoreNet::forward(std::span<const DenseTensor> xs, std::span<const double> ts,
                                                 NetTape* tape) const {
  if (xs.size() != ts.size()) throw ValidationError("forward needs one time per sample");
  if (xs.empty()) throw ValidationError("forward called with an empty batch");
  for (const DenseTensor& x : xs)
    if (x.shape() != cfg_.shape)
      throw ValidationError("input shape " + to_string(x.shape()) + " does not match network " + to_string(cfg_.shape));

  const auto n = static_cast<std::ptrdiff_t>(xs.size());
  const auto r = static_cast<Eigen::Index>(cfg_.core_size());
  const TuckerBasis b = basis();
  const Matrix u = b.kron();
  Matrix utu;
  if (!cfg_.heterogeneity) utu = u.transpose() * u;
  const Vector omega = omega_field().vec();

  std::map<double, std::size_t> slot;
  for (double t : ts) slot.emplace(t, 0);
  std::vector<double> unique;
  for (auto& [t, k] : slot) {
    k = unique.size();
    unique.push_back(t);
  }
  std::vector<std::shared_ptr<const NetTimeContext>> ctx(unique.size());
  // Validate times serially so errors surface outside the parallel region.
  for (double t : unique)
    if (!(t >= cfg_.sched.t0 && t <= cfg_.sched.T))
      throw ValidationError("time " + std::to_string(t) + " outside [t0, T]");
  {
    const auto m = static_cast<std::ptrdiff_t>(unique.size());
    std::vector<std::string> errors(unique.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < m; ++k) {
      try {
        ctx[k] = make_context(unique[k], omega, u, cfg_.heterogeneity ? nullptr : &utu);
      } catch (const std::exception& e) {
        errors[k] = e.what();
      }
    }
    for (const std::string& e : errors)
      if (!e.empty()) throw NumericalError(e);
  }

  std::vector<Vector> s(xs.size());
  std::vector<const NetTimeContext*> cp(xs.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const NetTimeContext& c = *ctx[slot.at(ts[i])];
    cp[i] = &c;
    const Vector bvec = u.transpose() * c.w.cwiseProduct(xs[i].vec());
    s[i] = c.llt.solve(bvec);
  }

  std::vector<Vector> zeta(xs.size());
  if (core_fn_) {
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      zeta[i] = core_fn_(s[i], ts[i]);
      if (zeta[i].size() != r) throw ValidationError("core function returned the wrong length");
    }
  } else {
    Matrix in(r + 1, n);
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      in.col(i).head(r) = s[i];
      in(r, i) = ts[i];
    }
    const Matrix out = core_.forward(params_, in, tape ? &tape->mlp : nullptr);
    for (std::ptrdiff_t i = 0; i < n; ++i) zeta[i] = out.col(i);
  }

  std::vector<DenseTensor> scores(xs.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const Vector y = u * zeta[i];
    DenseTensor out(cfg_.shape);
    out.vec() = (y - xs[i].vec()).cwiseProduct(cp[i]->w);
    scores[i] = std::move(out);
  }

  if (tape) {
    tape->version = params_.version();
    tape->u = u;
    tape->ctx.resize(xs.size());
    tape->x.resize(xs.size());
    tape->score.resize(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      tape->ctx[i] = ctx[slot.at(ts[i])];
      tape->x[i] = xs[i].vec();
      tape->score[i] = scores[i].vec();
    }
    tape->s = std::move(s);
    tape->zeta = std::move(zeta);
  }
  return scores;
}

void TuckerScoreNet::backward(const NetTape& tape, std::span<const DenseTensor> score_grads) {
  if (tape.version != params_.version())
    throw ValidationError("network tape is stale: parameters changed since the forward pass");
  if (core_fn_) throw ValidationError("cannot differentiate through an analytic core function");
  const std::size_t n = tape.x.size();
  if (score_grads.size() != n) throw ValidationError("backward needs one gradient per sample");
  for (const DenseTensor& g : score_grads)
    if (g.shape() != cfg_.shape) throw ValidationError("score gradient has the wrong shape");

  const auto r = static_cast<Eigen::Index>(cfg_.core_size());
  const std::size_t order = cfg_.shape.order();
  const Shape core_shape(cfg_.ranks);
  const Matrix& u = tape.u;
  const bool frames_trainable = cfg_.mode != InitMode::kFixed;
  const auto count = static_cast<std::ptrdiff_t>(n);

  Matrix dzeta(r, count);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i)
    dzeta.col(i) = u.transpose() * score_grads[i].vec().cwiseProduct(tape.ctx[i]->w);

  const Matrix din = core_.backward(params_, tape.mlp, dzeta);

  const TuckerBasis b = basis();
  const double pb = cfg_.p_beta();
  std::vector<std::vector<Matrix>> du(n);
  std::vector<Vector> domega(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const NetTimeContext& c = *tape.ctx[i];
    const Vector& x = tape.x[i];
    const Vector& s = tape.s[i];
    const Vector& sc = tape.score[i];
    const Vector gs = score_grads[i].vec();
    const Vector lambda = c.llt.solve(din.col(i).head(r));
    const Vector us = u * s;
    const Vector ul = u * lambda;
    const Vector resid = x - us;

    // Ω_t enters through the output division and through W = Ω_t^{-1}.
    const Vector d_omega_t = -(gs.array() * sc.array() * c.w.array()) -
                             (ul.array() * resid.array() * c.w.array().square());
    domega[i] = (c.alpha * c.alpha / pb) * d_omega_t;

    if (!frames_trainable) continue;
    const DenseTensor gy = from_vec(gs.cwiseProduct(c.w), cfg_.shape);
    const DenseTensor wr = from_vec(resid.cwiseProduct(c.w), cfg_.shape);
    const DenseTensor wl = from_vec(ul.cwiseProduct(c.w), cfg_.shape);
    const DenseTensor zt = from_vec(tape.zeta[i], core_shape);
    const DenseTensor lt = from_vec(lambda, core_shape);
    const DenseTensor st = from_vec(s, core_shape);
    du[i].resize(order);
    for (std::size_t d = 0; d < order; ++d) {
      const Matrix qz = mode_unfold(multi_mode_product_except(zt, b.frames, d, false), d);
      const Matrix ql = mode_unfold(multi_mode_product_except(lt, b.frames, d, false), d);
      const Matrix qs = mode_unfold(multi_mode_product_except(st, b.frames, d, false), d);
      du[i][d] = mode_unfold(gy, d) * qz.transpose() + mode_unfold(wr, d) * ql.transpose() -
                 mode_unfold(wl, d) * qs.transpose();
    }
  }

  if (frames_trainable)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t d = 0; d < order; ++d) params_[frame_idx_[d]].grad += du[i][d];

  Vector total = Vector::Zero(static_cast<Eigen::Index>(cfg_.shape.total()));
  for (std::size_t i = 0; i < n; ++i) total += domega[i];

  if (!cfg_.heterogeneity) {
    params_[omega_idx_[0]].grad(0, 0) += total.sum();
    return;
  }
  std::vector<Vector> w;
  for (std::size_t d = 0; d < order; ++d) w.emplace_back(params_[omega_idx_[d]].value.col(0));
  std::vector<Vector> g;
  for (std::size_t d = 0; d < order; ++d) g.push_back(Vector::Zero(w[d].size()));
  std::vector<std::size_t> idx(order, 0);
  for (Eigen::Index i = 0; i < total.size(); ++i) {
    for (std::size_t d = 0; d < order; ++d) {
      double others = 1.0;
      for (std::size_t k = 0; k < order; ++k)
        if (k != d) others *= w[k][static_cast<Eigen::Index>(idx[k])];
      g[d][static_cast<Eigen::Index>(idx[d])] += total[i] * others;
    }
    for (std::size_t d = order; d-- > 0;) {
      if (++idx[d] < cfg_.shape[d]) break;
      idx[d] = 0;
    }
  }
  for (std::size_t d = 0; d < order; ++d) params_[omega_idx_[d]].grad.col(0) += g[d];
}

DenseTensor TuckerScoreNet::score(const DenseTensor& x, double t) const {
  const double ts[1] = {t};
  return std::move(forward(std::span<const DenseTensor>(&x, 1), ts).front());
}

std::vector<DenseTensor> TuckerScoreNet::score_batch(std::span<const DenseTensor> xs, double t) const {
  const std::vector<double> ts(xs.size(), t);
  return forward(xs, ts);
}

void TuckerScoreNet::project_parameters() {
  if (cfg_.mode != InitMode::kFixed)
    for (std::size_t i : frame_idx_) params_[i].value = retract_to_stiefel(params_[i].value);
  for (std::size_t i : omega_idx_) params_[i].value = params_[i].value.cwiseMax(0.0).cwiseMin(cfg_.sigma_max2);
  params_.touch();
}

namespace {

double mean_entry_variance(const Dataset& data) {
  const std::size_t p = data.sample_shape().total();
  Vector mean = Vector::Zero(static_cast<Eigen::Index>(p));
  for (const DenseTensor& x : data.samples) mean += x.vec();
  mean /= static_cast<double>(data.size());
  Vector var = Vector::Zero(static_cast<Eigen::Index>(p));
  for (const DenseTensor& x : data.samples) var += (x.vec() - mean).cwiseAbs2();
  const double denom = data.size() > 1 ? static_cast<double>(data.size() - 1) : 1.0;
  return var.sum() / denom / static_cast<double>(p);
}

// Per-entry mean squared residual after projecting onto the frames.
DenseTensor residual_variance(const Dataset& data, const std::vector<Matrix>& frames) {
  DenseTensor acc(data.sample_shape());
  for (const DenseTensor& x : data.samples) {
    const DenseTensor proj = multi_mode_product(multi_mode_product_t(x, frames), frames);
    for (std::size_t i = 0; i < acc.size(); ++i) {
      const double e = x[i] - proj[i];
      acc[i] += e * e;
    }
  }
  acc *= 1.0 / static_cast<double>(data.size());
  return acc;
}

// ω_d[j] = m_d[j] / m^{(D-1)/D}; exact when v is a Kronecker product.
std::vector<Vector> separable_fit(const DenseTensor& v) {
  const Shape& shape = v.shape();
  const std::size_t order = shape.order();
  std::vector<Vector> marg;
  for (std::size_t d = 0; d < order; ++d) {
    const Matrix unf = mode_unfold(v, d);
    marg.emplace_back(unf.rowwise().mean());
  }
  const double m = v.vec().mean();
  std::vector<Vector> out;
  for (std::size_t d = 0; d < order; ++d) {
    if (!(m > 0.0)) {
      out.push_back(Vector::Zero(static_cast<Eigen::Index>(shape[d])));
      continue;
    }
    out.emplace_back(marg[d] / std::pow(m, static_cast<double>(order - 1) / static_cast<double>(order)));
  }
  return out;
}

}  // namespace

TuckerScoreNet init_net(NetConfig cfg, const Dataset* train) {
  cfg.validate();
  if (cfg.betas.empty()) cfg.betas.assign(cfg.shape.order(), 0.0);
  if (cfg.mode != InitMode::kCold && !train)
    throw ValidationError(to_string(cfg.mode) + " initialization needs training data");
  if (train) {
    train->validate();
    if (train->sample_shape() != cfg.shape)
      throw ValidationError("training data shape " + to_string(train->sample_shape()) + " does not match network " +
                            to_string(cfg.shape));
  }
  const std::size_t order = cfg.shape.order();

  std::vector<Matrix> frames, fitted;
  if (train) fitted = hooi(*train, cfg.ranks).basis.frames;
  if (cfg.mode == InitMode::kCold) {
    for (std::size_t d = 0; d < order; ++d) {
      Rng rng = Rng(cfg.seed).substream(Stream::kInit, d);
      Matrix g(static_cast<Eigen::Index>(cfg.shape[d]), static_cast<Eigen::Index>(cfg.ranks[d]));
      for (Eigen::Index j = 0; j < g.cols(); ++j)
        for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = rng.normal();
      frames.push_back(qr_orthonormalize(g));
    }
  } else {
    frames = fitted;
  }

  const double pb = cfg.p_beta();
  if (!(cfg.sigma_max2 > 0.0)) cfg.sigma_max2 = train ? 4.0 * mean_entry_variance(*train) * pb : 4.0;
  if (!(cfg.sigma_max2 > 0.0)) cfg.sigma_max2 = 4.0;

  std::vector<Vector> omega;
  if (cfg.omega_init >= 0.0 || !train) {
    const double c = std::max(cfg.omega_init, 0.0);
    if (cfg.heterogeneity) {
      for (std::size_t d = 0; d < order; ++d)
        omega.push_back(Vector::Constant(static_cast<Eigen::Index>(cfg.shape[d]),
                                         std::pow(c, 1.0 / static_cast<double>(order))));
    } else {
      omega.push_back(Vector::Constant(1, c));
    }
  } else {
    // residual under the HOOI frames in every mode
    DenseTensor v = residual_variance(*train, fitted);
    v *= pb;
    if (cfg.heterogeneity)
      omega = separable_fit(v);
    else
      omega.push_back(Vector::Constant(1, v.vec().mean()));
  }
  for (Vector& w : omega) w = w.cwiseMax(0.0).cwiseMin(cfg.sigma_max2);
  return TuckerScoreNet(std::move(cfg), std::move(frames), std::move(omega));
}

TuckerScoreNet net_from_gaussian_model(const GaussianModel& m, const DiffusionSchedule& sched) {
  m.validate();
  NetConfig cfg;
  cfg.shape = m.shape();
  cfg.ranks = m.basis.ranks();
  cfg.betas = m.betas;
  cfg.sched = sched;
  cfg.mode = InitMode::kFixed;
  cfg.heterogeneity = !m.homogeneous_noise();
  cfg.hidden = {1};
  std::vector<Vector> omega;
  double top = 0.0;
  for (double v : m.noise_var.data()) top = std::max(top, v);
  cfg.sigma_max2 = std::max(top, 1e-300) * 2.0;
  if (cfg.heterogeneity) {
    omega = separable_fit(m.noise_var);
  } else {
    omega.push_back(Vector::Constant(1, m.noise_var[0]));
  }
  TuckerScoreNet net(cfg, m.basis.frames, omega);
  const DenseTensor field = net.omega_field();
  for (std::size_t i = 0; i < field.size(); ++i)
    if (std::abs(field[i] - m.noise_var[i]) > 1e-12 * std::max(1.0, m.noise_var[i]))
      throw ValidationError("noise variance does not factor across modes");
  // The model outlives calls through the copy captured here.
  auto model = std::make_shared<GaussianModel>(m);
  net.set_core_function([model, sched](const Vector& s, double t) { return core_function_xi(*model, s, t, sched); });
  return net;
}

CoreDiagnostics core_diagnostics(const TuckerScoreNet& net, const Dataset& data, Rng& rng, std::size_t pairs) {
  data.validate();
  const DiffusionSchedule& sched = net.config().sched;
  CoreDiagnostics out;
  for (std::size_t k = 0; k < pairs; ++k) {
    const double t = rng.uniform(sched.t0, sched.T);
    const std::size_t i = static_cast<std::size_t>(rng.next_u64() % data.size());
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % data.size());
    const DenseTensor xs[2] = {forward_sample(data.samples[i], t, sched, rng),
                               forward_sample(data.samples[j], t, sched, rng)};
    const double ts[2] = {t, t};
    NetTape tape;
    net.forward(xs, ts, &tape);
    out.sup_norm = std::max({out.sup_norm, tape.zeta[0].cwiseAbs().maxCoeff(), tape.zeta[1].cwiseAbs().maxCoeff()});
    const double ds = (tape.s[0] - tape.s[1]).norm();
    if (ds > 1e-12) out.lipschitz_g = std::max(out.lipschitz_g, (tape.zeta[0] - tape.zeta[1]).norm() / ds);
  }
  return out;
}

}  // namespace tucker
