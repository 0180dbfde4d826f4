#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tuckerdiff/dataset.hpp"
#include "tuckerdiff/diffusion.hpp"
#include "tuckerdiff/linalg.hpp"
#include "tuckerdiff/nn.hpp"

namespace tucker {

enum class InitMode { kCold, kWarm, kFixed };

std::string to_string(InitMode mode);
InitMode parse_init_mode(const std::string& s);

struct NetConfig {
  Shape shape;
  std::vector<std::size_t> ranks;
  std::vector<double> betas;  // empty means all zero
  DiffusionSchedule sched;
  InitMode mode = InitMode::kCold;
  bool heterogeneity = true;
  std::vector<std::size_t> hidden;  // empty means 4 layers of max(128, 8r)
  double sigma_max2 = 0.0;          // <= 0: 4 × mean per-entry data variance
  double omega_init = -1.0;         // < 0: residual variance estimate
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t core_size() const;
  std::vector<std::size_t> resolved_hidden() const;
  double p_beta() const;
};

/// Replaces the core MLP: maps (s, t) to the r-vector ζ.
using CoreFunction = std::function<Vector(const Vector& s, double t)>;

/// Per-time quantities of the forward pass, shared by samples at equal t.
struct NetTimeContext {
  double t = 0.0;
  double alpha = 1.0;
  double h = 0.0;
  Vector omega_t;  // Ω_t entries
  Vector w;        // 1 / Ω_t
  Eigen::LLT<Matrix> llt;  // Uᵀ Ω_t^{-1} U
};

struct NetTape {
  std::uint64_t version = 0;
  Matrix u;  // U_1 ⊗ ... ⊗ U_D
  std::vector<std::shared_ptr<const NetTimeContext>> ctx;
  std::vector<Vector> x;
  std::vector<Vector> s;     // Σ_U vec(G)
  std::vector<Vector> zeta;  // core output
  std::vector<Vector> score;
  nn::MlpTape mlp;
};

/// The S_Tucker network: X ⊘ Ω → ×U^T → Σ_U solve → core(·, t) → ×U →
/// minus X → ⊘ Ω, with Ω_t = h_t + α_t² p^{-β} ω.
class TuckerScoreNet {
 public:
  TuckerScoreNet() = default;
  /// omega holds one vector per mode (heterogeneity on) or a single
  /// length-1 vector (off).
  TuckerScoreNet(NetConfig cfg, std::vector<Matrix> frames, std::vector<Vector> omega);

  const NetConfig& config() const noexcept { return cfg_; }
  nn::ParamStore& params() noexcept { return params_; }
  const nn::ParamStore& params() const noexcept { return params_; }
  const nn::Mlp& core() const noexcept { return core_; }

  const Matrix& frame(std::size_t d) const { return params_[frame_idx_.at(d)].value; }
  TuckerBasis basis() const;
  std::vector<Vector> omega() const;
  void set_omega(const std::vector<Vector>& omega);
  void set_frames(const std::vector<Matrix>& frames);
  /// Per-entry ω, Kronecker-composed from the per-mode vectors.
  DenseTensor omega_field() const;
  double sigma_max2() const noexcept { return cfg_.sigma_max2; }

  void set_core_function(CoreFunction f) { core_fn_ = std::move(f); }
  bool has_core_function() const noexcept { return static_cast<bool>(core_fn_); }

  std::vector<DenseTensor> forward(std::span<const DenseTensor> xs, std::span<const double> ts,
                                   NetTape* tape = nullptr) const;
  /// Accumulates d loss / d parameters for loss gradients w.r.t. the scores.
  void backward(const NetTape& tape, std::span<const DenseTensor> score_grads);

  DenseTensor score(const DenseTensor& x, double t) const;
  std::vector<DenseTensor> score_batch(std::span<const DenseTensor> xs, double t) const;

  /// QR-retract each frame and clamp ω to [0, σ_max²].
  void project_parameters();

 private:
  std::shared_ptr<const NetTimeContext> make_context(double t, const Vector& omega, const Matrix& u,
                                                     const Matrix* utu) const;

  NetConfig cfg_;
  nn::ParamStore params_;
  std::vector<std::size_t> frame_idx_;
  std::vector<std::size_t> omega_idx_;
  nn::Mlp core_;
  CoreFunction core_fn_;
};

/// cold: QR of a Gaussian matrix per mode; warm/fixed: HOOI on train.
/// σ_max² and ω default from the data when available; ω always comes from
/// the HOOI residual, whatever the starting frames.
TuckerScoreNet init_net(NetConfig cfg, const Dataset* train);

/// Network realizing the exact score of a Gaussian model: frames A_d, ω = σ²
/// (Kronecker form must be exact), core replaced by ξ. Requires the model's
/// noise variance to factor across modes.
TuckerScoreNet net_from_gaussian_model(const GaussianModel& m, const DiffusionSchedule& sched);

/// Empirical sup-norm K and Lipschitz constant γ_g of the core map on the
/// encoded data, estimated over random times and sample pairs.
struct CoreDiagnostics {
  double sup_norm = 0.0;
  double lipschitz_g = 0.0;
};
CoreDiagnostics core_diagnostics(const TuckerScoreNet& net, const Dataset& data, Rng& rng, std::size_t pairs = 256);

}  // namespace tucker
