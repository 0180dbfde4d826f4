#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tuckerdiff/rng.hpp"
#include "tuckerdiff/tensor.hpp"

namespace tucker::nn {

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix m;  // Adam first moment
  Matrix v;  // Adam second moment
  bool trainable = true;
};

/// Named parameters with gradient and Adam buffers. version() increases on
/// every mutation made through the store so stale tapes can be detected.
class ParamStore {
 public:
  std::size_t add(std::string name, Matrix init, bool trainable = true);

  std::size_t size() const noexcept { return params_.size(); }
  Param& operator[](std::size_t i) { return params_.at(i); }
  const Param& operator[](std::size_t i) const { return params_.at(i); }
  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t index(const std::string& name) const;

  std::vector<Param>& all() noexcept { return params_; }
  const std::vector<Param>& all() const noexcept { return params_; }

  void zero_grad();
  std::uint64_t version() const noexcept { return version_; }
  void touch() noexcept { ++version_; }

  std::uint64_t step() const noexcept { return step_; }
  void set_step(std::uint64_t s) noexcept { step_ = s; }

  std::size_t parameter_count() const;

 private:
  std::vector<Param> params_;
  std::uint64_t version_ = 0;
  std::uint64_t step_ = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// Bias-corrected Adam on every trainable parameter, then zeroes all
/// gradients. A non-finite gradient throws NumericalError before anything
/// is modified.
void adam_step(ParamStore& params, const AdamConfig& cfg);

struct MlpSpec {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::vector<std::size_t> hidden;  // ReLU after each hidden layer

  void validate() const;
  std::size_t layers() const noexcept { return hidden.size() + 1; }
};

struct MlpTape {
  std::uint64_t version = 0;
  std::vector<Matrix> inputs;  // input to layer l (post-activation of l-1)
  std::vector<Matrix> pre;     // pre-activation of hidden layer l
};

/// Dense ReLU network. Batches are column-stacked: input is in_dim × B.
class Mlp {
 public:
  Mlp() = default;
  /// Registers W_l, b_l as "<prefix>.W<l>", "<prefix>.b<l>". He-uniform
  /// weights and zero biases; zero_output also zeroes the last layer.
  Mlp(MlpSpec spec, ParamStore& params, const std::string& prefix, Rng& rng, bool zero_output);
  /// Binds to parameters already present in the store.
  static Mlp attach(MlpSpec spec, const ParamStore& params, const std::string& prefix);

  const MlpSpec& spec() const noexcept { return spec_; }
  std::size_t weight_index(std::size_t layer) const { return w_.at(layer); }
  std::size_t bias_index(std::size_t layer) const { return b_.at(layer); }

  Matrix forward(const ParamStore& params, const Matrix& input, MlpTape* tape = nullptr) const;
  /// Accumulates parameter gradients and returns d loss / d input.
  Matrix backward(ParamStore& params, const MlpTape& tape, const Matrix& output_grad) const;

 private:
  MlpSpec spec_;
  std::vector<std::size_t> w_;
  std::vector<std::size_t> b_;
};

struct GradCheckEntry {
  std::string name;
  double mean_rel_err = 0.0;
  double max_rel_err = 0.0;
};

struct GradCheckResult {
  std::vector<GradCheckEntry> entries;
  double worst_mean() const;
  double worst_max() const;
};

/// Directional central-difference check of every trainable parameter.
/// loss(true) must zero nothing, accumulate gradients into the store and
/// return the loss; loss(false) only evaluates. Parameters are restored.
GradCheckResult check_gradients(ParamStore& params, const std::function<double(bool)>& loss, Rng& rng,
                                int directions = 20, double step = 1e-5);

}  // namespace tucker::nn
