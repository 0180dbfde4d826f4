#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tuckerdiff/dataset.hpp"
#include "tuckerdiff/rng.hpp"
#include "tuckerdiff/tensor.hpp"

namespace tucker {

enum class ScaleMode {
  kScaled,  // p^{β/2} X = F ×_d Λ_d + E with Λ_d = p_d^{β_d/2} A_d
  kRaw,     // X = R F Cᵀ + E with raw Gaussian loadings, order 2 only
};

// How the per-entry heterogeneity draw z ~ N(0, u), u ~ Uniform(0, 2) reads u.
enum class NoiseFieldMode {
  kVariance,  // z = sqrt(u) * N(0, 1)
  kStddev,    // z = u * N(0, 1)
};

/// Low-Tucker-rank factor model. Frames A_d are orthonormal; the core is
/// Gaussian with independent entries unless core_sampler is set.
struct FactorModelSpec {
  Shape shape;
  std::vector<std::size_t> ranks;
  std::vector<Matrix> frames;        // A_d ∈ St(r_d, p_d)
  std::vector<Matrix> raw_loadings;  // used by kRaw; empty otherwise
  std::vector<double> betas;         // β_d ∈ [0, 1]
  DenseTensor core_mean;             // core-shaped
  DenseTensor core_stddev;           // core-shaped
  std::function<DenseTensor(Rng&)> core_sampler;
  DenseTensor noise_stddev;  // per-entry, data-shaped

  Shape core_shape() const { return Shape(ranks); }
  /// Λ_d = p_d^{β_d/2} A_d.
  Matrix loading(std::size_t d) const;
  /// p^{β} = Π_d p_d^{β_d}.
  double p_beta() const;
  double sigma_min() const;
  double sigma_max() const;

  void validate() const;
  /// FNV-1a over every parameter; recorded as dataset provenance.
  std::uint64_t hash() const;
};

/// Draws n samples. Sample i uses the substream (kCoreDraw, i) of rng, so the
/// result does not depend on the thread count.
Dataset sample_dataset(const FactorModelSpec& spec, std::size_t n, const Rng& rng,
                       ScaleMode mode = ScaleMode::kScaled);

/// Matrix factor model of the synthetic benchmark: M_F ~ U(0, 0.1),
/// S_F = 1.5 M_F, R and C with N(0, 1) entries, and a fixed heterogeneous
/// noise field σ·|z_jk|.
FactorModelSpec build_matrix_benchmark_spec(std::size_t p1, std::size_t p2, std::size_t r1, std::size_t r2,
                                            double sigma, const Rng& rng,
                                            NoiseFieldMode field = NoiseFieldMode::kVariance);

struct SplitResult {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_index;  // ascending original indices
  std::vector<std::size_t> test_index;
};

/// Random disjoint partition with round(fraction · n) training samples.
SplitResult split(const Dataset& data, double train_fraction, const Rng& rng);

}  // namespace tucker
