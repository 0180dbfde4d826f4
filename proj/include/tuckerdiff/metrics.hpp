#pragma once

#include <span>
#include <vector>

#include "tuckerdiff/dataset.hpp"
#include "tuckerdiff/dataset_io.hpp"
#include "tuckerdiff/linalg.hpp"

namespace tucker {

/// vec(X ×_d U_dᵀ) for every sample.
std::vector<Vector> project_cores(const Dataset& data, const TuckerBasis& basis);

struct MomentSummary {
  Vector mean;
  Matrix cov;  // n − 1 denominator

  void validate() const;
};

MomentSummary summarize(std::span<const Vector> cores);

/// ‖μ_a − μ_b‖² + Tr(Σ_a + Σ_b − 2 (Σ_a^{1/2} Σ_b Σ_a^{1/2})^{1/2}).
double core_frechet_distance(const MomentSummary& a, const MomentSummary& b);

/// Σ‖X − X ×_d U_dU_dᵀ‖² / Σ‖X‖².
double reconstruction_error(const Dataset& test, const TuckerBasis& basis);

/// |top_k(a) ∩ top_k(b)|, ties broken toward the lower index.
std::size_t topk_overlap(std::span<const double> a, std::span<const double> b, std::size_t k);

/// With truth: D_mode<d>, D_mean, CFD (truth-projected, train vs generated).
/// Without: RE_test under hooi(generated), CFD_train and CFD_test under
/// hooi(train) (generated vs train / generated vs test).
io::MetricRecord evaluate_generation(const Dataset& train, const Dataset* test, const Dataset& generated,
                                     const TuckerBasis* truth, const std::vector<std::size_t>& ranks);

}  // namespace tucker
