#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tuckerdiff/tensor.hpp"

namespace tucker {

struct DatasetMeta {
  std::uint64_t seed = 0;
  std::string provenance = "external";  // spec hash, or "external"
  std::string split = "all";
};

/// Ordered, non-empty collection of equally shaped samples.
struct Dataset {
  std::vector<DenseTensor> samples;
  DatasetMeta meta;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  const Shape& sample_shape() const;

  /// Throws ValidationError when empty or heterogeneous.
  void validate() const;
};

}  // namespace tucker
