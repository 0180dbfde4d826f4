#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "tuckerdiff/checkpoint.hpp"
#include "tuckerdiff/dataset.hpp"
#include "tuckerdiff/nn.hpp"
#include "tuckerdiff/tucker_net.hpp"

namespace tucker {

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 64;
  std::size_t times_per_sample = 1;  // K
  nn::AdamConfig adam;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // epochs; 0 disables
  std::filesystem::path checkpoint_dir;

  void validate() const;
};

/// One (t, Z) pair; X_t = α_t X_0 + √h_t Z.
struct DsmDraw {
  double t = 0.0;
  DenseTensor z;
};

/// K draws with t ~ U[t0, T] and standard normal Z.
std::vector<DsmDraw> draw_dsm(std::size_t k, const Shape& shape, const DiffusionSchedule& sched, Rng& rng);

/// The draws training uses for sample `index` of the dataset in `epoch`.
std::vector<DsmDraw> epoch_draws(const TrainConfig& cfg, const DiffusionSchedule& sched, const Shape& shape,
                                 std::size_t epoch, std::size_t n, std::size_t index);

struct DsmResult {
  double loss = 0.0;                // mean over (sample, t) pairs
  std::vector<double> pair_losses;  // ‖S − target‖², sample-major
};

using BatchScore =
    std::function<std::vector<DenseTensor>(std::span<const DenseTensor> xs, std::span<const double> ts)>;

/// Denoising score-matching loss of an arbitrary score function on fixed draws.
DsmResult dsm_loss(const BatchScore& score, std::span<const DenseTensor> batch,
                   std::span<const std::vector<DsmDraw>> draws, const DiffusionSchedule& sched);

/// Network version; with accumulate_grad the loss gradient is added to the
/// parameter gradients.
DsmResult dsm_loss(TuckerScoreNet& net, std::span<const DenseTensor> batch,
                   std::span<const std::vector<DsmDraw>> draws, bool accumulate_grad);

DsmResult dsm_loss(TuckerScoreNet& net, std::span<const DenseTensor> batch, Rng& rng, std::size_t k,
                   bool accumulate_grad);

using EpochCallback = std::function<void(const TrainState&)>;

/// Runs epochs state.epoch .. cfg.epochs - 1. Every per-sample random draw
/// is keyed by (epoch, sample index), so resuming from a checkpoint written
/// after epoch e reproduces the unbroken run exactly.
TrainState train(TuckerScoreNet& net, const Dataset& data, const TrainConfig& cfg, TrainState state = {},
                 const EpochCallback& on_epoch = {});

}  // namespace tucker
