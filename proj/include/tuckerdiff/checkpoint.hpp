#pragma once

#include <filesystem>
#include <vector>

#include "tuckerdiff/tucker_net.hpp"

namespace tucker {

struct TrainState {
  std::size_t epoch = 0;  // completed epochs
  std::vector<double> loss_history;
  std::vector<double> epoch_seconds;  // this process only; never checkpointed
};

// Directory layout: manifest.json plus one TEN1 file per parameter for the
// value and both Adam moments (<name>.value.ten, .m.ten, .v.ten), float64.
// The manifest records the network config, parameter names and shapes,
// the Adam step count, the epoch and the loss history. Wall-clock timings stay
// out so that checkpoints are reproducible byte for byte.
void save_checkpoint(const std::filesystem::path& dir, const TuckerScoreNet& net, const TrainState& state);

struct LoadedCheckpoint {
  TuckerScoreNet net;
  TrainState state;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace tucker
