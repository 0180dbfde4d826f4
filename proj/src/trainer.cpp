#include "tuckerdiff/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace tucker {

void TrainConfig::validate() const {
  if (epochs == 0) throw ValidationError("epochs must be >= 1");
  if (batch_size == 0) throw ValidationError("batch_size must be >= 1");
  if (times_per_sample == 0) throw ValidationError("times_per_sample must be >= 1");
  adam.validate();
  if (checkpoint_every > 0 && checkpoint_dir.empty())
    throw ValidationError("checkpoint cadence set without a checkpoint directory");
}

std::vector<DsmDraw> draw_dsm(std::size_t k, const Shape& shape, const DiffusionSchedule& sched, Rng& rng) {
  std::vector<DsmDraw> out(k);
  for (DsmDraw& d : out) {
    d.t = rng.uniform(sched.t0, sched.T);
    d.z = sample_standard_normal(shape, rng);
  }
  return out;
}

std::vector<DsmDraw> epoch_draws(const TrainConfig& cfg, const DiffusionSchedule& sched, const Shape& shape,
                                 std::size_t epoch, std::size_t n, std::size_t index) {
  Rng rng = Rng(cfg.seed).substream(Stream::kTrainSample, static_cast<std::uint64_t>(epoch * n + index));
  return draw_dsm(cfg.times_per_sample, shape, sched, rng);
}

namespace {

struct Prepared {
  std::vector<DenseTensor> xt;
  std::vector<double> ts;
  std::vector<DenseTensor> target;
};

Prepared prepare(std::span<const DenseTensor> batch, std::span<const std::vector<DsmDraw>> draws,
                 const DiffusionSchedule& sched) {
  if (batch.empty()) throw ValidationError("dsm_loss needs a non-empty batch");
  if (draws.size() != batch.size()) throw ValidationError("dsm_loss needs one draw list per sample");
  Prepared p;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (draws[i].empty()) throw ValidationError("dsm_loss needs at least one draw per sample");
    for (const DsmDraw& d : draws[i]) {
      p.xt.push_back(forward_sample(batch[i], d.t, sched, d.z));
      p.target.push_back(transition_score(p.xt.back(), batch[i], d.t, sched));
      p.ts.push_back(d.t);
    }
  }
  return p;
}

DsmResult reduce(const Prepared& p, const std::vector<DenseTensor>& scores) {
  DsmResult out;
  out.pair_losses.resize(scores.size());
  for (std::size_t k = 0; k < scores.size(); ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < scores[k].size(); ++i) {
      const double e = scores[k][i] - p.target[k][i];
      acc += e * e;
    }
    if (!std::isfinite(acc)) throw NumericalError("non-finite score-matching loss at t = " + std::to_string(p.ts[k]));
    out.pair_losses[k] = acc;
  }
  out.loss = std::accumulate(out.pair_losses.begin(), out.pair_losses.end(), 0.0) /
             static_cast<double>(out.pair_losses.size());
  return out;
}

}  // namespace

DsmResult dsm_loss(const BatchScore& score, std::span<const DenseTensor> batch,
                   std::span<const std::vector<DsmDraw>> draws, const DiffusionSchedule& sched) {
  const Prepared p = prepare(batch, draws, sched);
  return reduce(p, score(p.xt, p.ts));
}

DsmResult dsm_loss(TuckerScoreNet& net, std::span<const DenseTensor> batch,
                   std::span<const std::vector<DsmDraw>> draws, bool accumulate_grad) {
  const Prepared p = prepare(batch, draws, net.config().sched);
  NetTape tape;
  const std::vector<DenseTensor> scores = net.forward(p.xt, p.ts, accumulate_grad ? &tape : nullptr);
  DsmResult out = reduce(p, scores);
  if (accumulate_grad) {
    const double scale = 2.0 / static_cast<double>(scores.size());
    std::vector<DenseTensor> grads;
    grads.reserve(scores.size());
    for (std::size_t k = 0; k < scores.size(); ++k) {
      DenseTensor g = scores[k] - p.target[k];
      g *= scale;
      grads.push_back(std::move(g));
    }
    net.backward(tape, grads);
  }
  return out;
}

DsmResult dsm_loss(TuckerScoreNet& net, std::span<const DenseTensor> batch, Rng& rng, std::size_t k,
                   bool accumulate_grad) {
  std::vector<std::vector<DsmDraw>> draws;
  for (const DenseTensor& x : batch) draws.push_back(draw_dsm(k, x.shape(), net.config().sched, rng));
  return dsm_loss(net, batch, draws, accumulate_grad);
}

TrainState train(TuckerScoreNet& net, const Dataset& data, const TrainConfig& cfg, TrainState state,
                 const EpochCallback& on_epoch) {
  cfg.validate();
  data.validate();
  if (data.sample_shape() != net.config().shape)
    throw ValidationError("training data shape " + to_string(data.sample_shape()) + " does not match network " +
                          to_string(net.config().shape));
  const std::size_t n = data.size();
  const Shape& shape = net.config().shape;
  const DiffusionSchedule& sched = net.config().sched;

  for (std::size_t epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = Rng(cfg.seed).substream(Stream::kShuffle, epoch);
    std::shuffle(order.begin(), order.end(), shuffle.engine());

    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t b = 0; b < n; b += cfg.batch_size) {
      const std::size_t e = std::min(n, b + cfg.batch_size);
      std::vector<DenseTensor> batch;
      std::vector<std::vector<DsmDraw>> draws;
      for (std::size_t k = b; k < e; ++k) {
        batch.push_back(data.samples[order[k]]);
        draws.push_back(epoch_draws(cfg, sched, shape, epoch, n, order[k]));
      }
      net.params().zero_grad();
      const DsmResult r = dsm_loss(net, batch, draws, true);
      nn::adam_step(net.params(), cfg.adam);
      net.project_parameters();
      total += r.loss * static_cast<double>(r.pair_losses.size());
      pairs += r.pair_losses.size();
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    state.epoch = epoch + 1;
    state.loss_history.push_back(total / static_cast<double>(pairs));
    state.epoch_seconds.push_back(seconds);
    if (cfg.checkpoint_every > 0 && (state.epoch % cfg.checkpoint_every == 0 || state.epoch == cfg.epochs))
      save_checkpoint(cfg.checkpoint_dir, net, state);
    if (on_epoch) on_epoch(state);
  }
  return state;
}

}  // namespace tucker
