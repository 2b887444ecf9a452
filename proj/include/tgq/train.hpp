#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tgq/config.hpp"
#include "tgq/corpus.hpp"
#include "tgq/encoders.hpp"
#include "tgq/fusion.hpp"

namespace tgq {

/// Mean over queries of -log softmax_k(cos(q_i, t_k) / tau) at k = i. The
/// denominator covers every in-batch target, the positive included.
Tensor info_nce(const Tensor& z_queries, const Tensor& z_targets, double tau);

struct LossParts {
  Tensor total;
  double rec = 0.0;
  double rr = 0.0;
};

/// L = L_rec + lambda_rr * L_rr, the second term only when `use_rr`.
LossParts joint_loss(const Tensor& z_queries, const Tensor& z_targets, const Tensor& s_txt,
                     const Tensor& s_rnd, const TrainConfig& cfg, bool use_rr);

/// Items with their frozen encodings, addressable by id.
struct Dataset {
  std::vector<ItemRecord> items;
  std::vector<EncodedItem> encoded;
  std::unordered_map<std::string, std::size_t> index;

  void add(ItemRecord item, EncodedItem enc);
  std::size_t at(const std::string& id) const;
  bool contains(const std::string& id) const { return index.contains(id); }
};

/// Forward both ends of every pair and combine the losses; summaries for the
/// redundancy term pool all 2B items of the batch.
LossParts batch_loss(const TgqModel& model, const Dataset& data, std::span<const IdPair> batch,
                     const TrainConfig& cfg);

/// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW(std::vector<Parameter> params, const TrainConfig& cfg);
  void step(double lr);
  std::size_t steps() const { return t_; }

 private:
  std::vector<Parameter> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, eps_, wd_;
  std::size_t t_ = 0;
};

/// Linear warm-up over the first warmup_frac of steps, cosine decay after.
double lr_at(std::size_t step, std::size_t total, const TrainConfig& cfg);

struct StepLog {
  std::size_t step = 0, epoch = 0;
  double loss = 0, rec = 0, rr = 0, lr = 0;
};

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: keep everything in memory
  std::function<void(const StepLog&)> on_step;
};

struct TrainResult {
  std::vector<StepLog> log;
  std::size_t steps = 0;
};

std::size_t planned_steps(std::size_t n_pairs, const TrainConfig& cfg);

/// Mini-batch training. With an out_dir, writes checkpoints/epoch<k>/ after
/// every epoch (epoch0 = initialisation), checkpoint/ for the latest state
/// and metrics.csv. A non-finite loss raises NumericError and leaves the
/// last good checkpoint in place.
TrainResult train(TgqModel& model, const Dataset& data, std::span<const IdPair> pairs, const TrainConfig& cfg,
                  const TrainOptions& opt = {});

}  // namespace tgq
