#include "tgq/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "tgq/errors.hpp"
#include "tgq/regularizer.hpp"
#include "tgq/rng.hpp"

namespace tgq {

Tensor info_nce(const Tensor& z_queries, const Tensor& z_targets, double tau) {
  if (!(tau > 0)) throw ConfigError("info_nce: tau must be positive");
  if (z_queries.shape() != z_targets.shape())
    throw DimensionError("info_nce: " + shape_str(z_queries.shape()) + " vs " + shape_str(z_targets.shape()));
  if (z_queries.rows() < 2) throw ContractError("info_nce: batch needs at least two pairs");
  const Tensor logits = scale(matmul_nt(l2_normalize(z_queries, 1), l2_normalize(z_targets, 1)), 1.0 / tau);
  return scale(mean(diagonal(log_softmax(logits, 1))), -1.0);
}

LossParts joint_loss(const Tensor& z_queries, const Tensor& z_targets, const Tensor& s_txt,
                     const Tensor& s_rnd, const TrainConfig& cfg, bool use_rr) {
  LossParts out;
  out.total = info_nce(z_queries, z_targets, cfg.tau);
  out.rec = out.total.item();
  if (use_rr && cfg.lambda_rr != 0.0) {
    const Tensor rr = redundancy_loss(s_txt, s_rnd);
    out.rr = rr.item();
    out.total = add(out.total, scale(rr, cfg.lambda_rr));
  }
  return out;
}

void Dataset::add(ItemRecord item, EncodedItem enc) {
  if (index.contains(item.item_id)) throw ContractError("duplicate item id " + item.item_id);
  index.emplace(item.item_id, items.size());
  items.push_back(std::move(item));
  encoded.push_back(std::move(enc));
}

std::size_t Dataset::at(const std::string& id) const {
  auto it = index.find(id);
  if (it == index.end()) throw LookupError("unknown item id " + id);
  return it->second;
}

LossParts batch_loss(const TgqModel& model, const Dataset& data, std::span<const IdPair> batch,
                     const TrainConfig& cfg) {
  std::vector<Tensor> zq, zt, st, sr;
  const bool rr = model.flags().rr;
  for (const auto& p : batch) {
    const std::size_t qi = data.at(p.query_id), ti = data.at(p.target_id);
    ItemForward fq = model.forward(data.items[qi], data.encoded[qi]);
    ItemForward ft = model.forward(data.items[ti], data.encoded[ti]);
    zq.push_back(fq.z);
    zt.push_back(ft.z);
    if (rr) {
      st.push_back(fq.s_txt);
      sr.push_back(fq.s_rnd);
      st.push_back(ft.s_txt);
      sr.push_back(ft.s_rnd);
    }
  }
  Tensor s_txt, s_rnd;
  if (rr) {
    s_txt = concat(st, 0);
    s_rnd = concat(sr, 0);
  }
  return joint_loss(concat(zq, 0), concat(zt, 0), s_txt, s_rnd, cfg, rr);
}

AdamW::AdamW(std::vector<Parameter> params, const TrainConfig& cfg)
    : params_(std::move(params)), beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.adam_eps), wd_(cfg.weight_decay) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor t = params_[k].tensor;
    const auto g = t.grad();
    auto w = t.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1 - beta2_) * g[i] * g[i];
      w[i] -= lr * wd_ * w[i];
      w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
}

double lr_at(std::size_t step, std::size_t total, const TrainConfig& cfg) {
  if (total == 0) return cfg.lr;
  const auto warmup = static_cast<std::size_t>(std::ceil(cfg.warmup_frac * static_cast<double>(total)));
  if (step < warmup) return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const std::size_t span = total - warmup;
  if (span == 0) return cfg.lr;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(span);
  return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
}

std::size_t planned_steps(std::size_t n_pairs, const TrainConfig& cfg) {
  std::size_t per_epoch = n_pairs / cfg.batch_pairs;
  if (n_pairs % cfg.batch_pairs >= 2) ++per_epoch;
  std::size_t total = per_epoch * cfg.epochs;
  if (cfg.max_steps > 0) total = std::min(total, cfg.max_steps);
  return total;
}

TrainResult train(TgqModel& model, const Dataset& data, std::span<const IdPair> pairs, const TrainConfig& cfg,
                  const TrainOptions& opt) {
  if (pairs.empty()) throw ContractError("train: no training pairs");
  if (cfg.batch_pairs < 2) throw ConfigError("train: batch_pairs must be >= 2");
  for (const auto& p : pairs) {
    data.at(p.query_id);
    data.at(p.target_id);
  }
  const bool files = !opt.out_dir.empty();
  std::ofstream csv;
  if (files) {
    std::error_code ec;
    std::filesystem::create_directories(opt.out_dir, ec);
    if (ec) throw IoError("cannot create " + opt.out_dir.string() + ": " + ec.message());
    save_checkpoint(opt.out_dir / "checkpoints" / "epoch0", model.store());
    save_checkpoint(opt.out_dir / "checkpoint", model.store());
    csv.open(opt.out_dir / "metrics.csv");
    if (!csv) throw IoError("cannot write " + (opt.out_dir / "metrics.csv").string());
    csv << "step,L,L_rec,L_rr,lr\n";
    csv.precision(10);
  }

  const std::size_t total = planned_steps(pairs.size(), cfg);
  AdamW opt_state(model.store().params(), cfg);
  TrainResult result;
  std::vector<std::size_t> order(pairs.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs && step < total; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = Rng::stream(cfg.seed, "epoch:" + std::to_string(epoch));
    shuffle(order, rng);
    for (std::size_t start = 0; start < order.size() && step < total; start += cfg.batch_pairs) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_pairs);
      if (end - start < 2) break;
      std::vector<IdPair> batch;
      for (std::size_t k = start; k < end; ++k) batch.push_back(pairs[order[k]]);
      model.store().zero_grad();
      LossParts loss = batch_loss(model, data, batch, cfg);
      const double value = loss.total.item();
      if (!std::isfinite(value))
        throw NumericError("training diverged at step " + std::to_string(step) + " (loss " + std::to_string(value) +
                           "); last good checkpoint kept");
      backward(loss.total);
      const double lr = lr_at(step, total, cfg);
      opt_state.step(lr);
      StepLog log{step, epoch, value, loss.rec, loss.rr, lr};
      result.log.push_back(log);
      if (files) csv << step << ',' << value << ',' << loss.rec << ',' << loss.rr << ',' << lr << '\n';
      if (opt.on_step) opt.on_step(log);
      ++step;
    }
    if (files) {
      save_checkpoint(opt.out_dir / "checkpoints" / ("epoch" + std::to_string(epoch + 1)), model.store());
      save_checkpoint(opt.out_dir / "checkpoint", model.store());
    }
  }
  result.steps = step;
  return result;
}

}  // namespace tgq
