#include "tgq/hqc.hpp"

#include <algorithm>

#include "tgq/blob.hpp"
#include "tgq/errors.hpp"
#include "tgq/image.hpp"

namespace tgq {

Tensor downsample_text(const Tensor& h_txt, const Tensor& conv_w, const Tensor& conv_b,
                       std::size_t kernel, std::size_t stride) {
  if (kernel < 1 || stride < 1) throw ConfigError("downsample_text: kernel and stride must be >= 1");
  return conv1d(h_txt, conv_w, conv_b, kernel, stride);
}

Tensor project_semantic_queries(const Tensor& h_tilde, const Tensor& w_q) { return matmul(h_tilde, w_q); }

Hqc::Hqc(ParameterStore& store, const HqcConfig& cfg, std::size_t d_v, bool semantic, bool exploratory)
    : cfg_(cfg), semantic_(semantic), exploratory_(exploratory) {
  if (!semantic && !exploratory) throw ConfigError("hqc needs at least one query stream");
  if (cfg.kernel < 1 || cfg.stride < 1) throw ConfigError("hqc kernel and stride must be >= 1");
  if (cfg.n_heads == 0 || cfg.d_q % cfg.n_heads != 0)
    throw ConfigError("hqc d_q must be divisible by n_heads");
  const std::size_t dq = cfg.d_q;
  if (semantic) {
    conv_w_ = store.uniform("hqc.semantic.conv.w", {cfg.kernel * d_v, d_v}, cfg.kernel * d_v);
    conv_b_ = store.uniform("hqc.semantic.conv.b", {1, d_v}, cfg.kernel * d_v);
    w_q_ = store.uniform("hqc.semantic.w_q", {d_v, dq}, d_v);
  }
  if (exploratory) q_rnd_ = store.uniform("hqc.exploratory.q_rnd", {cfg.T_r, dq}, 1);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "hqc.layer" + std::to_string(l);
    Block b;
    if (cfg.self_attention) {
      b.ln_self = Norm(store, p + ".ln_self", dq);
      b.self_attn = Attention(store, p + ".self_attn", dq, dq, cfg.n_heads);
    }
    b.ln_cross = Norm(store, p + ".ln_cross", dq);
    b.cross_attn = Attention(store, p + ".cross_attn", dq, d_v, cfg.n_heads);
    b.ln_ffn = Norm(store, p + ".ln_ffn", dq);
    b.ffn = FeedForward(store, p + ".ffn", dq, 4 * dq);
    blocks_.push_back(std::move(b));
  }
  final_ln_ = Norm(store, "hqc.final_ln", dq);
  out_proj_ = Linear(store, "hqc.out_proj", dq, cfg.d_llm);
}

std::size_t Hqc::t_g(std::size_t L_t) const { return conv1d_out_len(L_t, cfg_.stride); }

Tensor Hqc::downsample(const Tensor& h_txt) const {
  if (!semantic_) throw StateError("semantic stream is disabled in this variant");
  return downsample_text(h_txt, conv_w_, conv_b_, cfg_.kernel, cfg_.stride);
}

Tensor Hqc::semantic_queries(const Tensor& h_txt) const {
  return project_semantic_queries(downsample(h_txt), w_q_);
}

Tensor Hqc::queries(const Tensor& h_txt) const {
  if (semantic_ && exploratory_) return concat({semantic_queries(h_txt), q_rnd_}, 0);
  if (semantic_) return semantic_queries(h_txt);
  return q_rnd_;
}

HqcOutput Hqc::forward(const Tensor& q_in, const Tensor& h_img, std::size_t n_semantic,
                       bool record_attention) const {
  if (q_in.cols() != cfg_.d_q)
    throw DimensionError("hqc queries have width " + std::to_string(q_in.cols()) + ", expected " +
                         std::to_string(cfg_.d_q));
  if (n_semantic > q_in.rows()) throw DimensionError("hqc: more semantic rows than queries");
  HqcOutput out;
  Tensor x = q_in;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const Block& b = blocks_[l];
    if (cfg_.self_attention) {
      const Tensor n = b.ln_self(x);
      x = add(x, b.self_attn(n, n));
    }
    std::vector<Tensor>* maps = nullptr;
    if (record_attention) maps = &out.attention.emplace_back();
    x = add(x, b.cross_attn(b.ln_cross(x), h_img, maps));
    x = add(x, b.ffn(b.ln_ffn(x)));
    if (!all_finite(x)) throw NumericError("hqc layer " + std::to_string(l) + " produced non-finite values");
  }
  const Tensor e = out_proj_(final_ln_(x));
  out.t_g = n_semantic;
  out.t_r = q_in.rows() - n_semantic;
  if (out.t_g > 0) out.e_txt = out.t_r > 0 ? slice(e, 0, 0, out.t_g) : e;
  if (out.t_r > 0) out.e_rnd = out.t_g > 0 ? slice(e, 0, out.t_g, e.rows()) : e;
  return out;
}

HqcOutput Hqc::run(const EncodedItem& item, bool record_attention) const {
  const std::size_t n_sem = semantic_ ? t_g(item.h_txt.rows()) : 0;
  return forward(queries(item.h_txt), item.h_img, n_sem, record_attention);
}

AttentionExport export_attention(const HqcOutput& out) {
  if (out.attention.empty())
    throw StateError("no attention recorded: run the connector forward with recording enabled first");
  AttentionExport ex;
  ex.layers = out.attention;
  const auto& last = out.attention.back();
  const std::size_t rows = last.front().rows(), L = last.front().cols();
  std::vector<double> avg(rows * L, 0.0);
  for (const auto& h : last) {
    const auto d = h.data();
    for (std::size_t k = 0; k < avg.size(); ++k) avg[k] += d[k] / static_cast<double>(last.size());
  }
  if (out.t_g > 0) {
    std::vector<double> sem(L, 0.0);
    for (std::size_t r = 0; r < out.t_g; ++r)
      for (std::size_t j = 0; j < L; ++j) sem[j] += avg[r * L + j] / static_cast<double>(out.t_g);
    ex.semantic_mean = Tensor::from({1, L}, std::move(sem));
  }
  if (out.t_r > 0)
    ex.exploratory = Tensor::from({out.t_r, L}, std::vector<double>(avg.begin() + out.t_g * L, avg.end()));
  return ex;
}

namespace {

void write_heatmap(const std::filesystem::path& path, std::span<const double> row, std::size_t gr,
                   std::size_t gc) {
  constexpr int kCell = 16;
  const double peak = *std::max_element(row.begin(), row.end());
  Image img(static_cast<int>(gc) * kCell, static_cast<int>(gr) * kCell);
  for (std::size_t r = 0; r < gr; ++r)
    for (std::size_t c = 0; c < gc; ++c) {
      const double v = peak > 0 ? row[r * gc + c] / peak : 0.0;
      const auto g = static_cast<std::uint8_t>(std::clamp(v * 255.0 + 0.5, 0.0, 255.0));
      fill_rect(img, c * kCell, r * kCell, (c + 1) * kCell, (r + 1) * kCell, {g, g, g});
    }
  write_ppm(path, img);
}

}  // namespace

void write_attention_dump(const std::filesystem::path& dir, const std::string& item_id,
                          const AttentionExport& ex, std::size_t grid_rows, std::size_t grid_cols) {
  const auto root = dir / item_id;
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
  for (std::size_t l = 0; l < ex.layers.size(); ++l) {
    const auto& heads = ex.layers[l];
    const std::size_t q = heads.front().rows(), L = heads.front().cols();
    std::vector<double> all;
    for (const auto& h : heads) all.insert(all.end(), h.data().begin(), h.data().end());
    write_blob(root / ("layer" + std::to_string(l) + ".tgqt"), Tensor::from({heads.size(), q, L}, std::move(all)));
  }
  if (ex.semantic_mean.defined()) write_heatmap(root / "semantic_mean.ppm", ex.semantic_mean.data(), grid_rows, grid_cols);
  if (ex.exploratory.defined()) {
    const std::size_t L = ex.exploratory.cols();
    for (std::size_t r = 0; r < ex.exploratory.rows(); ++r)
      write_heatmap(root / ("exploratory" + std::to_string(r) + ".ppm"), ex.exploratory.data().subspan(r * L, L),
                    grid_rows, grid_cols);
  }
}

}  // namespace tgq
