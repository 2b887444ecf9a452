#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tgq/config.hpp"
#include "tgq/encoders.hpp"
#include "tgq/layers.hpp"
#include "tgq/params.hpp"

namespace tgq {

/// Strided conv over text tokens; T_g = ceil(L_t / stride) rows.
Tensor downsample_text(const Tensor& h_txt, const Tensor& conv_w, const Tensor& conv_b,
                       std::size_t kernel, std::size_t stride);
/// Q_txt = H~_txt W_Q.
Tensor project_semantic_queries(const Tensor& h_tilde, const Tensor& w_q);

struct HqcOutput {
  Tensor e_txt;  // T_g x d_llm, undefined when the semantic stream is off
  Tensor e_rnd;  // T_r x d_llm, undefined when the exploratory stream is off
  std::size_t t_g = 0, t_r = 0;
  /// attention[layer][head]: (T_g+T_r) x L_v cross-attention weights; only
  /// filled when the forward pass was asked to record.
  std::vector<std::vector<Tensor>> attention;
};

struct AttentionExport {
  std::vector<std::vector<Tensor>> layers;  // raw per-layer, per-head maps
  Tensor semantic_mean;                     // 1 x L_v (last layer, heads and semantic queries averaged)
  Tensor exploratory;                       // T_r x L_v (last layer, heads averaged)
};

class Hqc {
 public:
  Hqc(ParameterStore& store, const HqcConfig& cfg, std::size_t d_v, bool semantic, bool exploratory);

  const HqcConfig& config() const { return cfg_; }
  bool semantic() const { return semantic_; }
  bool exploratory() const { return exploratory_; }
  std::size_t t_g(std::size_t L_t) const;

  Tensor downsample(const Tensor& h_txt) const;
  Tensor semantic_queries(const Tensor& h_txt) const;
  /// [Q_txt; Q_rnd] for the active streams.
  Tensor queries(const Tensor& h_txt) const;
  /// Runs the query blocks; the first `n_semantic` rows of the output form
  /// E_txt and the rest E_rnd.
  HqcOutput forward(const Tensor& q_in, const Tensor& h_img, std::size_t n_semantic,
                    bool record_attention = false) const;
  HqcOutput run(const EncodedItem& item, bool record_attention = false) const;

  const Tensor& q_rnd() const { return q_rnd_; }

 private:
  struct Block {
    Norm ln_self, ln_cross, ln_ffn;
    Attention self_attn, cross_attn;
    FeedForward ffn;
  };
  HqcConfig cfg_;
  bool semantic_, exploratory_;
  Tensor conv_w_, conv_b_, w_q_, q_rnd_;
  std::vector<Block> blocks_;
  Norm final_ln_;
  Linear out_proj_;
};

/// Head-averaged summaries of the last layer. Throws StateError when the
/// output carries no recorded attention.
AttentionExport export_attention(const HqcOutput& out);

/// One TGQT blob per layer ([heads x queries x L_v]) plus 8-bit grayscale
/// heatmaps of the averaged maps, under dir/item_id/.
void write_attention_dump(const std::filesystem::path& dir, const std::string& item_id,
                          const AttentionExport& ex, std::size_t grid_rows, std::size_t grid_cols);

}  // namespace tgq
