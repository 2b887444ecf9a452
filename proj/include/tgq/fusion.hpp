#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "tgq/config.hpp"
#include "tgq/corpus.hpp"
#include "tgq/encoders.hpp"
#include "tgq/gating.hpp"
#include "tgq/hqc.hpp"
#include "tgq/layers.hpp"
#include "tgq/params.hpp"

namespace tgq {

inline constexpr std::string_view kPromptTemplate =
    "Product image: {'image': <IMG>}, Product metadata: {'brand': $b$, 'category': $c1,c2,c3$, "
    "'title': $t$}. Produce a single embedding for retrieval.";

/// Substitutes $b$, $c1,c2,c3$ and $t$ with the item's fields.
std::string render_prompt(const ItemRecord& item, std::string_view tmpl = kPromptTemplate);

struct PromptSequence {
  Tensor token_embeddings;  // T x d_llm
  std::size_t placeholder = 0;
  Tensor fused;             // (T - 1 + injected rows) x d_llm
};

/// Small pre-norm transformer encoder standing in for the language backbone.
class FusionBackbone {
 public:
  FusionBackbone(ParameterStore& store, const FusionConfig& cfg, std::size_t d_llm);

  /// Token-embeds `prompt` and swaps the single <IMG> row for `injected`.
  PromptSequence assemble(std::string_view prompt, const Tensor& injected) const;
  /// Last-row hidden state, projected to d_out and L2-normalised (1 x d_out).
  Tensor embed(const PromptSequence& seq) const;

  std::size_t d_llm() const { return d_llm_; }

 private:
  struct Layer {
    Norm ln_attn, ln_ffn;
    Attention attn;
    FeedForward ffn;
  };
  FusionConfig cfg_;
  std::size_t d_llm_;
  Tensor tok_embed_;
  std::vector<Layer> layers_;
  Norm final_ln_;
  Linear proj_;
};

/// Everything one item's forward pass produces.
struct ItemForward {
  Tensor z;             // 1 x d_out, unit norm
  HqcOutput raw;        // pre-modulation streams
  Tensor e_txt, e_rnd;  // streams injected into the prompt (post-modulation when gated)
  Tensor beta_txt, beta_rnd;
  Tensor s_txt, s_rnd;  // 1 x d_llm means of the injected streams
  double s_title = 0.0;
  std::size_t fused_len = 0;
};

/// The full item-embedding pipeline for one ablation variant.
class TgqModel {
 public:
  TgqModel(const Config& cfg, Variant variant, std::uint64_t seed);

  ItemForward forward(const ItemRecord& item, const EncodedItem& enc, bool record_attention = false) const;

  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }
  const Hqc& hqc() const { return hqc_; }
  const DualGate* gate() const { return gate_ ? &*gate_ : nullptr; }
  const FusionBackbone& backbone() const { return backbone_; }
  Variant variant() const { return variant_; }
  VariantFlags flags() const { return flags_of(variant_); }
  const Config& config() const { return cfg_; }

 private:
  Config cfg_;
  Variant variant_;
  ParameterStore store_;
  Hqc hqc_;
  std::optional<DualGate> gate_;
  FusionBackbone backbone_;
};

}  // namespace tgq
