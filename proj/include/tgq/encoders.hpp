#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tgq/config.hpp"
#include "tgq/corpus.hpp"
#include "tgq/image.hpp"
#include "tgq/tensor.hpp"

namespace tgq {

/// Whitespace split; inside a chunk, runs of letters/digits (and any
/// non-ASCII byte) form one token and every other character stands alone.
/// The placeholder `<IMG>` is always a single token.
std::vector<std::string> tokenize(std::string_view text);
std::size_t token_id(std::string_view token, std::size_t vocab_size);

/// brand, the three category levels and the title, space separated.
std::string metadata_text(const ItemRecord& item);

/// Synthetic-image decomposition kept alongside the visual tokens so the
/// token-level corruption can tell product content from the rest.
struct LatentParts {
  Tensor product;                  // L_v x d_v
  Tensor noise;                    // L_v x d_v (background, clutter, promo)
  Tensor factor;                   // k x d_v, orthonormal rows spanning the planted signal
  std::vector<bool> object_mask;   // true where the product is drawn
};

struct EncodedItem {
  Tensor h_img;    // L_v x d_v
  Tensor f_img;    // 1 x d_v, mean of h_img rows
  Tensor h_txt;    // L_t x d_v
  Tensor f_title;  // 1 x d_v
  std::optional<LatentParts> latent;
};

struct FeatureEntry {
  std::string image_blob;
  std::string text_blob;  // may be empty
};

/// Tab separated: item_id, image blob path, optional text blob path.
std::map<std::string, FeatureEntry> read_feature_manifest(const std::filesystem::path& path);

Tensor mean_rows(const Tensor& t);

/// Frozen encoder stand-in. Every output is a pure function of the input
/// content, the encoder seed and the config; nothing here is trainable.
class Encoder {
 public:
  explicit Encoder(EncoderConfig cfg);
  const EncoderConfig& config() const { return cfg_; }

  /// Base embedding of one token (no positional term), 1 x d_v.
  Tensor token_embedding(std::string_view token) const;
  /// Sinusoidal offset for position `pos`, scaled by pos_scale, 1 x d_v.
  Tensor positional(std::size_t pos) const;

  /// Token rows (base + position), truncated to max_title_tokens.
  Tensor encode_text(std::string_view text) const;
  /// Mean of the base token embeddings of the (truncated) title.
  Tensor encode_title_global(std::string_view title) const;

  /// Patch-statistics encoder for pixel images; tokens follow a row-major
  /// patch grid with L_v cells.
  std::pair<Tensor, Tensor> encode_image(const Image& img) const;
  /// Validates an ingested L_v x d_v feature blob and pools it.
  std::pair<Tensor, Tensor> encode_image_blob(const Tensor& blob) const;
  /// Latent synthetic image, with its product/noise decomposition.
  EncodedItem encode_latent(const ItemRecord& item, const LatentImage& latent) const;

  /// Resolves image_ref / feature_ref relative to `base_dir`.
  EncodedItem encode(const ItemRecord& item, const std::filesystem::path& base_dir,
                     const std::map<std::string, FeatureEntry>* manifest = nullptr) const;

  /// Shared promotional-overlay pattern `k` (unit-scale), 1 x d_v.
  Tensor promo_pattern(std::size_t k) const;
  static constexpr std::size_t kPromoPatterns = 12;

  std::size_t grid_rows() const { return grid_r_; }
  std::size_t grid_cols() const { return grid_c_; }
  std::vector<bool> object_mask() const;

 private:
  EncoderConfig cfg_;
  std::size_t grid_r_, grid_c_;
  std::vector<double> pixel_proj_;  // d_v x 9
  std::vector<double> background_;  // d_v
};

}  // namespace tgq
