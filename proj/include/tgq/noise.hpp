#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tgq/encoders.hpp"
#include "tgq/image.hpp"
#include "tgq/rng.hpp"

namespace tgq {

enum class Severity { clean, light, medium, heavy };

struct CorruptionSpec {
  Severity severity = Severity::clean;
  double p_bg = 0.0;
  double p_overlay = 0.0;
  std::size_t n_overlays = 0;
  std::uint64_t seed = 0;
};

CorruptionSpec severity_spec(Severity s, std::uint64_t seed = 0);
/// UsageError listing the valid names for anything else.
Severity parse_severity(std::string_view name);
std::string severity_name(Severity s);
inline constexpr std::array<Severity, 4> kSeverities{Severity::clean, Severity::light, Severity::medium,
                                                    Severity::heavy};

inline const std::vector<std::string> kBadgeWords{"HOT", "SALE", "50%", "NEW", "No.1", "TOP", "9.9", "Best"};
inline const std::vector<std::string> kBannerWords{"Free Shipping", "Flash Sale", "New Arrival", "Limited Offer"};

/// Per-item stream: all corruption choices for one item derive from it.
Rng corruption_rng(std::uint64_t seed, std::string_view item_id);

/// Branch decisions, drawn before any geometry so that severities sharing a
/// seed make nested choices.
struct CorruptionDecision {
  bool background = false;
  bool overlay = false;
  std::size_t n_overlays = 0;
};
CorruptionDecision decide(const CorruptionSpec& spec, Rng& rng);

Image center_crop(const Image& img, double r);
/// true = foreground; background iff min(R,G,B) >= 240.
std::vector<bool> foreground_mask(const Image& img);
Image replace_background(const Image& img, std::span<const Image> donors, Rng& rng, double blur_radius = 2.0);

enum class OverlayKind { badge, banner, bar };

struct OverlayRecord {
  OverlayKind kind = OverlayKind::badge;
  int corner = 0;          // 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right; bars: 0 top, 1 bottom
  double size = 0.0;       // badge radius, banner side, bar height (pixels)
  double anchor_x = 0.0, anchor_y = 0.0;
  double rotation = 0.0;
  std::string text;
};

Image apply_overlays(const Image& img, std::size_t n, Rng& rng, std::vector<OverlayRecord>* records = nullptr);

struct CorruptionLog {
  CorruptionDecision decision;
  std::vector<OverlayRecord> overlays;
};

Image corrupt(const Image& img, const CorruptionSpec& spec, Rng& rng, std::span<const Image> donors,
              CorruptionLog* log = nullptr);

/// Token-level analog for synthetic encodings: the background branch swaps
/// the noise component of background tokens for clutter copied from a donor's
/// object tokens; the overlay branch overwrites contiguous token blocks with
/// promo patterns orthogonal to the item's planted factor.
EncodedItem token_corrupt(const Encoder& enc, const EncodedItem& item, const CorruptionSpec& spec, Rng& rng,
                          std::span<const EncodedItem* const> donors = {}, CorruptionLog* log = nullptr);

/// Tokens per overlay block for L_v visual tokens.
std::size_t overlay_block_len(std::size_t L_v);

}  // namespace tgq
