#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tgq/image.hpp"

namespace tgq {

struct ItemRecord {
  std::string item_id;
  std::string title;
  std::string brand;
  std::array<std::string, 3> categories;
  std::optional<std::string> image_ref;
  std::optional<std::string> feature_ref;
  std::vector<std::string> related;
};

struct IdPair {
  std::string query_id;
  std::string target_id;
  friend bool operator==(const IdPair&, const IdPair&) = default;
};

struct PairSet {
  std::vector<IdPair> pairs;
  std::uint64_t seed = 0;
  std::size_t cap = 0;
};

struct TestSplit {
  PairSet pairs;
  std::set<std::string> blocklist;
  bool shortfall = false;
};

/// Hidden generating factors of a synthetic item image.
struct LatentImage {
  std::string product_key;                 // shared by every item of one product
  std::vector<std::string> anchor_tokens;  // family words the product signal is aligned to
  double overlap = 1.0;                    // share of image content driven by the product
  std::uint64_t noise_seed = 0;
};

struct SynthCorpus {
  std::vector<ItemRecord> items;
  std::vector<LatentImage> latents;  // parallel to items
};

/// Truncates a category path to three levels, padding short paths by
/// repeating the last level. Returns nullopt for an empty path.
std::optional<std::array<std::string, 3>> parse_categories(std::span<const std::string> raw_path);

/// Non-empty title and exactly one of image_ref / feature_ref.
bool is_valid_item(const ItemRecord& item);

/// Directed (item, related) pairs over valid, non-blocklisted ids, shuffled
/// with `seed` and truncated to `cap`.
PairSet build_pairs(std::span<const ItemRecord> items, const std::set<std::string>& blocklist,
                    std::size_t cap, std::uint64_t seed);

/// Shuffles valid ids with `seed`; every candidate with a valid related
/// target contributes (candidate, first valid target) until `n_pairs` exist.
TestSplit sample_test_pairs(std::span<const ItemRecord> items, std::size_t n_pairs, std::uint64_t seed);

struct SynthOptions {
  std::size_t n_items = 200;
  std::size_t n_brands = 4;
  std::size_t n_cats = 8;
  double planted_overlap = 1.0;
  std::uint64_t seed = 42;
};

/// Planted corpus: items come in products of 2-4; items of a product share a
/// brand, a category family and a latent image factor, and relate to each
/// other in both directions.
SynthCorpus synth_corpus(const SynthOptions& opt);

/// Renders a PPM-ready picture of a synthetic item on a white background.
Image render_latent_image(const LatentImage& latent, int size);

// ---- files -----------------------------------------------------------------

/// One JSON object per line.
std::vector<ItemRecord> read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, std::span<const ItemRecord> items);
std::vector<IdPair> read_pairs(const std::filesystem::path& path);
void write_pairs(const std::filesystem::path& path, std::span<const IdPair> pairs);
std::set<std::string> read_blocklist(const std::filesystem::path& path);
void write_blocklist(const std::filesystem::path& path, const std::set<std::string>& ids);

}  // namespace tgq
