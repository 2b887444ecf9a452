#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace tgq {

struct EncoderConfig {
  std::size_t d_v = 16;
  std::size_t L_v = 16;
  std::size_t max_title_tokens = 50;
  std::string mode = "synthetic";  // synthetic | ingest
  std::uint64_t seed = 7;
  std::size_t vocab_size = 8192;
  double pos_scale = 0.1;
};

struct HqcConfig {
  std::size_t kernel = 5;
  std::size_t stride = 5;
  std::size_t T_r = 3;
  std::size_t d_q = 32;
  std::size_t d_llm = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  bool self_attention = true;
};

struct GateConfig {
  std::size_t hidden = 64;
};

struct FusionConfig {
  std::size_t n_layers = 1;
  std::size_t n_heads = 2;
  std::size_t d_out = 256;
  std::size_t vocab_size = 8192;
};

enum class Variant { a, b, c, d, e };

struct VariantFlags {
  bool semantic, exploratory, gates, rr;
};

VariantFlags flags_of(Variant v);
Variant parse_variant(std::string_view s);
char variant_letter(Variant v);
std::string variant_name(Variant v);

struct TrainConfig {
  double tau = 0.07;
  double lambda_rr = 1.0;
  double lr = 3e-5;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double warmup_frac = 0.1;
  std::size_t batch_pairs = 32;
  std::size_t epochs = 3;
  std::size_t max_steps = 0;  // 0 = no limit
  std::uint64_t seed = 42;
  Variant variant = Variant::e;
};

struct CorpusConfig {
  std::size_t n_items = 2000;
  std::size_t n_brands = 12;
  std::size_t n_cats = 24;
  double planted_overlap = 0.8;
  std::uint64_t seed = 42;
  std::size_t n_test_pairs = 200;
  std::size_t pair_cap = 1200000;
  std::string corrupt_severity = "medium";
  double corrupt_fraction = 0.5;
  int image_size = 64;
};

struct Config {
  EncoderConfig encoder;
  HqcConfig hqc;
  GateConfig gate;
  FusionConfig fusion;
  TrainConfig train;
  CorpusConfig corpus;

  /// Sets one key; unknown keys and unparsable values raise ConfigError.
  void set(std::string_view key, std::string_view value);
  /// Cross-field checks (positivity, divisibility, ranges).
  void validate() const;
  /// Every key with its current value, sorted by key.
  std::map<std::string, std::string> entries() const;
  std::string to_text() const;
};

/// Flat `key = value` text; `#` starts a comment, blank lines are ignored.
Config parse_config(std::string_view text, std::string_view origin = "<string>");
Config load_config(const std::filesystem::path& path);

}  // namespace tgq
