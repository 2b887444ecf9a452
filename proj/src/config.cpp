#include "tgq/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "tgq/errors.hpp"

namespace tgq {

VariantFlags flags_of(Variant v) {
  switch (v) {
    case Variant::a: return {false, true, false, false};
    case Variant::b: return {true, false, false, false};
    case Variant::c: return {true, true, false, false};
    case Variant::d: return {true, true, true, false};
    case Variant::e: return {true, true, true, true};
  }
  return {true, true, true, true};
}

Variant parse_variant(std::string_view s) {
  if (s == "a" || s == "exploratory_only") return Variant::a;
  if (s == "b" || s == "semantic_only") return Variant::b;
  if (s == "c" || s == "hybrid") return Variant::c;
  if (s == "d" || s == "hybrid_gates") return Variant::d;
  if (s == "e" || s == "full") return Variant::e;
  throw UsageError("unknown variant '" + std::string(s) + "' (expected one of a, b, c, d, e)");
}

char variant_letter(Variant v) { return static_cast<char>('a' + static_cast<int>(v)); }

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::a: return "exploratory_only";
    case Variant::b: return "semantic_only";
    case Variant::c: return "hybrid";
    case Variant::d: return "hybrid_gates";
    case Variant::e: return "full";
  }
  return "full";
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end)
    throw ConfigError("bad value '" + std::string(v) + "' for key " + std::string(key));
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean '" + std::string(v) + "' for key " + std::string(key));
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::function<void(Config&, std::string_view)> set;
  std::function<std::string(const Config&)> get;
};

#define TGQ_SIZE(key, member)                                                               \
  {                                                                                         \
    key, Field {                                                                            \
      [](Config& c, std::string_view v) { c.member = parse_number<std::size_t>(key, v); }, \
          [](const Config& c) { return std::to_string(c.member); }                          \
    }                                                                                       \
  }
#define TGQ_U64(key, member)                                                                  \
  {                                                                                           \
    key, Field {                                                                              \
      [](Config& c, std::string_view v) { c.member = parse_number<std::uint64_t>(key, v); }, \
          [](const Config& c) { return std::to_string(c.member); }                            \
    }                                                                                         \
  }
#define TGQ_INT(key, member)                                                        \
  {                                                                                 \
    key, Field {                                                                    \
      [](Config& c, std::string_view v) { c.member = parse_number<int>(key, v); }, \
          [](const Config& c) { return std::to_string(c.member); }                  \
    }                                                                               \
  }
#define TGQ_REAL(key, member)                                                          \
  {                                                                                    \
    key, Field {                                                                       \
      [](Config& c, std::string_view v) { c.member = parse_number<double>(key, v); }, \
          [](const Config& c) { return fmt(c.member); }                                \
    }                                                                                  \
  }
#define TGQ_STR(key, member)                                                 \
  {                                                                          \
    key, Field {                                                             \
      [](Config& c, std::string_view v) { c.member = std::string(v); },     \
          [](const Config& c) { return c.member; }                           \
    }                                                                        \
  }

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table = {
      TGQ_SIZE("encoder.d_v", encoder.d_v),
      TGQ_SIZE("encoder.L_v", encoder.L_v),
      TGQ_SIZE("encoder.max_title_tokens", encoder.max_title_tokens),
      TGQ_STR("encoder.mode", encoder.mode),
      TGQ_U64("encoder.seed", encoder.seed),
      TGQ_SIZE("encoder.vocab_size", encoder.vocab_size),
      TGQ_REAL("encoder.pos_scale", encoder.pos_scale),
      TGQ_SIZE("hqc.kernel", hqc.kernel),
      TGQ_SIZE("hqc.stride", hqc.stride),
      TGQ_SIZE("hqc.T_r", hqc.T_r),
      TGQ_SIZE("hqc.d_q", hqc.d_q),
      TGQ_SIZE("hqc.d_llm", hqc.d_llm),
      TGQ_SIZE("hqc.n_layers", hqc.n_layers),
      TGQ_SIZE("hqc.n_heads", hqc.n_heads),
      {"hqc.self_attention",
       Field{[](Config& c, std::string_view v) {
               c.hqc.self_attention = parse_bool("hqc.self_attention", v);
             },
             [](const Config& c) { return std::string(c.hqc.self_attention ? "true" : "false"); }}},
      TGQ_SIZE("gate.hidden", gate.hidden),
      TGQ_SIZE("fusion.n_layers", fusion.n_layers),
      TGQ_SIZE("fusion.n_heads", fusion.n_heads),
      TGQ_SIZE("fusion.d_out", fusion.d_out),
      TGQ_SIZE("fusion.vocab_size", fusion.vocab_size),
      TGQ_REAL("train.tau", train.tau),
      TGQ_REAL("train.lambda_rr", train.lambda_rr),
      TGQ_REAL("train.lr", train.lr),
      TGQ_REAL("train.weight_decay", train.weight_decay),
      TGQ_REAL("train.beta1", train.beta1),
      TGQ_REAL("train.beta2", train.beta2),
      TGQ_REAL("train.adam_eps", train.adam_eps),
      TGQ_REAL("train.warmup_frac", train.warmup_frac),
      TGQ_SIZE("train.batch_pairs", train.batch_pairs),
      TGQ_SIZE("train.epochs", train.epochs),
      TGQ_SIZE("train.max_steps", train.max_steps),
      TGQ_U64("train.seed", train.seed),
      {"train.variant",
       Field{[](Config& c, std::string_view v) { c.train.variant = parse_variant(v); },
             [](const Config& c) { return std::string(1, variant_letter(c.train.variant)); }}},
      TGQ_SIZE("corpus.n_items", corpus.n_items),
      TGQ_SIZE("corpus.n_brands", corpus.n_brands),
      TGQ_SIZE("corpus.n_cats", corpus.n_cats),
      TGQ_REAL("corpus.planted_overlap", corpus.planted_overlap),
      TGQ_U64("corpus.seed", corpus.seed),
      TGQ_SIZE("corpus.n_test_pairs", corpus.n_test_pairs),
      TGQ_SIZE("corpus.pair_cap", corpus.pair_cap),
      TGQ_STR("corpus.corrupt_severity", corpus.corrupt_severity),
      TGQ_REAL("corpus.corrupt_fraction", corpus.corrupt_fraction),
      TGQ_INT("corpus.image_size", corpus.image_size),
  };
  return table;
}

#undef TGQ_SIZE
#undef TGQ_U64
#undef TGQ_INT
#undef TGQ_REAL
#undef TGQ_STR

}  // namespace

void Config::set(std::string_view key, std::string_view value) {
  const auto& f = fields();
  auto it = f.find(key);
  if (it == f.end()) throw ConfigError("unknown config key: " + std::string(key));
  it->second.set(*this, trim(value));
}

void Config::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(encoder.d_v >= 2, "encoder.d_v must be >= 2");
  need(encoder.L_v >= 1, "encoder.L_v must be >= 1");
  need(encoder.max_title_tokens >= 1, "encoder.max_title_tokens must be >= 1");
  need(encoder.mode == "synthetic" || encoder.mode == "ingest",
       "encoder.mode must be synthetic or ingest");
  need(encoder.vocab_size >= 1 && fusion.vocab_size >= 1, "vocab sizes must be positive");
  need(hqc.kernel >= 1 && hqc.stride >= 1, "hqc.kernel and hqc.stride must be >= 1");
  need(hqc.T_r >= 1, "hqc.T_r must be >= 1");
  need(hqc.n_heads >= 1 && hqc.d_q % hqc.n_heads == 0, "hqc.d_q must be divisible by hqc.n_heads");
  need(hqc.d_llm >= 1 && hqc.n_layers >= 1, "hqc.d_llm and hqc.n_layers must be >= 1");
  need(gate.hidden >= 1, "gate.hidden must be >= 1");
  need(fusion.n_heads >= 1 && hqc.d_llm % fusion.n_heads == 0,
       "hqc.d_llm must be divisible by fusion.n_heads");
  need(fusion.d_out >= 1, "fusion.d_out must be >= 1");
  need(train.tau > 0, "train.tau must be positive");
  need(train.lambda_rr >= 0, "train.lambda_rr must be non-negative");
  need(train.lr > 0, "train.lr must be positive");
  need(train.warmup_frac >= 0 && train.warmup_frac <= 1, "train.warmup_frac must lie in [0,1]");
  need(train.batch_pairs >= 2, "train.batch_pairs must be >= 2");
  need(corpus.planted_overlap >= 0 && corpus.planted_overlap <= 1,
       "corpus.planted_overlap must lie in [0,1]");
  need(corpus.corrupt_fraction >= 0 && corpus.corrupt_fraction <= 1,
       "corpus.corrupt_fraction must lie in [0,1]");
  need(corpus.n_brands >= 1 && corpus.n_cats >= 1, "corpus.n_brands and corpus.n_cats must be >= 1");
  need(corpus.image_size >= 16, "corpus.image_size must be >= 16");
}

std::map<std::string, std::string> Config::entries() const {
  std::map<std::string, std::string> out;
  for (const auto& [k, f] : fields()) out[k] = f.get(*this);
  return out;
}

std::string Config::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries()) out += k + " = " + v + "\n";
  return out;
}

Config parse_config(std::string_view text, std::string_view origin) {
  Config cfg;
  std::size_t lineno = 0;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(std::string(origin) + ":" + std::to_string(lineno) + ": expected key = value");
    cfg.set(trim(std::string_view(t).substr(0, eq)), std::string_view(t).substr(eq + 1));
  }
  return cfg;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), path.string());
}

}  // namespace tgq
