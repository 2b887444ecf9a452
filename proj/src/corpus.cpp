#include "tgq/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <unordered_map>

#include <json.hpp>

#include "tgq/errors.hpp"
#include "tgq/rng.hpp"

namespace tgq {

std::optional<std::array<std::string, 3>> parse_categories(std::span<const std::string> raw_path) {
  if (raw_path.empty()) return std::nullopt;
  std::array<std::string, 3> out;
  for (std::size_t i = 0; i < 3; ++i) out[i] = raw_path[std::min(i, raw_path.size() - 1)];
  return out;
}

bool is_valid_item(const ItemRecord& item) {
  if (item.item_id.empty() || item.title.empty()) return false;
  if (item.title.find_first_not_of(" \t\r\n") == std::string::npos) return false;
  return item.image_ref.has_value() != item.feature_ref.has_value();
}

namespace {

std::unordered_map<std::string, const ItemRecord*> valid_index(std::span<const ItemRecord> items) {
  std::unordered_map<std::string, const ItemRecord*> idx;
  for (const auto& it : items)
    if (is_valid_item(it)) idx.emplace(it.item_id, &it);
  return idx;
}

}  // namespace

PairSet build_pairs(std::span<const ItemRecord> items, const std::set<std::string>& blocklist,
                    std::size_t cap, std::uint64_t seed) {
  PairSet out;
  out.seed = seed;
  out.cap = cap;
  if (cap == 0) return out;
  const auto valid = valid_index(items);
  for (const auto& it : items) {
    if (!valid.contains(it.item_id) || blocklist.contains(it.item_id)) continue;
    for (const auto& r : it.related) {
      if (r == it.item_id || !valid.contains(r) || blocklist.contains(r)) continue;
      out.pairs.push_back({it.item_id, r});
    }
  }
  Rng rng(seed);
  shuffle(out.pairs, rng);
  if (out.pairs.size() > cap) out.pairs.resize(cap);
  return out;
}

TestSplit sample_test_pairs(std::span<const ItemRecord> items, std::size_t n_pairs, std::uint64_t seed) {
  if (n_pairs < 1) throw ContractError("sample_test_pairs: n_pairs must be >= 1");
  TestSplit out;
  out.pairs.seed = seed;
  out.pairs.cap = n_pairs;
  const auto valid = valid_index(items);
  std::vector<const ItemRecord*> order;
  for (const auto& it : items)
    if (valid.contains(it.item_id)) order.push_back(&it);
  Rng rng(seed);
  shuffle(order, rng);
  for (const ItemRecord* q : order) {
    if (out.pairs.pairs.size() >= n_pairs) break;
    for (const auto& r : q->related) {
      if (r == q->item_id || !valid.contains(r)) continue;
      out.pairs.pairs.push_back({q->item_id, r});
      out.blocklist.insert(q->item_id);
      out.blocklist.insert(r);
      break;
    }
  }
  out.shortfall = out.pairs.pairs.size() < n_pairs;
  return out;
}

// ---- synthetic corpus ---------------------------------------------------------

namespace {

constexpr std::size_t kFamilyWords = 6;
constexpr std::size_t kTitleFamilyWords = 3;
constexpr std::size_t kFillerPool = 200;
constexpr std::size_t kFillerWords = 2;

std::string item_id_of(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "it%05zu", i);
  return buf;
}

std::string family_word(std::size_t cat, std::size_t j) {
  return "k" + std::to_string(cat) + "w" + std::to_string(j);
}

}  // namespace

SynthCorpus synth_corpus(const SynthOptions& opt) {
  if (opt.n_items < 2) throw ConfigError("synth_corpus: n_items must be >= 2");
  if (opt.n_brands < 1 || opt.n_cats < 1) throw ConfigError("synth_corpus: need at least one brand and category");
  if (opt.planted_overlap < 0 || opt.planted_overlap > 1)
    throw ConfigError("synth_corpus: planted_overlap must lie in [0,1]");
  Rng rng = Rng::stream(opt.seed, "corpus");
  SynthCorpus out;
  std::size_t product = 0;
  while (out.items.size() < opt.n_items) {
    std::size_t size = 2 + static_cast<std::size_t>(rng.below(3));
    const std::size_t left = opt.n_items - out.items.size();
    if (left < size + 2) size = left;  // never strand a single item
    const std::size_t cat = rng.below(opt.n_cats);
    const std::size_t brand = rng.below(opt.n_brands);
    const std::string key = "p" + std::to_string(product++);
    std::vector<std::string> anchors;
    for (std::size_t j = 0; j < kFamilyWords; ++j) anchors.push_back(family_word(cat, j));

    const std::size_t first = out.items.size();
    for (std::size_t m = 0; m < size; ++m) {
      ItemRecord it;
      it.item_id = item_id_of(first + m);
      it.brand = "brand" + std::to_string(brand);
      it.categories = {"dept" + std::to_string(cat / 6), "group" + std::to_string(cat / 2),
                       "kind" + std::to_string(cat)};
      std::vector<std::string> words = anchors;
      shuffle(words, rng);
      words.resize(kTitleFamilyWords);
      for (std::size_t f = 0; f < kFillerWords; ++f) words.push_back("f" + std::to_string(rng.below(kFillerPool)));
      shuffle(words, rng);
      for (const auto& w : words) it.title += (it.title.empty() ? "" : " ") + w;
      it.image_ref = "images/" + it.item_id + ".ppm";
      out.items.push_back(std::move(it));
      out.latents.push_back({key, anchors, opt.planted_overlap,
                             mix64(opt.seed ^ fnv1a(out.items.back().item_id))});
    }
    for (std::size_t m = 0; m < size; ++m)
      for (std::size_t n = 0; n < size; ++n)
        if (m != n) out.items[first + m].related.push_back(out.items[first + n].item_id);
  }
  return out;
}

Image render_latent_image(const LatentImage& latent, int size) {
  Image img(size, size);
  Rng prod(fnv1a(latent.product_key));
  const std::string family = latent.anchor_tokens.empty() ? "" : latent.anchor_tokens.front();
  Rng fam(fnv1a(family));
  const double rho = latent.overlap;
  // colour: family hue blended with a product tint; blends toward grey as the
  // product share shrinks
  auto channel = [&](double base, double tint) {
    const double v = rho * (0.6 * base + 0.4 * tint) + (1 - rho) * 128.0;
    return static_cast<std::uint8_t>(std::clamp(v, 0.0, 235.0));
  };
  const Rgb colour{channel(fam.uniform(20, 220), prod.uniform(20, 220)),
                   channel(fam.uniform(20, 220), prod.uniform(20, 220)),
                   channel(fam.uniform(20, 220), prod.uniform(20, 220))};
  const double c = size / 2.0;
  const double rx = size * prod.uniform(0.22, 0.34), ry = size * prod.uniform(0.22, 0.34);
  const int sides = 3 + static_cast<int>(fam.below(5));
  std::vector<Point> poly;
  for (int k = 0; k < 24; ++k) {
    const double a = 2 * M_PI * k / 24;
    const double wobble = 1.0 + 0.15 * std::cos(sides * a);
    poly.push_back({c + rx * wobble * std::cos(a), c + ry * wobble * std::sin(a)});
  }
  fill_polygon(img, poly, colour);
  const int stripes = 1 + static_cast<int>(prod.below(4));
  const Rgb dark{static_cast<std::uint8_t>(colour.r / 2), static_cast<std::uint8_t>(colour.g / 2),
                 static_cast<std::uint8_t>(colour.b / 2)};
  for (int s = 0; s < stripes; ++s) {
    const double y = c - ry + (s + 1) * 2 * ry / (stripes + 1);
    fill_rect(img, c - rx * 0.7, y - 1, c + rx * 0.7, y + 1, dark);
  }
  Rng noise(latent.noise_seed);
  const int specks = static_cast<int>((1 - rho) * size * size * 0.05);
  for (int k = 0; k < specks; ++k) {
    const int x = static_cast<int>(noise.below(size)), y = static_cast<int>(noise.below(size));
    img.set(x, y, {static_cast<std::uint8_t>(noise.below(200)), static_cast<std::uint8_t>(noise.below(200)),
                   static_cast<std::uint8_t>(noise.below(200))});
  }
  return img;
}

// ---- files ---------------------------------------------------------------------

std::vector<ItemRecord> read_corpus(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read corpus " + path.string());
  std::vector<ItemRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    ItemRecord it;
    std::optional<std::array<std::string, 3>> parsed;
    try {
      it.item_id = j.value("item_id", "");
      it.title = j.value("title", "");
      it.brand = j.value("brand", "");
      parsed = parse_categories(j.value("categories", std::vector<std::string>{}));
      if (j.contains("image_ref") && !j["image_ref"].is_null()) it.image_ref = j["image_ref"].get<std::string>();
      if (j.contains("feature_ref") && !j["feature_ref"].is_null())
        it.feature_ref = j["feature_ref"].get<std::string>();
      it.related = j.value("related", std::vector<std::string>{});
    } catch (const nlohmann::json::exception&) {
      parsed.reset();  // wrong field types: treat as invalid
    }
    if (!parsed || !is_valid_item(it)) {
      std::cerr << "warning: dropping invalid item at " << path.string() << ":" << lineno << " ("
                << (it.item_id.empty() ? "<no id>" : it.item_id) << ")\n";
      continue;
    }
    it.categories = *parsed;
    out.push_back(std::move(it));
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, std::span<const ItemRecord> items) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write corpus " + path.string());
  for (const auto& it : items) {
    nlohmann::ordered_json j;
    j["item_id"] = it.item_id;
    j["title"] = it.title;
    j["brand"] = it.brand;
    j["categories"] = std::vector<std::string>(it.categories.begin(), it.categories.end());
    if (it.image_ref) j["image_ref"] = *it.image_ref;
    if (it.feature_ref) j["feature_ref"] = *it.feature_ref;
    j["related"] = it.related;
    os << j.dump() << '\n';
  }
  if (!os) throw IoError("write failed: " + path.string());
}

std::vector<IdPair> read_pairs(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read pairs " + path.string());
  std::vector<IdPair> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw IoError("malformed pair line in " + path.string() + ": " + line);
    out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return out;
}

void write_pairs(const std::filesystem::path& path, std::span<const IdPair> pairs) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write pairs " + path.string());
  for (const auto& p : pairs) os << p.query_id << '\t' << p.target_id << '\n';
}

std::set<std::string> read_blocklist(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read blocklist " + path.string());
  std::set<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.insert(line);
  }
  return out;
}

void write_blocklist(const std::filesystem::path& path, const std::set<std::string>& ids) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write blocklist " + path.string());
  for (const auto& id : ids) os << id << '\n';
}

}  // namespace tgq
