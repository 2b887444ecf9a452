#include "tgq/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <mutex>
#include <sstream>
#include <thread>

#include "tgq/errors.hpp"
#include "tgq/image.hpp"
#include "tgq/params.hpp"

namespace fs = std::filesystem;

namespace tgq {

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& p, std::string_view bytes) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + p.string());
}

void make_dirs(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create " + p.string() + ": " + ec.message());
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr))
    throw IoError("sha256 failed");
  std::ostringstream os;
  for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

// git-style: hash of sorted "<relpath>\0<blob hash>\n" entries
std::string tree_hash(const fs::path& dir, bool skip_manifest) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    if (skip_manifest && e.path().filename() == "manifest.json") continue;
    const std::string rel = fs::relative(e.path(), dir).generic_string();
    const std::string blob = read_file(e.path());
    entries.emplace_back(rel, sha256_hex("blob " + std::to_string(blob.size()) + '\0' + blob));
  }
  std::sort(entries.begin(), entries.end());
  std::string tree;
  for (const auto& [rel, h] : entries) tree += rel + '\0' + h + '\n';
  return sha256_hex("tree " + std::to_string(tree.size()) + '\0' + tree);
}

std::optional<CorruptionSpec> read_corruption_marker(const fs::path& path) {
  if (!fs::exists(path)) return std::nullopt;
  std::ifstream in(path);
  std::string line, severity;
  std::optional<std::uint64_t> seed;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k == "severity") severity = v;
    else if (k == "seed") seed = std::stoull(v);
  }
  if (severity.empty() || !seed) throw IoError(path.string() + ": needs severity= and seed= lines");
  return severity_spec(parse_severity(severity), *seed);
}

}  // namespace

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

unsigned resolve_threads(std::optional<unsigned> flag) {
  if (flag) {
    if (*flag == 0) throw UsageError("--threads must be >= 1");
    return *flag;
  }
  if (const char* env = std::getenv("TGQ_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw UsageError(std::string("TGQ_THREADS must be a positive integer, got '") + env + "'");
    return static_cast<unsigned>(v);
  }
  return 1;
}

void write_latents(const fs::path& path, std::span<const ItemRecord> items, std::span<const LatentImage> latents) {
  if (items.size() != latents.size()) throw ContractError("write_latents: items and latents differ in length");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t i = 0; i < items.size(); ++i) {
    nlohmann::json j;
    j["item_id"] = items[i].item_id;
    j["product_key"] = latents[i].product_key;
    j["anchor_tokens"] = latents[i].anchor_tokens;
    j["overlap"] = latents[i].overlap;
    j["noise_seed"] = latents[i].noise_seed;
    out << j.dump() << '\n';
  }
}

std::map<std::string, LatentImage> read_latents(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::map<std::string, LatentImage> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LatentImage l;
      l.product_key = j.at("product_key").get<std::string>();
      l.anchor_tokens = j.at("anchor_tokens").get<std::vector<std::string>>();
      l.overlap = j.at("overlap").get<double>();
      l.noise_seed = j.at("noise_seed").get<std::uint64_t>();
      out[j.at("item_id").get<std::string>()] = std::move(l);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

namespace {

struct Generated {
  SynthCorpus corpus;
  TestSplit test;
  PairSet train;
};

Generated generate(const Config& cfg) {
  cfg.validate();
  SynthOptions opt;
  opt.n_items = cfg.corpus.n_items;
  opt.n_brands = cfg.corpus.n_brands;
  opt.n_cats = cfg.corpus.n_cats;
  opt.planted_overlap = cfg.corpus.planted_overlap;
  opt.seed = cfg.corpus.seed;
  Generated g;
  g.corpus = synth_corpus(opt);
  g.test = sample_test_pairs(g.corpus.items, cfg.corpus.n_test_pairs, cfg.corpus.seed);
  g.train = build_pairs(g.corpus.items, g.test.blocklist, cfg.corpus.pair_cap, cfg.corpus.seed);
  return g;
}

}  // namespace

void generate_corpus_dir(const Config& cfg, const fs::path& out, unsigned threads) {
  const Generated g = generate(cfg);
  make_dirs(out / "images");
  write_corpus(out / "corpus.jsonl", g.corpus.items);
  write_latents(out / "latents.jsonl", g.corpus.items, g.corpus.latents);
  write_pairs(out / "train_pairs.tsv", g.train.pairs);
  write_pairs(out / "test_pairs.tsv", g.test.pairs.pairs);
  write_blocklist(out / "blocklist.txt", g.test.blocklist);
  parallel_for(g.corpus.items.size(), threads, [&](std::size_t i) {
    write_ppm(out / *g.corpus.items[i].image_ref, render_latent_image(g.corpus.latents[i], cfg.corpus.image_size));
  });
}

CorpusDir synth_corpus_dir(const Config& cfg) {
  Generated g = generate(cfg);
  CorpusDir c;
  c.items = std::move(g.corpus.items);
  c.latents = std::move(g.corpus.latents);
  c.train_pairs = std::move(g.train.pairs);
  c.test_pairs = std::move(g.test.pairs.pairs);
  c.blocklist = std::move(g.test.blocklist);
  return c;
}

SynthCorpus as_synth_corpus(const CorpusDir& dir) {
  if (dir.latents.size() != dir.items.size())
    throw ContractError("corpus " + dir.root.string() + " carries no latents (not a synthetic corpus)");
  return {dir.items, dir.latents};
}

TestSplit as_test_split(const CorpusDir& dir) {
  TestSplit t;
  t.pairs.pairs = dir.test_pairs;
  t.blocklist = dir.blocklist;
  return t;
}

CorpusDir read_corpus_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("corpus directory not found: " + dir.string());
  CorpusDir c;
  c.root = dir;
  c.items = read_corpus(dir / "corpus.jsonl");
  if (fs::exists(dir / "latents.jsonl")) {
    const auto lat = read_latents(dir / "latents.jsonl");
    for (const auto& it : c.items) {
      auto f = lat.find(it.item_id);
      if (f == lat.end()) throw LookupError(dir.string() + "/latents.jsonl has no entry for " + it.item_id);
      c.latents.push_back(f->second);
    }
  }
  if (fs::exists(dir / "train_pairs.tsv")) c.train_pairs = read_pairs(dir / "train_pairs.tsv");
  if (fs::exists(dir / "test_pairs.tsv")) c.test_pairs = read_pairs(dir / "test_pairs.tsv");
  if (fs::exists(dir / "blocklist.txt")) c.blocklist = read_blocklist(dir / "blocklist.txt");
  c.applied = read_corruption_marker(dir / "corruption.txt");
  return c;
}

void corrupt_corpus_dir(const fs::path& in, const fs::path& out, const CorruptionSpec& spec, unsigned threads) {
  if (!fs::is_directory(in)) throw IoError("input directory not found: " + in.string());
  if (fs::exists(in / "corruption.txt")) throw UsageError(in.string() + " is already a corrupted mirror");
  const auto items = read_corpus(in / "corpus.jsonl");
  std::map<std::string, std::string> ppm_owner;  // relative image path -> item id
  for (const auto& it : items)
    if (it.image_ref) ppm_owner[fs::path(*it.image_ref).lexically_normal().generic_string()] = it.item_id;

  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(in))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());

  const bool clean = spec.p_bg == 0.0 && spec.p_overlay == 0.0;
  // donor pool: every item picture, the item's own included
  std::vector<Image> donors;
  std::vector<long> donor_of(files.size(), -1);
  for (std::size_t i = 0; i < files.size() && !clean; ++i)
    if (ppm_owner.contains(fs::relative(files[i], in).generic_string())) {
      donor_of[i] = static_cast<long>(donors.size());
      donors.push_back(read_ppm(files[i]));
    }

  for (const auto& f : files) make_dirs(out / fs::relative(f, in).parent_path());
  parallel_for(files.size(), threads, [&](std::size_t i) {
    const fs::path rel = fs::relative(files[i], in);
    if (donor_of[i] < 0) {
      write_file(out / rel, read_file(files[i]));
      return;
    }
    Rng rng = corruption_rng(spec.seed, ppm_owner.at(rel.generic_string()));
    write_ppm(out / rel, corrupt(donors[static_cast<std::size_t>(donor_of[i])], spec, rng, donors));
  });
  // a clean mirror stays byte-identical to its source, marker included
  if (!clean)
    write_file(out / "corruption.txt",
               "severity=" + severity_name(spec.severity) + "\nseed=" + std::to_string(spec.seed) + "\n");
}

Dataset encode_corpus_dir(const CorpusDir& dir, const Encoder& enc, const Config& cfg, bool training,
                          unsigned threads) {
  const std::size_t n = dir.items.size();
  std::vector<EncodedItem> encoded(n);
  const bool latent = enc.config().mode == "synthetic" && !dir.latents.empty();
  if (!latent) {
    if (training && cfg.corpus.corrupt_fraction > 0 && enc.config().mode == "synthetic")
      throw ConfigError("training-time token corruption needs latents.jsonl next to the corpus");
    parallel_for(n, threads, [&](std::size_t i) { encoded[i] = enc.encode(dir.items[i], dir.root); });
  } else {
    parallel_for(n, threads, [&](std::size_t i) { encoded[i] = enc.encode_latent(dir.items[i], dir.latents[i]); });
    std::vector<std::optional<CorruptionSpec>> plan(n);
    if (training && cfg.corpus.corrupt_fraction > 0) {
      const auto spec = severity_spec(parse_severity(cfg.corpus.corrupt_severity), cfg.corpus.seed);
      for (std::size_t i = 0; i < n; ++i)
        if (Rng::stream(cfg.corpus.seed, "afflicted:" + dir.items[i].item_id).uniform() < cfg.corpus.corrupt_fraction)
          plan[i] = spec;
    }
    if (dir.applied)
      for (auto& p : plan) p = *dir.applied;
    std::vector<EncodedItem> out(n);
    parallel_for(n, threads, [&](std::size_t i) {
      if (!plan[i]) {
        out[i] = encoded[i];
        return;
      }
      std::vector<const EncodedItem*> donors;
      donors.reserve(n);
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) donors.push_back(&encoded[j]);
      Rng rng = corruption_rng(plan[i]->seed, dir.items[i].item_id);
      out[i] = token_corrupt(enc, encoded[i], *plan[i], rng, donors);
    });
    encoded = std::move(out);
  }
  Dataset data;
  for (std::size_t i = 0; i < n; ++i) data.add(dir.items[i], std::move(encoded[i]));
  return data;
}

EmbeddingSet embed_parallel(const TgqModel& model, const Dataset& data, std::span<const std::string> ids,
                            unsigned threads) {
  std::vector<std::vector<double>> rows(ids.size());
  parallel_for(ids.size(), threads, [&](std::size_t k) {
    NoGradGuard guard;
    const std::size_t i = data.at(ids[k]);
    const Tensor z = model.forward(data.items[i], data.encoded[i]).z;
    rows[k].assign(z.data().begin(), z.data().end());
  });
  EmbeddingSet set(model.config().fusion.d_out);
  for (std::size_t k = 0; k < ids.size(); ++k) set.add(ids[k], rows[k]);
  return set;
}

std::unique_ptr<TgqModel> load_trained_model(const fs::path& dir) {
  fs::path root = dir, ckpt = dir / "checkpoint";
  if (!fs::exists(root / "config.txt") && fs::exists(dir / "manifest.tsv")) {
    root = dir.parent_path();
    ckpt = dir;
  }
  if (!fs::exists(root / "config.txt")) throw IoError("no config.txt for checkpoint " + dir.string());
  if (!fs::exists(ckpt / "manifest.tsv")) throw IoError("missing checkpoint: " + (ckpt / "manifest.tsv").string());
  const Config cfg = load_config(root / "config.txt");
  auto model = std::make_unique<TgqModel>(cfg, cfg.train.variant, cfg.train.seed);
  load_checkpoint(ckpt, model->store());
  return model;
}

std::string directory_hash(const fs::path& dir) { return tree_hash(dir, true); }

std::string inputs_hash(std::span<const fs::path> inputs) {
  std::string acc;
  for (const auto& p : inputs) {
    if (fs::is_directory(p)) acc += "dir " + tree_hash(p, true) + '\n';
    else if (fs::is_regular_file(p)) acc += "file " + sha256_hex(read_file(p)) + '\n';
    else throw IoError("input not found: " + p.string());
  }
  return sha256_hex(acc);
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_manifest(const fs::path& dir, const RunManifest& m) {
  make_dirs(dir);
  nlohmann::json j;
  j["command"] = m.command;
  j["config_path"] = m.config_path;
  j["config"] = m.config;
  j["seed"] = m.seed;
  j["started"] = m.started;
  j["finished"] = m.finished;
  j["inputs_hash"] = m.inputs_hash;
  for (const auto& [k, v] : m.extra) j[k] = v;
  write_file(dir / "manifest.json", j.dump(2) + "\n");
}

}  // namespace tgq
