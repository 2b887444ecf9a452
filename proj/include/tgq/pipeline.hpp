#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tgq/config.hpp"
#include "tgq/corpus.hpp"
#include "tgq/encoders.hpp"
#include "tgq/fusion.hpp"
#include "tgq/noise.hpp"
#include "tgq/retrieval.hpp"
#include "tgq/train.hpp"

namespace tgq {

// On-disk corpus directory:
//   corpus.jsonl        item records
//   latents.jsonl       hidden factors of synthetic items (optional)
//   images/<id>.ppm     rendered item pictures
//   train_pairs.tsv     test_pairs.tsv     blocklist.txt
//   corruption.txt      severity + seed, present only in corrupted mirrors
struct CorpusDir {
  std::filesystem::path root;
  std::vector<ItemRecord> items;
  std::vector<LatentImage> latents;  // parallel to items, or empty
  std::vector<IdPair> train_pairs;
  std::vector<IdPair> test_pairs;
  std::set<std::string> blocklist;
  std::optional<CorruptionSpec> applied;
};

void write_latents(const std::filesystem::path& path, std::span<const ItemRecord> items,
                   std::span<const LatentImage> latents);
/// Latents keyed by item id.
std::map<std::string, LatentImage> read_latents(const std::filesystem::path& path);

/// Synthesizes the corpus described by cfg.corpus and writes a full corpus directory.
void generate_corpus_dir(const Config& cfg, const std::filesystem::path& out, unsigned threads = 1);
CorpusDir read_corpus_dir(const std::filesystem::path& dir);
/// What generate_corpus_dir would write, kept in memory (root is empty).
CorpusDir synth_corpus_dir(const Config& cfg);
/// Latent view and held-out split of a synthetic corpus directory.
SynthCorpus as_synth_corpus(const CorpusDir& dir);
TestSplit as_test_split(const CorpusDir& dir);

/// Mirrors `in` under `out`, corrupting every PPM with `spec` (rng keyed by
/// spec.seed and item id; the donor pool is every item's clean picture).
/// A clean spec copies bytes unchanged.
void corrupt_corpus_dir(const std::filesystem::path& in, const std::filesystem::path& out,
                        const CorruptionSpec& spec, unsigned threads = 1);

/// Encodes every item. Synthetic mode with latents uses the latent encoder;
/// `training` applies cfg.corpus.corrupt_fraction/corrupt_severity; a
/// corrupted mirror applies its recorded spec to every item. Otherwise the
/// pixel or feature-blob encoder reads the files next to the corpus.
Dataset encode_corpus_dir(const CorpusDir& dir, const Encoder& enc, const Config& cfg, bool training,
                          unsigned threads = 1);

/// embed_dataset with the items spread over `threads` workers.
EmbeddingSet embed_parallel(const TgqModel& model, const Dataset& data, std::span<const std::string> ids,
                            unsigned threads);

/// Model from a train output directory (config.txt + checkpoint/), or from
/// a checkpoint directory whose parent holds config.txt.
std::unique_ptr<TgqModel> load_trained_model(const std::filesystem::path& dir);

/// Runs fn(i) for i in [0, n) on up to `threads` workers; rethrows the first failure.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

/// --threads, else TGQ_THREADS, else 1.
unsigned resolve_threads(std::optional<unsigned> flag);

/// Order-independent hash over relative paths and bytes of every regular
/// file under `dir`, skipping manifest.json (it carries timestamps).
std::string directory_hash(const std::filesystem::path& dir);
/// Hash of files and directories given as inputs to a command.
std::string inputs_hash(std::span<const std::filesystem::path> inputs);

struct RunManifest {
  std::string command;
  std::string config_path;
  std::map<std::string, std::string> config;
  std::uint64_t seed = 0;
  std::string started, finished;
  std::string inputs_hash;
  std::map<std::string, std::string> extra;
};

void write_manifest(const std::filesystem::path& dir, const RunManifest& m);
std::string utc_now();

}  // namespace tgq
