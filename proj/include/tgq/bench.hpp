#pragma once

#include <span>
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

/// Embeds the listed items without building a graph.
EmbeddingSet embed_dataset(const TgqModel& model, const Dataset& data, std::span<const std::string> ids);

/// Encodes a synthetic corpus; items picked by `afflicted` get the token-level
/// corruption of `spec`, with other items' clean encodings as clutter donors.
Dataset encode_synthetic(const SynthCorpus& corpus, const Encoder& enc, const CorruptionSpec& spec,
                         const std::vector<bool>& afflicted);

/// Items are afflicted independently with probability `fraction`, keyed by id.
std::vector<bool> afflicted_items(const SynthCorpus& corpus, double fraction, std::uint64_t seed);

/// Planted benchmark: corpus, held-out test split, training pairs and the
/// training-time encodings (corrupt_fraction of items at corrupt_severity).
struct SynthBench {
  Config cfg;
  SynthCorpus corpus;
  Encoder encoder;
  TestSplit test;
  PairSet train_pairs;
  Dataset data;
  std::vector<std::string> pool_ids;  // sorted blocklist
};

SynthBench make_synth_bench(const Config& cfg);

/// Trains one variant on the bench and evaluates H@K on the test split.
struct VariantRun {
  Variant variant;
  std::uint64_t seed;
  TrainResult train;
  HitReport report;
};
VariantRun run_variant(const SynthBench& bench, Variant variant, std::uint64_t seed, TgqModel** keep = nullptr);

struct SweepRow {
  Severity severity;
  HitReport report;
};

/// For each severity, corrupts every test-pool item deterministically from
/// (seed, item id), embeds, and evaluates the test queries.
std::vector<SweepRow> robustness_sweep(const TgqModel& model, const SynthCorpus& corpus, const Encoder& enc,
                                       const TestSplit& test, std::span<const Severity> severities,
                                       std::uint64_t seed, std::span<const std::size_t> ks = kDefaultKs);

/// `severity,K,hit_rate` lines.
std::string format_sweep_csv(std::span<const SweepRow> rows);

}  // namespace tgq
