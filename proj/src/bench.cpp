#include "tgq/bench.hpp"

#include <sstream>

#include "tgq/errors.hpp"

namespace tgq {

EmbeddingSet embed_dataset(const TgqModel& model, const Dataset& data, std::span<const std::string> ids) {
  NoGradGuard guard;
  EmbeddingSet set(model.config().fusion.d_out);
  for (const auto& id : ids) {
    const std::size_t i = data.at(id);
    const ItemForward f = model.forward(data.items[i], data.encoded[i]);
    set.add(id, f.z.data());
  }
  return set;
}

std::vector<bool> afflicted_items(const SynthCorpus& corpus, double fraction, std::uint64_t seed) {
  std::vector<bool> out(corpus.items.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = Rng::stream(seed, "afflicted:" + corpus.items[i].item_id).uniform() < fraction;
  return out;
}

Dataset encode_synthetic(const SynthCorpus& corpus, const Encoder& enc, const CorruptionSpec& spec,
                         const std::vector<bool>& afflicted) {
  const std::size_t n = corpus.items.size();
  std::vector<EncodedItem> clean(n);
  for (std::size_t i = 0; i < n; ++i) clean[i] = enc.encode_latent(corpus.items[i], corpus.latents[i]);
  Dataset data;
  std::vector<const EncodedItem*> donors;
  donors.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    EncodedItem e = clean[i];
    if (i < afflicted.size() && afflicted[i]) {
      donors.clear();
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) donors.push_back(&clean[j]);
      Rng rng = corruption_rng(spec.seed, corpus.items[i].item_id);
      e = token_corrupt(enc, clean[i], spec, rng, donors);
    }
    data.add(corpus.items[i], std::move(e));
  }
  return data;
}

SynthBench make_synth_bench(const Config& cfg) {
  cfg.validate();
  SynthOptions opt;
  opt.n_items = cfg.corpus.n_items;
  opt.n_brands = cfg.corpus.n_brands;
  opt.n_cats = cfg.corpus.n_cats;
  opt.planted_overlap = cfg.corpus.planted_overlap;
  opt.seed = cfg.corpus.seed;
  SynthBench b{cfg, synth_corpus(opt), Encoder(cfg.encoder), {}, {}, {}, {}};
  b.test = sample_test_pairs(b.corpus.items, cfg.corpus.n_test_pairs, cfg.corpus.seed);
  b.train_pairs = build_pairs(b.corpus.items, b.test.blocklist, cfg.corpus.pair_cap, cfg.corpus.seed);
  const auto spec = severity_spec(parse_severity(cfg.corpus.corrupt_severity), cfg.corpus.seed);
  b.data = encode_synthetic(b.corpus, b.encoder, spec,
                            afflicted_items(b.corpus, cfg.corpus.corrupt_fraction, cfg.corpus.seed));
  b.pool_ids.assign(b.test.blocklist.begin(), b.test.blocklist.end());
  return b;
}

VariantRun run_variant(const SynthBench& bench, Variant variant, std::uint64_t seed, TgqModel** keep) {
  TrainConfig tc = bench.cfg.train;
  tc.variant = variant;
  tc.seed = seed;
  auto* model = new TgqModel(bench.cfg, variant, seed);
  VariantRun run{variant, seed, train(*model, bench.data, bench.train_pairs.pairs, tc), {}};
  const EmbeddingSet pool = embed_dataset(*model, bench.data, bench.pool_ids);
  run.report = evaluate(pool, queries_from_pairs(bench.test.pairs.pairs), kDefaultKs);
  if (keep) *keep = model;
  else delete model;
  return run;
}

std::vector<SweepRow> robustness_sweep(const TgqModel& model, const SynthCorpus& corpus, const Encoder& enc,
                                       const TestSplit& test, std::span<const Severity> severities,
                                       std::uint64_t seed, std::span<const std::size_t> ks) {
  if (severities.empty()) throw ConfigError("robustness_sweep: no severities requested");
  // restrict to the test pool; every pool item is subject to the severity
  SynthCorpus pool;
  for (std::size_t i = 0; i < corpus.items.size(); ++i)
    if (test.blocklist.contains(corpus.items[i].item_id)) {
      pool.items.push_back(corpus.items[i]);
      pool.latents.push_back(corpus.latents[i]);
    }
  const std::vector<bool> all(pool.items.size(), true);
  const std::vector<std::string> ids(test.blocklist.begin(), test.blocklist.end());
  const auto queries = queries_from_pairs(test.pairs.pairs);
  std::vector<SweepRow> rows;
  for (Severity s : severities) {
    const Dataset data = encode_synthetic(pool, enc, severity_spec(s, seed), all);
    rows.push_back({s, evaluate(embed_dataset(model, data, ids), queries, ks)});
  }
  return rows;
}

std::string format_sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream os;
  os.precision(10);
  os << "severity,K,hit_rate\n";
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.report.ks.size(); ++i)
      os << severity_name(r.severity) << ',' << r.report.ks[i] << ',' << r.report.hit_rate[i] << '\n';
  return os.str();
}

}  // namespace tgq
