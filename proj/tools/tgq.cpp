// tgq: command-line driver for corpus generation, corruption, training,
// embedding export, evaluation, ablations, attention dumps and gradient checks.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "tgq/bench.hpp"
#include "tgq/errors.hpp"
#include "tgq/gradcheck.hpp"
#include "tgq/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tgq;

namespace {

struct Common {
  std::optional<unsigned> threads;
  std::string config_path;
  std::vector<std::string> sets;  // key=value overrides
};

Config resolve_config(const Common& c) {
  Config cfg = c.config_path.empty() ? Config{} : load_config(c.config_path);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

RunManifest begin(const std::string& command, const Common& c, const Config& cfg, std::uint64_t seed) {
  RunManifest m;
  m.command = command;
  m.config_path = c.config_path;
  m.config = cfg.entries();
  m.seed = seed;
  m.started = utc_now();
  return m;
}

void finish(RunManifest& m, const fs::path& dir) {
  m.finished = utc_now();
  write_manifest(dir, m);
}

std::vector<std::size_t> parse_ks(const std::string& s) {
  std::vector<std::size_t> ks;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      const long v = std::stol(tok, &used);
      if (used != tok.size() || v < 1) throw std::invalid_argument(tok);
      ks.push_back(static_cast<std::size_t>(v));
    } catch (const std::logic_error&) {
      throw UsageError("--ks expects positive integers, got '" + tok + "'");
    }
  }
  if (ks.empty()) throw UsageError("--ks is empty");
  return ks;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
}

CorpusDir corpus_or_synth(const std::string& corpus, const Config& cfg) {
  return corpus.empty() ? synth_corpus_dir(cfg) : read_corpus_dir(corpus);
}

std::vector<std::string> read_id_list(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  std::vector<std::string> ids;
  for (std::string line; std::getline(in, line);)
    if (!line.empty() && line[0] != '#') ids.push_back(line);
  return ids;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tgq: connector training and evaluation toolkit"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--threads", common.threads, "worker cap (falls back to TGQ_THREADS, then 1)");

  auto add_config = [&](CLI::App* sub, bool required) {
    auto* o = sub->add_option("--config", common.config_path, "flat key = value config file");
    if (required) o->required();
    sub->add_option("--set", common.sets, "override one config key (key=value), repeatable");
  };

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "write a planted synthetic corpus directory");
  std::optional<std::size_t> g_items;
  std::optional<std::uint64_t> g_seed;
  std::optional<double> g_overlap;
  std::string g_out;
  gen->add_option("--items", g_items, "number of items");
  gen->add_option("--seed", g_seed, "corpus seed");
  gen->add_option("--planted-overlap", g_overlap, "product share of image content, in [0,1]");
  gen->add_option("--out", g_out, "output directory")->required();
  add_config(gen, false);

  // corrupt
  auto* cor = app.add_subcommand("corrupt", "mirror a corpus with corrupted images under OUT/<severity>/");
  std::string c_in, c_out, c_sev;
  std::uint64_t c_seed = 0;
  cor->add_option("--in", c_in, "corpus directory")->required();
  cor->add_option("--severity", c_sev, "clean, light, medium or heavy")->required();
  cor->add_option("--seed", c_seed, "corruption seed")->required();
  cor->add_option("--out", c_out, "output root")->required();

  // train
  auto* tr = app.add_subcommand("train", "train one variant");
  std::string t_variant, t_out, t_corpus;
  std::optional<std::uint64_t> t_seed;
  std::optional<std::size_t> t_epochs, t_steps;
  tr->add_option("--variant", t_variant, "a, b, c, d or e")->required();
  tr->add_option("--out", t_out, "run directory")->required();
  tr->add_option("--corpus", t_corpus, "corpus directory (default: synthesize from corpus.* keys)");
  tr->add_option("--seed", t_seed, "training seed");
  tr->add_option("--epochs", t_epochs, "epochs");
  tr->add_option("--max-steps", t_steps, "stop after this many optimizer steps (0 = no limit)");
  add_config(tr, true);

  // embed
  auto* em = app.add_subcommand("embed", "export item embeddings");
  std::string e_ckpt, e_corpus, e_out;
  bool e_all = false;
  em->add_option("--ckpt", e_ckpt, "train run directory or checkpoint directory")->required();
  em->add_option("--corpus", e_corpus, "corpus directory")->required();
  em->add_option("--out", e_out, "output prefix (writes PREFIX.ids and PREFIX.tgqt)")->required();
  em->add_flag("--all", e_all, "embed every item instead of the blocklisted test pool");

  // eval
  auto* ev = app.add_subcommand("eval", "full-pool Hit Rate@K");
  std::string v_emb, v_pairs, v_ks = "1,5,10,20,50,100", v_out;
  ev->add_option("--emb", v_emb, "embedding prefix")->required();
  ev->add_option("--pairs", v_pairs, "query<TAB>target pairs")->required();
  ev->add_option("--ks", v_ks, "comma-separated cutoffs");
  ev->add_option("--out", v_out, "report directory (default: PREFIX.eval)");

  // ablate
  auto* ab = app.add_subcommand("ablate", "train and evaluate variants a..e");
  std::string a_out, a_corpus, a_variants = "abcde";
  std::size_t a_seeds = 1;
  ab->add_option("--out", a_out, "output directory")->required();
  ab->add_option("--corpus", a_corpus, "corpus directory (default: synthesize)");
  ab->add_option("--seeds", a_seeds, "seeds per variant (train.seed, +1, ...)");
  ab->add_option("--variants", a_variants, "subset of abcde");
  add_config(ab, true);

  // attn-dump
  auto* at = app.add_subcommand("attn-dump", "dump HQC cross-attention maps");
  std::string d_ckpt, d_items, d_out, d_corpus;
  at->add_option("--ckpt", d_ckpt, "train run directory or checkpoint directory")->required();
  at->add_option("--items", d_items, "file with one item id per line")->required();
  at->add_option("--out", d_out, "output directory")->required();
  at->add_option("--corpus", d_corpus, "corpus directory (default: synthesize from the run config)");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
  std::string gc_scope = "all", gc_out;
  gc->add_option("--scope", gc_scope, "all, hqc, gating, regularizer or fusion");
  gc->add_option("--out", gc_out, "optional directory for gradcheck.csv and manifest");

  // sweep
  auto* sw = app.add_subcommand("sweep", "robustness sweep over severities");
  std::string s_ckpt, s_corpus, s_out, s_sevs = "clean,light,medium,heavy", s_ks = "1,5,10,20,50,100";
  std::uint64_t s_seed = 0;
  sw->add_option("--ckpt", s_ckpt, "train run directory or checkpoint directory")->required();
  sw->add_option("--corpus", s_corpus, "synthetic corpus directory")->required();
  sw->add_option("--severities", s_sevs, "comma-separated severities");
  sw->add_option("--seed", s_seed, "corruption seed");
  sw->add_option("--ks", s_ks, "comma-separated cutoffs");
  sw->add_option("--out", s_out, "output directory")->required();

  // hash
  auto* hs = app.add_subcommand("hash", "content hash of a directory (manifest.json excluded)");
  std::string h_dir;
  hs->add_option("dir", h_dir, "directory")->required();

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      app.exit(e);
      return UsageError("").exit_code();
    }
    const unsigned threads = resolve_threads(common.threads);

    if (*gen) {
      Config cfg = resolve_config(common);
      if (g_overlap && (!(*g_overlap >= 0.0) || *g_overlap > 1.0))
        throw UsageError("--planted-overlap must lie in [0,1], got " + std::to_string(*g_overlap));
      if (g_items) cfg.corpus.n_items = *g_items;
      if (g_seed) cfg.corpus.seed = *g_seed;
      if (g_overlap) cfg.corpus.planted_overlap = *g_overlap;
      RunManifest m = begin("gen-corpus", common, cfg, cfg.corpus.seed);
      std::vector<fs::path> inputs;
      if (!common.config_path.empty()) inputs.emplace_back(common.config_path);
      m.inputs_hash = inputs_hash(inputs);
      generate_corpus_dir(cfg, g_out, threads);
      finish(m, g_out);
      std::cout << "wrote " << cfg.corpus.n_items << " items to " << g_out << '\n';
    } else if (*cor) {
      const Severity sev = parse_severity(c_sev);
      const fs::path out = fs::path(c_out) / severity_name(sev);
      Config cfg;
      RunManifest m = begin("corrupt", common, cfg, c_seed);
      m.config.clear();
      m.extra["severity"] = severity_name(sev);
      const fs::path in_path = c_in;
      m.inputs_hash = inputs_hash({&in_path, 1});
      corrupt_corpus_dir(c_in, out, severity_spec(sev, c_seed), threads);
      finish(m, out);
      std::cout << "wrote " << out.string() << '\n';
    } else if (*tr) {
      Config cfg = resolve_config(common);
      cfg.train.variant = parse_variant(t_variant);
      if (t_seed) cfg.train.seed = *t_seed;
      if (t_epochs) cfg.train.epochs = *t_epochs;
      if (t_steps) cfg.train.max_steps = *t_steps;
      cfg.validate();
      RunManifest m = begin("train", common, cfg, cfg.train.seed);
      std::vector<fs::path> inputs;
      if (!common.config_path.empty()) inputs.emplace_back(common.config_path);
      if (!t_corpus.empty()) inputs.emplace_back(t_corpus);
      m.inputs_hash = inputs_hash(inputs);
      const CorpusDir corpus = corpus_or_synth(t_corpus, cfg);
      const Encoder enc(cfg.encoder);
      const Dataset data = encode_corpus_dir(corpus, enc, cfg, true, threads);
      TgqModel model(cfg, cfg.train.variant, cfg.train.seed);
      fs::create_directories(t_out);
      write_text(fs::path(t_out) / "config.txt", cfg.to_text());
      TrainOptions opt;
      opt.out_dir = t_out;
      opt.on_step = [](const StepLog& s) {
        if (s.step % 50 == 0)
          std::cerr << "step " << s.step << " epoch " << s.epoch << " loss " << s.loss << " rr " << s.rr << '\n';
      };
      const TrainResult r = train(model, data, corpus.train_pairs, cfg.train, opt);
      m.extra["steps"] = std::to_string(r.steps);
      finish(m, t_out);
      std::cout << "trained variant " << variant_letter(cfg.train.variant) << " for " << r.steps << " steps";
      if (!r.log.empty()) std::cout << ", final loss " << r.log.back().loss;
      std::cout << '\n';
    } else if (*em) {
      const auto model = load_trained_model(e_ckpt);
      const Config& cfg = model->config();
      const CorpusDir corpus = read_corpus_dir(e_corpus);
      const Encoder enc(cfg.encoder);
      const Dataset data = encode_corpus_dir(corpus, enc, cfg, false, threads);
      std::vector<std::string> ids;
      if (e_all || corpus.blocklist.empty())
        for (const auto& it : corpus.items) ids.push_back(it.item_id);
      else
        ids.assign(corpus.blocklist.begin(), corpus.blocklist.end());
      RunManifest m = begin("embed", common, cfg, cfg.train.seed);
      const std::vector<fs::path> inputs{e_ckpt, e_corpus};
      m.inputs_hash = inputs_hash(inputs);
      const EmbeddingSet set = embed_parallel(*model, data, ids, threads);
      const fs::path prefix = e_out;
      if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
      write_embeddings(prefix, set);
      const fs::path dir = prefix.has_parent_path() ? prefix.parent_path() : fs::path(".");
      m.extra["prefix"] = prefix.filename().string();
      finish(m, dir);
      std::cout << "embedded " << set.size() << " items (dim " << set.dim() << ") to " << e_out << '\n';
    } else if (*ev) {
      const auto ks = parse_ks(v_ks);
      const EmbeddingSet pool = read_embeddings(v_emb);
      const auto pairs = read_pairs(v_pairs);
      const HitReport r = evaluate(pool, queries_from_pairs(pairs), ks);
      const fs::path out = v_out.empty() ? fs::path(v_emb + ".eval") : fs::path(v_out);
      fs::create_directories(out);
      RunManifest m = begin("eval", common, Config{}, 0);
      m.config.clear();
      const std::vector<fs::path> inputs{v_emb + ".ids", v_emb + ".tgqt", v_pairs};
      m.inputs_hash = inputs_hash(inputs);
      m.extra["ks"] = v_ks;
      write_hit_report(out / "hits.csv", out / "ranks.tsv", r);
      finish(m, out);
      std::cout << "queries\t" << r.query_ids.size() << '\n' << format_hit_table(r);
      std::cout << "csv\t" << (out / "hits.csv").string() << '\n';
    } else if (*ab) {
      Config cfg = resolve_config(common);
      cfg.validate();
      if (a_seeds < 1) throw UsageError("--seeds must be >= 1");
      RunManifest m = begin("ablate", common, cfg, cfg.train.seed);
      std::vector<fs::path> inputs;
      if (!common.config_path.empty()) inputs.emplace_back(common.config_path);
      if (!a_corpus.empty()) inputs.emplace_back(a_corpus);
      m.inputs_hash = inputs_hash(inputs);
      const CorpusDir corpus = corpus_or_synth(a_corpus, cfg);
      SynthBench bench{cfg, {}, Encoder(cfg.encoder), as_test_split(corpus), {}, {}, {}};
      bench.train_pairs.pairs = corpus.train_pairs;
      bench.data = encode_corpus_dir(corpus, bench.encoder, cfg, true, threads);
      bench.pool_ids.assign(corpus.blocklist.begin(), corpus.blocklist.end());
      fs::create_directories(a_out);
      std::ofstream csv(fs::path(a_out) / "ablation.csv");
      if (!csv) throw IoError("cannot write " + (fs::path(a_out) / "ablation.csv").string());
      csv.precision(10);
      csv << "variant,seed,K,hit_rate\n";
      const std::vector<std::size_t> grid_ks{20, 50, 100};
      std::ostringstream table;
      table << "variant\tH@20\tH@50\tH@100\n";
      for (char v : a_variants) {
        const Variant var = parse_variant(std::string(1, v));
        std::vector<double> mean(grid_ks.size(), 0.0);
        for (std::size_t s = 0; s < a_seeds; ++s) {
          const VariantRun run = run_variant(bench, var, cfg.train.seed + s);
          for (std::size_t i = 0; i < run.report.ks.size(); ++i)
            csv << v << ',' << run.seed << ',' << run.report.ks[i] << ',' << run.report.hit_rate[i] << '\n';
          for (std::size_t i = 0; i < grid_ks.size(); ++i) mean[i] += run.report.at(grid_ks[i]) / a_seeds;
          std::cerr << "variant " << v << " seed " << run.seed << " H@10 " << fixed4(run.report.at(10)) << '\n';
        }
        table << "(" << v << ") " << variant_name(var);
        for (double x : mean) table << '\t' << fixed4(100 * x);
        table << '\n';
      }
      write_text(fs::path(a_out) / "ablation.tsv", table.str());
      finish(m, a_out);
      std::cout << table.str();
    } else if (*at) {
      const auto model = load_trained_model(d_ckpt);
      const Config& cfg = model->config();
      const CorpusDir corpus = corpus_or_synth(d_corpus, cfg);
      const Encoder enc(cfg.encoder);
      const Dataset data = encode_corpus_dir(corpus, enc, cfg, false, threads);
      const auto ids = read_id_list(d_items);
      RunManifest m = begin("attn-dump", common, cfg, cfg.train.seed);
      std::vector<fs::path> inputs{d_ckpt, d_items};
      if (!d_corpus.empty()) inputs.emplace_back(d_corpus);
      m.inputs_hash = inputs_hash(inputs);
      fs::create_directories(d_out);
      NoGradGuard guard;
      std::ostringstream gates;
      for (const auto& id : ids) {
        const std::size_t i = data.at(id);
        const ItemForward f = model->forward(data.items[i], data.encoded[i], true);
        write_attention_dump(d_out, id, export_attention(f.raw), enc.grid_rows(), enc.grid_cols());
        if (f.beta_txt.defined()) {
          GateDiagnostics g;
          g.add({f.e_txt, f.e_rnd, f.beta_txt, f.beta_rnd}, f.s_title);
          write_text(fs::path(d_out) / id / "gates.txt", g.to_text());
        }
      }
      finish(m, d_out);
      std::cout << "dumped attention for " << ids.size() << " items to " << d_out << '\n';
    } else if (*gc) {
      const Config cfg = gradcheck_config();
      const auto groups = gradcheck(cfg, gc_scope);
      double worst = 0;
      std::ostringstream csv;
      csv.precision(6);
      csv << "group,checked,max_rel_error\n";
      std::cout << "group\tchecked\tmax_rel_error\n";
      for (const auto& g : groups) {
        std::cout << g.name << '\t' << g.checked << '\t' << g.max_rel_error << '\n';
        csv << g.name << ',' << g.checked << ',' << g.max_rel_error << '\n';
        worst = std::max(worst, g.max_rel_error);
      }
      if (!gc_out.empty()) {
        fs::create_directories(gc_out);
        RunManifest m = begin("gradcheck", common, cfg, 7);
        m.inputs_hash = inputs_hash({});
        m.extra["scope"] = gc_scope;
        write_text(fs::path(gc_out) / "gradcheck.csv", csv.str());
        finish(m, gc_out);
      }
      if (!(worst < 1e-4)) throw NumericError("gradient check failed: max relative error " + std::to_string(worst));
      std::cout << "ok: every group below 1e-4\n";
    } else if (*sw) {
      const auto ks = parse_ks(s_ks);
      std::vector<Severity> sevs;
      std::stringstream ss(s_sevs);
      for (std::string tok; std::getline(ss, tok, ',');)
        if (!tok.empty()) sevs.push_back(parse_severity(tok));
      const auto model = load_trained_model(s_ckpt);
      const Config& cfg = model->config();
      const CorpusDir corpus = read_corpus_dir(s_corpus);
      RunManifest m = begin("sweep", common, cfg, s_seed);
      const std::vector<fs::path> inputs{s_ckpt, s_corpus};
      m.inputs_hash = inputs_hash(inputs);
      const auto rows = robustness_sweep(*model, as_synth_corpus(corpus), Encoder(cfg.encoder),
                                         as_test_split(corpus), sevs, s_seed, ks);
      fs::create_directories(s_out);
      const std::string text = format_sweep_csv(rows);
      write_text(fs::path(s_out) / "sweep.csv", text);
      finish(m, s_out);
      std::cout << "severity";
      for (auto k : ks) std::cout << "\tH@" << k;
      std::cout << '\n';
      for (const auto& r : rows) {
        std::cout << severity_name(r.severity);
        for (double h : r.report.hit_rate) std::cout << '\t' << fixed4(h);
        std::cout << '\n';
      }
    } else if (*hs) {
      std::cout << directory_hash(h_dir) << '\n';
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "tgq: " << e.what() << '\n';
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "tgq: " << e.what() << '\n';
    return IoError("").exit_code();
  } catch (const std::exception& e) {
    std::cerr << "tgq: internal error: " << e.what() << '\n';
    return 1;
  }
}
