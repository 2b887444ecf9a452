// Acceptance run: one PASS/FAIL line per criterion. Tolerances are pinned
// here. Usage: acceptance [criterion numbers...] (default: all).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <map>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "tgq/bench.hpp"
#include "tgq/errors.hpp"
#include "tgq/gradcheck.hpp"
#include "tgq/pipeline.hpp"
#include "tgq/regularizer.hpp"

#ifndef TGQ_CLI
#error "TGQ_CLI must name the tgq executable"
#endif

namespace fs = std::filesystem;
using namespace tgq;

namespace {

// ---- pinned tolerances and budgets --------------------------------------------
constexpr double kGradTol = 1e-4;
constexpr double kGradBudgetSec = 120;
constexpr double kLossTol = 1e-9;
constexpr double kRrTol = 1e-6;
constexpr double kOddTol = 1e-12;
constexpr double kNoiseBudgetSec = 180;
constexpr double kTrendGap = 0.02;         // e - a on mean H@10
constexpr double kTrendBudgetSec = 1800;
constexpr double kSweepSlack = 0.005;       // allowed H@10 rise per severity step
constexpr int kTrendSeeds = 3;

// Desk benchmark: 2000 planted items, medium token corruption on half of them.
constexpr const char* kDeskConfig = R"(
corpus.n_items = 2000
corpus.n_cats = 6
corpus.n_brands = 3
corpus.planted_overlap = 0.8
corpus.corrupt_severity = medium
corpus.corrupt_fraction = 0.5
train.epochs = 6
train.lr = 1e-3
train.batch_pairs = 32
)";

constexpr const char* kTinyConfig = R"(
corpus.n_items = 60
corpus.n_test_pairs = 10
corpus.image_size = 32
encoder.d_v = 8
encoder.L_v = 9
encoder.vocab_size = 512
hqc.d_q = 8
hqc.d_llm = 8
hqc.T_r = 2
hqc.n_layers = 1
gate.hidden = 8
fusion.d_out = 16
fusion.vocab_size = 512
train.batch_pairs = 8
train.lr = 3e-3
train.epochs = 1
)";

struct Outcome {
  bool pass = true;
  std::string detail;
  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(double v, const char* spec = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_rows(std::size_t b, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(b * d);
  for (auto& x : v) x = rng.normal();
  return Tensor::from({b, d}, std::move(v));
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

// Every HitReport produced anywhere in this run goes through here.
std::vector<HitReport> g_reports;
const HitReport& keep(HitReport r) {
  g_reports.push_back(std::move(r));
  return g_reports.back();
}

bool monotone(const HitReport& r) {
  for (std::size_t i = 1; i < r.hit_rate.size(); ++i)
    if (r.hit_rate[i] < r.hit_rate[i - 1] || r.ks[i] < r.ks[i - 1]) return false;
  return true;
}

// ---- 1 -----------------------------------------------------------------------
Outcome gradient_fidelity() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const auto groups = gradcheck(gradcheck_config(), "all");
  const double secs = seconds_since(t0);
  const std::set<std::string> required{"hqc", "w_q", "q_rnd", "gate.txt", "gate.rnd", "fusion", "proj"};
  std::set<std::string> seen;
  double worst = 0;
  for (const auto& g : groups) {
    seen.insert(g.name);
    worst = std::max(worst, g.max_rel_error);
    o.check(g.checked > 0, g.name + " compared no coordinates");
    o.check(g.max_rel_error < kGradTol, g.name + " rel err " + fmt(g.max_rel_error));
  }
  for (const auto& r : required) o.check(seen.contains(r), "group " + r + " missing");
  o.check(secs < kGradBudgetSec, "took " + fmt(secs) + " s");
  o.note("max rel err " + fmt(worst) + " over " + std::to_string(groups.size()) + " groups, " + fmt(secs, "%.1f") + " s");
  return o;
}

// ---- 2 -----------------------------------------------------------------------
Outcome loss_oracles() {
  Outcome o;
  const Tensor same = Tensor::from({2, 4}, {0.3, -0.2, 0.5, 0.1, 0.3, -0.2, 0.5, 0.1});
  const double l2 = info_nce(same, same, 0.07).item();
  o.check(std::abs(l2 - std::log(2.0)) <= kLossTol, "B=2 info_nce " + fmt(l2, "%.12f"));

  // three queries, each at the same cosine to all three targets
  const double c = std::cos(2 * std::numbers::pi / 3), s = std::sin(2 * std::numbers::pi / 3);
  const Tensor q = Tensor::from({3, 3}, {0, 0, 1, 0, 0, 1, 0, 0, 1});
  const Tensor t = Tensor::from({3, 3}, {1, 0, 1, c, s, 1, c, -s, 1});
  const double l3 = info_nce(q, t, 0.07).item();
  o.check(std::abs(l3 - std::log(3.0)) <= kLossTol, "B=3 info_nce " + fmt(l3, "%.12f"));

  // identical post-modulation streams out of a real gated forward pass
  Config cfg = gradcheck_config();
  cfg.corpus.n_items = 24;
  const auto bench = make_synth_bench(cfg);
  TgqModel model(cfg, Variant::e, 5);
  std::vector<Tensor> rows;
  {
    NoGradGuard guard;
    for (std::size_t i = 0; i < bench.data.items.size(); ++i)
      rows.push_back(model.forward(bench.data.items[i], bench.data.encoded[i]).s_txt);
  }
  const Tensor S = concat(rows, 0);
  // exact standardization by hand: zero mean, unit population std per column
  std::vector<double> ex(S.rows() * S.cols());
  for (std::size_t k = 0; k < S.cols(); ++k) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < S.rows(); ++i) mean += S.at(i, k) / S.rows();
    for (std::size_t i = 0; i < S.rows(); ++i) var += (S.at(i, k) - mean) * (S.at(i, k) - mean) / S.rows();
    for (std::size_t i = 0; i < S.rows(); ++i) ex[i * S.cols() + k] = (S.at(i, k) - mean) / std::sqrt(var);
  }
  const Tensor exact = Tensor::from({S.rows(), S.cols()}, std::move(ex));
  const double rr_same = rr_loss(cross_correlation(exact, exact)).item();
  o.check(std::abs(rr_same - 1.0) <= kRrTol, "identical standardized streams rr " + fmt(rr_same, "%.12f"));
  // with the default eps, diag entries are sigma^2/(sigma+eps)^2 per column
  const double rr_eps = redundancy_loss(S, S).item();
  double oracle = 0;
  for (std::size_t k = 0; k < S.cols(); ++k) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < S.rows(); ++i) mean += S.at(i, k) / S.rows();
    for (std::size_t i = 0; i < S.rows(); ++i) var += (S.at(i, k) - mean) * (S.at(i, k) - mean) / S.rows();
    const double sd = std::sqrt(var), diag = var / ((sd + 1e-5) * (sd + 1e-5));
    oracle += diag * diag / S.cols();
  }
  o.check(std::abs(rr_eps - oracle) <= 1e-12, "eps=1e-5 rr " + fmt(rr_eps, "%.12f") + " vs oracle " + fmt(oracle, "%.12f"));

  const Tensor txt = Tensor::from({4, 1}, {1, 1, -1, -1}), rnd = Tensor::from({4, 1}, {1, -1, 1, -1});
  const double rr_zero = redundancy_loss(txt, rnd).item();
  o.check(std::abs(rr_zero) <= kRrTol, "zero-correlation rr " + fmt(rr_zero));
  o.note("ln2 err " + fmt(std::abs(l2 - std::log(2.0))) + ", ln3 err " + fmt(std::abs(l3 - std::log(3.0))) +
         ", rr(same) " + fmt(rr_same, "%.12f") + " [eps path " + fmt(rr_eps, "%.8f") + "], rr(zero) " + fmt(rr_zero));
  return o;
}

// ---- 3 -----------------------------------------------------------------------
Outcome gate_contracts() {
  Outcome o;
  Config cfg = gradcheck_config();
  cfg.corpus.n_items = 24;
  const auto bench = make_synth_bench(cfg);
  TgqModel model(cfg, Variant::d, 11);
  NoGradGuard guard;
  for (std::size_t i = 0; i < bench.data.items.size(); ++i) {
    const auto f = model.forward(bench.data.items[i], bench.data.encoded[i]);
    o.check(bit_equal(f.e_txt, f.raw.e_txt) && bit_equal(f.e_rnd, f.raw.e_rnd),
            "zero-init gate changed streams of " + bench.data.items[i].item_id);
  }
  // large random gate weights push the pre-activations into saturation
  Rng rng(13);
  for (const auto& p : model.store().scope("gate."))
    for (Tensor t = p.tensor; auto& w : t.mutable_data()) w = rng.normal() * 25.0;
  std::size_t n_beta = 0;
  double extreme = 0;
  for (std::size_t i = 0; i < bench.data.items.size(); ++i) {
    const auto f = model.forward(bench.data.items[i], bench.data.encoded[i]);
    for (const Tensor* b : {&f.beta_txt, &f.beta_rnd})
      for (double x : b->data()) {
        ++n_beta;
        extreme = std::max(extreme, std::abs(x));
        if (!(x > -1.0 && x < 1.0)) o.check(false, "beta component " + fmt(x, "%.17g") + " outside (-1,1)");
      }
  }
  Rng pts(17);
  std::vector<double> xs(1000);
  for (auto& x : xs) x = pts.normal() * 8.0;
  const Tensor pos = centered_sigmoid(Tensor::from({1000}, xs));
  for (auto& x : xs) x = -x;
  const Tensor neg = centered_sigmoid(Tensor::from({1000}, xs));
  double odd = 0;
  for (std::size_t i = 0; i < 1000; ++i) odd = std::max(odd, std::abs(pos.data()[i] + neg.data()[i]));
  o.check(odd <= kOddTol, "odd-function residual " + fmt(odd));
  o.note(std::to_string(n_beta) + " beta components, max |beta| " + fmt(extreme, "%.17g") + ", odd residual " + fmt(odd));
  return o;
}

// ---- 4 -----------------------------------------------------------------------
// independent oracle: full sort by (score desc, id asc), self excluded
std::vector<std::size_t> oracle_ranking(const EmbeddingSet& pool, std::size_t q) {
  std::vector<std::pair<double, std::size_t>> scored;
  const auto qr = pool.row(q);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool.ids()[i] == pool.ids()[q]) continue;
    double s = 0;
    const auto r = pool.row(i);
    for (std::size_t j = 0; j < pool.dim(); ++j) s += qr[j] * r[j];
    scored.emplace_back(s, i);
  }
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return pool.ids()[a.second] < pool.ids()[b.second];
  });
  std::vector<std::size_t> out;
  for (const auto& [s, i] : scored) out.push_back(i);
  return out;
}

Outcome retrieval_oracle() {
  Outcome o;
  const std::size_t N = 1000, d = 64, dups = 40;
  Rng rng(2024);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < N - dups; ++i) {
    std::vector<double> v(d);
    double n = 0;
    for (auto& x : v) n += (x = rng.normal()) * x;
    for (auto& x : v) x /= std::sqrt(n);
    rows.push_back(v);
  }
  for (std::size_t k = 0; k < dups; ++k) rows.push_back(rows[rng.below(N - dups)]);
  // shuffle storage so duplicates do not sit at the end
  std::vector<std::size_t> order(N);
  for (std::size_t i = 0; i < N; ++i) order[i] = i;
  shuffle(order, rng);
  EmbeddingSet pool(d);
  for (std::size_t i = 0; i < N; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "p%04zu", order[i]);
    pool.add(id, rows[i]);
  }
  const auto blocked = rank_blocked(pool, pool, true, 64);
  std::size_t mismatches = 0, tie_queries = 0;
  for (std::size_t q = 0; q < N; ++q) {
    const auto ref = oracle_ranking(pool, q);
    if (blocked[q] != ref || rank_naive(pool, pool.row(q), pool.ids()[q]) != ref) ++mismatches;
    const auto r0 = pool.row(ref[0]), qr = pool.row(q);
    if (std::equal(r0.begin(), r0.end(), qr.begin())) ++tie_queries;
  }
  o.check(mismatches == 0, std::to_string(mismatches) + " queries differ from the oracle");
  o.check(tie_queries >= dups, "only " + std::to_string(tie_queries) + " duplicate-tie queries exercised");

  // H@K on pairs over this pool and on the 3-item toy pool
  std::vector<IdPair> pairs;
  for (std::size_t q = 0; q < 200; ++q) pairs.push_back({pool.ids()[q], pool.ids()[(q * 7 + 3) % N]});
  keep(evaluate(pool, queries_from_pairs(pairs), kDefaultKs));
  EmbeddingSet toy(2);
  toy.add("q", std::vector<double>{1, 0});
  toy.add("a", std::vector<double>{0.8, 0.6});
  toy.add("b", std::vector<double>{0.6, 0.8});
  const std::vector<IdPair> toy_pairs{{"q", "b"}, {"a", "b"}, {"b", "a"}};
  const HitReport& tr = keep(evaluate(toy, queries_from_pairs(toy_pairs), std::vector<std::size_t>{1, 2}));
  // by hand: q ranks a,b (b at 2); a ranks b first; b ranks a first
  o.check(std::abs(tr.at(1) - 2.0 / 3) < 1e-15 && tr.at(2) == 1.0,
          "toy pool H@1 " + fmt(tr.at(1)) + " H@2 " + fmt(tr.at(2)));
  o.note(std::to_string(N) + " queries, " + std::to_string(tie_queries) + " with duplicate ties, " +
         std::to_string(mismatches) + " mismatches");
  return o;
}

// ---- 5 -----------------------------------------------------------------------
Outcome connector_shape() {
  Outcome o;
  std::size_t shapes = 0;
  for (std::size_t s : {1, 2, 5, 7}) {
    HqcConfig hc;
    hc.kernel = s;
    hc.stride = s;
    ParameterStore store(1);
    const Hqc h(store, hc, 4, true, true);
    for (std::size_t L = 1; L <= 50; ++L) {
      const std::size_t expect = static_cast<std::size_t>(std::ceil(static_cast<double>(L) / s));
      const std::size_t got = h.downsample(random_rows(L, 4, L)).rows();
      ++shapes;
      if (h.t_g(L) != expect || got != expect)
        o.check(false, "T_g(L=" + std::to_string(L) + ", s=" + std::to_string(s) + ")=" + std::to_string(got));
    }
  }
  Config cfg = gradcheck_config();
  cfg.corpus.n_items = 16;
  const auto bench = make_synth_bench(cfg);
  for (Variant v : {Variant::a, Variant::b, Variant::c, Variant::d, Variant::e}) {
    const TgqModel m(cfg, v, 3);
    const auto flags = flags_of(v);
    NoGradGuard guard;
    for (std::size_t i = 0; i < bench.data.items.size(); ++i) {
      const auto& enc = bench.data.encoded[i];
      const std::size_t T = tokenize(render_prompt(bench.data.items[i])).size();
      const std::size_t tg = (enc.h_txt.rows() + cfg.hqc.stride - 1) / cfg.hqc.stride;
      const std::size_t expect = T - 1 + (flags.semantic ? tg : 0) + (flags.exploratory ? cfg.hqc.T_r : 0);
      const std::size_t got = m.forward(bench.data.items[i], enc).fused_len;
      if (got != expect)
        o.check(false, std::string("variant ") + variant_letter(v) + " fused length " + std::to_string(got) +
                           " != " + std::to_string(expect));
    }
  }
  auto names = [&](Variant v) {
    std::vector<std::string> out;
    const TgqModel m(cfg, v, 3);
    for (const auto& p : m.store().params()) out.push_back(p.name);
    return out;
  };
  auto any_prefix = [](const std::vector<std::string>& ns, std::string_view pre) {
    return std::any_of(ns.begin(), ns.end(), [&](const std::string& n) { return n.starts_with(pre); });
  };
  const auto a = names(Variant::a), c = names(Variant::c), e = names(Variant::e);
  o.check(!any_prefix(a, "hqc.semantic"), "variant a exposes semantic-query parameters");
  o.check(!any_prefix(c, "gate."), "variant c exposes gate parameters");
  for (auto pre : {"hqc.semantic", "hqc.exploratory", "gate.txt", "gate.rnd", "fusion.", "proj."})
    o.check(any_prefix(e, pre), std::string("variant e lacks ") + pre);
  o.note(std::to_string(shapes) + " T_g cases, fused length checked on 5 variants x " +
         std::to_string(bench.data.items.size()) + " items, names: a " + std::to_string(a.size()) + ", c " +
         std::to_string(c.size()) + ", e " + std::to_string(e.size()));
  return o;
}

// ---- 6 -----------------------------------------------------------------------
struct Row {
  Severity s;
  double p_bg, p_ov;
  std::size_t n;
};
// severity ladder: clean, light, medium, heavy
const Row kTable[] = {{Severity::clean, 0, 0, 0}, {Severity::light, 0, 0.4, 1},
                      {Severity::medium, 0.5, 0.7, 3}, {Severity::heavy, 0.8, 0.9, 5}};

double band3(double p, double n) { return 3.0 * std::sqrt(p * (1 - p) / n); }

Outcome noise_exactness() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  LatentImage lat{"p1", {"k1w0", "k1w1"}, 0.8, 99};
  const Image img = render_latent_image(lat, 48);
  std::vector<Image> donors;
  for (int k = 0; k < 4; ++k) donors.push_back(render_latent_image({"p" + std::to_string(k + 2), {"k2w0"}, 0.5, 7u + k}, 48));
  for (int i = 0; i < 100; ++i) {
    Rng rng = corruption_rng(i, "item");
    if (!(corrupt(img, severity_spec(Severity::clean), rng, donors).pixels == img.pixels))
      o.check(false, "clean corruption changed bytes");
  }
  Image px(2, 1);
  px.set(0, 0, {245, 250, 241});
  px.set(1, 0, {239, 255, 255});
  const auto mask = foreground_mask(px);
  o.check(!mask[0] && mask[1], "foreground boundary at 240");

  // full corrupt() calls on small pictures; decisions read from the log
  const Image small = render_latent_image(lat, 24);
  const std::vector<Image> small_donors{render_latent_image({"p9", {"k3w0"}, 0.5, 3}, 24)};
  const int n = 10000;
  std::string freq;
  for (const Row& row : kTable) {
    const auto spec = severity_spec(row.s, 42);
    o.check(spec.p_bg == row.p_bg && spec.p_overlay == row.p_ov && spec.n_overlays == row.n,
            "severity " + severity_name(row.s) + " parameters");
    int bg = 0, ov = 0;
    for (int i = 0; i < n; ++i) {
      Rng rng = corruption_rng(42, "it" + std::to_string(i));
      CorruptionLog log;
      corrupt(small, spec, rng, small_donors, &log);
      bg += log.decision.background;
      ov += log.decision.overlay;
      if (log.overlays.size() > row.n || (log.decision.overlay && log.overlays.empty()))
        o.check(false, "overlay count " + std::to_string(log.overlays.size()));
    }
    const double fb = bg / double(n), fo = ov / double(n);
    o.check(std::abs(fb - row.p_bg) <= band3(row.p_bg, n) + 1e-12, severity_name(row.s) + " bg " + fmt(fb));
    o.check(std::abs(fo - row.p_ov) <= band3(row.p_ov, n) + 1e-12, severity_name(row.s) + " overlay " + fmt(fo));
    freq += severity_name(row.s) + " " + fmt(fb, "%.3f") + "/" + fmt(fo, "%.3f") + " ";
  }
  // geometry over 1000 draws on a non-square picture
  const int W = 240, H = 180;
  const double S = std::min(W, H);
  Rng g(5);
  std::size_t bad = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<OverlayRecord> recs;
    apply_overlays(Image(W, H), 1, g, &recs);
    const auto& r = recs.at(0);
    bool ok = true;
    switch (r.kind) {
      case OverlayKind::badge: ok = r.size >= 0.15 * S && r.size <= 0.20 * S; break;
      case OverlayKind::banner: ok = r.size >= 0.35 * S && r.size <= 0.45 * S && r.corner < 2; break;
      case OverlayKind::bar:
        ok = r.size >= 0.15 * H && r.size <= 0.20 * H &&
             (r.anchor_y == 0.0 || std::abs(r.anchor_y - (H - r.size)) < 1e-9);
        break;
    }
    if (r.kind != OverlayKind::bar) {
      const bool left = r.corner % 2 == 0, top = r.corner < 2;
      ok = ok && (left ? r.anchor_x <= 0.1 * W : r.anchor_x >= 0.9 * W);
      ok = ok && (top ? r.anchor_y <= 0.1 * H : r.anchor_y >= 0.9 * H);
    }
    bad += !ok;
  }
  o.check(bad == 0, std::to_string(bad) + " overlay draws outside their ranges");
  const double secs = seconds_since(t0);
  o.check(secs < kNoiseBudgetSec, "took " + fmt(secs) + " s");
  o.note("bg/overlay rates: " + freq + "| " + fmt(secs, "%.1f") + " s");
  return o;
}

// ---- 7 and 8 share the trained variant (e) models ------------------------------
struct TrendState {
  bool ran = false;
  std::vector<std::unique_ptr<TgqModel>> e_models;
  std::unique_ptr<SynthBench> bench;
};
TrendState g_trend;

Outcome desk_ablation_trend() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const Config cfg = parse_config(kDeskConfig, "desk");
  g_trend.bench = std::make_unique<SynthBench>(make_synth_bench(cfg));
  const SynthBench& bench = *g_trend.bench;
  std::map<char, double> mean;
  std::string per_seed;
  for (Variant v : {Variant::a, Variant::c, Variant::d, Variant::e}) {
    for (int s = 0; s < kTrendSeeds; ++s) {
      TgqModel* raw = nullptr;
      const VariantRun run = run_variant(bench, v, cfg.train.seed + s, &raw);
      std::unique_ptr<TgqModel> model(raw);
      keep(run.report);
      mean[variant_letter(v)] += run.report.at(10) / kTrendSeeds;
      per_seed += std::string(1, variant_letter(v)) + fmt(100 * run.report.at(10), "%.1f") + " ";
      std::cerr << "  [7] variant " << variant_letter(v) << " seed " << run.seed << " H@10 "
                << fmt(run.report.at(10), "%.4f") << " (" << fmt(seconds_since(t0), "%.0f") << " s)\n";
      if (v == Variant::e) g_trend.e_models.push_back(std::move(model));
    }
  }
  g_trend.ran = true;
  const double secs = seconds_since(t0);
  o.check(mean['e'] >= mean['d'], "e < d");
  o.check(mean['d'] >= mean['c'], "d < c");
  o.check(mean['c'] >= mean['a'], "c < a");
  o.check(mean['e'] - mean['a'] >= kTrendGap, "e - a = " + fmt(100 * (mean['e'] - mean['a'])) + " points");
  o.check(secs < kTrendBudgetSec, "took " + fmt(secs) + " s");
  o.note("mean H@10 a " + fmt(100 * mean['a'], "%.2f") + ", c " + fmt(100 * mean['c'], "%.2f") + ", d " +
         fmt(100 * mean['d'], "%.2f") + ", e " + fmt(100 * mean['e'], "%.2f") + " | per seed " + per_seed + "| " +
         fmt(secs, "%.0f") + " s");
  return o;
}

Outcome desk_robustness_trend() {
  Outcome o;
  if (!g_trend.ran) desk_ablation_trend();
  const SynthBench& bench = *g_trend.bench;
  const std::vector<Severity> sevs{Severity::clean, Severity::light, Severity::medium, Severity::heavy};
  std::vector<double> mean(sevs.size(), 0.0);
  for (const auto& model : g_trend.e_models) {
    const auto rows = robustness_sweep(*model, bench.corpus, bench.encoder, bench.test, sevs, bench.cfg.corpus.seed);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      keep(rows[i].report);
      mean[i] += rows[i].report.at(10) / g_trend.e_models.size();
    }
  }
  std::string line;
  for (std::size_t i = 0; i < sevs.size(); ++i) {
    line += severity_name(sevs[i]) + " " + fmt(100 * mean[i], "%.2f") + " ";
    if (i > 0) o.check(mean[i] - mean[i - 1] <= kSweepSlack, severity_name(sevs[i]) + " rises by " +
                                                                  fmt(100 * (mean[i] - mean[i - 1])) + " points");
  }
  o.note("mean H@10 over " + std::to_string(g_trend.e_models.size()) + " variant-e models: " + line);
  return o;
}

// ---- 9 -----------------------------------------------------------------------
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(TGQ_CLI) + " " + args + " >>" + log.string() + " 2>&1";
  return std::system(cmd.c_str());
}

Outcome determinism() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / ("tgq_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  {
    std::ofstream(root / "tiny.conf") << kTinyConfig;
  }
  const std::vector<std::string> artifacts{"corpus", "noisy/heavy", "train", "emb", "eval"};
  std::vector<std::vector<std::string>> hashes(2);
  std::vector<std::string> train_inputs(2);
  for (int r = 0; r < 2; ++r) {
    const fs::path d = root / ("run" + std::to_string(r));
    const std::string D = d.string(), conf = (root / "tiny.conf").string();
    const fs::path log = root / "cli.log";
    const std::vector<std::string> steps{
        "gen-corpus --config " + conf + " --items 60 --seed 42 --out " + D + "/corpus",
        "corrupt --in " + D + "/corpus --severity heavy --seed 5 --out " + D + "/noisy",
        "train --config " + conf + " --variant e --corpus " + D + "/corpus --max-steps 3 --out " + D + "/train",
        "embed --ckpt " + D + "/train --corpus " + D + "/noisy/heavy --out " + D + "/emb/e",
        "eval --emb " + D + "/emb/e --pairs " + D + "/corpus/test_pairs.tsv --out " + D + "/eval"};
    for (const auto& s : steps) {
      const int rc = run_cli(s, log);
      if (rc != 0) {
        o.check(false, "'tgq " + s.substr(0, s.find(' ')) + "' exited with " + std::to_string(rc) + " (see " +
                           log.string() + ")");
        return o;
      }
    }
    for (const auto& a : artifacts) {
      hashes[r].push_back(directory_hash(d / a));
      o.check(fs::exists(d / a / "manifest.json"), a + " has no manifest");
    }
    std::ifstream mf(d / "train" / "manifest.json");
    train_inputs[r] = nlohmann::json::parse(mf).at("inputs_hash").get<std::string>();
  }
  for (std::size_t i = 0; i < artifacts.size(); ++i)
    o.check(hashes[0][i] == hashes[1][i], artifacts[i] + " differs between reruns");
  o.check(train_inputs[0] == train_inputs[1], "train manifests record different input hashes");
  // the training run really took three steps
  std::ifstream metrics(root / "run0" / "train" / "metrics.csv");
  std::size_t lines = 0;
  for (std::string l; std::getline(metrics, l);) ++lines;
  o.check(lines == 4, "metrics.csv has " + std::to_string(lines) + " lines, expected header + 3 steps");
  if (o.pass) fs::remove_all(root);
  o.note(std::to_string(artifacts.size()) + " artifact trees identical, e.g. corpus " + hashes[0][0].substr(0, 12));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all{
      {1, "gradient fidelity", gradient_fidelity},
      {2, "loss oracles", loss_oracles},
      {3, "gate contracts", gate_contracts},
      {4, "retrieval oracle", retrieval_oracle},
      {5, "connector shape/structure", connector_shape},
      {6, "noise-lab exactness", noise_exactness},
      {7, "desk ablation trend", desk_ablation_trend},
      {8, "desk robustness trend", desk_robustness_trend},
      {9, "determinism", determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  std::map<int, Outcome> results;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.contains(c.id)) continue;
    std::cerr << "running criterion " << c.id << " (" << c.name << ")" << std::endl;
    try {
      results[c.id] = c.run();
    } catch (const std::exception& e) {
      results[c.id].pass = false;
      results[c.id].detail = std::string("exception: ") + e.what();
    }
  }
  // H@K monotonicity belongs to criterion 4 but covers every report of the run
  if (results.contains(4)) {
    std::size_t nonmono = 0;
    for (const auto& r : g_reports) nonmono += !monotone(r);
    results[4].check(nonmono == 0, std::to_string(nonmono) + " non-monotone H@K reports");
    results[4].note(std::to_string(g_reports.size()) + " H@K reports monotone in K");
  }
  bool ok = true;
  for (const auto& c : all) {
    if (!results.contains(c.id)) continue;
    const Outcome& out = results[c.id];
    ok = ok && out.pass;
    std::cout << "criterion " << c.id << " [" << c.name << "]: " << (out.pass ? "PASS" : "FAIL") << " - "
              << out.detail << std::endl;
  }
  return ok ? 0 : 1;
}
