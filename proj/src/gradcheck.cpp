#include "tgq/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "tgq/bench.hpp"
#include "tgq/errors.hpp"
#include "tgq/regularizer.hpp"
#include "tgq/rng.hpp"

namespace tgq {

namespace {

struct GroupDef {
  std::string name;
  std::function<bool(const std::string&)> member;
};

std::vector<GroupDef> groups_for(const std::string& scope) {
  auto prefix = [](std::string p) { return [p](const std::string& n) { return n.starts_with(p); }; };
  GroupDef hqc{"hqc", [](const std::string& n) {
                 return n.starts_with("hqc.") && n != "hqc.semantic.w_q" && n != "hqc.exploratory.q_rnd";
               }};
  GroupDef w_q{"w_q", prefix("hqc.semantic.w_q")};
  GroupDef q_rnd{"q_rnd", prefix("hqc.exploratory.q_rnd")};
  GroupDef g_txt{"gate.txt", prefix("gate.txt.")};
  GroupDef g_rnd{"gate.rnd", prefix("gate.rnd.")};
  GroupDef fusion{"fusion", prefix("fusion.")};
  GroupDef proj{"proj", prefix("proj.")};
  if (scope == "all") return {hqc, w_q, q_rnd, g_txt, g_rnd, fusion, proj};
  if (scope == "hqc") return {hqc, w_q, q_rnd};
  if (scope == "gating") return {g_txt, g_rnd};
  if (scope == "fusion") return {fusion, proj};
  if (scope == "regularizer") return {};
  throw UsageError("unknown gradcheck scope '" + scope + "' (expected all, hqc, gating, regularizer, fusion)");
}

// Checks sampled coordinates of `leaf`: some where the analytic gradient is
// nonzero, some anywhere.
void check_tensor(Tensor leaf, const std::function<double()>& loss, const GradcheckOptions& opt, Rng& rng,
                  GradGroup& g) {
  const std::vector<double> grad = leaf.grad();
  std::vector<std::size_t> nonzero;
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (grad[i] != 0.0) nonzero.push_back(i);
  std::vector<std::size_t> coords;
  shuffle(nonzero, rng);
  for (std::size_t i = 0; i < std::min(opt.samples_per_tensor, nonzero.size()); ++i) coords.push_back(nonzero[i]);
  for (std::size_t i = 0; i < std::min(opt.samples_per_tensor, grad.size()); ++i) coords.push_back(rng.below(grad.size()));
  auto data = leaf.mutable_data();
  for (std::size_t i : coords) {
    const double orig = data[i];
    data[i] = orig + opt.h;
    const double fp = loss();
    data[i] = orig - opt.h;
    const double fm = loss();
    data[i] = orig;
    const double num = (fp - fm) / (2.0 * opt.h);
    const double denom = std::max({std::abs(num), std::abs(grad[i]), opt.floor});
    g.max_rel_error = std::max(g.max_rel_error, std::abs(num - grad[i]) / denom);
    ++g.checked;
  }
}

GradGroup check_regularizer(const GradcheckOptions& opt) {
  Rng rng = Rng::stream(opt.seed, "gradcheck:rr");
  auto leaf = [&](std::size_t r, std::size_t c) {
    std::vector<double> v(r * c);
    for (auto& x : v) x = rng.normal();
    return Tensor::from({r, c}, std::move(v), true);
  };
  Tensor a = leaf(4, 8), b = leaf(4, 8);
  backward(redundancy_loss(a, b));
  auto loss = [&] {
    NoGradGuard ng;
    return redundancy_loss(a, b).item();
  };
  GradGroup g{"regularizer"};
  GradcheckOptions all = opt;
  all.samples_per_tensor = 32;
  check_tensor(a, loss, all, rng, g);
  check_tensor(b, loss, all, rng, g);
  return g;
}

}  // namespace

Config gradcheck_config() {
  Config cfg;
  cfg.encoder.d_v = 8;
  cfg.encoder.L_v = 9;
  cfg.encoder.vocab_size = 512;
  cfg.hqc.d_q = 8;
  cfg.hqc.d_llm = 8;
  cfg.hqc.T_r = 2;
  cfg.hqc.n_layers = 1;
  cfg.gate.hidden = 8;
  cfg.fusion.n_layers = 2;
  cfg.fusion.d_out = 8;
  cfg.fusion.vocab_size = 512;
  cfg.corpus.n_items = 12;
  cfg.corpus.n_test_pairs = 1;
  cfg.corpus.corrupt_fraction = 0.5;
  return cfg;
}

std::vector<GradGroup> gradcheck(const Config& cfg, const std::string& scope, const GradcheckOptions& opt) {
  const auto defs = groups_for(scope);
  std::vector<GradGroup> out;
  if (!defs.empty()) {
    const SynthBench bench = make_synth_bench(cfg);
    if (bench.train_pairs.pairs.size() < 2) throw ConfigError("gradcheck: corpus yields fewer than two pairs");
    const std::vector<IdPair> batch(bench.train_pairs.pairs.begin(), bench.train_pairs.pairs.begin() + 2);
    TgqModel model(cfg, Variant::e, opt.seed);
    Rng init = Rng::stream(opt.seed, "gradcheck:init");
    for (const auto& p : model.store().params())
      if (p.name.starts_with("gate.") && p.name.find(".fc2.") != std::string::npos)
        for (Tensor t = p.tensor; auto& w : t.mutable_data()) w = init.normal() * 0.5;
    TrainConfig tc = cfg.train;
    tc.variant = Variant::e;
    model.store().zero_grad();
    backward(batch_loss(model, bench.data, batch, tc).total);
    auto loss = [&] {
      NoGradGuard ng;
      return batch_loss(model, bench.data, batch, tc).total.item();
    };
    Rng rng = Rng::stream(opt.seed, "gradcheck:coords");
    for (const auto& d : defs) {
      GradGroup g{d.name};
      for (const auto& p : model.store().params())
        if (d.member(p.name)) check_tensor(p.tensor, loss, opt, rng, g);
      if (g.checked == 0) throw StateError("gradcheck: group " + d.name + " has no parameters");
      out.push_back(g);
    }
  }
  if (scope == "all" || scope == "regularizer") out.push_back(check_regularizer(opt));
  return out;
}

}  // namespace tgq
