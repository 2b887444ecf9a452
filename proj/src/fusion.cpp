#include "tgq/fusion.hpp"

#include <cmath>

#include "tgq/errors.hpp"

namespace tgq {

namespace {

void replace_all(std::string& s, std::string_view from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

Tensor sinusoid_rows(std::size_t n, std::size_t d) {
  std::vector<double> v(n * d);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i / 2 * 2) / d);
      v[p * d + i] = i % 2 == 0 ? std::sin(p * freq) : std::cos(p * freq);
    }
  return Tensor::from({n, d}, std::move(v));
}

}  // namespace

std::string render_prompt(const ItemRecord& item, std::string_view tmpl) {
  std::string s(tmpl);
  replace_all(s, "$c1,c2,c3$", item.categories[0] + "," + item.categories[1] + "," + item.categories[2]);
  replace_all(s, "$b$", item.brand);
  replace_all(s, "$t$", item.title);
  return s;
}

FusionBackbone::FusionBackbone(ParameterStore& store, const FusionConfig& cfg, std::size_t d_llm)
    : cfg_(cfg), d_llm_(d_llm) {
  if (cfg.n_heads == 0 || d_llm % cfg.n_heads != 0)
    throw ConfigError("fusion heads must divide d_llm");
  tok_embed_ = store.uniform("fusion.tok_embed", {cfg.vocab_size, d_llm}, d_llm);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "fusion.layer" + std::to_string(l);
    Layer layer;
    layer.ln_attn = Norm(store, p + ".ln_attn", d_llm);
    layer.attn = Attention(store, p + ".attn", d_llm, d_llm, cfg.n_heads);
    layer.ln_ffn = Norm(store, p + ".ln_ffn", d_llm);
    layer.ffn = FeedForward(store, p + ".ffn", d_llm, 4 * d_llm);
    layers_.push_back(std::move(layer));
  }
  final_ln_ = Norm(store, "fusion.final_ln", d_llm);
  proj_ = Linear(store, "proj", d_llm, cfg.d_out);
}

PromptSequence FusionBackbone::assemble(std::string_view prompt, const Tensor& injected) const {
  const auto toks = tokenize(prompt);
  std::vector<std::size_t> ids;
  std::size_t placeholder = toks.size();
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i] == "<IMG>") {
      if (placeholder != toks.size()) throw ConfigError("prompt template has more than one <IMG> placeholder");
      placeholder = i;
    }
    ids.push_back(token_id(toks[i], cfg_.vocab_size));
  }
  if (placeholder == toks.size()) throw ConfigError("prompt template has no <IMG> placeholder");
  if (injected.cols() != d_llm_)
    throw DimensionError("injected rows have width " + std::to_string(injected.cols()) + ", expected " +
                         std::to_string(d_llm_));
  PromptSequence seq;
  seq.placeholder = placeholder;
  seq.token_embeddings = embedding(tok_embed_, ids);
  std::vector<Tensor> parts;
  if (placeholder > 0) parts.push_back(slice(seq.token_embeddings, 0, 0, placeholder));
  parts.push_back(injected);
  if (placeholder + 1 < ids.size()) parts.push_back(slice(seq.token_embeddings, 0, placeholder + 1, ids.size()));
  seq.fused = parts.size() == 1 ? parts[0] : concat(parts, 0);
  return seq;
}

Tensor FusionBackbone::embed(const PromptSequence& seq) const {
  const std::size_t n = seq.fused.rows();
  Tensor x = add(seq.fused, sinusoid_rows(n, d_llm_));
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const Tensor normed = layer.ln_attn(x);
    // only the summary row feeds the output, so the last layer skips the rest
    const bool last = l + 1 == layers_.size();
    const Tensor q = last ? slice(normed, 0, n - 1, n) : normed;
    Tensor h = add(last ? slice(x, 0, n - 1, n) : x, layer.attn(q, normed));
    h = add(h, layer.ffn(layer.ln_ffn(h)));
    x = h;
  }
  Tensor summary = layers_.empty() ? slice(x, 0, n - 1, n) : x;
  if (!all_finite(summary)) throw NumericError("fusion backbone produced non-finite hidden states");
  return l2_normalize(proj_(final_ln_(summary)), 1);
}

TgqModel::TgqModel(const Config& cfg, Variant variant, std::uint64_t seed)
    : cfg_(cfg),
      variant_(variant),
      store_(seed),
      hqc_(store_, cfg.hqc, cfg.encoder.d_v, flags_of(variant).semantic, flags_of(variant).exploratory),
      backbone_(store_, cfg.fusion, cfg.hqc.d_llm) {
  if (flags_of(variant).gates) gate_.emplace(store_, cfg.encoder.d_v, cfg.hqc.d_llm, cfg.gate.hidden);
}

ItemForward TgqModel::forward(const ItemRecord& item, const EncodedItem& enc, bool record_attention) const {
  ItemForward f;
  f.raw = hqc_.run(enc, record_attention);
  f.e_txt = f.raw.e_txt;
  f.e_rnd = f.raw.e_rnd;
  if (gate_) {
    GateInputs in;
    in.s_title = agreement_score(enc.f_img, enc.f_title);
    in.e_bar_txt = mean(f.raw.e_txt, 0);
    in.e_bar_rnd = mean(f.raw.e_rnd, 0);
    in.f_img = enc.f_img;
    in.f_title = enc.f_title;
    f.s_title = in.s_title;
    ModulatedStreams m = gate_->modulate(f.raw.e_txt, f.raw.e_rnd, in);
    f.e_txt = m.e_txt;
    f.e_rnd = m.e_rnd;
    f.beta_txt = m.beta_txt;
    f.beta_rnd = m.beta_rnd;
  }
  if (f.e_txt.defined()) f.s_txt = mean(f.e_txt, 0);
  if (f.e_rnd.defined()) f.s_rnd = mean(f.e_rnd, 0);
  Tensor injected;
  if (f.e_txt.defined() && f.e_rnd.defined()) injected = concat({f.e_txt, f.e_rnd}, 0);
  else injected = f.e_txt.defined() ? f.e_txt : f.e_rnd;
  const PromptSequence seq = backbone_.assemble(render_prompt(item), injected);
  f.fused_len = seq.fused.rows();
  f.z = backbone_.embed(seq);
  return f;
}

}  // namespace tgq
