#include "aslora/model.hpp"

#include <algorithm>
#include <cmath>

namespace aslora {
namespace {

constexpr double kBaseInitStd = 0.02;

bool adapts(const std::optional<AdapterConfig>& acfg, ProjType t) {
  if (!acfg.has_value()) return false;
  return std::find(acfg->targets.begin(), acfg->targets.end(), t) != acfg->targets.end();
}

} // namespace

const char* head_kind_name(HeadKind k) {
  return k == HeadKind::classification ? "classification" : "regression";
}

HeadKind head_kind_from_name(const std::string& name) {
  if (name == "classification") return HeadKind::classification;
  if (name == "regression") return HeadKind::regression;
  throw ConfigError("unknown head kind '" + name + "'");
}

void ModelConfig::validate() const {
  if (num_layers <= 0) throw ConfigError("num_layers: must be positive");
  if (model_dim <= 0) throw ConfigError("model_dim: must be positive");
  if (num_heads <= 0) throw ConfigError("num_heads: must be positive");
  if (model_dim % num_heads != 0)
    throw ConfigError("num_heads: must divide model_dim (" + std::to_string(model_dim) +
                      " % " + std::to_string(num_heads) + " != 0)");
  if (ffn_dim <= 0) throw ConfigError("ffn_dim: must be positive");
  if (vocab_size <= 0) throw ConfigError("vocab_size: must be positive");
  if (max_seq_len <= 0) throw ConfigError("max_seq_len: must be positive");
  if (head == HeadKind::classification && num_classes < 2)
    throw ConfigError("num_classes: classification needs at least 2 classes");
}

TransformerModel::TransformerModel(const ModelConfig& cfg,
                                   std::optional<AdapterConfig> adapters,
                                   uint64_t seed)
    : cfg_(cfg), acfg_(std::move(adapters)), seed_(seed) {
  cfg_.validate();
  if (acfg_.has_value()) acfg_->validate();

  // Every weight family draws from its own substream: consuming or skipping
  // the adapter streams cannot shift the base weights.
  RandomStream base_rng(derive_seed(seed, "base"));
  tok_embed_ = Tensor::randn({cfg_.vocab_size, cfg_.model_dim}, base_rng, kBaseInitStd);
  pos_embed_ = Tensor::randn({cfg_.max_seq_len, cfg_.model_dim}, base_rng, kBaseInitStd);
  layers_.reserve(static_cast<size_t>(cfg_.num_layers));
  const int d = cfg_.model_dim;
  for (int l = 0; l < cfg_.num_layers; ++l) {
    LayerWeights w;
    w.ln1_g = Tensor::full({d}, real(1));
    w.ln1_b = Tensor::zeros({d});
    w.wq = Tensor::randn({d, d}, base_rng, kBaseInitStd);
    w.wk = Tensor::randn({d, d}, base_rng, kBaseInitStd);
    w.wv = Tensor::randn({d, d}, base_rng, kBaseInitStd);
    w.wo = Tensor::randn({d, d}, base_rng, kBaseInitStd);
    w.ln2_g = Tensor::full({d}, real(1));
    w.ln2_b = Tensor::zeros({d});
    w.w1 = Tensor::randn({cfg_.ffn_dim, d}, base_rng, kBaseInitStd);
    w.b1 = Tensor::zeros({cfg_.ffn_dim});
    w.w2 = Tensor::randn({d, cfg_.ffn_dim}, base_rng, kBaseInitStd);
    w.b2 = Tensor::zeros({d});
    layers_.push_back(std::move(w));
  }
  final_ln_g_ = Tensor::full({d}, real(1));
  final_ln_b_ = Tensor::zeros({d});

  RandomStream head_rng(derive_seed(seed, "head"));
  const int out_dim = cfg_.head == HeadKind::classification ? cfg_.num_classes : 1;
  head_w_ = Tensor::randn({out_dim, d}, head_rng, kBaseInitStd, true);
  head_b_ = Tensor::zeros({out_dim}, true);

  if (adapts(acfg_, ProjType::query))
    bank_q_.emplace(*acfg_, cfg_.num_layers, d, derive_seed(seed, "adapter.query"));
  if (adapts(acfg_, ProjType::value))
    bank_v_.emplace(*acfg_, cfg_.num_layers, d, derive_seed(seed, "adapter.value"));
}

Tensor TransformerModel::encode(const std::vector<int>& tokens, int batch, int seq) {
  if (seq > cfg_.max_seq_len)
    throw InputError("forward: sequence length " + std::to_string(seq) +
                     " exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));
  if (batch <= 0 || seq <= 0 ||
      tokens.size() != static_cast<size_t>(batch) * static_cast<size_t>(seq))
    throw ShapeError("forward: token count " + std::to_string(tokens.size()) +
                     " does not match batch " + std::to_string(batch) + " x seq " +
                     std::to_string(seq));

  Tensor x = embedding(tok_embed_, tokens, batch, seq);
  Tensor pos = pos_embed_;
  if (seq < cfg_.max_seq_len) {
    // Truncated copy; the table is frozen so no gradient path is lost.
    std::vector<real> rows(pos_embed_.data(),
                           pos_embed_.data() + static_cast<size_t>(seq) * cfg_.model_dim);
    pos = Tensor::from_values({seq, cfg_.model_dim}, std::move(rows));
  }
  x = add(x, pos);

  const int heads = cfg_.num_heads;
  const int hd = cfg_.head_dim();
  const real att_scale = static_cast<real>(1.0 / std::sqrt(static_cast<double>(hd)));

  for (int l = 0; l < cfg_.num_layers; ++l) {
    LayerWeights& w = layers_[static_cast<size_t>(l)];
    Tensor h = layer_norm(x, w.ln1_g, w.ln1_b);
    Tensor q = linear(h, w.wq);
    if (bank_q_.has_value()) q = add(q, bank_q_->forward(l, h));
    Tensor k = linear(h, w.wk);
    Tensor v = linear(h, w.wv);
    if (bank_v_.has_value()) v = add(v, bank_v_->forward(l, h));

    auto split = [&](const Tensor& t) {
      return reshape(permute(reshape(t, {batch, seq, heads, hd}), {0, 2, 1, 3}),
                     {batch * heads, seq, hd});
    };
    Tensor qh = split(q), kh = split(k), vh = split(v);
    Tensor scores = scale(bmm(qh, permute(kh, {0, 2, 1})), att_scale);
    Tensor ctx = bmm(softmax(scores), vh);
    ctx = reshape(permute(reshape(ctx, {batch, heads, seq, hd}), {0, 2, 1, 3}),
                  {batch, seq, cfg_.model_dim});
    x = add(x, linear(ctx, w.wo));

    Tensor f = layer_norm(x, w.ln2_g, w.ln2_b);
    f = gelu(add(linear(f, w.w1), w.b1));
    f = add(linear(f, w.w2), w.b2);
    x = add(x, f);
  }
  return layer_norm(x, final_ln_g_, final_ln_b_);
}

Tensor TransformerModel::forward(const std::vector<int>& tokens, int batch, int seq) {
  Tensor pooled = mean_pool(encode(tokens, batch, seq));
  Tensor out = add(linear(pooled, head_w_), head_b_);
  if (cfg_.head == HeadKind::regression) out = reshape(out, {batch});
  return out;
}

std::vector<Tensor> TransformerModel::trainable_parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_trainable_parameters()) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, Tensor>>
TransformerModel::named_trainable_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto add_bank = [&out](const char* prefix, const AdapterBank& bank) {
    for (auto& [name, t] : bank.named_params())
      out.emplace_back(std::string("adapter.") + prefix + "." + name, t);
  };
  if (bank_q_.has_value()) add_bank("query", *bank_q_);
  if (bank_v_.has_value()) add_bank("value", *bank_v_);
  out.emplace_back("head.w", head_w_);
  out.emplace_back("head.b", head_b_);
  return out;
}

std::vector<std::pair<std::string, Tensor>> TransformerModel::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("base.tok_embed", tok_embed_);
  out.emplace_back("base.pos_embed", pos_embed_);
  for (size_t l = 0; l < layers_.size(); ++l) {
    const auto& w = layers_[l];
    const std::string p = "base.layer" + std::to_string(l) + ".";
    out.emplace_back(p + "ln1_g", w.ln1_g);
    out.emplace_back(p + "ln1_b", w.ln1_b);
    out.emplace_back(p + "wq", w.wq);
    out.emplace_back(p + "wk", w.wk);
    out.emplace_back(p + "wv", w.wv);
    out.emplace_back(p + "wo", w.wo);
    out.emplace_back(p + "ln2_g", w.ln2_g);
    out.emplace_back(p + "ln2_b", w.ln2_b);
    out.emplace_back(p + "w1", w.w1);
    out.emplace_back(p + "b1", w.b1);
    out.emplace_back(p + "w2", w.w2);
    out.emplace_back(p + "b2", w.b2);
  }
  out.emplace_back("base.final_ln_g", final_ln_g_);
  out.emplace_back("base.final_ln_b", final_ln_b_);
  for (auto& [name, t] : named_trainable_parameters()) out.emplace_back(name, t);
  return out;
}

uint64_t TransformerModel::base_weights_hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [name, t] : named_tensors()) {
    if (name.rfind("base.", 0) != 0) continue;
    h = fnv1a64(name, h);
    h = fnv1a64(t.data(), t.values().size() * sizeof(real), h);
  }
  return h;
}

bool TransformerModel::has_bank(ProjType t) const {
  return t == ProjType::query ? bank_q_.has_value() : bank_v_.has_value();
}

AdapterBank& TransformerModel::bank(ProjType t) {
  auto& b = t == ProjType::query ? bank_q_ : bank_v_;
  if (!b.has_value())
    throw ContractError(std::string("model has no adapter bank on ") + proj_name(t));
  return *b;
}

const AdapterBank& TransformerModel::bank(ProjType t) const {
  const auto& b = t == ProjType::query ? bank_q_ : bank_v_;
  if (!b.has_value())
    throw ContractError(std::string("model has no adapter bank on ") + proj_name(t));
  return *b;
}

} // namespace aslora
