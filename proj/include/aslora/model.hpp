#pragma once

#include "aslora/adapter.hpp"
#include "aslora/ops.hpp"

#include <optional>
#include <string>
#include <vector>

namespace aslora {

enum class HeadKind { classification, regression };

const char* head_kind_name(HeadKind k);
HeadKind head_kind_from_name(const std::string& name);

/// Desk-scale encoder dimensions. Defaults train a 12-layer model in seconds
/// on one core while keeping the layer count of the reference setups.
struct ModelConfig {
  int num_layers = 12;
  int model_dim = 64;
  int num_heads = 4;
  int ffn_dim = 128;
  int vocab_size = 64;
  int max_seq_len = 32;
  HeadKind head = HeadKind::classification;
  int num_classes = 2;

  int head_dim() const { return model_dim / num_heads; }
  void validate() const;
};

/// Pre-norm transformer encoder with a frozen random base, optional low-rank
/// adapters on the query/value projections, and a trainable mean-pool head.
///
/// Base weights are drawn from a seed substream that never overlaps the
/// adapter or head streams, so the frozen base is bit-identical with and
/// without adapters attached.
class TransformerModel {
public:
  TransformerModel(const ModelConfig& cfg, std::optional<AdapterConfig> adapters,
                   uint64_t seed);

  /// tokens is row-major [batch, seq]. Returns logits [batch, num_classes]
  /// for classification heads or predictions [batch] for regression.
  Tensor forward(const std::vector<int>& tokens, int batch, int seq);

  /// Parameters the optimizer may update, in stable order: adapter A factors
  /// and live B factors (query bank then value bank), then the head.
  std::vector<Tensor> trainable_parameters() const;

  /// Same list with stable names ("adapter.query.A", "head.w", ...).
  std::vector<std::pair<std::string, Tensor>> named_trainable_parameters() const;

  /// Every stateful tensor including the frozen base, for serialization.
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;

  /// FNV-1a over all frozen base weights; must not change during training.
  uint64_t base_weights_hash() const;

  bool has_bank(ProjType t) const;
  AdapterBank& bank(ProjType t);
  const AdapterBank& bank(ProjType t) const;

  const ModelConfig& config() const { return cfg_; }
  const std::optional<AdapterConfig>& adapter_config() const { return acfg_; }
  uint64_t seed() const { return seed_; }

private:
  struct LayerWeights {
    Tensor ln1_g, ln1_b, wq, wk, wv, wo;
    Tensor ln2_g, ln2_b, w1, b1, w2, b2;
  };

  Tensor encode(const std::vector<int>& tokens, int batch, int seq);

  ModelConfig cfg_;
  std::optional<AdapterConfig> acfg_;
  uint64_t seed_;
  Tensor tok_embed_, pos_embed_;
  std::vector<LayerWeights> layers_;
  Tensor final_ln_g_, final_ln_b_;
  Tensor head_w_, head_b_;
  std::optional<AdapterBank> bank_q_, bank_v_;
};

} // namespace aslora
