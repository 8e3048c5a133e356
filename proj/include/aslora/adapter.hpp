#pragma once

#include "aslora/tensor.hpp"

#include <string>
#include <vector>

namespace aslora {

/// Projections that can carry a low-rank adapter.
enum class ProjType { query, value };

const char* proj_name(ProjType t);
ProjType proj_from_name(const std::string& name);

/// How adapter factors are shared across layers.
///
///   lora:        per-layer A and per-layer B (classic baseline)
///   shared_a:    one A for all layers, per-layer B, no merging
///   fixed_share: one A, B shared by fixed contiguous blocks of layers
///   aslora:      one A, per-layer B that merge adaptively during training
enum class ShareMode { lora, shared_a, fixed_share, aslora };

const char* share_mode_name(ShareMode m);
ShareMode share_mode_from_name(const std::string& name);

struct AdapterConfig {
  ShareMode mode = ShareMode::aslora;
  int rank = 8;
  double alpha = 16.0;
  /// Block size n for fixed_share; every ceil(L/n) block shares one B.
  int fixed_group_size = 3;
  /// Stddev for the Gaussian A init; 0 resolves to 1/sqrt(rank).
  double a_init_std = 0.0;
  /// Projections that receive adapters.
  std::vector<ProjType> targets = {ProjType::query, ProjType::value};

  double resolved_a_std() const;
  void validate() const;
};

/// Set of layers currently sharing one B factor. The representative layer is
/// the highest member; merges keep the representative's B ("upper wins").
struct ShareGroup {
  int id = 0;
  std::vector<int> members; // ascending layer indices
  Tensor b;                 // [model_dim, rank]

  int representative() const { return members.back(); }
};

/// Result of one group merge, captured before the groups were fused.
struct MergeOutcome {
  int survivor_id = 0;
  int absorbed_id = 0;
  std::vector<int> survivor_members;
  std::vector<int> absorbed_members;
  /// The discarded B factor; callers use it to drop optimizer state.
  Tensor absorbed_b;
};

/// Low-rank adapter state for one projection type across all layers:
/// the A factor(s), the live share groups, and the layer-to-group table.
///
/// A is Gaussian, B starts at zero, so freshly initialized adapters add
/// exactly nothing to the base model's output.
class AdapterBank {
public:
  AdapterBank(const AdapterConfig& cfg, int num_layers, int model_dim,
              uint64_t seed);

  /// Adapter increment for one layer: (alpha/rank) * B_group(layer) * A * x.
  /// Layers in the same group run the identical computation.
  Tensor forward(int layer, const Tensor& x) const;

  /// Fuses two live groups. Pre: distinct ids, and high's representative
  /// layer is above low's (the caller orients). The survivor is high: its B
  /// buffer is left untouched and absorbed layers re-point to it.
  MergeOutcome merge_groups(int low_id, int high_id);

  /// layer -> group id.
  std::vector<int> assignment() const { return assignment_; }

  /// Rebuilds the group table from a saved assignment. B values are zeroed;
  /// the caller restores them afterwards (checkpoint load path).
  void restore_assignment(const std::vector<int>& layer_to_group);

  const std::vector<ShareGroup>& groups() const { return groups_; }
  const ShareGroup& group(int id) const;
  int group_id_of(int layer) const;
  int live_groups() const { return static_cast<int>(groups_.size()); }
  int num_layers() const { return num_layers_; }
  int model_dim() const { return model_dim_; }
  const AdapterConfig& config() const { return cfg_; }

  /// A factor used by a layer (the shared one unless mode is lora).
  const Tensor& a_for_layer(int layer) const;

  /// Stable names: "A" (shared) or "A.<layer>", and "B.g<id>" per group.
  std::vector<std::pair<std::string, Tensor>> named_params() const;

  /// The effective weight update (alpha/rank) * B * A for one layer, [d,d].
  Tensor delta_weight(int layer) const;

private:
  void check_layer(int layer) const;
  ShareGroup& group_mut(int id);

  AdapterConfig cfg_;
  int num_layers_;
  int model_dim_;
  std::vector<Tensor> a_;          // size 1, or num_layers for lora
  std::vector<ShareGroup> groups_; // live groups, ascending id
  std::vector<int> assignment_;    // layer -> group id
};

/// Trainable adapter parameter count after `merges_done` merges per target
/// type. merges_done must be 0 except in aslora mode.
int64_t trainable_param_count(const AdapterConfig& cfg, int num_layers,
                              int model_dim, int merges_done = 0);

} // namespace aslora
