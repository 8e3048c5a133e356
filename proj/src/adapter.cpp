#include "aslora/adapter.hpp"

#include "aslora/ops.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace aslora {

const char* proj_name(ProjType t) {
  return t == ProjType::query ? "query" : "value";
}

ProjType proj_from_name(const std::string& name) {
  if (name == "query") return ProjType::query;
  if (name == "value") return ProjType::value;
  throw ConfigError("unknown projection type '" + name + "' (expected query or value)");
}

const char* share_mode_name(ShareMode m) {
  switch (m) {
  case ShareMode::lora: return "lora";
  case ShareMode::shared_a: return "shared_a";
  case ShareMode::fixed_share: return "fixed_share";
  case ShareMode::aslora: return "aslora";
  }
  return "?";
}

ShareMode share_mode_from_name(const std::string& name) {
  if (name == "lora") return ShareMode::lora;
  if (name == "shared_a") return ShareMode::shared_a;
  if (name == "fixed_share") return ShareMode::fixed_share;
  if (name == "aslora") return ShareMode::aslora;
  throw ConfigError("unknown share mode '" + name + "'");
}

double AdapterConfig::resolved_a_std() const {
  return a_init_std > 0.0 ? a_init_std : 1.0 / std::sqrt(static_cast<double>(rank));
}

void AdapterConfig::validate() const {
  if (rank <= 0) throw ConfigError("rank: must be positive");
  if (alpha <= 0.0) throw ConfigError("alpha: must be positive");
  if (a_init_std < 0.0) throw ConfigError("a_init_std: must be non-negative");
  if (mode == ShareMode::fixed_share && fixed_group_size < 1)
    throw ConfigError("fixed_group_size: must be at least 1");
  if (targets.empty()) throw ConfigError("adapted_types: must not be empty");
  std::set<ProjType> seen;
  for (ProjType t : targets)
    if (!seen.insert(t).second)
      throw ConfigError("adapted_types: duplicate entry '" + std::string(proj_name(t)) + "'");
}

AdapterBank::AdapterBank(const AdapterConfig& cfg, int num_layers, int model_dim,
                         uint64_t seed)
    : cfg_(cfg), num_layers_(num_layers), model_dim_(model_dim) {
  cfg_.validate();
  if (num_layers <= 0 || model_dim <= 0)
    throw ConfigError("adapter bank: num_layers and model_dim must be positive");

  RandomStream rng(seed);
  const double a_std = cfg_.resolved_a_std();
  const int a_count = cfg_.mode == ShareMode::lora ? num_layers : 1;
  a_.reserve(static_cast<size_t>(a_count));
  for (int i = 0; i < a_count; ++i)
    a_.push_back(Tensor::randn({cfg_.rank, model_dim}, rng, a_std, true));

  assignment_.resize(static_cast<size_t>(num_layers));
  if (cfg_.mode == ShareMode::fixed_share) {
    const int blocks = (num_layers + cfg_.fixed_group_size - 1) / cfg_.fixed_group_size;
    for (int g = 0; g < blocks; ++g) {
      ShareGroup grp;
      grp.id = g;
      for (int l = g * cfg_.fixed_group_size;
           l < std::min((g + 1) * cfg_.fixed_group_size, num_layers); ++l) {
        grp.members.push_back(l);
        assignment_[static_cast<size_t>(l)] = g;
      }
      grp.b = Tensor::zeros({model_dim, cfg_.rank}, true);
      groups_.push_back(std::move(grp));
    }
  } else {
    // Singleton groups; ids equal layer indices and stay stable across merges.
    for (int l = 0; l < num_layers; ++l) {
      ShareGroup grp;
      grp.id = l;
      grp.members = {l};
      grp.b = Tensor::zeros({model_dim, cfg_.rank}, true);
      groups_.push_back(std::move(grp));
      assignment_[static_cast<size_t>(l)] = l;
    }
  }
}

void AdapterBank::check_layer(int layer) const {
  if (layer < 0 || layer >= num_layers_)
    throw ContractError("adapter bank: layer " + std::to_string(layer) +
                        " out of range [0," + std::to_string(num_layers_) + ")");
}

const Tensor& AdapterBank::a_for_layer(int layer) const {
  check_layer(layer);
  return cfg_.mode == ShareMode::lora ? a_[static_cast<size_t>(layer)] : a_[0];
}

int AdapterBank::group_id_of(int layer) const {
  check_layer(layer);
  return assignment_[static_cast<size_t>(layer)];
}

const ShareGroup& AdapterBank::group(int id) const {
  for (const auto& g : groups_)
    if (g.id == id) return g;
  throw ContractError("adapter bank: no live group with id " + std::to_string(id));
}

ShareGroup& AdapterBank::group_mut(int id) {
  for (auto& g : groups_)
    if (g.id == id) return g;
  throw ContractError("adapter bank: no live group with id " + std::to_string(id));
}

Tensor AdapterBank::forward(int layer, const Tensor& x) const {
  const ShareGroup& grp = group(group_id_of(layer));
  const Tensor& a = a_for_layer(layer);
  const real gain = static_cast<real>(cfg_.alpha / cfg_.rank);
  return scale(linear(linear(x, a), grp.b), gain);
}

MergeOutcome AdapterBank::merge_groups(int low_id, int high_id) {
  if (cfg_.mode == ShareMode::lora)
    throw ContractError("merge_groups: lora mode has per-layer A factors; "
                        "groups are not mergeable");
  if (low_id == high_id)
    throw ContractError("merge_groups: cannot merge group " +
                        std::to_string(low_id) + " with itself");
  ShareGroup& low = group_mut(low_id);
  ShareGroup& high = group_mut(high_id);
  if (low.representative() >= high.representative())
    throw ContractError("merge_groups: expected representative of group " +
                        std::to_string(high_id) + " above group " +
                        std::to_string(low_id));

  MergeOutcome out;
  out.survivor_id = high_id;
  out.absorbed_id = low_id;
  out.survivor_members = high.members;
  out.absorbed_members = low.members;
  out.absorbed_b = low.b;

  // Lower layers adopt the upper group's B; the survivor's buffer is the
  // same object before and after, bit for bit.
  high.members.insert(high.members.end(), low.members.begin(), low.members.end());
  std::sort(high.members.begin(), high.members.end());
  for (int l : out.absorbed_members) assignment_[static_cast<size_t>(l)] = high_id;
  groups_.erase(std::remove_if(groups_.begin(), groups_.end(),
                               [low_id](const ShareGroup& g) { return g.id == low_id; }),
                groups_.end());
  return out;
}

void AdapterBank::restore_assignment(const std::vector<int>& layer_to_group) {
  if (layer_to_group.size() != static_cast<size_t>(num_layers_))
    throw ContractError("restore_assignment: expected " + std::to_string(num_layers_) +
                        " entries, got " + std::to_string(layer_to_group.size()));
  std::vector<ShareGroup> rebuilt;
  for (int l = 0; l < num_layers_; ++l) {
    const int gid = layer_to_group[static_cast<size_t>(l)];
    if (gid < 0) throw ContractError("restore_assignment: negative group id");
    auto it = std::find_if(rebuilt.begin(), rebuilt.end(),
                           [gid](const ShareGroup& g) { return g.id == gid; });
    if (it == rebuilt.end()) {
      ShareGroup grp;
      grp.id = gid;
      grp.members = {l};
      grp.b = Tensor::zeros({model_dim_, cfg_.rank}, true);
      rebuilt.push_back(std::move(grp));
    } else {
      it->members.push_back(l);
    }
  }
  std::sort(rebuilt.begin(), rebuilt.end(),
            [](const ShareGroup& x, const ShareGroup& y) { return x.id < y.id; });
  groups_ = std::move(rebuilt);
  assignment_ = layer_to_group;
}

std::vector<std::pair<std::string, Tensor>> AdapterBank::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  if (cfg_.mode == ShareMode::lora) {
    for (int l = 0; l < num_layers_; ++l)
      out.emplace_back("A." + std::to_string(l), a_[static_cast<size_t>(l)]);
  } else {
    out.emplace_back("A", a_[0]);
  }
  for (const auto& g : groups_)
    out.emplace_back("B.g" + std::to_string(g.id), g.b);
  return out;
}

Tensor AdapterBank::delta_weight(int layer) const {
  const ShareGroup& grp = group(group_id_of(layer));
  const Tensor& a = a_for_layer(layer);
  Tensor dw = matmul(grp.b, a); // [d,r] x [r,d] -> [d,d]; no tape active here
  const real gain = static_cast<real>(cfg_.alpha / cfg_.rank);
  for (auto& v : dw.values()) v *= gain;
  return dw;
}

int64_t trainable_param_count(const AdapterConfig& cfg, int num_layers,
                              int model_dim, int merges_done) {
  cfg.validate();
  if (num_layers <= 0 || model_dim <= 0)
    throw ConfigError("trainable_param_count: dimensions must be positive");
  if (merges_done < 0 || (merges_done > 0 && cfg.mode != ShareMode::aslora))
    throw ContractError("trainable_param_count: merges apply only to aslora mode");
  if (merges_done >= num_layers)
    throw ContractError("trainable_param_count: at most num_layers-1 merges possible");

  const int64_t dr = static_cast<int64_t>(model_dim) * cfg.rank;
  int64_t per_type = 0;
  switch (cfg.mode) {
  case ShareMode::lora:
    per_type = 2 * static_cast<int64_t>(num_layers) * dr;
    break;
  case ShareMode::shared_a:
    per_type = (1 + static_cast<int64_t>(num_layers)) * dr;
    break;
  case ShareMode::fixed_share: {
    const int blocks = (num_layers + cfg.fixed_group_size - 1) / cfg.fixed_group_size;
    per_type = (1 + static_cast<int64_t>(blocks)) * dr;
    break;
  }
  case ShareMode::aslora:
    per_type = (1 + static_cast<int64_t>(num_layers) - merges_done) * dr;
    break;
  }
  return per_type * static_cast<int64_t>(cfg.targets.size());
}

} // namespace aslora
