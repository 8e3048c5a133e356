#include "aslora/config.hpp"

#include <fstream>
#include <sstream>

namespace aslora {
namespace {

int64_t as_int(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_integer())
    throw ConfigError(key + ": expected an integer");
  return v.get<int64_t>();
}

int as_int32(const nlohmann::json& v, const std::string& key) {
  const int64_t x = as_int(v, key);
  if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(key + ": out of range");
  return static_cast<int>(x);
}

uint64_t as_uint(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<int64_t>() >= 0))
    throw ConfigError(key + ": expected a non-negative integer");
  return v.get<uint64_t>();
}

double as_num(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError(key + ": expected a number");
  return v.get<double>();
}

std::string as_str(const nlohmann::json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError(key + ": expected a string");
  return v.get<std::string>();
}

} // namespace

double lr_at(const TrainPlan& plan, long t) {
  if (t < 1 || t > plan.total_steps)
    throw ContractError("lr_at: step " + std::to_string(t) + " outside [1," +
                        std::to_string(plan.total_steps) + "]");
  if (plan.warmup_steps > 0 && t <= plan.warmup_steps)
    return plan.learning_rate * static_cast<double>(t) /
           static_cast<double>(plan.warmup_steps);
  return plan.learning_rate * static_cast<double>(plan.total_steps - t) /
         static_cast<double>(plan.total_steps - plan.warmup_steps);
}

void RunConfig::validate() const {
  model.validate();
  adapter.validate();
  task.validate(model.vocab_size);

  if (task.seq_len > model.max_seq_len)
    throw ConfigError("task_seq_len: exceeds max_seq_len");
  if (task.classification() && model.head != HeadKind::classification)
    throw ConfigError("head: task '" + std::string(task_kind_name(task.kind)) +
                      "' needs a classification head");
  if (!task.classification() && model.head != HeadKind::regression)
    throw ConfigError("head: task 'seq_regression' needs a regression head");

  if (plan.total_steps <= 0) throw ConfigError("total_steps: must be positive");
  if (plan.learning_rate <= 0.0) throw ConfigError("learning_rate: must be positive");
  if (plan.weight_decay < 0.0) throw ConfigError("weight_decay: must be non-negative");
  if (plan.batch_size <= 0) throw ConfigError("batch_size: must be positive");
  if (plan.warmup_steps < 0 || plan.warmup_steps >= plan.total_steps)
    throw ConfigError("warmup_steps: must lie in [0, total_steps)");
  if (plan.eval_every < 0) throw ConfigError("eval_every: must be non-negative");

  if (plan.merge_budget < 0) throw ConfigError("merge_budget: must be non-negative");
  if (plan.merge_budget > 0) {
    if (adapter.mode != ShareMode::aslora)
      throw ConfigError("merge_budget: adaptive merging requires mode 'aslora'");
    if (plan.merge_interval <= 0) throw ConfigError("merge_interval: must be positive");
    if (plan.merge_start < 0) throw ConfigError("merge_start: must be non-negative");
    if (plan.merge_budget >= model.num_layers)
      throw ConfigError("merge_budget: must be below num_layers");
    // All merges must complete before the run ends so a final-optimization
    // phase exists.
    const long last_merge = plan.merge_start +
                            static_cast<long>(plan.merge_budget) * plan.merge_interval;
    if (plan.total_steps <= last_merge)
      throw ConfigError("total_steps: must exceed merge_start + merge_budget * "
                        "merge_interval (= " + std::to_string(last_merge) + ")");
  }
}

RunConfig parse_run_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  RunConfig cfg;
  bool task_seed_given = false;

  for (const auto& [key, val] : j.items()) {
    if (key == "name") cfg.name = as_str(val, key);
    else if (key == "num_layers") cfg.model.num_layers = as_int32(val, key);
    else if (key == "model_dim") cfg.model.model_dim = as_int32(val, key);
    else if (key == "num_heads") cfg.model.num_heads = as_int32(val, key);
    else if (key == "ffn_dim") cfg.model.ffn_dim = as_int32(val, key);
    else if (key == "vocab_size") cfg.model.vocab_size = as_int32(val, key);
    else if (key == "max_seq_len") cfg.model.max_seq_len = as_int32(val, key);
    else if (key == "head") cfg.model.head = head_kind_from_name(as_str(val, key));
    else if (key == "num_classes") cfg.model.num_classes = as_int32(val, key);
    else if (key == "mode") cfg.adapter.mode = share_mode_from_name(as_str(val, key));
    else if (key == "rank") cfg.adapter.rank = as_int32(val, key);
    else if (key == "alpha") cfg.adapter.alpha = as_num(val, key);
    else if (key == "fixed_group_size") cfg.adapter.fixed_group_size = as_int32(val, key);
    else if (key == "a_init_std") cfg.adapter.a_init_std = as_num(val, key);
    else if (key == "adapted_types") {
      if (!val.is_array() || val.empty())
        throw ConfigError("adapted_types: expected a non-empty array");
      cfg.adapter.targets.clear();
      for (const auto& e : val)
        cfg.adapter.targets.push_back(proj_from_name(as_str(e, key)));
    }
    else if (key == "total_steps") cfg.plan.total_steps = as_int(val, key);
    else if (key == "merge_start") cfg.plan.merge_start = as_int(val, key);
    else if (key == "merge_interval") cfg.plan.merge_interval = as_int(val, key);
    else if (key == "merge_budget") cfg.plan.merge_budget = as_int32(val, key);
    else if (key == "pair_scope") cfg.plan.pair_scope = pair_scope_from_name(as_str(val, key));
    else if (key == "learning_rate") cfg.plan.learning_rate = as_num(val, key);
    else if (key == "warmup_steps") cfg.plan.warmup_steps = as_int(val, key);
    else if (key == "weight_decay") cfg.plan.weight_decay = as_num(val, key);
    else if (key == "batch_size") cfg.plan.batch_size = as_int32(val, key);
    else if (key == "eval_every") cfg.plan.eval_every = as_int(val, key);
    else if (key == "seed") cfg.seed = as_uint(val, key);
    else if (key == "task_kind") cfg.task.kind = task_kind_from_name(as_str(val, key));
    else if (key == "task_seq_len") cfg.task.seq_len = as_int32(val, key);
    else if (key == "num_train") cfg.task.num_train = as_int32(val, key);
    else if (key == "num_eval") cfg.task.num_eval = as_int32(val, key);
    else if (key == "noise_rate") cfg.task.noise_rate = as_num(val, key);
    else if (key == "probe_depth") cfg.task.probe_depth = as_int32(val, key);
    else if (key == "task_seed") {
      cfg.task.seed = as_uint(val, key);
      task_seed_given = true;
    }
    else throw ConfigError("unknown config key '" + key + "'");
  }

  // Resolve derived defaults to concrete values.
  if (!task_seed_given) cfg.task.seed = derive_seed(cfg.seed, "task_seed");
  if (cfg.adapter.a_init_std <= 0.0)
    cfg.adapter.a_init_std = cfg.adapter.resolved_a_std();

  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

nlohmann::ordered_json materialize(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["name"] = cfg.name;
  j["seed"] = cfg.seed;
  j["num_layers"] = cfg.model.num_layers;
  j["model_dim"] = cfg.model.model_dim;
  j["num_heads"] = cfg.model.num_heads;
  j["ffn_dim"] = cfg.model.ffn_dim;
  j["vocab_size"] = cfg.model.vocab_size;
  j["max_seq_len"] = cfg.model.max_seq_len;
  j["head"] = head_kind_name(cfg.model.head);
  j["num_classes"] = cfg.model.num_classes;
  j["mode"] = share_mode_name(cfg.adapter.mode);
  j["rank"] = cfg.adapter.rank;
  j["alpha"] = cfg.adapter.alpha;
  j["fixed_group_size"] = cfg.adapter.fixed_group_size;
  j["a_init_std"] = cfg.adapter.a_init_std;
  nlohmann::ordered_json types = nlohmann::ordered_json::array();
  for (ProjType t : cfg.adapter.targets) types.push_back(proj_name(t));
  j["adapted_types"] = std::move(types);
  j["total_steps"] = cfg.plan.total_steps;
  j["merge_start"] = cfg.plan.merge_start;
  j["merge_interval"] = cfg.plan.merge_interval;
  j["merge_budget"] = cfg.plan.merge_budget;
  j["pair_scope"] = pair_scope_name(cfg.plan.pair_scope);
  j["learning_rate"] = cfg.plan.learning_rate;
  j["warmup_steps"] = cfg.plan.warmup_steps;
  j["weight_decay"] = cfg.plan.weight_decay;
  j["batch_size"] = cfg.plan.batch_size;
  j["eval_every"] = cfg.plan.eval_every;
  j["task_kind"] = task_kind_name(cfg.task.kind);
  j["task_seq_len"] = cfg.task.seq_len;
  j["num_train"] = cfg.task.num_train;
  j["num_eval"] = cfg.task.num_eval;
  j["noise_rate"] = cfg.task.noise_rate;
  j["probe_depth"] = cfg.task.probe_depth;
  j["task_seed"] = cfg.task.seed;
  return j;
}

uint64_t config_hash(const RunConfig& cfg) {
  return fnv1a64(materialize(cfg).dump());
}

} // namespace aslora
