// Command-line front end: train runs, parameter counting, budget sweeps,
// mode comparisons, and checkpoint inspection.
//
// Exit codes: 0 success, 1 internal error, 2 configuration or usage error,
// 3 numerical abort (non-finite loss), 4 I/O failure.

#include "aslora/checkpoint.hpp"
#include "aslora/kernels.hpp"
#include "aslora/train.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace aslora;

namespace {

struct ShapeArgs {
  int layers = 12;
  int dim = 768;
  int rank = 8;
  std::vector<std::string> types = {"query", "value"};

  AdapterConfig adapter(ShareMode mode) const {
    AdapterConfig cfg;
    cfg.mode = mode;
    cfg.rank = rank;
    cfg.targets.clear();
    for (const auto& t : types) cfg.targets.push_back(proj_from_name(t));
    return cfg;
  }
};

void add_shape_options(CLI::App* cmd, ShapeArgs& args) {
  cmd->add_option("--layers", args.layers, "Transformer layer count")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--dim", args.dim, "Model width")->check(CLI::PositiveNumber);
  cmd->add_option("--rank", args.rank, "Adapter rank")->check(CLI::PositiveNumber);
  cmd->add_option("--types", args.types, "Adapted projections")
      ->delimiter(',')
      ->expected(1, 2);
}

fs::path resolve_run_root(const std::string& override_root) {
  if (!override_root.empty()) return override_root;
  if (const char* env = std::getenv("ASLORA_RUN_ROOT"); env != nullptr && *env != '\0')
    return env;
  return "runs";
}

// <root>/<name>-s<seed>, with -2, -3, ... appended if taken.
fs::path claim_run_dir(const fs::path& root, const std::string& name, uint64_t seed) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create run root '" + root.string() + "': " + ec.message());
  const std::string base = name + "-s" + std::to_string(seed);
  for (int attempt = 1; attempt <= 99; ++attempt) {
    fs::path dir = root / (attempt == 1 ? base : base + "-" + std::to_string(attempt));
    if (fs::exists(dir)) continue;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create run dir '" + dir.string() + "': " + ec.message());
    return dir;
  }
  throw IoError("run directory name '" + base + "' exhausted 99 suffixes under '" +
                root.string() + "'");
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw IoError("cannot open '" + p.string() + "' for writing");
  return os;
}

struct RunOutputs {
  fs::path dir;
  RunReport report;
  double seconds = 0.0;
};

RunOutputs execute_run(const RunConfig& cfg, const fs::path& dir, bool quiet) {
  {
    std::ofstream os = open_out(dir / "config.json");
    os << materialize(cfg).dump(2) << '\n';
  }
  Trainer trainer(cfg);
  std::ofstream metrics = open_out(dir / "metrics.csv");
  std::ofstream merges = open_out(dir / "merges.jsonl");
  std::ofstream similarity = open_out(dir / "similarity.jsonl");
  RunSinks sinks;
  sinks.metrics = &metrics;
  sinks.merges = &merges;
  sinks.similarity = &similarity;
  sinks.progress = quiet ? nullptr : &std::cout;

  const auto start = std::chrono::steady_clock::now();
  RunOutputs out;
  out.dir = dir;
  out.report = trainer.run(&sinks);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  metrics.flush();
  merges.flush();
  similarity.flush();
  if (!metrics || !merges || !similarity)
    throw IoError("failed writing run logs under '" + dir.string() + "'");

  {
    std::ofstream os = open_out(dir / "assignment.json");
    os << assignment_json(trainer.model()).dump(2) << '\n';
  }
  trainer.save_checkpoint((dir / "final.ckpt").string());

  nlohmann::ordered_json summary;
  summary["name"] = cfg.name;
  summary["steps"] = cfg.plan.total_steps;
  summary["initial_loss"] = out.report.initial_loss;
  summary["final_loss"] = out.report.final_loss;
  summary["final_eval_loss"] = out.report.final_eval.loss;
  if (cfg.task.classification())
    summary["final_eval_accuracy"] = out.report.final_eval.accuracy;
  summary["adapter_params"] = out.report.final_adapter_params;
  summary["merge_events"] = out.report.merges.size();
  summary["elapsed_seconds"] = out.seconds;
  summary["gemm_backend"] =
      kernels::backend() == kernels::Backend::openmp ? "openmp" : "serial";
  summary["threads"] = kernels::max_threads();
  {
    std::ofstream os = open_out(dir / "summary.json");
    os << summary.dump(2) << '\n';
  }
  return out;
}

int cmd_train(const std::string& config_path, const std::string& run_root,
              const std::string& run_name, bool quiet) {
  RunConfig cfg = load_run_config(config_path);
  if (!run_name.empty()) cfg.name = run_name;
  if (cfg.name.empty()) cfg.name = fs::path(config_path).stem().string();

  const fs::path dir = claim_run_dir(resolve_run_root(run_root), cfg.name, cfg.seed);
  if (!quiet)
    std::cout << "run " << cfg.name << " -> " << dir.string() << '\n';
  RunOutputs out = execute_run(cfg, dir, quiet);
  std::cout << "done " << cfg.name << ": final_loss "
            << format_real(out.report.final_loss);
  if (cfg.task.classification())
    std::cout << " eval_acc " << format_real(out.report.final_eval.accuracy);
  std::cout << " params " << out.report.final_adapter_params << " ("
            << format_real(out.seconds) << "s)\n";
  return 0;
}

int cmd_params(const ShapeArgs& shape, const std::string& mode_name, int merges,
               int fixed_group_size) {
  const ShareMode mode = share_mode_from_name(mode_name);
  AdapterConfig acfg = shape.adapter(mode);
  acfg.fixed_group_size = fixed_group_size;
  const int64_t count = trainable_param_count(acfg, shape.layers, shape.dim, merges);

  nlohmann::ordered_json j;
  j["mode"] = mode_name;
  j["num_layers"] = shape.layers;
  j["model_dim"] = shape.dim;
  j["rank"] = shape.rank;
  nlohmann::ordered_json types = nlohmann::ordered_json::array();
  for (ProjType t : acfg.targets) types.push_back(proj_name(t));
  j["adapted_types"] = std::move(types);
  if (mode == ShareMode::aslora) j["merges"] = merges;
  if (mode == ShareMode::fixed_share) j["fixed_group_size"] = fixed_group_size;
  j["params"] = count;
  std::cout << j.dump() << '\n';
  return 0;
}

// For every fixed block size n, the budget N = L - ceil(L/n) leaves aslora
// with the same number of live groups, hence the same parameter count.
int cmd_sweep(const ShapeArgs& shape) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (int n = 2; n <= shape.layers; ++n) {
    const int blocks = (shape.layers + n - 1) / n;
    const int budget = shape.layers - blocks;
    if (budget < 1 || budget >= shape.layers) continue;

    AdapterConfig fixed = shape.adapter(ShareMode::fixed_share);
    fixed.fixed_group_size = n;
    AdapterConfig adaptive = shape.adapter(ShareMode::aslora);

    nlohmann::ordered_json row;
    row["fixed_group_size"] = n;
    row["merge_budget"] = budget;
    row["params_fixed"] = trainable_param_count(fixed, shape.layers, shape.dim);
    row["params_aslora"] =
        trainable_param_count(adaptive, shape.layers, shape.dim, budget);
    row["match"] = row["params_fixed"] == row["params_aslora"];
    rows.push_back(std::move(row));
  }
  std::cout << rows.dump(2) << '\n';
  return 0;
}

int cmd_compare(const std::string& config_path, const std::string& run_root,
                bool quiet) {
  const RunConfig base = load_run_config(config_path);
  std::string base_name = base.name.empty()
                              ? fs::path(config_path).stem().string()
                              : base.name;
  const fs::path dir = claim_run_dir(resolve_run_root(run_root),
                                     base_name + "-compare", base.seed);

  struct Variant {
    std::string label;
    ShareMode mode;
    int n_or_budget;
  };
  // Matched pairs: fixed blocks of size n against the merge budget that
  // leaves the same live-group count.
  const int group_sizes[] = {2, 3, 6};
  std::vector<Variant> variants;
  for (int n : group_sizes) {
    const int blocks = (base.model.num_layers + n - 1) / n;
    variants.push_back({"fixed_n" + std::to_string(n), ShareMode::fixed_share, n});
    variants.push_back({"aslora_N" + std::to_string(base.model.num_layers - blocks),
                        ShareMode::aslora, base.model.num_layers - blocks});
  }

  const std::string header =
      "variant,mode,setting,adapter_params,final_loss,eval_loss,eval_accuracy";
  std::cout << header << '\n';
  std::ofstream table = open_out(dir / "compare.csv");
  table << header << '\n';

  for (const Variant& v : variants) {
    RunConfig cfg = base;
    cfg.name = base_name + "-" + v.label;
    cfg.adapter.mode = v.mode;
    if (v.mode == ShareMode::fixed_share) {
      cfg.adapter.fixed_group_size = v.n_or_budget;
      cfg.plan.merge_budget = 0;
    } else {
      cfg.plan.merge_budget = v.n_or_budget;
    }
    cfg.validate();

    const fs::path sub = dir / v.label;
    std::error_code ec;
    fs::create_directories(sub, ec);
    if (ec) throw IoError("cannot create '" + sub.string() + "': " + ec.message());
    if (!quiet) std::cout << "# running " << v.label << "...\n" << std::flush;
    RunOutputs out = execute_run(cfg, sub, true);

    std::ostringstream row;
    row << v.label << ',' << share_mode_name(v.mode) << ',' << v.n_or_budget << ','
        << out.report.final_adapter_params << ',' << format_real(out.report.final_loss)
        << ',' << format_real(out.report.final_eval.loss) << ','
        << format_real(out.report.final_eval.accuracy);
    std::cout << row.str() << '\n' << std::flush;
    table << row.str() << '\n';
  }
  table.flush();
  if (!table) throw IoError("failed writing compare table");
  if (!quiet) std::cout << "# table saved to " << (dir / "compare.csv").string() << '\n';
  return 0;
}

int cmd_inspect(const std::string& path) {
  ContainerReader reader(path);
  nlohmann::ordered_json j;
  j["path"] = path;
  j["extra"] = reader.extra();
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  for (const auto& name : reader.names()) {
    nlohmann::ordered_json t;
    t["name"] = name;
    t["shape"] = reader.shape_of(name);
    tensors.push_back(std::move(t));
  }
  j["tensors"] = std::move(tensors);
  std::cout << j.dump(2) << '\n';
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shared-A low-rank adapter training on a desk-scale transformer"};
  app.require_subcommand(1);

  std::string backend = "auto";
  app.add_option("--backend", backend, "gemm driver: auto, serial, openmp")
      ->check(CLI::IsMember({"auto", "serial", "openmp"}));

  std::string config_path, run_root, run_name;
  bool quiet = false;

  auto* train = app.add_subcommand("train", "Run one training configuration");
  train->add_option("config", config_path, "JSON run config")->required();
  train->add_option("--run-root", run_root, "Run directory root (default $ASLORA_RUN_ROOT or ./runs)");
  train->add_option("--run-name", run_name, "Override the run name");
  train->add_flag("--quiet", quiet, "Suppress progress output");

  ShapeArgs shape;
  std::string mode_name = "aslora";
  int merges = 0;
  int fixed_group_size = 3;
  auto* params = app.add_subcommand("params", "Count trainable adapter parameters");
  add_shape_options(params, shape);
  params->add_option("--mode", mode_name, "lora, shared_a, fixed_share, aslora");
  params->add_option("--merges", merges, "Completed merges (aslora only)")
      ->check(CLI::NonNegativeNumber);
  params->add_option("--fixed-group-size", fixed_group_size, "Block size for fixed_share")
      ->check(CLI::PositiveNumber);

  auto* sweep = app.add_subcommand(
      "sweep", "Matched-budget table: fixed blocks vs adaptive merge budgets");
  add_shape_options(sweep, shape);

  auto* compare = app.add_subcommand(
      "compare", "Train matched fixed/adaptive variants and tabulate results");
  compare->add_option("config", config_path, "JSON run config used as the base")
      ->required();
  compare->add_option("--run-root", run_root, "Run directory root");
  compare->add_flag("--quiet", quiet, "Suppress progress output");

  auto* inspect = app.add_subcommand("inspect", "Describe a checkpoint file");
  inspect->add_option("checkpoint", config_path, "Checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (backend == "serial") kernels::set_backend(kernels::Backend::serial);
  if (backend == "openmp") kernels::set_backend(kernels::Backend::openmp);

  try {
    if (*train) return cmd_train(config_path, run_root, run_name, quiet);
    if (*params) return cmd_params(shape, mode_name, merges, fixed_group_size);
    if (*sweep) return cmd_sweep(shape);
    if (*compare) return cmd_compare(config_path, run_root, quiet);
    if (*inspect) return cmd_inspect(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return 3;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
