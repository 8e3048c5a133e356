#include "aslora/train.hpp"

#include "aslora/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace aslora {

void AdamW::step(const std::vector<Tensor>& params, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr))
    throw ContractError("optimizer: learning rate must be finite and non-negative");
  for (const Tensor& p : params) {
    if (!p.requires_grad())
      throw ContractError("optimizer: parameter does not require grad");
    if (!p.has_grad())
      throw ContractError("optimizer: parameter has no gradient; run backward first");
    Tensor param = p;
    Moments& st = state_[param.impl()];
    const size_t n = param.values().size();
    if (st.m.empty()) {
      st.m.assign(n, real(0));
      st.v.assign(n, real(0));
    } else if (st.m.size() != n) {
      throw ContractError("optimizer: moment size does not match parameter");
    }
    st.steps += 1;

    const real b1 = static_cast<real>(s_.beta1);
    const real b2 = static_cast<real>(s_.beta2);
    const real one_m_b1 = real(1) - b1;
    const real one_m_b2 = real(1) - b2;
    const real eps = static_cast<real>(s_.eps);
    const real bc1 = static_cast<real>(
        1.0 - std::pow(s_.beta1, static_cast<double>(st.steps)));
    const real bc2 = static_cast<real>(
        1.0 - std::pow(s_.beta2, static_cast<double>(st.steps)));
    const real lr_r = static_cast<real>(lr);
    const real decay = static_cast<real>(lr * s_.weight_decay);

    real* w = param.data();
    const real* g = param.grad().data();
    for (size_t i = 0; i < n; ++i) {
      st.m[i] = b1 * st.m[i] + one_m_b1 * g[i];
      st.v[i] = b2 * st.v[i] + one_m_b2 * g[i] * g[i];
      const real mhat = st.m[i] / bc1;
      const real vhat = st.v[i] / bc2;
      // Decoupled decay: applied to the weight directly, not via the moments.
      w[i] -= decay * w[i];
      w[i] -= lr_r * mhat / (std::sqrt(vhat) + eps);
    }
    param.zero_grad();
  }
}

void AdamW::drop(const Tensor& param) { state_.erase(param.impl()); }

bool AdamW::tracks(const Tensor& param) const {
  return state_.count(param.impl()) > 0;
}

const AdamW::Moments* AdamW::find(const Tensor& param) const {
  auto it = state_.find(param.impl());
  return it == state_.end() ? nullptr : &it->second;
}

void AdamW::restore(const Tensor& param, Moments moments) {
  if (moments.m.size() != param.values().size() ||
      moments.v.size() != param.values().size())
    throw ContractError("optimizer restore: moment size mismatch");
  state_[param.impl()] = std::move(moments);
}

std::vector<const TensorImpl*> AdamW::tracked_keys() const {
  std::vector<const TensorImpl*> out;
  out.reserve(state_.size());
  for (const auto& [k, v] : state_) out.push_back(k);
  return out;
}

Trainer::Trainer(const RunConfig& cfg)
    : cfg_(cfg),
      opt_(AdamW::Settings{0.9, 0.999, 1e-8, cfg.plan.weight_decay}),
      batch_rng_(derive_seed(cfg.seed, "batches")) {
  cfg_.validate();
  model_ = std::make_unique<TransformerModel>(cfg_.model, cfg_.adapter, cfg_.seed);
  data_ = generate_task(cfg_.task, cfg_.model.vocab_size);
  base_hash_ = model_->base_weights_hash();

  if (cfg_.plan.merge_budget > 0) {
    MergeSchedule sched;
    sched.start_step = cfg_.plan.merge_start;
    sched.interval = cfg_.plan.merge_interval;
    sched.budget = cfg_.plan.merge_budget;
    sched.scope = cfg_.plan.pair_scope;
    std::vector<std::pair<ProjType, AdapterBank*>> banks;
    for (ProjType t : cfg_.adapter.targets)
      banks.emplace_back(t, &model_->bank(t));
    engine_ = std::make_unique<MergeEngine>(sched, std::move(banks));
  }
}

std::string Trainer::phase_at(long t) const {
  if (t <= cfg_.plan.merge_start) return "shared_training";
  if (engine_ != nullptr && engine_->tracking()) return "adaptive_merging";
  return "final_optimization";
}

int64_t Trainer::adapter_param_count() const {
  int64_t total = 0;
  for (ProjType t : cfg_.adapter.targets)
    for (const auto& [name, p] : model_->bank(t).named_params())
      total += p.numel();
  return total;
}

std::vector<int64_t> Trainer::draw_batch_indices() {
  std::vector<int64_t> idx(static_cast<size_t>(cfg_.plan.batch_size));
  for (auto& i : idx)
    i = static_cast<int64_t>(
        batch_rng_.uniform_int(static_cast<uint64_t>(data_.train.size())));
  return idx;
}

StepRecord Trainer::step_impl(std::vector<SimilarityReport>* reports) {
  if (done())
    throw ContractError("step: run already finished at step " + std::to_string(step_));
  const long t = ++step_;

  StepRecord rec;
  rec.step = t;
  rec.phase = phase_at(t);

  const Batch batch = make_batch(data_.train, draw_batch_indices());
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    Tensor out = model_->forward(batch.tokens, batch.batch, batch.seq);
    if (data_.train.classification) {
      loss = cross_entropy(out, batch.labels);
    } else {
      loss = mse(out, Tensor::from_values({batch.batch}, batch.targets));
    }
  }
  rec.loss = static_cast<double>(loss.item());
  if (!std::isfinite(rec.loss))
    throw NumericError("non-finite training loss at step " + std::to_string(t));

  tape.backward(loss);
  rec.lr = lr_at(cfg_.plan, t);
  opt_.step(model_->trainable_parameters(), rec.lr);

  if (engine_ != nullptr) {
    rec.events = engine_->on_step(t, reports);
    for (const MergeEvent& ev : rec.events) opt_.drop(ev.absorbed_b);
  }

  rec.live_groups_q =
      model_->has_bank(ProjType::query) ? model_->bank(ProjType::query).live_groups() : 0;
  rec.live_groups_v =
      model_->has_bank(ProjType::value) ? model_->bank(ProjType::value).live_groups() : 0;
  rec.adapter_params = adapter_param_count();
  return rec;
}

EvalPoint Trainer::evaluate_split(const Dataset& ds) {
  const EvalResult r = evaluate(*model_, ds, cfg_.plan.batch_size);
  EvalPoint p;
  p.step = step_;
  p.loss = r.loss;
  p.accuracy = r.accuracy;
  return p;
}

RunReport Trainer::run(RunSinks* sinks) {
  std::optional<MetricsWriter> metrics;
  std::optional<JsonlWriter> merges, similarity;
  if (sinks != nullptr && sinks->metrics != nullptr) metrics.emplace(*sinks->metrics);
  if (sinks != nullptr && sinks->merges != nullptr) merges.emplace(*sinks->merges);
  if (sinks != nullptr && sinks->similarity != nullptr)
    similarity.emplace(*sinks->similarity);
  std::ostream* progress = sinks != nullptr ? sinks->progress : nullptr;

  RunReport report;
  while (!done()) {
    std::vector<SimilarityReport> reports;
    StepRecord rec = step(reports);

    report.loss_by_step.push_back(rec.loss);
    if (rec.step == 1) report.initial_loss = rec.loss;
    for (const auto& ev : rec.events) report.merges.push_back(ev);

    if (metrics.has_value())
      metrics->row(rec.step, rec.phase, rec.loss, rec.lr, rec.live_groups_q,
                   rec.live_groups_v, rec.adapter_params);
    if (merges.has_value())
      for (const auto& ev : rec.events) merges->line(merge_event_json(ev));
    if (similarity.has_value())
      for (const auto& rep : reports) similarity->line(similarity_report_json(rep));

    const bool last = done();
    if ((cfg_.plan.eval_every > 0 && rec.step % cfg_.plan.eval_every == 0) || last) {
      EvalPoint p = evaluate_split(data_.eval);
      report.evals.push_back(p);
      if (last) report.final_eval = p;
      if (progress != nullptr) {
        *progress << "step " << rec.step << " loss " << format_real(rec.loss)
                  << " eval_loss " << format_real(p.loss);
        if (data_.eval.classification)
          *progress << " eval_acc " << format_real(p.accuracy);
        *progress << '\n';
      }
    }
  }

  const size_t n = report.loss_by_step.size();
  const size_t tail = std::min<size_t>(25, n);
  double acc = 0.0;
  for (size_t i = n - tail; i < n; ++i) acc += report.loss_by_step[i];
  report.final_loss = tail > 0 ? acc / static_cast<double>(tail) : 0.0;
  report.final_adapter_params = adapter_param_count();
  for (ProjType t : cfg_.adapter.targets)
    report.assignments[proj_name(t)] = model_->bank(t).assignment();

  if (model_->base_weights_hash() != base_hash_)
    throw ContractError("frozen base weights changed during training");
  return report;
}

void Trainer::save_checkpoint(const std::string& path) const {
  ContainerWriter w;
  for (const auto& [name, t] : model_->named_tensors())
    w.add_tensor(name, t.shape(), t.data(), t.numel());

  nlohmann::ordered_json opt_steps = nlohmann::ordered_json::object();
  for (const auto& [name, t] : model_->named_trainable_parameters()) {
    const AdamW::Moments* st = opt_.find(t);
    if (st == nullptr) continue;
    w.add_tensor("opt.m." + name, t.shape(), st->m.data(),
                 static_cast<int64_t>(st->m.size()));
    w.add_tensor("opt.v." + name, t.shape(), st->v.data(),
                 static_cast<int64_t>(st->v.size()));
    opt_steps[name] = st->steps;
  }

  nlohmann::ordered_json avg_meta = nlohmann::ordered_json::array();
  if (engine_ != nullptr) {
    for (const AverageSnapshot& snap : engine_->snapshot_averages()) {
      const std::string name = std::string("avg.") + proj_name(snap.type) + ".g" +
                               std::to_string(snap.group_id);
      w.add_tensor(name, snap.mean.shape(), snap.mean.data(), snap.mean.numel());
      nlohmann::ordered_json m;
      m["type"] = proj_name(snap.type);
      m["group"] = snap.group_id;
      m["count"] = snap.count;
      avg_meta.push_back(std::move(m));
    }
  }

  const RandomStream::State rng = batch_rng_.state();
  nlohmann::ordered_json extra;
  extra["format"] = 1;
  extra["config"] = materialize(cfg_);
  extra["config_hash"] = config_hash(cfg_);
  extra["step"] = step_;
  extra["base_hash"] = base_hash_;
  extra["rng_batches"] = {rng.s[0], rng.s[1], rng.s[2], rng.s[3],
                          rng.has_spare ? 1 : 0, std::bit_cast<uint64_t>(rng.spare)};
  extra["merges_done"] = engine_ != nullptr ? engine_->merges_done() : 0;
  extra["averages"] = std::move(avg_meta);
  nlohmann::ordered_json assign = nlohmann::ordered_json::object();
  for (ProjType t : cfg_.adapter.targets)
    assign[proj_name(t)] = model_->bank(t).assignment();
  extra["assignment"] = std::move(assign);
  extra["opt_steps"] = std::move(opt_steps);
  w.set_extra(std::move(extra));
  w.write(path);
}

void Trainer::load_checkpoint(const std::string& path) {
  ContainerReader r(path);
  const nlohmann::json& extra = r.extra();
  if (extra.value("format", 0) != 1)
    throw IoError("'" + path + "': unsupported checkpoint format");
  if (extra.at("config_hash").get<uint64_t>() != config_hash(cfg_))
    throw ConfigError("checkpoint '" + path +
                      "' was written under a different configuration");
  // The frozen base is a pure function of config and seed, so it is verified
  // rather than restored; this keeps failures non-destructive and keeps full
  // native precision even though the container payload is 32-bit.
  if (model_->base_weights_hash() != extra.at("base_hash").get<uint64_t>())
    throw ContractError("checkpoint base weights do not match this build's init");

  // Group structure first, so B tensor names resolve.
  const auto& assign = extra.at("assignment");
  for (ProjType t : cfg_.adapter.targets) {
    const auto groups = assign.at(proj_name(t)).get<std::vector<int>>();
    model_->bank(t).restore_assignment(groups);
  }

  for (const auto& [name, t] : model_->named_tensors()) {
    if (name.rfind("base.", 0) == 0) continue;
    Tensor tensor = t;
    tensor.values() = r.read(name, t.shape());
    tensor.clear_grad();
  }

  const auto& opt_steps = extra.at("opt_steps");
  for (const auto& [name, t] : model_->named_trainable_parameters()) {
    if (!r.has("opt.m." + name)) continue;
    AdamW::Moments st;
    st.m = r.read("opt.m." + name, t.shape());
    st.v = r.read("opt.v." + name, t.shape());
    st.steps = opt_steps.at(name).get<long>();
    opt_.restore(t, std::move(st));
  }

  if (engine_ != nullptr) {
    std::vector<AverageSnapshot> snaps;
    for (const auto& m : extra.at("averages")) {
      AverageSnapshot snap;
      snap.type = proj_from_name(m.at("type").get<std::string>());
      snap.group_id = m.at("group").get<int>();
      snap.count = m.at("count").get<long>();
      const std::string name = std::string("avg.") + proj_name(snap.type) + ".g" +
                               std::to_string(snap.group_id);
      const Shape shape{cfg_.model.model_dim, cfg_.adapter.rank};
      snap.mean = Tensor::from_values(shape, r.read(name, shape));
      snaps.push_back(std::move(snap));
    }
    engine_->restore(extra.at("merges_done").get<int>(), snaps);
  }

  const auto rng_words = extra.at("rng_batches").get<std::vector<uint64_t>>();
  if (rng_words.size() != 6) throw IoError("'" + path + "': bad RNG state");
  RandomStream::State rng;
  rng.s = {rng_words[0], rng_words[1], rng_words[2], rng_words[3]};
  rng.has_spare = rng_words[4] != 0;
  rng.spare = std::bit_cast<double>(rng_words[5]);
  batch_rng_.set_state(rng);

  step_ = extra.at("step").get<long>();
}

} // namespace aslora
