#include "aslora/report.hpp"

#include <cstdio>

namespace aslora {

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

MetricsWriter::MetricsWriter(std::ostream& os) : os_(os) {
  os_ << "step,phase,loss,lr,live_groups_q,live_groups_v,params\n";
}

void MetricsWriter::row(long step, const std::string& phase, double loss, double lr,
                        int live_groups_q, int live_groups_v, int64_t params) {
  os_ << step << ',' << phase << ',' << format_real(loss) << ',' << format_real(lr)
      << ',' << live_groups_q << ',' << live_groups_v << ',' << params << '\n';
}

void JsonlWriter::line(const nlohmann::ordered_json& j) {
  os_ << j.dump() << '\n';
}

nlohmann::ordered_json merge_event_json(const MergeEvent& ev) {
  nlohmann::ordered_json j;
  j["step"] = ev.step;
  j["type"] = proj_name(ev.type);
  j["survivor_group"] = ev.survivor_id;
  j["survivor_members"] = ev.survivor_members;
  j["absorbed_group"] = ev.absorbed_id;
  j["absorbed_members"] = ev.absorbed_members;
  j["similarity"] = static_cast<double>(ev.score);
  return j;
}

nlohmann::ordered_json similarity_report_json(const SimilarityReport& report) {
  nlohmann::ordered_json j;
  j["step"] = report.step;
  j["type"] = proj_name(report.type);
  nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
  for (const auto& e : report.entries) {
    nlohmann::ordered_json p;
    p["low"] = e.low_id;
    p["high"] = e.high_id;
    p["adjacent"] = e.adjacent;
    p["similarity"] = static_cast<double>(e.score);
    pairs.push_back(std::move(p));
  }
  j["pairs"] = std::move(pairs);
  return j;
}

nlohmann::ordered_json assignment_json(const TransformerModel& model) {
  nlohmann::ordered_json j;
  for (ProjType t : {ProjType::query, ProjType::value}) {
    if (!model.has_bank(t)) continue;
    j[proj_name(t)] = model.bank(t).assignment();
  }
  return j;
}

} // namespace aslora
