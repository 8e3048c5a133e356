#pragma once

#include "aslora/merge.hpp"
#include "aslora/model.hpp"

#include <json.hpp>

#include <ostream>
#include <string>

namespace aslora {

/// Shortest-precise decimal for a double (snprintf %.9g for floats carried
/// as double); identical input bits always give identical bytes.
std::string format_real(double v);

/// Streams the per-step CSV: header row on construction, then one row per
/// step. Columns: step,phase,loss,lr,live_groups_q,live_groups_v,params.
class MetricsWriter {
public:
  explicit MetricsWriter(std::ostream& os);
  void row(long step, const std::string& phase, double loss, double lr,
           int live_groups_q, int live_groups_v, int64_t params);

private:
  std::ostream& os_;
};

/// One JSON object per line.
class JsonlWriter {
public:
  explicit JsonlWriter(std::ostream& os) : os_(os) {}
  void line(const nlohmann::ordered_json& j);

private:
  std::ostream& os_;
};

nlohmann::ordered_json merge_event_json(const MergeEvent& ev);
nlohmann::ordered_json similarity_report_json(const SimilarityReport& report);

/// Per-type layer -> group id tables for every adapter bank on the model.
nlohmann::ordered_json assignment_json(const TransformerModel& model);

} // namespace aslora
