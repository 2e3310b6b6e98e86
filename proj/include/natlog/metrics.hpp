#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "natlog/error.hpp"
#include "natlog/relation.hpp"

namespace natlog {

struct PrfScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t predicted_events = 0;
  std::size_t gold_events = 0;
  std::size_t correct_events = 0;
};

/// Aggregation events of one path: steps t where z_t differs from z_{t-1}, with z_0 = ≡.
inline std::vector<std::pair<std::size_t, Relation>> aggregation_events(const std::vector<Relation>& path) {
  std::vector<std::pair<std::size_t, Relation>> out;
  Relation prev = Relation::Equivalence;
  for (std::size_t t = 0; t < path.size(); ++t) {
    if (path[t] != prev) out.emplace_back(t, path[t]);
    prev = path[t];
  }
  return out;
}

/// Precision, recall and F1 over aggregation events. A predicted event is
/// correct when a gold event has the same position and relation. 0/0 gives 0.
inline PrfScores aggregation_prf(const std::vector<std::vector<Relation>>& predicted,
                                 const std::vector<std::vector<Relation>>& gold) {
  if (predicted.size() != gold.size()) throw ContractViolation("aggregation_prf: example counts differ");
  PrfScores s;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i].size() != gold[i].size())
      throw ContractViolation("aggregation_prf: path lengths differ for example " + std::to_string(i));
    const auto pe = aggregation_events(predicted[i]);
    const auto ge = aggregation_events(gold[i]);
    s.predicted_events += pe.size();
    s.gold_events += ge.size();
    for (const auto& e : pe)
      for (const auto& g : ge) s.correct_events += e == g;
  }
  if (s.predicted_events) s.precision = static_cast<double>(s.correct_events) / s.predicted_events;
  if (s.gold_events) s.recall = static_cast<double>(s.correct_events) / s.gold_events;
  if (s.precision > 0.0 && s.recall > 0.0) s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

inline double accuracy(const std::vector<NliLabel>& predictions, const std::vector<NliLabel>& golds) {
  if (predictions.size() != golds.size()) throw ContractViolation("accuracy: length mismatch");
  if (golds.empty()) return 0.0;
  std::size_t c = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) c += predictions[i] == golds[i];
  return static_cast<double>(c) / static_cast<double>(golds.size());
}

/// Confusion counts keyed "gold->predicted".
inline std::map<std::string, std::size_t> per_class_counts(const std::vector<NliLabel>& predictions,
                                                           const std::vector<NliLabel>& golds) {
  if (predictions.size() != golds.size()) throw ContractViolation("per_class_counts: length mismatch");
  std::map<std::string, std::size_t> out;
  for (std::size_t i = 0; i < golds.size(); ++i)
    ++out[std::string(to_string(golds[i])) + "->" + std::string(to_string(predictions[i]))];
  return out;
}

/// Evaluation report. Fields not computed for a run stay null.
struct Report {
  std::optional<double> accuracy;
  std::optional<PrfScores> prf;
  std::map<std::string, std::size_t> per_class_counts;
  std::optional<double> up_dev_acc;
  std::optional<double> down_test_acc;

  nlohmann::json to_json() const {
    auto opt = [](const std::optional<double>& x) { return x ? nlohmann::json(*x) : nlohmann::json(nullptr); };
    nlohmann::json j;
    j["accuracy"] = opt(accuracy);
    j["precision"] = prf ? nlohmann::json(prf->precision) : nlohmann::json(nullptr);
    j["recall"] = prf ? nlohmann::json(prf->recall) : nlohmann::json(nullptr);
    j["f1"] = prf ? nlohmann::json(prf->f1) : nlohmann::json(nullptr);
    j["per_class_counts"] = per_class_counts;
    j["up_dev_acc"] = opt(up_dev_acc);
    j["down_test_acc"] = opt(down_test_acc);
    if (up_dev_acc && down_test_acc) j["gap"] = *up_dev_acc - *down_test_acc;
    return j;
  }
};

}  // namespace natlog
