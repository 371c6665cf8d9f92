#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "rarc/core.hpp"
#include "rarc/estimators.hpp"
#include "rarc/random.hpp"

namespace rarc {

// ---------------------------------------------------------------------------
// Abstention

struct AbstainConfusion {
  std::int64_t answered_correct = 0;    // A
  std::int64_t abstained_correct = 0;   // B
  std::int64_t answered_incorrect = 0;  // C
  std::int64_t abstained_incorrect = 0; // D

  std::int64_t total() const {
    return answered_correct + abstained_correct + answered_incorrect + abstained_incorrect;
  }
};

inline bool abstain_decision(double u, double tau) {
  if (u < 0.0 || u > 1.0 || tau < 0.0 || tau > 1.0)
    throw ContractViolation("abstain_decision: inputs out of [0, 1]");
  return u > tau;  // strict: U equal to the threshold still answers
}

inline AbstainConfusion abstain_confusion(const std::vector<std::pair<double, int>>& items,
                                          double tau) {
  AbstainConfusion cm;
  for (const auto& [u, correct] : items) {
    bool abstained = abstain_decision(u, tau);
    if (abstained)
      (correct ? cm.abstained_correct : cm.abstained_incorrect)++;
    else
      (correct ? cm.answered_correct : cm.answered_incorrect)++;
  }
  return cm;
}

struct AbstainMetrics {
  double reliable_accuracy = 0.0;
  double effective_reliability = 0.0;
  double abstain_accuracy = 0.0;
  double abstain_f1 = 0.0;
  bool degenerate = false;  // some denominator was zero; affected value set to 0
};

inline AbstainMetrics abstain_metrics(const AbstainConfusion& cm) {
  if (cm.total() == 0) throw EvalError("abstain_metrics: empty confusion matrix");
  double a = static_cast<double>(cm.answered_correct);
  double b = static_cast<double>(cm.abstained_correct);
  double c = static_cast<double>(cm.answered_incorrect);
  double d = static_cast<double>(cm.abstained_incorrect);
  double total = a + b + c + d;

  AbstainMetrics m;
  if (a + c > 0) {
    m.reliable_accuracy = a / (a + c);
  } else {
    m.degenerate = true;
  }
  m.effective_reliability = (a - c) / total;
  m.abstain_accuracy = (a + d) / total;
  if (b + d > 0 && c + d > 0) {
    double precision = d / (b + d);
    double recall = d / (c + d);
    if (precision + recall > 0)
      m.abstain_f1 = 2.0 * precision * recall / (precision + recall);
    else
      m.degenerate = true;
  } else {
    m.degenerate = true;
  }
  return m;
}

enum class AbstainMetric { abstain_accuracy, abstain_f1 };

inline AbstainMetric abstain_metric_from_string(const std::string& s) {
  if (s == "abstain_accuracy") return AbstainMetric::abstain_accuracy;
  if (s == "abstain_f1") return AbstainMetric::abstain_f1;
  throw ConfigError("unknown abstain metric: " + s);
}

inline std::vector<double> abstain_threshold_grid() {
  std::vector<double> grid;
  // (40 + 5i)/100 lands on the same doubles as the literals 0.40 ... 0.95.
  for (int i = 0; i < 12; ++i) grid.push_back(static_cast<double>(40 + 5 * i) / 100.0);
  return grid;
}

// Sweep the 12-value grid and keep the best threshold; ties go to the larger
// threshold (the sweep runs ascending and keeps >=).
inline double calibrate_threshold(const std::vector<std::pair<double, int>>& val,
                                  AbstainMetric metric) {
  if (val.empty()) throw ContractViolation("calibrate_threshold: empty validation set");
  double best_tau = 0.0;
  double best_value = -1e300;
  for (double tau : abstain_threshold_grid()) {
    AbstainMetrics m = abstain_metrics(abstain_confusion(val, tau));
    double value = metric == AbstainMetric::abstain_accuracy ? m.abstain_accuracy : m.abstain_f1;
    if (value >= best_value) {
      best_value = value;
      best_tau = tau;
    }
  }
  return best_tau;
}

// ---------------------------------------------------------------------------
// Model selection

struct Candidate {
  std::string system_name;
  std::string response;
  double uncertainty = 0.0;
};

struct CandidatePool {
  std::string query_id;
  std::vector<Candidate> candidates;
};

inline void validate(const CandidatePool& pool) {
  if (pool.candidates.empty()) throw ContractViolation("candidate pool empty");
  for (size_t i = 0; i < pool.candidates.size(); ++i)
    for (size_t j = i + 1; j < pool.candidates.size(); ++j)
      if (pool.candidates[i].system_name == pool.candidates[j].system_name)
        throw ContractViolation("duplicate system in pool: " + pool.candidates[i].system_name);
}

struct Cluster {
  std::vector<int> members;  // candidate indices; members[0] is the representative
};

// Single-linkage to the first matching cluster representative, in input order.
inline std::vector<Cluster> cluster_responses(const QAItem& x, const CandidatePool& pool,
                                              const Equivalence& eq, std::uint64_t seed = 0) {
  validate(pool);
  std::vector<Cluster> clusters;
  for (int i = 0; i < static_cast<int>(pool.candidates.size()); ++i) {
    bool placed = false;
    for (Cluster& c : clusters) {
      const Candidate& rep = pool.candidates[c.members.front()];
      if (answers_equivalent(x, pool.candidates[i].response, rep.response, eq,
                             hash64(seed, "cluster", static_cast<std::uint64_t>(i),
                                    static_cast<std::uint64_t>(c.members.front())))) {
        c.members.push_back(i);
        placed = true;
        break;
      }
    }
    if (!placed) clusters.push_back(Cluster{{i}});
  }
  return clusters;
}

// Every candidate its own cluster.
inline std::vector<Cluster> singleton_clusters(const CandidatePool& pool) {
  validate(pool);
  std::vector<Cluster> clusters;
  for (int i = 0; i < static_cast<int>(pool.candidates.size()); ++i)
    clusters.push_back(Cluster{{i}});
  return clusters;
}

enum class Aggregation { sum, mean };

inline Aggregation aggregation_from_string(const std::string& s) {
  if (s == "sum") return Aggregation::sum;
  if (s == "mean") return Aggregation::mean;
  throw ConfigError("unknown aggregation: " + s);
}

struct Selection {
  int candidate_index = 0;  // representative of the winning cluster
  int cluster_index = 0;
  double cluster_uncertainty = 0.0;
};

// Aggregate member uncertainties per cluster and pick the lowest; ties keep
// the earliest-created cluster.
inline Selection score_and_select(const CandidatePool& pool, const std::vector<Cluster>& clusters,
                                  Aggregation aggregation) {
  if (clusters.empty()) throw ContractViolation("score_and_select: no clusters");
  Selection best;
  double best_u = 0.0;
  for (int c = 0; c < static_cast<int>(clusters.size()); ++c) {
    double u = 0.0;
    for (int idx : clusters[c].members) u += pool.candidates[idx].uncertainty;
    if (aggregation == Aggregation::mean)
      u /= static_cast<double>(clusters[c].members.size());
    if (c == 0 || u < best_u) {
      best_u = u;
      best.cluster_index = c;
      best.candidate_index = clusters[c].members.front();
      best.cluster_uncertainty = u;
    }
  }
  return best;
}

}  // namespace rarc
