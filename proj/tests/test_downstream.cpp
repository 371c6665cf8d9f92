#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "rarc/downstream.hpp"

using namespace rarc;

namespace {

QAItem item() {
  QAItem x;
  x.id = "q1";
  x.question = "who was president in 1962?";
  x.gold_answers = {"John F. Kennedy"};
  return x;
}

CandidatePool pool_of(std::vector<std::pair<std::string, double>> entries) {
  CandidatePool pool;
  pool.query_id = "q1";
  int n = 0;
  for (auto& [response, u] : entries) {
    Candidate c;
    c.system_name = "sys" + std::to_string(n++);
    c.response = response;
    c.uncertainty = u;
    pool.candidates.push_back(std::move(c));
  }
  return pool;
}

std::vector<int> cluster_sizes(const std::vector<Cluster>& clusters) {
  std::vector<int> sizes;
  for (const Cluster& c : clusters) sizes.push_back(static_cast<int>(c.members.size()));
  return sizes;
}

}  // namespace

TEST_SUITE("downstream") {

TEST_CASE("abstain decision is strict in the threshold") {
  CHECK(abstain_decision(0.95, 0.9));
  CHECK_FALSE(abstain_decision(0.9, 0.9));
  for (double tau : {0.0, 0.4, 0.95, 1.0}) CHECK_FALSE(abstain_decision(0.0, tau));
  CHECK(abstain_decision(0.1, 0.0));
  CHECK_FALSE(abstain_decision(1.0, 1.0));

  CHECK_THROWS_AS(abstain_decision(-0.1, 0.5), ContractViolation);
  CHECK_THROWS_AS(abstain_decision(1.1, 0.5), ContractViolation);
  CHECK_THROWS_AS(abstain_decision(0.5, -0.1), ContractViolation);
  CHECK_THROWS_AS(abstain_decision(0.5, 1.1), ContractViolation);

  // Monotone in U, antitone in tau.
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    double u1 = rng.next_unit(), u2 = rng.next_unit(), tau = rng.next_unit();
    if (u1 > u2) std::swap(u1, u2);
    if (abstain_decision(u1, tau)) CHECK(abstain_decision(u2, tau));
    double t1 = rng.next_unit(), t2 = rng.next_unit(), u = rng.next_unit();
    if (t1 > t2) std::swap(t1, t2);
    if (abstain_decision(u, t2)) CHECK(abstain_decision(u, t1));
  }
}

TEST_CASE("abstain confusion counts the four cells") {
  std::vector<std::pair<double, int>> items{
      {0.2, 1},   // answered correct
      {0.95, 1},  // abstained correct
      {0.3, 0},   // answered incorrect
      {0.99, 0},  // abstained incorrect
      {0.9, 0},   // boundary: answers at tau = 0.9
  };
  AbstainConfusion cm = abstain_confusion(items, 0.9);
  CHECK(cm.answered_correct == 1);
  CHECK(cm.abstained_correct == 1);
  CHECK(cm.answered_incorrect == 2);
  CHECK(cm.abstained_incorrect == 1);
  CHECK(cm.total() == 5);
}

TEST_CASE("abstain metrics hand fixtures") {
  AbstainConfusion cm;
  cm.answered_correct = 5;
  cm.abstained_correct = 3;
  cm.answered_incorrect = 1;
  cm.abstained_incorrect = 1;
  AbstainMetrics m = abstain_metrics(cm);
  CHECK(m.abstain_accuracy == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(m.abstain_f1 == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(m.reliable_accuracy == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(m.effective_reliability == doctest::Approx(0.4).epsilon(1e-12));
  CHECK_FALSE(m.degenerate);

  AbstainConfusion perfect;
  perfect.answered_correct = 10;
  AbstainMetrics pm = abstain_metrics(perfect);
  CHECK(pm.reliable_accuracy == 1.0);
  CHECK(pm.effective_reliability == 1.0);
  CHECK(pm.abstain_accuracy == 1.0);
  CHECK(pm.abstain_f1 == 0.0);
  CHECK(pm.degenerate);

  // Nothing answered: reliable accuracy is the degenerate cell.
  AbstainConfusion all_abstained;
  all_abstained.abstained_correct = 2;
  all_abstained.abstained_incorrect = 3;
  AbstainMetrics am = abstain_metrics(all_abstained);
  CHECK(am.reliable_accuracy == 0.0);
  CHECK(am.degenerate);
  CHECK(am.abstain_accuracy == doctest::Approx(0.6).epsilon(1e-12));

  CHECK_THROWS_AS(abstain_metrics(AbstainConfusion{}), EvalError);
}

TEST_CASE("threshold grid holds exactly the twelve sweep values") {
  std::vector<double> grid = abstain_threshold_grid();
  REQUIRE(grid.size() == 12);
  CHECK(grid.front() == 0.40);
  CHECK(grid.back() == 0.95);
  for (int i = 0; i < 12; ++i) CHECK(grid[i] == static_cast<double>(40 + 5 * i) / 100.0);
  for (int i = 1; i < 12; ++i) CHECK(grid[i] > grid[i - 1]);
}

TEST_CASE("calibration tie-breaks toward the larger threshold") {
  // All correct at U = 0.3, all wrong at U = 0.99: every grid value is optimal.
  std::vector<std::pair<double, int>> val;
  for (int i = 0; i < 5; ++i) val.push_back({0.3, 1});
  for (int i = 0; i < 5; ++i) val.push_back({0.99, 0});
  CHECK(calibrate_threshold(val, AbstainMetric::abstain_accuracy) == 0.95);
  CHECK(calibrate_threshold(val, AbstainMetric::abstain_f1) == 0.95);
}

TEST_CASE("calibration finds an interior optimum") {
  // Correct at 0.42, wrong at 0.50: only tau = 0.45 answers the correct item
  // while abstaining from the wrong one.
  std::vector<std::pair<double, int>> val{{0.42, 1}, {0.50, 0}};
  CHECK(calibrate_threshold(val, AbstainMetric::abstain_accuracy) == 0.45);
  CHECK(calibrate_threshold(val, AbstainMetric::abstain_f1) == 0.45);

  CHECK_THROWS_AS(calibrate_threshold({}, AbstainMetric::abstain_accuracy), ContractViolation);

  // Output is always a grid member.
  std::vector<double> grid = abstain_threshold_grid();
  Rng rng(77);
  for (int t = 0; t < 20; ++t) {
    std::vector<std::pair<double, int>> random_val;
    int n = rng.uniform_int(1, 30);
    for (int i = 0; i < n; ++i)
      random_val.push_back({rng.next_unit(), static_cast<int>(rng.next_below(2))});
    for (AbstainMetric metric : {AbstainMetric::abstain_accuracy, AbstainMetric::abstain_f1}) {
      double tau = calibrate_threshold(random_val, metric);
      CHECK(std::count(grid.begin(), grid.end(), tau) == 1);
    }
  }
}

TEST_CASE("metric and aggregation names round-trip") {
  CHECK(abstain_metric_from_string("abstain_accuracy") == AbstainMetric::abstain_accuracy);
  CHECK(abstain_metric_from_string("abstain_f1") == AbstainMetric::abstain_f1);
  CHECK_THROWS_AS(abstain_metric_from_string("accuracy"), ConfigError);
  CHECK(aggregation_from_string("sum") == Aggregation::sum);
  CHECK(aggregation_from_string("mean") == Aggregation::mean);
  CHECK_THROWS_AS(aggregation_from_string("max"), ConfigError);
}

TEST_CASE("candidate pool validation") {
  CandidatePool empty;
  empty.query_id = "q1";
  CHECK_THROWS_AS(validate(empty), ContractViolation);

  CandidatePool dup = pool_of({{"a", 0.1}, {"b", 0.2}});
  dup.candidates[1].system_name = dup.candidates[0].system_name;
  CHECK_THROWS_AS(validate(dup), ContractViolation);
}

TEST_CASE("clustering under normalized-exact equivalence") {
  Equivalence eq;

  CandidatePool same = pool_of({{"JFK", 0.1}, {"jfk", 0.2}, {"JFK!", 0.3}});
  auto one = cluster_responses(item(), same, eq);
  REQUIRE(one.size() == 1);
  CHECK(one[0].members == std::vector<int>{0, 1, 2});

  CandidatePool distinct = pool_of({{"JFK", 0.1}, {"Nixon", 0.2}, {"Truman", 0.3}});
  auto three = cluster_responses(item(), distinct, eq);
  REQUIRE(three.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(three[i].members == std::vector<int>{i});

  // Case and punctuation do not change the partition.
  CandidatePool shuffled = pool_of({{"jfk?", 0.1}, {"NIXON", 0.2}, {"the JFK", 0.3}});
  auto parts = cluster_responses(item(), shuffled, eq);
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].members == std::vector<int>{0, 2});
  CHECK(parts[1].members == std::vector<int>{1});

  // Partition property on random pools: disjoint and covering.
  Rng rng(99);
  std::vector<std::string> bases{"paris", "rome", "berlin", "madrid"};
  for (int t = 0; t < 20; ++t) {
    int n = rng.uniform_int(1, 8);
    std::vector<std::pair<std::string, double>> entries;
    for (int i = 0; i < n; ++i) {
      std::string r = bases[rng.next_below(bases.size())];
      if (rng.next_below(2)) r[0] = static_cast<char>(std::toupper(r[0]));
      if (rng.next_below(2)) r += "!";
      entries.push_back({r, rng.next_unit()});
    }
    CandidatePool pool = pool_of(entries);
    auto clusters = cluster_responses(item(), pool, eq);
    std::vector<int> seen(n, 0);
    for (const Cluster& c : clusters) {
      CHECK_FALSE(c.members.empty());
      for (int idx : c.members) seen[idx]++;
    }
    for (int count : seen) CHECK(count == 1);
  }
}

TEST_CASE("judge clustering groups JFK with John F. Kennedy") {
  int judge_calls = 0;
  LambdaBackend judge([&](const GenerationRequest& req) {
    ++judge_calls;
    CHECK(req.temperature == 0.0);
    CHECK(req.max_tokens == 8);
    const std::string& prompt = req.messages.front().content;
    GenerationResponse resp;
    resp.text = (contains(prompt, "JFK") && contains(prompt, "John F. Kennedy")) ? "yes" : "no";
    resp.token_usage = 1;
    return resp;
  });
  PromptSet prompts = default_prompts();
  Equivalence eq;
  eq.mode = EquivalenceMode::judge;
  eq.judge = &judge;
  eq.prompt = &prompts.equivalence;

  CandidatePool pool = pool_of({{"JFK", 0.3}, {"John F. Kennedy", 0.2}, {"Nixon", 0.4}});
  auto clusters = cluster_responses(item(), pool, eq, 11);
  REQUIRE(clusters.size() == 2);
  CHECK(cluster_sizes(clusters) == std::vector<int>{2, 1});
  CHECK(clusters[0].members == std::vector<int>{0, 1});
  CHECK(clusters[1].members == std::vector<int>{2});
  // One judge call per (candidate, representative) comparison.
  CHECK(judge_calls == 2);
}

TEST_CASE("singleton clusters cover every candidate") {
  CandidatePool pool = pool_of({{"a", 0.5}, {"a", 0.1}, {"b", 0.9}});
  auto clusters = singleton_clusters(pool);
  REQUIRE(clusters.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(clusters[i].members == std::vector<int>{i});
}

TEST_CASE("selection picks the lowest aggregated uncertainty") {
  CandidatePool pool = pool_of({{"a", 0.5}, {"b", 0.2}, {"c", 0.9}});
  auto clusters = singleton_clusters(pool);
  for (Aggregation agg : {Aggregation::sum, Aggregation::mean}) {
    Selection s = score_and_select(pool, clusters, agg);
    CHECK(s.candidate_index == 1);
    CHECK(s.cluster_index == 1);
    CHECK(s.cluster_uncertainty == 0.2);
  }
  CHECK_THROWS_AS(score_and_select(pool, {}, Aggregation::sum), ContractViolation);
}

TEST_CASE("sum mode lets a lone candidate beat an agreeing pair") {
  Equivalence eq;
  CandidatePool pool = pool_of({{"paris", 0.1}, {"Paris!", 0.1}, {"rome", 0.15}});
  auto clusters = cluster_responses(item(), pool, eq);
  REQUIRE(clusters.size() == 2);
  REQUIRE(clusters[0].members == std::vector<int>{0, 1});

  Selection sum_pick = score_and_select(pool, clusters, Aggregation::sum);
  CHECK(sum_pick.candidate_index == 2);
  CHECK(sum_pick.cluster_index == 1);
  CHECK(sum_pick.cluster_uncertainty == 0.15);

  Selection mean_pick = score_and_select(pool, clusters, Aggregation::mean);
  CHECK(mean_pick.candidate_index == 0);
  CHECK(mean_pick.cluster_index == 0);
  CHECK(mean_pick.cluster_uncertainty == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("selection tie keeps the earliest cluster") {
  CandidatePool pool = pool_of({{"a", 0.3}, {"b", 0.3}});
  auto clusters = singleton_clusters(pool);
  for (Aggregation agg : {Aggregation::sum, Aggregation::mean}) {
    Selection s = score_and_select(pool, clusters, agg);
    CHECK(s.candidate_index == 0);
    CHECK(s.cluster_index == 0);
  }
}

TEST_CASE("mean-mode argmin ignores a constant shift") {
  Rng rng(123);
  for (int t = 0; t < 30; ++t) {
    int n = rng.uniform_int(2, 6);
    std::vector<std::pair<std::string, double>> entries;
    for (int i = 0; i < n; ++i)
      entries.push_back({std::string(1, static_cast<char>('a' + rng.next_below(3))),
                         0.5 * rng.next_unit()});
    CandidatePool pool = pool_of(entries);
    auto clusters = cluster_responses(item(), pool, Equivalence{});
    Selection before = score_and_select(pool, clusters, Aggregation::mean);

    CandidatePool shifted = pool;
    for (Candidate& c : shifted.candidates) c.uncertainty += 0.3;
    Selection after = score_and_select(shifted, clusters, Aggregation::mean);
    CHECK(after.cluster_index == before.cluster_index);
    CHECK(after.candidate_index == before.candidate_index);
  }
}

TEST_CASE("single-candidate pool selects itself") {
  CandidatePool pool = pool_of({{"only", 0.7}});
  auto clusters = cluster_responses(item(), pool, Equivalence{});
  REQUIRE(clusters.size() == 1);
  Selection s = score_and_select(pool, clusters, Aggregation::sum);
  CHECK(s.candidate_index == 0);
  CHECK(s.cluster_uncertainty == 0.7);
}

}  // TEST_SUITE
