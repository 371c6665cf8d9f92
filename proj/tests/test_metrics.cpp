#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "rarc/metrics.hpp"

using namespace rarc;

namespace {

ReasoningState search_state(int index, const std::string& query,
                            std::vector<Document> docs) {
  ReasoningState s;
  s.index = index;
  s.think = "think";
  s.payload = SearchQuery{query, std::move(docs)};
  return s;
}

ReasoningState answer_state(int index, const std::string& text) {
  ReasoningState s;
  s.index = index;
  s.think = "final";
  s.payload = Answer{text, false};
  return s;
}

ReasoningPath path_with_docs(const std::vector<std::vector<std::string>>& ids_per_step) {
  ReasoningPath p;
  p.query_id = "q";
  int idx = 1;
  for (const auto& ids : ids_per_step) {
    std::vector<Document> docs;
    for (const auto& id : ids) docs.push_back(Document{id, "title " + id, "text", {}});
    p.states.push_back(search_state(idx, "query " + std::to_string(idx), std::move(docs)));
    ++idx;
  }
  p.states.push_back(answer_state(idx, "done"));
  p.terminal = true;
  p.response = "done";
  return p;
}

// Pairwise reference: mean Mann-Whitney kernel over (incorrect, correct) pairs.
double auroc_pairwise(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  std::int64_t pairs = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 0) continue;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 1) continue;
      ++pairs;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

void random_labeled_scores(Rng& rng, int max_n, bool grid_scores,
                           std::vector<double>& scores, std::vector<int>& labels) {
  int n = rng.uniform_int(2, max_n);
  scores.clear();
  labels.clear();
  for (int i = 0; i < n; ++i) {
    scores.push_back(grid_scores ? static_cast<double>(rng.uniform_int(0, 12)) / 8.0
                                 : rng.next_unit());
    labels.push_back(static_cast<int>(rng.next_below(2)));
  }
  labels[0] = 0;
  labels[1] = 1;
}

double sample_variance(const std::vector<double>& v) {
  double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

// Binomial(n, 1/2) CDF from a Pascal triangle row built by additions.
double binom_cdf_pascal(int k, int n) {
  std::vector<double> row{1.0};
  for (int r = 1; r <= n; ++r) {
    std::vector<double> next(static_cast<size_t>(r) + 1, 1.0);
    for (int i = 1; i < r; ++i) next[i] = row[i - 1] + row[i];
    row = std::move(next);
  }
  double total = 0.0;
  for (int i = 0; i <= k; ++i) total += row[i];
  return total * std::pow(0.5, n);
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("exact match follows answer normalization") {
  std::vector<std::string> golds{"Orlando Magic"};
  CHECK(exact_match("Orlando Magic", golds) == 1);
  CHECK(exact_match("the orlando magic", golds) == 1);
  CHECK(exact_match("The Orlando Magic!", golds) == 1);
  CHECK(exact_match("Orlando", golds) == 0);
  CHECK(exact_match("magic orlando", golds) == 0);

  std::vector<std::string> multi{"New York City", "NYC"};
  CHECK(exact_match("nyc", multi) == 1);
  CHECK(exact_match("new york", multi) == 0);

  CHECK_THROWS_AS(exact_match("anything", {}), ContractViolation);
}

TEST_CASE("auroc fixtures: separation, ties, reversal, guards") {
  std::vector<double> sep{0.9, 0.8, 0.2, 0.1};
  std::vector<int> labels{0, 0, 1, 1};
  CHECK(auroc(sep, labels) == 1.0);

  std::vector<int> reversed{1, 1, 0, 0};
  CHECK(auroc(sep, reversed) == 0.0);

  std::vector<double> flat{0.3, 0.3, 0.3, 0.3};
  CHECK(auroc(flat, labels) == 0.5);

  std::vector<double> tied{0.5, 0.5, 0.2};
  std::vector<int> tied_labels{0, 1, 1};
  CHECK(auroc(tied, tied_labels) == 0.75);

  std::vector<double> one_class_scores{0.1, 0.2};
  std::vector<int> all_correct{1, 1};
  std::vector<int> all_incorrect{0, 0};
  CHECK_THROWS_AS(auroc(one_class_scores, all_correct), MetricError);
  CHECK_THROWS_AS(auroc(one_class_scores, all_incorrect), MetricError);
  CHECK_THROWS_AS(auroc({}, {}), MetricError);
  std::vector<int> short_labels{0};
  CHECK_THROWS_AS(auroc(one_class_scores, short_labels), ContractViolation);
}

TEST_CASE("auroc equals the pairwise oracle on random tied instances") {
  Rng rng(20260816);
  for (int t = 0; t < 200; ++t) {
    bool grid = (t % 2) == 0;
    std::vector<double> scores;
    std::vector<int> labels;
    random_labeled_scores(rng, 200, grid, scores, labels);

    double fast = auroc(scores, labels);
    CHECK(fast == auroc_pairwise(scores, labels));

    std::vector<int> flipped(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) flipped[i] = 1 - labels[i];
    CHECK(fast + auroc(scores, flipped) == doctest::Approx(1.0).epsilon(1e-12));

    if (grid) {
      std::vector<double> transformed(scores.size());
      for (size_t i = 0; i < scores.size(); ++i) transformed[i] = 3.0 * scores[i] + 1.0;
      CHECK(auroc(transformed, labels) == fast);
    }
  }
}

TEST_CASE("delong on identical methods degenerates to p = 1") {
  Rng rng(31);
  std::vector<double> scores;
  std::vector<int> labels;
  random_labeled_scores(rng, 40, false, scores, labels);

  DelongResult r = delong_test(scores, scores, labels);
  CHECK(r.auroc_a == r.auroc_b);
  CHECK(r.var_diff == 0.0);
  CHECK(r.z == 0.0);
  CHECK(r.p == 1.0);
  CHECK(r.degenerate);
}

TEST_CASE("delong label flip negates z and preserves p") {
  Rng rng(32);
  int n = 60;
  std::vector<double> a(n), b(n);
  std::vector<int> labels(n), flipped(n);
  for (int i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(rng.next_below(2));
    a[i] = (labels[i] ? 0.0 : 0.35) + rng.next_unit();
    b[i] = (labels[i] ? 0.0 : 0.15) + rng.next_unit();
  }
  labels[0] = 0;
  labels[1] = 1;
  for (int i = 0; i < n; ++i) flipped[i] = 1 - labels[i];

  DelongResult r1 = delong_test(a, b, labels);
  DelongResult r2 = delong_test(a, b, flipped);
  CHECK(r2.auroc_a == doctest::Approx(1.0 - r1.auroc_a).epsilon(1e-12));
  CHECK(r2.auroc_b == doctest::Approx(1.0 - r1.auroc_b).epsilon(1e-12));
  CHECK(r2.var_diff == doctest::Approx(r1.var_diff).epsilon(1e-9));
  CHECK(r2.z == doctest::Approx(-r1.z).epsilon(1e-9));
  CHECK(r2.p == doctest::Approx(r1.p).epsilon(1e-9));
}

TEST_CASE("delong separates a strong method from noise") {
  Rng rng(33);
  int n = 100;
  std::vector<double> strong(n), noise(n);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    labels[i] = i % 2;
    strong[i] = (labels[i] ? 0.0 : 0.8) + 0.2 * rng.next_unit();
    noise[i] = rng.next_unit();
  }

  DelongResult r = delong_test(strong, noise, labels);
  CHECK(r.auroc_a == 1.0);
  CHECK(r.auroc_b > 0.3);
  CHECK(r.auroc_b < 0.7);
  CHECK(r.z > 2.0);
  CHECK(r.p < 0.05);
  CHECK_FALSE(r.degenerate);

  std::vector<double> short_scores{0.1};
  CHECK_THROWS_AS(delong_test(short_scores, noise, labels), ContractViolation);
  CHECK_THROWS_AS(delong_test(strong, short_scores, labels), ContractViolation);
}

TEST_CASE("delong variance tracks a 10k-resample bootstrap") {
  int within = 0;
  const int instances = 5;
  for (int inst = 0; inst < instances; ++inst) {
    Rng rng(hash64(9100, inst));
    const int n = 100;
    std::vector<double> a(n), b(n);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(rng.next_below(2));
      a[i] = (labels[i] ? 0.0 : 0.30) + rng.next_unit();
      b[i] = (labels[i] ? 0.0 : 0.12) + rng.next_unit();
    }
    labels[0] = 0;
    labels[1] = 1;

    DelongResult d = delong_test(a, b, labels);

    Rng boot(hash64(9200, inst));
    std::vector<double> diffs;
    diffs.reserve(10000);
    std::vector<double> ra(n), rb(n);
    std::vector<int> rl(n);
    for (int r = 0; r < 10000; ++r) {
      int ones = 0;
      for (int i = 0; i < n; ++i) {
        int j = static_cast<int>(boot.next_below(n));
        ra[i] = a[j];
        rb[i] = b[j];
        rl[i] = labels[j];
        ones += labels[j];
      }
      if (ones == 0 || ones == n) continue;
      diffs.push_back(auroc(ra, rl) - auroc(rb, rl));
    }
    double boot_var = sample_variance(diffs);
    if (std::fabs(d.var_diff - boot_var) <= 0.15 * boot_var) ++within;
  }
  CHECK(within >= instances - 1);
}

TEST_CASE("auarc fixtures pin the curve convention") {
  std::vector<double> four{0.4, 0.3, 0.2, 0.1};
  std::vector<int> all_correct{1, 1, 1, 1};
  CHECK(auarc(four, all_correct) == 1.0);

  std::vector<double> one{0.4};
  std::vector<int> incorrect{0};
  CHECK(auarc(one, incorrect) == 0.5);

  std::vector<double> two{0.9, 0.1};
  std::vector<int> inc_then_cor{0, 1};
  CHECK(auarc(two, inc_then_cor) == 0.875);
  std::vector<double> two_rev{0.1, 0.9};
  CHECK(auarc(two_rev, inc_then_cor) == 0.375);

  // Equal uncertainties reject in index order, so label position matters.
  std::vector<double> flat{0.5, 0.5, 0.5};
  std::vector<int> lab_a{1, 0, 1};
  std::vector<int> lab_b{0, 1, 1};
  CHECK(auarc(flat, lab_a) == doctest::Approx(7.0 / 9.0).epsilon(1e-12));
  CHECK(auarc(flat, lab_b) == doctest::Approx(17.0 / 18.0).epsilon(1e-12));

  CHECK_THROWS_AS(auarc({}, {}), ContractViolation);
  std::vector<int> short_labels{1};
  CHECK_THROWS_AS(auarc(two, short_labels), ContractViolation);
}

TEST_CASE("perfect ordering dominates every label permutation") {
  for (int n = 2; n <= 8; ++n) {
    std::vector<double> scores(n);
    for (int i = 0; i < n; ++i) scores[i] = static_cast<double>(n - i);
    for (int k = 1; k < n; ++k) {
      std::vector<int> perfect(n, 1);
      for (int i = 0; i < k; ++i) perfect[i] = 0;
      double best = auarc(scores, perfect);

      std::vector<int> perm = perfect;
      double max_seen = -1.0;
      do {
        double v = auarc(scores, perm);
        CHECK(v <= best + 1e-12);
        max_seen = std::max(max_seen, v);
      } while (std::next_permutation(perm.begin(), perm.end()));
      CHECK(max_seen == doctest::Approx(best).epsilon(1e-12));
    }
  }
}

TEST_CASE("auarc rises when an incorrect item moves above all correct") {
  Rng rng(8800);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> scores;
    std::vector<int> labels;
    random_labeled_scores(rng, 40, (t % 2) == 0, scores, labels);

    double before = auarc(scores, labels);
    CHECK(before >= 0.0);
    CHECK(before <= 1.0 + 1e-12);

    size_t target = 0;
    while (labels[target] != 0) ++target;
    double top = *std::max_element(scores.begin(), scores.end());
    std::vector<double> raised = scores;
    raised[target] = top + 1.0;
    CHECK(auarc(raised, labels) >= before - 1e-12);
  }
}

TEST_CASE("query diversity fixtures") {
  std::vector<double> e1{1.0, 0.0, 0.0};
  std::vector<double> e2{0.0, 1.0, 0.0};
  std::vector<std::vector<double>> identical{e1, e1, e1};
  CHECK(query_diversity(identical) == 0.0);

  std::vector<std::vector<double>> orthogonal{e1, e2};
  CHECK(query_diversity(orthogonal) == 1.0);

  std::vector<double> anti{-1.0, 0.0, 0.0};
  std::vector<std::vector<double>> antipodal{e1, anti};
  CHECK(query_diversity(antipodal) == 2.0);

  CHECK_THROWS_AS(query_diversity({}), MetricError);
  std::vector<std::vector<double>> single{e1};
  CHECK_THROWS_AS(query_diversity(single), MetricError);
  std::vector<std::vector<double>> non_unit{{2.0, 0.0}, {1.0, 0.0}};
  CHECK_THROWS_AS(query_diversity(non_unit), ContractViolation);
}

TEST_CASE("query diversity matches the brute-force pairwise mean") {
  Rng rng(7700);
  for (int t = 0; t < 1000; ++t) {
    int n = rng.uniform_int(2, 12);
    int dim = rng.uniform_int(2, 16);
    std::vector<std::vector<double>> es;
    for (int i = 0; i < n; ++i) {
      std::vector<double> v(dim);
      double norm2 = 0.0;
      do {
        norm2 = 0.0;
        for (double& c : v) {
          c = rng.next_unit() * 2.0 - 1.0;
          norm2 += c * c;
        }
      } while (norm2 < 1e-2);
      double norm = std::sqrt(norm2);
      for (double& c : v) c /= norm;
      es.push_back(std::move(v));
    }

    double got = query_diversity(es);
    std::vector<double> sims;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        double dot = 0.0;
        for (int d = 0; d < dim; ++d) dot += es[i][d] * es[j][d];
        sims.push_back(dot);
      }
    double expected =
        1.0 - std::accumulate(sims.begin(), sims.end(), 0.0) / static_cast<double>(sims.size());
    CHECK(std::fabs(got - expected) <= 1e-9);
    CHECK(got >= -1e-12);
    CHECK(got <= 2.0 + 1e-12);
  }
}

TEST_CASE("unique docs unions doc ids across sampled paths") {
  CHECK(unique_docs({}) == 0);

  ReasoningPath no_docs = path_with_docs({{}});
  CHECK(unique_docs({no_docs}) == 0);

  ReasoningPath abc = path_with_docs({{"a", "b", "c"}});
  CHECK(unique_docs({abc, abc}) == 3);

  ReasoningPath bcd = path_with_docs({{"b", "c", "d"}});
  CHECK(unique_docs({abc, bcd}) == 4);

  // Duplicates within one path and across states collapse too.
  ReasoningPath multi = path_with_docs({{"a", "b"}, {"b", "e"}});
  ReasoningPath other = path_with_docs({{"c", "d"}});
  CHECK(unique_docs({multi, other}) == 5);
  CHECK(unique_docs({multi}) == 3);
}

TEST_CASE("hashed embedder is deterministic, unit-norm, bag-of-words") {
  HashedEmbedder emb;
  std::vector<std::string> texts{"hello world", "world HELLO!", "", "!!! ..."};
  auto vecs = emb.embed(texts);
  REQUIRE(vecs.size() == 4);
  for (const auto& v : vecs) {
    CHECK(v.size() == 256);
    double norm2 = 0.0;
    for (double c : v) norm2 += c * c;
    CHECK(std::sqrt(norm2) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(vecs[0] == vecs[1]);
  CHECK(vecs[2][0] == 1.0);
  CHECK(vecs[2] == vecs[3]);

  auto again = emb.embed(texts);
  CHECK(again == vecs);

  // Token multiplicity changes the direction.
  auto counted = emb.embed({"alpha alpha beta", "alpha beta"});
  CHECK(counted[0] != counted[1]);

  HashedEmbedder small(16);
  CHECK(small.embed({"alpha beta"})[0].size() == 16);

  // Non-negative coordinates keep diversity within [0, 1].
  auto qs = emb.embed({"capital of France", "France capital city", "weather in Tokyo"});
  double d = query_diversity(qs);
  CHECK(d >= 0.0);
  CHECK(d <= 1.0 + 1e-12);
}

TEST_CASE("mcnemar matches the exact binomial law") {
  std::vector<int> same{1, 0, 1, 1, 0};
  CHECK(mcnemar_p(same, same) == 1.0);

  std::vector<int> a10(10, 1), b10(10, 0);
  double p10 = mcnemar_p(a10, b10);
  CHECK(p10 == 0.001953125);
  CHECK(std::fabs(p10 - 0.001953125) < 1e-6);
  CHECK(mcnemar_p(b10, a10) == p10);

  std::vector<int> a2{1, 1}, b2{0, 0};
  CHECK(mcnemar_p(a2, b2) == 0.5);
  // Concordant pairs carry no signal.
  std::vector<int> a2pad{1, 1, 1, 0, 1}, b2pad{0, 0, 1, 0, 1};
  CHECK(mcnemar_p(a2pad, b2pad) == 0.5);

  // Balanced discordance clamps to 1.
  std::vector<int> bal_a{1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
  std::vector<int> bal_b{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  CHECK(mcnemar_p(bal_a, bal_b) == 1.0);

  std::vector<int> short_b{1};
  CHECK_THROWS_AS(mcnemar_p(a10, short_b), ContractViolation);
}

TEST_CASE("mcnemar chi-square branch approximates the binomial") {
  // 30 discordant pairs (20 vs 10) exceed the exact-branch cutoff.
  std::vector<int> a, b;
  for (int i = 0; i < 20; ++i) {
    a.push_back(1);
    b.push_back(0);
  }
  for (int i = 0; i < 10; ++i) {
    a.push_back(0);
    b.push_back(1);
  }
  for (int i = 0; i < 40; ++i) {
    a.push_back(1);
    b.push_back(1);
  }
  double p = mcnemar_p(a, b);
  CHECK(p == doctest::Approx(0.1003482).epsilon(1e-5));
  CHECK(std::fabs(p - 2.0 * binom_cdf_pascal(10, 30)) < 0.02);
}

TEST_CASE("binomial half cdf matches a pascal-triangle oracle") {
  for (int k = 0; k <= 20; ++k)
    CHECK(detail::binom_cdf_half(k, 20) ==
          doctest::Approx(binom_cdf_pascal(k, 20)).epsilon(1e-12));
  CHECK(detail::binom_cdf_half(10, 10) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(detail::binom_cdf_half(0, 10) == doctest::Approx(1.0 / 1024.0).epsilon(1e-12));
}

TEST_CASE("bootstrap p: extremes, determinism, index bounds") {
  CHECK_THROWS_AS(bootstrap_p(0, [](const std::vector<int>&) { return 0.0; }, 1),
                  ContractViolation);

  CHECK(bootstrap_p(5, [](const std::vector<int>&) { return 0.0; }, 1, 200) == 1.0);
  CHECK(bootstrap_p(5, [](const std::vector<int>&) { return 1.0; }, 1, 200) == 0.0);
  CHECK(bootstrap_p(5, [](const std::vector<int>&) { return -1.0; }, 1, 200) == 0.0);

  int calls = 0;
  bool bounds_ok = true;
  double p = bootstrap_p(
      7,
      [&](const std::vector<int>& idx) {
        ++calls;
        if (idx.size() != 7) bounds_ok = false;
        for (int i : idx)
          if (i < 0 || i >= 7) bounds_ok = false;
        return static_cast<double>(idx[0] % 2 == 0 ? 1 : -1);
      },
      99, 100);
  CHECK(calls == 100);
  CHECK(bounds_ok);
  CHECK(p >= 0.0);
  CHECK(p <= 1.0);

  auto stat = [](const std::vector<int>& idx) {
    double s = 0.0;
    for (int i : idx) s += (i % 3 == 0) ? 1.0 : -0.5;
    return s / static_cast<double>(idx.size());
  };
  CHECK(bootstrap_p(30, stat, 424242) == bootstrap_p(30, stat, 424242));
}

TEST_CASE("bootstrap p is stable across seeds") {
  Rng rng(42);
  const int n = 60;
  std::vector<int> a(n), b(n);
  for (int i = 0; i < n; ++i) {
    a[i] = rng.next_unit() < 0.65 ? 1 : 0;
    b[i] = rng.next_unit() < 0.50 ? 1 : 0;
  }
  auto diff = [&](const std::vector<int>& idx) {
    double da = 0.0, db = 0.0;
    for (int i : idx) {
      da += a[i];
      db += b[i];
    }
    return (da - db) / static_cast<double>(idx.size());
  };

  std::vector<double> ps;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) ps.push_back(bootstrap_p(n, diff, seed));
  double mean = std::accumulate(ps.begin(), ps.end(), 0.0) / static_cast<double>(ps.size());
  for (double p : ps) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    CHECK(std::fabs(p - mean) <= 0.02);
  }
  double spread = *std::max_element(ps.begin(), ps.end()) -
                  *std::min_element(ps.begin(), ps.end());
  CHECK(spread <= 0.04);
}

TEST_CASE("wilcoxon signed-rank fixtures") {
  std::vector<double> base{3.0, 1.0, 4.0, 1.5, 9.0};
  CHECK(wilcoxon_p(base, base) == 1.0);

  // Constant +1 shift over ten pairs: one tie group of all ranks.
  std::vector<double> ten(10), ten_up(10);
  for (int i = 0; i < 10; ++i) {
    ten[i] = static_cast<double>(i + 1);
    ten_up[i] = ten[i] + 1.0;
  }
  double p_shift = wilcoxon_p(ten_up, ten);
  double expected = 2.0 * (1.0 - normal_cdf(27.5 / std::sqrt(75.625)));
  CHECK(p_shift == doctest::Approx(expected).epsilon(1e-12));
  CHECK(p_shift == doctest::Approx(0.0015654).epsilon(1e-4));

  // Symmetric differences cancel exactly.
  std::vector<double> sym_a{1.0, 0.0, 2.0, 0.0}, sym_b{0.0, 1.0, 0.0, 2.0};
  CHECK(wilcoxon_p(sym_a, sym_b) == 1.0);

  // Single nonzero pair: z = 1.
  std::vector<double> one_a{2.0}, one_b{1.0};
  CHECK(wilcoxon_p(one_a, one_b) == doctest::Approx(0.3173105).epsilon(1e-5));

  std::vector<double> short_b{1.0};
  CHECK_THROWS_AS(wilcoxon_p(base, short_b), ContractViolation);
}

TEST_CASE("wilcoxon drops zero differences and is symmetric in its arguments") {
  Rng rng(4242);
  int n = 15;
  std::vector<double> a(n), b(n);
  for (int i = 0; i < n; ++i) {
    a[i] = rng.next_unit();
    b[i] = rng.next_unit();
  }
  CHECK(wilcoxon_p(a, b) == wilcoxon_p(b, a));

  // Appending equal pairs leaves the statistic untouched.
  std::vector<double> a_pad = a, b_pad = b;
  for (int i = 0; i < 4; ++i) {
    a_pad.push_back(0.25 * i);
    b_pad.push_back(0.25 * i);
  }
  CHECK(wilcoxon_p(a_pad, b_pad) == wilcoxon_p(a, b));
}

TEST_CASE("normal cdf endpoints") {
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(normal_cdf(1.959963985) == doctest::Approx(0.975).epsilon(1e-6));
  for (double x : {0.3, 1.0, 2.5}) {
    CHECK(normal_cdf(x) + normal_cdf(-x) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(normal_cdf(x) > 0.5);
  }
}

}  // TEST_SUITE
