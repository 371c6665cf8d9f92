#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "rarc/core.hpp"
#include "rarc/random.hpp"
#include "rarc/text.hpp"

namespace rarc {

// ---------------------------------------------------------------------------
// Correctness

inline int exact_match(const std::string& prediction, const std::vector<std::string>& golds) {
  if (golds.empty()) throw ContractViolation("exact_match: golds empty");
  std::string p = normalize_answer(prediction);
  for (const std::string& g : golds)
    if (p == normalize_answer(g)) return 1;
  return 0;
}

// ---------------------------------------------------------------------------
// AUROC (Mann-Whitney; higher uncertainty should indicate incorrect)

// Numerator (wins + half-ties) and pair count; shared with the DeLong AUROCs
// so every route divides the same exact quantities. All intermediate values
// are multiples of 0.5 well below 2^52, so the arithmetic is exact and the
// sort-based result equals pairwise counting bitwise.
inline double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ContractViolation("auroc: length mismatch");
  std::int64_t n_incorrect = 0, n_correct = 0;
  for (int l : labels) (l ? n_correct : n_incorrect)++;
  if (n_incorrect == 0 || n_correct == 0)
    throw MetricError("auroc undefined: only one class present");

  std::vector<int> order(scores.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[a] < scores[b]; });

  double wins = 0.0;  // over (incorrect, correct) pairs: 1 if U_inc > U_cor, 0.5 ties
  std::int64_t correct_below = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    std::int64_t tie_correct = 0, tie_incorrect = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? tie_correct : tie_incorrect)++;
      ++j;
    }
    wins += static_cast<double>(tie_incorrect) * static_cast<double>(correct_below) +
            0.5 * static_cast<double>(tie_incorrect) * static_cast<double>(tie_correct);
    correct_below += tie_correct;
    i = j;
  }
  return wins / (static_cast<double>(n_incorrect) * static_cast<double>(n_correct));
}

// ---------------------------------------------------------------------------
// Paired DeLong test

struct DelongResult {
  double auroc_a = 0.0;
  double auroc_b = 0.0;
  double var_diff = 0.0;  // estimated variance of auroc_a - auroc_b
  double z = 0.0;
  double p = 1.0;
  bool degenerate = false;  // zero variance of the difference
};

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

namespace detail {

inline double mw_kernel(double x, double y) {
  if (x > y) return 1.0;
  if (x < y) return 0.0;
  return 0.5;
}

// Placement values: V10 over incorrect items, V01 over correct items.
inline void placements(const std::vector<double>& scores, const std::vector<int>& labels,
                       std::vector<double>& v10, std::vector<double>& v01) {
  std::vector<double> xs, ys;  // x: incorrect (expected higher), y: correct
  for (size_t i = 0; i < scores.size(); ++i)
    (labels[i] ? ys : xs).push_back(scores[i]);
  v10.assign(xs.size(), 0.0);
  v01.assign(ys.size(), 0.0);
  for (size_t i = 0; i < xs.size(); ++i) {
    double s = 0.0;
    for (size_t j = 0; j < ys.size(); ++j) s += mw_kernel(xs[i], ys[j]);
    v10[i] = s / static_cast<double>(ys.size());
  }
  for (size_t j = 0; j < ys.size(); ++j) {
    double s = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) s += mw_kernel(xs[i], ys[j]);
    v01[j] = s / static_cast<double>(xs.size());
  }
}

inline double sample_cov(const std::vector<double>& a, const std::vector<double>& b) {
  size_t n = a.size();
  if (n < 2) return 0.0;
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / static_cast<double>(n - 1);
}

}  // namespace detail

inline DelongResult delong_test(const std::vector<double>& scores_a,
                                const std::vector<double>& scores_b,
                                const std::vector<int>& labels) {
  if (scores_a.size() != labels.size() || scores_b.size() != labels.size())
    throw ContractViolation("delong_test: length mismatch");
  DelongResult out;
  out.auroc_a = auroc(scores_a, labels);
  out.auroc_b = auroc(scores_b, labels);

  std::vector<double> v10a, v01a, v10b, v01b;
  detail::placements(scores_a, labels, v10a, v01a);
  detail::placements(scores_b, labels, v10b, v01b);
  double m = static_cast<double>(v10a.size());
  double n = static_cast<double>(v01a.size());
  double var = (detail::sample_cov(v10a, v10a) + detail::sample_cov(v10b, v10b) -
                2.0 * detail::sample_cov(v10a, v10b)) / m +
               (detail::sample_cov(v01a, v01a) + detail::sample_cov(v01b, v01b) -
                2.0 * detail::sample_cov(v01a, v01b)) / n;
  out.var_diff = std::max(var, 0.0);
  if (var <= 0.0) {
    out.degenerate = true;
    out.z = 0.0;
    out.p = 1.0;
    return out;
  }
  out.z = (out.auroc_a - out.auroc_b) / std::sqrt(var);
  out.p = 2.0 * (1.0 - normal_cdf(std::fabs(out.z)));
  return out;
}

// ---------------------------------------------------------------------------
// Accuracy-rejection curve

// Rejection proceeds by uncertainty descending (ties by original index) and
// the empty-retention endpoint is pinned to accuracy 1.
inline double auarc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.empty() || scores.size() != labels.size())
    throw ContractViolation("auarc: bad input");
  size_t n = scores.size();
  std::vector<int> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  std::int64_t total_correct = 0;
  for (int l : labels) total_correct += l;

  auto accuracy_at = [&](size_t rejected, std::int64_t correct_rejected) {
    if (rejected == n) return 1.0;
    return static_cast<double>(total_correct - correct_rejected) /
           static_cast<double>(n - rejected);
  };

  double area = 0.0;
  std::int64_t correct_rejected = 0;
  double prev = accuracy_at(0, 0);
  for (size_t j = 1; j <= n; ++j) {
    correct_rejected += labels[order[j - 1]];
    double cur = accuracy_at(j, correct_rejected);
    area += (prev + cur) / 2.0 / static_cast<double>(n);
    prev = cur;
  }
  return area;
}

// ---------------------------------------------------------------------------
// Query diversity

inline double query_diversity(const std::vector<std::vector<double>>& embeddings) {
  size_t n = embeddings.size();
  if (n < 2) throw MetricError("query_diversity undefined for fewer than 2 queries");
  for (const auto& e : embeddings) {
    double norm2 = 0.0;
    for (double v : e) norm2 += v * v;
    if (std::fabs(std::sqrt(norm2) - 1.0) > 1e-6)
      throw ContractViolation("query_diversity: non-unit vector");
  }
  double sim_sum = 0.0;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      double dot = 0.0;
      size_t dim = std::min(embeddings[i].size(), embeddings[j].size());
      for (size_t d = 0; d < dim; ++d) dot += embeddings[i][d] * embeddings[j][d];
      sim_sum += dot;
    }
  double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  return 1.0 - sim_sum / pairs;
}

// Distinct documents touched across the sampled paths (most-likely excluded
// by the caller passing samples only).
inline int unique_docs(const std::vector<ReasoningPath>& samples) {
  std::set<std::string> ids;
  for (const ReasoningPath& p : samples)
    for (const ReasoningState& s : p.states)
      if (s.is_search())
        for (const Document& d : s.search().docs) ids.insert(d.doc_id);
  return static_cast<int>(ids.size());
}

// ---------------------------------------------------------------------------
// Embeddings

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
};

// Hashed bag-of-words, L2-normalized; deterministic and dependency-free.
// A text with no tokens maps to the first basis vector.
class HashedEmbedder : public Embedder {
 public:
  explicit HashedEmbedder(int dim = 256) : dim_(dim) {}

  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const std::string& text : texts) {
      std::vector<double> v(dim_, 0.0);
      auto toks = tokenize(text);
      if (toks.empty()) {
        v[0] = 1.0;
      } else {
        for (const std::string& t : toks)
          v[hash64(t) % static_cast<std::uint64_t>(dim_)] += 1.0;
        double norm = 0.0;
        for (double c : v) norm += c * c;
        norm = std::sqrt(norm);
        for (double& c : v) c /= norm;
      }
      out.push_back(std::move(v));
    }
    return out;
  }

 private:
  int dim_;
};

// ---------------------------------------------------------------------------
// Paired significance tests

namespace detail {

inline double binom_cdf_half(int k, int n) {
  // P(X <= k) for X ~ Binomial(n, 1/2), exact in double for n <= ~50.
  double total = 0.0;
  double coeff = 1.0;  // C(n, 0)
  for (int i = 0; i <= k; ++i) {
    total += coeff;
    coeff = coeff * static_cast<double>(n - i) / static_cast<double>(i + 1);
  }
  return total * std::pow(0.5, n);
}

}  // namespace detail

// Paired 0/1 outcomes; exact binomial for few discordant pairs, chi-square
// with continuity correction otherwise.
inline double mcnemar_p(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw ContractViolation("mcnemar: length mismatch");
  int c01 = 0, c10 = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 1 && b[i] == 0) ++c01;
    if (a[i] == 0 && b[i] == 1) ++c10;
  }
  int nd = c01 + c10;
  if (nd == 0) return 1.0;
  if (nd < 25) {
    int k = std::min(c01, c10);
    double p = 2.0 * detail::binom_cdf_half(k, nd);
    return std::min(p, 1.0);
  }
  double x = std::pow(std::fabs(static_cast<double>(c01 - c10)) - 1.0, 2.0) /
             static_cast<double>(nd);
  // Chi-square with 1 dof survival function.
  return std::erfc(std::sqrt(x / 2.0));
}

// Percentile bootstrap on a paired statistic difference. diff_fn receives the
// resampled indices and returns statistic(a) - statistic(b) on that resample.
inline double bootstrap_p(int n, const std::function<double(const std::vector<int>&)>& diff_fn,
                          std::uint64_t seed, int resamples = 10000) {
  if (n < 1) throw ContractViolation("bootstrap_p: empty sample");
  Rng rng(seed);
  int le = 0, ge = 0;
  std::vector<int> idx(n);
  for (int r = 0; r < resamples; ++r) {
    for (int i = 0; i < n; ++i)
      idx[i] = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
    double d = diff_fn(idx);
    if (d <= 0.0) ++le;
    if (d >= 0.0) ++ge;
  }
  double p = 2.0 * std::min(static_cast<double>(le), static_cast<double>(ge)) /
             static_cast<double>(resamples);
  return std::min(p, 1.0);
}

// Signed-rank with the normal approximation; zero differences dropped,
// average ranks for ties, tie-corrected variance.
inline double wilcoxon_p(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ContractViolation("wilcoxon: length mismatch");
  std::vector<double> diffs;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  size_t n = diffs.size();
  if (n == 0) return 1.0;
  std::vector<int> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return std::fabs(diffs[i]) < std::fabs(diffs[j]); });
  std::vector<double> ranks(n, 0.0);
  double tie_correction = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && std::fabs(diffs[order[j]]) == std::fabs(diffs[order[i]])) ++j;
    double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (size_t k = i; k < j; ++k) ranks[order[k]] = avg_rank;
    double t = static_cast<double>(j - i);
    tie_correction += (t * t * t - t);
    i = j;
  }
  double w_plus = 0.0;
  for (size_t k = 0; k < n; ++k)
    if (diffs[k] > 0.0) w_plus += ranks[k];
  double nn = static_cast<double>(n);
  double mean = nn * (nn + 1.0) / 4.0;
  double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_correction / 48.0;
  if (var <= 0.0) return 1.0;
  double z = (w_plus - mean) / std::sqrt(var);
  return 2.0 * (1.0 - normal_cdf(std::fabs(z)));
}

}  // namespace rarc
