#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "rarc/core.hpp"
#include "rarc/text.hpp"

namespace rarc {

inline constexpr double kBm25K1 = 1.2;
inline constexpr double kBm25B = 0.75;

struct CorpusIndex {
  std::vector<Document> docs;  // insertion order
  std::unordered_map<std::string, int> ordinal_by_id;
  // term -> (doc ordinal, term frequency), ordinals ascending
  std::unordered_map<std::string, std::vector<std::pair<int, int>>> postings;
  std::vector<int> doc_lengths;
  double avg_doc_len = 0.0;

  int doc_count() const { return static_cast<int>(docs.size()); }

  const Document& doc(const std::string& doc_id) const {
    auto it = ordinal_by_id.find(doc_id);
    if (it == ordinal_by_id.end()) throw LookupError("unknown doc_id: " + doc_id);
    return docs[it->second];
  }
};

inline CorpusIndex build_index(const std::vector<Document>& corpus) {
  if (corpus.empty()) throw IngestionError("cannot index an empty corpus");
  CorpusIndex idx;
  idx.docs.reserve(corpus.size());
  std::int64_t total_len = 0;
  for (const Document& d : corpus) {
    if (d.text.empty()) throw IngestionError("document " + d.doc_id + " has empty text");
    if (idx.ordinal_by_id.count(d.doc_id))
      throw IngestionError("duplicate doc_id: " + d.doc_id);
    int ord = static_cast<int>(idx.docs.size());
    idx.ordinal_by_id.emplace(d.doc_id, ord);
    idx.docs.push_back(d);
    std::unordered_map<std::string, int> tf;
    auto toks = tokenize(d.text);
    for (const std::string& t : toks) ++tf[t];
    // Insert in first-occurrence order so rebuilds are identical.
    std::unordered_map<std::string, bool> seen;
    for (const std::string& t : toks) {
      if (seen[t]) continue;
      seen[t] = true;
      idx.postings[t].emplace_back(ord, tf[t]);
    }
    idx.doc_lengths.push_back(static_cast<int>(toks.size()));
    total_len += static_cast<std::int64_t>(toks.size());
  }
  idx.avg_doc_len = static_cast<double>(total_len) / static_cast<double>(idx.docs.size());
  return idx;
}

// Smoothed idf; reduces to ln 2 for the single-document corpus.
inline double bm25_idf(const CorpusIndex& idx, int df) {
  double n = static_cast<double>(idx.doc_count());
  return std::log(1.0 + (n - df + 1.5) / (df + 0.5));
}

inline double bm25_term_contribution(const CorpusIndex& idx, int df, int tf, int doc_len) {
  double norm = 1.0 - kBm25B + kBm25B * (static_cast<double>(doc_len) / idx.avg_doc_len);
  double tf_part = (tf * (kBm25K1 + 1.0)) / (tf + kBm25K1 * norm);
  return bm25_idf(idx, df) * tf_part;
}

inline double bm25_score(const CorpusIndex& idx, const std::vector<std::string>& query_terms,
                         const std::string& doc_id) {
  auto it = idx.ordinal_by_id.find(doc_id);
  if (it == idx.ordinal_by_id.end()) throw LookupError("unknown doc_id: " + doc_id);
  int ord = it->second;
  double score = 0.0;
  for (const std::string& term : query_terms) {
    auto pit = idx.postings.find(term);
    if (pit == idx.postings.end()) continue;
    const auto& plist = pit->second;
    auto dit = std::lower_bound(plist.begin(), plist.end(), ord,
                                [](const std::pair<int, int>& e, int o) { return e.first < o; });
    if (dit == plist.end() || dit->first != ord) continue;
    score += bm25_term_contribution(idx, static_cast<int>(plist.size()), dit->second,
                                    idx.doc_lengths[ord]);
  }
  return score;
}

// Top-k by BM25 descending, ties by ascending doc_id; only positive scores.
inline std::vector<Document> retrieve(const CorpusIndex& idx, const std::string& query,
                                      int k = 3) {
  if (k < 1) throw ContractViolation("retrieve: k must be >= 1");
  auto terms = tokenize(query);
  // Per-candidate accumulation happens in query-term order, matching the
  // addition order of bm25_score so both routes agree bitwise.
  std::unordered_map<int, double> acc;
  for (const std::string& term : terms) {
    auto pit = idx.postings.find(term);
    if (pit == idx.postings.end()) continue;
    int df = static_cast<int>(pit->second.size());
    for (const auto& [ord, tf] : pit->second)
      acc[ord] += bm25_term_contribution(idx, df, tf, idx.doc_lengths[ord]);
  }
  std::vector<std::pair<int, double>> ranked;
  ranked.reserve(acc.size());
  for (const auto& [ord, s] : acc)
    if (s > 0.0) ranked.emplace_back(ord, s);
  std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return idx.docs[a.first].doc_id < idx.docs[b.first].doc_id;
  });
  if (static_cast<int>(ranked.size()) > k) ranked.resize(k);
  std::vector<Document> out;
  out.reserve(ranked.size());
  for (const auto& [ord, s] : ranked) {
    Document d = idx.docs[ord];
    d.score = s;
    out.push_back(std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reranking

class ScoreClient {
 public:
  virtual ~ScoreClient() = default;
  // Relevance score per passage, in passage order.
  virtual std::vector<double> score(const std::string& query,
                                    const std::vector<std::string>& passages) = 0;
};

class ScriptedScoreClient : public ScoreClient {
 public:
  explicit ScriptedScoreClient(
      std::function<std::vector<double>(const std::string&, const std::vector<std::string>&)> fn)
      : fn_(std::move(fn)) {}
  std::vector<double> score(const std::string& query,
                            const std::vector<std::string>& passages) override {
    return fn_(query, passages);
  }

 private:
  std::function<std::vector<double>(const std::string&, const std::vector<std::string>&)> fn_;
};

inline std::string rerank_passage(const Document& d) {
  return d.title.empty() ? d.text : d.title + "\n" + d.text;
}

// Reorder docs by client score descending, ties keep the incoming order.
// Any client failure degrades to the input order.
inline std::vector<Document> rerank(ScoreClient& client, const std::string& query,
                                    std::vector<Document> docs, bool* degraded = nullptr) {
  if (degraded) *degraded = false;
  if (docs.empty()) throw ContractViolation("rerank: docs must be non-empty");
  std::vector<std::string> passages;
  passages.reserve(docs.size());
  for (const Document& d : docs) passages.push_back(rerank_passage(d));
  std::vector<double> scores;
  try {
    scores = client.score(query, passages);
    if (scores.size() != docs.size())
      throw ProtocolError("rerank: score count != passage count");
  } catch (const std::exception&) {
    if (degraded) *degraded = true;
    return docs;
  }
  std::vector<int> order(docs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  std::vector<Document> out;
  out.reserve(docs.size());
  for (int i : order) {
    Document d = std::move(docs[i]);
    d.score = scores[i];
    out.push_back(std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Retriever interface used by the engine

class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual std::vector<Document> retrieve_docs(const std::string& query, int k) = 0;
};

class Bm25Retriever : public Retriever {
 public:
  explicit Bm25Retriever(const CorpusIndex& idx, ScoreClient* reranker = nullptr,
                         int rerank_pool = 20)
      : idx_(idx), reranker_(reranker), rerank_pool_(rerank_pool) {}

  std::vector<Document> retrieve_docs(const std::string& query, int k) override {
    if (!reranker_) return retrieve(idx_, query, k);
    int pool = std::max(rerank_pool_, k);
    std::vector<Document> docs = retrieve(idx_, query, pool);
    if (docs.empty()) return docs;
    bool degraded = false;
    docs = rerank(*reranker_, query, std::move(docs), &degraded);
    if (degraded) rerank_degraded_.store(true, std::memory_order_relaxed);
    if (static_cast<int>(docs.size()) > k) docs.resize(k);
    return docs;
  }

  bool rerank_degraded() const { return rerank_degraded_.load(std::memory_order_relaxed); }

 private:
  const CorpusIndex& idx_;
  ScoreClient* reranker_;
  int rerank_pool_;
  std::atomic<bool> rerank_degraded_{false};
};

// Fixed responses per query string, empty otherwise.
class ScriptedRetriever : public Retriever {
 public:
  void script(std::string query, std::vector<Document> docs) {
    by_query_[std::move(query)] = std::move(docs);
  }
  std::vector<Document> retrieve_docs(const std::string& query, int k) override {
    auto it = by_query_.find(query);
    if (it == by_query_.end()) return {};
    std::vector<Document> docs = it->second;
    if (static_cast<int>(docs.size()) > k) docs.resize(k);
    return docs;
  }

 private:
  std::map<std::string, std::vector<Document>> by_query_;
};

// Counts invocations; used to audit retrieval counts in tests.
class CountingRetriever : public Retriever {
 public:
  explicit CountingRetriever(Retriever& inner) : inner_(inner) {}
  std::vector<Document> retrieve_docs(const std::string& query, int k) override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_.retrieve_docs(query, k);
  }
  int calls() const { return calls_.load(std::memory_order_relaxed); }

 private:
  Retriever& inner_;
  std::atomic<int> calls_{0};
};

// ---------------------------------------------------------------------------
// Corpus and snapshot files

inline std::vector<Document> load_corpus_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open corpus file: " + path);
  std::vector<Document> docs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IngestionError(path + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
    }
    Document d;
    if (!j.contains("id"))
      throw IngestionError(path + ":" + std::to_string(lineno) + ": missing \"id\"");
    d.doc_id = j["id"].get<std::string>();
    d.title = j.value("title", std::string{});
    d.text = j.value("text", std::string{});
    docs.push_back(std::move(d));
  }
  return docs;
}

inline void save_corpus_jsonl(const std::string& path, const std::vector<Document>& docs) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write corpus file: " + path);
  for (const Document& d : docs) {
    json j{{"id", d.doc_id}, {"title", d.title}, {"text", d.text}};
    out << j.dump() << "\n";
  }
}

// The snapshot stores the documents; loading rebuilds the index, which is
// deterministic, so the reconstruction is exact.
inline void save_index_snapshot(const std::string& path, const CorpusIndex& idx) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write index snapshot: " + path);
  json j{{"format", "rarc-index"},
         {"version", 1},
         {"doc_count", idx.doc_count()},
         {"avg_doc_len", idx.avg_doc_len},
         {"docs", idx.docs}};
  out << j.dump(2) << "\n";
}

inline CorpusIndex load_index_snapshot(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open index snapshot: " + path);
  json j = json::parse(in);
  if (j.value("format", std::string{}) != "rarc-index")
    throw IngestionError("not an index snapshot: " + path);
  auto docs = j.at("docs").get<std::vector<Document>>();
  return build_index(docs);
}

}  // namespace rarc
