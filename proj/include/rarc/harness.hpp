#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rarc/core.hpp"
#include "rarc/downstream.hpp"
#include "rarc/engine.hpp"
#include "rarc/estimators.hpp"
#include "rarc/http.hpp"
#include "rarc/metrics.hpp"
#include "rarc/parallel.hpp"
#include "rarc/perturb.hpp"
#include "rarc/retrieval.hpp"
#include "rarc/synthworld.hpp"

namespace rarc {

inline constexpr const char* kEngineVersion = "rarc 1.0.0";

// ---------------------------------------------------------------------------
// Configuration

// Flat dotted-key map resolved from defaults, a sectioned config file, and
// command-line overrides, in that order. Every key is validated against the
// known set so typos fail loudly with the field name.
class ConfigMap {
 public:
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError(key + ": missing");
    return it->second;
  }

  std::string get_string(const std::string& key) const { return get(key); }

  int get_int(const std::string& key) const {
    const std::string& v = get(key);
    try {
      size_t used = 0;
      int out = std::stoi(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected integer, got '" + v + "'");
    }
  }

  double get_double(const std::string& key) const {
    const std::string& v = get(key);
    try {
      size_t used = 0;
      double out = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected number, got '" + v + "'");
    }
  }

  std::uint64_t get_u64(const std::string& key) const {
    const std::string& v = get(key);
    try {
      size_t used = 0;
      std::uint64_t out = std::stoull(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected unsigned integer, got '" + v + "'");
    }
  }

  bool get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": expected boolean, got '" + v + "'");
  }

  const std::map<std::string, std::string>& items() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

inline const std::map<std::string, std::string>& config_defaults() {
  static const std::map<std::string, std::string> defaults = {
      {"backend.kind", "synthetic"},
      {"backend.world", ""},
      {"backend.url", ""},
      {"backend.model", ""},
      {"backend.auth_env", ""},
      {"backend.timeout_s", "120"},
      {"retrieval.corpus", ""},
      {"retrieval.rerank_url", ""},
      {"retrieval.rerank_pool", "20"},
      {"engine.k_docs", "3"},
      {"engine.max_steps", "10"},
      {"engine.max_tokens", "512"},
      {"engine.most_likely_temperature", "0.7"},
      {"estimators.samples", "10"},
      {"estimators.sample_temperature", "1.0"},
      {"estimators.equivalence", "normalized-exact"},
      {"estimators.ptrue_include_samples", "true"},
      {"downstream.abstain_metric", "abstain_f1"},
      {"downstream.aggregation", "sum"},
      {"downstream.clustering", "true"},
      {"run.dataset", ""},
      {"run.methods", "R2C,SelfC,ReaC,RrrC,PTrue"},
      {"run.master_seed", "1"},
      {"run.workers", "4"},
      {"run.out", ""},
      {"run.id", ""},
  };
  return defaults;
}

// Sectioned key = value text; '#' and ';' start comments, blank lines skipped.
inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::map<std::string, std::string> out;
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty())
        throw ConfigError(path + ":" + std::to_string(line_no) + ": empty section name");
      continue;
    }
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key");
    out[section.empty() ? key : section + "." + key] = value;
  }
  return out;
}

inline ConfigMap resolve_config(const std::map<std::string, std::string>& file_values,
                                const std::map<std::string, std::string>& overrides = {}) {
  ConfigMap cfg;
  const auto& defaults = config_defaults();
  for (const auto& [k, v] : defaults) cfg.set(k, v);
  for (const auto& [k, v] : file_values) {
    if (!defaults.count(k)) throw ConfigError("unknown config key: " + k);
    cfg.set(k, v);
  }
  for (const auto& [k, v] : overrides) {
    if (!defaults.count(k)) throw ConfigError("unknown config key: " + k);
    cfg.set(k, v);
  }
  return cfg;
}

inline std::string config_digest(const ConfigMap& cfg) {
  SeedMixer mix;
  for (const auto& [k, v] : cfg.items()) {
    mix.add(k);
    mix.add(v);
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(mix.finish()));
  return buf;
}

// ---------------------------------------------------------------------------
// Dataset ingestion

inline std::vector<QAItem> load_dataset_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open dataset: " + path);
  std::vector<QAItem> items;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IngestionError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    QAItem x;
    if (!j.contains("id") || !j.contains("question"))
      throw IngestionError(path + ":" + std::to_string(line_no) +
                           ": dataset rows need id and question");
    x.id = j.at("id").get<std::string>();
    x.question = j.at("question").get<std::string>();
    if (j.contains("golds"))
      x.gold_answers = j.at("golds").get<std::vector<std::string>>();
    else if (j.contains("gold_answers"))
      x.gold_answers = j.at("gold_answers").get<std::vector<std::string>>();
    validate(x);
    if (!seen.insert(x.id).second)
      throw IngestionError(path + ":" + std::to_string(line_no) + ": duplicate id " + x.id);
    items.push_back(std::move(x));
  }
  if (items.empty()) throw IngestionError("dataset is empty: " + path);
  return items;
}

inline void save_dataset_jsonl(const std::string& path, const std::vector<QAItem>& items) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write dataset: " + path);
  for (const QAItem& x : items) {
    json j{{"id", x.id}, {"question", x.question}, {"golds", x.gold_answers}};
    out << j.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// Run directory plumbing

inline std::string iso_utc_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunOutcome {
  std::string run_dir;
  int completed = 0;
  int skipped = 0;
  int failures = 0;
};

// One results.jsonl row plus everything a report needs; paths live in
// generations.jsonl to keep the results file light.
struct RunRecord {
  std::string query_id;
  std::string method;
  std::optional<std::string> answer;
  std::vector<std::string> golds;
  int correct = 0;
  bool most_likely_terminal = false;
  double consistency = 0.0;
  double uncertainty = 0.0;
  std::vector<int> match_flags;
  std::vector<std::string> flags;
  int most_likely_tokens = 0;
  std::vector<int> sample_token_counts;
  int n_unique_docs = 0;
  std::optional<double> query_diversity;
};

inline json record_to_json(const RunRecord& r) {
  json j;
  j["query_id"] = r.query_id;
  j["method"] = r.method;
  if (r.answer)
    j["answer"] = *r.answer;
  else
    j["answer"] = nullptr;
  j["golds"] = r.golds;
  j["correct"] = r.correct;
  j["most_likely_terminal"] = r.most_likely_terminal;
  j["consistency"] = r.consistency;
  j["uncertainty"] = r.uncertainty;
  j["match_flags"] = r.match_flags;
  j["flags"] = r.flags;
  j["most_likely_tokens"] = r.most_likely_tokens;
  j["sample_token_counts"] = r.sample_token_counts;
  j["n_unique_docs"] = r.n_unique_docs;
  if (r.query_diversity)
    j["query_diversity"] = *r.query_diversity;
  else
    j["query_diversity"] = nullptr;
  return j;
}

inline RunRecord record_from_json(const json& j) {
  RunRecord r;
  r.query_id = j.at("query_id").get<std::string>();
  r.method = j.at("method").get<std::string>();
  if (!j.at("answer").is_null()) r.answer = j.at("answer").get<std::string>();
  r.golds = j.at("golds").get<std::vector<std::string>>();
  r.correct = j.at("correct").get<int>();
  r.most_likely_terminal = j.at("most_likely_terminal").get<bool>();
  r.consistency = j.at("consistency").get<double>();
  r.uncertainty = j.at("uncertainty").get<double>();
  r.match_flags = j.at("match_flags").get<std::vector<int>>();
  r.flags = j.at("flags").get<std::vector<std::string>>();
  r.most_likely_tokens = j.at("most_likely_tokens").get<int>();
  r.sample_token_counts = j.at("sample_token_counts").get<std::vector<int>>();
  r.n_unique_docs = j.at("n_unique_docs").get<int>();
  if (!j.at("query_diversity").is_null())
    r.query_diversity = j.at("query_diversity").get<double>();
  return r;
}

inline std::vector<RunRecord> load_run_records(const std::string& run_dir) {
  std::string path = run_dir + "/results.jsonl";
  std::ifstream in(path);
  if (!in) throw IngestionError("no results: cannot open " + path);
  std::vector<RunRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw IngestionError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (out.empty()) throw IngestionError("no results in " + path);
  return out;
}

inline json load_manifest(const std::string& run_dir) {
  std::ifstream in(run_dir + "/manifest.json");
  if (!in) throw IngestionError("no manifest in " + run_dir);
  return json::parse(in);
}

// ---------------------------------------------------------------------------
// Run orchestration

namespace detail {

struct RunComponents {
  std::vector<QAItem> dataset;
  CorpusIndex index;
  std::unique_ptr<AgentBackend> backend;
  std::unique_ptr<HttpScoreClient> reranker;
  std::unique_ptr<Bm25Retriever> retriever;
  std::unique_ptr<RarEngine> engine;
  std::unique_ptr<PerturbContext> perturb;
  std::unique_ptr<EstimatorContext> estimator_ctx;
  PromptSet prompts = default_prompts();
  EstimatorConfig est_cfg;
  std::vector<Method> methods;
};

inline std::vector<Method> parse_methods(const std::string& csv) {
  std::vector<Method> out;
  for (const std::string& part : split(csv, ',')) {
    std::string name = trim(part);
    if (name.empty()) continue;
    try {
      out.push_back(method_from_string(name));
    } catch (const ConfigError&) {
      throw ConfigError("run.methods: unknown method '" + name + "'");
    }
  }
  if (out.empty()) throw ConfigError("run.methods: no methods given");
  std::set<std::string> seen;
  for (Method m : out)
    if (!seen.insert(to_string(m)).second)
      throw ConfigError("run.methods: duplicate method " + to_string(m));
  return out;
}

inline std::unique_ptr<RunComponents> build_components(const ConfigMap& cfg) {
  auto rc = std::make_unique<RunComponents>();
  rc->methods = parse_methods(cfg.get_string("run.methods"));

  std::string dataset_path = cfg.get_string("run.dataset");
  if (dataset_path.empty()) throw ConfigError("run.dataset: missing");
  rc->dataset = load_dataset_jsonl(dataset_path);

  std::string kind = cfg.get_string("backend.kind");
  std::vector<Document> corpus;
  std::string corpus_path = cfg.get_string("retrieval.corpus");
  if (kind == "synthetic") {
    std::string world_path = cfg.get_string("backend.world");
    if (world_path.empty()) throw ConfigError("backend.world: required for synthetic backend");
    World world = build_world(load_world_spec(world_path));
    rc->backend = std::make_unique<SyntheticAgent>(world);
    if (corpus_path.empty())
      corpus = world.corpus;
    else if (corpus_path.size() > 6 && corpus_path.substr(corpus_path.size() - 6) == ".jsonl")
      corpus = load_corpus_jsonl(corpus_path);
    else
      rc->index = load_index_snapshot(corpus_path);
  } else if (kind == "http") {
    HttpChatBackend::Config bc;
    bc.url = cfg.get_string("backend.url");
    bc.model = cfg.get_string("backend.model");
    bc.auth_env = cfg.get_string("backend.auth_env");
    bc.timeout_s = cfg.get_int("backend.timeout_s");
    if (bc.url.empty()) throw ConfigError("backend.url: required for http backend");
    rc->backend = std::make_unique<HttpChatBackend>(bc);
    if (corpus_path.empty()) throw ConfigError("retrieval.corpus: missing");
    if (corpus_path.size() > 6 && corpus_path.substr(corpus_path.size() - 6) == ".jsonl")
      corpus = load_corpus_jsonl(corpus_path);
    else
      rc->index = load_index_snapshot(corpus_path);
  } else {
    throw ConfigError("backend.kind: expected synthetic or http, got '" + kind + "'");
  }
  if (!corpus.empty()) rc->index = build_index(corpus);

  std::string rerank_url = cfg.get_string("retrieval.rerank_url");
  if (!rerank_url.empty()) rc->reranker = std::make_unique<HttpScoreClient>(rerank_url);
  rc->retriever = std::make_unique<Bm25Retriever>(rc->index, rc->reranker.get(),
                                                  cfg.get_int("retrieval.rerank_pool"));

  EngineConfig ec;
  ec.k_docs = cfg.get_int("engine.k_docs");
  ec.max_steps = cfg.get_int("engine.max_steps");
  ec.max_tokens = cfg.get_int("engine.max_tokens");
  ec.most_likely_temperature = cfg.get_double("engine.most_likely_temperature");
  ec.sample_temperature = cfg.get_double("estimators.sample_temperature");
  rc->engine = std::make_unique<RarEngine>(*rc->backend, *rc->retriever, ec);

  rc->perturb = std::make_unique<PerturbContext>(PerturbContext{
      *rc->backend, *rc->backend, *rc->retriever, rc->prompts, ec.k_docs, 256, RetryPolicy{}});

  rc->est_cfg.B = cfg.get_int("estimators.samples");
  rc->est_cfg.sample_temperature = cfg.get_double("estimators.sample_temperature");
  rc->est_cfg.equivalence = equivalence_mode_from_string(cfg.get_string("estimators.equivalence"));
  rc->est_cfg.ptrue_include_samples = cfg.get_bool("estimators.ptrue_include_samples");
  validate(rc->est_cfg);

  Equivalence eq;
  eq.mode = rc->est_cfg.equivalence;
  eq.judge = rc->backend.get();
  eq.prompt = &rc->prompts.equivalence;
  rc->estimator_ctx = std::make_unique<EstimatorContext>(EstimatorContext{
      *rc->engine, *rc->perturb, *rc->backend, rc->prompts,
      cfg.get_u64("run.master_seed"), eq, 1});
  return rc;
}

inline RunRecord make_record(const QAItem& x, const UncertaintyResult& res) {
  RunRecord r;
  r.query_id = res.query_id;
  r.method = res.method;
  r.golds = x.gold_answers;
  r.most_likely_terminal = res.most_likely.terminal;
  if (res.most_likely.terminal && res.most_likely.response) {
    r.answer = *res.most_likely.response;
    r.correct = x.gold_answers.empty() ? 0 : exact_match(*r.answer, x.gold_answers);
  }
  r.consistency = res.consistency;
  r.uncertainty = res.uncertainty;
  r.match_flags.assign(res.match_flags.begin(), res.match_flags.end());
  r.flags = res.flags;
  r.most_likely_tokens = res.most_likely.token_count;
  for (const ReasoningPath& s : res.samples) r.sample_token_counts.push_back(s.token_count);
  r.n_unique_docs = unique_docs(res.samples);
  std::vector<std::string> queries;
  for (const ReasoningPath& s : res.samples)
    for (const ReasoningState& st : s.states)
      if (st.is_search()) queries.push_back(st.search().query);
  if (queries.size() >= 2) {
    HashedEmbedder embedder;
    r.query_diversity = query_diversity(embedder.embed(queries));
  }
  return r;
}

inline json path_record(const std::string& query_id, const std::string& method,
                        const std::string& kind, int sample_index, const ReasoningPath& p) {
  json j;
  j["query_id"] = query_id;
  j["method"] = method;
  j["kind"] = kind;
  if (sample_index >= 0) j["sample_index"] = sample_index;
  j["path"] = p;
  return j;
}

}  // namespace detail

inline RunOutcome run_uq(const ConfigMap& cfg) {
  namespace fs = std::filesystem;
  std::string out_dir = cfg.get_string("run.out");
  if (out_dir.empty()) throw ConfigError("run.out: missing");
  fs::create_directories(out_dir);

  std::string digest = config_digest(cfg);
  std::string run_id = cfg.get_string("run.id");
  if (run_id.empty()) run_id = fs::path(out_dir).filename().string();

  std::string manifest_path = out_dir + "/manifest.json";
  std::string started = iso_utc_now();
  if (fs::exists(manifest_path)) {
    json prev = load_manifest(out_dir);
    if (prev.value("config_digest", std::string{}) != digest)
      throw ConfigError("run.out: directory " + out_dir +
                        " holds a run with a different config (digest mismatch)");
    started = prev.value("started", started);
  }

  auto rc = detail::build_components(cfg);

  auto write_manifest = [&](const std::string& finished) {
    json m;
    m["run_id"] = run_id;
    m["config_digest"] = digest;
    m["master_seed"] = cfg.get_u64("run.master_seed");
    m["dataset_path"] = cfg.get_string("run.dataset");
    m["corpus_path"] = cfg.get_string("retrieval.corpus").empty()
                           ? cfg.get_string("backend.world")
                           : cfg.get_string("retrieval.corpus");
    json methods = json::array();
    for (Method m2 : rc->methods) methods.push_back(to_string(m2));
    m["methods"] = methods;
    m["started"] = started;
    if (finished.empty())
      m["finished"] = nullptr;
    else
      m["finished"] = finished;
    m["engine_version"] = kEngineVersion;
    json cfg_echo;
    for (const auto& [k, v] : cfg.items()) cfg_echo[k] = v;
    m["config"] = cfg_echo;
    std::ofstream out(manifest_path);
    if (!out) throw IngestionError("cannot write manifest: " + manifest_path);
    out << m.dump(2) << "\n";
  };
  write_manifest("");

  // Resume: (query, method) pairs already persisted are never re-run.
  std::set<std::pair<std::string, std::string>> done;
  {
    std::ifstream in(out_dir + "/results.jsonl");
    std::string line;
    while (in && std::getline(in, line)) {
      if (trim(line).empty()) continue;
      json j = json::parse(line);
      done.insert({j.at("query_id").get<std::string>(), j.at("method").get<std::string>()});
    }
  }

  struct Task {
    int query_idx;
    Method method;
  };
  std::vector<Task> tasks;
  RunOutcome outcome;
  outcome.run_dir = out_dir;
  for (int qi = 0; qi < static_cast<int>(rc->dataset.size()); ++qi)
    for (Method m : rc->methods) {
      if (done.count({rc->dataset[qi].id, to_string(m)}))
        ++outcome.skipped;
      else
        tasks.push_back({qi, m});
    }

  std::ofstream results(out_dir + "/results.jsonl", std::ios::app);
  std::ofstream generations(out_dir + "/generations.jsonl", std::ios::app);
  std::ofstream errors(out_dir + "/errors.jsonl", std::ios::app);
  if (!results || !generations || !errors)
    throw IngestionError("cannot open run files in " + out_dir);

  struct Slot {
    std::string result_line;
    std::vector<std::string> generation_lines;
    std::string error_line;
  };
  int workers = cfg.get_int("run.workers");
  if (workers < 1) throw ConfigError("run.workers: must be >= 1");

  // Fixed-size chunks keep the output order independent of the worker count
  // while persisting progress incrementally for crash resume.
  const size_t chunk = 32;
  for (size_t base = 0; base < tasks.size(); base += chunk) {
    size_t count = std::min(chunk, tasks.size() - base);
    std::vector<Slot> slots(count);
    parallel_for(count, workers, [&](size_t i) {
      const Task& t = tasks[base + i];
      const QAItem& x = rc->dataset[t.query_idx];
      try {
        UncertaintyResult res = run_estimator(t.method, x, rc->est_cfg, *rc->estimator_ctx);
        RunRecord rec = detail::make_record(x, res);
        slots[i].result_line = record_to_json(rec).dump();
        slots[i].generation_lines.push_back(
            detail::path_record(x.id, rec.method, "most-likely", -1, res.most_likely).dump());
        for (int b = 0; b < static_cast<int>(res.samples.size()); ++b)
          slots[i].generation_lines.push_back(
              detail::path_record(x.id, rec.method, "sample", b, res.samples[b]).dump());
      } catch (const std::exception& e) {
        json err{{"query_id", x.id}, {"method", to_string(t.method)}, {"error", e.what()}};
        slots[i].error_line = err.dump();
      }
    });
    for (const Slot& s : slots) {
      if (!s.error_line.empty()) {
        errors << s.error_line << "\n";
        ++outcome.failures;
        continue;
      }
      results << s.result_line << "\n";
      for (const std::string& g : s.generation_lines) generations << g << "\n";
      ++outcome.completed;
    }
    results.flush();
    generations.flush();
    errors.flush();
  }

  write_manifest(iso_utc_now());
  return outcome;
}

// ---------------------------------------------------------------------------
// Reports

namespace detail {

inline std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

struct MethodStats {
  std::string method;
  std::vector<const RunRecord*> records;
  std::vector<double> uncertainties;
  std::vector<int> correct;
  double em = 0.0;
  std::optional<double> auroc_value;
  double auarc_value = 0.0;
  double mean_uncertainty = 0.0;
  double mean_sample_tokens = 0.0;
  double mean_unique_docs = 0.0;
  std::optional<double> mean_query_diversity;
};

inline std::vector<MethodStats> method_stats(const std::vector<RunRecord>& records) {
  std::vector<std::string> order;
  std::map<std::string, MethodStats> by_method;
  for (const RunRecord& r : records) {
    if (!by_method.count(r.method)) {
      order.push_back(r.method);
      by_method[r.method].method = r.method;
    }
    by_method[r.method].records.push_back(&r);
  }
  std::vector<MethodStats> out;
  for (const std::string& name : order) {
    MethodStats& s = by_method[name];
    double token_sum = 0.0;
    std::int64_t token_paths = 0;
    double docs_sum = 0.0;
    double div_sum = 0.0;
    int div_n = 0;
    for (const RunRecord* r : s.records) {
      s.uncertainties.push_back(r->uncertainty);
      s.correct.push_back(r->correct);
      s.em += r->correct;
      s.mean_uncertainty += r->uncertainty;
      for (int t : r->sample_token_counts) {
        token_sum += t;
        ++token_paths;
      }
      docs_sum += r->n_unique_docs;
      if (r->query_diversity) {
        div_sum += *r->query_diversity;
        ++div_n;
      }
    }
    double n = static_cast<double>(s.records.size());
    s.em /= n;
    s.mean_uncertainty /= n;
    s.mean_sample_tokens = token_paths ? token_sum / static_cast<double>(token_paths) : 0.0;
    s.mean_unique_docs = docs_sum / n;
    if (div_n) s.mean_query_diversity = div_sum / div_n;
    try {
      s.auroc_value = auroc(s.uncertainties, s.correct);
    } catch (const MetricError&) {
      s.auroc_value = std::nullopt;
    }
    s.auarc_value = auarc(s.uncertainties, s.correct);
    out.push_back(std::move(s));
  }
  return out;
}

inline void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path);
  for (const std::string& l : lines) out << l << "\n";
}

// Minimal self-contained SVG plotting, enough for the two report figures.
class SvgCanvas {
 public:
  SvgCanvas(int w, int h) : w_(w), h_(h) {
    body_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\""
          << h << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
          << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke) {
    body_ << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\"" << y2
          << "\" stroke=\"" << stroke << "\" stroke-width=\"1\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke) {
    body_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) body_ << x << "," << y << " ";
    body_ << "\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill) {
    body_ << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << r << "\" fill=\"" << fill
          << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, int size = 12) {
    body_ << "<text x=\"" << x << "\" y=\"" << y << "\" font-family=\"sans-serif\" font-size=\""
          << size << "\">" << s << "</text>\n";
  }
  void save(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot write " + path);
    out << body_.str() << "</svg>\n";
  }

 private:
  int w_, h_;
  std::ostringstream body_;
};

inline const std::vector<std::string>& plot_palette() {
  static const std::vector<std::string> colors = {"#1f77b4", "#d62728", "#2ca02c",
                                                  "#9467bd", "#ff7f0e", "#8c564b"};
  return colors;
}

inline void plot_accuracy_rejection(const std::vector<MethodStats>& stats,
                                    const std::string& path) {
  const int w = 640, h = 480, ml = 60, mb = 50, mt = 20, mr = 20;
  SvgCanvas svg(w, h);
  auto px = [&](double frac) { return ml + frac * (w - ml - mr); };
  auto py = [&](double acc) { return h - mb - acc * (h - mb - mt); };
  svg.line(px(0), py(0), px(1), py(0), "black");
  svg.line(px(0), py(0), px(0), py(1), "black");
  for (int i = 0; i <= 4; ++i) {
    double f = i / 4.0;
    svg.text(px(f) - 10, h - mb + 20, fmt_double(f));
    svg.text(ml - 40, py(f) + 4, fmt_double(f));
  }
  svg.text(w / 2 - 60, h - 10, "rejection fraction");
  svg.text(8, mt + 10, "accuracy");
  for (size_t mi = 0; mi < stats.size(); ++mi) {
    const MethodStats& s = stats[mi];
    size_t n = s.uncertainties.size();
    std::vector<int> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      if (s.uncertainties[a] != s.uncertainties[b])
        return s.uncertainties[a] > s.uncertainties[b];
      return a < b;
    });
    std::int64_t total_correct = 0;
    for (int c : s.correct) total_correct += c;
    std::vector<std::pair<double, double>> pts;
    std::int64_t rejected_correct = 0;
    for (size_t j = 0; j <= n; ++j) {
      if (j > 0) rejected_correct += s.correct[order[j - 1]];
      double acc = j == n ? 1.0
                          : static_cast<double>(total_correct - rejected_correct) /
                                static_cast<double>(n - j);
      pts.push_back({px(static_cast<double>(j) / n), py(acc)});
    }
    const std::string& color = plot_palette()[mi % plot_palette().size()];
    svg.polyline(pts, color);
    svg.text(px(0.02), py(0.98) + 14.0 * (mi + 1), s.method + " (auarc " +
             fmt_double(s.auarc_value) + ")", 11);
    svg.circle(px(0.01), py(0.98) + 14.0 * (mi + 1) - 4, 3, color);
  }
  svg.save(path);
}

inline void plot_auroc_vs_tokens(const std::vector<MethodStats>& stats,
                                 const std::string& path) {
  const int w = 640, h = 480, ml = 60, mb = 50, mt = 20, mr = 20;
  double max_tokens = 1.0;
  for (const MethodStats& s : stats) max_tokens = std::max(max_tokens, s.mean_sample_tokens);
  SvgCanvas svg(w, h);
  auto px = [&](double t) { return ml + (t / (1.15 * max_tokens)) * (w - ml - mr); };
  auto py = [&](double a) { return h - mb - a * (h - mb - mt); };
  svg.line(px(0), py(0), w - mr, py(0), "black");
  svg.line(px(0), py(0), px(0), py(1), "black");
  for (int i = 0; i <= 4; ++i) {
    double f = i / 4.0;
    svg.text(ml - 40, py(f) + 4, fmt_double(f));
  }
  svg.text(w / 2 - 80, h - 10, "mean sampled tokens");
  svg.text(8, mt + 10, "auroc");
  for (size_t mi = 0; mi < stats.size(); ++mi) {
    const MethodStats& s = stats[mi];
    if (!s.auroc_value) continue;
    const std::string& color = plot_palette()[mi % plot_palette().size()];
    svg.circle(px(s.mean_sample_tokens), py(*s.auroc_value), 5, color);
    svg.text(px(s.mean_sample_tokens) + 8, py(*s.auroc_value) + 4, s.method, 11);
  }
  svg.save(path);
}

}  // namespace detail

// Pure function of the run directory contents; never contacts a backend.
inline std::string write_report(const std::string& run_dir, bool plots = false) {
  namespace fs = std::filesystem;
  std::vector<RunRecord> records = load_run_records(run_dir);
  std::vector<detail::MethodStats> stats = detail::method_stats(records);
  std::string report_dir = run_dir + "/report";
  fs::create_directories(report_dir);

  std::vector<std::string> lines = {
      "method,n,em,auroc,auarc,mean_uncertainty,mean_sample_tokens,mean_unique_docs,"
      "mean_query_diversity"};
  for (const detail::MethodStats& s : stats) {
    std::ostringstream row;
    row << detail::csv_cell(s.method) << "," << s.records.size() << ","
        << detail::fmt_double(s.em) << ","
        << (s.auroc_value ? detail::fmt_double(*s.auroc_value) : "") << ","
        << detail::fmt_double(s.auarc_value) << "," << detail::fmt_double(s.mean_uncertainty)
        << "," << detail::fmt_double(s.mean_sample_tokens) << ","
        << detail::fmt_double(s.mean_unique_docs) << ","
        << (s.mean_query_diversity ? detail::fmt_double(*s.mean_query_diversity) : "");
    lines.push_back(row.str());
  }
  detail::write_lines(report_dir + "/summary.csv", lines);

  // Paired significance over the queries shared by each method pair.
  std::vector<std::string> sig = {"method_a,method_b,auroc_a,auroc_b,delta,z,p,degenerate"};
  for (size_t i = 0; i < stats.size(); ++i) {
    std::map<std::string, const RunRecord*> ai;
    for (const RunRecord* r : stats[i].records) ai[r->query_id] = r;
    for (size_t j = i + 1; j < stats.size(); ++j) {
      std::vector<double> sa, sb;
      std::vector<int> labels;
      for (const RunRecord* rb : stats[j].records) {
        auto it = ai.find(rb->query_id);
        if (it == ai.end()) continue;
        sa.push_back(it->second->uncertainty);
        sb.push_back(rb->uncertainty);
        labels.push_back(it->second->correct);
      }
      std::ostringstream row;
      row << detail::csv_cell(stats[i].method) << "," << detail::csv_cell(stats[j].method);
      try {
        DelongResult d = delong_test(sa, sb, labels);
        row << "," << detail::fmt_double(d.auroc_a) << "," << detail::fmt_double(d.auroc_b)
            << "," << detail::fmt_double(d.auroc_a - d.auroc_b) << ","
            << detail::fmt_double(d.z) << "," << detail::fmt_double(d.p) << ","
            << (d.degenerate ? "1" : "0");
      } catch (const MetricError&) {
        row << ",,,,,,1";
      }
      sig.push_back(row.str());
    }
  }
  detail::write_lines(report_dir + "/significance.csv", sig);

  if (plots) {
    detail::plot_accuracy_rejection(stats, report_dir + "/accuracy_rejection.svg");
    detail::plot_auroc_vs_tokens(stats, report_dir + "/auroc_vs_tokens.svg");
  }
  return report_dir;
}

// ---------------------------------------------------------------------------
// Abstention evaluation

inline std::string run_abstain(const std::string& run_dir, std::optional<double> fixed_tau,
                               const std::string& validation_run_dir,
                               AbstainMetric metric = AbstainMetric::abstain_f1) {
  namespace fs = std::filesystem;
  if (!fixed_tau && validation_run_dir.empty())
    throw ConfigError("abstain: need a threshold or a validation run to calibrate on");

  std::vector<RunRecord> test = load_run_records(run_dir);
  std::map<std::string, std::vector<std::pair<double, int>>> test_items;
  std::map<std::string, std::vector<const RunRecord*>> test_by_method;
  std::set<std::string> test_ids;
  std::vector<std::string> order;
  for (const RunRecord& r : test) {
    if (!test_items.count(r.method)) order.push_back(r.method);
    test_items[r.method].push_back({r.uncertainty, r.correct});
    test_by_method[r.method].push_back(&r);
    test_ids.insert(r.query_id);
  }

  std::map<std::string, std::vector<std::pair<double, int>>> val_items;
  if (!validation_run_dir.empty()) {
    std::vector<RunRecord> val = load_run_records(validation_run_dir);
    for (const RunRecord& r : val) {
      if (test_ids.count(r.query_id))
        throw EvalError("validation and test splits overlap on query " + r.query_id);
      val_items[r.method].push_back({r.uncertainty, r.correct});
    }
  }

  std::string report_dir = run_dir + "/report";
  fs::create_directories(report_dir);
  std::vector<std::string> lines = {
      "method,tau,answered_correct,abstained_correct,answered_incorrect,abstained_incorrect,"
      "reliable_accuracy,effective_reliability,abstain_accuracy,abstain_f1,degenerate"};
  std::map<std::string, double> taus;
  for (const std::string& method : order) {
    double tau;
    if (fixed_tau) {
      tau = *fixed_tau;
    } else {
      auto it = val_items.find(method);
      if (it == val_items.end())
        throw EvalError("validation run has no results for method " + method);
      tau = calibrate_threshold(it->second, metric);
    }
    taus[method] = tau;
    AbstainConfusion cm = abstain_confusion(test_items[method], tau);
    AbstainMetrics m = abstain_metrics(cm);
    std::ostringstream row;
    row << detail::csv_cell(method) << "," << detail::fmt_double(tau) << ","
        << cm.answered_correct << "," << cm.abstained_correct << "," << cm.answered_incorrect
        << "," << cm.abstained_incorrect << "," << detail::fmt_double(m.reliable_accuracy)
        << "," << detail::fmt_double(m.effective_reliability) << ","
        << detail::fmt_double(m.abstain_accuracy) << "," << detail::fmt_double(m.abstain_f1)
        << "," << (m.degenerate ? "1" : "0");
    lines.push_back(row.str());
  }
  detail::write_lines(report_dir + "/abstain.csv", lines);

  // Pairwise tests on the per-query abstention outcomes (1 when the decision
  // was right: answered a correct item or abstained on an incorrect one).
  std::vector<std::string> sig = {"method_a,method_b,acc_a,acc_b,mcnemar_p,bootstrap_p"};
  auto outcomes = [&](const std::string& method, const std::set<std::string>& common) {
    std::vector<int> out;
    for (const RunRecord* r : test_by_method[method]) {
      if (!common.count(r->query_id)) continue;
      bool abst = abstain_decision(r->uncertainty, taus[method]);
      out.push_back((abst ? !r->correct : r->correct) ? 1 : 0);
    }
    return out;
  };
  for (size_t i = 0; i < order.size(); ++i)
    for (size_t j = i + 1; j < order.size(); ++j) {
      std::set<std::string> ids_a, common;
      for (const RunRecord* r : test_by_method[order[i]]) ids_a.insert(r->query_id);
      for (const RunRecord* r : test_by_method[order[j]])
        if (ids_a.count(r->query_id)) common.insert(r->query_id);
      std::vector<int> oa = outcomes(order[i], common);
      std::vector<int> ob = outcomes(order[j], common);
      if (oa.empty()) continue;
      double acc_a = 0.0, acc_b = 0.0;
      for (int v : oa) acc_a += v;
      for (int v : ob) acc_b += v;
      acc_a /= static_cast<double>(oa.size());
      acc_b /= static_cast<double>(ob.size());
      double mc = mcnemar_p(oa, ob);
      double bs = bootstrap_p(
          static_cast<int>(oa.size()),
          [&](const std::vector<int>& idx) {
            double d = 0.0;
            for (int k : idx) d += oa[k] - ob[k];
            return d / static_cast<double>(idx.size());
          },
          hash64("abstain-bootstrap", order[i], order[j]));
      std::ostringstream row;
      row << detail::csv_cell(order[i]) << "," << detail::csv_cell(order[j]) << ","
          << detail::fmt_double(acc_a) << "," << detail::fmt_double(acc_b) << ","
          << detail::fmt_double(mc) << "," << detail::fmt_double(bs);
      sig.push_back(row.str());
    }
  detail::write_lines(report_dir + "/abstain_significance.csv", sig);
  return report_dir;
}

// ---------------------------------------------------------------------------
// Model selection across runs

inline std::string run_select(const std::vector<std::string>& run_dirs,
                              const std::string& method, bool clustering,
                              Aggregation aggregation, const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (run_dirs.empty()) throw ConfigError("select: no run directories given");
  fs::create_directories(out_dir);

  struct System {
    std::string name;
    std::map<std::string, const RunRecord*> by_query;
    std::vector<std::string> query_order;
    std::vector<RunRecord> storage;
  };
  std::vector<System> systems;
  std::set<std::string> names;
  for (const std::string& dir : run_dirs) {
    System sys;
    try {
      sys.name = load_manifest(dir).value("run_id", std::string{});
    } catch (const IngestionError&) {
      sys.name.clear();
    }
    if (sys.name.empty()) sys.name = fs::path(dir).filename().string();
    while (!names.insert(sys.name).second) sys.name += "+";
    sys.storage = load_run_records(dir);
    for (const RunRecord& r : sys.storage) {
      if (r.method != method) continue;
      if (sys.by_query.insert({r.query_id, &r}).second) sys.query_order.push_back(r.query_id);
    }
    if (sys.by_query.empty())
      throw EvalError("run " + dir + " has no results for method " + method);
    systems.push_back(std::move(sys));
  }

  std::vector<std::string> joined;
  for (const std::string& qid : systems.front().query_order) {
    bool everywhere = true;
    for (const System& sys : systems)
      if (!sys.by_query.count(qid)) {
        everywhere = false;
        break;
      }
    if (everywhere) joined.push_back(qid);
  }
  if (joined.empty()) throw EvalError("select: no query appears in every run");

  Equivalence eq;  // normalized-exact: reports stay offline
  std::vector<std::string> lines = {
      "query_id,n_candidates,chosen_system,chosen_response,chosen_uncertainty,correct"};
  std::map<std::string, double> system_em;
  double selected_em = 0.0, oracle_em = 0.0;
  for (const std::string& qid : joined) {
    const RunRecord* first = systems.front().by_query.at(qid);
    QAItem item;
    item.id = qid;
    item.question = "?";
    item.gold_answers = first->golds;

    CandidatePool pool;
    pool.query_id = qid;
    bool any_correct = false;
    for (const System& sys : systems) {
      const RunRecord* r = sys.by_query.at(qid);
      Candidate c;
      c.system_name = sys.name;
      c.response = r->answer.value_or("");
      c.uncertainty = r->uncertainty;
      pool.candidates.push_back(std::move(c));
      system_em[sys.name] += r->correct;
      any_correct = any_correct || r->correct;
    }
    oracle_em += any_correct ? 1 : 0;

    std::vector<Cluster> clusters =
        clustering ? cluster_responses(item, pool, eq, hash64("select", qid))
                   : singleton_clusters(pool);
    Selection sel = score_and_select(pool, clusters, aggregation);
    const Candidate& chosen = pool.candidates[sel.candidate_index];
    int correct = item.gold_answers.empty() || chosen.response.empty()
                      ? 0
                      : exact_match(chosen.response, item.gold_answers);
    selected_em += correct;
    std::ostringstream row;
    row << detail::csv_cell(qid) << "," << pool.candidates.size() << ","
        << detail::csv_cell(chosen.system_name) << "," << detail::csv_cell(chosen.response)
        << "," << detail::fmt_double(chosen.uncertainty) << "," << correct;
    lines.push_back(row.str());
  }
  detail::write_lines(out_dir + "/selection.csv", lines);

  double n = static_cast<double>(joined.size());
  std::vector<std::string> summary = {"system,em,n"};
  for (const System& sys : systems) {
    std::ostringstream row;
    row << detail::csv_cell(sys.name) << "," << detail::fmt_double(system_em[sys.name] / n)
        << "," << joined.size();
    summary.push_back(row.str());
  }
  {
    std::ostringstream row;
    row << "selected," << detail::fmt_double(selected_em / n) << "," << joined.size();
    summary.push_back(row.str());
  }
  {
    std::ostringstream row;
    row << "oracle," << detail::fmt_double(oracle_em / n) << "," << joined.size();
    summary.push_back(row.str());
  }
  detail::write_lines(out_dir + "/selection_summary.csv", summary);
  return out_dir;
}

}  // namespace rarc
