#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace rarc {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Errors

struct RarcError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ContractViolation : RarcError {
  using RarcError::RarcError;
};

struct IngestionError : RarcError {
  using RarcError::RarcError;
};

struct LookupError : RarcError {
  using RarcError::RarcError;
};

struct RenderError : RarcError {
  using RarcError::RarcError;
};

// Backend returned a non-success status or the connection failed.
struct BackendError : RarcError {
  explicit BackendError(const std::string& msg, int status_code = 0)
      : RarcError(msg), status(status_code) {}
  int status;
};

// Retryable transport-level failure (connection refused, 5xx, 429).
struct TransportError : BackendError {
  using BackendError::BackendError;
};

// Response arrived but does not match the wire contract.
struct ProtocolError : RarcError {
  using RarcError::RarcError;
};

struct MalformedOutputError : RarcError {
  using RarcError::RarcError;
};

struct MetricError : RarcError {
  using RarcError::RarcError;
};

struct ConfigError : RarcError {
  using RarcError::RarcError;
};

struct EvalError : RarcError {
  using RarcError::RarcError;
};

// ---------------------------------------------------------------------------
// Domain types

struct QAItem {
  std::string id;
  std::string question;
  std::vector<std::string> gold_answers;
};

struct Document {
  std::string doc_id;
  std::string title;
  std::string text;
  std::optional<double> score;

  bool operator==(const Document&) const = default;
};

struct SearchQuery {
  std::string query;
  std::vector<Document> docs;

  bool operator==(const SearchQuery&) const = default;
};

struct Answer {
  std::string text;
  bool untagged = false;  // emitted without <answer> tags

  bool operator==(const Answer&) const = default;
};

struct ReasoningState {
  int index = 1;
  std::string think;
  std::variant<SearchQuery, Answer> payload;

  bool is_search() const { return std::holds_alternative<SearchQuery>(payload); }
  bool is_answer() const { return std::holds_alternative<Answer>(payload); }
  const SearchQuery& search() const { return std::get<SearchQuery>(payload); }
  const Answer& answer() const { return std::get<Answer>(payload); }

  bool operator==(const ReasoningState&) const = default;
};

enum class PerturbAction { QP, CR, AV };

inline std::string to_string(PerturbAction a) {
  switch (a) {
    case PerturbAction::QP: return "QP";
    case PerturbAction::CR: return "CR";
    case PerturbAction::AV: return "AV";
  }
  throw ContractViolation("unknown perturbation action");
}

inline PerturbAction perturb_action_from_string(const std::string& s) {
  if (s == "QP") return PerturbAction::QP;
  if (s == "CR") return PerturbAction::CR;
  if (s == "AV") return PerturbAction::AV;
  throw ContractViolation("unknown perturbation action: " + s);
}

struct PerturbationDescriptor {
  PerturbAction action = PerturbAction::QP;
  int state_index = 1;
  int sample_index = 1;  // b in 1..B
  bool forced = false;   // AV chosen because the path had a single state

  bool operator==(const PerturbationDescriptor&) const = default;
};

struct ReasoningPath {
  std::string query_id;
  std::vector<ReasoningState> states;
  bool terminal = false;
  std::optional<std::string> response;
  // Absent provenance means the most-likely path.
  std::optional<PerturbationDescriptor> provenance;
  double decode_temperature = 0.0;
  std::uint64_t seed = 0;
  std::int64_t token_count = 0;
  bool token_count_estimated = false;

  bool operator==(const ReasoningPath&) const = default;
};

struct UncertaintyResult {
  std::string query_id;
  std::string method;
  ReasoningPath most_likely;
  std::vector<ReasoningPath> samples;
  double consistency = 0.0;
  double uncertainty = 0.0;
  std::vector<bool> match_flags;
  std::vector<std::string> flags;
};

// ---------------------------------------------------------------------------
// Validation

inline void validate(const QAItem& x) {
  if (x.gold_answers.empty())
    throw ContractViolation("QAItem " + x.id + ": gold_answers empty");
}

// Invariants for engine-emitted paths. Truncation outputs intentionally relax
// the terminal/answer coupling, so callers choose when to check.
inline void validate(const ReasoningPath& p) {
  for (size_t i = 0; i < p.states.size(); ++i) {
    if (p.states[i].index != static_cast<int>(i) + 1)
      throw ContractViolation("path " + p.query_id + ": state indices not contiguous");
    if (p.states[i].is_answer() && i + 1 != p.states.size())
      throw ContractViolation("path " + p.query_id + ": answer before last state");
  }
  bool last_is_answer = !p.states.empty() && p.states.back().is_answer();
  if (p.terminal != last_is_answer)
    throw ContractViolation("path " + p.query_id + ": terminal flag mismatch");
  if (p.response.has_value() != p.terminal)
    throw ContractViolation("path " + p.query_id + ": response presence mismatch");
}

inline void validate(const PerturbationDescriptor& d, int most_likely_len) {
  if (d.action == PerturbAction::AV) {
    if (d.state_index != most_likely_len)
      throw ContractViolation("AV must target the final state");
  } else {
    if (d.state_index < 1 || d.state_index > most_likely_len - 1)
      throw ContractViolation(to_string(d.action) + " state index out of range");
  }
  if (d.sample_index < 1) throw ContractViolation("sample_index must be >= 1");
}

// ---------------------------------------------------------------------------
// Path operations

// Non-terminal prefix holding states 1..t. t = N keeps every state but clears
// the terminal/response fields; t = 0 restarts generation from the raw query.
inline ReasoningPath truncate_path(const ReasoningPath& path, int t) {
  int n = static_cast<int>(path.states.size());
  if (t < 0 || t > n)
    throw ContractViolation("truncate_path: t=" + std::to_string(t) + " out of range 0.." +
                            std::to_string(n));
  ReasoningPath out = path;
  out.states.assign(path.states.begin(), path.states.begin() + t);
  out.terminal = false;
  out.response.reset();
  return out;
}

// Largest t whose state carries a search payload with retrieved docs; 0 if none.
inline int last_retrieval_index(const ReasoningPath& path) {
  if (path.states.empty()) throw ContractViolation("last_retrieval_index: empty path");
  for (int t = static_cast<int>(path.states.size()); t >= 1; --t) {
    const ReasoningState& s = path.states[t - 1];
    if (s.is_search() && !s.search().docs.empty()) return t;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// JSON serialization

inline void to_json(json& j, const QAItem& x) {
  j = json{{"id", x.id}, {"question", x.question}, {"gold_answers", x.gold_answers}};
}

inline void from_json(const json& j, QAItem& x) {
  j.at("id").get_to(x.id);
  j.at("question").get_to(x.question);
  j.at("gold_answers").get_to(x.gold_answers);
}

inline void to_json(json& j, const Document& d) {
  j = json{{"doc_id", d.doc_id}, {"title", d.title}, {"text", d.text}};
  if (d.score) j["score"] = *d.score;
}

inline void from_json(const json& j, Document& d) {
  j.at("doc_id").get_to(d.doc_id);
  j.at("title").get_to(d.title);
  j.at("text").get_to(d.text);
  d.score.reset();
  if (j.contains("score") && !j["score"].is_null()) d.score = j["score"].get<double>();
}

inline void to_json(json& j, const ReasoningState& s) {
  j = json{{"index", s.index}, {"think", s.think}};
  if (s.is_search()) {
    j["search"] = json{{"query", s.search().query}, {"docs", s.search().docs}};
  } else {
    j["answer"] = json{{"text", s.answer().text}, {"untagged", s.answer().untagged}};
  }
}

inline void from_json(const json& j, ReasoningState& s) {
  j.at("index").get_to(s.index);
  j.at("think").get_to(s.think);
  if (j.contains("search")) {
    SearchQuery q;
    j["search"].at("query").get_to(q.query);
    j["search"].at("docs").get_to(q.docs);
    s.payload = std::move(q);
  } else if (j.contains("answer")) {
    Answer a;
    j["answer"].at("text").get_to(a.text);
    a.untagged = j["answer"].value("untagged", false);
    s.payload = std::move(a);
  } else {
    throw ProtocolError("ReasoningState: missing payload");
  }
}

inline void to_json(json& j, const PerturbationDescriptor& d) {
  j = json{{"action", to_string(d.action)},
           {"state_index", d.state_index},
           {"sample_index", d.sample_index},
           {"forced", d.forced}};
}

inline void from_json(const json& j, PerturbationDescriptor& d) {
  d.action = perturb_action_from_string(j.at("action").get<std::string>());
  j.at("state_index").get_to(d.state_index);
  j.at("sample_index").get_to(d.sample_index);
  d.forced = j.value("forced", false);
}

inline void to_json(json& j, const ReasoningPath& p) {
  j = json{{"query_id", p.query_id},
           {"states", p.states},
           {"terminal", p.terminal},
           {"decode_temperature", p.decode_temperature},
           {"seed", p.seed},
           {"token_count", p.token_count},
           {"token_count_estimated", p.token_count_estimated}};
  if (p.response) j["response"] = *p.response;
  if (p.provenance)
    j["provenance"] = *p.provenance;
  else
    j["provenance"] = "most-likely";
}

inline void from_json(const json& j, ReasoningPath& p) {
  j.at("query_id").get_to(p.query_id);
  j.at("states").get_to(p.states);
  j.at("terminal").get_to(p.terminal);
  p.response.reset();
  if (j.contains("response") && !j["response"].is_null())
    p.response = j["response"].get<std::string>();
  p.provenance.reset();
  if (j.contains("provenance") && j["provenance"].is_object())
    p.provenance = j["provenance"].get<PerturbationDescriptor>();
  j.at("decode_temperature").get_to(p.decode_temperature);
  p.seed = j.at("seed").get<std::uint64_t>();
  j.at("token_count").get_to(p.token_count);
  p.token_count_estimated = j.value("token_count_estimated", false);
}

inline void to_json(json& j, const UncertaintyResult& r) {
  j = json{{"query_id", r.query_id}, {"method", r.method},
           {"most_likely", r.most_likely}, {"samples", r.samples},
           {"consistency", r.consistency}, {"uncertainty", r.uncertainty},
           {"match_flags", r.match_flags}, {"flags", r.flags}};
}

inline void from_json(const json& j, UncertaintyResult& r) {
  j.at("query_id").get_to(r.query_id);
  j.at("method").get_to(r.method);
  j.at("most_likely").get_to(r.most_likely);
  j.at("samples").get_to(r.samples);
  j.at("consistency").get_to(r.consistency);
  j.at("uncertainty").get_to(r.uncertainty);
  r.match_flags = j.at("match_flags").get<std::vector<bool>>();
  r.flags = j.value("flags", std::vector<std::string>{});
}

}  // namespace rarc
