#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "rarc/core.hpp"
#include "rarc/random.hpp"
#include "rarc/text.hpp"

namespace rarc {

// ---------------------------------------------------------------------------
// Requests and responses

enum class Role { system, user, assistant };

inline std::string to_string(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  throw ContractViolation("unknown role");
}

struct Message {
  Role role = Role::user;
  std::string content;

  bool operator==(const Message&) const = default;
};

struct GenerationRequest {
  std::vector<Message> messages;
  double temperature = 1.0;
  int max_tokens = 1024;
  std::vector<std::string> stop_sequences;
  std::uint64_t seed = 0;
  bool want_logprobs = false;
};

inline void validate(const GenerationRequest& req) {
  if (req.messages.empty()) throw ContractViolation("request has no messages");
  if (req.temperature < 0.0 || req.temperature > 2.0)
    throw ContractViolation("temperature out of [0, 2]");
  if (req.stop_sequences.size() > 4)
    throw ContractViolation("more than 4 stop sequences");
  if (req.max_tokens < 1) throw ContractViolation("max_tokens must be >= 1");
}

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
};

enum class FinishReason { stop, length, error };

struct GenerationResponse {
  std::string text;
  std::optional<std::int64_t> token_usage;
  std::optional<std::vector<TokenLogprob>> logprobs;
  FinishReason finish_reason = FinishReason::stop;
};

inline std::uint64_t messages_hash(const std::vector<Message>& messages) {
  SeedMixer m;
  for (const Message& msg : messages) {
    m.add(to_string(msg.role));
    m.add(msg.content);
  }
  return m.finish();
}

// ---------------------------------------------------------------------------
// Backend interface

class AgentBackend {
 public:
  virtual ~AgentBackend() = default;
  // One raw completion call; no retry or stop handling here.
  virtual GenerationResponse complete(const GenerationRequest& req) = 0;
  virtual std::string name() const = 0;
};

// Exact responses keyed on (messages hash, seed), with an optional fallback.
class ScriptedBackend : public AgentBackend {
 public:
  using Fallback = std::function<std::optional<std::string>(const GenerationRequest&)>;

  void script(std::uint64_t msg_hash, std::uint64_t seed, std::string text) {
    scripts_[{msg_hash, seed}] = std::move(text);
  }
  void script_for(const std::vector<Message>& messages, std::uint64_t seed, std::string text) {
    script(messages_hash(messages), seed, std::move(text));
  }
  void set_fallback(Fallback fb) { fallback_ = std::move(fb); }

  GenerationResponse complete(const GenerationRequest& req) override {
    auto it = scripts_.find({messages_hash(req.messages), req.seed});
    std::optional<std::string> text;
    if (it != scripts_.end())
      text = it->second;
    else if (fallback_)
      text = fallback_(req);
    if (!text) throw BackendError("scripted backend has no entry for this request");
    GenerationResponse resp;
    resp.text = *text;
    resp.token_usage = approx_token_count(*text);
    return resp;
  }

  std::string name() const override { return "scripted"; }

 private:
  std::map<std::pair<std::uint64_t, std::uint64_t>, std::string> scripts_;
  Fallback fallback_;
};

// Arbitrary callable; the general-purpose test double.
class LambdaBackend : public AgentBackend {
 public:
  using Fn = std::function<GenerationResponse(const GenerationRequest&)>;
  explicit LambdaBackend(Fn fn, std::string label = "lambda")
      : fn_(std::move(fn)), label_(std::move(label)) {}
  GenerationResponse complete(const GenerationRequest& req) override { return fn_(req); }
  std::string name() const override { return label_; }

 private:
  Fn fn_;
  std::string label_;
};

// ---------------------------------------------------------------------------
// generate(): retry + stop-sequence handling around a backend

struct RetryPolicy {
  int max_retries = 2;
  int initial_backoff_ms = 100;
  double backoff_multiplier = 2.0;
  int max_backoff_ms = 2000;
  // Injected so tests do not sleep.
  std::function<void(int)> sleep_ms = [](int ms) {
    std::this_thread::sleep_for(std::chrono::milliseconds(ms));
  };
};

// Truncate at the end of the earliest stop marker; the marker itself is kept
// so the tag parser sees the closing tag.
inline std::string apply_stop_sequences(const std::string& text,
                                        const std::vector<std::string>& stops) {
  size_t cut = std::string::npos;
  for (const std::string& stop : stops) {
    if (stop.empty()) continue;
    size_t pos = text.find(stop);
    if (pos != std::string::npos) cut = std::min(cut, pos + stop.size());
  }
  return cut == std::string::npos ? text : text.substr(0, cut);
}

inline GenerationResponse generate(AgentBackend& backend, const GenerationRequest& req,
                                   const RetryPolicy& policy = {}) {
  validate(req);
  int backoff = policy.initial_backoff_ms;
  int attempt = 0;
  for (;;) {
    try {
      GenerationResponse resp = backend.complete(req);
      resp.text = apply_stop_sequences(resp.text, req.stop_sequences);
      return resp;
    } catch (const TransportError&) {
      if (attempt >= policy.max_retries) throw;
      ++attempt;
      policy.sleep_ms(backoff);
      backoff = std::min(static_cast<int>(backoff * policy.backoff_multiplier),
                         policy.max_backoff_ms);
    }
  }
}

// ---------------------------------------------------------------------------
// Prompt templates

struct PromptTemplate {
  std::string name;
  std::string body;
  std::vector<std::string> required_vars;
};

namespace detail {
// Placeholders are {identifier}; anything else passes through verbatim.
inline std::vector<std::pair<size_t, std::string>> find_placeholders(const std::string& body) {
  std::vector<std::pair<size_t, std::string>> out;
  for (size_t i = 0; i < body.size(); ++i) {
    if (body[i] != '{') continue;
    size_t j = i + 1;
    if (j >= body.size() || !(std::isalpha(static_cast<unsigned char>(body[j])) || body[j] == '_'))
      continue;
    while (j < body.size() &&
           (std::isalnum(static_cast<unsigned char>(body[j])) || body[j] == '_'))
      ++j;
    if (j < body.size() && body[j] == '}') {
      out.emplace_back(i, body.substr(i + 1, j - i - 1));
      i = j;
    }
  }
  return out;
}
}  // namespace detail

inline PromptTemplate make_template(std::string name, std::string body) {
  PromptTemplate t{std::move(name), std::move(body), {}};
  for (const auto& [pos, var] : detail::find_placeholders(t.body)) {
    if (std::find(t.required_vars.begin(), t.required_vars.end(), var) == t.required_vars.end())
      t.required_vars.push_back(var);
  }
  return t;
}

// Single left-to-right pass; substituted values are never rescanned, so brace
// characters in values pass through verbatim.
inline std::string render(const PromptTemplate& t,
                          const std::map<std::string, std::string>& vars) {
  for (const std::string& var : t.required_vars) {
    if (!vars.count(var))
      throw RenderError("template " + t.name + ": missing variable \"" + var + "\"");
  }
  std::string out;
  out.reserve(t.body.size());
  size_t last = 0;
  for (const auto& [pos, var] : detail::find_placeholders(t.body)) {
    out.append(t.body, last, pos - last);
    out += vars.at(var);
    last = pos + var.size() + 2;
  }
  out.append(t.body, last, std::string::npos);
  return out;
}

// ---------------------------------------------------------------------------
// Default prompt set
//
// The named marker lines below are load-bearing: the synthetic agent
// recognizes each auxiliary call by its marker, and the structured lines
// ("Original query:", "Proposed answer:", ...) are what it parses.

struct PromptSet {
  PromptTemplate rar;
  PromptTemplate qp;
  PromptTemplate cr;
  PromptTemplate av;
  PromptTemplate summary;
  PromptTemplate equivalence;
  PromptTemplate ptrue;
};

inline PromptSet default_prompts() {
  PromptSet p;
  p.rar = make_template("rar",
      "You answer questions by searching a document collection, one step at a time.\n"
      "At every step, first reason inside <think>...</think>.\n"
      "Then take exactly one action:\n"
      "- issue a search query inside <search>...</search>, or\n"
      "- finish with a short final answer inside <answer>...</answer>.\n"
      "Search results appear inside <information>...</information> blocks.\n");
  p.qp = make_template("qp",
      "Paraphrase the search query so it keeps the same meaning but uses different words.\n"
      "Question: {question}\n"
      "Reasoning so far:\n{path}\n"
      "Original query: {query}\n"
      "Return only the paraphrased query, nothing else.\n");
  p.cr = make_template("cr",
      "Critically rethink the retrieval step below. Assume the documents retrieved for it were "
      "unhelpful and look for a different angle.\n"
      "Question: {question}\n"
      "Reasoning so far:\n{path}\n"
      "Step under review: {query}\n"
      "Reply with <think>...</think> followed by a new <search>...</search> query.\n");
  p.av = make_template("av",
      "Validate the proposed final answer against the evidence.\n"
      "Question: {question}\n"
      "Reasoning so far:\n{path}\n"
      "Evidence summary: {summary}\n"
      "Proposed answer: {answer}\n"
      "If the answer is supported, reply <verdict>valid</verdict>.\n"
      "Otherwise reply <verdict>invalid</verdict> followed by <think>...</think> and a new "
      "<search>...</search> query.\n");
  p.summary = make_template("summary",
      "Summarize the retrieved evidence relevant to the question in at most three sentences.\n"
      "Question: {question}\n"
      "Documents:\n{documents}\n");
  p.equivalence = make_template("equivalence",
      "Evaluate whether two answers to a question are semantically equivalent.\n"
      "Question: {question}\n"
      "Answer A: {answer_a}\n"
      "Answer B: {answer_b}\n"
      "Reply with yes or no.\n");
  p.ptrue = make_template("ptrue",
      "Decide whether the proposed answer to the question is true.\n"
      "Question: {question}\n"
      "Brainstormed answers:\n{samples}\n"
      "Proposed answer: {answer}\n"
      "Is the proposed answer true? Reply with A for true or B for false.\n");
  return p;
}

// Marker substrings used to recognize each auxiliary prompt.
inline constexpr const char* kQpMarker = "Paraphrase the search query";
inline constexpr const char* kCrMarker = "Critically rethink the retrieval step";
inline constexpr const char* kAvMarker = "Validate the proposed final answer";
inline constexpr const char* kSummaryMarker = "Summarize the retrieved evidence";
inline constexpr const char* kEquivalenceMarker = "semantically equivalent";
inline constexpr const char* kPtrueMarker = "Is the proposed answer true?";

}  // namespace rarc
