#pragma once

#include <string>
#include <variant>
#include <vector>

#include "rarc/agent.hpp"
#include "rarc/core.hpp"
#include "rarc/random.hpp"
#include "rarc/retrieval.hpp"

namespace rarc {

// ---------------------------------------------------------------------------
// Tag grammar

struct ParsedSegment {
  std::string think;
  std::variant<SearchQuery, Answer> payload;
};

// Recognizes an optional <think>...</think> followed by exactly one of
// <search>...</search> or <answer>...</answer>. Text with no tags at all is
// an untagged answer. Both action tags present is malformed.
inline ParsedSegment parse_agent_output(const std::string& text) {
  ParsedSegment seg;
  std::string rest = text;
  size_t think_open = text.find("<think>");
  if (think_open != std::string::npos) {
    size_t think_close = text.find("</think>", think_open + 7);
    if (think_close != std::string::npos) {
      seg.think = trim(text.substr(think_open + 7, think_close - think_open - 7));
      rest = text.substr(think_close + 8);
    }
  }
  size_t s_open = rest.find("<search>");
  size_t a_open = rest.find("<answer>");
  if (s_open != std::string::npos && a_open != std::string::npos)
    throw MalformedOutputError("both <search> and <answer> present");
  if (s_open != std::string::npos) {
    size_t s_close = rest.find("</search>", s_open + 8);
    std::string inner = s_close == std::string::npos
                            ? rest.substr(s_open + 8)
                            : rest.substr(s_open + 8, s_close - s_open - 8);
    seg.payload = SearchQuery{trim(inner), {}};
    return seg;
  }
  if (a_open != std::string::npos) {
    size_t a_close = rest.find("</answer>", a_open + 8);
    std::string inner = a_close == std::string::npos
                            ? rest.substr(a_open + 8)
                            : rest.substr(a_open + 8, a_close - a_open - 8);
    seg.payload = Answer{trim(inner), false};
    return seg;
  }
  seg.payload = Answer{trim(text), true};
  return seg;
}

// ---------------------------------------------------------------------------
// Context assembly

inline std::string state_text(const ReasoningState& s) {
  std::string out = "<think>" + s.think + "</think>";
  if (s.is_search())
    out += "<search>" + s.search().query + "</search>";
  else
    out += "<answer>" + s.answer().text + "</answer>";
  return out;
}

inline std::string information_block(const std::vector<Document>& docs) {
  std::string out = "<information>\n";
  if (docs.empty()) {
    out += "No results found.\n";
  } else {
    int i = 0;
    for (const Document& d : docs)
      out += "Doc " + std::to_string(++i) + " (" + d.title + "): " + d.text + "\n";
  }
  out += "</information>";
  return out;
}

inline std::vector<Message> assemble_context(const PromptTemplate& rar_prompt, const QAItem& x,
                                             const std::vector<ReasoningState>& states) {
  std::vector<Message> msgs;
  msgs.push_back({Role::system, render(rar_prompt, {})});
  msgs.push_back({Role::user, x.question});
  for (const ReasoningState& s : states) {
    msgs.push_back({Role::assistant, state_text(s)});
    if (s.is_search()) msgs.push_back({Role::user, information_block(s.search().docs)});
  }
  return msgs;
}

// Plain-text rendering of a path prefix, used inside perturbation prompts.
inline std::string render_path_text(const std::vector<ReasoningState>& states) {
  if (states.empty()) return "(no reasoning steps yet)";
  std::string out;
  for (const ReasoningState& s : states) {
    if (!out.empty()) out += "\n";
    out += state_text(s);
    if (s.is_search()) out += "\n" + information_block(s.search().docs);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Engine

struct EngineConfig {
  int k_docs = 3;
  int max_steps = 10;
  double most_likely_temperature = 0.7;
  double sample_temperature = 1.0;
  PromptTemplate rar_prompt = default_prompts().rar;
  int max_tokens = 512;
  RetryPolicy retry;
};

inline void validate(const EngineConfig& cfg) {
  if (cfg.max_steps < 1) throw ConfigError("max_steps must be >= 1");
  if (cfg.k_docs < 1) throw ConfigError("k_docs must be >= 1");
}

class RarEngine {
 public:
  RarEngine(AgentBackend& backend, Retriever& retriever, EngineConfig cfg)
      : backend_(backend), retriever_(retriever), cfg_(std::move(cfg)) {
    validate(cfg_);
  }

  const EngineConfig& config() const { return cfg_; }
  Retriever& retriever() const { return retriever_; }
  AgentBackend& backend() const { return backend_; }

  // Most-likely seeds depend only on the query so sampling seeds (which mix
  // in the master seed) can vary without disturbing the most-likely path.
  static std::uint64_t most_likely_seed(const std::string& query_id) {
    return hash64(query_id, "most-likely");
  }

  ReasoningPath run_most_likely(const QAItem& x) const {
    ReasoningPath prefix;
    prefix.query_id = x.id;
    return resume_from(x, prefix, most_likely_seed(x.id), cfg_.most_likely_temperature);
  }

  // Continues the loop from a non-terminal prefix; prefix docs are inherited
  // verbatim. max_steps bounds the number of newly generated states, so a
  // resumed path may end up longer than the path it was cut from.
  ReasoningPath resume_from(const QAItem& x, const ReasoningPath& prefix, std::uint64_t seed,
                            double temperature) const {
    if (prefix.terminal) throw ContractViolation("resume_from: prefix must be non-terminal");
    if (!prefix.states.empty() && prefix.states.back().is_answer())
      throw ContractViolation("resume_from: prefix ends in an answer state");
    if (!prefix.query_id.empty() && prefix.query_id != x.id)
      throw ContractViolation("resume_from: prefix belongs to a different query");

    ReasoningPath path = prefix;
    path.query_id = x.id;
    path.seed = seed;
    path.decode_temperature = temperature;
    path.terminal = false;
    path.response.reset();

    int new_states = 0;
    while (new_states < cfg_.max_steps) {
      int step_index = static_cast<int>(path.states.size()) + 1;
      GenerationRequest req;
      req.messages = assemble_context(cfg_.rar_prompt, x, path.states);
      req.temperature = temperature;
      req.max_tokens = cfg_.max_tokens;
      req.stop_sequences = {"</search>", "</answer>"};
      req.seed = hash64(seed, "step", step_index);

      ParsedSegment seg;
      bool parsed = false;
      for (int attempt = 0; attempt < 2 && !parsed; ++attempt) {
        if (attempt > 0) req.seed = hash64(seed, "retry", step_index);
        GenerationResponse resp = generate(backend_, req, cfg_.retry);
        add_tokens(path, resp);
        try {
          seg = parse_agent_output(resp.text);
          parsed = true;
        } catch (const MalformedOutputError&) {
        }
      }
      if (!parsed) break;  // second malformed output: give up, non-terminal

      ++new_states;
      ReasoningState s;
      s.index = step_index;
      s.think = seg.think;
      if (std::holds_alternative<Answer>(seg.payload)) {
        const Answer& a = std::get<Answer>(seg.payload);
        s.payload = a;
        path.states.push_back(std::move(s));
        path.terminal = true;
        path.response = a.text;
        break;
      }
      SearchQuery q = std::get<SearchQuery>(seg.payload);
      q.docs = retriever_.retrieve_docs(q.query, cfg_.k_docs);
      s.payload = std::move(q);
      path.states.push_back(std::move(s));
    }
    validate(path);
    return path;
  }

  static void add_tokens(ReasoningPath& path, const GenerationResponse& resp) {
    if (resp.token_usage) {
      path.token_count += *resp.token_usage;
    } else {
      path.token_count += approx_token_count(resp.text);
      path.token_count_estimated = true;
    }
  }

 private:
  AgentBackend& backend_;
  Retriever& retriever_;
  EngineConfig cfg_;
};

}  // namespace rarc
