#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rarc/agent.hpp"
#include "rarc/core.hpp"
#include "rarc/engine.hpp"
#include "rarc/random.hpp"
#include "rarc/retrieval.hpp"

namespace rarc {

struct PerturbedPrefix {
  ReasoningPath prefix;  // non-terminal
  PerturbationDescriptor descriptor;
  std::optional<std::string> summary;             // AV only
  std::optional<std::string> validated_response;  // AV confirm branch: re-emit this answer
  bool degenerate_paraphrase = false;
  bool summary_fallback = false;
  bool verdict_unparseable = false;
  std::int64_t token_cost = 0;  // tokens spent on the perturbation calls
  bool token_cost_estimated = false;
};

// Wiring for the perturbation prompts. The summarizer may be the same backend
// as the generator; both must be safe for concurrent calls.
struct PerturbContext {
  AgentBackend& agent;
  AgentBackend& summarizer;
  Retriever& retriever;
  const PromptSet& prompts;
  int k_docs = 3;
  int max_tokens = 256;
  RetryPolicy retry;
};

namespace detail {

inline std::string call_text(AgentBackend& backend, const PromptTemplate& tmpl,
                             const std::map<std::string, std::string>& vars, std::uint64_t seed,
                             const RetryPolicy& retry, int max_tokens, std::int64_t* token_cost,
                             bool* estimated) {
  GenerationRequest req;
  req.messages.push_back({Role::user, render(tmpl, vars)});
  req.temperature = 1.0;
  req.max_tokens = max_tokens;
  req.seed = seed;
  GenerationResponse resp = generate(backend, req, retry);
  if (resp.token_usage) {
    *token_cost += *resp.token_usage;
  } else {
    *token_cost += approx_token_count(resp.text);
    *estimated = true;
  }
  return resp.text;
}

}  // namespace detail

inline std::string no_evidence_summary() { return "No evidence was retrieved."; }

// Query-aware summary over all documents gathered along the path. A failing
// summarizer degrades to concatenated doc titles.
inline std::string summarize_path(const QAItem& x, const std::vector<Document>& docs,
                                  std::uint64_t seed, PerturbContext& ctx,
                                  bool* fell_back = nullptr, std::int64_t* token_cost = nullptr,
                                  bool* estimated = nullptr) {
  if (fell_back) *fell_back = false;
  if (docs.empty()) return no_evidence_summary();
  std::string rendered;
  for (const Document& d : docs) rendered += "- [" + d.title + "] " + d.text + "\n";
  std::int64_t cost = 0;
  bool est = false;
  try {
    std::string out = detail::call_text(
        ctx.summarizer, ctx.prompts.summary,
        {{"question", x.question}, {"documents", rendered}}, seed, ctx.retry, ctx.max_tokens,
        &cost, &est);
    if (token_cost) *token_cost += cost;
    if (estimated) *estimated = *estimated || est;
    return trim(out);
  } catch (const std::exception&) {
    if (fell_back) *fell_back = true;
    std::string titles;
    for (const Document& d : docs) {
      if (!titles.empty()) titles += "; ";
      titles += d.title;
    }
    return titles;
  }
}

inline std::vector<Document> docs_on_path(const ReasoningPath& path) {
  std::vector<Document> docs;
  for (const ReasoningState& s : path.states)
    if (s.is_search())
      for (const Document& d : s.search().docs) docs.push_back(d);
  return docs;
}

// Query paraphrasing: replace state t with the same think and a paraphrased
// query; docs are re-retrieved for the new query.
inline PerturbedPrefix apply_qp(const QAItem& x, const ReasoningPath& path, int t,
                                std::uint64_t seed, PerturbContext& ctx) {
  int n = static_cast<int>(path.states.size());
  if (t < 1 || t > n - 1) throw ContractViolation("apply_qp: t out of range");
  if (!path.states[t - 1].is_search())
    throw ContractViolation("apply_qp: state does not carry a search query");

  PerturbedPrefix out;
  out.descriptor = {PerturbAction::QP, t, 1, false};
  const std::string& original = path.states[t - 1].search().query;
  std::map<std::string, std::string> vars{
      {"question", x.question},
      {"path", render_path_text({path.states.begin(), path.states.begin() + (t - 1)})},
      {"query", original}};

  std::string paraphrased;
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::uint64_t call_seed = attempt == 0 ? hash64(seed, "qp") : hash64(seed, "qp-retry");
    paraphrased = trim(detail::call_text(ctx.agent, ctx.prompts.qp, vars, call_seed, ctx.retry,
                                         ctx.max_tokens, &out.token_cost,
                                         &out.token_cost_estimated));
    // Tolerate a paraphraser that echoes tags around the query.
    if (contains(paraphrased, "<search>")) {
      ParsedSegment seg = parse_agent_output(paraphrased);
      if (std::holds_alternative<SearchQuery>(seg.payload))
        paraphrased = std::get<SearchQuery>(seg.payload).query;
    }
    if (!paraphrased.empty() && normalize_answer(paraphrased) != normalize_answer(original))
      break;
  }
  if (paraphrased.empty() || normalize_answer(paraphrased) == normalize_answer(original)) {
    out.degenerate_paraphrase = true;
    if (paraphrased.empty()) paraphrased = original;
  }

  out.prefix = truncate_path(path, t - 1);
  ReasoningState s;
  s.index = t;
  s.think = path.states[t - 1].think;
  s.payload = SearchQuery{paraphrased, ctx.retriever.retrieve_docs(paraphrased, ctx.k_docs)};
  out.prefix.states.push_back(std::move(s));
  return out;
}

// Critical rethinking: keep states 1..t and append a challenger state with a
// fresh think and query from the CR prompt.
inline PerturbedPrefix apply_cr(const QAItem& x, const ReasoningPath& path, int t,
                                std::uint64_t seed, PerturbContext& ctx) {
  int n = static_cast<int>(path.states.size());
  if (t < 1 || t > n - 1) throw ContractViolation("apply_cr: t out of range");

  PerturbedPrefix out;
  out.descriptor = {PerturbAction::CR, t, 1, false};
  const ReasoningState& reviewed = path.states[t - 1];
  std::string reviewed_query = reviewed.is_search() ? reviewed.search().query : reviewed.answer().text;
  std::map<std::string, std::string> vars{
      {"question", x.question},
      {"path", render_path_text({path.states.begin(), path.states.begin() + t})},
      {"query", reviewed_query}};

  std::string think, query;
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::uint64_t call_seed = attempt == 0 ? hash64(seed, "cr") : hash64(seed, "cr-retry");
    std::string raw = detail::call_text(ctx.agent, ctx.prompts.cr, vars, call_seed, ctx.retry,
                                        ctx.max_tokens, &out.token_cost,
                                        &out.token_cost_estimated);
    try {
      ParsedSegment seg = parse_agent_output(raw);
      if (std::holds_alternative<SearchQuery>(seg.payload)) {
        think = seg.think;
        query = std::get<SearchQuery>(seg.payload).query;
      } else {
        // No search tag: treat the whole reply as the new query.
        think = seg.think;
        query = trim(std::get<Answer>(seg.payload).text);
      }
    } catch (const MalformedOutputError&) {
      continue;
    }
    if (!query.empty() && normalize_answer(query) != normalize_answer(reviewed_query)) break;
  }
  if (query.empty() || normalize_answer(query) == normalize_answer(reviewed_query)) {
    out.degenerate_paraphrase = true;
    if (query.empty()) query = reviewed_query;
  }

  out.prefix = truncate_path(path, t);
  ReasoningState s;
  s.index = t + 1;
  s.think = think;
  s.payload = SearchQuery{query, ctx.retriever.retrieve_docs(query, ctx.k_docs)};
  out.prefix.states.push_back(std::move(s));
  return out;
}

// Answer validation: summarize the evidence, ask for a verdict on the final
// answer. A confirming verdict short-circuits (the continuation re-emits the
// original answer without another generation); a rejecting verdict yields an
// AV-authored search state appended after states 1..N-1.
inline PerturbedPrefix apply_av(const QAItem& x, const ReasoningPath& path, std::uint64_t seed,
                                PerturbContext& ctx) {
  if (!path.terminal) throw ContractViolation("apply_av: path must be terminal");
  int n = static_cast<int>(path.states.size());

  PerturbedPrefix out;
  out.descriptor = {PerturbAction::AV, n, 1, false};
  out.summary = summarize_path(x, docs_on_path(path), hash64(seed, "summary"), ctx,
                               &out.summary_fallback, &out.token_cost,
                               &out.token_cost_estimated);

  std::map<std::string, std::string> vars{{"question", x.question},
                                          {"path", render_path_text(path.states)},
                                          {"summary", *out.summary},
                                          {"answer", *path.response}};
  std::string raw = detail::call_text(ctx.agent, ctx.prompts.av, vars, hash64(seed, "av"),
                                      ctx.retry, ctx.max_tokens, &out.token_cost,
                                      &out.token_cost_estimated);
  std::string lowered = to_lower(raw);
  bool valid = contains(lowered, "<verdict>valid");
  bool invalid = contains(lowered, "<verdict>invalid");

  out.prefix = truncate_path(path, n - 1);
  if (valid && !invalid) {
    out.validated_response = *path.response;
    return out;
  }

  std::string think, query;
  if (invalid) {
    try {
      size_t after = lowered.find("</verdict>");
      std::string tail = after == std::string::npos ? raw : raw.substr(after + 10);
      ParsedSegment seg = parse_agent_output(tail);
      if (std::holds_alternative<SearchQuery>(seg.payload)) {
        think = seg.think;
        query = std::get<SearchQuery>(seg.payload).query;
      }
    } catch (const MalformedOutputError&) {
    }
  } else {
    out.verdict_unparseable = true;  // conservative: treat as not validated
  }
  if (query.empty()) {
    // No usable follow-up query: restart the search from the question itself.
    think = "the proposed answer could not be verified against the evidence";
    query = x.question;
  }
  ReasoningState s;
  s.index = n;
  s.think = think;
  s.payload = SearchQuery{query, ctx.retriever.retrieve_docs(query, ctx.k_docs)};
  out.prefix.states.push_back(std::move(s));
  return out;
}

// Algorithm step: action uniform over {QP, CR, AV}; AV targets the final
// state, QP/CR target a uniform state in 1..N-1. Single-state paths can only
// take AV, which is recorded as forced.
struct PerturbChoice {
  PerturbAction action;
  int state_index;
  bool forced = false;
};

inline PerturbChoice sample_perturbation(const ReasoningPath& path, Rng& rng) {
  if (!path.terminal || path.states.empty())
    throw ContractViolation("sample_perturbation: path must be terminal");
  int n = static_cast<int>(path.states.size());
  if (n == 1) return {PerturbAction::AV, 1, true};
  switch (rng.next_below(3)) {
    case 0: return {PerturbAction::QP, 1 + static_cast<int>(rng.next_below(n - 1)), false};
    case 1: return {PerturbAction::CR, 1 + static_cast<int>(rng.next_below(n - 1)), false};
    default: return {PerturbAction::AV, n, false};
  }
}

inline PerturbedPrefix apply_perturbation(const QAItem& x, const ReasoningPath& path,
                                          const PerturbChoice& choice, std::uint64_t seed,
                                          PerturbContext& ctx) {
  PerturbedPrefix out;
  switch (choice.action) {
    case PerturbAction::QP: out = apply_qp(x, path, choice.state_index, seed, ctx); break;
    case PerturbAction::CR: out = apply_cr(x, path, choice.state_index, seed, ctx); break;
    case PerturbAction::AV: out = apply_av(x, path, seed, ctx); break;
  }
  out.descriptor.forced = choice.forced;
  return out;
}

}  // namespace rarc
