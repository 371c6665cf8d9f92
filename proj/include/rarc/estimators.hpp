#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rarc/agent.hpp"
#include "rarc/core.hpp"
#include "rarc/engine.hpp"
#include "rarc/parallel.hpp"
#include "rarc/perturb.hpp"
#include "rarc/random.hpp"

namespace rarc {

// ---------------------------------------------------------------------------
// Response equivalence

enum class EquivalenceMode { normalized_exact, judge };

inline EquivalenceMode equivalence_mode_from_string(const std::string& s) {
  if (s == "normalized-exact") return EquivalenceMode::normalized_exact;
  if (s == "judge") return EquivalenceMode::judge;
  throw ConfigError("unknown equivalence mode: " + s);
}

struct Equivalence {
  EquivalenceMode mode = EquivalenceMode::normalized_exact;
  AgentBackend* judge = nullptr;
  const PromptTemplate* prompt = nullptr;
  RetryPolicy retry;
};

// Symmetric by construction: equal-after-normalization short-circuits, and
// the judge sees the two answers in canonical (min, max) order.
inline bool answers_equivalent(const QAItem& x, const std::string& r1, const std::string& r2,
                               const Equivalence& eq, std::uint64_t seed = 0,
                               bool* fell_back = nullptr) {
  if (fell_back) *fell_back = false;
  std::string n1 = normalize_answer(r1);
  std::string n2 = normalize_answer(r2);
  if (n1 == n2) return true;
  if (eq.mode == EquivalenceMode::normalized_exact) return false;
  if (!eq.judge || !eq.prompt)
    throw ContractViolation("judge equivalence requested without a judge backend");
  const std::string& a = n1 <= n2 ? r1 : r2;
  const std::string& b = n1 <= n2 ? r2 : r1;
  try {
    GenerationRequest req;
    req.messages.push_back({Role::user, render(*eq.prompt, {{"question", x.question},
                                                            {"answer_a", a},
                                                            {"answer_b", b}})});
    req.temperature = 0.0;
    req.max_tokens = 8;
    req.seed = seed;
    GenerationResponse resp = generate(*eq.judge, req, eq.retry);
    std::string verdict = to_lower(trim(resp.text));
    if (verdict.rfind("yes", 0) == 0 || contains(verdict, "\nyes")) return true;
    if (verdict.rfind("no", 0) == 0 || contains(verdict, "\nno")) return false;
  } catch (const std::exception&) {
  }
  if (fell_back) *fell_back = true;  // unparseable or failed judge
  return false;                      // normalized-exact already said not equal
}

// C = (1/B) sum I(r^b == r); absent responses count as non-matches.
inline double majority_vote(const std::vector<std::optional<std::string>>& responses,
                            const std::string& r, const QAItem& x, const Equivalence& eq,
                            std::uint64_t seed_base = 0,
                            std::vector<bool>* match_flags_out = nullptr,
                            bool* judge_fell_back = nullptr) {
  if (responses.empty()) throw ContractViolation("majority_vote: no responses");
  std::vector<bool> flags(responses.size(), false);
  int matches = 0;
  for (size_t i = 0; i < responses.size(); ++i) {
    if (!responses[i]) continue;
    bool fell = false;
    bool m = answers_equivalent(x, *responses[i], r, eq,
                                hash64(seed_base, "equiv", static_cast<std::uint64_t>(i)), &fell);
    if (fell && judge_fell_back) *judge_fell_back = true;
    flags[i] = m;
    if (m) ++matches;
  }
  if (match_flags_out) *match_flags_out = std::move(flags);
  return static_cast<double>(matches) / static_cast<double>(responses.size());
}

inline double uncertainty_score(double consistency) {
  if (consistency < 0.0 || consistency > 1.0)
    throw ContractViolation("consistency out of [0, 1]");
  return 1.0 - consistency;
}

// ---------------------------------------------------------------------------
// Estimator plumbing

enum class Method { R2C, SelfC, ReaC, RrrC, PTrue };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::R2C: return "R2C";
    case Method::SelfC: return "SelfC";
    case Method::ReaC: return "ReaC";
    case Method::RrrC: return "RrrC";
    case Method::PTrue: return "PTrue";
  }
  throw ContractViolation("unknown method");
}

inline Method method_from_string(const std::string& s) {
  if (s == "R2C") return Method::R2C;
  if (s == "SelfC") return Method::SelfC;
  if (s == "ReaC") return Method::ReaC;
  if (s == "RrrC") return Method::RrrC;
  if (s == "PTrue") return Method::PTrue;
  throw ConfigError("unknown method: " + s);
}

struct EstimatorConfig {
  int B = 10;
  double sample_temperature = 1.0;
  EquivalenceMode equivalence = EquivalenceMode::normalized_exact;
  bool ptrue_include_samples = true;
};

inline void validate(const EstimatorConfig& cfg) {
  if (cfg.B < 1) throw ConfigError("B must be >= 1");
}

struct EstimatorContext {
  RarEngine& engine;
  PerturbContext& perturb;
  // Judge for equivalence (when configured) and scorer for PTrue.
  AgentBackend& aux_backend;
  const PromptSet& prompts;
  std::uint64_t master_seed = 1;
  Equivalence equivalence;
  int max_in_flight = 8;
};

namespace detail {

inline ReasoningPath failed_sample(const QAItem& x, std::uint64_t seed, double temperature) {
  ReasoningPath p;
  p.query_id = x.id;
  p.seed = seed;
  p.decode_temperature = temperature;
  return p;
}

inline void add_flag(std::vector<std::string>& flags, const std::string& flag) {
  if (std::find(flags.begin(), flags.end(), flag) == flags.end()) flags.push_back(flag);
}

// Shared early-out: without a terminal most-likely response there is nothing
// to vote against, so U = 1 by definition.
inline bool most_likely_failed(UncertaintyResult& res, int B) {
  if (res.most_likely.terminal) return false;
  res.flags.push_back("most_likely_non_terminal");
  res.match_flags.assign(B, false);
  res.consistency = 0.0;
  res.uncertainty = 1.0;
  return true;
}

inline void finalize_votes(const QAItem& x, UncertaintyResult& res, const EstimatorContext& ctx) {
  std::vector<std::optional<std::string>> responses;
  responses.reserve(res.samples.size());
  for (const ReasoningPath& s : res.samples)
    responses.push_back(s.terminal ? s.response : std::nullopt);
  bool judge_fell_back = false;
  res.consistency = majority_vote(responses, *res.most_likely.response, x, ctx.equivalence,
                                  hash64(ctx.master_seed, x.id, res.method), &res.match_flags,
                                  &judge_fell_back);
  res.uncertainty = uncertainty_score(res.consistency);
  if (judge_fell_back) add_flag(res.flags, "equivalence_judge_fallback");
}

// Resume generation from a prefix, counting only newly generated tokens.
inline ReasoningPath resume_fresh(const EstimatorContext& ctx, const QAItem& x,
                                  ReasoningPath prefix, std::uint64_t seed, double temperature) {
  prefix.token_count = 0;
  prefix.token_count_estimated = false;
  return ctx.engine.resume_from(x, prefix, seed, temperature);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Estimators

inline UncertaintyResult r2c(const QAItem& x, const EstimatorConfig& cfg, EstimatorContext& ctx) {
  validate(cfg);
  UncertaintyResult res;
  res.query_id = x.id;
  res.method = "R2C";
  res.most_likely = ctx.engine.run_most_likely(x);
  if (detail::most_likely_failed(res, cfg.B)) return res;

  res.samples.resize(cfg.B);
  std::vector<std::vector<std::string>> sample_flags(cfg.B);
  parallel_for(cfg.B, ctx.max_in_flight, [&](int i) {
    int b = i + 1;
    std::uint64_t seed_b = derive_seed(ctx.master_seed, x.id, "R2C", b);
    Rng rng(hash64(seed_b, "choice"));
    PerturbChoice choice = sample_perturbation(res.most_likely, rng);
    try {
      PerturbedPrefix pp =
          apply_perturbation(x, res.most_likely, choice, hash64(seed_b, "action"), ctx.perturb);
      pp.descriptor.sample_index = b;
      ReasoningPath sample;
      if (pp.validated_response) {
        // Confirmed answer: re-emit the most-likely answer state directly.
        sample = pp.prefix;
        ReasoningState s = res.most_likely.states.back();
        s.index = static_cast<int>(sample.states.size()) + 1;
        sample.states.push_back(std::move(s));
        sample.terminal = true;
        sample.response = pp.validated_response;
        sample.token_count = 0;
        sample.token_count_estimated = false;
      } else {
        sample = detail::resume_fresh(ctx, x, pp.prefix, hash64(seed_b, "resume"),
                                      cfg.sample_temperature);
      }
      sample.provenance = pp.descriptor;
      sample.seed = seed_b;
      sample.decode_temperature = cfg.sample_temperature;
      sample.token_count += pp.token_cost;
      sample.token_count_estimated |= pp.token_cost_estimated;
      if (pp.degenerate_paraphrase) sample_flags[i].push_back("degenerate_paraphrase");
      if (pp.summary_fallback) sample_flags[i].push_back("summary_fallback");
      if (pp.verdict_unparseable) sample_flags[i].push_back("av_verdict_unparseable");
      if (pp.descriptor.forced) sample_flags[i].push_back("forced_av");
      res.samples[i] = std::move(sample);
    } catch (const std::exception&) {
      ReasoningPath failed = detail::failed_sample(x, seed_b, cfg.sample_temperature);
      failed.provenance = PerturbationDescriptor{choice.action, choice.state_index, b,
                                                 choice.forced};
      res.samples[i] = std::move(failed);
      sample_flags[i].push_back("sample_error");
    }
  });
  for (const auto& fl : sample_flags)
    for (const std::string& f : fl) detail::add_flag(res.flags, f);
  detail::finalize_votes(x, res, ctx);
  return res;
}

inline UncertaintyResult self_consistency(const QAItem& x, const EstimatorConfig& cfg,
                                          EstimatorContext& ctx,
                                          const std::string& method_label = "SelfC") {
  validate(cfg);
  UncertaintyResult res;
  res.query_id = x.id;
  res.method = method_label;
  res.most_likely = ctx.engine.run_most_likely(x);
  if (detail::most_likely_failed(res, cfg.B)) return res;

  res.samples.resize(cfg.B);
  std::vector<char> errored(cfg.B, 0);
  parallel_for(cfg.B, ctx.max_in_flight, [&](int i) {
    int b = i + 1;
    std::uint64_t seed_b = derive_seed(ctx.master_seed, x.id, method_label, b);
    try {
      ReasoningPath prefix;
      prefix.query_id = x.id;
      res.samples[i] =
          detail::resume_fresh(ctx, x, std::move(prefix), seed_b, cfg.sample_temperature);
    } catch (const std::exception&) {
      res.samples[i] = detail::failed_sample(x, seed_b, cfg.sample_temperature);
      errored[i] = 1;
    }
  });
  if (std::find(errored.begin(), errored.end(), char(1)) != errored.end())
    detail::add_flag(res.flags, "sample_error");
  detail::finalize_votes(x, res, ctx);
  return res;
}

inline UncertaintyResult reasoning_consistency(const QAItem& x, const EstimatorConfig& cfg,
                                               EstimatorContext& ctx) {
  validate(cfg);
  UncertaintyResult res;
  res.query_id = x.id;
  res.method = "ReaC";
  res.most_likely = ctx.engine.run_most_likely(x);
  if (detail::most_likely_failed(res, cfg.B)) return res;

  int n = static_cast<int>(res.most_likely.states.size());
  res.samples.resize(cfg.B);
  std::vector<char> errored(cfg.B, 0);
  parallel_for(cfg.B, ctx.max_in_flight, [&](int i) {
    int b = i + 1;
    std::uint64_t seed_b = derive_seed(ctx.master_seed, x.id, "ReaC", b);
    Rng rng(hash64(seed_b, "truncate"));
    int t = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
    try {
      res.samples[i] = detail::resume_fresh(ctx, x, truncate_path(res.most_likely, t),
                                            hash64(seed_b, "resume"), cfg.sample_temperature);
    } catch (const std::exception&) {
      res.samples[i] = detail::failed_sample(x, seed_b, cfg.sample_temperature);
      errored[i] = 1;
    }
  });
  if (std::find(errored.begin(), errored.end(), char(1)) != errored.end())
    detail::add_flag(res.flags, "sample_error");
  detail::finalize_votes(x, res, ctx);
  return res;
}

inline UncertaintyResult rrr_consistency(const QAItem& x, const EstimatorConfig& cfg,
                                         EstimatorContext& ctx) {
  validate(cfg);
  UncertaintyResult res;
  res.query_id = x.id;
  res.method = "RrrC";
  res.most_likely = ctx.engine.run_most_likely(x);
  if (detail::most_likely_failed(res, cfg.B)) return res;

  int t = last_retrieval_index(res.most_likely);
  res.samples.resize(cfg.B);
  std::vector<char> errored(cfg.B, 0);
  parallel_for(cfg.B, ctx.max_in_flight, [&](int i) {
    int b = i + 1;
    std::uint64_t seed_b = derive_seed(ctx.master_seed, x.id, "RrrC", b);
    try {
      res.samples[i] = detail::resume_fresh(ctx, x, truncate_path(res.most_likely, t),
                                            hash64(seed_b, "resume"), cfg.sample_temperature);
    } catch (const std::exception&) {
      res.samples[i] = detail::failed_sample(x, seed_b, cfg.sample_temperature);
      errored[i] = 1;
    }
  });
  if (std::find(errored.begin(), errored.end(), char(1)) != errored.end())
    detail::add_flag(res.flags, "sample_error");
  detail::finalize_votes(x, res, ctx);
  return res;
}

// Probability that the candidate answer is true, asked directly of the
// backend. Prefers the log-probability of the verdict token; falls back to a
// verbalized 0-100 confidence; U = 0.5 when neither is usable.
inline double p_true_score(const QAItem& x, const std::string& r,
                           const std::vector<std::string>& brainstormed, AgentBackend& backend,
                           const PromptTemplate& tmpl, std::uint64_t seed,
                           const RetryPolicy& retry, std::vector<std::string>* flags) {
  std::string listed;
  if (brainstormed.empty()) {
    listed = "(no brainstormed answers)";
  } else {
    for (const std::string& s : brainstormed) listed += "- " + s + "\n";
  }
  GenerationRequest req;
  req.messages.push_back({Role::user, render(tmpl, {{"question", x.question},
                                                    {"samples", listed},
                                                    {"answer", r}})});
  req.temperature = 0.0;
  req.max_tokens = 8;
  req.seed = seed;
  req.want_logprobs = true;
  GenerationResponse resp = generate(backend, req, retry);

  if (resp.logprobs) {
    for (const TokenLogprob& tl : *resp.logprobs) {
      std::string tok = to_lower(trim(tl.token));
      if (tok.empty()) continue;
      double p = std::exp(tl.logprob);
      if (tok == "a") return std::clamp(p, 0.0, 1.0);
      if (tok == "b") return std::clamp(1.0 - p, 0.0, 1.0);
      break;  // first real token is not a verdict; try the text fallback
    }
  }
  std::string text = trim(resp.text);
  std::string lowered = to_lower(text);
  if (lowered.rfind("a", 0) == 0 && (lowered.size() == 1 || !std::isalnum(static_cast<unsigned char>(lowered[1]))))
    return 1.0;
  if (lowered.rfind("b", 0) == 0 && (lowered.size() == 1 || !std::isalnum(static_cast<unsigned char>(lowered[1]))))
    return 0.0;
  // Verbalized confidence: first integer 0..100 in the reply.
  for (size_t i = 0; i < lowered.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(lowered[i]))) continue;
    size_t j = i;
    while (j < lowered.size() && std::isdigit(static_cast<unsigned char>(lowered[j]))) ++j;
    int v = std::stoi(lowered.substr(i, j - i));
    if (v >= 0 && v <= 100) return v / 100.0;
    break;
  }
  if (flags) flags->push_back("ptrue_uninformative");
  return 0.5;
}

inline UncertaintyResult p_true(const QAItem& x, const EstimatorConfig& cfg,
                                EstimatorContext& ctx) {
  validate(cfg);
  UncertaintyResult res;
  res.query_id = x.id;
  res.method = "PTrue";
  res.most_likely = ctx.engine.run_most_likely(x);
  if (detail::most_likely_failed(res, cfg.B)) {
    res.match_flags.clear();  // probability-valued method: no votes at all
    return res;
  }

  std::vector<std::string> brainstormed;
  if (cfg.ptrue_include_samples) {
    res.samples.resize(cfg.B);
    std::vector<char> errored(cfg.B, 0);
    parallel_for(cfg.B, ctx.max_in_flight, [&](int i) {
      int b = i + 1;
      std::uint64_t seed_b = derive_seed(ctx.master_seed, x.id, "PTrue", b);
      try {
        ReasoningPath prefix;
        prefix.query_id = x.id;
        res.samples[i] =
            detail::resume_fresh(ctx, x, std::move(prefix), seed_b, cfg.sample_temperature);
      } catch (const std::exception&) {
        res.samples[i] = detail::failed_sample(x, seed_b, cfg.sample_temperature);
        errored[i] = 1;
      }
    });
    if (std::find(errored.begin(), errored.end(), char(1)) != errored.end())
      detail::add_flag(res.flags, "sample_error");
    for (const ReasoningPath& s : res.samples)
      if (s.terminal) brainstormed.push_back(*s.response);
  }

  double p = p_true_score(x, *res.most_likely.response, brainstormed, ctx.aux_backend,
                          ctx.prompts.ptrue, hash64(ctx.master_seed, x.id, "PTrue", "score"),
                          ctx.perturb.retry, &res.flags);
  res.uncertainty = 1.0 - p;
  res.consistency = p;   // kept in sync with uncertainty; no vote semantics
  res.match_flags.clear();
  return res;
}

inline UncertaintyResult run_estimator(Method method, const QAItem& x, const EstimatorConfig& cfg,
                                       EstimatorContext& ctx) {
  switch (method) {
    case Method::R2C: return r2c(x, cfg, ctx);
    case Method::SelfC: return self_consistency(x, cfg, ctx);
    case Method::ReaC: return reasoning_consistency(x, cfg, ctx);
    case Method::RrrC: return rrr_consistency(x, cfg, ctx);
    case Method::PTrue: return p_true(x, cfg, ctx);
  }
  throw ContractViolation("unknown method");
}

}  // namespace rarc
