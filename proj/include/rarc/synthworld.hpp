#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "rarc/agent.hpp"
#include "rarc/core.hpp"
#include "rarc/random.hpp"
#include "rarc/text.hpp"

namespace rarc {

// ---------------------------------------------------------------------------
// World specification and generation

struct WorldSpec {
  int n_queries = 50;
  int hops = 2;  // 1 or 2; 0 draws 1 or 2 per query
  int corpus_size = 0;  // target total docs; 0 = 3x the supporting docs
  double distractor_rate = 0.5;
  double err_scale = 0.6;
  std::uint64_t seed = 1;
};

inline void to_json(json& j, const WorldSpec& s) {
  j = json{{"n_queries", s.n_queries}, {"hops", s.hops},
           {"corpus_size", s.corpus_size}, {"distractor_rate", s.distractor_rate},
           {"err_scale", s.err_scale}, {"seed", s.seed}};
}

inline void from_json(const json& j, WorldSpec& s) {
  j.at("n_queries").get_to(s.n_queries);
  j.at("hops").get_to(s.hops);
  j.at("corpus_size").get_to(s.corpus_size);
  j.at("distractor_rate").get_to(s.distractor_rate);
  j.at("err_scale").get_to(s.err_scale);
  s.seed = j.at("seed").get<std::uint64_t>();
}

struct SynthQuery {
  QAItem item;
  int hops = 2;
  double difficulty = 0.0;
  std::string person;
  std::string city;
  std::string country;
};

struct World {
  WorldSpec spec;
  std::vector<SynthQuery> queries;
  std::vector<Document> corpus;

  std::vector<QAItem> dataset() const {
    std::vector<QAItem> out;
    out.reserve(queries.size());
    for (const SynthQuery& q : queries) out.push_back(q.item);
    return out;
  }
};

namespace synth {

inline std::string make_word(Rng& rng) {
  static const char* const cons[] = {"b", "d", "f", "g", "k", "l", "m",
                                     "n", "p", "r", "s", "t", "v", "z"};
  static const char* const vow[] = {"a", "e", "i", "o", "u"};
  int syllables = 2 + static_cast<int>(rng.next_below(2));
  std::string w;
  for (int s = 0; s < syllables; ++s) {
    w += cons[rng.next_below(14)];
    w += vow[rng.next_below(5)];
  }
  return w;
}

inline std::string zero_pad(int v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*d", width, v);
  return buf;
}

// The facts. Support docs use the plain vocabulary; a share of distractors
// uses the alternate vocabulary so paraphrased and rethought queries retrieve
// documents the canonical queries never touch.
inline std::string born_fact(const std::string& person, const std::string& city) {
  return person + " was born in the city of " + city + ".";
}
inline std::string capital_fact(const std::string& city, const std::string& country) {
  return city + " is the capital of " + country + ".";
}
inline std::string born_fact_alt(const std::string& person, const std::string& city) {
  return person + " birthplace is the town of " + city + ".";
}
inline std::string capital_fact_alt(const std::string& city, const std::string& country) {
  return city + " is the seat of the nation " + country + ".";
}

inline std::string question_text(int hops, const std::string& person) {
  if (hops == 1) return "In which city was " + person + " born?";
  return "In which country was " + person + " born?";
}

}  // namespace synth

inline World build_world(const WorldSpec& spec) {
  if (spec.n_queries < 1) throw ConfigError("world: n_queries must be >= 1");
  if (spec.hops != 0 && spec.hops != 1 && spec.hops != 2)
    throw ConfigError("world: hops must be 1, 2, or 0 for mixed");
  if (spec.distractor_rate < 0.0 || spec.distractor_rate > 1.0)
    throw ConfigError("world: distractor_rate must be in [0, 1]");

  World world;
  world.spec = spec;
  Rng rng(hash64(spec.seed, "world"));

  int n_support = 0;
  for (int i = 0; i < spec.n_queries; ++i) {
    SynthQuery q;
    q.person = synth::make_word(rng) + "p" + std::to_string(i);
    q.city = synth::make_word(rng) + "c" + std::to_string(i);
    q.country = synth::make_word(rng) + "k" + std::to_string(i);
    q.hops = spec.hops == 0 ? 1 + static_cast<int>(rng.next_below(2)) : spec.hops;
    q.difficulty = rng.next_unit();
    q.item.id = "q" + synth::zero_pad(i, 3);
    q.item.question = synth::question_text(q.hops, q.person);
    q.item.gold_answers = {q.hops == 1 ? q.city : q.country};
    n_support += q.hops;
    world.queries.push_back(std::move(q));
  }

  for (const SynthQuery& q : world.queries) {
    Document h1;
    h1.doc_id = q.item.id + "h1";
    h1.title = q.person;
    h1.text = synth::born_fact(q.person, q.city);
    world.corpus.push_back(std::move(h1));
    if (q.hops == 2) {
      Document h2;
      h2.doc_id = q.item.id + "h2";
      h2.title = q.city;
      h2.text = synth::capital_fact(q.city, q.country);
      world.corpus.push_back(std::move(h2));
    }
  }

  int target = spec.corpus_size > 0 ? spec.corpus_size : 3 * n_support;
  int n_extra = static_cast<int>(
      std::llround(std::max(0, target - n_support) * spec.distractor_rate));
  for (int j = 0; j < n_extra; ++j) {
    int idx = spec.n_queries + j;
    std::string person = synth::make_word(rng) + "p" + std::to_string(idx);
    std::string city = synth::make_word(rng) + "c" + std::to_string(idx);
    std::string country = synth::make_word(rng) + "k" + std::to_string(idx);
    Document d;
    d.doc_id = "x" + synth::zero_pad(j, 4);
    switch (j % 4) {
      case 0:
        d.title = person;
        d.text = synth::born_fact(person, city);
        break;
      case 1:
        d.title = city;
        d.text = synth::capital_fact(city, country);
        break;
      case 2:
        d.title = person;
        d.text = synth::born_fact_alt(person, city);
        break;
      default:
        d.title = city;
        d.text = synth::capital_fact_alt(city, country);
        break;
    }
    world.corpus.push_back(std::move(d));
  }
  return world;
}

inline void save_world(const std::string& path, const WorldSpec& spec) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write world file: " + path);
  json j{{"format", "rarc-world"}, {"version", 1}, {"spec", spec}};
  out << j.dump(2) << "\n";
}

inline WorldSpec load_world_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open world file: " + path);
  json j = json::parse(in);
  if (j.value("format", std::string{}) != "rarc-world")
    throw IngestionError("not a world file: " + path);
  return j.at("spec").get<WorldSpec>();
}

// ---------------------------------------------------------------------------
// Synthetic agent

// Deterministic rule-based backend. The main loop follows the tag grammar and
// answers from facts visible in the context; each step makes one seeded error
// draw with p_err = difficulty * err_scale (a wrong-entity query while
// searching, a scattered wrong answer when answering). Auxiliary prompts are
// recognized by their marker phrases and handled by fixed rules.
class SyntheticAgent : public AgentBackend {
 public:
  explicit SyntheticAgent(const World& world) : err_scale_(world.spec.err_scale) {
    for (const SynthQuery& q : world.queries) {
      by_question_[q.item.question] = q;
      persons_.push_back(q.person);
      cities_.push_back(q.city);
      countries_.push_back(q.country);
    }
    for (const Document& d : world.corpus) {
      // Distractor entities widen the scatter space for wrong answers.
      if (d.doc_id[0] != 'x') continue;
      auto toks = tokenize(d.text);
      if (!toks.empty()) {
        const std::string& subject = toks.front();
        if (contains(d.text, "born") || contains(d.text, "birthplace"))
          persons_.push_back(subject);
        else
          cities_.push_back(subject);
      }
    }
  }

  GenerationResponse complete(const GenerationRequest& req) override {
    if (req.messages.empty()) throw BackendError("synthetic agent: empty request");
    const std::string& last_user = last_user_content(req);
    if (contains(last_user, kQpMarker)) return respond(qp(last_user));
    if (contains(last_user, kCrMarker)) return respond(cr(last_user));
    if (contains(last_user, kAvMarker)) return respond(av(last_user));
    if (contains(last_user, kSummaryMarker)) return respond(summary(last_user));
    if (contains(last_user, kEquivalenceMarker)) return respond(equivalence(last_user));
    if (contains(last_user, kPtrueMarker)) return ptrue(last_user);
    return respond(rar_step(req));
  }

  std::string name() const override { return "synthetic"; }

 private:
  static GenerationResponse respond(std::string text) {
    GenerationResponse resp;
    resp.token_usage = approx_token_count(text);
    resp.text = std::move(text);
    return resp;
  }

  static const std::string& last_user_content(const GenerationRequest& req) {
    for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it)
      if (it->role == Role::user) return it->content;
    return req.messages.back().content;
  }

  static std::string line_value(const std::string& text, const std::string& marker) {
    size_t pos = text.find(marker);
    if (pos == std::string::npos) return {};
    size_t start = pos + marker.size();
    size_t end = text.find('\n', start);
    return trim(text.substr(start, end == std::string::npos ? std::string::npos : end - start));
  }

  const SynthQuery* find_chain(const std::string& question) const {
    auto it = by_question_.find(trim(question));
    return it == by_question_.end() ? nullptr : &it->second;
  }

  std::string pick_other(const std::vector<std::string>& pool, const std::string& avoid,
                         Rng& rng) const {
    if (pool.size() < 2) return pool.empty() ? avoid : pool.front();
    for (;;) {
      const std::string& cand = pool[rng.next_below(pool.size())];
      if (cand != avoid) return cand;
    }
  }

  // --- main loop ----------------------------------------------------------

  std::string rar_step(const GenerationRequest& req) const {
    std::string question;
    std::string context;
    int prior_states = 0;
    for (const Message& m : req.messages) {
      if (m.role == Role::user) {
        if (question.empty())
          question = m.content;
        else
          context += m.content + "\n";
      } else if (m.role == Role::assistant) {
        ++prior_states;
      }
    }
    const SynthQuery* chain = find_chain(question);
    if (!chain) return "<think>I do not recognize this question</think><answer>unknown</answer>";

    Rng rng(hash64(req.seed, messages_hash(req.messages), "step"));
    bool err = rng.next_unit() < chain->difficulty * err_scale_;

    bool city_known = contains(context, synth::born_fact(chain->person, chain->city));
    bool country_known =
        chain->hops == 2 && contains(context, synth::capital_fact(chain->city, chain->country));
    bool ready = chain->hops == 1 ? city_known : country_known;
    const std::string& gold = chain->hops == 1 ? chain->city : chain->country;

    if (ready || prior_states >= 4) {
      if (err || !ready) {
        const std::vector<std::string>& pool = chain->hops == 1 ? cities_ : countries_;
        std::string wrong = pick_other(pool, gold, rng);
        return "<think>the evidence seems to point elsewhere</think><answer>" + wrong +
               "</answer>";
      }
      return "<think>the retrieved facts give the answer for " + chain->person +
             "</think><answer>" + gold + "</answer>";
    }
    // An erroneous search spins: the agent re-issues the step's query with a
    // filler word, burning a step without gathering anything new.
    if (!city_known) {
      if (err) {
        return "<think>I am not sure the earlier results were right; let me look "
               "again</think><search>" +
               chain->person + " born city again</search>";
      }
      return "<think>I need to find where " + chain->person +
             " was born</think><search>" + chain->person + " born city</search>";
    }
    if (err) {
      return "<think>I should double-check the capital relation</think><search>" +
             chain->city + " capital country again</search>";
    }
    return "<think>" + chain->person + " was born in " + chain->city +
           "; now I need the country</think><search>" + chain->city +
           " capital country</search>";
  }

  // --- auxiliary prompts ---------------------------------------------------

  std::string qp(const std::string& prompt) const {
    std::string query = line_value(prompt, "Original query: ");
    static const std::map<std::string, std::string> synonyms = {
        {"born", "birthplace"}, {"city", "town"},      {"capital", "seat"},
        {"country", "nation"},  {"where", "whereabouts"}, {"was", "is"}};
    std::string out;
    for (const std::string& tok : tokenize(query)) {
      auto it = synonyms.find(tok);
      if (!out.empty()) out += " ";
      out += it == synonyms.end() ? tok : it->second;
    }
    return out;
  }

  std::string cr(const std::string& prompt) const {
    const SynthQuery* chain = find_chain(line_value(prompt, "Question: "));
    if (!chain) return "<think>re-checking</think><search>verification</search>";
    std::string reviewed = line_value(prompt, "Step under review: ");
    bool reviewed_hop2 = false;
    for (const std::string& tok : tokenize(reviewed)) {
      if (std::find(cities_.begin(), cities_.end(), tok) != cities_.end()) {
        reviewed_hop2 = true;
        break;
      }
    }
    bool city_known = contains(prompt, synth::born_fact(chain->person, chain->city));
    if (!reviewed_hop2 && city_known && chain->hops == 2) {
      return "<think>the earlier documents may be misleading; I will verify the chain from "
             "the city side</think><search>" +
             chain->city + " seat nation</search>";
    }
    return "<think>the evidence for this step looks weak; I will re-check the birth record "
           "directly</think><search>record of " +
           chain->person + " birthplace</search>";
  }

  std::string av(const std::string& prompt) const {
    const SynthQuery* chain = find_chain(line_value(prompt, "Question: "));
    std::string answer = line_value(prompt, "Proposed answer: ");
    if (!chain) return "<verdict>invalid</verdict>";
    bool supported = false;
    for (const std::string& city : cities_) {
      if (!contains(prompt, synth::born_fact(chain->person, city))) continue;
      if (chain->hops == 1) {
        supported = normalize_answer(city) == normalize_answer(answer);
      } else {
        supported = contains(prompt, synth::capital_fact(city, answer));
      }
      if (supported) break;
    }
    if (supported) return "<verdict>valid</verdict>";
    return "<verdict>invalid</verdict><think>the answer " + answer +
           " is not supported by the retrieved evidence; I should re-check where " +
           chain->person + " was born</think><search>" + chain->person +
           " birthplace confirmation</search>";
  }

  std::string summary(const std::string& prompt) const {
    std::vector<std::string> titles;
    size_t pos = 0;
    while ((pos = prompt.find("- [", pos)) != std::string::npos) {
      size_t close = prompt.find(']', pos + 3);
      if (close == std::string::npos) break;
      titles.push_back(prompt.substr(pos + 3, close - pos - 3));
      pos = close + 1;
    }
    if (titles.empty()) return "No documents were retrieved.";
    std::string out = "The evidence covers: ";
    for (size_t i = 0; i < titles.size(); ++i) {
      if (i) out += ", ";
      out += titles[i];
    }
    return out + ".";
  }

  std::string equivalence(const std::string& prompt) const {
    std::string a = line_value(prompt, "Answer A: ");
    std::string b = line_value(prompt, "Answer B: ");
    return normalize_answer(a) == normalize_answer(b) ? "yes" : "no";
  }

  GenerationResponse ptrue(const std::string& prompt) const {
    std::string answer = normalize_answer(line_value(prompt, "Proposed answer: "));
    size_t start = prompt.find("Brainstormed answers:");
    size_t stop = prompt.find("Proposed answer:");
    int total = 0, agree = 0;
    if (start != std::string::npos && stop != std::string::npos && stop > start) {
      std::string section = prompt.substr(start, stop - start);
      for (const std::string& line : split(section, '\n')) {
        std::string t = trim(line);
        if (t.rfind("- ", 0) != 0) continue;
        ++total;
        if (normalize_answer(t.substr(2)) == answer) ++agree;
      }
    }
    double p = total == 0 ? 0.5
                          : std::clamp(static_cast<double>(agree) / total, 0.02, 0.98);
    GenerationResponse resp;
    resp.text = "A";
    resp.token_usage = 1;
    resp.logprobs = std::vector<TokenLogprob>{{"A", std::log(p)}};
    return resp;
  }

  std::map<std::string, SynthQuery> by_question_;
  std::vector<std::string> persons_;
  std::vector<std::string> cities_;
  std::vector<std::string> countries_;
  double err_scale_;
};

}  // namespace rarc
