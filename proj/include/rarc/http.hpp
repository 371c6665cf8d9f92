#pragma once

// HTTP-backed implementations of the backend, score-service, and embedding
// interfaces. Kept in one header so only the code that talks to the network
// pays for the httplib include.

#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include <httplib.h>

#include "rarc/agent.hpp"
#include "rarc/core.hpp"
#include "rarc/metrics.hpp"
#include "rarc/retrieval.hpp"

namespace rarc {

struct SplitUrl {
  std::string base;  // scheme://host:port
  std::string path;  // /path, default "/"
};

inline SplitUrl split_url(const std::string& url) {
  size_t scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("URL missing scheme: " + url);
  size_t path = url.find('/', scheme + 3);
  if (path == std::string::npos) return {url, "/"};
  return {url.substr(0, path), url.substr(path)};
}

namespace detail {

inline void throw_for_http(const httplib::Result& res, const std::string& what) {
  if (!res) throw TransportError(what + ": connection failed (" + httplib::to_string(res.error()) + ")");
  if (res->status == 429 || res->status >= 500)
    throw TransportError(what + ": HTTP " + std::to_string(res->status), res->status);
  if (res->status < 200 || res->status >= 300)
    throw BackendError(what + ": HTTP " + std::to_string(res->status), res->status);
}

}  // namespace detail

// Chat-completions client. Auth comes from the environment variable named in
// the config, sent as a bearer token when present.
class HttpChatBackend : public AgentBackend {
 public:
  struct Config {
    std::string url;
    std::string model;
    std::string auth_env;
    int timeout_s = 120;
  };

  explicit HttpChatBackend(Config cfg) : cfg_(std::move(cfg)), split_(split_url(cfg_.url)) {}

  GenerationResponse complete(const GenerationRequest& req) override {
    json body;
    body["model"] = cfg_.model;
    json msgs = json::array();
    for (const Message& m : req.messages)
      msgs.push_back(json{{"role", to_string(m.role)}, {"content", m.content}});
    body["messages"] = std::move(msgs);
    body["temperature"] = req.temperature;
    body["max_tokens"] = req.max_tokens;
    body["stop"] = req.stop_sequences;
    body["seed"] = req.seed;
    body["logprobs"] = req.want_logprobs;

    httplib::Client cli(split_.base);
    cli.set_connection_timeout(cfg_.timeout_s, 0);
    cli.set_read_timeout(cfg_.timeout_s, 0);
    cli.set_write_timeout(cfg_.timeout_s, 0);
    httplib::Headers headers;
    if (!cfg_.auth_env.empty()) {
      if (const char* tok = std::getenv(cfg_.auth_env.c_str()); tok && *tok)
        headers.emplace("Authorization", std::string("Bearer ") + tok);
    }
    auto res = cli.Post(split_.path, headers, body.dump(), "application/json");
    detail::throw_for_http(res, "chat backend");

    json payload;
    try {
      payload = json::parse(res->body);
    } catch (const json::exception& e) {
      throw ProtocolError(std::string("chat backend: bad JSON: ") + e.what());
    }
    GenerationResponse out;
    try {
      const json& choice = payload.at("choices").at(0);
      out.text = choice.at("message").at("content").get<std::string>();
      if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
        std::string fr = choice["finish_reason"].get<std::string>();
        out.finish_reason = fr == "length" ? FinishReason::length : FinishReason::stop;
      }
      if (payload.contains("usage") && payload["usage"].contains("completion_tokens"))
        out.token_usage = payload["usage"]["completion_tokens"].get<std::int64_t>();
      if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
          choice["logprobs"].contains("content")) {
        std::vector<TokenLogprob> lps;
        for (const json& e : choice["logprobs"]["content"])
          lps.push_back({e.at("token").get<std::string>(), e.at("logprob").get<double>()});
        out.logprobs = std::move(lps);
      }
    } catch (const json::exception& e) {
      throw ProtocolError(std::string("chat backend: unexpected payload shape: ") + e.what());
    }
    return out;
  }

  std::string name() const override { return "http:" + cfg_.model; }

 private:
  Config cfg_;
  SplitUrl split_;
};

// Relevance scorer: POST {"query", "passages"} -> {"scores"}.
class HttpScoreClient : public ScoreClient {
 public:
  explicit HttpScoreClient(std::string url, int timeout_s = 30)
      : split_(split_url(url)), timeout_s_(timeout_s) {}

  std::vector<double> score(const std::string& query,
                            const std::vector<std::string>& passages) override {
    json body{{"query", query}, {"passages", passages}};
    httplib::Client cli(split_.base);
    cli.set_connection_timeout(timeout_s_, 0);
    cli.set_read_timeout(timeout_s_, 0);
    auto res = cli.Post(split_.path, body.dump(), "application/json");
    detail::throw_for_http(res, "score service");
    try {
      json payload = json::parse(res->body);
      auto scores = payload.at("scores").get<std::vector<double>>();
      if (scores.size() != passages.size())
        throw ProtocolError("score service: score count != passage count");
      return scores;
    } catch (const json::exception& e) {
      throw ProtocolError(std::string("score service: bad payload: ") + e.what());
    }
  }

 private:
  SplitUrl split_;
  int timeout_s_;
};

// Embedding service: POST {"texts"} -> {"embeddings"} (one vector per text).
class HttpEmbedder : public Embedder {
 public:
  explicit HttpEmbedder(std::string url, int timeout_s = 30)
      : split_(split_url(url)), timeout_s_(timeout_s) {}

  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
    json body{{"texts", texts}};
    httplib::Client cli(split_.base);
    cli.set_connection_timeout(timeout_s_, 0);
    cli.set_read_timeout(timeout_s_, 0);
    auto res = cli.Post(split_.path, body.dump(), "application/json");
    detail::throw_for_http(res, "embedding service");
    try {
      json payload = json::parse(res->body);
      auto vecs = payload.at("embeddings").get<std::vector<std::vector<double>>>();
      if (vecs.size() != texts.size())
        throw ProtocolError("embedding service: vector count != text count");
      return vecs;
    } catch (const json::exception& e) {
      throw ProtocolError(std::string("embedding service: bad payload: ") + e.what());
    }
  }

 private:
  SplitUrl split_;
  int timeout_s_;
};

}  // namespace rarc
