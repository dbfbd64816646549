#pragma once
// Text-in/text-out client contract shared by the distillation oracle and the
// justification judge: send(prompt, params) -> text.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>

#include "refute/common.hpp"

namespace refute {

struct DecodingParams {
  double temperature = 0.0;
  int max_tokens = 1024;
};

struct OracleRequest {
  std::string prompt;
  DecodingParams params;
};

struct OracleResponse {
  std::string text;     // verbatim, kept for audit
  std::string finish;   // "stop", "length", ...
};

// Network or service failure; callers may retry.
class TransportError : public Error {
 public:
  using Error::Error;
};

class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual OracleResponse send(const OracleRequest& request) = 0;
  virtual std::string id() const = 0;
};

// Sends with up to `retries` extra attempts on TransportError.
OracleResponse send_with_retry(Oracle& oracle, const OracleRequest& request, int retries);

// Deterministic in-process oracle backed by a function. Counts calls.
class FunctionOracle : public Oracle {
 public:
  using Fn = std::function<std::string(const std::string& prompt)>;
  explicit FunctionOracle(Fn fn, std::string id = "function") : fn_(std::move(fn)), id_(std::move(id)) {}

  OracleResponse send(const OracleRequest& request) override;
  std::string id() const override { return id_; }
  std::size_t calls() const { return calls_.load(); }

 private:
  Fn fn_;
  std::string id_;
  std::atomic<std::size_t> calls_{0};
};

// Replays responses stored as <dir>/<hex64(fnv1a64(prompt))>.txt. A missing
// fixture is a TransportError so runs fail loudly rather than silently.
class FixtureOracle : public Oracle {
 public:
  explicit FixtureOracle(std::filesystem::path dir) : dir_(std::move(dir)) {}
  OracleResponse send(const OracleRequest& request) override;
  std::string id() const override { return "fixtures:" + dir_.string(); }

  static std::string key_for(const std::string& prompt);
  std::filesystem::path path_for(const std::string& prompt) const { return dir_ / (key_for(prompt) + ".txt"); }

 private:
  std::filesystem::path dir_;
};

// OpenAI-compatible chat-completions endpoint over HTTP(S).
struct HttpOracleConfig {
  std::string base_url = "http://127.0.0.1:8080";  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key;  // sent as a Bearer token when non-empty
  int timeout_seconds = 120;
};

class HttpOracle : public Oracle {
 public:
  explicit HttpOracle(HttpOracleConfig cfg) : cfg_(std::move(cfg)) {}
  OracleResponse send(const OracleRequest& request) override;
  std::string id() const override { return "http:" + cfg_.base_url + cfg_.path + "#" + cfg_.model; }

 private:
  HttpOracleConfig cfg_;
};

// Enforces a minimum interval between calls to the wrapped oracle. Safe to
// share between worker threads.
class ThrottledOracle : public Oracle {
 public:
  ThrottledOracle(std::shared_ptr<Oracle> inner, std::chrono::milliseconds min_interval)
      : inner_(std::move(inner)), min_interval_(min_interval) {}
  OracleResponse send(const OracleRequest& request) override;
  std::string id() const override { return inner_->id(); }

 private:
  std::shared_ptr<Oracle> inner_;
  std::chrono::milliseconds min_interval_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_{};
};

}  // namespace refute
