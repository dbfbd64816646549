#include "refute/oracle.hpp"

#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

namespace refute {

OracleResponse send_with_retry(Oracle& oracle, const OracleRequest& request, int retries) {
  for (int attempt = 0;; ++attempt) {
    try {
      return oracle.send(request);
    } catch (const TransportError&) {
      if (attempt >= retries) throw;
      std::this_thread::sleep_for(std::chrono::milliseconds(50 << attempt));
    }
  }
}

OracleResponse FunctionOracle::send(const OracleRequest& request) {
  ++calls_;
  return {fn_(request.prompt), "stop"};
}

std::string FixtureOracle::key_for(const std::string& prompt) { return hex64(fnv1a64(prompt)); }

OracleResponse FixtureOracle::send(const OracleRequest& request) {
  auto p = path_for(request.prompt);
  if (!std::filesystem::exists(p)) throw TransportError("no fixture response at " + p.string());
  return {read_file(p), "stop"};
}

OracleResponse HttpOracle::send(const OracleRequest& request) {
  httplib::Client client(cfg_.base_url);
  client.set_read_timeout(cfg_.timeout_seconds, 0);
  client.set_connection_timeout(10, 0);

  json body = {{"model", cfg_.model},
               {"temperature", request.params.temperature},
               {"max_tokens", request.params.max_tokens},
               {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})}};
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  auto res = client.Post(cfg_.path, headers, body.dump(), "application/json");
  if (!res) throw TransportError("HTTP request failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500)
    throw TransportError("HTTP " + std::to_string(res->status) + " from oracle");
  if (res->status != 200) throw Error("HTTP " + std::to_string(res->status) + " from oracle: " + res->body);

  json reply;
  try {
    reply = json::parse(res->body);
    const auto& choice = reply.at("choices").at(0);
    OracleResponse out;
    out.text = choice.at("message").at("content").get<std::string>();
    out.finish = choice.value("finish_reason", "stop");
    return out;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed oracle reply: ") + e.what());
  }
}

OracleResponse ThrottledOracle::send(const OracleRequest& request) {
  {
    std::unique_lock lock(mu_);
    auto now = std::chrono::steady_clock::now();
    auto slot = std::max(now, next_);
    next_ = slot + min_interval_;
    lock.unlock();
    std::this_thread::sleep_until(slot);
  }
  return inner_->send(request);
}

}  // namespace refute
