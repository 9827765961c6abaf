#pragma once

// OpenAI-compatible chat-completions provider over HTTP(S). Kept in its own
// header so targets that never talk to a live endpoint do not pull in
// httplib/OpenSSL.

#include <cstdlib>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "sqlsynth/llm_gateway.hpp"

namespace sqlsynth::llm {

class HttpProvider : public Provider {
 public:
  explicit HttpProvider(ProviderConfig config) : config_(std::move(config)) {
    split_endpoint(config_.endpoint_url, base_, path_prefix_);
  }

  std::string model_id() const override { return config_.model_id; }

  Result<ChatResponse> complete(const ChatRequest& req) override {
    // Key check happens before any socket is touched.
    const char* key = config_.api_key_source.empty()
                          ? nullptr
                          : std::getenv(config_.api_key_source.c_str());
    if (!key || !*key)
      return make_error(Errc::auth_failure,
                        "environment variable " + config_.api_key_source +
                            " is unset or empty");
    if (base_.empty())
      return make_error(Errc::config_invalid,
                        "bad endpoint url: " + config_.endpoint_url);

    nlohmann::json body;
    body["model"] = config_.model_id;
    body["messages"] = nlohmann::json::array();
    if (!req.system_text.empty())
      body["messages"].push_back(
          {{"role", "system"}, {"content", req.system_text}});
    body["messages"].push_back({{"role", "user"}, {"content", req.user_text}});
    body["temperature"] = req.temperature;
    body["max_tokens"] = req.max_output_tokens;

    auto cli = make_client();
    if (!cli)
      return make_error(Errc::config_invalid,
                        "unsupported endpoint scheme: " + config_.endpoint_url);
    cli->set_connection_timeout(static_cast<time_t>(config_.timeout_seconds));
    cli->set_read_timeout(static_cast<time_t>(config_.timeout_seconds));
    httplib::Headers headers = {
        {"Authorization", std::string("Bearer ") + key}};

    auto res = cli->Post(path_prefix_ + "/chat/completions", headers,
                         body.dump(), "application/json");
    if (!res)
      return make_error(Errc::timeout,
                        "transport error: " + httplib::to_string(res.error()));
    if (res->status == 401 || res->status == 403)
      return make_error(Errc::auth_failure,
                        "provider rejected credentials (HTTP " +
                            std::to_string(res->status) + ")");
    if (res->status == 429)
      return make_error(Errc::rate_limited, "rate limited (HTTP 429)");
    if (res->status >= 500)
      return make_error(Errc::query_failure,
                        "server error (HTTP " + std::to_string(res->status) +
                            ")");
    if (res->status != 200)
      return make_error(Errc::malformed_response,
                        "unexpected HTTP " + std::to_string(res->status),
                        res->body);

    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.contains("choices") || j["choices"].empty())
      return make_error(Errc::malformed_response,
                        "response body is not a chat completion", res->body);

    ChatResponse out;
    const auto& choice = j["choices"][0];
    out.text = choice.value("message", nlohmann::json::object())
                   .value("content", "");
    const std::string finish = choice.value("finish_reason", "stop");
    out.finish_reason = finish == "length" ? ChatResponse::Finish::length
                                           : ChatResponse::Finish::stop;
    if (out.text.empty()) out.finish_reason = ChatResponse::Finish::error;
    if (j.contains("usage")) {
      out.usage.prompt = j["usage"].value("prompt_tokens", 0);
      out.usage.completion = j["usage"].value("completion_tokens", 0);
    }
    return out;
  }

 private:
  static void split_endpoint(const std::string& url, std::string& base,
                             std::string& path) {
    // "https://host:port/v1" -> base "https://host:port", path "/v1"
    size_t scheme = url.find("://");
    if (scheme == std::string::npos) return;
    size_t slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) {
      base = url;
      path.clear();
    } else {
      base = url.substr(0, slash);
      path = url.substr(slash);
      while (!path.empty() && path.back() == '/') path.pop_back();
    }
  }

  std::unique_ptr<httplib::Client> make_client() const {
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (base_.rfind("https://", 0) == 0) return nullptr;
#endif
    return std::make_unique<httplib::Client>(base_);
  }

  ProviderConfig config_;
  std::string base_;
  std::string path_prefix_;
};

}  // namespace sqlsynth::llm
