#pragma once

// Single point of access to a chat-completion model. Everything LLM-backed
// (knowledge extraction, generation, correction, judging) goes through the
// Gateway; nothing else in the library performs network I/O.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "sqlsynth/core.hpp"

namespace sqlsynth::llm {

enum class SchemaTag { free_text, structured_record };

struct ChatRequest {
  std::string system_text;
  std::string user_text;
  double temperature = 0.0;  // [0, 2]
  int max_output_tokens = 4096;
  SchemaTag response_schema_tag = SchemaTag::free_text;
};

struct TokenUsage {
  std::int64_t prompt = 0;
  std::int64_t completion = 0;
};

struct ChatResponse {
  std::string text;
  enum class Finish { stop, length, error } finish_reason = Finish::stop;
  TokenUsage usage;
};

struct ProviderConfig {
  std::string endpoint_url;
  std::string model_id;
  std::string api_key_source;  // env var name, never the key itself
  double timeout_seconds = 60.0;
  int max_retries = 2;
  int concurrency_cap = 4;
  int retry_base_delay_ms = 500;
};

// Fingerprint of what the model actually sees. Fixture files key scripted
// responses on this, which is what makes full pipeline runs replayable.
inline std::uint64_t request_fingerprint(const ChatRequest& req) {
  char temp[32];
  std::snprintf(temp, sizeof(temp), "%.4f", req.temperature);
  std::uint64_t h = fnv1a64(req.system_text);
  h = fnv1a64("\x1f", h);
  h = fnv1a64(req.user_text, h);
  h = fnv1a64("\x1f", h);
  h = fnv1a64(temp, h);
  return h;
}

class Provider {
 public:
  virtual ~Provider() = default;
  virtual Result<ChatResponse> complete(const ChatRequest& req) = 0;
  virtual std::string model_id() const = 0;
};

// Replays canned responses keyed by request fingerprint. A pure function of
// the fingerprint: unknown requests fail loudly (with the prompt text in the
// error) instead of inventing output, and an optional constant fallback
// covers tests that want a fixed reply for everything else.
class ScriptedProvider : public Provider {
 public:
  ScriptedProvider() = default;
  explicit ScriptedProvider(std::string model_id)
      : model_id_(std::move(model_id)) {}

  void script(std::uint64_t fingerprint, std::string response_text) {
    responses_[hex64(fingerprint)] = std::move(response_text);
  }
  void script(const ChatRequest& req, std::string response_text) {
    script(request_fingerprint(req), std::move(response_text));
  }
  void set_fallback(std::string response_text) {
    fallback_ = std::move(response_text);
  }

  Status load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
      return make_error(Errc::io_failure, "cannot read script file: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      return make_error(Errc::io_failure,
                        "bad script file " + path + ": " + e.what());
    }
    if (j.contains("responses"))
      for (auto& [k, v] : j["responses"].items())
        responses_[k] = v.get<std::string>();
    if (j.contains("fallback")) fallback_ = j["fallback"].get<std::string>();
    return Status::ok_status();
  }

  Status save_file(const std::string& path) const {
    nlohmann::ordered_json j;
    j["responses"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : responses_) j["responses"][k] = v;
    if (fallback_) j["fallback"] = *fallback_;
    std::ofstream out(path);
    if (!out)
      return make_error(Errc::io_failure, "cannot write script file: " + path);
    out << j.dump(2) << "\n";
    return Status::ok_status();
  }

  Result<ChatResponse> complete(const ChatRequest& req) override {
    auto it = responses_.find(hex64(request_fingerprint(req)));
    const std::string* text = nullptr;
    if (it != responses_.end())
      text = &it->second;
    else if (fallback_)
      text = &*fallback_;
    if (!text)
      return make_error(Errc::script_miss,
                        "no scripted response for fingerprint " +
                            hex64(request_fingerprint(req)),
                        "system:\n" + req.system_text + "\nuser:\n" +
                            req.user_text);
    ChatResponse resp;
    resp.text = *text;
    resp.finish_reason = text->empty() ? ChatResponse::Finish::error
                                       : ChatResponse::Finish::stop;
    resp.usage.prompt = static_cast<std::int64_t>(
        (req.system_text.size() + req.user_text.size()) / 4);
    resp.usage.completion = static_cast<std::int64_t>(text->size() / 4);
    return resp;
  }

  std::string model_id() const override { return model_id_; }

  size_t size() const { return responses_.size(); }

 private:
  std::string model_id_ = "scripted";
  std::map<std::string, std::string> responses_;
  std::optional<std::string> fallback_;
};

namespace detail {

// Documented extraction rule for structured replies: (1) the whole text,
// (2) the first parseable fenced block, (3) first '{' .. last '}'.
inline std::optional<nlohmann::ordered_json> extract_json(
    const std::string& text, std::string* parse_error = nullptr) {
  auto try_parse =
      [&](const std::string& s) -> std::optional<nlohmann::ordered_json> {
    auto j = nlohmann::ordered_json::parse(s, nullptr, false);
    if (j.is_discarded()) return std::nullopt;
    return j;
  };
  const std::string trimmed = trim(text);
  if (auto j = try_parse(trimmed)) return j;

  size_t pos = 0;
  while ((pos = text.find("```", pos)) != std::string::npos) {
    size_t body = text.find('\n', pos);
    if (body == std::string::npos) break;
    size_t close = text.find("```", body);
    if (close == std::string::npos) break;
    if (auto j = try_parse(trim(text.substr(body + 1, close - body - 1))))
      return j;
    pos = close + 3;
  }

  size_t open = text.find('{');
  size_t last = text.rfind('}');
  if (open != std::string::npos && last != std::string::npos && last > open) {
    if (auto j = try_parse(text.substr(open, last - open + 1))) return j;
  }
  if (parse_error) *parse_error = "no parseable JSON object found";
  return std::nullopt;
}

}  // namespace detail

// Retry, rate-limit and concurrency enforcement around a Provider.
class Gateway {
 public:
  Gateway(std::shared_ptr<Provider> provider, ProviderConfig config)
      : provider_(std::move(provider)), config_(std::move(config)) {
    if (config_.concurrency_cap < 1) config_.concurrency_cap = 1;
  }

  const ProviderConfig& config() const { return config_; }
  std::string model_id() const { return provider_->model_id(); }

  // At most max_retries+1 attempts; only transport errors and rate limits
  // are retried, with exponential backoff.
  Result<ChatResponse> complete(const ChatRequest& req) {
    if (req.user_text.empty())
      return make_error(Errc::config_invalid, "user_text must be non-empty");
    if (req.temperature < 0.0 || req.temperature > 2.0)
      return make_error(Errc::config_invalid, "temperature outside [0,2]");

    ConcurrencySlot slot(*this);
    std::optional<Error> last;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0) {
        auto delay = std::chrono::milliseconds(
            static_cast<std::int64_t>(config_.retry_base_delay_ms)
            << (attempt - 1));
        std::this_thread::sleep_for(delay);
      }
      auto resp = provider_->complete(req);
      if (resp) return resp;
      last = resp.error();
      if (last->code != Errc::timeout && last->code != Errc::rate_limited &&
          last->code != Errc::query_failure)
        break;  // non-retryable
    }
    return *last;
  }

  // Structured completion: parse the reply as a JSON record; on failure,
  // reprompt once with the parse error appended, then give up carrying the
  // raw text.
  Result<nlohmann::ordered_json> complete_structured(const ChatRequest& req) {
    if (req.response_schema_tag != SchemaTag::structured_record)
      return make_error(Errc::config_invalid,
                        "complete_structured requires structured_record tag");
    auto resp = complete(req);
    if (!resp) return resp.error();
    std::string perr;
    if (auto j = detail::extract_json(resp.value().text, &perr)) return *j;

    ChatRequest retry = req;
    retry.user_text += "\n\nYour previous reply could not be parsed as JSON (" +
                       perr + "). Reply again with a single valid JSON object "
                       "and nothing else.";
    auto resp2 = complete(retry);
    if (!resp2) return resp2.error();
    if (auto j = detail::extract_json(resp2.value().text, &perr)) return *j;
    return make_error(Errc::malformed_response,
                      "unparseable structured reply after reprompt",
                      resp2.value().text);
  }

  // Peak number of requests simultaneously inside the provider; test hook
  // for the concurrency-cap contract.
  int peak_in_flight() const { return peak_; }

 private:
  class ConcurrencySlot {
   public:
    explicit ConcurrencySlot(Gateway& gw) : gw_(gw) {
      std::unique_lock lock(gw_.mu_);
      gw_.cv_.wait(lock,
                   [&] { return gw_.in_flight_ < gw_.config_.concurrency_cap; });
      ++gw_.in_flight_;
      gw_.peak_ = std::max(gw_.peak_, gw_.in_flight_);
    }
    ~ConcurrencySlot() {
      {
        std::lock_guard lock(gw_.mu_);
        --gw_.in_flight_;
      }
      gw_.cv_.notify_one();
    }

   private:
    Gateway& gw_;
  };

  std::shared_ptr<Provider> provider_;
  ProviderConfig config_;
  std::mutex mu_;
  std::condition_variable cv_;
  int in_flight_ = 0;
  int peak_ = 0;
};

}  // namespace sqlsynth::llm
