#pragma once

// Shared error model, stable hashing, and small string/concurrency helpers
// used across the library.

#include <atomic>
#include <cctype>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

namespace sqlsynth {

enum class Errc {
  file_not_found,
  not_a_database,
  empty_schema,
  query_failure,
  timeout,
  auth_failure,
  rate_limited,
  malformed_response,
  missing_prior_layer,
  validation_failure,
  parse_error,
  unsupported_dialect,
  constraint_violation,
  non_select_output,
  empty_vocabulary,
  unknown_error_type,
  empty_evidence,
  uncorrectable,
  config_invalid,
  stage_failed,
  io_failure,
  too_few_samples,
  script_miss,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::file_not_found: return "FileNotFound";
    case Errc::not_a_database: return "NotADatabase";
    case Errc::empty_schema: return "EmptySchema";
    case Errc::query_failure: return "QueryFailure";
    case Errc::timeout: return "Timeout";
    case Errc::auth_failure: return "AuthFailure";
    case Errc::rate_limited: return "RateLimited";
    case Errc::malformed_response: return "MalformedResponse";
    case Errc::missing_prior_layer: return "MissingPriorLayer";
    case Errc::validation_failure: return "ValidationFailure";
    case Errc::parse_error: return "ParseError";
    case Errc::unsupported_dialect: return "UnsupportedDialect";
    case Errc::constraint_violation: return "ConstraintViolation";
    case Errc::non_select_output: return "NonSelectOutput";
    case Errc::empty_vocabulary: return "EmptyVocabulary";
    case Errc::unknown_error_type: return "UnknownErrorType";
    case Errc::empty_evidence: return "EmptyEvidence";
    case Errc::uncorrectable: return "Uncorrectable";
    case Errc::config_invalid: return "ConfigInvalid";
    case Errc::stage_failed: return "StageFailed";
    case Errc::io_failure: return "IoFailure";
    case Errc::too_few_samples: return "TooFewSamples";
    case Errc::script_miss: return "ScriptMiss";
  }
  return "Unknown";
}

struct Error {
  Errc code;
  std::string message;
  // Raw payload preserved for the caller (e.g. an unparseable model reply).
  std::string detail;

  std::string to_string() const {
    std::string s = errc_name(code);
    if (!message.empty()) {
      s += ": ";
      s += message;
    }
    return s;
  }
};

template <typename T>
class Result {
 public:
  Result(T value) : data_(std::move(value)) {}
  Result(Error err) : data_(std::move(err)) {}

  bool is_ok() const { return std::holds_alternative<T>(data_); }
  explicit operator bool() const { return is_ok(); }

  T& value() & { return std::get<T>(data_); }
  const T& value() const& { return std::get<T>(data_); }
  T&& value() && { return std::get<T>(std::move(data_)); }

  Error& error() & { return std::get<Error>(data_); }
  const Error& error() const& { return std::get<Error>(data_); }

  T value_or(T fallback) const {
    return is_ok() ? std::get<T>(data_) : std::move(fallback);
  }

 private:
  std::variant<T, Error> data_;
};

// Result<void> analogue.
class Status {
 public:
  Status() = default;
  Status(Error err) : err_(std::move(err)) {}
  bool is_ok() const { return !err_.has_value(); }
  explicit operator bool() const { return is_ok(); }
  const Error& error() const { return *err_; }
  static Status ok_status() { return Status(); }

 private:
  std::optional<Error> err_;
};

inline Error make_error(Errc code, std::string message, std::string detail = {}) {
  return Error{code, std::move(message), std::move(detail)};
}

// ---------------------------------------------------------------------------
// Hashing. FNV-1a, used for request fingerprints, blob digests, and stage
// fingerprints. Stable across platforms and runs.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view data,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

// ---------------------------------------------------------------------------
// String helpers.
// ---------------------------------------------------------------------------

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  return true;
}

// Lowercased alphanumeric tokens; everything else is a separator.
inline std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline size_t levenshtein(std::string_view a, std::string_view b) {
  const size_t n = a.size(), m = b.size();
  std::vector<size_t> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = j;
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= m; ++j) {
      size_t cost = (std::tolower(static_cast<unsigned char>(a[i - 1])) ==
                     std::tolower(static_cast<unsigned char>(b[j - 1])))
                        ? 0
                        : 1;
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

// ---------------------------------------------------------------------------
// Bounded fan-out. Runs fn(i) for i in [0, n) on up to `workers` threads.
// Results land in a caller-owned vector indexed by i, so output order never
// depends on scheduling.
// ---------------------------------------------------------------------------

inline void parallel_for(size_t n, size_t workers,
                         const std::function<void(size_t)>& fn) {
  if (n == 0) return;
  workers = std::max<size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace sqlsynth
