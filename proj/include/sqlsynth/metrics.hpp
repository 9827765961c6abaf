#pragma once

// Corpus quality metrics: execution rate, judged question/SQL consistency,
// complexity distribution, embedding diversity, and the n-gram overlap filter.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include "sqlsynth/llm_gateway.hpp"
#include "sqlsynth/prompts.hpp"
#include "sqlsynth/sql_analysis.hpp"
#include "sqlsynth/sqlite_db.hpp"
#include "sqlsynth/synthesis.hpp"

namespace sqlsynth::metrics {

using db::Json;

// A (question, sql) pair; used both for corpus entries and for evaluation-set
// instances the filter screens against.
struct EvalInstance {
  std::string question;
  std::string sql;
};

inline Result<std::vector<EvalInstance>> load_eval_set(
    const std::string& path) {
  auto lines = synth::read_jsonl(path);
  if (!lines.is_ok()) return lines.error();
  std::vector<EvalInstance> out;
  for (const Json& j : lines.value()) {
    EvalInstance e;
    if (j.contains("question") && j["question"].is_string())
      e.question = j["question"].get<std::string>();
    for (const char* key : {"sql", "answer", "query"}) {
      if (j.contains(key) && j[key].is_string()) {
        e.sql = j[key].get<std::string>();
        break;
      }
    }
    if (e.question.empty() && e.sql.empty()) continue;
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Successful execution rate.
// ---------------------------------------------------------------------------

struct SerSample {
  bool executable = false;
  std::string error_text;
};

struct SerResult {
  size_t total = 0;
  size_t executable = 0;
  double value = 0.0;
  std::vector<SerSample> samples;
};

struct ExecOptions {
  int timeout_ms = 5000;
  long long row_cap = 100000;
};

inline Result<SerResult> compute_ser(const std::vector<std::string>& sqls,
                                     const std::string& db_path,
                                     const ExecOptions& opts = {}) {
  if (sqls.empty())
    return make_error(Errc::too_few_samples,
                      "execution rate needs a nonempty corpus");
  db::SqliteDb handle;
  if (Status st = handle.open_readonly(db_path); !st) return st.error();
  SerResult out;
  out.total = sqls.size();
  out.samples.resize(sqls.size());
  for (size_t i = 0; i < sqls.size(); ++i) {
    db::ExecResult r = handle.execute_with_timeout(
        sqls[i], std::chrono::milliseconds(opts.timeout_ms), opts.row_cap);
    out.samples[i].executable = r.success;
    out.samples[i].error_text = r.error_text;
    if (r.success) ++out.executable;
  }
  out.value = static_cast<double>(out.executable) /
              static_cast<double>(out.total);
  return out;
}

// ---------------------------------------------------------------------------
// Judged semantic alignment over the executable subset.
// ---------------------------------------------------------------------------

struct SaRecord {
  size_t corpus_index = 0;
  int label = 0;
  std::string reasoning;
};

struct SaResult {
  bool present = false;  // false when the judged subset is empty
  size_t subset_size = 0;
  size_t consistent = 0;
  double value = 0.0;
  std::vector<SaRecord> records;
};

inline Result<SaResult> judge_sa(const std::vector<EvalInstance>& corpus,
                                 const std::vector<bool>& executable,
                                 const std::string& schema_text,
                                 llm::Gateway& gateway) {
  if (executable.size() != corpus.size())
    return make_error(Errc::config_invalid,
                      "executability mask size does not match the corpus");
  SaResult out;
  for (size_t i = 0; i < corpus.size(); ++i) {
    if (!executable[i]) continue;
    ++out.subset_size;
    llm::ChatRequest req = prompts::consistency_judge_request(
        schema_text, corpus[i].question, corpus[i].sql);
    SaRecord rec;
    rec.corpus_index = i;
    auto response = gateway.complete_structured(req);
    if (!response.is_ok()) {
      if (response.error().code != Errc::malformed_response)
        return response.error();
      rec.label = 0;
      rec.reasoning = "judge reply unusable: " + response.error().message;
    } else {
      const Json& j = response.value();
      int label = -1;
      if (j.contains("label")) {
        if (j["label"].is_number_integer())
          label = j["label"].get<int>();
        else if (j["label"].is_string()) {
          const std::string s = trim(j["label"].get<std::string>());
          if (s == "0" || s == "1") label = s[0] - '0';
        }
      }
      if (label != 0 && label != 1) {
        rec.label = 0;
        rec.reasoning = "judge reply lacked a 0/1 label: " + j.dump();
      } else {
        rec.label = label;
        if (j.contains("reasoning") && j["reasoning"].is_string())
          rec.reasoning = j["reasoning"].get<std::string>();
      }
    }
    if (rec.label == 1) ++out.consistent;
    out.records.push_back(std::move(rec));
  }
  out.present = out.subset_size > 0;
  out.value = out.present ? static_cast<double>(out.consistent) /
                                static_cast<double>(out.subset_size)
                          : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Complexity distribution.
// ---------------------------------------------------------------------------

struct HistogramResult {
  std::map<std::string, size_t> counts;  // "L1".."L4"
  size_t unparseable = 0;
  std::vector<int> levels;  // per sample; 0 when unparseable
};

inline HistogramResult complexity_histogram(
    const std::vector<std::string>& sqls,
    const db::DatabaseSchema* schema = nullptr) {
  HistogramResult out;
  for (int l = 1; l <= 4; ++l) out.counts[sql::level_name(l)] = 0;
  for (const auto& text : sqls) {
    auto facts = sql::extract_facts(text, schema);
    if (!facts.is_ok()) {
      ++out.unparseable;
      out.levels.push_back(0);
      continue;
    }
    sql::ComplexityResult c = sql::classify_complexity(facts.value());
    ++out.counts[sql::level_name(c.level)];
    out.levels.push_back(c.level);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embeddings and diversity.
// ---------------------------------------------------------------------------

struct EmbeddingVector {
  size_t dimension = 0;
  std::vector<double> values;

  double norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
  }
};

inline constexpr size_t kOfflineEmbeddingDim = 256;

// Hashed character-trigram term frequencies, L2-normalized. The empty (or
// trigram-free) string maps to the all-zeros vector.
inline EmbeddingVector embed_offline(const std::string& sql_text) {
  EmbeddingVector out;
  out.dimension = kOfflineEmbeddingDim;
  out.values.assign(kOfflineEmbeddingDim, 0.0);
  const std::string text = to_lower(sql_text);
  if (text.empty()) return out;
  auto bump = [&](std::string_view gram) {
    out.values[fnv1a64(gram) % kOfflineEmbeddingDim] += 1.0;
  };
  if (text.size() < 3) {
    bump(text);
  } else {
    for (size_t i = 0; i + 3 <= text.size(); ++i)
      bump(std::string_view(text).substr(i, 3));
  }
  double n = out.norm();
  if (n > 0.0)
    for (double& v : out.values) v /= n;
  return out;
}

using Embedder = std::function<Result<EmbeddingVector>(const std::string&)>;

inline Embedder offline_embedder() {
  return [](const std::string& s) -> Result<EmbeddingVector> {
    return embed_offline(s);
  };
}

// Embedding through the chat gateway: the model is asked for a JSON array of
// numbers, which is L2-normalized on arrival.
inline Result<EmbeddingVector> embed_via_gateway(const std::string& sql_text,
                                                 llm::Gateway& gateway,
                                                 size_t dimension = 64) {
  llm::ChatRequest req;
  req.system_text =
      "You embed SQL statements as fixed-length numeric vectors. Reply with a "
      "JSON array of exactly " +
      std::to_string(dimension) +
      " numbers and nothing else. Similar statements must get nearby "
      "vectors.";
  req.user_text = sql_text;
  req.temperature = prompts::kJudgmentTemperature;
  req.response_schema_tag = llm::SchemaTag::free_text;
  auto response = gateway.complete(req);
  if (!response.is_ok()) return response.error();
  auto extracted = llm::detail::extract_json(response.value().text);
  if (!extracted || !extracted->is_array())
    return make_error(Errc::malformed_response,
                      "embedding reply is not a JSON array",
                      response.value().text);
  const Json parsed = *extracted;
  EmbeddingVector out;
  for (const Json& v : parsed) {
    if (!v.is_number())
      return make_error(Errc::malformed_response,
                        "embedding reply holds a non-number", parsed.dump());
    out.values.push_back(v.get<double>());
  }
  out.dimension = out.values.size();
  if (out.dimension != dimension)
    return make_error(Errc::malformed_response,
                      "embedding has dimension " +
                          std::to_string(out.dimension) + ", expected " +
                          std::to_string(dimension));
  double n = out.norm();
  if (n > 0.0)
    for (double& v : out.values) v /= n;
  return out;
}

inline Embedder gateway_embedder(llm::Gateway& gateway, size_t dimension = 64) {
  return [&gateway, dimension](const std::string& s) {
    return embed_via_gateway(s, gateway, dimension);
  };
}

inline double l2_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
  double s = 0.0;
  size_t n = std::max(a.values.size(), b.values.size());
  for (size_t i = 0; i < n; ++i) {
    double av = i < a.values.size() ? a.values[i] : 0.0;
    double bv = i < b.values.size() ? b.values[i] : 0.0;
    s += (av - bv) * (av - bv);
  }
  return std::sqrt(s);
}

struct DiversityResult {
  double mean_l2 = 0.0;
  double one_nn = 0.0;
  size_t used = 0;
  std::vector<size_t> excluded;  // indices of zero-norm embeddings
  std::vector<std::string> warnings;
};

inline Result<DiversityResult> diversity(const std::vector<std::string>& sqls,
                                         const Embedder& embedder) {
  DiversityResult out;
  std::vector<EmbeddingVector> vecs;
  for (size_t i = 0; i < sqls.size(); ++i) {
    auto v = embedder(sqls[i]);
    if (!v.is_ok()) return v.error();
    if (v.value().norm() == 0.0) {
      out.excluded.push_back(i);
      out.warnings.push_back("sample " + std::to_string(i) +
                             " embeds to the zero vector; excluded");
      continue;
    }
    vecs.push_back(std::move(v).value());
  }
  out.used = vecs.size();
  if (vecs.size() < 2)
    return make_error(Errc::too_few_samples,
                      "diversity needs at least 2 embeddable samples, got " +
                          std::to_string(vecs.size()));
  double pair_sum = 0.0;
  size_t pair_count = 0;
  double nn_sum = 0.0;
  for (size_t i = 0; i < vecs.size(); ++i) {
    double nearest = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < vecs.size(); ++j) {
      if (i == j) continue;
      double d = l2_distance(vecs[i], vecs[j]);
      nearest = std::min(nearest, d);
      if (j > i) {
        pair_sum += d;
        ++pair_count;
      }
    }
    nn_sum += nearest;
  }
  out.mean_l2 = pair_sum / static_cast<double>(pair_count);
  out.one_nn = nn_sum / static_cast<double>(vecs.size());
  return out;
}

// ---------------------------------------------------------------------------
// Contamination filter.
// ---------------------------------------------------------------------------

namespace detail {

inline std::unordered_set<uint64_t> ngram_set(const std::string& text,
                                              size_t n) {
  std::vector<std::string> tokens = word_tokens(text);
  std::unordered_set<uint64_t> grams;
  if (tokens.empty()) return grams;
  auto add = [&](size_t from, size_t count) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t k = 0; k < count; ++k) {
      h = fnv1a64(tokens[from + k], h);
      h = fnv1a64(std::string_view("\x1f", 1), h);
    }
    grams.insert(h);
  };
  if (tokens.size() < n) {
    add(0, tokens.size());
    return grams;
  }
  for (size_t i = 0; i + n <= tokens.size(); ++i) add(i, n);
  return grams;
}

inline double jaccard(const std::unordered_set<uint64_t>& a,
                      const std::unordered_set<uint64_t>& b) {
  if (a.empty() || b.empty()) return 0.0;
  size_t inter = 0;
  const auto& small = a.size() <= b.size() ? a : b;
  const auto& large = a.size() <= b.size() ? b : a;
  for (uint64_t h : small)
    if (large.count(h)) ++inter;
  size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace detail

struct FilterOptions {
  size_t ngram_n = 8;
  double threshold = 0.6;
};

struct Removal {
  size_t corpus_index = 0;
  std::string field;  // "question" or "sql"
  size_t eval_index = 0;
  double score = 0.0;
};

struct FilterResult {
  std::vector<size_t> kept;  // corpus indices, in original order
  std::vector<Removal> removed;
};

inline Result<FilterResult> contamination_filter(
    const std::vector<EvalInstance>& corpus,
    const std::vector<EvalInstance>& eval_set,
    const FilterOptions& opts = {}) {
  if (opts.ngram_n < 2)
    return make_error(Errc::config_invalid, "ngram_n must be at least 2");
  if (opts.threshold < 0.0 || opts.threshold > 1.0)
    return make_error(Errc::config_invalid,
                      "threshold must lie in [0, 1]");
  std::vector<std::unordered_set<uint64_t>> eval_q, eval_s;
  eval_q.reserve(eval_set.size());
  eval_s.reserve(eval_set.size());
  for (const auto& e : eval_set) {
    eval_q.push_back(detail::ngram_set(e.question, opts.ngram_n));
    eval_s.push_back(detail::ngram_set(e.sql, opts.ngram_n));
  }
  FilterResult out;
  for (size_t i = 0; i < corpus.size(); ++i) {
    auto q_grams = detail::ngram_set(corpus[i].question, opts.ngram_n);
    auto s_grams = detail::ngram_set(corpus[i].sql, opts.ngram_n);
    Removal best;
    bool hit = false;
    for (size_t j = 0; j < eval_set.size(); ++j) {
      double qs = detail::jaccard(q_grams, eval_q[j]);
      double ss = detail::jaccard(s_grams, eval_s[j]);
      if (qs > opts.threshold && (!hit || qs > best.score)) {
        best = {i, "question", j, qs};
        hit = true;
      }
      if (ss > opts.threshold && (!hit || ss > best.score)) {
        best = {i, "sql", j, ss};
        hit = true;
      }
    }
    if (hit)
      out.removed.push_back(best);
    else
      out.kept.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aggregate report.
// ---------------------------------------------------------------------------

struct CorpusReport {
  size_t n_samples = 0;

  bool ser_present = false;
  SerResult ser;

  bool sa_present = false;  // true when SA was requested and judged
  SaResult sa;
  bool sa_requested = false;

  HistogramResult histogram;

  bool diversity_present = false;
  DiversityResult div;
  std::string diversity_note;

  bool filter_present = false;
  FilterOptions filter_opts;
  size_t filter_input = 0;
  size_t filter_removed = 0;
};

inline Json report_to_json(const CorpusReport& r) {
  Json j;
  j["n_samples"] = r.n_samples;
  if (r.ser_present) {
    j["ser"]["value"] = r.ser.value;
    j["ser"]["executable"] = r.ser.executable;
    j["ser"]["total"] = r.ser.total;
  }
  j["sa"]["requested"] = r.sa_requested;
  j["sa"]["present"] = r.sa_present && r.sa.present;
  j["sa"]["subset_size"] = r.sa_present ? r.sa.subset_size : 0;
  if (r.sa_present && r.sa.present) {
    j["sa"]["value"] = r.sa.value;
    j["sa"]["consistent"] = r.sa.consistent;
  }
  Json hist;
  for (const auto& [name, count] : r.histogram.counts) hist[name] = count;
  hist["unparseable"] = r.histogram.unparseable;
  j["complexity_histogram"] = std::move(hist);
  if (r.diversity_present) {
    j["diversity"]["mean_l2"] = r.div.mean_l2;
    j["diversity"]["one_nn"] = r.div.one_nn;
    j["diversity"]["used"] = r.div.used;
  } else if (!r.diversity_note.empty()) {
    j["diversity"]["note"] = r.diversity_note;
  }
  if (r.filter_present) {
    j["filter"]["ngram_n"] = r.filter_opts.ngram_n;
    j["filter"]["threshold"] = r.filter_opts.threshold;
    j["filter"]["input"] = r.filter_input;
    j["filter"]["removed"] = r.filter_removed;
  }
  return j;
}

inline std::string render_report_text(const CorpusReport& r) {
  char buf[160];
  std::string out;
  out += "corpus report\n";
  out += "=============\n";
  std::snprintf(buf, sizeof(buf), "samples            %zu\n", r.n_samples);
  out += buf;
  if (r.ser_present) {
    std::snprintf(buf, sizeof(buf),
                  "execution rate     %.4f (%zu/%zu executable)\n",
                  r.ser.value, r.ser.executable, r.ser.total);
    out += buf;
  }
  if (r.sa_present && r.sa.present) {
    std::snprintf(buf, sizeof(buf),
                  "semantic alignment %.4f over %zu executable samples\n",
                  r.sa.value, r.sa.subset_size);
    out += buf;
  } else if (r.sa_requested) {
    out += "semantic alignment absent (judged subset size 0)\n";
  }
  out += "complexity\n";
  for (const auto& [name, count] : r.histogram.counts) {
    std::snprintf(buf, sizeof(buf), "  %-4s             %zu\n", name.c_str(),
                  count);
    out += buf;
  }
  if (r.histogram.unparseable > 0) {
    std::snprintf(buf, sizeof(buf), "  unparseable      %zu\n",
                  r.histogram.unparseable);
    out += buf;
  }
  if (r.diversity_present) {
    std::snprintf(buf, sizeof(buf),
                  "diversity          mean_l2 %.6f, one_nn %.6f (%zu used)\n",
                  r.div.mean_l2, r.div.one_nn, r.div.used);
    out += buf;
  } else if (!r.diversity_note.empty()) {
    out += "diversity          " + r.diversity_note + "\n";
  }
  if (r.filter_present) {
    std::snprintf(buf, sizeof(buf),
                  "filter             removed %zu of %zu (n=%zu, threshold "
                  "%.2f)\n",
                  r.filter_removed, r.filter_input, r.filter_opts.ngram_n,
                  r.filter_opts.threshold);
    out += buf;
  }
  return out;
}

}  // namespace sqlsynth::metrics
