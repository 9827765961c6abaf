#pragma once

// End-to-end orchestration: introspect -> build-kb -> plan -> generate ->
// refine -> filter -> evaluate -> export, with a persisted manifest,
// per-stage checkpoints, and per-sample spools for resumable runs.

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sqlsynth/db_introspect.hpp"
#include "sqlsynth/http_provider.hpp"
#include "sqlsynth/kb_builder.hpp"
#include "sqlsynth/knowledge_base.hpp"
#include "sqlsynth/llm_gateway.hpp"
#include "sqlsynth/metrics.hpp"
#include "sqlsynth/synthesis.hpp"
#include "sqlsynth/verification.hpp"

namespace sqlsynth::pipeline {

using db::Json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

struct ProviderSpec {
  std::string mode = "scripted";  // "scripted" | "http"
  std::string script_path;        // scripted mode
  std::string endpoint_url;       // http mode
  std::string model_id = "scripted-model";
  std::string api_key_env = "SQLSYNTH_API_KEY";
  int timeout_seconds = 60;
  int max_retries = 2;
  int concurrency = 4;
};

struct PipelineConfig {
  std::string db_path;
  std::string run_dir;
  std::uint64_t seed = 0;
  ProviderSpec provider;
  std::vector<std::string> domains = {"sales", "education"};
  std::vector<std::string> tasks = {"trend analysis", "ranking"};
  std::map<int, int> quotas;  // complexity level -> sample count
  int max_iterations = 3;
  int sample_rows_per_table = 20;
  int workers = 4;
  metrics::FilterOptions filter;
  std::vector<std::string> eval_set_paths;
  bool with_sa = false;
  std::string embedder = "offline";  // "offline" | "provider"
  int exec_timeout_ms = 5000;
};

inline Json provider_to_json(const ProviderSpec& p) {
  Json j;
  j["mode"] = p.mode;
  if (!p.script_path.empty()) j["script_path"] = p.script_path;
  if (!p.endpoint_url.empty()) j["endpoint_url"] = p.endpoint_url;
  j["model_id"] = p.model_id;
  j["api_key_env"] = p.api_key_env;
  j["timeout_seconds"] = p.timeout_seconds;
  j["max_retries"] = p.max_retries;
  j["concurrency"] = p.concurrency;
  return j;
}

inline Json config_to_json(const PipelineConfig& c) {
  Json j;
  j["db"] = c.db_path;
  j["run_dir"] = c.run_dir;
  j["seed"] = c.seed;
  j["provider"] = provider_to_json(c.provider);
  j["vocab"]["domains"] = c.domains;
  j["vocab"]["tasks"] = c.tasks;
  Json q;
  for (const auto& [level, count] : c.quotas)
    q[sql::level_name(level)] = count;
  j["quotas"] = std::move(q);
  j["max_iterations"] = c.max_iterations;
  j["sample_rows_per_table"] = c.sample_rows_per_table;
  j["workers"] = c.workers;
  j["filter"]["ngram_n"] = c.filter.ngram_n;
  j["filter"]["threshold"] = c.filter.threshold;
  j["filter"]["eval_sets"] = c.eval_set_paths;
  j["with_sa"] = c.with_sa;
  j["embedder"] = c.embedder;
  j["exec_timeout_ms"] = c.exec_timeout_ms;
  return j;
}

inline Result<PipelineConfig> parse_config(const Json& j) {
  PipelineConfig c;
  auto bad = [](const std::string& what) {
    return make_error(Errc::config_invalid, what);
  };
  if (!j.is_object()) return bad("config must be a JSON object");
  if (!j.contains("db") || !j["db"].is_string())
    return bad("config needs a \"db\" path");
  c.db_path = j["db"].get<std::string>();
  if (!j.contains("run_dir") || !j["run_dir"].is_string())
    return bad("config needs a \"run_dir\" path");
  c.run_dir = j["run_dir"].get<std::string>();
  if (j.contains("seed")) {
    if (!j["seed"].is_number())
      return bad("\"seed\" must be a number");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("provider")) {
    const Json& p = j["provider"];
    if (!p.is_object()) return bad("\"provider\" must be an object");
    if (p.contains("mode")) c.provider.mode = p["mode"].get<std::string>();
    if (c.provider.mode != "scripted" && c.provider.mode != "http")
      return bad("provider.mode must be \"scripted\" or \"http\"");
    if (p.contains("script_path"))
      c.provider.script_path = p["script_path"].get<std::string>();
    if (p.contains("endpoint_url"))
      c.provider.endpoint_url = p["endpoint_url"].get<std::string>();
    if (p.contains("model_id"))
      c.provider.model_id = p["model_id"].get<std::string>();
    if (p.contains("api_key_env"))
      c.provider.api_key_env = p["api_key_env"].get<std::string>();
    if (p.contains("timeout_seconds"))
      c.provider.timeout_seconds = p["timeout_seconds"].get<int>();
    if (p.contains("max_retries"))
      c.provider.max_retries = p["max_retries"].get<int>();
    if (p.contains("concurrency"))
      c.provider.concurrency = p["concurrency"].get<int>();
  }
  if (j.contains("vocab")) {
    const Json& v = j["vocab"];
    if (v.contains("domains"))
      c.domains = v["domains"].get<std::vector<std::string>>();
    if (v.contains("tasks"))
      c.tasks = v["tasks"].get<std::vector<std::string>>();
  }
  if (j.contains("quotas")) {
    if (!j["quotas"].is_object()) return bad("\"quotas\" must be an object");
    for (const auto& [key, value] : j["quotas"].items()) {
      int level = 0;
      if (key.size() == 2 && (key[0] == 'L' || key[0] == 'l') &&
          key[1] >= '1' && key[1] <= '4')
        level = key[1] - '0';
      else if (key.size() == 1 && key[0] >= '1' && key[0] <= '4')
        level = key[0] - '0';
      else
        return bad("quota key \"" + key + "\" is not a level L1..L4");
      if (!value.is_number_integer() || value.get<int>() < 0)
        return bad("quota for " + key + " must be a nonnegative integer");
      c.quotas[level] = value.get<int>();
    }
  }
  int total_quota = 0;
  for (const auto& [level, count] : c.quotas) total_quota += count;
  if (total_quota <= 0)
    return bad("quotas must request at least one sample");
  if (j.contains("max_iterations")) {
    c.max_iterations = j["max_iterations"].get<int>();
    if (c.max_iterations < 1) return bad("max_iterations must be >= 1");
  }
  if (j.contains("sample_rows_per_table")) {
    c.sample_rows_per_table = j["sample_rows_per_table"].get<int>();
    if (c.sample_rows_per_table < 1)
      return bad("sample_rows_per_table must be >= 1");
  }
  if (j.contains("workers")) {
    c.workers = j["workers"].get<int>();
    if (c.workers < 1) return bad("workers must be >= 1");
  }
  if (j.contains("filter")) {
    const Json& f = j["filter"];
    if (f.contains("ngram_n"))
      c.filter.ngram_n = f["ngram_n"].get<size_t>();
    if (f.contains("threshold"))
      c.filter.threshold = f["threshold"].get<double>();
    if (f.contains("eval_sets"))
      c.eval_set_paths = f["eval_sets"].get<std::vector<std::string>>();
    if (c.filter.ngram_n < 2) return bad("filter.ngram_n must be >= 2");
    if (c.filter.threshold < 0.0 || c.filter.threshold > 1.0)
      return bad("filter.threshold must lie in [0, 1]");
  }
  if (j.contains("with_sa")) c.with_sa = j["with_sa"].get<bool>();
  if (j.contains("embedder")) {
    c.embedder = j["embedder"].get<std::string>();
    if (c.embedder != "offline" && c.embedder != "provider")
      return bad("embedder must be \"offline\" or \"provider\"");
  }
  if (j.contains("exec_timeout_ms")) {
    c.exec_timeout_ms = j["exec_timeout_ms"].get<int>();
    if (c.exec_timeout_ms < 1) return bad("exec_timeout_ms must be >= 1");
  }
  return c;
}

inline Result<PipelineConfig> load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    return make_error(Errc::config_invalid,
                      "cannot open config file " + path);
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded())
    return make_error(Errc::config_invalid,
                      "config file " + path + " is not valid JSON");
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Provider construction.
// ---------------------------------------------------------------------------

inline llm::ProviderConfig to_provider_config(const ProviderSpec& spec) {
  llm::ProviderConfig pc;
  pc.endpoint_url = spec.endpoint_url;
  pc.model_id = spec.model_id;
  pc.api_key_source = spec.api_key_env;
  pc.timeout_seconds = spec.timeout_seconds;
  pc.max_retries = spec.max_retries;
  pc.concurrency_cap = spec.concurrency;
  return pc;
}

inline Result<std::shared_ptr<llm::Provider>> make_provider(
    const ProviderSpec& spec) {
  if (spec.mode == "scripted") {
    auto provider = std::make_shared<llm::ScriptedProvider>(spec.model_id);
    if (spec.script_path.empty())
      return make_error(Errc::config_invalid,
                        "scripted provider needs provider.script_path");
    if (Status st = provider->load_file(spec.script_path); !st)
      return st.error();
    return std::static_pointer_cast<llm::Provider>(provider);
  }
  if (spec.mode == "http") {
    if (spec.endpoint_url.empty())
      return make_error(Errc::config_invalid,
                        "http provider needs provider.endpoint_url");
    auto provider =
        std::make_shared<llm::HttpProvider>(to_provider_config(spec));
    return std::static_pointer_cast<llm::Provider>(provider);
  }
  return make_error(Errc::config_invalid,
                    "unknown provider mode \"" + spec.mode + "\"");
}

// ---------------------------------------------------------------------------
// Run manifest.
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& stage_order() {
  static const std::vector<std::string> order = {
      "introspect", "build-kb", "plan",     "generate",
      "refine",     "filter",   "evaluate", "export"};
  return order;
}

struct StageInfo {
  bool complete = false;
  std::string fingerprint;
  std::string error;
};

struct RunManifest {
  std::string run_id;
  Json config;
  std::map<std::string, StageInfo> stages;
  std::uint64_t drafted = 0;
  std::uint64_t verified = 0;
  std::uint64_t rejected = 0;
  std::uint64_t filtered = 0;
  std::uint64_t generation_failed = 0;
  std::string kb_fingerprint;
  std::uint64_t export_count = 0;

  bool stage_complete(const std::string& name) const {
    auto it = stages.find(name);
    return it != stages.end() && it->second.complete;
  }
};

inline Json manifest_to_json(const RunManifest& m) {
  Json j;
  j["run_id"] = m.run_id;
  j["config"] = m.config;
  Json stages;
  for (const auto& name : stage_order()) {
    auto it = m.stages.find(name);
    Json s;
    s["complete"] = it != m.stages.end() && it->second.complete;
    if (it != m.stages.end() && !it->second.fingerprint.empty())
      s["fingerprint"] = it->second.fingerprint;
    if (it != m.stages.end() && !it->second.error.empty())
      s["error"] = it->second.error;
    stages[name] = std::move(s);
  }
  j["stages"] = std::move(stages);
  j["counters"]["drafted"] = m.drafted;
  j["counters"]["verified"] = m.verified;
  j["counters"]["rejected"] = m.rejected;
  j["counters"]["filtered"] = m.filtered;
  j["counters"]["generation_failed"] = m.generation_failed;
  j["kb_fingerprint"] = m.kb_fingerprint;
  j["export_count"] = m.export_count;
  return j;
}

inline Result<RunManifest> manifest_from_json(const Json& j) {
  if (!j.is_object())
    return make_error(Errc::validation_failure,
                      "manifest must be a JSON object");
  RunManifest m;
  if (j.contains("run_id")) m.run_id = j["run_id"].get<std::string>();
  if (j.contains("config")) m.config = j["config"];
  if (j.contains("stages") && j["stages"].is_object()) {
    for (const auto& [name, s] : j["stages"].items()) {
      StageInfo info;
      if (s.contains("complete")) info.complete = s["complete"].get<bool>();
      if (s.contains("fingerprint"))
        info.fingerprint = s["fingerprint"].get<std::string>();
      if (s.contains("error")) info.error = s["error"].get<std::string>();
      m.stages[name] = std::move(info);
    }
  }
  if (j.contains("counters")) {
    const Json& c = j["counters"];
    auto get = [&](const char* key) -> std::uint64_t {
      return c.contains(key) ? c[key].get<std::uint64_t>() : 0;
    };
    m.drafted = get("drafted");
    m.verified = get("verified");
    m.rejected = get("rejected");
    m.filtered = get("filtered");
    m.generation_failed = get("generation_failed");
  }
  if (j.contains("kb_fingerprint"))
    m.kb_fingerprint = j["kb_fingerprint"].get<std::string>();
  if (j.contains("export_count"))
    m.export_count = j["export_count"].get<std::uint64_t>();
  return m;
}

// ---------------------------------------------------------------------------
// Small file helpers.
// ---------------------------------------------------------------------------

namespace detail {

inline Status write_text_atomic(const fs::path& path,
                                const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      return make_error(Errc::io_failure,
                        "cannot write " + tmp.string());
    out << content;
    if (!out)
      return make_error(Errc::io_failure,
                        "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec)
    return make_error(Errc::io_failure,
                      "cannot replace " + path.string() + ": " + ec.message());
  return Status::ok_status();
}

inline std::string fingerprint_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "";
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  return hex64(fnv1a64(content));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// The runner.
// ---------------------------------------------------------------------------

class Runner {
 public:
  Runner(PipelineConfig config, llm::Gateway& gateway)
      : cfg_(std::move(config)), gateway_(gateway) {}

  Result<RunManifest> run() {
    if (Status st = prepare(); !st) return st.error();
    for (const auto& name : stage_order()) {
      if (manifest_.stage_complete(name)) continue;
      Status st = run_stage(name);
      if (!st) {
        manifest_.stages[name].error = st.error().message;
        (void)save_manifest();
        return make_error(Errc::stage_failed,
                          "stage " + name + " failed: " + st.error().message,
                          st.error().detail);
      }
      manifest_.stages[name].complete = true;
      manifest_.stages[name].error.clear();
      if (Status saved = save_manifest(); !saved) return saved.error();
    }
    return manifest_;
  }

  const RunManifest& manifest() const { return manifest_; }

 private:
  fs::path dir(const char* leaf) const {
    return fs::path(cfg_.run_dir) / leaf;
  }

  Status prepare() {
    std::error_code ec;
    fs::create_directories(cfg_.run_dir, ec);
    if (ec)
      return make_error(Errc::io_failure, "cannot create run_dir " +
                                              cfg_.run_dir + ": " +
                                              ec.message());
    Json snapshot = config_to_json(cfg_);
    fs::path manifest_path = dir("manifest.json");
    if (fs::exists(manifest_path)) {
      std::ifstream in(manifest_path);
      Json j = Json::parse(in, nullptr, false);
      if (j.is_discarded())
        return make_error(Errc::validation_failure,
                          "existing manifest is not valid JSON");
      auto loaded = manifest_from_json(j);
      if (!loaded.is_ok()) return loaded.error();
      manifest_ = std::move(loaded).value();
      if (manifest_.config != snapshot)
        return make_error(Errc::config_invalid,
                          "run_dir holds a manifest for a different config; "
                          "refusing to resume");
      return Status::ok_status();
    }
    manifest_ = RunManifest{};
    manifest_.run_id = "run-" + hex64(fnv1a64(snapshot.dump()));
    manifest_.config = std::move(snapshot);
    return save_manifest();
  }

  Status save_manifest() {
    return detail::write_text_atomic(dir("manifest.json"),
                                     manifest_to_json(manifest_).dump(2) +
                                         "\n");
  }

  Status run_stage(const std::string& name) {
    if (name == "introspect") return stage_introspect();
    if (name == "build-kb") return stage_build_kb();
    if (name == "plan") return stage_plan();
    if (name == "generate") return stage_generate();
    if (name == "refine") return stage_refine();
    if (name == "filter") return stage_filter();
    if (name == "evaluate") return stage_evaluate();
    if (name == "export") return stage_export();
    return make_error(Errc::stage_failed, "unknown stage " + name);
  }

  // Schema and row sample are cheap and deterministic, so they are recomputed
  // on every run; the stage artifact exists for inspection.
  Status ensure_schema() {
    if (schema_ready_) return Status::ok_status();
    auto schema = db::introspect(cfg_.db_path);
    if (!schema.is_ok()) return schema.error();
    schema_ = std::move(schema).value();
    auto sample = db::sample_instances(schema_, cfg_.db_path,
                                       cfg_.sample_rows_per_table,
                                       static_cast<std::int64_t>(cfg_.seed));
    if (!sample.is_ok()) return sample.error();
    sample_ = std::move(sample).value();
    schema_ready_ = true;
    return Status::ok_status();
  }

  Status stage_introspect() {
    if (Status st = ensure_schema(); !st) return st;
    Json j = db::schema_to_json(schema_);
    if (Status st = detail::write_text_atomic(dir("schema.json"),
                                              j.dump(2) + "\n");
        !st)
      return st;
    manifest_.stages["introspect"].fingerprint = hex64(fnv1a64(j.dump()));
    return Status::ok_status();
  }

  Status ensure_kb() {
    if (kb_ready_) return Status::ok_status();
    kb::KbStore store(dir("kb"));
    auto loaded = store.load();
    if (!loaded.is_ok()) return loaded.error();
    kb_ = std::move(loaded).value();
    if (!kb_.complete())
      return make_error(Errc::stage_failed,
                        "knowledge base on disk is incomplete");
    kb_ready_ = true;
    return Status::ok_status();
  }

  std::string kb_fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (int stage = 1; stage <= 6; ++stage)
      h = fnv1a64(kb::layer_fingerprint(kb_, stage), h);
    return hex64(h);
  }

  Status stage_build_kb() {
    if (Status st = ensure_schema(); !st) return st;
    kb::KbStore store(dir("kb"));
    kb::KnowledgeBase resume;
    const kb::KnowledgeBase* resume_ptr = nullptr;
    if (store.exists()) {
      auto partial = store.load();
      if (partial.is_ok()) {
        resume = std::move(partial).value();
        resume_ptr = &resume;
      }
    }
    auto built = kb::build(schema_, sample_, gateway_, &store, resume_ptr);
    if (!built.is_ok()) return built.error();
    kb_ = std::move(built).value().kb;
    kb_ready_ = true;
    manifest_.kb_fingerprint = kb_fingerprint();
    manifest_.stages["build-kb"].fingerprint = manifest_.kb_fingerprint;
    return Status::ok_status();
  }

  Status stage_plan() {
    auto specs = synth::plan_batch(cfg_.domains, cfg_.tasks, cfg_.quotas,
                                   cfg_.seed);
    if (!specs.is_ok()) return specs.error();
    std::string content;
    for (size_t i = 0; i < specs.value().size(); ++i) {
      Json line;
      line["sample_id"] = synth::sample_id_for_index(i);
      line["spec"] = synth::spec_to_json(specs.value()[i]);
      content += line.dump() + "\n";
    }
    if (Status st = detail::write_text_atomic(dir("plan.jsonl"), content);
        !st)
      return st;
    manifest_.stages["plan"].fingerprint =
        detail::fingerprint_file(dir("plan.jsonl"));
    return Status::ok_status();
  }

  struct PlanEntry {
    std::string sample_id;
    synth::GenerationSpec spec;
  };

  Result<std::vector<PlanEntry>> load_plan() {
    auto lines = synth::read_jsonl(dir("plan.jsonl"));
    if (!lines.is_ok()) return lines.error();
    std::vector<PlanEntry> out;
    for (const Json& j : lines.value()) {
      PlanEntry e;
      if (!j.contains("sample_id") || !j.contains("spec"))
        return make_error(Errc::validation_failure,
                          "plan line lacks sample_id or spec", j.dump());
      e.sample_id = j["sample_id"].get<std::string>();
      e.spec = synth::spec_from_json(j["spec"]);
      out.push_back(std::move(e));
    }
    return out;
  }

  Status stage_generate() {
    if (Status st = ensure_schema(); !st) return st;
    if (Status st = ensure_kb(); !st) return st;
    auto plan = load_plan();
    if (!plan.is_ok()) return plan.error();

    std::set<std::string> done;
    if (fs::exists(dir("drafts.jsonl"))) {
      auto existing = synth::read_triple_spool(dir("drafts.jsonl"));
      if (!existing.is_ok()) return existing.error();
      for (const auto& t : existing.value()) done.insert(t.sample_id);
    }
    if (fs::exists(dir("generation_failures.jsonl"))) {
      auto failures = synth::read_jsonl(dir("generation_failures.jsonl"));
      if (!failures.is_ok()) return failures.error();
      for (const Json& j : failures.value())
        if (j.contains("sample_id"))
          done.insert(j["sample_id"].get<std::string>());
    }

    for (const auto& entry : plan.value()) {
      if (done.count(entry.sample_id)) continue;
      auto question = synth::generate_question(entry.spec, kb_, schema_,
                                               gateway_);
      Result<std::string> sql =
          question.is_ok()
              ? synth::generate_sql(question.value().question,
                                    question.value().trace, entry.spec, kb_,
                                    gateway_)
              : Result<std::string>(question.error());
      if (!question.is_ok() || !sql.is_ok()) {
        const Error& err = question.is_ok() ? sql.error() : question.error();
        if (err.code == Errc::script_miss || err.code == Errc::auth_failure ||
            err.code == Errc::config_invalid)
          return err;  // configuration problems, not sample problems
        Json j;
        j["sample_id"] = entry.sample_id;
        j["error"] = errc_name(err.code);
        j["message"] = err.message;
        if (Status st = synth::append_jsonl(dir("generation_failures.jsonl"),
                                            j);
            !st)
          return st;
        continue;
      }
      synth::Triple t;
      t.question = question.value().question;
      t.trace = question.value().trace;
      t.sql = sql.value();
      t.status = synth::TripleStatus::draft;
      t.sample_id = entry.sample_id;
      t.spec = entry.spec;
      if (Status st = synth::append_jsonl(dir("drafts.jsonl"),
                                          synth::triple_to_spool_json(t));
          !st)
        return st;
    }

    std::uint64_t drafted = 0, failed = 0;
    if (fs::exists(dir("drafts.jsonl"))) {
      auto all = synth::read_jsonl(dir("drafts.jsonl"));
      if (!all.is_ok()) return all.error();
      drafted = all.value().size();
    }
    if (fs::exists(dir("generation_failures.jsonl"))) {
      auto all = synth::read_jsonl(dir("generation_failures.jsonl"));
      if (!all.is_ok()) return all.error();
      failed = all.value().size();
    }
    manifest_.drafted = drafted;
    manifest_.generation_failed = failed;
    manifest_.stages["generate"].fingerprint =
        detail::fingerprint_file(dir("drafts.jsonl"));
    return Status::ok_status();
  }

  Result<std::vector<synth::Triple>> load_spool_sorted(const fs::path& path) {
    std::vector<synth::Triple> out;
    if (!fs::exists(path)) return out;
    auto spool = synth::read_triple_spool(path);
    if (!spool.is_ok()) return spool.error();
    out = std::move(spool).value();
    std::sort(out.begin(), out.end(),
              [](const synth::Triple& a, const synth::Triple& b) {
                return a.sample_id < b.sample_id;
              });
    return out;
  }

  Status stage_refine() {
    if (Status st = ensure_schema(); !st) return st;
    if (Status st = ensure_kb(); !st) return st;
    auto drafts = load_spool_sorted(dir("drafts.jsonl"));
    if (!drafts.is_ok()) return drafts.error();

    std::set<std::string> done;
    for (const char* leaf : {"refined.jsonl", "rejected.jsonl"}) {
      if (!fs::exists(dir(leaf))) continue;
      auto existing = synth::read_triple_spool(dir(leaf));
      if (!existing.is_ok()) return existing.error();
      for (const auto& t : existing.value()) done.insert(t.sample_id);
    }

    for (const auto& draft : drafts.value()) {
      if (done.count(draft.sample_id)) continue;
      std::vector<Json> audit_records;
      verify::RefineOptions opts;
      opts.max_iterations = cfg_.max_iterations;
      opts.diagnose.timeout_ms = cfg_.exec_timeout_ms;
      opts.audit = [&audit_records](const Json& j) {
        audit_records.push_back(j);
      };
      auto outcome = verify::refine(draft, kb_, schema_, cfg_.db_path,
                                    gateway_, opts);
      if (!outcome.is_ok()) return outcome.error();
      for (const Json& j : audit_records)
        if (Status st = synth::append_jsonl(dir("audit.jsonl"), j); !st)
          return st;
      synth::Triple result = outcome.value().triple;
      result.terminal = outcome.value().terminal;
      auto facts = sql::extract_facts(result.sql, &schema_);
      if (facts.is_ok())
        result.classified_level = sql::classify_complexity(facts.value()).level;
      const char* leaf = outcome.value().terminal == "clean"
                             ? "refined.jsonl"
                             : "rejected.jsonl";
      if (Status st = synth::append_jsonl(
              dir(leaf), synth::triple_to_spool_json(result));
          !st)
        return st;
    }

    auto verified = load_spool_sorted(dir("refined.jsonl"));
    if (!verified.is_ok()) return verified.error();
    auto rejected = load_spool_sorted(dir("rejected.jsonl"));
    if (!rejected.is_ok()) return rejected.error();
    manifest_.verified = verified.value().size();
    manifest_.rejected = rejected.value().size();
    manifest_.stages["refine"].fingerprint =
        detail::fingerprint_file(dir("refined.jsonl"));
    return Status::ok_status();
  }

  Status stage_filter() {
    auto verified = load_spool_sorted(dir("refined.jsonl"));
    if (!verified.is_ok()) return verified.error();

    std::vector<metrics::EvalInstance> corpus;
    for (const auto& t : verified.value())
      corpus.push_back({t.question, t.sql});
    std::vector<metrics::EvalInstance> eval_set;
    for (const auto& path : cfg_.eval_set_paths) {
      auto loaded = metrics::load_eval_set(path);
      if (!loaded.is_ok()) return loaded.error();
      for (auto& e : loaded.value()) eval_set.push_back(std::move(e));
    }

    std::string kept_content, removed_content;
    std::uint64_t removed_count = 0;
    if (eval_set.empty()) {
      for (const auto& t : verified.value())
        kept_content += synth::triple_to_spool_json(t).dump() + "\n";
    } else {
      auto filtered =
          metrics::contamination_filter(corpus, eval_set, cfg_.filter);
      if (!filtered.is_ok()) return filtered.error();
      for (size_t idx : filtered.value().kept)
        kept_content +=
            synth::triple_to_spool_json(verified.value()[idx]).dump() + "\n";
      for (const auto& r : filtered.value().removed) {
        Json j = synth::triple_to_spool_json(verified.value()[r.corpus_index]);
        j["filter"]["field"] = r.field;
        j["filter"]["score"] = r.score;
        j["filter"]["eval_index"] = r.eval_index;
        j["filter"]["eval_question"] = eval_set[r.eval_index].question;
        j["filter"]["eval_sql"] = eval_set[r.eval_index].sql;
        removed_content += j.dump() + "\n";
        ++removed_count;
      }
    }
    if (Status st = detail::write_text_atomic(dir("kept.jsonl"),
                                              kept_content);
        !st)
      return st;
    if (Status st = detail::write_text_atomic(dir("filtered_out.jsonl"),
                                              removed_content);
        !st)
      return st;
    manifest_.filtered = removed_count;
    manifest_.stages["filter"].fingerprint =
        detail::fingerprint_file(dir("kept.jsonl"));
    return Status::ok_status();
  }

  Status stage_evaluate() {
    if (Status st = ensure_schema(); !st) return st;
    auto kept = load_spool_sorted(dir("kept.jsonl"));
    if (!kept.is_ok()) return kept.error();

    metrics::CorpusReport report;
    report.n_samples = kept.value().size();
    std::vector<std::string> sqls;
    for (const auto& t : kept.value()) sqls.push_back(t.sql);

    if (!sqls.empty()) {
      metrics::ExecOptions exec;
      exec.timeout_ms = cfg_.exec_timeout_ms;
      auto ser = metrics::compute_ser(sqls, cfg_.db_path, exec);
      if (!ser.is_ok()) return ser.error();
      report.ser = std::move(ser).value();
      report.ser_present = true;
    }

    report.sa_requested = cfg_.with_sa;
    if (cfg_.with_sa && report.ser_present) {
      std::vector<metrics::EvalInstance> corpus;
      std::vector<bool> executable;
      for (size_t i = 0; i < kept.value().size(); ++i) {
        corpus.push_back({kept.value()[i].question, kept.value()[i].sql});
        executable.push_back(report.ser.samples[i].executable);
      }
      auto sa = metrics::judge_sa(corpus, executable,
                                  db::schema_to_ddl_text(schema_), gateway_);
      if (!sa.is_ok()) return sa.error();
      report.sa = std::move(sa).value();
      report.sa_present = true;
    }

    report.histogram = metrics::complexity_histogram(sqls, &schema_);

    metrics::Embedder embedder =
        cfg_.embedder == "provider" ? metrics::gateway_embedder(gateway_)
                                    : metrics::offline_embedder();
    auto div = metrics::diversity(sqls, embedder);
    if (div.is_ok()) {
      report.div = std::move(div).value();
      report.diversity_present = true;
    } else if (div.error().code == Errc::too_few_samples) {
      report.diversity_note = div.error().message;
    } else {
      return div.error();
    }

    report.filter_present = true;
    report.filter_opts = cfg_.filter;
    report.filter_input = manifest_.verified;
    report.filter_removed = manifest_.filtered;

    if (Status st = detail::write_text_atomic(
            dir("report.json"),
            metrics::report_to_json(report).dump(2) + "\n");
        !st)
      return st;
    if (Status st = detail::write_text_atomic(
            dir("report.txt"), metrics::render_report_text(report));
        !st)
      return st;
    manifest_.stages["evaluate"].fingerprint =
        detail::fingerprint_file(dir("report.json"));
    return Status::ok_status();
  }

  Status stage_export() {
    auto kept = load_spool_sorted(dir("kept.jsonl"));
    if (!kept.is_ok()) return kept.error();
    std::string content;
    std::uint64_t count = 0;
    for (const auto& t : kept.value()) {
      if (t.status != synth::TripleStatus::verified) continue;
      content += synth::triple_to_export_json(t).dump() + "\n";
      ++count;
    }
    if (Status st = detail::write_text_atomic(dir("export.jsonl"), content);
        !st)
      return st;
    manifest_.export_count = count;
    manifest_.stages["export"].fingerprint =
        detail::fingerprint_file(dir("export.jsonl"));
    return Status::ok_status();
  }

  PipelineConfig cfg_;
  llm::Gateway& gateway_;
  RunManifest manifest_;
  db::DatabaseSchema schema_;
  db::InstanceSample sample_;
  bool schema_ready_ = false;
  kb::KnowledgeBase kb_;
  bool kb_ready_ = false;
};

inline Result<RunManifest> run_pipeline(const PipelineConfig& config,
                                        llm::Gateway& gateway) {
  Runner runner(config, gateway);
  return runner.run();
}

}  // namespace sqlsynth::pipeline
