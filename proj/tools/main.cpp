// Command-line front end: per-stage subcommands plus the all-in-one pipeline.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sqlsynth/pipeline.hpp"

namespace {

using namespace sqlsynth;
using db::Json;

int fail(const Error& e) {
  std::cerr << "error: " << errc_name(e.code) << ": " << e.message << "\n";
  if (!e.detail.empty()) std::cerr << "  " << e.detail << "\n";
  return e.code == Errc::config_invalid ? 2 : 1;
}

struct ProviderCli {
  std::string mode = "scripted";
  std::string script;
  std::string endpoint;
  std::string model = "scripted-model";
  std::string api_key_env = "SQLSYNTH_API_KEY";
  int timeout_seconds = 60;
  int retries = 2;
  int concurrency = 4;

  pipeline::ProviderSpec spec() const {
    pipeline::ProviderSpec s;
    s.mode = mode;
    s.script_path = script;
    s.endpoint_url = endpoint;
    s.model_id = model;
    s.api_key_env = api_key_env;
    s.timeout_seconds = timeout_seconds;
    s.max_retries = retries;
    s.concurrency = concurrency;
    return s;
  }
};

void add_provider_flags(CLI::App* cmd, ProviderCli& p) {
  cmd->add_option("--provider", p.mode, "Provider mode")
      ->check(CLI::IsMember({"scripted", "http"}));
  cmd->add_option("--script", p.script, "Scripted provider response file");
  cmd->add_option("--endpoint", p.endpoint,
                  "OpenAI-compatible chat completions URL");
  cmd->add_option("--model", p.model, "Model identifier");
  cmd->add_option("--api-key-env", p.api_key_env,
                  "Name of the environment variable holding the API key");
  cmd->add_option("--timeout", p.timeout_seconds, "Request timeout, seconds");
  cmd->add_option("--retries", p.retries, "Retry budget for transient errors");
  cmd->add_option("--concurrency", p.concurrency,
                  "Maximum in-flight requests");
}

Result<std::unique_ptr<llm::Gateway>> make_gateway(const ProviderCli& p) {
  auto spec = p.spec();
  auto provider = pipeline::make_provider(spec);
  if (!provider.is_ok()) return provider.error();
  return std::make_unique<llm::Gateway>(provider.value(),
                                        pipeline::to_provider_config(spec));
}

Status write_file(const std::string& path, const std::string& content) {
  return pipeline::detail::write_text_atomic(path, content);
}

// ---------------------------------------------------------------------------

int cmd_introspect(const std::string& db_path, const std::string& json_out,
                   bool show_sample, int sample_rows, std::uint64_t seed) {
  auto schema = db::introspect(db_path);
  if (!schema.is_ok()) return fail(schema.error());
  std::cout << db::schema_to_ddl_text(schema.value());
  if (show_sample) {
    auto sample = db::sample_instances(schema.value(), db_path, sample_rows,
                                       static_cast<std::int64_t>(seed));
    if (!sample.is_ok()) return fail(sample.error());
    std::cout << "\n" << db::sample_to_text(sample.value(), sample_rows);
  }
  if (!json_out.empty()) {
    Status st = write_file(json_out,
                           db::schema_to_json(schema.value()).dump(2) + "\n");
    if (!st) return fail(st.error());
  }
  for (const auto& w : schema.value().warnings)
    std::cerr << "warning: " << w << "\n";
  return 0;
}

int cmd_build_kb(const std::string& db_path, const std::string& kb_dir,
                 const ProviderCli& provider, int sample_rows,
                 std::uint64_t seed) {
  auto schema = db::introspect(db_path);
  if (!schema.is_ok()) return fail(schema.error());
  auto sample = db::sample_instances(schema.value(), db_path, sample_rows,
                                     static_cast<std::int64_t>(seed));
  if (!sample.is_ok()) return fail(sample.error());
  auto gateway = make_gateway(provider);
  if (!gateway.is_ok()) return fail(gateway.error());

  kb::KbStore store(kb_dir);
  kb::KnowledgeBase resume;
  const kb::KnowledgeBase* resume_ptr = nullptr;
  if (store.exists()) {
    auto partial = store.load();
    if (partial.is_ok()) {
      resume = std::move(partial).value();
      resume_ptr = &resume;
    }
  }
  auto built = kb::build(schema.value(), sample.value(), *gateway.value(),
                         &store, resume_ptr);
  if (!built.is_ok()) return fail(built.error());
  for (const auto& line : built.value().log) std::cout << line << "\n";
  std::cout << "knowledge base written to " << kb_dir << " ("
            << built.value().stages_run << " stages run, "
            << built.value().stages_skipped << " reused)\n";
  return 0;
}

int cmd_plan(const std::string& out, const std::vector<std::string>& domains,
             const std::vector<std::string>& tasks,
             const std::vector<std::string>& quota_args, std::uint64_t seed) {
  std::map<int, int> quotas;
  for (const auto& arg : quota_args) {
    std::stringstream ss(arg);
    std::string piece;
    while (std::getline(ss, piece, ',')) {
      size_t eq = piece.find('=');
      std::string key = std::string(trim(piece.substr(0, eq)));
      if (eq == std::string::npos || key.size() != 2 ||
          (key[0] != 'L' && key[0] != 'l') || key[1] < '1' || key[1] > '4')
        return fail(make_error(Errc::config_invalid,
                               "quota \"" + piece +
                                   "\" is not of the form L1..L4=N"));
      int count = 0;
      try {
        count = std::stoi(piece.substr(eq + 1));
      } catch (...) {
        return fail(make_error(Errc::config_invalid,
                               "quota \"" + piece + "\" has a bad count"));
      }
      quotas[key[1] - '0'] = count;
    }
  }
  auto specs = synth::plan_batch(domains, tasks, quotas, seed);
  if (!specs.is_ok()) return fail(specs.error());
  std::string content;
  for (size_t i = 0; i < specs.value().size(); ++i) {
    Json line;
    line["sample_id"] = synth::sample_id_for_index(i);
    line["spec"] = synth::spec_to_json(specs.value()[i]);
    content += line.dump() + "\n";
  }
  if (Status st = write_file(out, content); !st) return fail(st.error());
  std::cout << "planned " << specs.value().size() << " samples -> " << out
            << "\n";
  return 0;
}

Result<kb::KnowledgeBase> load_complete_kb(const std::string& kb_dir) {
  kb::KbStore store(kb_dir);
  auto loaded = store.load();
  if (!loaded.is_ok()) return loaded.error();
  if (!loaded.value().complete())
    return make_error(Errc::missing_prior_layer,
                      "knowledge base at " + kb_dir + " is incomplete");
  return loaded;
}

int cmd_generate(const std::string& db_path, const std::string& kb_dir,
                 const std::string& plan_path, const std::string& out,
                 const std::string& failures_path,
                 const ProviderCli& provider) {
  auto schema = db::introspect(db_path);
  if (!schema.is_ok()) return fail(schema.error());
  auto k = load_complete_kb(kb_dir);
  if (!k.is_ok()) return fail(k.error());
  auto gateway = make_gateway(provider);
  if (!gateway.is_ok()) return fail(gateway.error());

  auto plan_lines = synth::read_jsonl(plan_path);
  if (!plan_lines.is_ok()) return fail(plan_lines.error());

  std::set<std::string> done;
  if (std::filesystem::exists(out)) {
    auto existing = synth::read_triple_spool(out);
    if (!existing.is_ok()) return fail(existing.error());
    for (const auto& t : existing.value()) done.insert(t.sample_id);
  }

  size_t produced = 0, failed = 0;
  for (const Json& line : plan_lines.value()) {
    if (!line.contains("sample_id") || !line.contains("spec"))
      return fail(make_error(Errc::validation_failure,
                             "plan line lacks sample_id or spec",
                             line.dump()));
    std::string sample_id = line["sample_id"].get<std::string>();
    if (done.count(sample_id)) continue;
    synth::GenerationSpec spec = synth::spec_from_json(line["spec"]);
    auto question = synth::generate_question(spec, k.value(), schema.value(),
                                             *gateway.value());
    Result<std::string> sql =
        question.is_ok()
            ? synth::generate_sql(question.value().question,
                                  question.value().trace, spec, k.value(),
                                  *gateway.value())
            : Result<std::string>(question.error());
    if (!question.is_ok() || !sql.is_ok()) {
      const Error& err = question.is_ok() ? sql.error() : question.error();
      if (err.code == Errc::script_miss || err.code == Errc::auth_failure ||
          err.code == Errc::config_invalid)
        return fail(err);
      Json j;
      j["sample_id"] = sample_id;
      j["error"] = errc_name(err.code);
      j["message"] = err.message;
      if (Status st = synth::append_jsonl(
              failures_path.empty() ? out + ".failures" : failures_path, j);
          !st)
        return fail(st.error());
      ++failed;
      continue;
    }
    synth::Triple t;
    t.question = question.value().question;
    t.trace = question.value().trace;
    t.sql = sql.value();
    t.status = synth::TripleStatus::draft;
    t.sample_id = sample_id;
    t.spec = spec;
    if (Status st = synth::append_jsonl(out, synth::triple_to_spool_json(t));
        !st)
      return fail(st.error());
    ++produced;
  }
  std::cout << "drafted " << produced << " samples";
  if (failed > 0) std::cout << " (" << failed << " failed)";
  std::cout << " -> " << out << "\n";
  return 0;
}

int cmd_refine(const std::string& db_path, const std::string& kb_dir,
               const std::string& in, const std::string& verified_out,
               const std::string& rejected_out, const std::string& audit_out,
               int max_iterations, int exec_timeout_ms,
               const ProviderCli& provider) {
  auto schema = db::introspect(db_path);
  if (!schema.is_ok()) return fail(schema.error());
  auto k = load_complete_kb(kb_dir);
  if (!k.is_ok()) return fail(k.error());
  auto gateway = make_gateway(provider);
  if (!gateway.is_ok()) return fail(gateway.error());

  auto drafts = synth::read_triple_spool(in);
  if (!drafts.is_ok()) return fail(drafts.error());
  std::sort(drafts.value().begin(), drafts.value().end(),
            [](const synth::Triple& a, const synth::Triple& b) {
              return a.sample_id < b.sample_id;
            });

  std::set<std::string> done;
  for (const std::string& path : {verified_out, rejected_out}) {
    if (!std::filesystem::exists(path)) continue;
    auto existing = synth::read_triple_spool(path);
    if (!existing.is_ok()) return fail(existing.error());
    for (const auto& t : existing.value()) done.insert(t.sample_id);
  }

  size_t verified = 0, rejected = 0;
  for (const auto& draft : drafts.value()) {
    if (done.count(draft.sample_id)) continue;
    verify::RefineOptions opts;
    opts.max_iterations = max_iterations;
    opts.diagnose.timeout_ms = exec_timeout_ms;
    std::vector<Json> audit_records;
    if (!audit_out.empty())
      opts.audit = [&audit_records](const Json& j) {
        audit_records.push_back(j);
      };
    auto outcome = verify::refine(draft, k.value(), schema.value(), db_path,
                                  *gateway.value(), opts);
    if (!outcome.is_ok()) return fail(outcome.error());
    for (const Json& j : audit_records)
      if (Status st = synth::append_jsonl(audit_out, j); !st)
        return fail(st.error());
    synth::Triple result = outcome.value().triple;
    result.terminal = outcome.value().terminal;
    auto facts = sql::extract_facts(result.sql, &schema.value());
    if (facts.is_ok())
      result.classified_level =
          sql::classify_complexity(facts.value()).level;
    bool clean = outcome.value().terminal == "clean";
    if (Status st = synth::append_jsonl(clean ? verified_out : rejected_out,
                                        synth::triple_to_spool_json(result));
        !st)
      return fail(st.error());
    if (clean)
      ++verified;
    else
      ++rejected;
  }
  std::cout << "verified " << verified << ", rejected " << rejected << "\n";
  return 0;
}

int cmd_filter(const std::string& in, const std::string& kept_out,
               const std::string& removed_out,
               const std::vector<std::string>& eval_paths, size_t ngram_n,
               double threshold) {
  auto spool = synth::read_triple_spool(in);
  if (!spool.is_ok()) return fail(spool.error());
  std::vector<metrics::EvalInstance> corpus;
  for (const auto& t : spool.value()) corpus.push_back({t.question, t.sql});
  std::vector<metrics::EvalInstance> eval_set;
  for (const auto& path : eval_paths) {
    auto loaded = metrics::load_eval_set(path);
    if (!loaded.is_ok()) return fail(loaded.error());
    for (auto& e : loaded.value()) eval_set.push_back(std::move(e));
  }
  metrics::FilterOptions opts;
  opts.ngram_n = ngram_n;
  opts.threshold = threshold;
  std::string kept_content, removed_content;
  size_t removed = 0;
  if (eval_set.empty()) {
    for (const auto& t : spool.value())
      kept_content += synth::triple_to_spool_json(t).dump() + "\n";
  } else {
    auto filtered = metrics::contamination_filter(corpus, eval_set, opts);
    if (!filtered.is_ok()) return fail(filtered.error());
    for (size_t idx : filtered.value().kept)
      kept_content +=
          synth::triple_to_spool_json(spool.value()[idx]).dump() + "\n";
    for (const auto& r : filtered.value().removed) {
      Json j = synth::triple_to_spool_json(spool.value()[r.corpus_index]);
      j["filter"]["field"] = r.field;
      j["filter"]["score"] = r.score;
      j["filter"]["eval_index"] = r.eval_index;
      j["filter"]["eval_question"] = eval_set[r.eval_index].question;
      j["filter"]["eval_sql"] = eval_set[r.eval_index].sql;
      removed_content += j.dump() + "\n";
      ++removed;
    }
  }
  if (Status st = write_file(kept_out, kept_content); !st)
    return fail(st.error());
  if (!removed_out.empty())
    if (Status st = write_file(removed_out, removed_content); !st)
      return fail(st.error());
  std::cout << "kept " << (corpus.size() - removed) << ", removed " << removed
            << "\n";
  return 0;
}

int cmd_evaluate(const std::string& corpus_path, const std::string& db_path,
                 const std::vector<std::string>& eval_paths, size_t ngram_n,
                 double threshold, bool with_sa, const std::string& embedder,
                 const std::string& json_out, const std::string& text_out,
                 const ProviderCli& provider) {
  auto spool = synth::read_triple_spool(corpus_path);
  if (!spool.is_ok()) return fail(spool.error());
  auto schema = db::introspect(db_path);
  if (!schema.is_ok()) return fail(schema.error());

  std::unique_ptr<llm::Gateway> gateway;
  if (with_sa || embedder == "provider") {
    auto g = make_gateway(provider);
    if (!g.is_ok()) return fail(g.error());
    gateway = std::move(g).value();
  }

  metrics::CorpusReport report;
  report.n_samples = spool.value().size();
  std::vector<std::string> sqls;
  for (const auto& t : spool.value()) sqls.push_back(t.sql);

  if (!sqls.empty()) {
    auto ser = metrics::compute_ser(sqls, db_path);
    if (!ser.is_ok()) return fail(ser.error());
    report.ser = std::move(ser).value();
    report.ser_present = true;
  }

  report.sa_requested = with_sa;
  if (with_sa && report.ser_present) {
    std::vector<metrics::EvalInstance> corpus;
    std::vector<bool> executable;
    for (size_t i = 0; i < spool.value().size(); ++i) {
      corpus.push_back({spool.value()[i].question, spool.value()[i].sql});
      executable.push_back(report.ser.samples[i].executable);
    }
    auto sa = metrics::judge_sa(corpus, executable,
                                db::schema_to_ddl_text(schema.value()),
                                *gateway);
    if (!sa.is_ok()) return fail(sa.error());
    report.sa = std::move(sa).value();
    report.sa_present = true;
  }

  report.histogram = metrics::complexity_histogram(sqls, &schema.value());

  metrics::Embedder embed = embedder == "provider"
                                ? metrics::gateway_embedder(*gateway)
                                : metrics::offline_embedder();
  auto div = metrics::diversity(sqls, embed);
  if (div.is_ok()) {
    report.div = std::move(div).value();
    report.diversity_present = true;
  } else if (div.error().code == Errc::too_few_samples) {
    report.diversity_note = div.error().message;
  } else {
    return fail(div.error());
  }

  if (!eval_paths.empty()) {
    std::vector<metrics::EvalInstance> corpus, eval_set;
    for (const auto& t : spool.value()) corpus.push_back({t.question, t.sql});
    for (const auto& path : eval_paths) {
      auto loaded = metrics::load_eval_set(path);
      if (!loaded.is_ok()) return fail(loaded.error());
      for (auto& e : loaded.value()) eval_set.push_back(std::move(e));
    }
    metrics::FilterOptions opts;
    opts.ngram_n = ngram_n;
    opts.threshold = threshold;
    auto filtered = metrics::contamination_filter(corpus, eval_set, opts);
    if (!filtered.is_ok()) return fail(filtered.error());
    report.filter_present = true;
    report.filter_opts = opts;
    report.filter_input = corpus.size();
    report.filter_removed = filtered.value().removed.size();
  }

  std::cout << metrics::render_report_text(report);
  if (!json_out.empty())
    if (Status st = write_file(json_out,
                               metrics::report_to_json(report).dump(2) + "\n");
        !st)
      return fail(st.error());
  if (!text_out.empty())
    if (Status st = write_file(text_out, metrics::render_report_text(report));
        !st)
      return fail(st.error());
  return 0;
}

int cmd_export(const std::string& in, const std::string& out) {
  auto spool = synth::read_triple_spool(in);
  if (!spool.is_ok()) return fail(spool.error());
  std::sort(spool.value().begin(), spool.value().end(),
            [](const synth::Triple& a, const synth::Triple& b) {
              return a.sample_id < b.sample_id;
            });
  std::string content;
  size_t count = 0;
  for (const auto& t : spool.value()) {
    if (t.status != synth::TripleStatus::verified) continue;
    content += synth::triple_to_export_json(t).dump() + "\n";
    ++count;
  }
  if (Status st = write_file(out, content); !st) return fail(st.error());
  std::cout << "exported " << count << " records -> " << out << "\n";
  return count > 0 ? 0 : 1;
}

int cmd_pipeline(const std::string& config_path) {
  auto config = pipeline::load_config(config_path);
  if (!config.is_ok()) return fail(config.error());
  auto provider = pipeline::make_provider(config.value().provider);
  if (!provider.is_ok()) return fail(provider.error());
  llm::Gateway gateway(provider.value(),
                       pipeline::to_provider_config(config.value().provider));
  auto manifest = pipeline::run_pipeline(config.value(), gateway);
  if (!manifest.is_ok()) return fail(manifest.error());
  const auto& m = manifest.value();
  std::cout << "run " << m.run_id << ": drafted " << m.drafted
            << ", verified " << m.verified << ", rejected " << m.rejected
            << ", filtered " << m.filtered << ", exported " << m.export_count
            << "\n";
  return m.export_count > 0 ? 0 : 1;
}

int cmd_classify(const std::string& one_sql, const std::string& db_path) {
  db::DatabaseSchema schema;
  const db::DatabaseSchema* schema_ptr = nullptr;
  if (!db_path.empty()) {
    auto loaded = db::introspect(db_path);
    if (!loaded.is_ok()) return fail(loaded.error());
    schema = std::move(loaded).value();
    schema_ptr = &schema;
  }
  auto classify_one = [&](const std::string& text) {
    auto facts = sql::extract_facts(text, schema_ptr);
    if (!facts.is_ok()) {
      Json j;
      j["error"] = facts.error().message;
      std::cout << j.dump() << "\n";
      return;
    }
    std::cout
        << sql::complexity_to_json(sql::classify_complexity(facts.value()))
               .dump()
        << "\n";
  };
  if (!one_sql.empty()) {
    classify_one(one_sql);
    return 0;
  }
  std::string line;
  while (std::getline(std::cin, line)) {
    if (trim(line).empty()) continue;
    classify_one(line);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "sqlsynth: synthesize semantically verified question-SQL-rationale "
      "training triples from a SQLite database"};
  app.require_subcommand(1);

  // introspect
  std::string db_path, json_out;
  bool show_sample = false;
  int sample_rows = 20;
  std::uint64_t seed = 0;
  auto* c_introspect =
      app.add_subcommand("introspect", "Print the schema of a database");
  c_introspect->add_option("--db", db_path, "SQLite database path")
      ->required();
  c_introspect->add_option("--json", json_out, "Also write schema JSON here");
  c_introspect->add_flag("--sample", show_sample, "Print sampled rows too");
  c_introspect->add_option("--sample-rows", sample_rows,
                           "Rows sampled per table");
  c_introspect->add_option("--seed", seed, "Sampling seed");

  // build-kb
  std::string kb_dir;
  ProviderCli kb_provider;
  auto* c_build = app.add_subcommand(
      "build-kb", "Build the six-layer knowledge base for a database");
  c_build->add_option("--db", db_path, "SQLite database path")->required();
  c_build->add_option("--kb", kb_dir, "Knowledge base output directory")
      ->required();
  c_build->add_option("--sample-rows", sample_rows,
                      "Rows sampled per table for prompts");
  c_build->add_option("--seed", seed, "Sampling seed");
  add_provider_flags(c_build, kb_provider);

  // plan
  std::string plan_out;
  std::vector<std::string> domains{"sales", "education"};
  std::vector<std::string> tasks{"trend analysis", "ranking"};
  std::vector<std::string> quota_args;
  auto* c_plan =
      app.add_subcommand("plan", "Plan a generation batch deterministically");
  c_plan->add_option("--out", plan_out, "Plan output path")->required();
  c_plan->add_option("--domains", domains, "Domain context vocabulary")
      ->delimiter(',');
  c_plan->add_option("--tasks", tasks, "Task type vocabulary")
      ->delimiter(',');
  c_plan->add_option("--quota", quota_args,
                     "Per-level sample counts, e.g. L1=2 or L1=2,L2=1")
      ->required();
  c_plan->add_option("--seed", seed, "Root seed");

  // generate
  std::string plan_in, drafts_out, failures_out;
  ProviderCli gen_provider;
  auto* c_generate = app.add_subcommand(
      "generate", "Generate question-SQL-rationale drafts from a plan");
  c_generate->add_option("--db", db_path, "SQLite database path")->required();
  c_generate->add_option("--kb", kb_dir, "Knowledge base directory")
      ->required();
  c_generate->add_option("--plan", plan_in, "Plan file")->required();
  c_generate->add_option("--out", drafts_out, "Draft spool output")
      ->required();
  c_generate->add_option("--failures", failures_out,
                         "Generation failure spool");
  add_provider_flags(c_generate, gen_provider);

  // refine
  std::string refine_in, verified_out, rejected_out, audit_out;
  int max_iterations = 3;
  int exec_timeout_ms = 5000;
  ProviderCli refine_provider;
  auto* c_refine = app.add_subcommand(
      "refine", "Diagnose and correct drafts until clean or rejected");
  c_refine->add_option("--db", db_path, "SQLite database path")->required();
  c_refine->add_option("--kb", kb_dir, "Knowledge base directory")
      ->required();
  c_refine->add_option("--in", refine_in, "Draft spool")->required();
  c_refine->add_option("--verified", verified_out, "Verified spool output")
      ->required();
  c_refine->add_option("--rejected", rejected_out, "Rejected spool output")
      ->required();
  c_refine->add_option("--audit", audit_out, "Audit log output");
  c_refine->add_option("--max-iterations", max_iterations,
                       "Correction call budget per sample");
  c_refine->add_option("--exec-timeout-ms", exec_timeout_ms,
                       "Per-statement execution timeout");
  add_provider_flags(c_refine, refine_provider);

  // filter
  std::string filter_in, kept_out, removed_out;
  std::vector<std::string> eval_paths;
  size_t ngram_n = 8;
  double ngram_threshold = 0.6;
  auto* c_filter = app.add_subcommand(
      "filter", "Remove samples overlapping an evaluation set");
  c_filter->add_option("--in", filter_in, "Verified spool")->required();
  c_filter->add_option("--out", kept_out, "Kept spool output")->required();
  c_filter->add_option("--removed", removed_out, "Removed spool output");
  c_filter->add_option("--eval-set", eval_paths,
                       "Evaluation set JSONL (repeatable)");
  c_filter->add_option("--ngram-n", ngram_n, "Token n-gram size");
  c_filter->add_option("--ngram-threshold", ngram_threshold,
                       "Jaccard similarity threshold");

  // evaluate
  std::string corpus_path, report_json, report_text, embedder = "offline";
  bool with_sa = false;
  ProviderCli eval_provider;
  auto* c_evaluate =
      app.add_subcommand("evaluate", "Compute corpus quality metrics");
  c_evaluate->add_option("--corpus", corpus_path, "Corpus spool")->required();
  c_evaluate->add_option("--db", db_path, "SQLite database path")->required();
  c_evaluate->add_option("--eval-set", eval_paths,
                         "Evaluation set JSONL (repeatable)");
  c_evaluate->add_option("--ngram-n", ngram_n, "Token n-gram size");
  c_evaluate->add_option("--ngram-threshold", ngram_threshold,
                         "Jaccard similarity threshold");
  c_evaluate->add_flag("--with-sa", with_sa,
                       "Judge question-SQL consistency with the provider");
  c_evaluate->add_option("--embedder", embedder, "Diversity embedder")
      ->check(CLI::IsMember({"offline", "provider"}));
  c_evaluate->add_option("--json", report_json, "Write report JSON here");
  c_evaluate->add_option("--text", report_text, "Write report text here");
  add_provider_flags(c_evaluate, eval_provider);

  // export
  std::string export_in, export_out;
  auto* c_export = app.add_subcommand(
      "export", "Write verified samples in the training format");
  c_export->add_option("--in", export_in, "Kept spool")->required();
  c_export->add_option("--out", export_out, "Export path")->required();

  // pipeline
  std::string config_path;
  auto* c_pipeline =
      app.add_subcommand("pipeline", "Run every stage from one config file");
  c_pipeline->add_option("--config", config_path, "Config JSON path")
      ->required();

  // classify
  std::string classify_sql;
  std::string classify_db;
  auto* c_classify = app.add_subcommand(
      "classify",
      "Classify SQL complexity (stdin: one statement per line)");
  c_classify->add_option("--sql", classify_sql, "Classify this one statement");
  c_classify->add_option("--db", classify_db,
                         "Resolve columns against this database");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (c_introspect->parsed())
    return cmd_introspect(db_path, json_out, show_sample, sample_rows, seed);
  if (c_build->parsed())
    return cmd_build_kb(db_path, kb_dir, kb_provider, sample_rows, seed);
  if (c_plan->parsed())
    return cmd_plan(plan_out, domains, tasks, quota_args, seed);
  if (c_generate->parsed())
    return cmd_generate(db_path, kb_dir, plan_in, drafts_out, failures_out,
                        gen_provider);
  if (c_refine->parsed())
    return cmd_refine(db_path, kb_dir, refine_in, verified_out, rejected_out,
                      audit_out, max_iterations, exec_timeout_ms,
                      refine_provider);
  if (c_filter->parsed())
    return cmd_filter(filter_in, kept_out, removed_out, eval_paths, ngram_n,
                      ngram_threshold);
  if (c_evaluate->parsed())
    return cmd_evaluate(corpus_path, db_path, eval_paths, ngram_n,
                        ngram_threshold, with_sa, embedder, report_json,
                        report_text, eval_provider);
  if (c_export->parsed()) return cmd_export(export_in, export_out);
  if (c_pipeline->parsed()) return cmd_pipeline(config_path);
  if (c_classify->parsed()) return cmd_classify(classify_sql, classify_db);
  return 2;
}
