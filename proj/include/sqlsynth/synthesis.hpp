#pragma once

// Draft synthesis: generation specs, rationale traces, triples, their JSON
// forms (the exported `think` nesting mirrors the training format), batch
// planning, and the question-then-SQL generation calls.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sqlsynth/kb_builder.hpp"
#include "sqlsynth/knowledge_base.hpp"
#include "sqlsynth/llm_gateway.hpp"
#include "sqlsynth/prompts.hpp"
#include "sqlsynth/sql_analysis.hpp"

namespace sqlsynth::synth {

using db::Json;

struct GenerationSpec {
  std::string domain_context;
  std::string task_type;
  int level = 1;  // 1..4
  std::uint64_t seed = 0;
  bool operator==(const GenerationSpec&) const = default;
};

struct TraceColumn {
  std::string name;
  std::string type;
  std::string operation;
  std::string purpose;
  bool operator==(const TraceColumn&) const = default;
};

struct RationaleTrace {
  std::string focus;
  std::string main_scenario;
  std::string sub_scenario;
  int complexity_level = 1;
  std::string use_case;
  std::vector<std::string> tables_used;
  std::string table_reasoning;
  std::vector<TraceColumn> columns_used;
  std::vector<std::string> operations;
  std::string approach;
  std::vector<std::string> no_need;
  std::string expected_output;
  struct RefinementEntry {
    int iteration = 0;
    std::vector<std::string> errors;
    std::vector<std::string> corrections;
    bool operator==(const RefinementEntry&) const = default;
  };
  std::vector<RefinementEntry> refinement_log;
  bool operator==(const RationaleTrace&) const = default;
};

enum class TripleStatus { draft, verified, rejected };

inline const char* triple_status_name(TripleStatus s) {
  switch (s) {
    case TripleStatus::draft: return "draft";
    case TripleStatus::verified: return "verified";
    case TripleStatus::rejected: return "rejected";
  }
  return "draft";
}

inline TripleStatus parse_triple_status(const std::string& s) {
  if (s == "verified") return TripleStatus::verified;
  if (s == "rejected") return TripleStatus::rejected;
  return TripleStatus::draft;
}

struct Triple {
  std::string question;
  std::string sql;
  RationaleTrace trace;
  TripleStatus status = TripleStatus::draft;
  std::string sample_id;
  GenerationSpec spec;
  int classified_level = 0;  // 0 = not classified yet
  std::string terminal;      // refinement terminal state, when known
};

// ---------------------------------------------------------------------------
// Trace and triple JSON.
// ---------------------------------------------------------------------------

inline Json trace_to_json(const RationaleTrace& t) {
  Json j;
  j["focus"] = t.focus;
  j["metadata"]["main_scenario"] = t.main_scenario;
  j["metadata"]["sub_scenario"] = t.sub_scenario;
  j["metadata"]["complexity_level"] = t.complexity_level;
  j["metadata"]["use_case"] = t.use_case;
  j["table_selection"]["tables_used"] = t.tables_used;
  j["table_selection"]["reasoning"] = t.table_reasoning;
  Json cols = Json::array();
  for (const auto& c : t.columns_used) {
    Json jc;
    jc["name"] = c.name;
    jc["type"] = c.type;
    jc["operation"] = c.operation;
    jc["purpose"] = c.purpose;
    cols.push_back(std::move(jc));
  }
  j["column_selection"]["columns_used"] = std::move(cols);
  j["sql_strategy"]["operations"] = t.operations;
  j["sql_strategy"]["approach"] = t.approach;
  j["sql_strategy"]["no_need"] = t.no_need;
  j["expected_output"] = t.expected_output;
  if (!t.refinement_log.empty()) {
    Json log = Json::array();
    for (const auto& e : t.refinement_log) {
      Json je;
      je["iteration"] = e.iteration;
      je["errors"] = e.errors;
      je["corrections"] = e.corrections;
      log.push_back(std::move(je));
    }
    j["refinement_log"] = std::move(log);
  }
  return j;
}

inline Result<RationaleTrace> trace_from_json(const Json& j) {
  if (!j.is_object())
    return make_error(Errc::malformed_response, "trace is not a JSON object");
  RationaleTrace t;
  t.focus = j.value("focus", "");
  if (j.contains("metadata") && j["metadata"].is_object()) {
    const Json& m = j["metadata"];
    t.main_scenario = m.value("main_scenario", "");
    t.sub_scenario = m.value("sub_scenario", "");
    if (m.contains("complexity_level")) {
      if (m["complexity_level"].is_number())
        t.complexity_level = m["complexity_level"].get<int>();
      else if (m["complexity_level"].is_string()) {
        std::string s = m["complexity_level"].get<std::string>();
        if (!s.empty() && (s[0] == 'L' || s[0] == 'l')) s.erase(0, 1);
        t.complexity_level = std::atoi(s.c_str());
      }
    }
    t.use_case = m.value("use_case", "");
  }
  if (j.contains("table_selection") && j["table_selection"].is_object()) {
    const Json& ts = j["table_selection"];
    if (ts.contains("tables_used") && ts["tables_used"].is_array())
      for (const Json& v : ts["tables_used"])
        if (v.is_string()) t.tables_used.push_back(v.get<std::string>());
    t.table_reasoning = ts.value("reasoning", "");
  }
  const Json* cols = nullptr;
  if (j.contains("column_selection")) {
    if (j["column_selection"].is_object() &&
        j["column_selection"].contains("columns_used"))
      cols = &j["column_selection"]["columns_used"];
    else if (j["column_selection"].is_array())
      cols = &j["column_selection"];
  }
  if (cols && cols->is_array()) {
    for (const Json& jc : *cols) {
      if (!jc.is_object()) continue;
      TraceColumn c;
      c.name = jc.value("name", "");
      c.type = jc.value("type", "");
      c.operation = jc.value("operation", "");
      c.purpose = jc.value("purpose", "");
      t.columns_used.push_back(std::move(c));
    }
  }
  if (j.contains("sql_strategy") && j["sql_strategy"].is_object()) {
    const Json& s = j["sql_strategy"];
    if (s.contains("operations") && s["operations"].is_array())
      for (const Json& v : s["operations"])
        if (v.is_string()) t.operations.push_back(v.get<std::string>());
    t.approach = s.value("approach", "");
    if (s.contains("no_need") && s["no_need"].is_array())
      for (const Json& v : s["no_need"])
        if (v.is_string()) t.no_need.push_back(v.get<std::string>());
  }
  t.expected_output = j.value("expected_output", "");
  if (j.contains("refinement_log") && j["refinement_log"].is_array()) {
    for (const Json& je : j["refinement_log"]) {
      if (!je.is_object()) continue;
      RationaleTrace::RefinementEntry e;
      e.iteration = je.value("iteration", 0);
      if (je.contains("errors") && je["errors"].is_array())
        for (const Json& v : je["errors"])
          if (v.is_string()) e.errors.push_back(v.get<std::string>());
      if (je.contains("corrections") && je["corrections"].is_array())
        for (const Json& v : je["corrections"])
          if (v.is_string()) e.corrections.push_back(v.get<std::string>());
      t.refinement_log.push_back(std::move(e));
    }
  }
  return t;
}

inline Json spec_to_json(const GenerationSpec& s) {
  Json j;
  j["domain_context"] = s.domain_context;
  j["task_type"] = s.task_type;
  j["level"] = s.level;
  j["seed"] = s.seed;
  return j;
}

inline GenerationSpec spec_from_json(const Json& j) {
  GenerationSpec s;
  s.domain_context = j.value("domain_context", "");
  s.task_type = j.value("task_type", "");
  s.level = j.value("level", 1);
  s.seed = j.value("seed", 0ULL);
  return s;
}

// Spool form: the training-format triple plus artifact bookkeeping.
inline Json triple_to_spool_json(const Triple& t) {
  Json j;
  j["question"] = t.question;
  j["think"] = trace_to_json(t.trace);
  j["answer"] = t.sql;
  Json meta;
  meta["sample_id"] = t.sample_id;
  meta["status"] = triple_status_name(t.status);
  meta["spec"] = spec_to_json(t.spec);
  if (t.classified_level > 0) {
    meta["classified_level"] = t.classified_level;
    meta["level_match"] = t.classified_level == t.spec.level;
  }
  if (!t.terminal.empty()) meta["terminal"] = t.terminal;
  j["meta"] = std::move(meta);
  return j;
}

inline Result<Triple> triple_from_spool_json(const Json& j) {
  if (!j.is_object())
    return make_error(Errc::io_failure, "spool record is not a JSON object");
  Triple t;
  t.question = j.value("question", "");
  t.sql = j.value("answer", "");
  auto trace = trace_from_json(j.contains("think") ? j["think"] : Json::object());
  if (!trace.is_ok()) return trace.error();
  t.trace = std::move(trace).value();
  if (j.contains("meta") && j["meta"].is_object()) {
    const Json& m = j["meta"];
    t.sample_id = m.value("sample_id", "");
    t.status = parse_triple_status(m.value("status", "draft"));
    if (m.contains("spec")) t.spec = spec_from_json(m["spec"]);
    t.classified_level = m.value("classified_level", 0);
    t.terminal = m.value("terminal", "");
  }
  return t;
}

// Export form: training fields only, key order question/think/answer.
inline Json triple_to_export_json(const Triple& t) {
  Json j;
  j["question"] = t.question;
  j["think"] = trace_to_json(t.trace);
  j["answer"] = t.sql;
  return j;
}

// ---------------------------------------------------------------------------
// Spool files (append-only JSONL).
// ---------------------------------------------------------------------------

inline Status append_jsonl(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out)
    return make_error(Errc::io_failure, "cannot open " + path.string());
  out << j.dump() << "\n";
  if (!out)
    return make_error(Errc::io_failure, "write failed: " + path.string());
  return Status::ok_status();
}

inline Result<std::vector<Json>> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return make_error(Errc::io_failure, "cannot open " + path.string());
  std::vector<Json> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded())
      return make_error(Errc::io_failure,
                        path.string() + ":" + std::to_string(lineno) +
                            ": unparseable JSON line");
    out.push_back(std::move(j));
  }
  return out;
}

inline Result<std::vector<Triple>> read_triple_spool(
    const std::filesystem::path& path) {
  auto lines = read_jsonl(path);
  if (!lines.is_ok()) return lines.error();
  std::vector<Triple> out;
  for (const Json& j : lines.value()) {
    auto t = triple_from_spool_json(j);
    if (!t.is_ok()) return t.error();
    out.push_back(std::move(t).value());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batch planning: deterministic round-robin over (C, T) pairs per level.
// ---------------------------------------------------------------------------

inline Result<std::vector<GenerationSpec>> plan_batch(
    const std::vector<std::string>& vocab_c,
    const std::vector<std::string>& vocab_t,
    const std::map<int, int>& level_quotas, std::uint64_t seed) {
  int total = 0;
  for (const auto& [level, quota] : level_quotas) {
    if (level < 1 || level > 4)
      return make_error(Errc::config_invalid,
                        "quota level " + std::to_string(level) +
                            " outside 1..4");
    if (quota < 0)
      return make_error(Errc::config_invalid, "negative quota");
    total += quota;
  }
  if (total == 0) return std::vector<GenerationSpec>{};
  if (vocab_c.empty() || vocab_t.empty())
    return make_error(Errc::empty_vocabulary,
                      vocab_c.empty() ? "domain context vocabulary is empty"
                                      : "task type vocabulary is empty");
  std::vector<std::pair<std::string, std::string>> product;
  for (const auto& c : vocab_c)
    for (const auto& t : vocab_t) product.emplace_back(c, t);
  const std::uint64_t offset = seed % product.size();

  std::vector<GenerationSpec> out;
  std::uint64_t index = 0;
  for (int level = 1; level <= 4; ++level) {
    auto it = level_quotas.find(level);
    if (it == level_quotas.end()) continue;
    for (int i = 0; i < it->second; ++i) {
      const auto& [c, t] = product[(offset + i) % product.size()];
      GenerationSpec spec;
      spec.domain_context = c;
      spec.task_type = t;
      spec.level = level;
      spec.seed = seed + index;
      out.push_back(std::move(spec));
      ++index;
    }
  }
  return out;
}

inline std::string sample_id_for_index(size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%04zu", index);
  return buf;
}

// ---------------------------------------------------------------------------
// Knowledge digest embedded in generation prompts.
// ---------------------------------------------------------------------------

inline std::string kb_digest_text(const kb::KnowledgeBase& k) {
  std::string out;
  out += "Tables:\n";
  for (const auto& [tname, t] : k.k1.tables) {
    out += "- " + tname;
    auto role = k.k5.tables.find(tname);
    if (role != k.k5.tables.end())
      out += " (" + std::string(kb::entity_role_name(role->second.entity_role)) +
             ")";
    if (!t.description.empty()) out += ": " + t.description;
    out += "\n";
    for (const auto& [cname, c] : t.columns) {
      std::string key = kb::column_key(tname, cname);
      out += "  - " + cname;
      auto k3 = k.k3.columns.find(key);
      auto k4 = k.k4.columns.find(key);
      std::string annot;
      if (k3 != k.k3.columns.end())
        annot += kb::semantic_category_name(k3->second.semantic_category);
      if (k4 != k.k4.columns.end()) {
        if (!annot.empty()) annot += "; ";
        annot += "ops: ";
        bool first = true;
        for (const auto& op : k4->second.allowed_operations) {
          if (!first) annot += ", ";
          annot += op;
          first = false;
        }
      }
      if (!annot.empty()) out += " (" + annot + ")";
      if (!c.description.empty()) out += ": " + c.description;
      out += "\n";
    }
  }
  if (!k.k2.business_rules.empty()) {
    out += "Business rules (" +
           (k.k2.domain_name.empty() ? std::string("unnamed domain")
                                     : k.k2.domain_name) +
           "):\n";
    for (const auto& r : k.k2.business_rules)
      out += "- " + r.rule_id + ": " + r.statement + "\n";
  }
  if (!k.k6.join_edges.empty()) {
    out += "Join edges:\n";
    for (const auto& e : k.k6.join_edges)
      out += "- " + kb::describe_k6_edge(e) + "\n";
  }
  for (const auto& [tname, t] : k.k5.tables) {
    for (const auto& c : t.constraints) {
      if (c.statement.empty()) continue;
      out += "Constraint on " + tname + ": " + c.statement + "\n";
    }
  }
  if (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

// ---------------------------------------------------------------------------
// Trace validation against the schema and the requested spec.
// ---------------------------------------------------------------------------

inline Status validate_trace(const RationaleTrace& trace,
                             const db::DatabaseSchema& schema,
                             const GenerationSpec& spec) {
  for (const auto& t : trace.tables_used) {
    if (!schema.find_table(t))
      return make_error(Errc::constraint_violation,
                        "trace references unknown table \"" + t + "\"");
  }
  for (const auto& c : trace.columns_used) {
    std::string table_part;
    std::string column_part = c.name;
    size_t dot = c.name.find('.');
    if (dot != std::string::npos) {
      table_part = c.name.substr(0, dot);
      column_part = c.name.substr(dot + 1);
    }
    bool found = false;
    for (const auto& t : trace.tables_used) {
      if (!table_part.empty() && !iequals(table_part, t)) continue;
      const db::TableDef* td = schema.find_table(t);
      if (td && td->find_column(column_part)) {
        found = true;
        break;
      }
    }
    if (!found)
      return make_error(Errc::constraint_violation,
                        "trace column \"" + c.name +
                            "\" does not resolve in tables_used");
  }
  if (trace.complexity_level != spec.level)
    return make_error(Errc::constraint_violation,
                      "trace declares complexity_level " +
                          std::to_string(trace.complexity_level) +
                          " but the spec requests level " +
                          std::to_string(spec.level));
  return Status::ok_status();
}

// ---------------------------------------------------------------------------
// Generation calls.
// ---------------------------------------------------------------------------

struct QuestionDraft {
  std::string question;
  RationaleTrace trace;
};

inline Result<QuestionDraft> generate_question(const GenerationSpec& spec,
                                               const kb::KnowledgeBase& k,
                                               const db::DatabaseSchema& schema,
                                               llm::Gateway& gateway) {
  llm::ChatRequest req = prompts::question_request(
      kb_digest_text(k), spec.domain_context, spec.task_type, spec.level);
  auto response = gateway.complete_structured(req);
  if (!response.is_ok()) return response.error();
  const Json& j = response.value();
  if (!j.contains("question") || !j["question"].is_string())
    return make_error(Errc::malformed_response,
                      "generation output lacks a question string",
                      j.dump());
  auto trace = trace_from_json(j.contains("think") ? j["think"] : Json());
  if (!trace.is_ok()) return trace.error();
  QuestionDraft draft;
  draft.question = j["question"].get<std::string>();
  draft.trace = std::move(trace).value();
  Status valid = validate_trace(draft.trace, schema, spec);
  if (!valid.is_ok()) return valid.error();
  return draft;
}

// Pulls SQL text out of a possibly fenced reply.
inline std::string extract_sql_text(const std::string& text) {
  size_t open = text.find("```");
  if (open == std::string::npos) return std::string(trim(text));
  size_t body_start = text.find('\n', open);
  if (body_start == std::string::npos) return std::string(trim(text));
  ++body_start;
  size_t close = text.find("```", body_start);
  if (close == std::string::npos) return std::string(trim(text));
  return std::string(trim(text.substr(body_start, close - body_start)));
}

inline Status check_single_select(const std::string& sql_text) {
  auto parsed = sql::parse_select_statement(sql_text);
  if (parsed.is_ok()) return Status::ok_status();
  if (parsed.error().code == Errc::unsupported_dialect)
    return make_error(Errc::non_select_output, parsed.error().message,
                      sql_text);
  return Status::ok_status();  // broken SELECTs are refinement's problem
}

inline Result<std::string> generate_sql(const std::string& question,
                                        const RationaleTrace& trace,
                                        const GenerationSpec& spec,
                                        const kb::KnowledgeBase& k,
                                        llm::Gateway& gateway) {
  llm::ChatRequest req = prompts::sql_request(
      question, trace_to_json(trace).dump(2), kb_digest_text(k),
      spec.domain_context, spec.task_type, spec.level);
  auto response = gateway.complete(req);
  if (!response.is_ok()) return response.error();
  std::string sql_text = extract_sql_text(response.value().text);
  if (sql_text.empty())
    return make_error(Errc::malformed_response, "empty SQL reply");
  Status gate = check_single_select(sql_text);
  if (!gate.is_ok()) return gate.error();
  return sql_text;
}

}  // namespace sqlsynth::synth
