#pragma once

// Semantic verification: rule-based diagnosis of drafts against the schema,
// knowledge base, and live execution; evidence retrieval; LLM-backed
// correction; and the bounded refinement loop.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sqlsynth/knowledge_base.hpp"
#include "sqlsynth/prompts.hpp"
#include "sqlsynth/sql_analysis.hpp"
#include "sqlsynth/sqlite_db.hpp"
#include "sqlsynth/synthesis.hpp"

namespace sqlsynth::verify {

using db::Json;

inline const std::vector<std::string>& error_type_names() {
  static const std::vector<std::string> names = {
      "not_executable",             "invalid_column",
      "invalid_table",              "aggregation_type_mismatch",
      "join_inconsistency",         "trace_sql_divergence"};
  return names;
}

struct DiagnosisError {
  std::string error_type;
  std::string detail;
  std::string trace_location;
  // Structured hints consumed by evidence retrieval.
  std::string table;
  std::string column;
  std::string other_table;
};

struct ExecutionOutcome {
  bool success = false;
  long long row_count = -1;
  std::string engine_error;
};

struct DiagnosisReport {
  std::vector<DiagnosisError> errors;
  ExecutionOutcome execution;
  std::vector<std::string> warnings;

  bool clean() const { return errors.empty(); }

  // Order-insensitive identity of the error set, for repeat detection.
  std::string signature() const {
    std::vector<std::string> keys;
    for (const auto& e : errors)
      keys.push_back(e.error_type + "|" + e.table + "|" + e.column + "|" +
                     e.other_table);
    std::sort(keys.begin(), keys.end());
    std::string out;
    for (const auto& k : keys) {
      out += k;
      out += ";";
    }
    return out;
  }
};

inline Json report_to_json(const DiagnosisReport& r) {
  Json j;
  Json errors = Json::array();
  for (const auto& e : r.errors) {
    Json je;
    je["error_type"] = e.error_type;
    je["detail"] = e.detail;
    je["trace_location"] = e.trace_location;
    errors.push_back(std::move(je));
  }
  j["errors"] = std::move(errors);
  j["execution"]["success"] = r.execution.success;
  j["execution"]["row_count"] = r.execution.row_count;
  j["execution"]["engine_error"] = r.execution.engine_error;
  j["warnings"] = r.warnings;
  return j;
}

inline Json evidence_to_json(const kb::Evidence& ev) {
  Json arr = Json::array();
  for (const auto& e : ev.entries) {
    Json je;
    je["layer"] = e.layer;
    je["key"] = e.key;
    je["statement"] = e.statement;
    arr.push_back(std::move(je));
  }
  return arr;
}

// True when `loc` names a real place in the trace.
inline bool trace_location_resolves(const synth::RationaleTrace& trace,
                                    const std::string& loc) {
  if (loc == "table_selection" || loc == "sql_strategy" ||
      loc == "column_selection" || loc == "metadata" || loc == "focus" ||
      loc == "expected_output")
    return true;
  const std::string prefix = "column_selection[";
  if (loc.rfind(prefix, 0) == 0 && loc.back() == ']') {
    std::string idx = loc.substr(prefix.size(), loc.size() - prefix.size() - 1);
    char* end = nullptr;
    long i = std::strtol(idx.c_str(), &end, 10);
    return end && *end == '\0' && i >= 0 &&
           static_cast<size_t>(i) < trace.columns_used.size();
  }
  return false;
}

namespace detail {

inline std::string column_trace_location(const synth::RationaleTrace& trace,
                                         const std::string& column) {
  for (size_t i = 0; i < trace.columns_used.size(); ++i) {
    const std::string& name = trace.columns_used[i].name;
    if (iequals(name, column)) return "column_selection[" + std::to_string(i) + "]";
    size_t dot = name.find('.');
    if (dot != std::string::npos && iequals(name.substr(dot + 1), column))
      return "column_selection[" + std::to_string(i) + "]";
  }
  return "column_selection";
}

inline bool edge_matches(const kb::RelationLayer::JoinEdge& e,
                         const sql::JoinCondition& jc) {
  auto side_eq = [](const std::string& ta, const std::string& ca,
                    const std::string& tb, const std::string& cb) {
    return iequals(ta, tb) && iequals(ca, cb);
  };
  bool forward = side_eq(e.from_table, e.from_column, jc.left.table,
                         jc.left.column) &&
                 side_eq(e.to_table, e.to_column, jc.right.table,
                         jc.right.column);
  bool reverse = side_eq(e.from_table, e.from_column, jc.right.table,
                         jc.right.column) &&
                 side_eq(e.to_table, e.to_column, jc.left.table,
                         jc.left.column);
  return forward || reverse;
}

}  // namespace detail

struct DiagnoseOptions {
  int timeout_ms = 5000;
  long long row_cap = 100000;
};

// Pure function of (triple, kb, schema, database contents). Infrastructure
// failures (missing database) are hard errors, not diagnoses.
inline Result<DiagnosisReport> diagnose(const synth::Triple& t,
                                        const kb::KnowledgeBase& k,
                                        const db::DatabaseSchema& schema,
                                        const std::string& db_path,
                                        const DiagnoseOptions& opts = {}) {
  DiagnosisReport report;

  // 1. Parse. A statement the parser rejects cannot execute.
  auto parsed = sql::parse_select_statement(t.sql);
  if (!parsed.is_ok()) {
    const Error& err = parsed.error();
    if (err.code != Errc::parse_error && err.code != Errc::unsupported_dialect)
      return err;
    DiagnosisError e;
    e.error_type = "not_executable";
    e.detail = err.message;
    e.trace_location = "sql_strategy";
    report.errors.push_back(std::move(e));
    report.execution.success = false;
    report.execution.engine_error = err.message;
    return report;
  }
  sql::SqlFacts facts = sql::extract_facts(*parsed.value(), &schema);

  // 2. Table and column existence.
  for (const auto& table : facts.tables) {
    if (!schema.find_table(table)) {
      DiagnosisError e;
      e.error_type = "invalid_table";
      e.detail = "no such table \"" + table + "\"";
      e.trace_location = "table_selection";
      e.table = table;
      report.errors.push_back(std::move(e));
    }
  }
  for (const auto& col : facts.columns) {
    if (col.resolution == sql::ColumnRef::Resolution::derived) continue;
    if (col.resolution == sql::ColumnRef::Resolution::unresolved) {
      DiagnosisError e;
      e.error_type = "invalid_column";
      e.detail = "unresolved column reference \"" +
                 (col.table.empty() ? col.column
                                    : col.table + "." + col.column) +
                 "\"";
      e.trace_location = detail::column_trace_location(t.trace, col.column);
      e.table = col.table;
      e.column = col.column;
      report.errors.push_back(std::move(e));
      continue;
    }
    const db::TableDef* td = schema.find_table(col.table);
    if (!td) continue;  // the table itself was already reported
    if (!td->find_column(col.column)) {
      DiagnosisError e;
      e.error_type = "invalid_column";
      e.detail = "table \"" + td->name + "\" has no column \"" + col.column +
                 "\"";
      e.trace_location = detail::column_trace_location(t.trace, col.column);
      e.table = td->name;
      e.column = col.column;
      report.errors.push_back(std::move(e));
    }
  }

  // 3. Join conditions vs authoritative relation edges.
  for (const auto& jc : facts.join_conditions) {
    if (jc.op != "=") continue;
    if (jc.left.resolution != sql::ColumnRef::Resolution::schema_table ||
        jc.right.resolution != sql::ColumnRef::Resolution::schema_table)
      continue;
    if (iequals(jc.left.table, jc.right.table)) continue;
    const db::TableDef* lt = schema.find_table(jc.left.table);
    const db::TableDef* rt = schema.find_table(jc.right.table);
    if (!lt || !rt) continue;
    if (!lt->find_column(jc.left.column) || !rt->find_column(jc.right.column))
      continue;  // column errors already reported
    bool authoritative = false;
    bool inferred_only = false;
    for (const auto& edge : k.k6.join_edges) {
      if (!detail::edge_matches(edge, jc)) continue;
      if (edge.inferred)
        inferred_only = true;
      else
        authoritative = true;
    }
    std::string pair_text = jc.left.table + "." + jc.left.column + " = " +
                            jc.right.table + "." + jc.right.column;
    if (authoritative) continue;
    if (inferred_only) {
      report.warnings.push_back("join " + pair_text +
                                " is backed only by an inferred relation");
      continue;
    }
    DiagnosisError e;
    e.error_type = "join_inconsistency";
    e.detail = "join condition " + pair_text +
               " matches no known relation between these tables";
    e.trace_location = "sql_strategy";
    e.table = jc.left.table;
    e.other_table = jc.right.table;
    e.column = jc.left.column;
    report.errors.push_back(std::move(e));
  }

  // 4. Read-only execution with a statement timeout.
  {
    db::SqliteDb handle;
    if (Status st = handle.open_readonly(db_path); !st) return st.error();
    db::ExecResult exec = handle.execute_with_timeout(
        t.sql, std::chrono::milliseconds(opts.timeout_ms), opts.row_cap);
    report.execution.success = exec.success;
    report.execution.row_count = exec.success ? exec.row_count : -1;
    report.execution.engine_error = exec.error_text;
    if (!exec.success) {
      DiagnosisError e;
      e.error_type = "not_executable";
      e.detail = exec.error_text.empty() ? "execution failed"
                                         : exec.error_text;
      e.trace_location = "sql_strategy";
      report.errors.push_back(std::move(e));
    }
  }

  // 5. Aggregation compatibility against field types.
  for (const auto& agg : facts.aggregations) {
    if (!agg.has_column_arg) continue;
    if (agg.arg.resolution != sql::ColumnRef::Resolution::schema_table)
      continue;
    const db::TableDef* td = schema.find_table(agg.arg.table);
    if (!td) continue;
    const db::ColumnDef* cd = td->find_column(agg.arg.column);
    if (!cd) continue;
    std::string key = kb::column_key(td->name, cd->name);
    auto it = k.k3.columns.find(key);
    if (it == k.k3.columns.end()) continue;
    if (kb::aggregation_compatible(agg.function,
                                   it->second.semantic_category))
      continue;
    DiagnosisError e;
    e.error_type = "aggregation_type_mismatch";
    e.detail = agg.function + "(" + key + ") is invalid: the column is " +
               kb::semantic_category_name(it->second.semantic_category);
    std::string loc = detail::column_trace_location(t.trace, cd->name);
    e.trace_location = loc == "column_selection" ? "sql_strategy" : loc;
    e.table = td->name;
    e.column = cd->name;
    report.errors.push_back(std::move(e));
  }

  // 6. Trace / SQL divergence on the table sets.
  {
    std::set<std::string> trace_tables;
    for (const auto& name : t.trace.tables_used)
      trace_tables.insert(to_lower(name));
    std::set<std::string> sql_tables;
    for (const auto& name : facts.tables) sql_tables.insert(to_lower(name));
    if (trace_tables != sql_tables) {
      auto render = [](const std::set<std::string>& s) {
        std::string out = "{";
        bool first = true;
        for (const auto& n : s) {
          if (!first) out += ", ";
          out += n;
          first = false;
        }
        return out + "}";
      };
      DiagnosisError e;
      e.error_type = "trace_sql_divergence";
      e.detail = "trace names tables " + render(trace_tables) +
                 " but the SQL references " + render(sql_tables);
      e.trace_location = "table_selection";
      if (!facts.tables.empty()) e.table = facts.tables.front();
      report.errors.push_back(std::move(e));
    }
  }

  return report;
}

// ---------------------------------------------------------------------------
// Evidence retrieval for a whole report.
// ---------------------------------------------------------------------------

inline Result<kb::Evidence> retrieve_for_report(const DiagnosisReport& report,
                                                const kb::KnowledgeBase& k) {
  kb::Evidence merged;
  auto have = [&](const kb::EvidenceEntry& e) {
    for (const auto& x : merged.entries)
      if (x.layer == e.layer && x.key == e.key) return true;
    return false;
  };
  for (const auto& err : report.errors) {
    kb::EvidenceQuery q;
    q.error_type = err.error_type;
    q.table = err.table;
    q.column = err.column;
    q.other_table = err.other_table;
    auto ev = kb::retrieve(k, q);
    if (!ev.is_ok()) {
      if (ev.error().code == Errc::empty_evidence) continue;
      return ev.error();
    }
    for (const auto& e : ev.value().entries)
      if (!have(e)) merged.entries.push_back(e);
  }
  return merged;
}

// ---------------------------------------------------------------------------
// Correction.
// ---------------------------------------------------------------------------

inline std::string errors_text(const DiagnosisReport& report) {
  std::string out;
  for (const auto& e : report.errors) {
    out += "- " + e.error_type + " at " + e.trace_location + ": " + e.detail +
           "\n";
  }
  if (out.empty()) out = "(none)\n";
  out.pop_back();
  return out;
}

inline std::string evidence_text(const kb::Evidence& ev) {
  if (ev.entries.empty()) return "(none)";
  std::string out;
  for (const auto& e : ev.entries)
    out += "- [" + e.layer + "] " + e.statement + "\n";
  out.pop_back();
  return out;
}

inline bool question_edit_allowed(const DiagnosisReport& report) {
  for (const auto& e : report.errors)
    if (e.error_type == "aggregation_type_mismatch" ||
        e.error_type == "trace_sql_divergence")
      return true;
  return false;
}

// One correction call. The returned triple keeps identity fields; the
// refinement log is owned here, not by the model.
inline Result<synth::Triple> correct(const synth::Triple& t,
                                     const DiagnosisReport& report,
                                     const kb::Evidence& evidence,
                                     const kb::KnowledgeBase& k,
                                     const db::DatabaseSchema& schema,
                                     llm::Gateway& gateway, int iteration) {
  if (report.errors.empty())
    return make_error(Errc::config_invalid,
                      "correction requires a nonempty error list");
  llm::ChatRequest req = prompts::correction_request(
      t.question, t.sql, synth::trace_to_json(t.trace).dump(2),
      errors_text(report), evidence_text(evidence), synth::kb_digest_text(k));
  auto response = gateway.complete_structured(req);
  if (!response.is_ok()) return response.error();
  const Json& j = response.value();
  if (!j.contains("sql") || !j["sql"].is_string())
    return make_error(Errc::malformed_response,
                      "correction output lacks a sql string", j.dump());

  synth::Triple out = t;
  out.sql = synth::extract_sql_text(j["sql"].get<std::string>());
  if (j.contains("question") && j["question"].is_string() &&
      question_edit_allowed(report))
    out.question = j["question"].get<std::string>();
  if (j.contains("think")) {
    auto trace = synth::trace_from_json(j["think"]);
    if (trace.is_ok()) {
      auto old_log = out.trace.refinement_log;
      out.trace = std::move(trace).value();
      out.trace.refinement_log = std::move(old_log);
    }
  }
  synth::RationaleTrace::RefinementEntry entry;
  entry.iteration = iteration;
  for (const auto& e : report.errors)
    entry.errors.push_back(e.error_type + " at " + e.trace_location + ": " +
                           e.detail);
  if (j.contains("corrections") && j["corrections"].is_array())
    for (const Json& c : j["corrections"])
      if (c.is_string()) entry.corrections.push_back(c.get<std::string>());
  if (entry.corrections.empty()) {
    if (out.sql != t.sql)
      entry.corrections.push_back("rewrote the SQL statement");
    else
      entry.corrections.push_back("no change applied");
  }
  out.trace.refinement_log.push_back(std::move(entry));
  (void)schema;
  return out;
}

// ---------------------------------------------------------------------------
// The refinement loop.
// ---------------------------------------------------------------------------

struct RefinementOutcome {
  synth::Triple triple;
  int iterations_used = 0;  // correction calls performed
  std::string terminal;     // "clean", "max_iterations", "uncorrectable"
  DiagnosisReport last_report;
};

using AuditSink = std::function<void(const Json&)>;

struct RefineOptions {
  int max_iterations = 3;
  DiagnoseOptions diagnose;
  AuditSink audit;  // optional
};

inline Result<RefinementOutcome> refine(const synth::Triple& draft,
                                        const kb::KnowledgeBase& k,
                                        const db::DatabaseSchema& schema,
                                        const std::string& db_path,
                                        llm::Gateway& gateway,
                                        const RefineOptions& opts = {}) {
  if (opts.max_iterations < 1)
    return make_error(Errc::config_invalid, "max_iterations must be >= 1");
  synth::Triple current = draft;
  current.status = synth::TripleStatus::draft;
  int corrections = 0;
  std::map<std::string, std::string> seen;  // error signature -> last SQL

  auto audit_record = [&](const DiagnosisReport& report,
                          const kb::Evidence* evidence,
                          const std::string& note) {
    if (!opts.audit) return;
    Json j;
    j["sample_id"] = current.sample_id;
    j["iteration"] = corrections;
    j["sql"] = current.sql;
    j["report"] = report_to_json(report);
    j["evidence"] =
        evidence ? evidence_to_json(*evidence) : Json::array();
    if (!note.empty()) j["note"] = note;
    opts.audit(j);
  };

  for (;;) {
    auto diagnosed = diagnose(current, k, schema, db_path, opts.diagnose);
    if (!diagnosed.is_ok()) return diagnosed.error();
    DiagnosisReport report = std::move(diagnosed).value();

    if (report.clean()) {
      audit_record(report, nullptr, "clean");
      current.status = synth::TripleStatus::verified;
      RefinementOutcome out;
      out.triple = std::move(current);
      out.iterations_used = corrections;
      out.terminal = "clean";
      out.last_report = std::move(report);
      return out;
    }
    if (corrections >= opts.max_iterations) {
      audit_record(report, nullptr, "iteration limit reached");
      current.status = synth::TripleStatus::rejected;
      RefinementOutcome out;
      out.triple = std::move(current);
      out.iterations_used = corrections;
      out.terminal = "max_iterations";
      out.last_report = std::move(report);
      return out;
    }

    auto evidence = retrieve_for_report(report, k);
    if (!evidence.is_ok()) return evidence.error();
    audit_record(report, &evidence.value(), "");

    std::string note;
    auto corrected = correct(current, report, evidence.value(), k, schema,
                             gateway, corrections + 1);
    ++corrections;
    if (corrected.is_ok()) {
      current = std::move(corrected).value();
    } else if (corrected.error().code == Errc::malformed_response ||
               corrected.error().code == Errc::constraint_violation) {
      // Unusable correction: keep the previous triple and let the repeat
      // detector or the iteration cap end the loop.
      synth::RationaleTrace::RefinementEntry entry;
      entry.iteration = corrections;
      for (const auto& e : report.errors)
        entry.errors.push_back(e.error_type + " at " + e.trace_location +
                               ": " + e.detail);
      entry.corrections.push_back("correction discarded: " +
                                  corrected.error().message);
      current.trace.refinement_log.push_back(std::move(entry));
    } else {
      return corrected.error();
    }

    std::string sig = report.signature();
    auto it = seen.find(sig);
    if (it != seen.end() && it->second == current.sql) {
      DiagnosisReport last = report;
      audit_record(report, nullptr,
                   "uncorrectable: same SQL returned twice for this error set");
      current.status = synth::TripleStatus::rejected;
      RefinementOutcome out;
      out.triple = std::move(current);
      out.iterations_used = corrections;
      out.terminal = "uncorrectable";
      out.last_report = std::move(last);
      return out;
    }
    seen[sig] = current.sql;
  }
}

}  // namespace sqlsynth::verify
