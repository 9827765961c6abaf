#include <memory>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "sqlsynth/verification.hpp"
#include "support/expected_kb.hpp"
#include "support/fixture_db.hpp"
#include "support/scripting.hpp"

using namespace sqlsynth;
using synth::Triple;
using verify::DiagnosisReport;

namespace {

struct Fixture {
  std::string db_path;
  db::DatabaseSchema schema;
  kb::KnowledgeBase kb = fixtures::expected_kb();
};

Fixture& fx() {
  static Fixture f = [] {
    auto dir = fixtures::fresh_dir("verify_db");
    Fixture out;
    out.db_path = fixtures::build_fixture_db(dir);
    out.schema = fixtures::fixture_schema(out.db_path);
    return out;
  }();
  return f;
}

Triple make_triple(const std::string& sql,
                   std::vector<std::string> trace_tables) {
  Triple t;
  t.question = "test question";
  t.sql = sql;
  t.trace.complexity_level = 1;
  t.trace.tables_used = std::move(trace_tables);
  t.sample_id = "s0000";
  t.spec = {"education", "ranking_query", 1, 0};
  return t;
}

DiagnosisReport diagnose_ok(const Triple& t) {
  auto r = verify::diagnose(t, fx().kb, fx().schema, fx().db_path);
  REQUIRE(r.is_ok());
  return r.value();
}

bool has_error(const DiagnosisReport& r, const std::string& type) {
  for (const auto& e : r.errors)
    if (e.error_type == type) return true;
  return false;
}

const verify::DiagnosisError& first_error(const DiagnosisReport& r,
                                          const std::string& type) {
  for (const auto& e : r.errors)
    if (e.error_type == type) return e;
  FAIL("no error of type " + type);
  static verify::DiagnosisError dummy;
  return dummy;
}

// Replies with queued texts in order; trips the test if the queue runs dry.
struct QueueProvider : llm::Provider {
  std::vector<std::string> replies;
  size_t next = 0;

  Result<llm::ChatResponse> complete(const llm::ChatRequest&) override {
    if (next >= replies.size())
      return make_error(Errc::query_failure, "queue exhausted");
    llm::ChatResponse r;
    r.text = replies[next++];
    return r;
  }
  std::string model_id() const override { return "queued"; }
};

}  // namespace

TEST_CASE("a correct draft diagnoses clean") {
  Triple t = make_triple(
      "SELECT sname FROM satscores ORDER BY AvgScrMath DESC LIMIT 1;",
      {"satscores"});
  DiagnosisReport r = diagnose_ok(t);
  CHECK(r.clean());
  CHECK(r.warnings.empty());
  CHECK(r.execution.success);
  CHECK(r.execution.row_count == 1);
  CHECK(r.execution.engine_error.empty());
}

TEST_CASE("unparseable sql yields a single not_executable error") {
  Triple t = make_triple("SELEC sname FORM satscores", {"satscores"});
  DiagnosisReport r = diagnose_ok(t);
  REQUIRE(r.errors.size() == 1);
  CHECK(r.errors[0].error_type == "not_executable");
  CHECK(r.errors[0].trace_location == "sql_strategy");
  CHECK_FALSE(r.execution.success);
  CHECK_FALSE(r.execution.engine_error.empty());
}

TEST_CASE("unknown tables are named in the diagnosis") {
  Triple t = make_triple("SELECT * FROM teachers", {"teachers"});
  DiagnosisReport r = diagnose_ok(t);
  REQUIRE(has_error(r, "invalid_table"));
  const auto& e = first_error(r, "invalid_table");
  CHECK(e.table == "teachers");
  CHECK(e.trace_location == "table_selection");
  // The statement also fails to run, which is reported separately.
  CHECK(has_error(r, "not_executable"));
}

TEST_CASE("unknown columns point into the trace when possible") {
  Triple t = make_triple("SELECT Ghost FROM schools", {"schools"});
  t.trace.columns_used.push_back({"Ghost", "TEXT", "SELECT", ""});

  DiagnosisReport r = diagnose_ok(t);
  REQUIRE(has_error(r, "invalid_column"));
  const auto& e = first_error(r, "invalid_column");
  CHECK(e.table == "schools");
  CHECK(e.column == "Ghost");
  CHECK(e.trace_location == "column_selection[0]");

  // Without a matching trace entry the location falls back to the section.
  Triple bare = make_triple("SELECT Ghost FROM schools", {"schools"});
  DiagnosisReport bare_report = diagnose_ok(bare);
  CHECK(first_error(bare_report, "invalid_column").trace_location ==
        "column_selection");
}

TEST_CASE("aggregating an identifier is a type mismatch") {
  Triple t = make_triple(
      "SELECT County, AVG(CDSCode) FROM schools GROUP BY County", {"schools"});
  auto think = fixtures::count_example().think;
  auto trace = synth::trace_from_json(think);
  REQUIRE(trace.is_ok());
  t.trace = trace.value();

  DiagnosisReport r = diagnose_ok(t);
  REQUIRE(r.errors.size() == 1);
  const auto& e = r.errors[0];
  CHECK(e.error_type == "aggregation_type_mismatch");
  CHECK(e.table == "schools");
  CHECK(e.column == "CDSCode");
  CHECK(e.detail.find("AVG(schools.CDSCode)") != std::string::npos);
  CHECK(e.detail.find("identifier") != std::string::npos);
  // CDSCode sits at index 1 of the counting trace.
  CHECK(e.trace_location == "column_selection[1]");
  CHECK(r.execution.success);  // SQLite happily averages text
}

TEST_CASE("count is always a legal aggregation") {
  Triple t = make_triple(
      "SELECT County, COUNT(CDSCode) FROM schools GROUP BY County",
      {"schools"});
  DiagnosisReport r = diagnose_ok(t);
  CHECK(r.clean());
  CHECK(r.execution.row_count == 3);
}

TEST_CASE("joins outside the relation layer are inconsistent") {
  SECTION("an unknown join pair is an error") {
    Triple t = make_triple(
        "SELECT s.School FROM schools s JOIN satscores x ON x.sname = "
        "s.School",
        {"schools", "satscores"});
    DiagnosisReport r = diagnose_ok(t);
    REQUIRE(has_error(r, "join_inconsistency"));
    const auto& e = first_error(r, "join_inconsistency");
    CHECK(e.table == "satscores");
    CHECK(e.column == "sname");
    CHECK(e.other_table == "schools");
    CHECK(e.detail.find("satscores.sname = schools.School") !=
          std::string::npos);
  }

  SECTION("an inferred edge downgrades the error to a warning") {
    kb::KnowledgeBase k = fx().kb;
    kb::RelationLayer::JoinEdge edge;
    edge.from_table = "satscores";
    edge.from_column = "sname";
    edge.to_table = "schools";
    edge.to_column = "School";
    edge.cardinality = "1:1";
    edge.inferred = true;
    k.k6.join_edges.push_back(edge);

    Triple t = make_triple(
        "SELECT s.School FROM schools s JOIN satscores x ON x.sname = "
        "s.School",
        {"schools", "satscores"});
    auto r = verify::diagnose(t, k, fx().schema, fx().db_path);
    REQUIRE(r.is_ok());
    CHECK(r.value().clean());
    REQUIRE(r.value().warnings.size() == 1);
    CHECK(r.value().warnings[0].find("inferred") != std::string::npos);
  }

  SECTION("the declared foreign key join is silent") {
    Triple t = make_triple(
        "SELECT s.School FROM schools s JOIN satscores x ON x.cds = "
        "s.CDSCode",
        {"schools", "satscores"});
    DiagnosisReport r = diagnose_ok(t);
    CHECK(r.clean());
    CHECK(r.warnings.empty());
  }
}

TEST_CASE("the trace must name the tables the sql uses") {
  Triple t = make_triple("SELECT sname FROM satscores", {"schools"});
  DiagnosisReport r = diagnose_ok(t);
  REQUIRE(has_error(r, "trace_sql_divergence"));
  const auto& e = first_error(r, "trace_sql_divergence");
  CHECK(e.trace_location == "table_selection");
  CHECK(e.detail.find("{schools}") != std::string::npos);
  CHECK(e.detail.find("{satscores}") != std::string::npos);

  // Case differences are not divergence.
  Triple cased = make_triple("SELECT sname FROM SATSCORES", {"SatScores"});
  CHECK(diagnose_ok(cased).clean());
}

TEST_CASE("runaway sql is stopped by the statement timeout") {
  Triple t = make_triple(
      "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x+1 FROM c) "
      "SELECT count(*) FROM c",
      {});
  verify::DiagnoseOptions opts;
  opts.timeout_ms = 50;
  auto r = verify::diagnose(t, fx().kb, fx().schema, fx().db_path, opts);
  REQUIRE(r.is_ok());
  REQUIRE(has_error(r.value(), "not_executable"));
  CHECK(first_error(r.value(), "not_executable").detail == "statement timeout");
}

TEST_CASE("a missing database is an infrastructure failure, not a diagnosis") {
  Triple t = make_triple("SELECT 1", {});
  auto r = verify::diagnose(t, fx().kb, fx().schema, "/nope/missing.db");
  REQUIRE_FALSE(r.is_ok());
  CHECK(r.error().code == Errc::file_not_found);
}

TEST_CASE("every reported trace location resolves against the trace") {
  std::vector<Triple> battery = {
      make_triple("SELEC nonsense", {"schools"}),
      make_triple("SELECT * FROM teachers", {"teachers"}),
      make_triple("SELECT Ghost FROM schools", {"schools"}),
      make_triple("SELECT AVG(CDSCode) FROM schools", {"schools"}),
      make_triple("SELECT s.School FROM schools s JOIN satscores x ON "
                  "x.sname = s.School",
                  {"schools", "satscores"}),
      make_triple("SELECT sname FROM satscores", {"schools"}),
  };
  battery[2].trace.columns_used.push_back({"Ghost", "TEXT", "SELECT", ""});
  for (const auto& t : battery) {
    DiagnosisReport r = diagnose_ok(t);
    for (const auto& e : r.errors) {
      INFO(e.error_type << " at " << e.trace_location);
      CHECK(verify::trace_location_resolves(t.trace, e.trace_location));
    }
  }
}

TEST_CASE("trace location resolution is strict about indices") {
  synth::RationaleTrace trace;
  trace.columns_used.push_back({"a", "", "", ""});
  CHECK(verify::trace_location_resolves(trace, "table_selection"));
  CHECK(verify::trace_location_resolves(trace, "sql_strategy"));
  CHECK(verify::trace_location_resolves(trace, "column_selection[0]"));
  CHECK_FALSE(verify::trace_location_resolves(trace, "column_selection[1]"));
  CHECK_FALSE(verify::trace_location_resolves(trace, "column_selection[-1]"));
  CHECK_FALSE(verify::trace_location_resolves(trace, "column_selection[x]"));
  CHECK_FALSE(verify::trace_location_resolves(trace, "somewhere_else"));
}

TEST_CASE("report signatures ignore error order") {
  DiagnosisReport a;
  a.errors.push_back({"invalid_column", "d1", "l1", "schools", "Ghost", ""});
  a.errors.push_back({"invalid_table", "d2", "l2", "teachers", "", ""});
  DiagnosisReport b;
  b.errors.push_back({"invalid_table", "x", "y", "teachers", "", ""});
  b.errors.push_back({"invalid_column", "x", "y", "schools", "Ghost", ""});
  CHECK(a.signature() == b.signature());

  DiagnosisReport c;
  c.errors.push_back({"invalid_column", "d", "l", "schools", "County", ""});
  CHECK(a.signature() != c.signature());
  CHECK(DiagnosisReport{}.signature().empty());
}

TEST_CASE("report evidence merges and deduplicates across errors") {
  DiagnosisReport r;
  r.errors.push_back(
      {"invalid_column", "", "", "satscores", "AvgScrMat", ""});
  r.errors.push_back(
      {"invalid_column", "", "", "satscores", "AvgScrMth", ""});
  r.errors.push_back({"not_executable", "", "", "", "", ""});  // no evidence

  auto ev = verify::retrieve_for_report(r, fx().kb);
  REQUIRE(ev.is_ok());
  int k1_math = 0;
  for (const auto& e : ev.value().entries)
    if (e.layer == "K1" && e.key == "satscores.AvgScrMath") ++k1_math;
  CHECK(k1_math == 1);  // both near misses resolve to it; merged once

  DiagnosisReport unknown;
  unknown.errors.push_back({"weird_type", "", "", "", "", ""});
  REQUIRE_FALSE(verify::retrieve_for_report(unknown, fx().kb).is_ok());
}

TEST_CASE("question edits are reserved for semantic mismatches") {
  DiagnosisReport agg;
  agg.errors.push_back(
      {"aggregation_type_mismatch", "", "", "schools", "CDSCode", ""});
  CHECK(verify::question_edit_allowed(agg));

  DiagnosisReport div;
  div.errors.push_back({"trace_sql_divergence", "", "", "", "", ""});
  CHECK(verify::question_edit_allowed(div));

  DiagnosisReport col;
  col.errors.push_back({"invalid_column", "", "", "schools", "Ghost", ""});
  CHECK_FALSE(verify::question_edit_allowed(col));
  CHECK_FALSE(verify::question_edit_allowed(DiagnosisReport{}));
}

TEST_CASE("rendered error and evidence blocks read as bullet lists") {
  DiagnosisReport r;
  r.errors.push_back({"invalid_column", "bad", "column_selection[0]",
                      "schools", "Ghost", ""});
  CHECK(verify::errors_text(r) ==
        "- invalid_column at column_selection[0]: bad");
  CHECK(verify::errors_text(DiagnosisReport{}) == "(none)");

  kb::Evidence ev;
  CHECK(verify::evidence_text(ev) == "(none)");
  ev.entries.push_back({"K1", "schools.County", "a fact"});
  CHECK(verify::evidence_text(ev) == "- [K1] a fact");
}

TEST_CASE("correction applies the model's fix and logs the iteration") {
  Triple t = make_triple("SELECT Ghost FROM schools", {"schools"});
  DiagnosisReport report = diagnose_ok(t);
  auto evidence = verify::retrieve_for_report(report, fx().kb);
  REQUIRE(evidence.is_ok());

  fixtures::ScriptHarness h;
  db::Json reply;
  reply["sql"] = "```sql\nSELECT School FROM schools\n```";
  reply["corrections"] =
      db::Json::array({"replaced Ghost with the School column"});
  h.provider->set_fallback(reply.dump());

  auto fixed = verify::correct(t, report, evidence.value(), fx().kb,
                               fx().schema, h.gateway, 1);
  REQUIRE(fixed.is_ok());
  CHECK(fixed.value().sql == "SELECT School FROM schools");
  CHECK(fixed.value().question == t.question);
  REQUIRE(fixed.value().trace.refinement_log.size() == 1);
  const auto& entry = fixed.value().trace.refinement_log[0];
  CHECK(entry.iteration == 1);
  REQUIRE_FALSE(entry.errors.empty());
  CHECK(entry.errors[0].find("invalid_column") != std::string::npos);
  CHECK(entry.corrections ==
        std::vector<std::string>{"replaced Ghost with the School column"});
}

TEST_CASE("correction edits the question only when the error class allows") {
  fixtures::ScriptHarness h;
  db::Json reply;
  reply["sql"] = "SELECT County FROM schools";
  reply["question"] = "an edited question";
  h.provider->set_fallback(reply.dump());

  Triple agg = make_triple("SELECT AVG(CDSCode) FROM schools", {"schools"});
  DiagnosisReport agg_report = diagnose_ok(agg);
  REQUIRE(has_error(agg_report, "aggregation_type_mismatch"));
  auto fixed = verify::correct(agg, agg_report, {}, fx().kb, fx().schema,
                               h.gateway, 1);
  REQUIRE(fixed.is_ok());
  CHECK(fixed.value().question == "an edited question");

  Triple col = make_triple("SELECT Ghost FROM schools", {"schools"});
  DiagnosisReport col_report = diagnose_ok(col);
  auto kept = verify::correct(col, col_report, {}, fx().kb, fx().schema,
                              h.gateway, 1);
  REQUIRE(kept.is_ok());
  CHECK(kept.value().question == "test question");
}

TEST_CASE("correction keeps the log when the model rewrites the trace") {
  fixtures::ScriptHarness h;
  db::Json reply;
  reply["sql"] = "SELECT sname FROM satscores ORDER BY AvgScrMath DESC "
                 "LIMIT 1;";
  reply["think"] = fixtures::ranking_example().think;
  h.provider->set_fallback(reply.dump());

  Triple t = make_triple("SELECT Ghost FROM satscores", {"satscores"});
  t.trace.refinement_log.push_back({1, {"earlier error"}, {"earlier fix"}});
  DiagnosisReport report = diagnose_ok(t);

  auto fixed = verify::correct(t, report, {}, fx().kb, fx().schema,
                               h.gateway, 2);
  REQUIRE(fixed.is_ok());
  CHECK(fixed.value().trace.main_scenario == "ranking_query");
  REQUIRE(fixed.value().trace.refinement_log.size() == 2);
  CHECK(fixed.value().trace.refinement_log[0].errors ==
        std::vector<std::string>{"earlier error"});
  CHECK(fixed.value().trace.refinement_log[1].iteration == 2);
}

TEST_CASE("correction defaults its log entry when the model omits one") {
  fixtures::ScriptHarness h;
  db::Json changed;
  changed["sql"] = "SELECT County FROM schools";
  h.provider->set_fallback(changed.dump());

  Triple t = make_triple("SELECT Ghost FROM schools", {"schools"});
  DiagnosisReport report = diagnose_ok(t);
  auto fixed = verify::correct(t, report, {}, fx().kb, fx().schema,
                               h.gateway, 1);
  REQUIRE(fixed.is_ok());
  CHECK(fixed.value().trace.refinement_log[0].corrections ==
        std::vector<std::string>{"rewrote the SQL statement"});

  db::Json same;
  same["sql"] = t.sql;
  h.provider->set_fallback(same.dump());
  auto unchanged = verify::correct(t, report, {}, fx().kb, fx().schema,
                                   h.gateway, 1);
  REQUIRE(unchanged.is_ok());
  CHECK(unchanged.value().trace.refinement_log[0].corrections ==
        std::vector<std::string>{"no change applied"});

  auto clean = verify::correct(t, DiagnosisReport{}, {}, fx().kb,
                               fx().schema, h.gateway, 1);
  REQUIRE_FALSE(clean.is_ok());
  CHECK(clean.error().code == Errc::config_invalid);
}

TEST_CASE("refinement passes a clean draft straight through") {
  fixtures::ScriptHarness h;  // no scripts: the provider must stay silent
  Triple t = make_triple(
      "SELECT sname FROM satscores ORDER BY AvgScrMath DESC LIMIT 1;",
      {"satscores"});

  std::vector<db::Json> audit;
  verify::RefineOptions opts;
  opts.audit = [&](const db::Json& j) { audit.push_back(j); };

  auto out = verify::refine(t, fx().kb, fx().schema, fx().db_path, h.gateway,
                            opts);
  REQUIRE(out.is_ok());
  CHECK(out.value().terminal == "clean");
  CHECK(out.value().iterations_used == 0);
  CHECK(out.value().triple.status == synth::TripleStatus::verified);
  CHECK(out.value().triple.trace.refinement_log.empty());
  REQUIRE(audit.size() == 1);
  CHECK(audit[0]["note"] == "clean");
  CHECK(audit[0]["iteration"] == 0);
}

TEST_CASE("refinement fixes a broken draft in one iteration") {
  fixtures::ScriptHarness h;
  db::Json reply;
  reply["sql"] = "SELECT sname FROM satscores ORDER BY AvgScrMath DESC "
                 "LIMIT 1;";
  reply["corrections"] = db::Json::array({"used the real column name"});
  h.provider->set_fallback(reply.dump());

  Triple t = make_triple("SELECT snme FROM satscores", {"satscores"});
  std::vector<db::Json> audit;
  verify::RefineOptions opts;
  opts.audit = [&](const db::Json& j) { audit.push_back(j); };

  auto out = verify::refine(t, fx().kb, fx().schema, fx().db_path, h.gateway,
                            opts);
  REQUIRE(out.is_ok());
  CHECK(out.value().terminal == "clean");
  CHECK(out.value().iterations_used == 1);
  CHECK(out.value().triple.status == synth::TripleStatus::verified);
  REQUIRE(out.value().triple.trace.refinement_log.size() == 1);
  CHECK(out.value().triple.trace.refinement_log[0].corrections ==
        std::vector<std::string>{"used the real column name"});
  // One record for the failed pass (with evidence), one for the clean pass.
  REQUIRE(audit.size() == 2);
  CHECK(audit[0]["iteration"] == 0);
  CHECK_FALSE(audit[0].contains("note"));
  CHECK(audit[1]["note"] == "clean");
  CHECK(audit[1]["iteration"] == 1);
}

TEST_CASE("repeating the same sql for the same errors is uncorrectable") {
  fixtures::ScriptHarness h;
  db::Json reply;
  reply["sql"] = "SELECT Ghost FROM schools";  // the model refuses to budge
  h.provider->set_fallback(reply.dump());

  Triple t = make_triple("SELECT Ghost FROM schools", {"schools"});
  auto out = verify::refine(t, fx().kb, fx().schema, fx().db_path, h.gateway);
  REQUIRE(out.is_ok());
  CHECK(out.value().terminal == "uncorrectable");
  CHECK(out.value().triple.status == synth::TripleStatus::rejected);
  CHECK(out.value().iterations_used == 2);
  CHECK_FALSE(out.value().last_report.clean());
}

TEST_CASE("distinct failed corrections run into the iteration cap") {
  auto provider = std::make_shared<QueueProvider>();
  auto wrap = [](const std::string& sql) {
    db::Json j;
    j["sql"] = sql;
    return j.dump();
  };
  provider->replies = {wrap("SELECT GhostA FROM schools"),
                       wrap("SELECT GhostB FROM schools"),
                       wrap("SELECT GhostC FROM schools")};
  llm::Gateway gateway(provider, llm::ProviderConfig{});

  Triple t = make_triple("SELECT GhostZ FROM schools", {"schools"});
  std::vector<db::Json> audit;
  verify::RefineOptions opts;
  opts.audit = [&](const db::Json& j) { audit.push_back(j); };

  auto out = verify::refine(t, fx().kb, fx().schema, fx().db_path, gateway,
                            opts);
  REQUIRE(out.is_ok());
  CHECK(out.value().terminal == "max_iterations");
  CHECK(out.value().iterations_used == 3);
  CHECK(out.value().triple.status == synth::TripleStatus::rejected);
  CHECK(out.value().triple.sql == "SELECT GhostC FROM schools");
  CHECK(out.value().triple.trace.refinement_log.size() == 3);
  REQUIRE(audit.size() == 4);
  CHECK(audit.back()["note"] == "iteration limit reached");
  CHECK(audit.back()["iteration"] == 3);
  CHECK(provider->next == 3);  // every queued reply consumed exactly once
}

TEST_CASE("discarded corrections still close the loop") {
  fixtures::ScriptHarness h;
  h.provider->set_fallback("{}");  // never contains a sql string

  Triple t = make_triple("SELECT Ghost FROM schools", {"schools"});
  auto out = verify::refine(t, fx().kb, fx().schema, fx().db_path, h.gateway);
  REQUIRE(out.is_ok());
  CHECK(out.value().terminal == "uncorrectable");
  CHECK(out.value().triple.sql == t.sql);
  REQUIRE_FALSE(out.value().triple.trace.refinement_log.empty());
  CHECK(out.value().triple.trace.refinement_log[0].corrections[0].find(
            "correction discarded") != std::string::npos);
}

TEST_CASE("refinement rejects a nonsensical iteration budget") {
  fixtures::ScriptHarness h;
  Triple t = make_triple("SELECT 1", {});
  verify::RefineOptions opts;
  opts.max_iterations = 0;
  auto out = verify::refine(t, fx().kb, fx().schema, fx().db_path, h.gateway,
                            opts);
  REQUIRE_FALSE(out.is_ok());
  CHECK(out.error().code == Errc::config_invalid);
}
