#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "sqlsynth/sql_analysis.hpp"
#include "support/fixture_db.hpp"

using namespace sqlsynth;

namespace {

db::DatabaseSchema& schema() {
  static db::DatabaseSchema s = [] {
    auto dir = fixtures::fresh_dir("sql_analysis");
    return fixtures::fixture_schema(fixtures::build_fixture_db(dir));
  }();
  return s;
}

sql::SqlFacts facts_of(const std::string& sql_text) {
  auto r = sql::extract_facts(sql_text, &schema());
  REQUIRE(r.is_ok());
  return std::move(r).value();
}

int level_of(const std::string& sql_text) {
  return sql::classify_complexity(facts_of(sql_text)).level;
}

}  // namespace

TEST_CASE("facts capture tables, joins, and aggregations") {
  auto f = facts_of(
      "SELECT s.County, AVG(t.AvgScrMath) FROM schools s "
      "JOIN satscores t ON s.CDSCode = t.cds GROUP BY s.County");

  CHECK(f.tables == std::vector<std::string>{"schools", "satscores"});
  CHECK(f.table_count == 2);
  CHECK(f.has("join"));
  CHECK(f.has("group_by"));

  REQUIRE(f.join_conditions.size() == 1);
  const auto& jc = f.join_conditions[0];
  CHECK(jc.op == "=");
  CHECK_FALSE(jc.from_where);
  CHECK(jc.left.table == "schools");
  CHECK(jc.left.column == "CDSCode");
  CHECK(jc.left.resolution == sql::ColumnRef::Resolution::schema_table);
  CHECK(jc.right.table == "satscores");
  CHECK(jc.right.column == "cds");

  REQUIRE(f.aggregations.size() == 1);
  CHECK(f.aggregations[0].function == "AVG");
  REQUIRE(f.aggregations[0].has_column_arg);
  CHECK(f.aggregations[0].arg.table == "satscores");
  CHECK(f.aggregations[0].arg.column == "AvgScrMath");
  CHECK_FALSE(f.aggregations[0].windowed);
}

TEST_CASE("where-clause equalities double as join conditions") {
  auto f = facts_of(
      "SELECT * FROM schools s, satscores t WHERE s.CDSCode = t.cds");
  CHECK(f.has("join"));  // comma join counts
  REQUIRE(f.join_conditions.size() == 1);
  CHECK(f.join_conditions[0].from_where);

  // Single-table comparisons are not join conditions.
  auto g = facts_of("SELECT * FROM satscores WHERE AvgScrMath = AvgScrRead");
  CHECK(g.join_conditions.empty());
  CHECK_FALSE(g.has("join"));
}

TEST_CASE("column resolution distinguishes schema, derived, unresolved") {
  auto f = facts_of(
      "SELECT sub.m, ghost.x FROM (SELECT MAX(AvgScrMath) AS m FROM "
      "satscores) sub");
  bool saw_derived = false, saw_unresolved = false;
  for (const auto& c : f.columns) {
    if (c.column == "m" && c.resolution == sql::ColumnRef::Resolution::derived)
      saw_derived = true;
    if (c.column == "x" &&
        c.resolution == sql::ColumnRef::Resolution::unresolved &&
        c.table == "ghost")
      saw_unresolved = true;
  }
  CHECK(saw_derived);
  CHECK(saw_unresolved);

  // A bare unknown name over a single table is pinned to that table so
  // diagnosis can name it.
  auto g = facts_of("SELECT nonexistent FROM schools");
  REQUIRE(g.columns.size() == 1);
  CHECK(g.columns[0].table == "schools");
  CHECK(g.columns[0].column == "nonexistent");
  CHECK(g.columns[0].resolution == sql::ColumnRef::Resolution::schema_table);
}

TEST_CASE("feature flags track their syntax") {
  CHECK(facts_of("SELECT DISTINCT County FROM schools").has("distinct"));
  CHECK(facts_of("SELECT 1 FROM schools LIMIT 3").has("limit"));
  CHECK(facts_of("SELECT 1 FROM schools ORDER BY County").has("order_by"));
  CHECK(facts_of("SELECT CASE WHEN Charter = 1 THEN 'y' ELSE 'n' END "
                 "FROM schools")
            .has("case_when"));
  CHECK(facts_of("SELECT County FROM schools UNION SELECT sname FROM "
                 "satscores")
            .has("union"));
  CHECK(facts_of("SELECT RANK() OVER (ORDER BY AvgScrMath) FROM satscores")
            .has("window_function"));

  auto cte = facts_of("WITH t AS (SELECT * FROM schools) SELECT * FROM t");
  CHECK(cte.has("cte"));
  CHECK_FALSE(cte.has("recursive_cte"));

  auto rec = facts_of(
      "WITH RECURSIVE c(n) AS (SELECT 1 UNION ALL SELECT n + 1 FROM c "
      "WHERE n < 3) SELECT n FROM c");
  CHECK(rec.has("recursive_cte"));
  CHECK(rec.has("cte"));  // recursive implies plain cte

  auto corr = facts_of(
      "SELECT School FROM schools s WHERE EXISTS (SELECT 1 FROM satscores t "
      "WHERE t.cds = s.CDSCode)");
  CHECK(corr.has("subquery"));
  CHECK(corr.has("correlated_subquery"));
}

TEST_CASE("cte names do not count as schema tables") {
  auto f = facts_of(
      "WITH ranked AS (SELECT * FROM satscores) SELECT * FROM ranked");
  CHECK(f.tables == std::vector<std::string>{"satscores"});
  CHECK(f.table_count == 1);
}

TEST_CASE("complexity classification is top-down") {
  // Level 4: structural features win over everything below.
  CHECK(level_of("SELECT RANK() OVER (ORDER BY AvgScrMath) FROM satscores") ==
        4);
  CHECK(level_of("WITH t AS (SELECT * FROM schools) SELECT * FROM t") == 4);
  CHECK(level_of("WITH RECURSIVE c(n) AS (SELECT 1 UNION ALL SELECT n + 1 "
                 "FROM c WHERE n < 3) SELECT n FROM c") == 4);

  // Level 3: subquery family, or sprawling joins.
  CHECK(level_of("SELECT * FROM schools WHERE CDSCode IN "
                 "(SELECT cds FROM satscores)") == 3);
  CHECK(level_of("SELECT CASE WHEN Charter = 1 THEN 'y' ELSE 'n' END "
                 "FROM schools") == 3);
  CHECK(level_of("SELECT County FROM schools UNION SELECT sname "
                 "FROM satscores") == 3);
  // table_count counts distinct tables: a four-way self-join of two tables
  // stays at two, so it does not escalate.
  CHECK(level_of("SELECT * FROM schools a JOIN satscores b ON a.CDSCode = "
                 "b.cds JOIN schools c ON c.CDSCode = b.cds JOIN satscores d "
                 "ON d.cds = c.CDSCode") == 1);
  {
    // Four distinct tables push a bare join to level 3.
    auto wide = sql::extract_facts(
        "SELECT * FROM a JOIN b ON a.x = b.x JOIN c ON c.y = b.y "
        "JOIN d ON d.z = c.z");
    REQUIRE(wide.is_ok());
    auto cls = sql::classify_complexity(wide.value());
    CHECK(wide.value().table_count == 4);
    CHECK(cls.level == 3);
    CHECK(cls.matched_features == std::vector<std::string>{"join"});
  }

  // Level 2: modest join with aggregation machinery.
  CHECK(level_of("SELECT s.County, COUNT(*) FROM schools s JOIN satscores t "
                 "ON s.CDSCode = t.cds GROUP BY s.County") == 2);
  CHECK(level_of("SELECT s.County, AVG(t.AvgScrMath) FROM schools s JOIN "
                 "satscores t ON s.CDSCode = t.cds GROUP BY s.County "
                 "HAVING AVG(t.AvgScrMath) > 500") == 2);

  // Level 1: everything else, including joins without aggregation and
  // aggregation without joins.
  CHECK(level_of("SELECT sname FROM satscores ORDER BY AvgScrMath DESC "
                 "LIMIT 1") == 1);
  CHECK(level_of("SELECT s.School, t.AvgScrMath FROM schools s JOIN "
                 "satscores t ON s.CDSCode = t.cds") == 1);
  CHECK(level_of("SELECT County, COUNT(*) FROM schools GROUP BY County") == 1);
}

TEST_CASE("matched features justify every level above one") {
  const char* queries[] = {
      "SELECT sname FROM satscores",
      "SELECT sname FROM satscores ORDER BY AvgScrMath DESC LIMIT 1",
      "SELECT County, COUNT(*) FROM schools GROUP BY County",
      "SELECT s.County, COUNT(*) FROM schools s JOIN satscores t ON "
      "s.CDSCode = t.cds GROUP BY s.County",
      "SELECT * FROM schools WHERE CDSCode IN (SELECT cds FROM satscores)",
      "SELECT CASE WHEN Charter = 1 THEN 'y' END FROM schools",
      "SELECT RANK() OVER (ORDER BY AvgScrMath) FROM satscores",
      "WITH t AS (SELECT 1 AS x) SELECT x FROM t",
  };
  for (const char* q : queries) {
    auto c = sql::classify_complexity(facts_of(q));
    INFO(q);
    if (c.level > 1) CHECK_FALSE(c.matched_features.empty());
    for (const auto& feat : c.matched_features) CHECK_FALSE(feat.empty());
  }
}

TEST_CASE("windowed aggregates do not count as plain aggregation") {
  auto f = facts_of(
      "SELECT s.County, SUM(t.NumTstTakr) OVER (PARTITION BY s.County) "
      "FROM schools s JOIN satscores t ON s.CDSCode = t.cds");
  REQUIRE(f.aggregations.size() == 1);
  CHECK(f.aggregations[0].windowed);
  CHECK_FALSE(f.has_plain_aggregation());
  // Window function forces level 4 regardless.
  CHECK(sql::classify_complexity(f).level == 4);
}

TEST_CASE("join facts imply the join feature") {
  const char* queries[] = {
      "SELECT * FROM schools s, satscores t WHERE s.CDSCode = t.cds",
      "SELECT * FROM schools s JOIN satscores t ON s.CDSCode = t.cds",
      "SELECT * FROM schools CROSS JOIN satscores",
  };
  for (const char* q : queries) {
    auto f = facts_of(q);
    INFO(q);
    if (!f.join_conditions.empty()) CHECK(f.has("join"));
  }
  auto rec = facts_of(
      "WITH RECURSIVE c(n) AS (SELECT 1 UNION ALL SELECT n + 1 FROM c "
      "WHERE n < 3) SELECT n FROM c");
  if (rec.has("recursive_cte")) CHECK(rec.has("cte"));
}

TEST_CASE("facts serialize to json") {
  auto f = facts_of(
      "SELECT s.County, COUNT(*) FROM schools s JOIN satscores t ON "
      "s.CDSCode = t.cds GROUP BY s.County");
  db::Json j = sql::facts_to_json(f);
  CHECK(j["tables"].size() == 2);
  CHECK(j["table_count"] == 2);
  CHECK(j["join_conditions"][0]["op"] == "=");
  CHECK(j["aggregations"][0]["function"] == "COUNT");
  CHECK(j["aggregations"][0]["argument"] == "*");

  auto c = sql::classify_complexity(f);
  db::Json cj = sql::complexity_to_json(c);
  CHECK(cj["level"] == "L2");
  REQUIRE(cj["matched_features"].is_array());
  CHECK(cj["matched_features"][0] == "join");
}
