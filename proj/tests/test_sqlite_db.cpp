#include <chrono>
#include <fstream>

#include <catch2/catch_amalgamated.hpp>

#include "sqlsynth/sqlite_db.hpp"
#include "support/fixture_db.hpp"

using namespace sqlsynth;
using namespace std::chrono_literals;

TEST_CASE("open_readonly rejects missing and non-database files") {
  auto dir = fixtures::fresh_dir("sqlite_open");

  db::SqliteDb missing;
  Status st = missing.open_readonly((dir / "nope.db").string());
  REQUIRE_FALSE(st.is_ok());
  CHECK(st.error().code == Errc::file_not_found);

  auto junk_path = dir / "junk.db";
  {
    std::ofstream out(junk_path);
    out << "this is not a sqlite file, definitely not 100 bytes of header";
  }
  db::SqliteDb junk;
  st = junk.open_readonly(junk_path.string());
  REQUIRE_FALSE(st.is_ok());
  CHECK(st.error().code == Errc::not_a_database);
}

TEST_CASE("read-only connections refuse writes") {
  auto dir = fixtures::fresh_dir("sqlite_ro");
  auto path = fixtures::build_fixture_db(dir);

  db::SqliteDb ro;
  REQUIRE(ro.open_readonly(path).is_ok());

  Status st = ro.exec("INSERT INTO schools VALUES ('x','x','x','x',0)");
  REQUIRE_FALSE(st.is_ok());

  st = ro.exec("DROP TABLE schools");
  REQUIRE_FALSE(st.is_ok());

  // Reads still work on the same handle.
  auto rows = ro.query("SELECT COUNT(*) FROM schools");
  REQUIRE(rows.is_ok());
  REQUIRE(rows.value().size() == 1);
  CHECK(rows.value()[0][0].i == 5);
}

TEST_CASE("query returns typed cells") {
  auto dir = fixtures::fresh_dir("sqlite_query");
  auto path = fixtures::build_fixture_db(dir);

  db::SqliteDb ro;
  REQUIRE(ro.open_readonly(path).is_ok());
  auto rows = ro.query(
      "SELECT sname, AvgScrMath, AvgScrMath * 1.5, NULL FROM satscores "
      "ORDER BY AvgScrMath DESC LIMIT 1");
  REQUIRE(rows.is_ok());
  REQUIRE(rows.value().size() == 1);
  const auto& r = rows.value()[0];
  REQUIRE(r.size() == 4);
  CHECK(r[0].kind == db::CellValue::Kind::text);
  CHECK(r[0].s == "Lowell High School");
  CHECK(r[1].kind == db::CellValue::Kind::integer);
  CHECK(r[1].i == 640);
  CHECK(r[2].kind == db::CellValue::Kind::real);
  CHECK(r[2].r == Catch::Approx(960.0));
  CHECK(r[3].kind == db::CellValue::Kind::null);

  auto bad = ro.query("SELECT definitely_not_a_column FROM schools");
  REQUIRE_FALSE(bad.is_ok());
  CHECK(bad.error().code == Errc::query_failure);
}

TEST_CASE("execute_with_timeout reports success, errors, and timeouts") {
  auto dir = fixtures::fresh_dir("sqlite_timeout");
  auto path = fixtures::build_fixture_db(dir);

  db::SqliteDb ro;
  REQUIRE(ro.open_readonly(path).is_ok());

  auto ok = ro.execute_with_timeout("SELECT * FROM schools", 5000ms);
  CHECK(ok.success);
  CHECK(ok.row_count == 5);
  CHECK_FALSE(ok.timed_out);

  auto bad = ro.execute_with_timeout("SELECT * FROM missing_table", 5000ms);
  CHECK_FALSE(bad.success);
  CHECK_FALSE(bad.timed_out);
  CHECK_FALSE(bad.error_text.empty());

  // A cross-join explosion cannot finish inside 50 ms; the progress handler
  // must abort it rather than hang the test.
  std::string blowup =
      "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x+1 FROM c) "
      "SELECT COUNT(*) FROM c";
  auto slow = ro.execute_with_timeout(blowup, 50ms);
  CHECK_FALSE(slow.success);
  CHECK(slow.timed_out);
  CHECK(slow.error_text == "statement timeout");
}

TEST_CASE("execute_with_timeout caps scanned rows") {
  auto dir = fixtures::fresh_dir("sqlite_rowcap");
  auto path = fixtures::build_fixture_db(dir);

  db::SqliteDb ro;
  REQUIRE(ro.open_readonly(path).is_ok());
  auto capped = ro.execute_with_timeout(
      "SELECT s1.CDSCode FROM schools s1, schools s2", 5000ms, 3);
  CHECK(capped.success);
  CHECK(capped.row_count == 3);
}
