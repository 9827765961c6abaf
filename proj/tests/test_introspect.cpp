#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "sqlsynth/db_introspect.hpp"
#include "support/fixture_db.hpp"

using namespace sqlsynth;

TEST_CASE("introspect captures tables, columns, keys") {
  auto dir = fixtures::fresh_dir("introspect_basic");
  auto path = fixtures::build_fixture_db(dir);
  auto schema = fixtures::fixture_schema(path);

  CHECK(schema.db_name == "schools");
  REQUIRE(schema.tables.size() == 2);
  // sqlite_master is ordered by name: satscores before schools.
  CHECK(schema.tables[0].name == "satscores");
  CHECK(schema.tables[1].name == "schools");

  const db::TableDef* schools = schema.find_table("schools");
  REQUIRE(schools != nullptr);
  REQUIRE(schools->columns.size() == 5);
  CHECK(schools->columns[0].name == "CDSCode");
  CHECK(schools->columns[1].name == "County");
  CHECK(schools->columns[1].declared_type == "TEXT");
  CHECK_FALSE(schools->columns[1].nullable);  // declared NOT NULL
  CHECK(schools->columns[4].name == "Charter");
  CHECK(schools->columns[4].nullable);
  CHECK(schools->primary_key == std::vector<std::string>{"CDSCode"});

  const db::TableDef* sat = schema.find_table("SATSCORES");  // case-blind
  REQUIRE(sat != nullptr);
  CHECK(sat->primary_key == std::vector<std::string>{"cds"});

  REQUIRE(schema.foreign_keys.size() == 1);
  CHECK(schema.foreign_keys[0].from_table == "satscores");
  CHECK(schema.foreign_keys[0].from_column == "cds");
  CHECK(schema.foreign_keys[0].to_table == "schools");
  CHECK(schema.foreign_keys[0].to_column == "CDSCode");
  CHECK(schema.warnings.empty());

  CHECK(schema.has_column("schools", "county"));
  CHECK_FALSE(schema.has_column("schools", "nope"));
}

TEST_CASE("introspect rejects databases without user tables") {
  auto dir = fixtures::fresh_dir("introspect_empty");
  auto path = (dir / "empty.db").string();
  {
    db::SqliteDb handle;
    REQUIRE(handle.open_create(path).is_ok());
  }
  auto schema = db::introspect(path);
  REQUIRE_FALSE(schema.is_ok());
  CHECK(schema.error().code == Errc::empty_schema);
}

TEST_CASE("implicit foreign key targets resolve to the primary key") {
  auto dir = fixtures::fresh_dir("introspect_fk");
  auto path = (dir / "fk.db").string();
  {
    db::SqliteDb handle;
    REQUIRE(handle.open_create(path).is_ok());
    REQUIRE(handle
                .exec("CREATE TABLE parent (id INTEGER PRIMARY KEY, n TEXT);"
                      "CREATE TABLE child (pid INTEGER REFERENCES parent, "
                      "v TEXT);")
                .is_ok());
  }
  auto schema = db::introspect(path);
  REQUIRE(schema.is_ok());
  REQUIRE(schema.value().foreign_keys.size() == 1);
  CHECK(schema.value().foreign_keys[0].from_column == "pid");
  CHECK(schema.value().foreign_keys[0].to_column == "id");
}

namespace {

std::string make_numbers_db(const std::filesystem::path& dir, int n) {
  auto path = (dir / "numbers.db").string();
  db::SqliteDb handle;
  if (!handle.open_create(path).is_ok()) throw std::runtime_error("create");
  if (!handle.exec("CREATE TABLE nums (id INTEGER PRIMARY KEY, v INTEGER);")
           .is_ok())
    throw std::runtime_error("ddl");
  for (int i = 1; i <= n; ++i) {
    std::string sql = "INSERT INTO nums VALUES (" + std::to_string(i) + ", " +
                      std::to_string(i * 10) + ");";
    if (!handle.exec(sql).is_ok()) throw std::runtime_error("insert");
  }
  return path;
}

std::vector<std::int64_t> sampled_ids(const db::InstanceSample& sample) {
  std::vector<std::int64_t> out;
  const auto* t = sample.find("nums");
  REQUIRE(t != nullptr);
  for (const auto& row : t->rows) out.push_back(row.at(0).i);
  return out;
}

}  // namespace

TEST_CASE("stride sampling follows the arithmetic rule") {
  auto dir = fixtures::fresh_dir("introspect_stride");
  auto path = make_numbers_db(dir, 10);
  auto schema = fixtures::fixture_schema(path);

  // Tables at or under the cap come back whole.
  auto all = db::sample_instances(schema, path, 10, 0);
  REQUIRE(all.is_ok());
  CHECK(sampled_ids(all.value()) ==
        std::vector<std::int64_t>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10});

  // N=10, cap=3 -> stride 4; rows at positions offset, offset+4, ...
  auto s0 = db::sample_instances(schema, path, 3, 0);
  REQUIRE(s0.is_ok());
  CHECK(sampled_ids(s0.value()) == std::vector<std::int64_t>{1, 5, 9});

  auto s1 = db::sample_instances(schema, path, 3, 1);
  REQUIRE(s1.is_ok());
  CHECK(sampled_ids(s1.value()) == std::vector<std::int64_t>{2, 6, 10});

  // Seeds agree modulo the stride.
  auto s5 = db::sample_instances(schema, path, 3, 5);
  REQUIRE(s5.is_ok());
  CHECK(sampled_ids(s5.value()) == sampled_ids(s1.value()));

  // Negative seeds still land on a nonnegative offset.
  auto sneg = db::sample_instances(schema, path, 3, -1);
  REQUIRE(sneg.is_ok());
  CHECK(sampled_ids(sneg.value()) == std::vector<std::int64_t>{4, 8});

  // Byte-identical reruns.
  auto again = db::sample_instances(schema, path, 3, 0);
  REQUIRE(again.is_ok());
  CHECK(db::sample_to_text(again.value()) == db::sample_to_text(s0.value()));
}

TEST_CASE("blob cells sample as stable digests") {
  auto dir = fixtures::fresh_dir("introspect_blob");
  auto path = (dir / "blobs.db").string();
  {
    db::SqliteDb handle;
    REQUIRE(handle.open_create(path).is_ok());
    REQUIRE(handle
                .exec("CREATE TABLE b (id INTEGER PRIMARY KEY, data BLOB);"
                      "INSERT INTO b VALUES (1, X'0102FF');")
                .is_ok());
  }
  auto schema = fixtures::fixture_schema(path);
  auto sample = db::sample_instances(schema, path, 5, 0);
  REQUIRE(sample.is_ok());
  const auto& cell = sample.value().tables[0].rows[0][1];
  CHECK(cell.kind == db::CellValue::Kind::text);
  std::string bytes{'\x01', '\x02', '\xff'};
  CHECK(cell.s == db::blob_digest(bytes));
  CHECK(cell.s.rfind("blob:", 0) == 0);
  CHECK(cell.s.substr(cell.s.rfind(':') + 1) == "3");
}

TEST_CASE("schema serializations carry the full structure") {
  auto dir = fixtures::fresh_dir("introspect_serialize");
  auto path = fixtures::build_fixture_db(dir);
  auto schema = fixtures::fixture_schema(path);

  db::Json j = db::schema_to_json(schema);
  CHECK(j["db_name"] == "schools");
  REQUIRE(j["tables"].size() == 2);
  CHECK(j["tables"][1]["name"] == "schools");
  CHECK(j["tables"][1]["columns"][0]["name"] == "CDSCode");
  CHECK(j["tables"][1]["primary_key"][0] == "CDSCode");
  REQUIRE(j["foreign_keys"].size() == 1);
  CHECK(j["foreign_keys"][0]["from_table"] == "satscores");
  CHECK_FALSE(j.contains("warnings"));

  std::string ddl = db::schema_to_ddl_text(schema);
  CHECK(ddl.find("CREATE TABLE schools (") != std::string::npos);
  CHECK(ddl.find("CDSCode TEXT PRIMARY KEY") != std::string::npos);
  CHECK(ddl.find("County TEXT NOT NULL") != std::string::npos);
  CHECK(ddl.find("-- FOREIGN KEY: satscores.cds -> schools.CDSCode") !=
        std::string::npos);

  auto sample = fixtures::fixture_sample(schema, path);
  std::string text = db::sample_to_text(sample);
  CHECK(text.find("TABLE schools:") != std::string::npos);
  CHECK(text.find("CDSCode | County | District | School | Charter") !=
        std::string::npos);
  CHECK(text.find("Lowell High School") != std::string::npos);

  // The row cap truncates rendering.
  std::string short_text = db::sample_to_text(sample, 1);
  CHECK(short_text.find("Alameda High School") != std::string::npos);
  CHECK(short_text.find("Encinal") == std::string::npos);
}
