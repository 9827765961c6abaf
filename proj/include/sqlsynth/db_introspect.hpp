#pragma once

// Schema introspection and deterministic instance sampling for a SQLite
// database. Produces the schema model and row samples that every later
// stage (knowledge inference, generation, verification) consumes.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sqlsynth/core.hpp"
#include "sqlsynth/sqlite_db.hpp"

namespace sqlsynth::db {

using Json = nlohmann::ordered_json;

struct ColumnDef {
  std::string name;
  std::string declared_type;  // raw storage-type text as declared
  bool nullable = true;
};

struct TableDef {
  std::string name;
  std::vector<ColumnDef> columns;
  std::vector<std::string> primary_key;  // possibly empty

  const ColumnDef* find_column(std::string_view col) const {
    for (const auto& c : columns)
      if (iequals(c.name, col)) return &c;
    return nullptr;
  }
};

struct ForeignKeyDef {
  std::string from_table;
  std::string from_column;
  std::string to_table;
  std::string to_column;
};

struct DatabaseSchema {
  std::string db_name;
  std::vector<TableDef> tables;
  std::vector<ForeignKeyDef> foreign_keys;
  std::vector<std::string> warnings;  // dropped/odd catalog entries

  const TableDef* find_table(std::string_view name) const {
    for (const auto& t : tables)
      if (iequals(t.name, name)) return &t;
    return nullptr;
  }

  bool has_column(std::string_view table, std::string_view col) const {
    const TableDef* t = find_table(table);
    return t && t->find_column(col) != nullptr;
  }
};

struct InstanceSample {
  struct TableSample {
    std::string table;
    std::vector<std::string> columns;
    std::vector<std::vector<CellValue>> rows;
  };
  std::vector<TableSample> tables;
  int rows_per_table_cap = 0;
  std::int64_t seed = 0;

  const TableSample* find(std::string_view table) const {
    for (const auto& t : tables)
      if (iequals(t.table, table)) return &t;
    return nullptr;
  }
};

namespace detail {

inline bool is_internal_table(const std::string& name) {
  return name.rfind("sqlite_", 0) == 0;
}

}  // namespace detail

// Reads all user tables, columns, primary keys and foreign keys.
// Views and sqlite internal tables are excluded. Foreign keys that do not
// resolve against the catalog are dropped into `warnings` rather than kept.
inline Result<DatabaseSchema> introspect(const std::string& db_path) {
  SqliteDb db;
  if (Status st = db.open_readonly(db_path); !st) return st.error();

  DatabaseSchema schema;
  schema.db_name = std::filesystem::path(db_path).stem().string();

  auto names = db.query(
      "SELECT name FROM sqlite_master WHERE type='table' ORDER BY name;");
  if (!names) return names.error();

  for (const auto& row : names.value()) {
    const std::string& tname = row.at(0).s;
    if (detail::is_internal_table(tname)) continue;
    TableDef table;
    table.name = tname;

    auto cols = db.query("PRAGMA table_info(\"" + tname + "\");");
    if (!cols) return cols.error();
    // pk ordinal -> name, so composite keys keep declaration order
    std::map<std::int64_t, std::string> pk_order;
    for (const auto& c : cols.value()) {
      ColumnDef col;
      col.name = c.at(1).s;
      col.declared_type = c.at(2).s;
      col.nullable = c.at(3).i == 0;
      if (c.at(5).i > 0) pk_order[c.at(5).i] = col.name;
      table.columns.push_back(std::move(col));
    }
    for (const auto& [ord, name] : pk_order) table.primary_key.push_back(name);
    schema.tables.push_back(std::move(table));
  }

  if (schema.tables.empty())
    return make_error(Errc::empty_schema, db_path + ": no user tables");

  for (const auto& table : schema.tables) {
    auto fks = db.query("PRAGMA foreign_key_list(\"" + table.name + "\");");
    if (!fks) return fks.error();
    for (const auto& fk : fks.value()) {
      ForeignKeyDef def;
      def.from_table = table.name;
      def.to_table = fk.at(2).s;
      def.from_column = fk.at(3).s;
      def.to_column = fk.at(4).kind == CellValue::Kind::null ? "" : fk.at(4).s;

      const TableDef* target = schema.find_table(def.to_table);
      if (!target) {
        schema.warnings.push_back("dropped foreign key " + def.from_table + "." +
                                  def.from_column + " -> missing table " +
                                  def.to_table);
        continue;
      }
      // Implicit reference to the target's primary key.
      if (def.to_column.empty()) {
        if (target->primary_key.size() == 1) {
          def.to_column = target->primary_key.front();
        } else {
          schema.warnings.push_back("dropped foreign key " + def.from_table +
                                    "." + def.from_column +
                                    " -> unresolvable implicit key on " +
                                    def.to_table);
          continue;
        }
      }
      if (!table.find_column(def.from_column) ||
          !target->find_column(def.to_column)) {
        schema.warnings.push_back("dropped foreign key with unknown column: " +
                                  def.from_table + "." + def.from_column +
                                  " -> " + def.to_table + "." + def.to_column);
        continue;
      }
      if (iequals(def.from_table, def.to_table) &&
          iequals(def.from_column, def.to_column)) {
        schema.warnings.push_back("dropped self-loop foreign key on " +
                                  def.from_table + "." + def.from_column);
        continue;
      }
      schema.foreign_keys.push_back(std::move(def));
    }
  }
  return schema;
}

inline std::string blob_digest(const std::string& bytes) {
  return "blob:" + hex64(fnv1a64(bytes)) + ":" + std::to_string(bytes.size());
}

// Deterministic stride sample: rows ordered by rowid, every ceil(N/cap)-th
// row starting at offset (seed mod stride). Tables at or under the cap
// return every row. Pure function of (file bytes, cap, seed).
inline Result<InstanceSample> sample_instances(const DatabaseSchema& schema,
                                               const std::string& db_path,
                                               int rows_per_table,
                                               std::int64_t seed) {
  SqliteDb db;
  if (Status st = db.open_readonly(db_path); !st) return st.error();

  InstanceSample sample;
  sample.rows_per_table_cap = rows_per_table;
  sample.seed = seed;

  for (const auto& table : schema.tables) {
    InstanceSample::TableSample ts;
    ts.table = table.name;
    for (const auto& c : table.columns) ts.columns.push_back(c.name);

    auto count = db.query("SELECT COUNT(*) FROM \"" + table.name + "\";");
    if (!count)
      return make_error(Errc::query_failure,
                        table.name + ": " + count.error().message);
    const std::int64_t n = count.value().at(0).at(0).i;
    const std::int64_t cap = rows_per_table;

    std::string order = "rowid";
    {
      // WITHOUT ROWID tables reject the rowid pseudo-column; fall back to
      // the primary key, which such tables always declare.
      auto probe =
          db.query("SELECT rowid FROM \"" + table.name + "\" LIMIT 0;");
      if (!probe) {
        order.clear();
        for (const auto& pk : table.primary_key) {
          if (!order.empty()) order += ", ";
          order += "\"" + pk + "\"";
        }
        if (order.empty()) order = "1";
      }
    }

    std::string col_list;
    for (const auto& c : table.columns) {
      if (!col_list.empty()) col_list += ", ";
      col_list += "\"" + c.name + "\"";
    }

    auto rows = db.query("SELECT " + col_list + " FROM \"" + table.name +
                         "\" ORDER BY " + order + ";");
    if (!rows)
      return make_error(Errc::query_failure,
                        table.name + ": " + rows.error().message);

    if (n <= cap) {
      ts.rows = std::move(rows.value());
    } else {
      const std::int64_t stride = (n + cap - 1) / cap;
      const std::int64_t offset =
          ((seed % stride) + stride) % stride;  // nonnegative
      for (std::int64_t i = offset;
           i < n && static_cast<std::int64_t>(ts.rows.size()) < cap;
           i += stride)
        ts.rows.push_back(std::move(rows.value()[static_cast<size_t>(i)]));
    }
    for (auto& row : ts.rows)
      for (auto& cell : row)
        if (cell.kind == CellValue::Kind::blob) {
          cell.s = blob_digest(cell.s);
          cell.kind = CellValue::Kind::text;
        }
    sample.tables.push_back(std::move(ts));
  }
  return sample;
}

// ---------------------------------------------------------------------------
// Serialization.
// ---------------------------------------------------------------------------

inline Json cell_to_json(const CellValue& v) {
  switch (v.kind) {
    case CellValue::Kind::null: return nullptr;
    case CellValue::Kind::integer: return v.i;
    case CellValue::Kind::real: return v.r;
    default: return v.s;
  }
}

inline std::string cell_to_text(const CellValue& v) {
  switch (v.kind) {
    case CellValue::Kind::null: return "NULL";
    case CellValue::Kind::integer: return std::to_string(v.i);
    case CellValue::Kind::real: {
      std::string s = Json(v.r).dump();  // shortest round-trip form
      return s;
    }
    default: return v.s;
  }
}

inline Json schema_to_json(const DatabaseSchema& schema) {
  Json j;
  j["db_name"] = schema.db_name;
  j["tables"] = Json::array();
  for (const auto& t : schema.tables) {
    Json jt;
    jt["name"] = t.name;
    jt["columns"] = Json::array();
    for (const auto& c : t.columns)
      jt["columns"].push_back({{"name", c.name},
                               {"declared_type", c.declared_type},
                               {"nullable", c.nullable}});
    jt["primary_key"] = t.primary_key;
    j["tables"].push_back(std::move(jt));
  }
  j["foreign_keys"] = Json::array();
  for (const auto& fk : schema.foreign_keys)
    j["foreign_keys"].push_back({{"from_table", fk.from_table},
                                 {"from_column", fk.from_column},
                                 {"to_table", fk.to_table},
                                 {"to_column", fk.to_column}});
  if (!schema.warnings.empty()) j["warnings"] = schema.warnings;
  return j;
}

// Compact DDL-like rendering for prompts.
inline std::string schema_to_ddl_text(const DatabaseSchema& schema) {
  std::string out;
  for (const auto& t : schema.tables) {
    out += "CREATE TABLE " + t.name + " (\n";
    for (size_t i = 0; i < t.columns.size(); ++i) {
      const auto& c = t.columns[i];
      out += "  " + c.name;
      if (!c.declared_type.empty()) out += " " + c.declared_type;
      if (!c.nullable) out += " NOT NULL";
      if (t.primary_key.size() == 1 && iequals(t.primary_key[0], c.name))
        out += " PRIMARY KEY";
      if (i + 1 < t.columns.size()) out += ",";
      out += "\n";
    }
    if (t.primary_key.size() > 1) {
      out += "  PRIMARY KEY (";
      for (size_t i = 0; i < t.primary_key.size(); ++i) {
        if (i) out += ", ";
        out += t.primary_key[i];
      }
      out += ")\n";
    }
    out += ");\n";
  }
  for (const auto& fk : schema.foreign_keys)
    out += "-- FOREIGN KEY: " + fk.from_table + "." + fk.from_column + " -> " +
           fk.to_table + "." + fk.to_column + "\n";
  return out;
}

inline std::string sample_to_text(const InstanceSample& sample,
                                  int max_rows_per_table = 20) {
  std::string out;
  for (const auto& t : sample.tables) {
    out += "TABLE " + t.table + ":\n";
    out += "  ";
    for (size_t i = 0; i < t.columns.size(); ++i) {
      if (i) out += " | ";
      out += t.columns[i];
    }
    out += "\n";
    int shown = 0;
    for (const auto& row : t.rows) {
      if (shown++ >= max_rows_per_table) break;
      out += "  ";
      for (size_t i = 0; i < row.size(); ++i) {
        if (i) out += " | ";
        out += cell_to_text(row[i]);
      }
      out += "\n";
    }
  }
  return out;
}

}  // namespace sqlsynth::db
