#pragma once

// The six-layer semantic knowledge base: layer records, JSON codecs,
// schema-directed validation and repair, evidence retrieval for the
// verifier, and on-disk persistence with a resume manifest.

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sqlsynth/db_introspect.hpp"

namespace sqlsynth::kb {

using db::Json;

// ---------------------------------------------------------------------------
// Layer records.
// ---------------------------------------------------------------------------

struct MetadataLayer {  // K1
  struct Column {
    std::string description;
    bool operator==(const Column&) const = default;
  };
  struct Table {
    std::string description;
    long long row_count_estimate = -1;
    std::map<std::string, Column> columns;
    bool operator==(const Table&) const = default;
  };
  std::map<std::string, Table> tables;
  bool operator==(const MetadataLayer&) const = default;
};

struct DomainConstraintLayer {  // K2
  struct Rule {
    std::string rule_id;
    std::string statement;
    std::vector<std::string> affected_tables;
    std::vector<std::string> affected_columns;  // "table.column"
    bool operator==(const Rule&) const = default;
  };
  std::string domain_name;
  std::vector<Rule> business_rules;
  bool operator==(const DomainConstraintLayer&) const = default;
};

enum class SemanticCategory {
  identifier,
  categorical,
  quantitative,
  temporal,
  free_text
};

inline const char* semantic_category_name(SemanticCategory c) {
  switch (c) {
    case SemanticCategory::identifier: return "identifier";
    case SemanticCategory::categorical: return "categorical";
    case SemanticCategory::quantitative: return "quantitative";
    case SemanticCategory::temporal: return "temporal";
    case SemanticCategory::free_text: return "free_text";
  }
  return "free_text";
}

inline std::optional<SemanticCategory> parse_semantic_category(
    const std::string& s) {
  for (SemanticCategory c :
       {SemanticCategory::identifier, SemanticCategory::categorical,
        SemanticCategory::quantitative, SemanticCategory::temporal,
        SemanticCategory::free_text})
    if (s == semantic_category_name(c)) return c;
  return std::nullopt;
}

struct FieldTypeLayer {  // K3
  struct Entry {
    SemanticCategory semantic_category = SemanticCategory::free_text;
    std::string unit;  // empty = none
    bool has_range = false;
    Json range_min;
    Json range_max;
    std::vector<Json> example_values;  // at most 5
    bool operator==(const Entry&) const = default;
  };
  std::map<std::string, Entry> columns;  // "table.column"
  bool operator==(const FieldTypeLayer&) const = default;
};

inline const std::set<std::string>& allowed_operation_vocabulary() {
  static const std::set<std::string> ops = {"select", "filter", "group",
                                           "order",  "sum",    "avg",
                                           "min",    "max",    "count"};
  return ops;
}

struct ColumnSemanticsLayer {  // K4
  struct Entry {
    std::string meaning;
    std::set<std::string> allowed_operations;
    std::string nullability_note;
    bool operator==(const Entry&) const = default;
  };
  std::map<std::string, Entry> columns;  // "table.column"
  bool operator==(const ColumnSemanticsLayer&) const = default;
};

enum class EntityRole { primary_entity, domain_attribute, metadata_entity };

inline const char* entity_role_name(EntityRole r) {
  switch (r) {
    case EntityRole::primary_entity: return "primary_entity";
    case EntityRole::domain_attribute: return "domain_attribute";
    case EntityRole::metadata_entity: return "metadata_entity";
  }
  return "metadata_entity";
}

inline std::optional<EntityRole> parse_entity_role(const std::string& s) {
  for (EntityRole r : {EntityRole::primary_entity, EntityRole::domain_attribute,
                       EntityRole::metadata_entity})
    if (s == entity_role_name(r)) return r;
  return std::nullopt;
}

struct TableConstraintLayer {  // K5
  struct Constraint {
    std::string statement;
    std::vector<std::string> columns;
    bool operator==(const Constraint&) const = default;
  };
  struct Entry {
    EntityRole entity_role = EntityRole::metadata_entity;
    std::vector<Constraint> constraints;
    bool operator==(const Entry&) const = default;
  };
  std::map<std::string, Entry> tables;
  bool operator==(const TableConstraintLayer&) const = default;
};

struct RelationLayer {  // K6
  struct JoinEdge {
    std::string from_table;
    std::string from_column;
    std::string to_table;
    std::string to_column;
    std::string cardinality;  // "1:1", "1:N", "N:M"
    std::string label;
    bool inferred = false;
    bool operator==(const JoinEdge&) const = default;
  };
  struct Dependency {
    std::string statement;
    std::vector<std::string> tables;
    bool operator==(const Dependency&) const = default;
  };
  std::vector<JoinEdge> join_edges;
  std::vector<Dependency> derived_dependencies;
  bool operator==(const RelationLayer&) const = default;
};

struct StageProvenance {
  int stage = 0;
  std::string prompt_fingerprint;
  std::string content_fingerprint;
  std::string model_id;
  std::string timestamp;  // excluded from KB equality
};

struct KnowledgeBase {
  MetadataLayer k1;
  DomainConstraintLayer k2;
  FieldTypeLayer k3;
  ColumnSemanticsLayer k4;
  TableConstraintLayer k5;
  RelationLayer k6;
  std::array<bool, 6> present{};
  std::array<std::optional<StageProvenance>, 6> provenance;

  bool has_layer(int stage) const {
    return stage >= 1 && stage <= 6 && present[stage - 1];
  }
  bool complete() const {
    for (bool p : present)
      if (!p) return false;
    return true;
  }
  // Equality over content only; provenance timestamps and fingerprints are
  // bookkeeping.
  bool same_content(const KnowledgeBase& o) const {
    return k1 == o.k1 && k2 == o.k2 && k3 == o.k3 && k4 == o.k4 &&
           k5 == o.k5 && k6 == o.k6 && present == o.present;
  }
};

inline std::string column_key(const std::string& table,
                              const std::string& column) {
  return table + "." + column;
}

inline std::pair<std::string, std::string> split_column_key(
    const std::string& key) {
  size_t dot = key.find('.');
  if (dot == std::string::npos) return {"", key};
  return {key.substr(0, dot), key.substr(dot + 1)};
}

// ---------------------------------------------------------------------------
// Aggregation compatibility (shared with the verifier).
// ---------------------------------------------------------------------------

inline std::set<std::string> compatible_aggregation_ops(SemanticCategory c) {
  switch (c) {
    case SemanticCategory::quantitative:
      return {"sum", "avg", "min", "max", "count"};
    case SemanticCategory::temporal:
      return {"min", "max", "count"};
    default:
      return {"count"};
  }
}

// fn is the upper-case SQL function name.
inline bool aggregation_compatible(const std::string& fn, SemanticCategory c) {
  if (fn == "COUNT" || fn == "GROUP_CONCAT" || fn == "STRING_AGG") return true;
  if (fn == "SUM" || fn == "AVG" || fn == "TOTAL")
    return c == SemanticCategory::quantitative;
  if (fn == "MIN" || fn == "MAX")
    return c == SemanticCategory::quantitative ||
           c == SemanticCategory::temporal;
  return true;  // unknown functions are not this check's business
}

// Default K3 category from the declared storage type, for repair.
inline SemanticCategory category_from_declared_type(const std::string& declared,
                                                    const std::string& name) {
  std::string t = to_lower(declared);
  std::string n = to_lower(name);
  if (n.find("date") != std::string::npos ||
      n.find("time") != std::string::npos ||
      t.find("date") != std::string::npos ||
      t.find("time") != std::string::npos)
    return SemanticCategory::temporal;
  if (t.find("int") != std::string::npos ||
      t.find("real") != std::string::npos ||
      t.find("floa") != std::string::npos ||
      t.find("doub") != std::string::npos ||
      t.find("num") != std::string::npos ||
      t.find("dec") != std::string::npos)
    return SemanticCategory::quantitative;
  return SemanticCategory::free_text;
}

// ---------------------------------------------------------------------------
// JSON codecs. One shape per layer, shared by the LLM output contract and
// the persisted files; serialization is canonical (name-sorted).
// ---------------------------------------------------------------------------

inline Json serialize_k1(const MetadataLayer& l) {
  Json tables = Json::array();
  for (const auto& [name, t] : l.tables) {
    Json jt;
    jt["name"] = name;
    jt["description"] = t.description;
    jt["row_count_estimate"] = t.row_count_estimate;
    Json cols = Json::array();
    for (const auto& [cname, c] : t.columns) {
      Json jc;
      jc["name"] = cname;
      jc["description"] = c.description;
      cols.push_back(std::move(jc));
    }
    jt["columns"] = std::move(cols);
    tables.push_back(std::move(jt));
  }
  Json j;
  j["tables"] = std::move(tables);
  return j;
}

inline Result<MetadataLayer> parse_k1(const Json& j) {
  MetadataLayer l;
  if (!j.is_object() || !j.contains("tables") || !j["tables"].is_array())
    return make_error(Errc::malformed_response,
                      "metadata layer missing \"tables\" array");
  for (const Json& jt : j["tables"]) {
    if (!jt.is_object() || !jt.contains("name")) continue;
    MetadataLayer::Table t;
    t.description = jt.value("description", "");
    t.row_count_estimate = jt.value("row_count_estimate", -1LL);
    if (jt.contains("columns") && jt["columns"].is_array()) {
      for (const Json& jc : jt["columns"]) {
        if (!jc.is_object() || !jc.contains("name")) continue;
        t.columns[jc["name"].get<std::string>()] = {jc.value("description", "")};
      }
    }
    l.tables[jt["name"].get<std::string>()] = std::move(t);
  }
  return l;
}

inline Json serialize_k2(const DomainConstraintLayer& l) {
  Json j;
  j["domain_name"] = l.domain_name;
  Json rules = Json::array();
  for (const auto& r : l.business_rules) {
    Json jr;
    jr["rule_id"] = r.rule_id;
    jr["statement"] = r.statement;
    jr["affected_tables"] = r.affected_tables;
    jr["affected_columns"] = r.affected_columns;
    rules.push_back(std::move(jr));
  }
  j["business_rules"] = std::move(rules);
  return j;
}

inline Result<DomainConstraintLayer> parse_k2(const Json& j) {
  if (!j.is_object())
    return make_error(Errc::malformed_response, "domain layer not an object");
  DomainConstraintLayer l;
  l.domain_name = j.value("domain_name", "");
  if (j.contains("business_rules") && j["business_rules"].is_array()) {
    for (const Json& jr : j["business_rules"]) {
      if (!jr.is_object()) continue;
      DomainConstraintLayer::Rule r;
      r.rule_id = jr.value("rule_id", "");
      r.statement = jr.value("statement", "");
      if (jr.contains("affected_tables") && jr["affected_tables"].is_array())
        for (const Json& t : jr["affected_tables"])
          if (t.is_string()) r.affected_tables.push_back(t.get<std::string>());
      if (jr.contains("affected_columns") && jr["affected_columns"].is_array())
        for (const Json& c : jr["affected_columns"])
          if (c.is_string()) r.affected_columns.push_back(c.get<std::string>());
      l.business_rules.push_back(std::move(r));
    }
  }
  return l;
}

inline Json serialize_k3(const FieldTypeLayer& l) {
  Json cols = Json::array();
  for (const auto& [key, e] : l.columns) {
    auto [table, column] = split_column_key(key);
    Json jc;
    jc["table"] = table;
    jc["column"] = column;
    jc["semantic_category"] = semantic_category_name(e.semantic_category);
    if (!e.unit.empty()) jc["unit"] = e.unit;
    if (e.has_range) {
      jc["value_range"]["min"] = e.range_min;
      jc["value_range"]["max"] = e.range_max;
    }
    jc["example_values"] = e.example_values;
    cols.push_back(std::move(jc));
  }
  Json j;
  j["columns"] = std::move(cols);
  return j;
}

inline Result<FieldTypeLayer> parse_k3(const Json& j) {
  if (!j.is_object() || !j.contains("columns") || !j["columns"].is_array())
    return make_error(Errc::malformed_response,
                      "field type layer missing \"columns\" array");
  FieldTypeLayer l;
  for (const Json& jc : j["columns"]) {
    if (!jc.is_object() || !jc.contains("table") || !jc.contains("column"))
      continue;
    FieldTypeLayer::Entry e;
    std::string cat = jc.value("semantic_category", "");
    auto parsed = parse_semantic_category(cat);
    if (!parsed)
      return make_error(Errc::validation_failure,
                        "unknown semantic category \"" + cat + "\" for " +
                            jc["table"].get<std::string>() + "." +
                            jc["column"].get<std::string>());
    e.semantic_category = *parsed;
    e.unit = jc.value("unit", "");
    if (jc.contains("value_range") && jc["value_range"].is_object()) {
      e.has_range = true;
      e.range_min = jc["value_range"].value("min", Json());
      e.range_max = jc["value_range"].value("max", Json());
    }
    if (jc.contains("example_values") && jc["example_values"].is_array())
      for (const Json& v : jc["example_values"]) e.example_values.push_back(v);
    l.columns[column_key(jc["table"].get<std::string>(),
                         jc["column"].get<std::string>())] = std::move(e);
  }
  return l;
}

inline Json serialize_k4(const ColumnSemanticsLayer& l) {
  Json cols = Json::array();
  for (const auto& [key, e] : l.columns) {
    auto [table, column] = split_column_key(key);
    Json jc;
    jc["table"] = table;
    jc["column"] = column;
    jc["meaning"] = e.meaning;
    jc["allowed_operations"] = e.allowed_operations;
    jc["nullability_note"] = e.nullability_note;
    cols.push_back(std::move(jc));
  }
  Json j;
  j["columns"] = std::move(cols);
  return j;
}

inline Result<ColumnSemanticsLayer> parse_k4(const Json& j) {
  if (!j.is_object() || !j.contains("columns") || !j["columns"].is_array())
    return make_error(Errc::malformed_response,
                      "column semantics layer missing \"columns\" array");
  ColumnSemanticsLayer l;
  for (const Json& jc : j["columns"]) {
    if (!jc.is_object() || !jc.contains("table") || !jc.contains("column"))
      continue;
    ColumnSemanticsLayer::Entry e;
    e.meaning = jc.value("meaning", "");
    e.nullability_note = jc.value("nullability_note", "");
    if (jc.contains("allowed_operations") && jc["allowed_operations"].is_array())
      for (const Json& op : jc["allowed_operations"])
        if (op.is_string()) e.allowed_operations.insert(op.get<std::string>());
    l.columns[column_key(jc["table"].get<std::string>(),
                         jc["column"].get<std::string>())] = std::move(e);
  }
  return l;
}

inline Json serialize_k5(const TableConstraintLayer& l) {
  Json tables = Json::array();
  for (const auto& [name, e] : l.tables) {
    Json jt;
    jt["name"] = name;
    jt["entity_role"] = entity_role_name(e.entity_role);
    Json cons = Json::array();
    for (const auto& c : e.constraints) {
      Json jc;
      jc["statement"] = c.statement;
      jc["columns"] = c.columns;
      cons.push_back(std::move(jc));
    }
    jt["constraints"] = std::move(cons);
    tables.push_back(std::move(jt));
  }
  Json j;
  j["tables"] = std::move(tables);
  return j;
}

inline Result<TableConstraintLayer> parse_k5(const Json& j) {
  if (!j.is_object() || !j.contains("tables") || !j["tables"].is_array())
    return make_error(Errc::malformed_response,
                      "table constraint layer missing \"tables\" array");
  TableConstraintLayer l;
  for (const Json& jt : j["tables"]) {
    if (!jt.is_object() || !jt.contains("name")) continue;
    TableConstraintLayer::Entry e;
    std::string role = jt.value("entity_role", "");
    auto parsed = parse_entity_role(role);
    if (!parsed)
      return make_error(Errc::validation_failure,
                        "unknown entity role \"" + role + "\" for table " +
                            jt["name"].get<std::string>());
    e.entity_role = *parsed;
    if (jt.contains("constraints") && jt["constraints"].is_array()) {
      for (const Json& jc : jt["constraints"]) {
        if (!jc.is_object()) continue;
        TableConstraintLayer::Constraint c;
        c.statement = jc.value("statement", "");
        if (jc.contains("columns") && jc["columns"].is_array())
          for (const Json& col : jc["columns"])
            if (col.is_string()) c.columns.push_back(col.get<std::string>());
        e.constraints.push_back(std::move(c));
      }
    }
    l.tables[jt["name"].get<std::string>()] = std::move(e);
  }
  return l;
}

inline Json serialize_k6(const RelationLayer& l) {
  Json edges = Json::array();
  for (const auto& e : l.join_edges) {
    Json je;
    je["from"] = column_key(e.from_table, e.from_column);
    je["to"] = column_key(e.to_table, e.to_column);
    je["cardinality"] = e.cardinality;
    je["label"] = e.label;
    je["inferred"] = e.inferred;
    edges.push_back(std::move(je));
  }
  Json deps = Json::array();
  for (const auto& d : l.derived_dependencies) {
    Json jd;
    jd["statement"] = d.statement;
    jd["tables"] = d.tables;
    deps.push_back(std::move(jd));
  }
  Json j;
  j["join_edges"] = std::move(edges);
  j["derived_dependencies"] = std::move(deps);
  return j;
}

inline Result<RelationLayer> parse_k6(const Json& j) {
  if (!j.is_object())
    return make_error(Errc::malformed_response, "relation layer not an object");
  RelationLayer l;
  if (j.contains("join_edges") && j["join_edges"].is_array()) {
    for (const Json& je : j["join_edges"]) {
      if (!je.is_object()) continue;
      RelationLayer::JoinEdge e;
      auto [ft, fc] = split_column_key(je.value("from", ""));
      auto [tt, tc] = split_column_key(je.value("to", ""));
      e.from_table = ft;
      e.from_column = fc;
      e.to_table = tt;
      e.to_column = tc;
      e.cardinality = je.value("cardinality", "");
      if (e.cardinality != "1:1" && e.cardinality != "1:N" &&
          e.cardinality != "N:M")
        return make_error(Errc::validation_failure,
                          "unknown cardinality \"" + e.cardinality +
                              "\" on edge " + je.value("from", "") + " -> " +
                              je.value("to", ""));
      e.label = je.value("label", "");
      e.inferred = je.value("inferred", true);
      l.join_edges.push_back(std::move(e));
    }
  }
  if (j.contains("derived_dependencies") &&
      j["derived_dependencies"].is_array()) {
    for (const Json& jd : j["derived_dependencies"]) {
      if (!jd.is_object()) continue;
      RelationLayer::Dependency d;
      d.statement = jd.value("statement", "");
      if (jd.contains("tables") && jd["tables"].is_array())
        for (const Json& t : jd["tables"])
          if (t.is_string()) d.tables.push_back(t.get<std::string>());
      l.derived_dependencies.push_back(std::move(d));
    }
  }
  return l;
}

inline Json serialize_layer(const KnowledgeBase& kb, int stage) {
  switch (stage) {
    case 1: return serialize_k1(kb.k1);
    case 2: return serialize_k2(kb.k2);
    case 3: return serialize_k3(kb.k3);
    case 4: return serialize_k4(kb.k4);
    case 5: return serialize_k5(kb.k5);
    case 6: return serialize_k6(kb.k6);
  }
  return Json();
}

inline const char* layer_file_name(int stage) {
  switch (stage) {
    case 1: return "k1_metadata";
    case 2: return "k2_domain";
    case 3: return "k3_field_types";
    case 4: return "k4_columns";
    case 5: return "k5_tables";
    case 6: return "k6_relations";
  }
  return "";
}

inline std::string layer_fingerprint(const KnowledgeBase& kb, int stage) {
  return hex64(fnv1a64(serialize_layer(kb, stage).dump()));
}

// ---------------------------------------------------------------------------
// Validation and repair against the schema.
// ---------------------------------------------------------------------------

namespace detail {

inline const db::TableDef* find_table(const db::DatabaseSchema& schema,
                                      const std::string& name) {
  return schema.find_table(name);
}

// Resolve "table.column" (any casing) to canonical names; empty on failure.
inline std::string canonical_column_key(const db::DatabaseSchema& schema,
                                        const std::string& table,
                                        const std::string& column) {
  const db::TableDef* t = schema.find_table(table);
  if (!t) return "";
  const db::ColumnDef* c = t->find_column(column);
  if (!c) return "";
  return column_key(t->name, c->name);
}

}  // namespace detail

inline Status validate_k1(MetadataLayer& l, const db::DatabaseSchema& schema,
                          std::vector<std::string>& log) {
  MetadataLayer fixed;
  for (const auto& [name, t] : l.tables) {
    const db::TableDef* st = schema.find_table(name);
    if (!st) {
      log.push_back("k1: dropped unknown table \"" + name + "\"");
      continue;
    }
    MetadataLayer::Table out;
    out.description = t.description;
    out.row_count_estimate = t.row_count_estimate;
    for (const auto& [cname, c] : t.columns) {
      const db::ColumnDef* sc = st->find_column(cname);
      if (!sc) {
        log.push_back("k1: dropped unknown column \"" + name + "." + cname +
                      "\"");
        continue;
      }
      out.columns[sc->name] = c;
    }
    fixed.tables[st->name] = std::move(out);
  }
  for (const auto& st : schema.tables) {
    auto& t = fixed.tables[st.name];  // creates if absent
    if (l.tables.find(st.name) == l.tables.end() &&
        t.description.empty())
      log.push_back("k1: no entry returned for table \"" + st.name +
                    "\"; added empty description");
    for (const auto& sc : st.columns) {
      if (t.columns.find(sc.name) == t.columns.end()) {
        t.columns[sc.name] = {};
        log.push_back("k1: no entry returned for column \"" + st.name + "." +
                      sc.name + "\"; added empty description");
      }
    }
  }
  l = std::move(fixed);
  return Status::ok_status();
}

inline Status validate_k2(DomainConstraintLayer& l,
                          const db::DatabaseSchema& schema,
                          std::vector<std::string>& log) {
  std::set<std::string> seen_ids;
  int synthetic = 0;
  for (auto& r : l.business_rules) {
    if (r.rule_id.empty() || seen_ids.count(r.rule_id)) {
      std::string fresh;
      do {
        fresh = "R" + std::to_string(++synthetic + 100);
      } while (seen_ids.count(fresh));
      log.push_back("k2: rule id \"" + r.rule_id + "\" renamed to \"" + fresh +
                    "\" (missing or duplicate)");
      r.rule_id = fresh;
    }
    seen_ids.insert(r.rule_id);
    std::vector<std::string> tables;
    for (const auto& t : r.affected_tables) {
      const db::TableDef* st = schema.find_table(t);
      if (st)
        tables.push_back(st->name);
      else
        log.push_back("k2: rule " + r.rule_id + " dropped unknown table \"" +
                      t + "\"");
    }
    r.affected_tables = std::move(tables);
    std::vector<std::string> cols;
    for (const auto& c : r.affected_columns) {
      auto [t, col] = split_column_key(c);
      std::string key = detail::canonical_column_key(schema, t, col);
      if (!key.empty())
        cols.push_back(key);
      else
        log.push_back("k2: rule " + r.rule_id + " dropped unknown column \"" +
                      c + "\"");
    }
    r.affected_columns = std::move(cols);
  }
  return Status::ok_status();
}

inline Status validate_k3(FieldTypeLayer& l, const db::DatabaseSchema& schema,
                          std::vector<std::string>& log) {
  FieldTypeLayer fixed;
  for (const auto& [key, e] : l.columns) {
    auto [t, c] = split_column_key(key);
    std::string canonical = detail::canonical_column_key(schema, t, c);
    if (canonical.empty()) {
      log.push_back("k3: dropped unknown column \"" + key + "\"");
      continue;
    }
    FieldTypeLayer::Entry out = e;
    bool rangeable = out.semantic_category == SemanticCategory::quantitative ||
                     out.semantic_category == SemanticCategory::temporal;
    if (out.has_range && !rangeable) {
      out.has_range = false;
      out.range_min = Json();
      out.range_max = Json();
      log.push_back("k3: stripped value_range from non-quantitative column \"" +
                    canonical + "\"");
    }
    if (out.example_values.size() > 5) {
      out.example_values.resize(5);
      log.push_back("k3: truncated example_values for \"" + canonical +
                    "\" to 5");
    }
    fixed.columns[canonical] = std::move(out);
  }
  for (const auto& st : schema.tables) {
    for (const auto& sc : st.columns) {
      std::string key = column_key(st.name, sc.name);
      if (fixed.columns.find(key) == fixed.columns.end()) {
        FieldTypeLayer::Entry e;
        e.semantic_category =
            category_from_declared_type(sc.declared_type, sc.name);
        fixed.columns[key] = std::move(e);
        log.push_back("k3: no entry returned for \"" + key +
                      "\"; defaulted from declared type");
      }
    }
  }
  l = std::move(fixed);
  return Status::ok_status();
}

inline Status validate_k4(ColumnSemanticsLayer& l,
                          const db::DatabaseSchema& schema,
                          const FieldTypeLayer& k3,
                          std::vector<std::string>& log) {
  ColumnSemanticsLayer fixed;
  for (const auto& [key, e] : l.columns) {
    auto [t, c] = split_column_key(key);
    std::string canonical = detail::canonical_column_key(schema, t, c);
    if (canonical.empty()) {
      log.push_back("k4: dropped unknown column \"" + key + "\"");
      continue;
    }
    ColumnSemanticsLayer::Entry out;
    out.meaning = e.meaning;
    out.nullability_note = e.nullability_note;
    for (const auto& op : e.allowed_operations) {
      if (allowed_operation_vocabulary().count(op))
        out.allowed_operations.insert(op);
      else
        log.push_back("k4: dropped unknown operation \"" + op + "\" on \"" +
                      canonical + "\"");
    }
    fixed.columns[canonical] = std::move(out);
  }
  // Coverage and aggregation-compatibility repair.
  for (const auto& st : schema.tables) {
    for (const auto& sc : st.columns) {
      std::string key = column_key(st.name, sc.name);
      SemanticCategory cat = SemanticCategory::free_text;
      auto it3 = k3.columns.find(key);
      if (it3 != k3.columns.end()) cat = it3->second.semantic_category;
      std::set<std::string> agg_ok = compatible_aggregation_ops(cat);
      auto it = fixed.columns.find(key);
      if (it == fixed.columns.end()) {
        ColumnSemanticsLayer::Entry e;
        e.allowed_operations = {"select", "filter", "group", "order"};
        for (const auto& op : agg_ok) e.allowed_operations.insert(op);
        fixed.columns[key] = std::move(e);
        log.push_back("k4: no entry returned for \"" + key +
                      "\"; defaulted operations from field type");
        continue;
      }
      static const std::set<std::string> agg_ops = {"sum", "avg", "min", "max",
                                                    "count"};
      std::set<std::string> pruned;
      for (const auto& op : it->second.allowed_operations) {
        if (agg_ops.count(op) && !agg_ok.count(op)) {
          log.push_back("k4: stripped operation \"" + op + "\" from \"" + key +
                        "\" (incompatible with " +
                        semantic_category_name(cat) + ")");
          continue;
        }
        pruned.insert(op);
      }
      it->second.allowed_operations = std::move(pruned);
    }
  }
  l = std::move(fixed);
  return Status::ok_status();
}

inline Status validate_k5(TableConstraintLayer& l,
                          const db::DatabaseSchema& schema,
                          std::vector<std::string>& log) {
  TableConstraintLayer fixed;
  for (const auto& [name, e] : l.tables) {
    const db::TableDef* st = schema.find_table(name);
    if (!st) {
      log.push_back("k5: dropped unknown table \"" + name + "\"");
      continue;
    }
    TableConstraintLayer::Entry out;
    out.entity_role = e.entity_role;
    for (const auto& c : e.constraints) {
      TableConstraintLayer::Constraint fixed_c;
      fixed_c.statement = c.statement;
      for (const auto& col : c.columns) {
        const db::ColumnDef* sc = st->find_column(col);
        if (sc)
          fixed_c.columns.push_back(sc->name);
        else
          log.push_back("k5: constraint on \"" + st->name +
                        "\" dropped unknown column \"" + col + "\"");
      }
      out.constraints.push_back(std::move(fixed_c));
    }
    fixed.tables[st->name] = std::move(out);
  }
  for (const auto& st : schema.tables) {
    if (fixed.tables.find(st.name) == fixed.tables.end()) {
      fixed.tables[st.name] = {};
      log.push_back("k5: no entry returned for table \"" + st.name +
                    "\"; defaulted role to metadata_entity");
    }
  }
  l = std::move(fixed);
  return Status::ok_status();
}

// K6 validation also injects the schema's declared foreign keys as
// authoritative edges; LLM-proposed edges that duplicate one are merged.
inline Status validate_k6(RelationLayer& l, const db::DatabaseSchema& schema,
                          std::vector<std::string>& log) {
  RelationLayer fixed;
  auto resolve_side = [&](const std::string& table, const std::string& column,
                          std::string& out_t, std::string& out_c) {
    std::string key = detail::canonical_column_key(schema, table, column);
    if (key.empty()) return false;
    auto [t, c] = split_column_key(key);
    out_t = t;
    out_c = c;
    return true;
  };
  for (const auto& e : l.join_edges) {
    RelationLayer::JoinEdge out = e;
    if (!resolve_side(e.from_table, e.from_column, out.from_table,
                      out.from_column) ||
        !resolve_side(e.to_table, e.to_column, out.to_table, out.to_column)) {
      log.push_back("k6: dropped edge with unknown endpoint " +
                    column_key(e.from_table, e.from_column) + " -> " +
                    column_key(e.to_table, e.to_column));
      continue;
    }
    if (iequals(out.from_table, out.to_table) &&
        iequals(out.from_column, out.to_column)) {
      log.push_back("k6: dropped self-loop edge on " +
                    column_key(out.from_table, out.from_column));
      continue;
    }
    out.inferred = true;  // provisional; FK merge below may clear it
    fixed.join_edges.push_back(std::move(out));
  }
  for (const auto& d : l.derived_dependencies) {
    RelationLayer::Dependency out;
    out.statement = d.statement;
    for (const auto& t : d.tables) {
      const db::TableDef* st = schema.find_table(t);
      if (st)
        out.tables.push_back(st->name);
      else
        log.push_back("k6: dependency dropped unknown table \"" + t + "\"");
    }
    fixed.derived_dependencies.push_back(std::move(out));
  }

  auto edge_matches_fk = [](const RelationLayer::JoinEdge& e,
                            const db::ForeignKeyDef& fk) {
    bool forward = iequals(e.from_table, fk.from_table) &&
                   iequals(e.from_column, fk.from_column) &&
                   iequals(e.to_table, fk.to_table) &&
                   iequals(e.to_column, fk.to_column);
    bool reverse = iequals(e.from_table, fk.to_table) &&
                   iequals(e.from_column, fk.to_column) &&
                   iequals(e.to_table, fk.from_table) &&
                   iequals(e.to_column, fk.from_column);
    return forward || reverse;
  };
  for (const auto& fk : schema.foreign_keys) {
    bool merged = false;
    for (auto& e : fixed.join_edges) {
      if (edge_matches_fk(e, fk)) {
        e.inferred = false;
        e.from_table = fk.from_table;
        e.from_column = fk.from_column;
        e.to_table = fk.to_table;
        e.to_column = fk.to_column;
        merged = true;
      }
    }
    if (merged) continue;
    RelationLayer::JoinEdge e;
    e.from_table = fk.from_table;
    e.from_column = fk.from_column;
    e.to_table = fk.to_table;
    e.to_column = fk.to_column;
    e.inferred = false;
    e.label = "foreign key";
    const db::TableDef* ft = schema.find_table(fk.from_table);
    bool from_unique = false;
    if (ft && ft->primary_key.size() == 1 &&
        iequals(ft->primary_key[0], fk.from_column))
      from_unique = true;
    e.cardinality = from_unique ? "1:1" : "1:N";
    fixed.join_edges.push_back(std::move(e));
    log.push_back("k6: injected declared foreign key " +
                  column_key(fk.from_table, fk.from_column) + " -> " +
                  column_key(fk.to_table, fk.to_column));
  }
  l = std::move(fixed);
  return Status::ok_status();
}

// ---------------------------------------------------------------------------
// Referential closure check (complete-KB invariant).
// ---------------------------------------------------------------------------

inline Status check_closure(const KnowledgeBase& kb) {
  auto known_table = [&](const std::string& t) {
    return kb.k1.tables.find(t) != kb.k1.tables.end();
  };
  auto known_column = [&](const std::string& key) {
    auto [t, c] = split_column_key(key);
    auto it = kb.k1.tables.find(t);
    return it != kb.k1.tables.end() &&
           it->second.columns.find(c) != it->second.columns.end();
  };
  for (const auto& r : kb.k2.business_rules) {
    for (const auto& t : r.affected_tables)
      if (!known_table(t))
        return make_error(Errc::validation_failure,
                          "k2 rule " + r.rule_id + " references unknown table " + t);
    for (const auto& c : r.affected_columns)
      if (!known_column(c))
        return make_error(Errc::validation_failure,
                          "k2 rule " + r.rule_id + " references unknown column " + c);
  }
  for (const auto& [key, e] : kb.k3.columns)
    if (!known_column(key))
      return make_error(Errc::validation_failure,
                        "k3 references unknown column " + key);
  for (const auto& [key, e] : kb.k4.columns)
    if (!known_column(key))
      return make_error(Errc::validation_failure,
                        "k4 references unknown column " + key);
  for (const auto& [t, e] : kb.k5.tables)
    if (!known_table(t))
      return make_error(Errc::validation_failure,
                        "k5 references unknown table " + t);
  for (const auto& e : kb.k6.join_edges) {
    if (!known_column(column_key(e.from_table, e.from_column)) ||
        !known_column(column_key(e.to_table, e.to_column)))
      return make_error(Errc::validation_failure,
                        "k6 edge references unknown column " +
                            column_key(e.from_table, e.from_column) + " -> " +
                            column_key(e.to_table, e.to_column));
  }
  return Status::ok_status();
}

// ---------------------------------------------------------------------------
// Evidence retrieval.
// ---------------------------------------------------------------------------

struct EvidenceEntry {
  std::string layer;  // "K1".."K6"
  std::string key;
  std::string statement;
  bool operator==(const EvidenceEntry&) const = default;
};

struct Evidence {
  std::vector<EvidenceEntry> entries;
};

struct EvidenceQuery {
  std::string error_type;
  std::string table;
  std::string column;
  std::string other_table;  // join errors: the second table
};

// Near-name candidates: edit distance <= 2 first (closest first), then
// prefix matches, capped.
inline std::vector<std::string> near_name_candidates(
    const std::string& wanted, const std::vector<std::string>& names,
    size_t cap = 5) {
  std::vector<std::pair<size_t, std::string>> close;
  for (const auto& n : names) {
    size_t d = levenshtein(wanted, n);
    if (d == 0) continue;  // identical name is not a "candidate"
    if (d <= 2) close.emplace_back(d, n);
  }
  std::sort(close.begin(), close.end(),
            [](const auto& a, const auto& b) {
              return a.first != b.first ? a.first < b.first
                                        : a.second < b.second;
            });
  std::vector<std::string> out;
  for (const auto& [d, n] : close) {
    if (out.size() >= cap) return out;
    out.push_back(n);
  }
  std::string wl = to_lower(wanted);
  std::vector<std::string> prefix;
  for (const auto& n : names) {
    if (std::find(out.begin(), out.end(), n) != out.end()) continue;
    std::string nl = to_lower(n);
    bool is_prefix = (nl.size() > wl.size() && nl.rfind(wl, 0) == 0) ||
                     (wl.size() > nl.size() && wl.rfind(nl, 0) == 0);
    if (is_prefix) prefix.push_back(n);
  }
  std::sort(prefix.begin(), prefix.end());
  for (const auto& n : prefix) {
    if (out.size() >= cap) break;
    out.push_back(n);
  }
  return out;
}

inline std::string describe_k3_entry(const std::string& key,
                                     const FieldTypeLayer::Entry& e) {
  std::string s = key + " is " + semantic_category_name(e.semantic_category);
  if (!e.unit.empty()) s += " (unit: " + e.unit + ")";
  if (e.has_range)
    s += " with range [" + e.range_min.dump() + ", " + e.range_max.dump() + "]";
  return s;
}

inline std::string describe_k4_ops(const std::string& key,
                                   const ColumnSemanticsLayer::Entry& e) {
  std::string s = "allowed operations for " + key + ": ";
  bool first = true;
  for (const auto& op : e.allowed_operations) {
    if (!first) s += ", ";
    s += op;
    first = false;
  }
  if (first) s += "(none)";
  return s;
}

inline std::string describe_k6_edge(const RelationLayer::JoinEdge& e) {
  std::string s = column_key(e.from_table, e.from_column) + " joins " +
                  column_key(e.to_table, e.to_column) + " (" + e.cardinality;
  if (!e.label.empty()) s += ", " + e.label;
  s += e.inferred ? ", inferred)" : ")";
  return s;
}

inline Result<Evidence> retrieve(const KnowledgeBase& kb,
                                 const EvidenceQuery& q) {
  Evidence ev;
  auto k1_column_statement = [&](const std::string& table,
                                 const std::string& column) -> std::string {
    auto it = kb.k1.tables.find(table);
    if (it == kb.k1.tables.end()) return "";
    auto cit = it->second.columns.find(column);
    if (cit == it->second.columns.end()) return "";
    std::string d = cit->second.description;
    return column_key(table, column) + (d.empty() ? " (no description)"
                                                  : ": " + d);
  };

  if (q.error_type == "invalid_column") {
    auto it = kb.k1.tables.find(q.table);
    if (it != kb.k1.tables.end()) {
      std::vector<std::string> names;
      for (const auto& [cname, c] : it->second.columns) names.push_back(cname);
      for (const auto& cand : near_name_candidates(q.column, names)) {
        std::string key = column_key(q.table, cand);
        ev.entries.push_back({"K1", key, k1_column_statement(q.table, cand)});
        auto k4 = kb.k4.columns.find(key);
        if (k4 != kb.k4.columns.end())
          ev.entries.push_back({"K4", key, describe_k4_ops(key, k4->second)});
      }
    }
  } else if (q.error_type == "invalid_table") {
    std::vector<std::string> names;
    for (const auto& [tname, t] : kb.k1.tables) names.push_back(tname);
    for (const auto& cand : near_name_candidates(q.table, names)) {
      auto it = kb.k1.tables.find(cand);
      std::string d = it->second.description;
      ev.entries.push_back(
          {"K1", cand, cand + (d.empty() ? " (no description)" : ": " + d)});
    }
  } else if (q.error_type == "join_inconsistency") {
    for (const auto& e : kb.k6.join_edges) {
      bool touches = iequals(e.from_table, q.table) ||
                     iequals(e.to_table, q.table) ||
                     (!q.other_table.empty() &&
                      (iequals(e.from_table, q.other_table) ||
                       iequals(e.to_table, q.other_table)));
      if (touches)
        ev.entries.push_back({"K6",
                              column_key(e.from_table, e.from_column) + "->" +
                                  column_key(e.to_table, e.to_column),
                              describe_k6_edge(e)});
    }
  } else if (q.error_type == "aggregation_type_mismatch") {
    std::string key = column_key(q.table, q.column);
    auto k3 = kb.k3.columns.find(key);
    if (k3 != kb.k3.columns.end())
      ev.entries.push_back({"K3", key, describe_k3_entry(key, k3->second)});
    auto k4 = kb.k4.columns.find(key);
    if (k4 != kb.k4.columns.end())
      ev.entries.push_back({"K4", key, describe_k4_ops(key, k4->second)});
  } else if (q.error_type == "not_executable" ||
             q.error_type == "trace_sql_divergence") {
    // No keyed evidence exists for these; the corrector must reformulate.
    return make_error(Errc::empty_evidence,
                      "no corrective evidence for error type " + q.error_type);
  } else {
    return make_error(Errc::unknown_error_type,
                      "unknown error type \"" + q.error_type + "\"");
  }

  if (ev.entries.empty())
    return make_error(Errc::empty_evidence,
                      "no relevant evidence for " + q.error_type + " on " +
                          (q.column.empty() ? q.table
                                            : column_key(q.table, q.column)));
  return ev;
}

// ---------------------------------------------------------------------------
// Persistence: kb/manifest plus one file per layer.
// ---------------------------------------------------------------------------

class KbStore {
 public:
  explicit KbStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const std::filesystem::path& dir() const { return dir_; }

  // True once a manifest has been written, even for a partial build.
  bool exists() const { return std::filesystem::exists(dir_ / "manifest"); }

  Status save_layer(const KnowledgeBase& kb, int stage) const {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec)
      return make_error(Errc::io_failure,
                        "cannot create " + dir_.string() + ": " + ec.message());
    Json j;
    j["layer"] = layer_file_name(stage);
    j["stage"] = stage;
    if (kb.provenance[stage - 1]) {
      const StageProvenance& p = *kb.provenance[stage - 1];
      j["provenance"]["prompt_fingerprint"] = p.prompt_fingerprint;
      j["provenance"]["content_fingerprint"] = p.content_fingerprint;
      j["provenance"]["model_id"] = p.model_id;
      j["provenance"]["timestamp"] = p.timestamp;
    }
    j["data"] = serialize_layer(kb, stage);
    return write_text(dir_ / layer_file_name(stage), j.dump(2) + "\n");
  }

  Status save_manifest(const KnowledgeBase& kb,
                       const std::string& db_name) const {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec)
      return make_error(Errc::io_failure,
                        "cannot create " + dir_.string() + ": " + ec.message());
    Json j;
    j["db_name"] = db_name;
    j["complete"] = kb.complete();
    Json stages = Json::object();
    for (int t = 1; t <= 6; ++t) {
      if (!kb.present[t - 1]) continue;
      Json s;
      if (kb.provenance[t - 1]) {
        s["prompt_fingerprint"] = kb.provenance[t - 1]->prompt_fingerprint;
        s["content_fingerprint"] = kb.provenance[t - 1]->content_fingerprint;
        s["model_id"] = kb.provenance[t - 1]->model_id;
        s["timestamp"] = kb.provenance[t - 1]->timestamp;
      } else {
        s["content_fingerprint"] = layer_fingerprint(kb, t);
      }
      stages[std::to_string(t)] = std::move(s);
    }
    j["stages"] = std::move(stages);
    return write_text(dir_ / "manifest", j.dump(2) + "\n");
  }

  Status save(const KnowledgeBase& kb, const std::string& db_name) const {
    for (int t = 1; t <= 6; ++t) {
      if (!kb.present[t - 1]) continue;
      Status s = save_layer(kb, t);
      if (!s.is_ok()) return s;
    }
    return save_manifest(kb, db_name);
  }

  Result<KnowledgeBase> load() const {
    KnowledgeBase kb;
    if (!exists())
      return make_error(Errc::file_not_found,
                        (dir_ / "manifest").string() + " does not exist");
    for (int t = 1; t <= 6; ++t) {
      std::filesystem::path p = dir_ / layer_file_name(t);
      if (!std::filesystem::exists(p)) continue;
      auto text = read_text(p);
      if (!text.is_ok()) return text.error();
      Json j = Json::parse(text.value(), nullptr, false);
      if (j.is_discarded())
        return make_error(Errc::io_failure,
                          "unparseable layer file " + p.string());
      const Json& data = j.contains("data") ? j["data"] : j;
      Status applied = apply_layer(kb, t, data);
      if (!applied.is_ok()) return applied.error();
      kb.present[t - 1] = true;
      if (j.contains("provenance")) {
        StageProvenance prov;
        prov.stage = t;
        prov.prompt_fingerprint =
            j["provenance"].value("prompt_fingerprint", "");
        prov.content_fingerprint =
            j["provenance"].value("content_fingerprint", "");
        prov.model_id = j["provenance"].value("model_id", "");
        prov.timestamp = j["provenance"].value("timestamp", "");
        kb.provenance[t - 1] = std::move(prov);
      }
    }
    return kb;
  }

  static Status apply_layer(KnowledgeBase& kb, int stage, const Json& data) {
    switch (stage) {
      case 1: {
        auto r = parse_k1(data);
        if (!r.is_ok()) return r.error();
        kb.k1 = std::move(r).value();
        return Status::ok_status();
      }
      case 2: {
        auto r = parse_k2(data);
        if (!r.is_ok()) return r.error();
        kb.k2 = std::move(r).value();
        return Status::ok_status();
      }
      case 3: {
        auto r = parse_k3(data);
        if (!r.is_ok()) return r.error();
        kb.k3 = std::move(r).value();
        return Status::ok_status();
      }
      case 4: {
        auto r = parse_k4(data);
        if (!r.is_ok()) return r.error();
        kb.k4 = std::move(r).value();
        return Status::ok_status();
      }
      case 5: {
        auto r = parse_k5(data);
        if (!r.is_ok()) return r.error();
        kb.k5 = std::move(r).value();
        return Status::ok_status();
      }
      case 6: {
        auto r = parse_k6(data);
        if (!r.is_ok()) return r.error();
        kb.k6 = std::move(r).value();
        return Status::ok_status();
      }
    }
    return make_error(Errc::config_invalid,
                      "stage index " + std::to_string(stage) + " out of range");
  }

 private:
  static Status write_text(const std::filesystem::path& p,
                           const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) return make_error(Errc::io_failure, "cannot open " + p.string());
    out << text;
    if (!out) return make_error(Errc::io_failure, "write failed: " + p.string());
    return Status::ok_status();
  }

  static Result<std::string> read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return make_error(Errc::io_failure, "cannot open " + p.string());
    std::string s((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
    return s;
  }

  std::filesystem::path dir_;
};

}  // namespace sqlsynth::kb
