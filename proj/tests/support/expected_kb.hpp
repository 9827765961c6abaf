// Hand-authored knowledge base for the schools fixture, plus the scripted
// stage responses that reproduce it through the extraction pipeline.
#pragma once

#include <string>

#include "sqlsynth/knowledge_base.hpp"

namespace fixtures {

// The knowledge base a correct extraction over the schools fixture yields.
// All six layers are fully covered so validation applies no repairs.
inline sqlsynth::kb::KnowledgeBase expected_kb() {
  using namespace sqlsynth::kb;
  KnowledgeBase k;

  // K1: table and column descriptions.
  {
    MetadataLayer::Table schools;
    schools.description =
        "Directory of California public schools with location and charter "
        "status.";
    schools.row_count_estimate = 5;
    schools.columns["CDSCode"] = {
        "Unique county-district-school code identifying each school."};
    schools.columns["County"] = {"County where the school is located."};
    schools.columns["District"] = {"School district the school belongs to."};
    schools.columns["School"] = {"Official school name."};
    schools.columns["Charter"] = {
        "1 if the school is a charter school, 0 otherwise."};
    k.k1.tables["schools"] = std::move(schools);

    MetadataLayer::Table sat;
    sat.description = "SAT performance figures reported per school.";
    sat.row_count_estimate = 5;
    sat.columns["cds"] = {"School code linking to the schools directory."};
    sat.columns["sname"] = {"School name as reported with SAT results."};
    sat.columns["AvgScrMath"] = {"Average SAT math score for the school."};
    sat.columns["AvgScrRead"] = {"Average SAT reading score for the school."};
    sat.columns["NumTstTakr"] = {"Number of students who took the SAT."};
    k.k1.tables["satscores"] = std::move(sat);
  }

  // K2: domain rules.
  {
    k.k2.domain_name = "education";
    DomainConstraintLayer::Rule r1;
    r1.rule_id = "R1";
    r1.statement =
        "Charter is a binary flag: 1 marks charter schools, 0 marks "
        "non-charter schools.";
    r1.affected_tables = {"schools"};
    r1.affected_columns = {"schools.Charter"};
    k.k2.business_rules.push_back(std::move(r1));

    DomainConstraintLayer::Rule r2;
    r2.rule_id = "R2";
    r2.statement = "Average SAT section scores fall between 200 and 800.";
    r2.affected_tables = {"satscores"};
    r2.affected_columns = {"satscores.AvgScrMath", "satscores.AvgScrRead"};
    k.k2.business_rules.push_back(std::move(r2));
  }

  // K3: semantic field types. Ranges only on quantitative columns.
  {
    using Entry = FieldTypeLayer::Entry;
    using Json = sqlsynth::db::Json;
    auto quantitative = [](const std::string& unit, long long lo, long long hi,
                           std::vector<Json> examples) {
      Entry e;
      e.semantic_category = SemanticCategory::quantitative;
      e.unit = unit;
      e.has_range = true;
      e.range_min = lo;
      e.range_max = hi;
      e.example_values = std::move(examples);
      return e;
    };
    auto plain = [](SemanticCategory c, std::vector<Json> examples) {
      Entry e;
      e.semantic_category = c;
      e.example_values = std::move(examples);
      return e;
    };
    k.k3.columns["schools.CDSCode"] =
        plain(SemanticCategory::identifier,
              {"01100170109835", "19647330100743"});
    k.k3.columns["schools.County"] =
        plain(SemanticCategory::categorical,
              {"Alameda", "Los Angeles", "San Francisco"});
    k.k3.columns["schools.District"] =
        plain(SemanticCategory::categorical,
              {"Alameda Unified", "LA Unified"});
    k.k3.columns["schools.School"] =
        plain(SemanticCategory::free_text,
              {"Alameda High School", "Lowell High School"});
    k.k3.columns["schools.Charter"] =
        plain(SemanticCategory::categorical, {0, 1});
    k.k3.columns["satscores.cds"] =
        plain(SemanticCategory::identifier, {"01100170109835"});
    k.k3.columns["satscores.sname"] =
        plain(SemanticCategory::free_text, {"Alameda High School"});
    k.k3.columns["satscores.AvgScrMath"] =
        quantitative("points", 480, 640, {510, 640});
    k.k3.columns["satscores.AvgScrRead"] =
        quantitative("points", 470, 610, {495, 610});
    k.k3.columns["satscores.NumTstTakr"] =
        quantitative("students", 40, 350, {120, 350});
  }

  // K4: per-column operations. Aggregations only on quantitative columns.
  {
    using Entry = ColumnSemanticsLayer::Entry;
    auto entry = [](std::string meaning, std::set<std::string> ops,
                    std::string null_note) {
      Entry e;
      e.meaning = std::move(meaning);
      e.allowed_operations = std::move(ops);
      e.nullability_note = std::move(null_note);
      return e;
    };
    k.k4.columns["schools.CDSCode"] =
        entry("Primary school identifier used for joins.",
              {"select", "filter", "group", "order", "count"}, "never null");
    k.k4.columns["schools.County"] =
        entry("County name for grouping and filtering.",
              {"select", "filter", "group", "order", "count"}, "never null");
    k.k4.columns["schools.District"] =
        entry("District name for grouping and filtering.",
              {"select", "filter", "group", "order", "count"}, "never null");
    k.k4.columns["schools.School"] =
        entry("Display name of the school.",
              {"select", "filter", "order", "count"}, "never null");
    k.k4.columns["schools.Charter"] =
        entry("Charter flag used to filter school type.",
              {"select", "filter", "group", "count"},
              "null when charter status is unreported");
    k.k4.columns["satscores.cds"] =
        entry("School code matching schools.CDSCode.",
              {"select", "filter", "group", "count"}, "never null");
    k.k4.columns["satscores.sname"] =
        entry("School name shown alongside scores.",
              {"select", "filter", "order", "count"},
              "may be null when unreported");
    k.k4.columns["satscores.AvgScrMath"] = entry(
        "Average math score; supports numeric aggregation.",
        {"select", "filter", "order", "sum", "avg", "min", "max", "count"},
        "null when no students tested");
    k.k4.columns["satscores.AvgScrRead"] = entry(
        "Average reading score; supports numeric aggregation.",
        {"select", "filter", "order", "sum", "avg", "min", "max", "count"},
        "null when no students tested");
    k.k4.columns["satscores.NumTstTakr"] = entry(
        "Count of SAT takers; supports totals and averages.",
        {"select", "filter", "order", "group", "sum", "avg", "min", "max",
         "count"},
        "never null");
  }

  // K5: table roles and intra-table constraints.
  {
    TableConstraintLayer::Entry schools;
    schools.entity_role = EntityRole::primary_entity;
    schools.constraints.push_back(
        {"CDSCode uniquely identifies each school.", {"CDSCode"}});
    k.k5.tables["schools"] = std::move(schools);

    TableConstraintLayer::Entry sat;
    sat.entity_role = EntityRole::domain_attribute;
    sat.constraints.push_back(
        {"At most one score row per school; cds references the school "
         "directory.",
         {"cds"}});
    k.k5.tables["satscores"] = std::move(sat);
  }

  // K6: the declared foreign key plus one derived dependency.
  {
    RelationLayer::JoinEdge e;
    e.from_table = "satscores";
    e.from_column = "cds";
    e.to_table = "schools";
    e.to_column = "CDSCode";
    e.cardinality = "1:1";
    e.label = "SAT results for a school";
    e.inferred = false;
    k.k6.join_edges.push_back(std::move(e));

    RelationLayer::Dependency d;
    d.statement =
        "satscores.sname duplicates schools.School for the matching CDSCode.";
    d.tables = {"satscores", "schools"};
    k.k6.derived_dependencies.push_back(std::move(d));
  }

  for (int i = 0; i < 6; ++i) k.present[i] = true;
  return k;
}

// Scripted response text for one extraction stage: the layer a well-behaved
// model would return, rendered in the shape the stage output contract asks
// for. Round-tripping these through parse + validate reproduces expected_kb().
inline std::string stage_response_text(int stage) {
  static const sqlsynth::kb::KnowledgeBase kb = expected_kb();
  return sqlsynth::kb::serialize_layer(kb, stage).dump(2);
}

}  // namespace fixtures
