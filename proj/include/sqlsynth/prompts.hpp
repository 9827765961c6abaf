#pragma once

// All prompt construction in one place. The pipeline and the test fixtures
// build requests through these helpers, so scripted providers can match on
// exact request fingerprints.

#include <string>
#include <utility>
#include <vector>

#include "sqlsynth/llm_gateway.hpp"

namespace sqlsynth::prompts {

constexpr double kGenerationTemperature = 0.7;
constexpr double kJudgmentTemperature = 0.0;

using Block = std::pair<std::string, std::string>;  // label, body

inline std::string join_blocks(const std::vector<Block>& blocks) {
  std::string out;
  for (const Block& b : blocks) {
    out += b.first;
    out += ":\n";
    out += b.second;
    if (!b.second.empty() && b.second.back() != '\n') out += '\n';
    out += '\n';
  }
  if (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

// ---------------------------------------------------------------------------
// Knowledge-base extraction stages.
// ---------------------------------------------------------------------------

inline const char* kb_stage_system_text(int stage) {
  switch (stage) {
    case 1:
      return "You are a database analyst. Read the schema and the sampled "
             "rows, then describe what each table and column stores. Reply "
             "with a single JSON object of the form {\"tables\": [{\"name\", "
             "\"description\", \"row_count_estimate\", \"columns\": "
             "[{\"name\", \"description\"}]}]} covering every table and "
             "every column.";
    case 2:
      return "You are a domain analyst. From the schema and the table "
             "metadata, identify the business domain and its rules. Reply "
             "with a single JSON object of the form {\"domain_name\", "
             "\"business_rules\": [{\"rule_id\", \"statement\", "
             "\"affected_tables\": [names], \"affected_columns\": "
             "[\"table.column\"]}]}. Rule ids must be unique.";
    case 3:
      return "You are a data profiling analyst. Using the table metadata and "
             "the sampled rows, assign each column one semantic category from "
             "exactly: identifier, categorical, quantitative, temporal, "
             "free_text. Reply with a single JSON object of the form "
             "{\"columns\": [{\"table\", \"column\", \"semantic_category\", "
             "\"unit\" (optional), \"value_range\": {\"min\", \"max\"} "
             "(only for quantitative or temporal), \"example_values\": "
             "[at most 5]}]} covering every column.";
    case 4:
      return "You are a data semantics analyst. Using the metadata, domain "
             "rules, and field types, state what each column means and which "
             "operations are valid on it. Allowed operations come from "
             "exactly: select, filter, group, order, sum, avg, min, max, "
             "count. Reply with a single JSON object of the form "
             "{\"columns\": [{\"table\", \"column\", \"meaning\", "
             "\"allowed_operations\": [names], \"nullability_note\"}]} "
             "covering every column.";
    case 5:
      return "You are a data modeling analyst. Using the accumulated table "
             "and column knowledge, assign each table an entity role from "
             "exactly: primary_entity, domain_attribute, metadata_entity, "
             "and state intra-table constraints between its columns. Reply "
             "with a single JSON object of the form {\"tables\": [{\"name\", "
             "\"entity_role\", \"constraints\": [{\"statement\", "
             "\"columns\": [names]}]}]} covering every table.";
    case 6:
      return "You are a data relationship analyst. Using the field types, "
             "column semantics, and table constraints, propose join edges "
             "between tables and cross-table dependencies. Reply with a "
             "single JSON object of the form {\"join_edges\": [{\"from\": "
             "\"table.column\", \"to\": \"table.column\", \"cardinality\": "
             "one of \"1:1\", \"1:N\", \"N:M\", \"label\"}], "
             "\"derived_dependencies\": [{\"statement\", \"tables\": "
             "[names]}]}.";
    default:
      return "";
  }
}

inline llm::ChatRequest kb_stage_request(int stage,
                                         const std::vector<Block>& inputs) {
  llm::ChatRequest req;
  req.system_text = kb_stage_system_text(stage);
  req.user_text = join_blocks(inputs);
  req.temperature = kJudgmentTemperature;
  req.response_schema_tag = llm::SchemaTag::structured_record;
  return req;
}

// ---------------------------------------------------------------------------
// Draft generation: question + reasoning trace, then SQL.
// ---------------------------------------------------------------------------

inline llm::ChatRequest question_request(const std::string& kb_digest,
                                         const std::string& domain_context,
                                         const std::string& task_type,
                                         int level) {
  llm::ChatRequest req;
  req.system_text =
      "You are a SQL training data designer. Using only the tables and "
      "columns in the knowledge base below, write one natural language "
      "question and a structured reasoning trace for it. Respect the allowed "
      "operations listed for each column and the stated business rules. Do "
      "not write the SQL yet. Reply with a single JSON object of the form "
      "{\"question\": text, \"think\": {\"focus\", \"metadata\": "
      "{\"main_scenario\", \"sub_scenario\", \"complexity_level\" (integer), "
      "\"use_case\"}, \"table_selection\": {\"tables_used\": [names], "
      "\"reasoning\"}, \"column_selection\": {\"columns_used\": [{\"name\", "
      "\"type\", \"operation\", \"purpose\"}]}, \"sql_strategy\": "
      "{\"operations\": [names], \"approach\", \"no_need\": [names]}, "
      "\"expected_output\"}}. The metadata.complexity_level must equal the "
      "requested level.";
  std::vector<Block> blocks;
  blocks.emplace_back("Knowledge base", kb_digest);
  blocks.emplace_back("Domain context", domain_context);
  blocks.emplace_back("Analytical task type", task_type);
  blocks.emplace_back("Requested complexity level",
                      "Level " + std::to_string(level) +
                          " (1 = single table; 2 = joins with aggregation, at "
                          "most 3 tables; 3 = subqueries, CASE WHEN, UNION, "
                          "or 4+ tables; 4 = window functions or CTEs)");
  req.user_text = join_blocks(blocks);
  req.temperature = kGenerationTemperature;
  req.response_schema_tag = llm::SchemaTag::structured_record;
  return req;
}

inline llm::ChatRequest sql_request(const std::string& question,
                                    const std::string& trace_json,
                                    const std::string& kb_digest,
                                    const std::string& domain_context,
                                    const std::string& task_type, int level) {
  llm::ChatRequest req;
  req.system_text =
      "You are a SQL writer for SQLite. Write exactly one SELECT statement "
      "that answers the question by following the reasoning trace. Use only "
      "tables and columns from the knowledge base and respect the allowed "
      "operations for each column. Reply with the SQL statement only, no "
      "commentary.";
  std::vector<Block> blocks;
  blocks.emplace_back("Question", question);
  blocks.emplace_back("Reasoning trace", trace_json);
  blocks.emplace_back("Knowledge base", kb_digest);
  blocks.emplace_back("Domain context", domain_context);
  blocks.emplace_back("Analytical task type", task_type);
  blocks.emplace_back("Requested complexity level",
                      "Level " + std::to_string(level));
  req.user_text = join_blocks(blocks);
  req.temperature = kGenerationTemperature;
  req.response_schema_tag = llm::SchemaTag::free_text;
  return req;
}

// ---------------------------------------------------------------------------
// Correction.
// ---------------------------------------------------------------------------

inline llm::ChatRequest correction_request(const std::string& question,
                                           const std::string& sql_text,
                                           const std::string& trace_json,
                                           const std::string& errors_text,
                                           const std::string& evidence_text,
                                           const std::string& kb_digest) {
  llm::ChatRequest req;
  req.system_text =
      "You are a SQL repair assistant. The draft below failed semantic "
      "checks. Fix the SQL and the reasoning trace using the evidence, "
      "replacing invalid schema elements with valid alternatives. Rewrite "
      "the question only if it rests on a wrong assumption; otherwise keep "
      "it verbatim. Reply with a single JSON object of the form "
      "{\"question\": text, \"sql\": text, \"think\": corrected trace, "
      "\"corrections\": [one short note per applied fix]}.";
  std::vector<Block> blocks;
  blocks.emplace_back("Question", question);
  blocks.emplace_back("SQL", sql_text);
  blocks.emplace_back("Reasoning trace", trace_json);
  blocks.emplace_back("Detected errors", errors_text);
  blocks.emplace_back("Evidence", evidence_text);
  blocks.emplace_back("Knowledge base", kb_digest);
  req.user_text = join_blocks(blocks);
  req.temperature = kJudgmentTemperature;
  req.response_schema_tag = llm::SchemaTag::structured_record;
  return req;
}

// ---------------------------------------------------------------------------
// Judgment prompts.
// ---------------------------------------------------------------------------

inline llm::ChatRequest complexity_judge_request(const std::string& sql_text) {
  llm::ChatRequest req;
  req.system_text =
      "You are an SQL complexity evaluator. Classify the given SQL query "
      "into one of four levels based on the following criteria. Output only "
      "the level number and reasoning.\n\n"
      "Classification Criteria:\n\n"
      "Level 1: Simple\n"
      "Single table, basic filtering and sorting (WHERE, ORDER BY, LIMIT, "
      "DISTINCT)\n\n"
      "Level 2: Moderate\n"
      "Multi-table joins (max 3 tables, 2 JOINs) with aggregation (GROUP BY, "
      "HAVING, COUNT/SUM/AVG)\n\n"
      "Level 3: Complex\n"
      "Advanced logic: subqueries (IN, EXISTS, correlated), CASE WHEN, "
      "UNION, or 4+ tables\n\n"
      "Level 4: Expert\n"
      "Must use: Window functions (ROW_NUMBER, RANK, LAG, LEAD), CTEs "
      "(WITH), or recursive queries\n\n"
      "Decision Rule:\n"
      "Check Level 4 features first -> Level 3 -> Level 2 -> else Level 1\n\n"
      "Output JSON:\n"
      "{\"level\": \"number\", \"reasoning\": \"brief explanation\"}";
  req.user_text = "SQL Query:\n" + sql_text;
  req.temperature = kJudgmentTemperature;
  req.response_schema_tag = llm::SchemaTag::structured_record;
  return req;
}

inline llm::ChatRequest consistency_judge_request(const std::string& schema_text,
                                                  const std::string& question,
                                                  const std::string& sql_text) {
  llm::ChatRequest req;
  req.system_text =
      "You are a semantic consistency evaluator. Determine whether the given "
      "SQL query correctly answers the natural language question based on "
      "the provided database schema. Output 1 if consistent, 0 if "
      "inconsistent.\n\n"
      "Evaluation Criteria:\n\n"
      "Consistent (1): The SQL query accurately retrieves the information "
      "requested in the question, using correct tables, columns, joins, "
      "filters, and aggregations according to the schema.\n\n"
      "Inconsistent (0): The SQL query has one or more issues:\n"
      "- Targets wrong tables or columns\n"
      "- Uses incorrect join conditions or missing necessary joins\n"
      "- Applies wrong filters, aggregations, or ordering\n"
      "- Returns irrelevant or incomplete data for the question\n\n"
      "Verification Steps:\n"
      "1. Parse the question to identify required information\n"
      "2. Check if SQL uses correct tables/columns from schema\n"
      "3. Verify joins, filters, and aggregations match the question "
      "intent\n"
      "4. Confirm the output answers the question completely\n\n"
      "Output: {\"label\": 0 or 1, \"reasoning\": brief explanation}";
  std::vector<Block> blocks;
  blocks.emplace_back("Database Schema", schema_text);
  blocks.emplace_back("Natural Language Question", question);
  blocks.emplace_back("SQL Query", sql_text);
  req.user_text = join_blocks(blocks);
  req.temperature = kJudgmentTemperature;
  req.response_schema_tag = llm::SchemaTag::structured_record;
  return req;
}

}  // namespace sqlsynth::prompts
