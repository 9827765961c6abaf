#pragma once

// Deterministic SQL understanding on top of the parser: referenced tables and
// columns with alias/CTE resolution, join conditions, aggregate calls, a
// structural feature set, and the top-down complexity classification.

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "sqlsynth/db_introspect.hpp"
#include "sqlsynth/sql_parser.hpp"

namespace sqlsynth::sql {

struct ColumnRef {
  enum class Resolution { schema_table, derived, unresolved };
  std::string table;   // resolved table (or raw qualifier when unresolved)
  std::string column;
  Resolution resolution = Resolution::unresolved;
  std::string binding_key;  // lowercased alias/table key used to resolve
};

struct JoinCondition {
  ColumnRef left;
  ColumnRef right;
  std::string op;  // normalized: "=", "!=", "<", "<=", ">", ">="
  bool from_where = false;
  bool from_using = false;
};

struct Aggregation {
  std::string function;  // upper-case name
  ColumnRef arg;         // first column reference in the arguments
  bool has_column_arg = false;
  bool star_arg = false;
  bool windowed = false;
};

struct SqlFacts {
  std::vector<std::string> tables;  // distinct schema tables, first-mention order
  std::vector<ColumnRef> columns;   // deduplicated resolved references
  std::vector<JoinCondition> join_conditions;
  std::vector<Aggregation> aggregations;
  std::set<std::string> features;
  int table_count = 0;

  bool has(const std::string& feature) const {
    return features.count(feature) > 0;
  }
  bool has_plain_aggregation() const {
    return std::any_of(aggregations.begin(), aggregations.end(),
                       [](const Aggregation& a) { return !a.windowed; });
  }
};

namespace detail {

inline bool is_aggregate_name(const std::string& upper) {
  static const char* names[] = {"COUNT", "SUM",          "AVG",       "MIN",
                                "MAX",   "GROUP_CONCAT", "STRING_AGG", "TOTAL"};
  for (const char* n : names)
    if (upper == n) return true;
  return false;
}

class FactsCollector {
 public:
  explicit FactsCollector(const db::DatabaseSchema* schema) : schema_(schema) {}

  SqlFacts run(const SelectStmt& stmt) {
    walk_stmt(stmt, /*in_cte=*/false);
    facts_.table_count = static_cast<int>(facts_.tables.size());
    return std::move(facts_);
  }

 private:
  struct Binding {
    std::string key_lower;  // alias or table name; empty = unreferencable
    std::string display;    // table or CTE name as written
    bool is_schema_table = false;
    const db::TableDef* def = nullptr;
  };
  struct Frame {
    std::vector<Binding> bindings;
  };

  const db::DatabaseSchema* schema_;
  SqlFacts facts_;
  std::vector<Frame> frames_;
  std::vector<std::vector<std::string>> cte_scopes_;  // lowercased names
  int subquery_depth_ = 0;
  std::vector<ColumnRef>* agg_capture_ = nullptr;

  bool is_visible_cte(const std::string& name) const {
    std::string lower = to_lower(name);
    for (const auto& scope : cte_scopes_)
      for (const auto& n : scope)
        if (n == lower) return true;
    return false;
  }

  void note_table(const std::string& name) {
    for (const auto& t : facts_.tables)
      if (iequals(t, name)) return;
    facts_.tables.push_back(name);
  }

  void note_column(const ColumnRef& ref) {
    if (ref.column.empty()) return;
    for (const auto& c : facts_.columns)
      if (iequals(c.table, ref.table) && iequals(c.column, ref.column) &&
          c.resolution == ref.resolution)
        return;
    facts_.columns.push_back(ref);
  }

  // -- statement / core walking --------------------------------------------

  void walk_stmt(const SelectStmt& stmt, bool in_cte) {
    (void)in_cte;
    std::vector<std::string> names;
    for (const auto& cte : stmt.ctes) names.push_back(to_lower(cte.name));
    cte_scopes_.push_back(std::move(names));
    if (!stmt.ctes.empty()) {
      facts_.features.insert("cte");
      if (stmt.recursive) facts_.features.insert("recursive_cte");
    }
    for (const auto& cte : stmt.ctes) walk_stmt(*cte.select, /*in_cte=*/true);

    if (stmt.cores.size() > 1) facts_.features.insert("union");
    for (size_t i = 0; i < stmt.cores.size(); ++i) {
      const SelectCore& core = stmt.cores[i];
      const bool first = i == 0;
      walk_core(core, first ? &stmt : nullptr);
    }
    cte_scopes_.pop_back();
  }

  void walk_core(const SelectCore& core, const SelectStmt* trailing) {
    Frame frame;
    // Derived-table subqueries are walked before the frame is in scope; they
    // cannot see their siblings.
    for (const TableRef& ref : core.from) {
      Binding b;
      if (ref.subquery) {
        facts_.features.insert("subquery");
        ++subquery_depth_;
        walk_stmt(*ref.subquery, /*in_cte=*/false);
        --subquery_depth_;
        b.key_lower = to_lower(ref.alias);
        b.display = ref.alias;
      } else if (is_visible_cte(ref.table)) {
        b.key_lower = to_lower(ref.alias.empty() ? ref.table : ref.alias);
        b.display = ref.table;
      } else {
        note_table(ref.table);
        b.is_schema_table = true;
        b.key_lower = to_lower(ref.alias.empty() ? ref.table : ref.alias);
        b.display = ref.table;
        if (schema_) b.def = schema_->find_table(ref.table);
      }
      frame.bindings.push_back(std::move(b));
    }
    if (core.from.size() >= 2) facts_.features.insert("join");
    for (const TableRef& ref : core.from)
      if (ref.explicit_join) facts_.features.insert("join");

    frames_.push_back(std::move(frame));

    // Join constraints.
    size_t ref_index = 0;
    for (const TableRef& ref : core.from) {
      const Binding& self = frames_.back().bindings[ref_index];
      for (const std::string& col : ref.using_cols) {
        JoinCondition jc;
        jc.from_using = true;
        jc.op = "=";
        const Binding* prev = nullptr;
        for (size_t j = ref_index; j-- > 0;) {
          const Binding& cand = frames_.back().bindings[j];
          if (cand.def && cand.def->find_column(col)) {
            prev = &cand;
            break;
          }
          if (!prev) prev = &cand;  // fallback: nearest earlier binding
        }
        if (!prev) continue;
        jc.left = binding_column(*prev, col);
        jc.right = binding_column(self, col);
        facts_.join_conditions.push_back(std::move(jc));
      }
      if (ref.on) {
        walk_expr(*ref.on);
        collect_conditions(*ref.on, /*from_where=*/false);
      }
      ++ref_index;
    }

    for (const auto& e : core.select_list) walk_expr(*e);
    if (core.where) {
      facts_.features.insert("where");
      walk_expr(*core.where);
      collect_conditions(*core.where, /*from_where=*/true);
    }
    if (!core.group_by.empty()) facts_.features.insert("group_by");
    for (const auto& e : core.group_by) walk_expr(*e);
    if (core.having) {
      facts_.features.insert("having");
      walk_expr(*core.having);
    }
    if (core.distinct) facts_.features.insert("distinct");

    if (trailing) {
      if (!trailing->order_by.empty()) facts_.features.insert("order_by");
      for (const auto& e : trailing->order_by) walk_expr(*e);
      if (trailing->limit) {
        facts_.features.insert("limit");
        walk_expr(*trailing->limit);
      }
      if (trailing->offset) walk_expr(*trailing->offset);
    }

    frames_.pop_back();
  }

  static ColumnRef binding_column(const Binding& b, const std::string& col) {
    ColumnRef ref;
    ref.table = b.display;
    ref.column = col;
    ref.binding_key = b.key_lower;
    ref.resolution = b.is_schema_table ? ColumnRef::Resolution::schema_table
                                       : ColumnRef::Resolution::derived;
    return ref;
  }

  // -- column resolution ----------------------------------------------------

  ColumnRef resolve_column(const std::string& qualifier,
                           const std::string& name) {
    ColumnRef ref;
    ref.column = name;
    if (!qualifier.empty()) {
      std::string key = to_lower(qualifier);
      for (size_t fi = frames_.size(); fi-- > 0;) {
        for (const Binding& b : frames_[fi].bindings) {
          if (b.key_lower != key) continue;
          ref.table = b.display;
          ref.binding_key = b.key_lower;
          ref.resolution = b.is_schema_table
                               ? ColumnRef::Resolution::schema_table
                               : ColumnRef::Resolution::derived;
          if (fi + 1 != frames_.size() && subquery_depth_ > 0)
            facts_.features.insert("correlated_subquery");
          return ref;
        }
      }
      ref.table = qualifier;
      ref.resolution = ColumnRef::Resolution::unresolved;
      return ref;
    }
    for (size_t fi = frames_.size(); fi-- > 0;) {
      const Frame& frame = frames_[fi];
      for (const Binding& b : frame.bindings) {
        if (b.def && b.def->find_column(name)) {
          ref.table = b.display;
          ref.binding_key = b.key_lower;
          ref.resolution = ColumnRef::Resolution::schema_table;
          if (fi + 1 != frames_.size() && subquery_depth_ > 0)
            facts_.features.insert("correlated_subquery");
          return ref;
        }
      }
      bool has_derived = std::any_of(
          frame.bindings.begin(), frame.bindings.end(),
          [](const Binding& b) { return !b.is_schema_table; });
      if (has_derived) {
        ref.resolution = ColumnRef::Resolution::derived;
        return ref;
      }
    }
    // No definition matched: attribute to a sole table so diagnosis can name
    // it, otherwise leave unresolved.
    if (!frames_.empty() && frames_.back().bindings.size() == 1 &&
        frames_.back().bindings[0].is_schema_table) {
      const Binding& b = frames_.back().bindings[0];
      ref.table = b.display;
      ref.binding_key = b.key_lower;
      ref.resolution = ColumnRef::Resolution::schema_table;
      return ref;
    }
    ref.resolution = ColumnRef::Resolution::unresolved;
    return ref;
  }

  // -- expression walking ---------------------------------------------------

  void walk_expr(const Expr& e) {
    switch (e.kind) {
      case Expr::Kind::column: {
        ColumnRef ref = resolve_column(e.qualifier, e.name);
        note_column(ref);
        if (agg_capture_) agg_capture_->push_back(ref);
        break;
      }
      case Expr::Kind::func: {
        std::string upper = e.name;
        for (char& c : upper)
          c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        if (e.has_over) facts_.features.insert("window_function");
        if (is_aggregate_name(upper)) {
          Aggregation agg;
          agg.function = upper;
          agg.star_arg = e.star_arg;
          agg.windowed = e.has_over;
          std::vector<ColumnRef> captured;
          auto* prev = agg_capture_;
          agg_capture_ = &captured;
          for (const auto& c : e.children) walk_expr(*c);
          agg_capture_ = prev;
          if (!captured.empty()) {
            agg.arg = captured.front();
            agg.has_column_arg = true;
          }
          facts_.aggregations.push_back(std::move(agg));
        } else {
          for (const auto& c : e.children) walk_expr(*c);
        }
        for (const auto& w : e.window_exprs) walk_expr(*w);
        break;
      }
      case Expr::Kind::subquery:
      case Expr::Kind::in_select: {
        facts_.features.insert("subquery");
        for (const auto& c : e.children) walk_expr(*c);
        ++subquery_depth_;
        walk_stmt(*e.select, /*in_cte=*/false);
        --subquery_depth_;
        break;
      }
      case Expr::Kind::case_when: {
        facts_.features.insert("case_when");
        for (const auto& c : e.children) walk_expr(*c);
        break;
      }
      default:
        for (const auto& c : e.children) walk_expr(*c);
        for (const auto& w : e.window_exprs) walk_expr(*w);
        break;
    }
  }

  // Extract comparison conditions between columns of two distinct bindings
  // from the top-level AND conjuncts of a constraint expression.
  void collect_conditions(const Expr& e, bool from_where) {
    if (e.kind == Expr::Kind::binary && e.text == "AND") {
      collect_conditions(*e.children[0], from_where);
      collect_conditions(*e.children[1], from_where);
      return;
    }
    if (e.kind != Expr::Kind::binary) return;
    static const char* ops[] = {"=", "==", "!=", "<>", "<", "<=", ">", ">="};
    bool is_cmp = false;
    for (const char* op : ops)
      if (e.text == op) is_cmp = true;
    if (!is_cmp) return;
    const Expr& l = *e.children[0];
    const Expr& r = *e.children[1];
    if (l.kind != Expr::Kind::column || r.kind != Expr::Kind::column) return;
    ColumnRef lr = resolve_column(l.qualifier, l.name);
    ColumnRef rr = resolve_column(r.qualifier, r.name);
    bool distinct_sides;
    if (!lr.binding_key.empty() && !rr.binding_key.empty())
      distinct_sides = lr.binding_key != rr.binding_key;
    else
      distinct_sides = !iequals(lr.table, rr.table) &&
                       !lr.table.empty() && !rr.table.empty();
    if (!distinct_sides) return;
    JoinCondition jc;
    jc.left = std::move(lr);
    jc.right = std::move(rr);
    jc.op = e.text == "==" ? "=" : (e.text == "<>" ? "!=" : e.text);
    jc.from_where = from_where;
    facts_.join_conditions.push_back(std::move(jc));
  }
};

}  // namespace detail

inline SqlFacts extract_facts(const SelectStmt& stmt,
                              const db::DatabaseSchema* schema = nullptr) {
  detail::FactsCollector collector(schema);
  SqlFacts facts = collector.run(stmt);
  if (!facts.join_conditions.empty()) facts.features.insert("join");
  return facts;
}

inline Result<SqlFacts> extract_facts(const std::string& sql_text,
                                      const db::DatabaseSchema* schema = nullptr) {
  auto parsed = parse_select_statement(sql_text);
  if (!parsed.is_ok()) return parsed.error();
  return extract_facts(*parsed.value(), schema);
}

// ---------------------------------------------------------------------------
// Complexity classification (top-down, highest level first).
// ---------------------------------------------------------------------------

struct ComplexityResult {
  int level = 1;  // 1..4
  std::vector<std::string> matched_features;
};

inline std::string level_name(int level) {
  return "L" + std::to_string(level);
}

inline ComplexityResult classify_complexity(const SqlFacts& f) {
  ComplexityResult r;
  auto matched_has = [&](const char* s) {
    return std::find(r.matched_features.begin(), r.matched_features.end(), s) !=
           r.matched_features.end();
  };

  for (const char* s : {"window_function", "cte", "recursive_cte"})
    if (f.has(s)) r.matched_features.push_back(s);
  if (!r.matched_features.empty()) {
    r.level = 4;
    return r;
  }

  for (const char* s : {"subquery", "correlated_subquery", "case_when", "union"})
    if (f.has(s)) r.matched_features.push_back(s);
  if (f.table_count >= 4 && f.has("join") && !matched_has("join"))
    r.matched_features.push_back("join");
  if (!r.matched_features.empty() || f.table_count >= 4) {
    r.level = 3;
    return r;
  }

  if (f.has("join") && f.table_count <= 3) {
    std::vector<std::string> triggers;
    if (f.has("group_by")) triggers.push_back("group_by");
    if (f.has("having")) triggers.push_back("having");
    if (f.has_plain_aggregation()) triggers.push_back("aggregations");
    if (!triggers.empty()) {
      r.level = 2;
      r.matched_features.push_back("join");
      for (auto& t : triggers) r.matched_features.push_back(std::move(t));
      return r;
    }
  }

  r.level = 1;
  return r;
}

// ---------------------------------------------------------------------------
// JSON views (CLI output and debugging).
// ---------------------------------------------------------------------------

inline db::Json column_ref_to_json(const ColumnRef& ref) {
  db::Json j;
  j["table"] = ref.table;
  j["column"] = ref.column;
  const char* res = ref.resolution == ColumnRef::Resolution::schema_table
                        ? "schema_table"
                        : ref.resolution == ColumnRef::Resolution::derived
                              ? "derived"
                              : "unresolved";
  j["resolution"] = res;
  return j;
}

inline db::Json facts_to_json(const SqlFacts& f) {
  db::Json j;
  j["tables"] = f.tables;
  j["columns"] = db::Json::array();
  for (const auto& c : f.columns) j["columns"].push_back(column_ref_to_json(c));
  j["join_conditions"] = db::Json::array();
  for (const auto& jc : f.join_conditions) {
    db::Json e;
    e["left"] = column_ref_to_json(jc.left);
    e["op"] = jc.op;
    e["right"] = column_ref_to_json(jc.right);
    e["from_where"] = jc.from_where;
    e["from_using"] = jc.from_using;
    j["join_conditions"].push_back(std::move(e));
  }
  j["aggregations"] = db::Json::array();
  for (const auto& a : f.aggregations) {
    db::Json e;
    e["function"] = a.function;
    if (a.star_arg)
      e["argument"] = "*";
    else if (a.has_column_arg)
      e["argument"] = column_ref_to_json(a.arg);
    else
      e["argument"] = nullptr;
    e["windowed"] = a.windowed;
    j["aggregations"].push_back(std::move(e));
  }
  j["features"] = f.features;
  j["table_count"] = f.table_count;
  return j;
}

inline db::Json complexity_to_json(const ComplexityResult& c) {
  db::Json j;
  j["level"] = level_name(c.level);
  j["matched_features"] = c.matched_features;
  return j;
}

}  // namespace sqlsynth::sql
