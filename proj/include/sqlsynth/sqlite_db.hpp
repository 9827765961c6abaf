#pragma once

// Thin RAII wrapper over the sqlite3 C API. Source databases are always
// opened read-only; writable opens exist for test fixtures and tools.

#include <sqlite3.h>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "sqlsynth/core.hpp"

namespace sqlsynth::db {

// Cell value as stored. Blobs are carried as raw bytes here; the sampling
// layer replaces them with digests before anything reaches a prompt.
struct CellValue {
  enum class Kind { null, integer, real, text, blob };
  Kind kind = Kind::null;
  std::int64_t i = 0;
  double r = 0.0;
  std::string s;  // text, or raw blob bytes
};

struct ExecResult {
  bool success = false;
  std::int64_t row_count = 0;
  std::string error_text;
  bool timed_out = false;
};

class SqliteDb {
 public:
  SqliteDb() = default;
  ~SqliteDb() { close(); }
  SqliteDb(const SqliteDb&) = delete;
  SqliteDb& operator=(const SqliteDb&) = delete;
  SqliteDb(SqliteDb&& other) noexcept : db_(other.db_) { other.db_ = nullptr; }
  SqliteDb& operator=(SqliteDb&& other) noexcept {
    if (this != &other) {
      close();
      db_ = other.db_;
      other.db_ = nullptr;
    }
    return *this;
  }

  Status open_readonly(const std::string& path) {
    if (!std::filesystem::exists(path))
      return make_error(Errc::file_not_found, "no such file: " + path);
    int rc = sqlite3_open_v2(path.c_str(), &db_, SQLITE_OPEN_READONLY, nullptr);
    if (rc != SQLITE_OK) {
      std::string msg = db_ ? sqlite3_errmsg(db_) : "open failed";
      close();
      return make_error(Errc::not_a_database, path + ": " + msg);
    }
    // The open is lazy; force a header read so corrupt files fail here.
    rc = sqlite3_exec(db_, "PRAGMA schema_version;", nullptr, nullptr, nullptr);
    if (rc == SQLITE_NOTADB || rc == SQLITE_CORRUPT) {
      close();
      return make_error(Errc::not_a_database, path + ": not a SQLite database");
    }
    if (rc != SQLITE_OK) {
      std::string msg = sqlite3_errmsg(db_);
      close();
      return make_error(Errc::query_failure, path + ": " + msg);
    }
    return Status::ok_status();
  }

  Status open_create(const std::string& path) {
    int rc = sqlite3_open_v2(path.c_str(), &db_,
                             SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE, nullptr);
    if (rc != SQLITE_OK) {
      std::string msg = db_ ? sqlite3_errmsg(db_) : "open failed";
      close();
      return make_error(Errc::io_failure, path + ": " + msg);
    }
    return Status::ok_status();
  }

  void close() {
    if (db_) {
      sqlite3_close(db_);
      db_ = nullptr;
    }
  }

  bool is_open() const { return db_ != nullptr; }
  sqlite3* raw() const { return db_; }

  Status exec(const std::string& sql) {
    char* err = nullptr;
    int rc = sqlite3_exec(db_, sql.c_str(), nullptr, nullptr, &err);
    if (rc != SQLITE_OK) {
      std::string msg = err ? err : "exec failed";
      sqlite3_free(err);
      return make_error(Errc::query_failure, msg);
    }
    return Status::ok_status();
  }

  // Runs a query collecting every row. Errors propagate with engine text.
  Result<std::vector<std::vector<CellValue>>> query(const std::string& sql) {
    sqlite3_stmt* stmt = nullptr;
    int rc = sqlite3_prepare_v2(db_, sql.c_str(), -1, &stmt, nullptr);
    if (rc != SQLITE_OK)
      return make_error(Errc::query_failure, sqlite3_errmsg(db_));
    std::vector<std::vector<CellValue>> rows;
    while ((rc = sqlite3_step(stmt)) == SQLITE_ROW) {
      int n = sqlite3_column_count(stmt);
      std::vector<CellValue> row;
      row.reserve(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) row.push_back(read_cell(stmt, i));
      rows.push_back(std::move(row));
    }
    if (rc != SQLITE_DONE) {
      Error e = make_error(Errc::query_failure, sqlite3_errmsg(db_));
      sqlite3_finalize(stmt);
      return e;
    }
    sqlite3_finalize(stmt);
    return rows;
  }

  // Executes untrusted SQL under a wall-clock budget, discarding rows.
  // Failures (including timeout) land in the result, never throw.
  ExecResult execute_with_timeout(const std::string& sql,
                                  std::chrono::milliseconds budget,
                                  std::int64_t row_cap = 100000) {
    ExecResult out;
    sqlite3_stmt* stmt = nullptr;
    int rc = sqlite3_prepare_v2(db_, sql.c_str(), -1, &stmt, nullptr);
    if (rc != SQLITE_OK) {
      out.error_text = sqlite3_errmsg(db_);
      return out;
    }
    struct Deadline {
      std::chrono::steady_clock::time_point at;
      bool hit = false;
    } deadline{std::chrono::steady_clock::now() + budget};
    sqlite3_progress_handler(
        db_, 1000,
        [](void* ctx) -> int {
          auto* d = static_cast<Deadline*>(ctx);
          if (std::chrono::steady_clock::now() >= d->at) {
            d->hit = true;
            return 1;  // abort statement
          }
          return 0;
        },
        &deadline);
    while ((rc = sqlite3_step(stmt)) == SQLITE_ROW) {
      if (++out.row_count >= row_cap) break;
    }
    sqlite3_progress_handler(db_, 0, nullptr, nullptr);
    if (rc == SQLITE_DONE || rc == SQLITE_ROW) {
      out.success = true;
    } else {
      out.timed_out = deadline.hit;
      out.error_text =
          deadline.hit ? "statement timeout" : sqlite3_errmsg(db_);
      out.row_count = 0;
    }
    sqlite3_finalize(stmt);
    return out;
  }

 private:
  static CellValue read_cell(sqlite3_stmt* stmt, int i) {
    CellValue v;
    switch (sqlite3_column_type(stmt, i)) {
      case SQLITE_INTEGER:
        v.kind = CellValue::Kind::integer;
        v.i = sqlite3_column_int64(stmt, i);
        break;
      case SQLITE_FLOAT:
        v.kind = CellValue::Kind::real;
        v.r = sqlite3_column_double(stmt, i);
        break;
      case SQLITE_TEXT:
        v.kind = CellValue::Kind::text;
        v.s.assign(
            reinterpret_cast<const char*>(sqlite3_column_text(stmt, i)),
            static_cast<size_t>(sqlite3_column_bytes(stmt, i)));
        break;
      case SQLITE_BLOB:
        v.kind = CellValue::Kind::blob;
        v.s.assign(static_cast<const char*>(sqlite3_column_blob(stmt, i)),
                   static_cast<size_t>(sqlite3_column_bytes(stmt, i)));
        break;
      default:
        v.kind = CellValue::Kind::null;
    }
    return v;
  }

  sqlite3* db_ = nullptr;
};

}  // namespace sqlsynth::db
