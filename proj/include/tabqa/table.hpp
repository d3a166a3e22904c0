// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tabqa/error.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace tabqa {

enum class ColumnKind { Boolean, Integer, Float, Text, Datetime };

const char* column_kind_name(ColumnKind kind);

/// UTC instant with an optional fixed display offset (minutes east of UTC).
/// Ordering and equality compare the instant only.
struct Datetime {
    std::int64_t epoch_s = 0;
    std::optional<int> offset_min;

    bool operator==(const Datetime& other) const { return epoch_s == other.epoch_s; }
    bool operator<(const Datetime& other) const { return epoch_s < other.epoch_s; }
};

/// One cell: null (monostate) or a typed scalar.
using CellValue = std::variant<std::monostate, bool, std::int64_t, double, std::string, Datetime>;

inline bool is_null(const CellValue& cell) {
    return std::holds_alternative<std::monostate>(cell);
}

/// Deterministic text rendering used by the encoder, reports, and answer
/// normalization: integers without decimal point, floats via shortest
/// round-trip decimal, datetimes as ISO-8601 (date only at midnight).
std::string render_cell(const CellValue& cell);

std::string render_double(double value);

struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::Text;
};

/// Delimiter tokens for the textual encoding. All three must be non-empty
/// and none may be a substring of another.
struct EncodingConfig {
    std::string relation_token = "is";
    std::string pair_separator = ",";
    std::string row_delimiter = "\n";

    void validate() const;
};

/// Immutable rectangular table. Every constructor path validates shape,
/// unique trimmed column names, cell/kind agreement, and float finiteness;
/// operations return new tables instead of mutating.
class Table {
  public:
    Table() = default;

    static Table make(std::vector<Column> columns,
                      std::vector<std::vector<CellValue>> rows,
                      std::optional<std::string> provenance = std::nullopt);

    const std::vector<Column>& columns() const { return columns_; }
    const std::vector<std::vector<CellValue>>& rows() const { return rows_; }
    std::size_t row_count() const { return rows_.size(); }
    std::size_t column_count() const { return columns_.size(); }
    const std::optional<std::string>& provenance() const { return provenance_; }

    const CellValue& at(std::size_t row, std::size_t col) const;

    std::optional<std::size_t> find_column(const std::string& name) const;
    /// Like find_column but throws UnknownColumn.
    std::size_t column_index(const std::string& name) const;

    std::size_t null_count(std::size_t col) const;

  private:
    std::vector<Column> columns_;
    std::vector<std::vector<CellValue>> rows_;
    std::optional<std::string> provenance_;
};

enum class TableFormat { Csv, JsonRecords };

/// Parses CSV (RFC 4180, header row required) or a JSON array of records.
/// All columns come out text-typed; empty CSV fields and JSON nulls become
/// null cells. Ragged CSV rows raise ParseError with the 1-based data row
/// index; duplicate headers raise SchemaError.
Table parse_table(const std::string& raw, TableFormat format,
                  std::optional<std::string> provenance = std::nullopt);

/// Promotes each text column to the narrowest kind in
/// integer < float < datetime < text that parses every non-null cell.
/// NA-indicator strings are left untouched here.
Table infer_types(const Table& table);

/// Subject-predicate-object encoding: per cell `name <relation> value <sep>`,
/// clauses joined by single spaces, rows joined by the row delimiter, null
/// rendered as empty (the clause collapses around it). Byte-deterministic.
std::string encode(const Table& table, const EncodingConfig& config = {});

struct ObserveConfig {
    std::size_t max_rows = 5;
    bool uniform_sample = false; // default: deterministic head-of-table
    std::uint64_t seed = 0;
};

/// Partial snapshot handed to the policy: shape, schema, per-column null
/// counts, and up to max_rows rendered rows.
struct Observation {
    std::size_t total_rows = 0;
    std::size_t total_cols = 0;
    std::vector<Column> columns;
    std::vector<std::size_t> missing_counts;
    std::vector<std::string> sampled_rows;
    std::size_t step_index = 0;

    std::string to_text() const;
};

Observation observe(const Table& table, std::size_t max_rows);
Observation observe(const Table& table, const ObserveConfig& config);

/// Token count of encode(table, config); 0 for the empty table. Tokenizer
/// shared with the reward metrics.
std::size_t token_length(const Table& table, const EncodingConfig& config = {});

/// 64-bit FNV-1a over schema plus canonical encoding, as fixed-width hex.
std::string table_digest(const Table& table);

std::uint64_t fnv1a64(const std::string& bytes);

} // namespace tabqa
