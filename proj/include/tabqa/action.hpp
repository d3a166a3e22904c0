// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tabqa/table.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace tabqa {

struct PrintTable {
    bool operator==(const PrintTable&) const = default;
};

struct GetDataInfo {
    bool show_missing = true;
    bool operator==(const GetDataInfo&) const = default;
};

struct SelectColumn {
    std::vector<std::string> column_names;
    std::string reasoning;
    bool operator==(const SelectColumn&) const = default;
};

struct SelectRow {
    std::optional<std::vector<std::int64_t>> indices;
    std::optional<std::string> condition;
    bool lookup = false;
    std::string reasoning;
    bool operator==(const SelectRow&) const = default;
};

enum class SortOrder { Asc, Desc };

struct SortBy {
    std::vector<std::string> columns;
    std::vector<SortOrder> order; // one entry per column
    bool operator==(const SortBy&) const = default;
};

enum class AggOp { Count, Sum, Avg, Min, Max, Diff };

struct Aggregate {
    std::vector<std::pair<std::string, AggOp>> columns_ops;
    std::vector<std::string> group_by;
    bool show_stats_only = false;
    bool operator==(const Aggregate&) const = default;
};

enum class ArithOp { Add, Sub, Mul, Div };

struct ComputeColumn {
    std::string new_col;
    std::string col_a;
    ArithOp op = ArithOp::Add;
    std::variant<std::string, double> col_b_or_scalar = 0.0;
    bool element_wise = false;
    std::optional<std::string> special_op;
    bool operator==(const ComputeColumn&) const = default;
};

struct StringOperation {
    std::vector<std::string> columns;
    std::string operation; // upper|lower|substring|concat|replace|to_number|to_na
    std::int64_t start = 0;
    std::int64_t end = 0;
    std::string sep;
    std::string from;
    std::string to;
    std::vector<std::string> na_values;
    std::optional<std::vector<std::string>> new_columns;
    bool operator==(const StringOperation&) const = default;
};

struct ProcessDatetime {
    std::vector<std::string> columns;
    std::string operation; // parse|extract|shift_timezone
    std::optional<std::string> parse_format;
    std::string unit; // year|month|day|weekday
    std::string timezone;
    std::optional<std::vector<std::string>> new_columns;
    bool operator==(const ProcessDatetime&) const = default;
};

enum class JoinType { Inner, Left, Right, Outer };

struct Join {
    std::string other_table_ref;
    JoinType join_type = JoinType::Inner;
    std::vector<std::string> left_on;
    std::vector<std::string> right_on;
    bool cross_join = false;
    std::string suffix = "_r";
    std::string reasoning;
    bool operator==(const Join&) const = default;
};

struct HandleMissing {
    std::string strategy; // drop_rows|fill_zero|fill_text
    std::string fill_value;
    bool operator==(const HandleMissing&) const = default;
};

struct RetrieveOriginal {
    bool operator==(const RetrieveOriginal&) const = default;
};

struct FinalAnswer {
    std::string answer;
    bool operator==(const FinalAnswer&) const = default;
};

using Action = std::variant<PrintTable, GetDataInfo, SelectColumn, SelectRow, SortBy, Aggregate,
                            ComputeColumn, StringOperation, ProcessDatetime, Join, HandleMissing,
                            RetrieveOriginal, FinalAnswer>;

/// Wire name of the action's tool (print_table, f_select_row, ...).
std::string action_name(const Action& action);

/// Canonical {"tool": ..., "args": {...}} form; from_json validates the
/// shape and raises UnknownTool / ArgumentSchemaError.
nlohmann::json action_to_json(const Action& action);
Action action_from_json(const nlohmann::json& doc);

/// Machine-readable tool list fed into the prompt.
nlohmann::json tool_schemas();

const char* agg_op_name(AggOp op);
const char* arith_op_name(ArithOp op);
const char* join_type_name(JoinType type);
const char* sort_order_name(SortOrder order);

} // namespace tabqa
