// SPDX-License-Identifier: Apache-2.0
#include "tabqa/action.hpp"

namespace tabqa {

using nlohmann::json;

const char* agg_op_name(AggOp op) {
    switch (op) {
        case AggOp::Count: return "count";
        case AggOp::Sum: return "sum";
        case AggOp::Avg: return "avg";
        case AggOp::Min: return "min";
        case AggOp::Max: return "max";
        case AggOp::Diff: return "diff";
    }
    return "count";
}

const char* arith_op_name(ArithOp op) {
    switch (op) {
        case ArithOp::Add: return "+";
        case ArithOp::Sub: return "-";
        case ArithOp::Mul: return "*";
        case ArithOp::Div: return "/";
    }
    return "+";
}

const char* join_type_name(JoinType type) {
    switch (type) {
        case JoinType::Inner: return "inner";
        case JoinType::Left: return "left";
        case JoinType::Right: return "right";
        case JoinType::Outer: return "outer";
    }
    return "inner";
}

const char* sort_order_name(SortOrder order) {
    return order == SortOrder::Asc ? "asc" : "desc";
}

namespace {

[[noreturn]] void arg_fail(const std::string& field, const std::string& what) {
    fail(ErrorCode::ArgumentSchemaError, "field '" + field + "': " + what);
}

std::string get_string(const json& args, const char* field, bool required,
                       const std::string& fallback = "") {
    if (!args.contains(field)) {
        if (required) arg_fail(field, "missing");
        return fallback;
    }
    if (!args[field].is_string()) arg_fail(field, "expected string");
    return args[field].get<std::string>();
}

bool get_bool(const json& args, const char* field, bool fallback) {
    if (!args.contains(field)) return fallback;
    if (!args[field].is_boolean()) arg_fail(field, "expected boolean");
    return args[field].get<bool>();
}

std::int64_t get_int(const json& args, const char* field, bool required, std::int64_t fallback = 0) {
    if (!args.contains(field)) {
        if (required) arg_fail(field, "missing");
        return fallback;
    }
    if (!args[field].is_number_integer()) arg_fail(field, "expected integer");
    return args[field].get<std::int64_t>();
}

std::vector<std::string> get_string_list(const json& args, const char* field, bool required) {
    std::vector<std::string> out;
    if (!args.contains(field)) {
        if (required) arg_fail(field, "missing");
        return out;
    }
    const json& value = args[field];
    if (value.is_string()) {
        out.push_back(value.get<std::string>());
        return out;
    }
    if (!value.is_array()) arg_fail(field, "expected string or array of strings");
    for (const auto& item : value) {
        if (!item.is_string()) arg_fail(field, "expected array of strings");
        out.push_back(item.get<std::string>());
    }
    return out;
}

AggOp parse_agg_op(const std::string& name) {
    if (name == "count") return AggOp::Count;
    if (name == "sum") return AggOp::Sum;
    if (name == "avg" || name == "mean") return AggOp::Avg;
    if (name == "min") return AggOp::Min;
    if (name == "max") return AggOp::Max;
    if (name == "diff") return AggOp::Diff;
    arg_fail("columns_ops", "unknown aggregate op '" + name + "'");
}

ArithOp parse_arith_op(const std::string& name) {
    if (name == "+") return ArithOp::Add;
    if (name == "-" || name == "−") return ArithOp::Sub;
    if (name == "*" || name == "×") return ArithOp::Mul;
    if (name == "/" || name == "÷") return ArithOp::Div;
    arg_fail("op", "unknown arithmetic op '" + name + "'");
}

JoinType parse_join_type(const std::string& name) {
    if (name == "inner") return JoinType::Inner;
    if (name == "left") return JoinType::Left;
    if (name == "right") return JoinType::Right;
    if (name == "outer" || name == "full") return JoinType::Outer;
    arg_fail("join_type", "unknown join type '" + name + "'");
}

SortOrder parse_sort_order(const std::string& name) {
    if (name == "asc" || name == "ascending") return SortOrder::Asc;
    if (name == "desc" || name == "descending") return SortOrder::Desc;
    arg_fail("order", "unknown sort order '" + name + "'");
}

} // namespace

std::string action_name(const Action& action) {
    struct Namer {
        std::string operator()(const PrintTable&) const { return "print_table"; }
        std::string operator()(const GetDataInfo&) const { return "f_get_data_info"; }
        std::string operator()(const SelectColumn&) const { return "f_select_column"; }
        std::string operator()(const SelectRow&) const { return "f_select_row"; }
        std::string operator()(const SortBy&) const { return "f_sort_by"; }
        std::string operator()(const Aggregate&) const { return "f_aggregate"; }
        std::string operator()(const ComputeColumn&) const { return "f_compute_column"; }
        std::string operator()(const StringOperation&) const { return "f_string_operation"; }
        std::string operator()(const ProcessDatetime&) const { return "f_process_datetime"; }
        std::string operator()(const Join&) const { return "f_join"; }
        std::string operator()(const HandleMissing&) const { return "f_handle_missing"; }
        std::string operator()(const RetrieveOriginal&) const { return "f_retrieve_original"; }
        std::string operator()(const FinalAnswer&) const { return "f_final_answer"; }
    };
    return std::visit(Namer{}, action);
}

nlohmann::json action_to_json(const Action& action) {
    json args = json::object();
    struct Writer {
        json& args;
        void operator()(const PrintTable&) const {}
        void operator()(const GetDataInfo& a) const { args["show_missing"] = a.show_missing; }
        void operator()(const SelectColumn& a) const {
            args["column_names"] = a.column_names;
            if (!a.reasoning.empty()) args["reasoning"] = a.reasoning;
        }
        void operator()(const SelectRow& a) const {
            if (a.indices) args["indices"] = *a.indices;
            if (a.condition) args["condition"] = *a.condition;
            args["lookup"] = a.lookup;
            if (!a.reasoning.empty()) args["reasoning"] = a.reasoning;
        }
        void operator()(const SortBy& a) const {
            args["columns"] = a.columns;
            json order = json::array();
            for (const auto o : a.order) order.push_back(sort_order_name(o));
            args["order"] = order;
        }
        void operator()(const Aggregate& a) const {
            json pairs = json::array();
            for (const auto& [column, op] : a.columns_ops)
                pairs.push_back(json::array({column, agg_op_name(op)}));
            args["columns_ops"] = pairs;
            if (!a.group_by.empty()) args["group_by"] = a.group_by;
            args["show_stats_only"] = a.show_stats_only;
        }
        void operator()(const ComputeColumn& a) const {
            args["new_col"] = a.new_col;
            args["col_A"] = a.col_a;
            args["op"] = arith_op_name(a.op);
            if (const auto* name = std::get_if<std::string>(&a.col_b_or_scalar))
                args["col_B_or_scalar"] = *name;
            else
                args["col_B_or_scalar"] = std::get<double>(a.col_b_or_scalar);
            args["element_wise"] = a.element_wise;
            if (a.special_op) args["special_op"] = *a.special_op;
        }
        void operator()(const StringOperation& a) const {
            args["columns"] = a.columns;
            args["operation"] = a.operation;
            if (a.operation == "substring") {
                args["start"] = a.start;
                args["end"] = a.end;
            }
            if (a.operation == "concat") args["sep"] = a.sep;
            if (a.operation == "replace") {
                args["from"] = a.from;
                args["to"] = a.to;
            }
            if (a.operation == "to_na" && !a.na_values.empty()) args["na_values"] = a.na_values;
            if (a.new_columns) args["new_columns"] = *a.new_columns;
        }
        void operator()(const ProcessDatetime& a) const {
            args["columns"] = a.columns;
            args["operation"] = a.operation;
            if (a.parse_format) args["parse_format"] = *a.parse_format;
            if (!a.unit.empty()) args["unit"] = a.unit;
            if (!a.timezone.empty()) args["timezone"] = a.timezone;
            if (a.new_columns) args["new_columns"] = *a.new_columns;
        }
        void operator()(const Join& a) const {
            args["other_table_ref"] = a.other_table_ref;
            args["join_type"] = join_type_name(a.join_type);
            args["left_on"] = a.left_on;
            args["right_on"] = a.right_on;
            args["cross_join"] = a.cross_join;
            args["suffix"] = a.suffix;
            if (!a.reasoning.empty()) args["reasoning"] = a.reasoning;
        }
        void operator()(const HandleMissing& a) const {
            args["strategy"] = a.strategy;
            if (a.strategy == "fill_text") args["fill_value"] = a.fill_value;
        }
        void operator()(const RetrieveOriginal&) const {}
        void operator()(const FinalAnswer& a) const { args["answer"] = a.answer; }
    };
    std::visit(Writer{args}, action);
    return json{{"tool", action_name(action)}, {"args", args}};
}

Action action_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("tool") || !doc["tool"].is_string())
        fail(ErrorCode::NoActionFound, "missing 'tool' field");
    const std::string tool = doc["tool"].get<std::string>();
    json args = json::object();
    if (doc.contains("args")) {
        if (!doc["args"].is_object()) arg_fail("args", "expected object");
        args = doc["args"];
    }

    if (tool == "print_table") return PrintTable{};
    if (tool == "f_get_data_info") return GetDataInfo{get_bool(args, "show_missing", true)};
    if (tool == "f_select_column") {
        SelectColumn action;
        action.column_names = get_string_list(args, "column_names", true);
        if (action.column_names.empty()) arg_fail("column_names", "must be non-empty");
        action.reasoning = get_string(args, "reasoning", false);
        return action;
    }
    if (tool == "f_select_row") {
        SelectRow action;
        if (args.contains("indices") && !args["indices"].is_null()) {
            if (!args["indices"].is_array()) arg_fail("indices", "expected array of integers");
            std::vector<std::int64_t> indices;
            for (const auto& item : args["indices"]) {
                if (!item.is_number_integer()) arg_fail("indices", "expected array of integers");
                indices.push_back(item.get<std::int64_t>());
            }
            action.indices = std::move(indices);
        }
        if (args.contains("condition") && !args["condition"].is_null())
            action.condition = get_string(args, "condition", true);
        action.lookup = get_bool(args, "lookup", false);
        action.reasoning = get_string(args, "reasoning", false);
        return action;
    }
    if (tool == "f_sort_by") {
        SortBy action;
        action.columns = get_string_list(args, "columns", true);
        if (action.columns.empty()) arg_fail("columns", "must be non-empty");
        std::vector<std::string> orders = get_string_list(args, "order", false);
        if (orders.empty()) orders.push_back("asc");
        if (orders.size() == 1 && action.columns.size() > 1)
            orders.assign(action.columns.size(), orders[0]);
        if (orders.size() != action.columns.size())
            arg_fail("order", "expected one entry per sort column");
        for (const auto& name : orders) action.order.push_back(parse_sort_order(name));
        return action;
    }
    if (tool == "f_aggregate") {
        Aggregate action;
        if (!args.contains("columns_ops") || !args["columns_ops"].is_array())
            arg_fail("columns_ops", "expected array of [column, op] pairs");
        for (const auto& pair : args["columns_ops"]) {
            if (pair.is_array() && pair.size() == 2 && pair[0].is_string() && pair[1].is_string()) {
                action.columns_ops.emplace_back(pair[0].get<std::string>(),
                                                parse_agg_op(pair[1].get<std::string>()));
            } else if (pair.is_object() && pair.contains("column") && pair.contains("op")) {
                action.columns_ops.emplace_back(pair["column"].get<std::string>(),
                                                parse_agg_op(pair["op"].get<std::string>()));
            } else {
                arg_fail("columns_ops", "expected [column, op] pairs");
            }
        }
        if (action.columns_ops.empty()) arg_fail("columns_ops", "must be non-empty");
        action.group_by = get_string_list(args, "group_by", false);
        action.show_stats_only = get_bool(args, "show_stats_only", false);
        return action;
    }
    if (tool == "f_compute_column") {
        ComputeColumn action;
        action.new_col = get_string(args, "new_col", true);
        action.col_a = get_string(args, "col_A", true);
        action.op = parse_arith_op(get_string(args, "op", false, "+"));
        if (args.contains("col_B_or_scalar")) {
            const json& value = args["col_B_or_scalar"];
            if (value.is_string()) action.col_b_or_scalar = value.get<std::string>();
            else if (value.is_number()) action.col_b_or_scalar = value.get<double>();
            else arg_fail("col_B_or_scalar", "expected column name or number");
        } else if (!args.contains("special_op")) {
            arg_fail("col_B_or_scalar", "missing");
        }
        action.element_wise = get_bool(args, "element_wise", false);
        if (args.contains("special_op") && !args["special_op"].is_null())
            action.special_op = get_string(args, "special_op", true);
        return action;
    }
    if (tool == "f_string_operation") {
        StringOperation action;
        action.columns = get_string_list(args, "columns", true);
        if (action.columns.empty()) arg_fail("columns", "must be non-empty");
        action.operation = get_string(args, "operation", true);
        const bool known = action.operation == "upper" || action.operation == "lower" ||
                           action.operation == "substring" || action.operation == "concat" ||
                           action.operation == "replace" || action.operation == "to_number" ||
                           action.operation == "to_na";
        if (!known) arg_fail("operation", "unknown string operation '" + action.operation + "'");
        action.start = get_int(args, "start", action.operation == "substring");
        action.end = get_int(args, "end", action.operation == "substring");
        action.sep = get_string(args, "sep", false);
        action.from = get_string(args, "from", action.operation == "replace");
        action.to = get_string(args, "to", false);
        action.na_values = get_string_list(args, "na_values", false);
        if (args.contains("new_columns") && !args["new_columns"].is_null())
            action.new_columns = get_string_list(args, "new_columns", true);
        return action;
    }
    if (tool == "f_process_datetime") {
        ProcessDatetime action;
        action.columns = get_string_list(args, "columns", true);
        if (action.columns.empty()) arg_fail("columns", "must be non-empty");
        action.operation = get_string(args, "operation", true);
        if (action.operation != "parse" && action.operation != "extract" &&
            action.operation != "shift_timezone")
            arg_fail("operation", "unknown datetime operation '" + action.operation + "'");
        if (args.contains("parse_format") && !args["parse_format"].is_null())
            action.parse_format = get_string(args, "parse_format", true);
        action.unit = get_string(args, "unit", action.operation == "extract");
        if (action.operation == "extract" && action.unit != "year" && action.unit != "month" &&
            action.unit != "day" && action.unit != "weekday")
            arg_fail("unit", "unknown unit '" + action.unit + "'");
        action.timezone = get_string(args, "timezone", action.operation == "shift_timezone");
        if (args.contains("new_columns") && !args["new_columns"].is_null())
            action.new_columns = get_string_list(args, "new_columns", true);
        return action;
    }
    if (tool == "f_join") {
        Join action;
        action.other_table_ref = get_string(args, "other_table_ref", true);
        action.join_type = parse_join_type(get_string(args, "join_type", false, "inner"));
        action.left_on = get_string_list(args, "left_on", false);
        action.right_on = get_string_list(args, "right_on", false);
        action.cross_join = get_bool(args, "cross_join", false);
        action.suffix = get_string(args, "suffix", false, "_r");
        action.reasoning = get_string(args, "reasoning", false);
        if (!action.cross_join) {
            if (action.left_on.empty()) arg_fail("left_on", "missing");
            if (action.right_on.empty()) action.right_on = action.left_on;
            if (action.left_on.size() != action.right_on.size())
                arg_fail("right_on", "key count mismatch");
        }
        return action;
    }
    if (tool == "f_handle_missing") {
        HandleMissing action;
        action.strategy = get_string(args, "strategy", true);
        if (action.strategy != "drop_rows" && action.strategy != "fill_zero" &&
            action.strategy != "fill_text")
            arg_fail("strategy", "unknown strategy '" + action.strategy + "'");
        action.fill_value = get_string(args, "fill_value", false);
        return action;
    }
    if (tool == "f_retrieve_original") return RetrieveOriginal{};
    if (tool == "f_final_answer") {
        FinalAnswer action;
        action.answer = get_string(args, "answer", true);
        if (action.answer.empty()) arg_fail("answer", "must be non-empty");
        return action;
    }
    fail(ErrorCode::UnknownTool, "'" + tool + "'");
}

nlohmann::json tool_schemas() {
    json tools = json::array();
    auto add = [&](const char* name, const char* description, json args) {
        tools.push_back(json{{"tool", name}, {"description", description}, {"args", std::move(args)}});
    };
    add("print_table", "Display the current table snapshot without modifying it.", json::object());
    add("f_get_data_info",
        "Report table shape, column names, data types, and missing-value statistics.",
        {{"show_missing", "bool, default true"}});
    add("f_select_column", "Project the table onto a subset of columns, in the given order.",
        {{"column_names", "array of column names"}, {"reasoning", "optional text"}});
    add("f_select_row",
        "Filter rows by explicit indices or by a symbolic condition; lookup=true only reports "
        "matching rows without changing the table.",
        {{"indices", "optional array of 0-based row indices"},
         {"condition", "optional expression, e.g. \"points > 10 AND name contains 'an'\""},
         {"lookup", "bool, default false"},
         {"reasoning", "optional text"}});
    add("f_sort_by", "Stable sort by one or more columns; nulls go last ascending, first descending.",
        {{"columns", "array of column names"}, {"order", "'asc'/'desc' or one per column"}});
    add("f_aggregate",
        "Aggregate columns (count, sum, avg, min, max, diff), optionally grouped; the result "
        "table becomes the new state.",
        {{"columns_ops", "array of [column, op] pairs"},
         {"group_by", "optional column or array of columns"},
         {"show_stats_only", "bool, default false"}});
    add("f_compute_column",
        "Append a new column from scalar or element-wise arithmetic, or a special op such as "
        "grouped_time_diff (days between consecutive datetimes within a group).",
        {{"new_col", "name of the new column"},
         {"col_A", "source column"},
         {"op", "one of + - * /"},
         {"col_B_or_scalar", "column name (element_wise) or number"},
         {"element_wise", "bool, default false"},
         {"special_op", "optional, 'grouped_time_diff'"}});
    add("f_string_operation",
        "Symbolic string transforms: upper, lower, substring(start,end), concat(sep), "
        "replace(from,to), to_number, to_na(na_values).",
        {{"columns", "source columns"},
         {"operation", "upper|lower|substring|concat|replace|to_number|to_na"},
         {"start", "int, substring only"},
         {"end", "int, substring only"},
         {"sep", "string, concat only"},
         {"from", "string, replace only"},
         {"to", "string, replace only"},
         {"na_values", "optional sentinel list for to_na"},
         {"new_columns", "optional result names; omit to transform in place"}});
    add("f_process_datetime",
        "Parse text into datetimes, extract year/month/day/weekday, or shift the display "
        "timezone.",
        {{"columns", "source columns"},
         {"operation", "parse|extract|shift_timezone"},
         {"parse_format", "optional strptime-style format"},
         {"unit", "year|month|day|weekday (extract)"},
         {"timezone", "fixed offset such as UTC or +05:30 (shift_timezone)"},
         {"new_columns", "optional result names"}});
    add("f_join",
        "Relational join (inner/left/right/outer) or Cartesian product against a named "
        "auxiliary table; colliding right-hand columns get the suffix.",
        {{"other_table_ref", "name of the auxiliary table, or 'original'"},
         {"join_type", "inner|left|right|outer"},
         {"left_on", "key columns in the current table"},
         {"right_on", "key columns in the other table (defaults to left_on)"},
         {"cross_join", "bool, default false"},
         {"suffix", "string, default '_r'"},
         {"reasoning", "optional text"}});
    add("f_handle_missing",
        "Handle null cells: drop_rows, fill_zero (numeric columns), or fill_text (text columns).",
        {{"strategy", "drop_rows|fill_zero|fill_text"}, {"fill_value", "string, fill_text only"}});
    add("f_retrieve_original", "Restore the untouched initial table.", json::object());
    add("f_final_answer", "Submit the final answer and stop.", {{"answer", "the answer text"}});
    return tools;
}

} // namespace tabqa
