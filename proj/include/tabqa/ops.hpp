// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tabqa/action.hpp"
#include "tabqa/condition.hpp"
#include "tabqa/table.hpp"

#include <map>
#include <string>
#include <vector>

namespace tabqa {

/// Result of one executed action: a new table state, a report that leaves
/// the state untouched, or the terminal answer.
struct StepOutcome {
    enum class Kind { NewState, Report, Terminal };
    Kind kind = Kind::Report;
    Table table;
    std::string report;
    std::string answer;

    static StepOutcome new_state(Table table);
    static StepOutcome report_text(std::string text);
    static StepOutcome terminal(std::string answer);
};

/// Read-only side tables available to an action: the preserved trajectory
/// original and any named auxiliary tables (join targets).
struct ActionContext {
    const Table* original = nullptr;
    const std::map<std::string, Table>* aux_tables = nullptr;

    const Table& resolve(const std::string& ref) const;
};

/// Dispatches to the per-variant semantics below; errors are rethrown with
/// the tool name prefixed for trajectory logs.
StepOutcome apply_action(const Table& state, const ActionContext& context, const Action& action);
StepOutcome apply_action(const Table& state, const Table& original, const Action& action);

std::string render_table(const Table& table);
std::string op_get_data_info(const Table& table, bool show_missing);

Table op_select_column(const Table& table, const std::vector<std::string>& names);
Table op_select_row_indices(const Table& table, const std::vector<std::int64_t>& indices);
Table op_select_row_condition(const Table& table, const Condition& condition);
std::string op_select_row_lookup(const Table& table, const std::vector<bool>& mask);

Table op_sort_by(const Table& table, const std::vector<std::string>& columns,
                 const std::vector<SortOrder>& order);

Table op_aggregate(const Table& table, const std::vector<std::pair<std::string, AggOp>>& columns_ops,
                   const std::vector<std::string>& group_by);

Table op_compute_column(const Table& table, const ComputeColumn& spec);
Table op_string_operation(const Table& table, const StringOperation& spec);
Table op_process_datetime(const Table& table, const ProcessDatetime& spec);
Table op_join(const Table& left, const Table& right, const Join& spec);
Table op_handle_missing(const Table& table, const std::string& strategy,
                        const std::string& fill_value);

} // namespace tabqa
