// SPDX-License-Identifier: Apache-2.0
#include "tabqa/ops.hpp"

#include "tabqa/datetime.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace tabqa {

StepOutcome StepOutcome::new_state(Table table) {
    StepOutcome outcome;
    outcome.kind = Kind::NewState;
    outcome.table = std::move(table);
    return outcome;
}

StepOutcome StepOutcome::report_text(std::string text) {
    StepOutcome outcome;
    outcome.kind = Kind::Report;
    outcome.report = std::move(text);
    return outcome;
}

StepOutcome StepOutcome::terminal(std::string answer) {
    StepOutcome outcome;
    outcome.kind = Kind::Terminal;
    outcome.answer = std::move(answer);
    return outcome;
}

const Table& ActionContext::resolve(const std::string& ref) const {
    if ((ref == "original" || ref == "df_og") && original) return *original;
    if (aux_tables) {
        const auto it = aux_tables->find(ref);
        if (it != aux_tables->end()) return it->second;
    }
    fail(ErrorCode::UnknownTableRef, "'" + ref + "'");
}

std::string render_table(const Table& table) {
    std::ostringstream out;
    for (std::size_t c = 0; c < table.column_count(); ++c) {
        if (c > 0) out << " | ";
        out << table.columns()[c].name;
    }
    out << "\n";
    for (std::size_t r = 0; r < table.row_count(); ++r) {
        for (std::size_t c = 0; c < table.column_count(); ++c) {
            if (c > 0) out << " | ";
            out << render_cell(table.at(r, c));
        }
        out << "\n";
    }
    return out.str();
}

std::string op_get_data_info(const Table& table, bool show_missing) {
    std::ostringstream out;
    out << "shape: (" << table.row_count() << ", " << table.column_count() << ")\n";
    out << "columns:\n";
    for (std::size_t c = 0; c < table.column_count(); ++c) {
        out << "  " << table.columns()[c].name << " ("
            << column_kind_name(table.columns()[c].kind) << ")";
        if (show_missing) out << ": " << table.null_count(c) << " missing";
        out << "\n";
    }
    return out.str();
}

Table op_select_column(const Table& table, const std::vector<std::string>& names) {
    if (names.empty()) fail(ErrorCode::ArgumentSchemaError, "column_names must be non-empty");
    std::vector<std::size_t> picks;
    picks.reserve(names.size());
    for (const auto& name : names) picks.push_back(table.column_index(name));
    std::vector<Column> columns;
    for (const std::size_t c : picks) columns.push_back(table.columns()[c]);
    std::vector<std::vector<CellValue>> rows;
    rows.reserve(table.row_count());
    for (std::size_t r = 0; r < table.row_count(); ++r) {
        std::vector<CellValue> row;
        row.reserve(picks.size());
        for (const std::size_t c : picks) row.push_back(table.at(r, c));
        rows.push_back(std::move(row));
    }
    return Table::make(std::move(columns), std::move(rows), table.provenance());
}

namespace {

Table keep_rows(const Table& table, const std::vector<std::size_t>& rows_to_keep) {
    std::vector<std::vector<CellValue>> rows;
    rows.reserve(rows_to_keep.size());
    for (const std::size_t r : rows_to_keep) rows.push_back(table.rows()[r]);
    return Table::make(table.columns(), std::move(rows), table.provenance());
}

} // namespace

Table op_select_row_indices(const Table& table, const std::vector<std::int64_t>& indices) {
    std::set<std::size_t> picked;
    for (const std::int64_t index : indices) {
        if (index < 0 || static_cast<std::size_t>(index) >= table.row_count())
            fail(ErrorCode::IndexOutOfRange,
                 "row " + std::to_string(index) + " of " + std::to_string(table.row_count()));
        picked.insert(static_cast<std::size_t>(index));
    }
    // Original row order regardless of the order indices were given in.
    return keep_rows(table, std::vector<std::size_t>(picked.begin(), picked.end()));
}

Table op_select_row_condition(const Table& table, const Condition& condition) {
    const std::vector<bool> mask = evaluate_condition(condition, table);
    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < mask.size(); ++r) {
        if (mask[r]) keep.push_back(r);
    }
    return keep_rows(table, keep);
}

std::string op_select_row_lookup(const Table& table, const std::vector<bool>& mask) {
    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < mask.size(); ++r) {
        if (mask[r]) keep.push_back(r);
    }
    std::ostringstream out;
    out << "matched " << keep.size() << " rows\nindices: [";
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (i > 0) out << ", ";
        out << keep[i];
    }
    out << "]\n";
    out << render_table(keep_rows(table, keep));
    return out.str();
}

namespace {

// -1 / 0 / +1 over non-null cells of one column kind.
int compare_cells(const CellValue& a, const CellValue& b, ColumnKind kind) {
    switch (kind) {
        case ColumnKind::Integer: {
            const auto lhs = std::get<std::int64_t>(a), rhs = std::get<std::int64_t>(b);
            return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
        }
        case ColumnKind::Float: {
            const double lhs = std::get<double>(a), rhs = std::get<double>(b);
            return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
        }
        case ColumnKind::Text: {
            const auto& lhs = std::get<std::string>(a);
            const auto& rhs = std::get<std::string>(b);
            return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
        }
        case ColumnKind::Boolean: {
            const int lhs = std::get<bool>(a) ? 1 : 0, rhs = std::get<bool>(b) ? 1 : 0;
            return lhs - rhs;
        }
        case ColumnKind::Datetime: {
            const auto lhs = std::get<Datetime>(a).epoch_s, rhs = std::get<Datetime>(b).epoch_s;
            return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
        }
    }
    return 0;
}

} // namespace

Table op_sort_by(const Table& table, const std::vector<std::string>& columns,
                 const std::vector<SortOrder>& order) {
    if (columns.empty()) fail(ErrorCode::ArgumentSchemaError, "columns must be non-empty");
    if (order.size() != columns.size())
        fail(ErrorCode::LengthMismatch, "one sort order per column expected");
    std::vector<std::size_t> keys;
    for (const auto& name : columns) keys.push_back(table.column_index(name));

    std::vector<std::size_t> perm(table.row_count());
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
        for (std::size_t k = 0; k < keys.size(); ++k) {
            const CellValue& ca = table.at(a, keys[k]);
            const CellValue& cb = table.at(b, keys[k]);
            const bool na = is_null(ca), nb = is_null(cb);
            const bool asc = order[k] == SortOrder::Asc;
            if (na || nb) {
                if (na && nb) continue;
                // Nulls last ascending, first descending.
                return asc ? nb : na;
            }
            const int rel = compare_cells(ca, cb, table.columns()[keys[k]].kind);
            if (rel != 0) return asc ? rel < 0 : rel > 0;
        }
        return false;
    });
    return keep_rows(table, perm);
}

namespace {

struct AggValue {
    CellValue cell; // null when the group had no usable values
};

bool numeric_kind(ColumnKind kind) {
    return kind == ColumnKind::Integer || kind == ColumnKind::Float;
}

double numeric_of(const CellValue& cell) {
    if (const auto* i = std::get_if<std::int64_t>(&cell)) return static_cast<double>(*i);
    return std::get<double>(cell);
}

ColumnKind aggregate_result_kind(ColumnKind source, AggOp op) {
    switch (op) {
        case AggOp::Count: return ColumnKind::Integer;
        case AggOp::Avg: return ColumnKind::Float;
        case AggOp::Sum: return source;
        case AggOp::Min:
        case AggOp::Max: return source;
        case AggOp::Diff: return source == ColumnKind::Datetime ? ColumnKind::Float : source;
    }
    return ColumnKind::Float;
}

CellValue aggregate_rows(const Table& table, const std::vector<std::size_t>& rows, std::size_t col,
                         AggOp op) {
    const ColumnKind kind = table.columns()[col].kind;
    if (op == AggOp::Count) {
        std::int64_t count = 0;
        for (const std::size_t r : rows) {
            if (!is_null(table.at(r, col))) ++count;
        }
        return count;
    }
    const bool ordered_only = op == AggOp::Min || op == AggOp::Max || op == AggOp::Diff;
    if (!numeric_kind(kind) && !(kind == ColumnKind::Datetime && ordered_only))
        fail(ErrorCode::NonNumericAggregate, std::string(agg_op_name(op)) + " on " +
                                                 column_kind_name(kind) + " column '" +
                                                 table.columns()[col].name + "'");
    std::vector<std::size_t> usable;
    for (const std::size_t r : rows) {
        if (!is_null(table.at(r, col))) usable.push_back(r);
    }
    if (usable.empty()) return std::monostate{};

    if (kind == ColumnKind::Datetime) {
        std::int64_t min_v = std::get<Datetime>(table.at(usable[0], col)).epoch_s;
        std::int64_t max_v = min_v;
        Datetime min_dt = std::get<Datetime>(table.at(usable[0], col));
        Datetime max_dt = min_dt;
        for (const std::size_t r : usable) {
            const Datetime dt = std::get<Datetime>(table.at(r, col));
            if (dt.epoch_s < min_v) { min_v = dt.epoch_s; min_dt = dt; }
            if (dt.epoch_s > max_v) { max_v = dt.epoch_s; max_dt = dt; }
        }
        if (op == AggOp::Min) return min_dt;
        if (op == AggOp::Max) return max_dt;
        return static_cast<double>(max_v - min_v) / 86400.0; // diff in days
    }

    if (kind == ColumnKind::Integer && op != AggOp::Avg) {
        std::int64_t sum = 0, min_v = 0, max_v = 0;
        bool first = true;
        for (const std::size_t r : usable) {
            const std::int64_t v = std::get<std::int64_t>(table.at(r, col));
            sum += v;
            if (first || v < min_v) min_v = v;
            if (first || v > max_v) max_v = v;
            first = false;
        }
        switch (op) {
            case AggOp::Sum: return sum;
            case AggOp::Min: return min_v;
            case AggOp::Max: return max_v;
            case AggOp::Diff: return max_v - min_v;
            default: break;
        }
    }
    double sum = 0.0, min_v = 0.0, max_v = 0.0;
    bool first = true;
    for (const std::size_t r : usable) {
        const double v = numeric_of(table.at(r, col));
        sum += v;
        if (first || v < min_v) min_v = v;
        if (first || v > max_v) max_v = v;
        first = false;
    }
    switch (op) {
        case AggOp::Sum: return sum;
        case AggOp::Avg: return sum / static_cast<double>(usable.size());
        case AggOp::Min: return min_v;
        case AggOp::Max: return max_v;
        case AggOp::Diff: return max_v - min_v;
        default: break;
    }
    return std::monostate{};
}

} // namespace

Table op_aggregate(const Table& table, const std::vector<std::pair<std::string, AggOp>>& columns_ops,
                   const std::vector<std::string>& group_by) {
    if (columns_ops.empty()) fail(ErrorCode::ArgumentSchemaError, "columns_ops must be non-empty");
    std::vector<std::size_t> value_cols;
    for (const auto& [name, op] : columns_ops) value_cols.push_back(table.column_index(name));
    std::vector<std::size_t> key_cols;
    for (const auto& name : group_by) key_cols.push_back(table.column_index(name));

    // Groups in first-appearance order; the whole table forms one group when
    // no keys are given.
    std::vector<std::vector<std::size_t>> groups;
    std::vector<std::vector<CellValue>> group_keys;
    if (key_cols.empty()) {
        groups.emplace_back(table.row_count());
        std::iota(groups[0].begin(), groups[0].end(), 0);
        group_keys.emplace_back();
    } else {
        for (std::size_t r = 0; r < table.row_count(); ++r) {
            std::vector<CellValue> key;
            for (const std::size_t c : key_cols) key.push_back(table.at(r, c));
            std::size_t slot = groups.size();
            for (std::size_t g = 0; g < group_keys.size(); ++g) {
                if (group_keys[g] == key) {
                    slot = g;
                    break;
                }
            }
            if (slot == groups.size()) {
                groups.emplace_back();
                group_keys.push_back(std::move(key));
            }
            groups[slot].push_back(r);
        }
    }

    std::vector<Column> columns;
    for (const std::size_t c : key_cols) columns.push_back(table.columns()[c]);
    for (std::size_t i = 0; i < columns_ops.size(); ++i) {
        const auto& [name, op] = columns_ops[i];
        const ColumnKind source = table.columns()[value_cols[i]].kind;
        columns.push_back(
            {std::string(agg_op_name(op)) + "_" + table.columns()[value_cols[i]].name,
             aggregate_result_kind(source, op)});
    }
    std::vector<std::vector<CellValue>> rows;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        std::vector<CellValue> row = group_keys[g];
        for (std::size_t i = 0; i < columns_ops.size(); ++i)
            row.push_back(aggregate_rows(table, groups[g], value_cols[i], columns_ops[i].second));
        rows.push_back(std::move(row));
    }
    return Table::make(std::move(columns), std::move(rows), table.provenance());
}

namespace {

Table grouped_time_diff(const Table& table, const ComputeColumn& spec) {
    const std::size_t date_col = table.column_index(spec.col_a);
    if (table.columns()[date_col].kind != ColumnKind::Datetime)
        fail(ErrorCode::TypeMismatch, "grouped_time_diff needs a datetime column");
    std::optional<std::size_t> group_col;
    if (const auto* name = std::get_if<std::string>(&spec.col_b_or_scalar); name && !name->empty())
        group_col = table.column_index(*name);

    std::vector<Column> columns = table.columns();
    columns.push_back({spec.new_col, ColumnKind::Float});
    std::vector<std::vector<CellValue>> rows = table.rows();

    // Previous datetime seen per group key, in table order.
    std::vector<std::vector<CellValue>> seen_keys;
    std::vector<std::optional<std::int64_t>> last_epoch;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::vector<CellValue> key;
        if (group_col) key.push_back(table.at(r, *group_col));
        std::size_t slot = seen_keys.size();
        for (std::size_t g = 0; g < seen_keys.size(); ++g) {
            if (seen_keys[g] == key) {
                slot = g;
                break;
            }
        }
        if (slot == seen_keys.size()) {
            seen_keys.push_back(key);
            last_epoch.push_back(std::nullopt);
        }
        const CellValue& cell = table.at(r, date_col);
        if (is_null(cell)) {
            rows[r].emplace_back();
            continue;
        }
        const std::int64_t epoch = std::get<Datetime>(cell).epoch_s;
        if (last_epoch[slot]) {
            rows[r].emplace_back(static_cast<double>(epoch - *last_epoch[slot]) / 86400.0);
        } else {
            rows[r].emplace_back();
        }
        last_epoch[slot] = epoch;
    }
    return Table::make(std::move(columns), std::move(rows), table.provenance());
}

} // namespace

Table op_compute_column(const Table& table, const ComputeColumn& spec) {
    if (table.find_column(spec.new_col))
        fail(ErrorCode::DuplicateColumn, "'" + spec.new_col + "'");
    if (spec.special_op) {
        if (*spec.special_op != "grouped_time_diff")
            fail(ErrorCode::ArgumentSchemaError, "unknown special_op '" + *spec.special_op + "'");
        return grouped_time_diff(table, spec);
    }

    const std::size_t col_a = table.column_index(spec.col_a);
    if (!numeric_kind(table.columns()[col_a].kind))
        fail(ErrorCode::TypeMismatch, "column '" + spec.col_a + "' is not numeric");
    std::optional<std::size_t> col_b;
    double scalar = 0.0;
    if (spec.element_wise) {
        const auto* name = std::get_if<std::string>(&spec.col_b_or_scalar);
        if (!name) fail(ErrorCode::ArgumentSchemaError, "element_wise needs a column name");
        col_b = table.column_index(*name);
        if (!numeric_kind(table.columns()[*col_b].kind))
            fail(ErrorCode::TypeMismatch, "column '" + *name + "' is not numeric");
    } else {
        if (const auto* value = std::get_if<double>(&spec.col_b_or_scalar)) {
            scalar = *value;
        } else {
            // Tolerate numbers sent as strings.
            const auto& text = std::get<std::string>(spec.col_b_or_scalar);
            const char* begin = text.data();
            const char* end = text.data() + text.size();
            const auto result = std::from_chars(begin, end, scalar);
            if (result.ec != std::errc() || result.ptr != end)
                fail(ErrorCode::ArgumentSchemaError, "scalar operand expected, got '" + text + "'");
        }
    }

    const bool ints = table.columns()[col_a].kind == ColumnKind::Integer &&
                      (!col_b || table.columns()[*col_b].kind == ColumnKind::Integer) &&
                      (col_b || std::nearbyint(scalar) == scalar) && spec.op != ArithOp::Div;

    std::vector<Column> columns = table.columns();
    columns.push_back({spec.new_col, ints ? ColumnKind::Integer : ColumnKind::Float});
    std::vector<std::vector<CellValue>> rows = table.rows();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const CellValue& a_cell = table.at(r, col_a);
        CellValue b_cell = col_b ? table.at(r, *col_b) : CellValue(scalar);
        if (is_null(a_cell) || is_null(b_cell)) {
            rows[r].emplace_back();
            continue;
        }
        const double a = numeric_of(a_cell);
        const double b = numeric_of(b_cell);
        double value = 0.0;
        switch (spec.op) {
            case ArithOp::Add: value = a + b; break;
            case ArithOp::Sub: value = a - b; break;
            case ArithOp::Mul: value = a * b; break;
            case ArithOp::Div:
                if (b == 0.0)
                    fail(ErrorCode::DivisionByZero, "row " + std::to_string(r));
                value = a / b;
                break;
        }
        if (ints) rows[r].emplace_back(static_cast<std::int64_t>(std::llround(value)));
        else rows[r].emplace_back(value);
    }
    return Table::make(std::move(columns), std::move(rows), table.provenance());
}

namespace {

std::string lower_ascii(const std::string& text) {
    std::string out = text;
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string strip_for_number(const std::string& text) {
    static const std::vector<std::string> symbols = {"$", "€", "£", "¥", ","};
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        bool skipped = false;
        for (const auto& symbol : symbols) {
            if (text.compare(i, symbol.size(), symbol) == 0) {
                i += symbol.size();
                skipped = true;
                break;
            }
        }
        if (skipped) continue;
        if (!std::isspace(static_cast<unsigned char>(text[i]))) out += text[i];
        ++i;
    }
    return out;
}

const std::vector<std::string>& default_na_sentinels() {
    static const std::vector<std::string> sentinels = {"-", "n/a", "na", "unknown", "null", ""};
    return sentinels;
}

} // namespace

Table op_string_operation(const Table& table, const StringOperation& spec) {
    std::vector<std::size_t> cols;
    for (const auto& name : spec.columns) cols.push_back(table.column_index(name));
    for (const std::size_t c : cols) {
        if (table.columns()[c].kind != ColumnKind::Text)
            fail(ErrorCode::TypeMismatch, "string operation on non-text column '" +
                                              table.columns()[c].name + "'");
    }

    std::vector<Column> columns = table.columns();
    std::vector<std::vector<CellValue>> rows = table.rows();

    if (spec.operation == "concat") {
        std::string name;
        if (spec.new_columns && !spec.new_columns->empty()) {
            name = (*spec.new_columns)[0];
        } else {
            for (std::size_t i = 0; i < spec.columns.size(); ++i) {
                if (i > 0) name += "_";
                name += spec.columns[i];
            }
        }
        columns.push_back({name, ColumnKind::Text});
        for (std::size_t r = 0; r < rows.size(); ++r) {
            std::string joined;
            bool all_null = true;
            for (std::size_t i = 0; i < cols.size(); ++i) {
                if (i > 0) joined += spec.sep;
                const CellValue& cell = table.at(r, cols[i]);
                if (!is_null(cell)) all_null = false;
                joined += render_cell(cell);
            }
            if (all_null) rows[r].emplace_back();
            else rows[r].emplace_back(joined);
        }
        return Table::make(std::move(columns), std::move(rows), table.provenance());
    }

    const bool in_place = !spec.new_columns.has_value();
    if (!in_place && spec.new_columns->size() != cols.size())
        fail(ErrorCode::LengthMismatch, "one new column name per source column expected");

    if (spec.operation == "to_number") {
        for (std::size_t i = 0; i < cols.size(); ++i) {
            const std::size_t c = cols[i];
            std::vector<CellValue> converted(rows.size());
            bool all_ints = true;
            for (std::size_t r = 0; r < rows.size(); ++r) {
                const CellValue& cell = table.at(r, c);
                if (is_null(cell)) continue;
                const std::string cleaned = strip_for_number(std::get<std::string>(cell));
                std::int64_t i64 = 0;
                const char* begin = cleaned.data();
                const char* end = cleaned.data() + cleaned.size();
                auto int_result = std::from_chars(begin, end, i64);
                if (int_result.ec == std::errc() && int_result.ptr == end) {
                    converted[r] = i64;
                    continue;
                }
                double f64 = 0.0;
                auto float_result = std::from_chars(begin, end, f64);
                if (float_result.ec == std::errc() && float_result.ptr == end &&
                    std::isfinite(f64)) {
                    converted[r] = f64;
                    all_ints = false;
                    continue;
                }
                fail(ErrorCode::ConversionError, "row " + std::to_string(r) + " value '" +
                                                     std::get<std::string>(cell) + "'");
            }
            const ColumnKind kind = all_ints ? ColumnKind::Integer : ColumnKind::Float;
            if (!all_ints) {
                for (auto& cell : converted) {
                    if (const auto* v = std::get_if<std::int64_t>(&cell))
                        cell = static_cast<double>(*v);
                }
            }
            if (in_place) {
                columns[c].kind = kind;
                for (std::size_t r = 0; r < rows.size(); ++r) rows[r][c] = converted[r];
            } else {
                columns.push_back({(*spec.new_columns)[i], kind});
                for (std::size_t r = 0; r < rows.size(); ++r) rows[r].push_back(converted[r]);
            }
        }
        return Table::make(std::move(columns), std::move(rows), table.provenance());
    }

    // Cell-wise text transforms: upper, lower, substring, replace, to_na.
    auto transform_cell = [&](const CellValue& cell) -> CellValue {
        if (is_null(cell)) return cell;
        const std::string& text = std::get<std::string>(cell);
        if (spec.operation == "upper") {
            std::string out = text;
            for (auto& ch : out) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
            return out;
        }
        if (spec.operation == "lower") return lower_ascii(text);
        if (spec.operation == "substring") {
            const auto len = static_cast<std::int64_t>(text.size());
            const std::int64_t lo = std::clamp<std::int64_t>(spec.start, 0, len);
            const std::int64_t hi = std::clamp<std::int64_t>(spec.end, lo, len);
            return text.substr(static_cast<std::size_t>(lo), static_cast<std::size_t>(hi - lo));
        }
        if (spec.operation == "replace") {
            if (spec.from.empty()) return text;
            std::string out;
            std::size_t pos = 0;
            while (pos < text.size()) {
                if (text.compare(pos, spec.from.size(), spec.from) == 0) {
                    out += spec.to;
                    pos += spec.from.size();
                } else {
                    out += text[pos++];
                }
            }
            return out;
        }
        // to_na: listed sentinels (case-insensitive, trimmed) become null.
        std::string trimmed = text;
        while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.front())))
            trimmed.erase(trimmed.begin());
        while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.back())))
            trimmed.pop_back();
        const std::string needle = lower_ascii(trimmed);
        const auto& sentinels = spec.na_values.empty() ? default_na_sentinels() : spec.na_values;
        for (const auto& sentinel : sentinels) {
            if (needle == lower_ascii(sentinel)) return std::monostate{};
        }
        return cell;
    };

    for (std::size_t i = 0; i < cols.size(); ++i) {
        const std::size_t c = cols[i];
        if (in_place) {
            for (std::size_t r = 0; r < rows.size(); ++r) rows[r][c] = transform_cell(table.at(r, c));
        } else {
            columns.push_back({(*spec.new_columns)[i], ColumnKind::Text});
            for (std::size_t r = 0; r < rows.size(); ++r)
                rows[r].push_back(transform_cell(table.at(r, c)));
        }
    }
    return Table::make(std::move(columns), std::move(rows), table.provenance());
}

Table op_process_datetime(const Table& table, const ProcessDatetime& spec) {
    std::vector<std::size_t> cols;
    for (const auto& name : spec.columns) cols.push_back(table.column_index(name));
    const bool in_place = !spec.new_columns.has_value();
    if (!in_place && spec.new_columns->size() != cols.size())
        fail(ErrorCode::LengthMismatch, "one new column name per source column expected");

    std::vector<Column> columns = table.columns();
    std::vector<std::vector<CellValue>> rows = table.rows();

    for (std::size_t i = 0; i < cols.size(); ++i) {
        const std::size_t c = cols[i];
        std::vector<CellValue> converted(rows.size());
        ColumnKind result_kind = ColumnKind::Datetime;

        if (spec.operation == "parse") {
            if (table.columns()[c].kind != ColumnKind::Text)
                fail(ErrorCode::TypeMismatch, "parse target '" + table.columns()[c].name +
                                                  "' is not a text column");
            for (std::size_t r = 0; r < rows.size(); ++r) {
                const CellValue& cell = table.at(r, c);
                if (is_null(cell)) continue;
                const std::string& text = std::get<std::string>(cell);
                std::optional<Datetime> parsed = spec.parse_format
                                                     ? parse_datetime(text, *spec.parse_format)
                                                     : parse_datetime_auto(text);
                if (!parsed)
                    fail(ErrorCode::UnparseableDatetime,
                         "row " + std::to_string(r) + " value '" + text + "'");
                converted[r] = *parsed;
            }
        } else {
            if (table.columns()[c].kind != ColumnKind::Datetime)
                fail(ErrorCode::TypeMismatch, "'" + table.columns()[c].name +
                                                  "' is not a datetime column");
            if (spec.operation == "extract") {
                result_kind = ColumnKind::Integer;
                DateUnit unit = DateUnit::Year;
                if (spec.unit == "month") unit = DateUnit::Month;
                else if (spec.unit == "day") unit = DateUnit::Day;
                else if (spec.unit == "weekday") unit = DateUnit::Weekday;
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    const CellValue& cell = table.at(r, c);
                    if (is_null(cell)) continue;
                    converted[r] = static_cast<std::int64_t>(
                        extract_date_unit(std::get<Datetime>(cell), unit));
                }
            } else { // shift_timezone
                const auto offset = parse_utc_offset(spec.timezone);
                if (!offset) fail(ErrorCode::UnknownTimezone, "'" + spec.timezone + "'");
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    const CellValue& cell = table.at(r, c);
                    if (is_null(cell)) continue;
                    Datetime shifted = std::get<Datetime>(cell);
                    shifted.offset_min = *offset;
                    converted[r] = shifted;
                }
            }
        }

        if (in_place) {
            columns[c].kind = result_kind;
            for (std::size_t r = 0; r < rows.size(); ++r) rows[r][c] = converted[r];
        } else {
            columns.push_back({(*spec.new_columns)[i], result_kind});
            for (std::size_t r = 0; r < rows.size(); ++r) rows[r].push_back(converted[r]);
        }
    }
    return Table::make(std::move(columns), std::move(rows), table.provenance());
}

namespace {

bool keys_comparable(ColumnKind a, ColumnKind b) {
    if (a == b) return true;
    return numeric_kind(a) && numeric_kind(b);
}

bool key_cells_equal(const CellValue& a, const CellValue& b, ColumnKind ka, ColumnKind kb) {
    if (is_null(a) || is_null(b)) return false; // null keys never match
    if (numeric_kind(ka) && numeric_kind(kb)) return numeric_of(a) == numeric_of(b);
    return a == b;
}

} // namespace

Table op_join(const Table& left, const Table& right, const Join& spec) {
    std::vector<std::size_t> left_keys, right_keys;
    if (!spec.cross_join) {
        for (const auto& name : spec.left_on) left_keys.push_back(left.column_index(name));
        for (const auto& name : spec.right_on) right_keys.push_back(right.column_index(name));
        if (left_keys.size() != right_keys.size())
            fail(ErrorCode::LengthMismatch, "join key count mismatch");
        for (std::size_t k = 0; k < left_keys.size(); ++k) {
            const ColumnKind lk = left.columns()[left_keys[k]].kind;
            const ColumnKind rk = right.columns()[right_keys[k]].kind;
            if (!keys_comparable(lk, rk))
                fail(ErrorCode::IncomparableKeyTypes,
                     std::string(column_kind_name(lk)) + " vs " + column_kind_name(rk));
        }
    }

    // Output columns: all left columns, then right columns minus the right
    // keys; collisions on the right take the suffix.
    std::vector<std::size_t> right_cols;
    for (std::size_t c = 0; c < right.column_count(); ++c) {
        if (std::find(right_keys.begin(), right_keys.end(), c) == right_keys.end())
            right_cols.push_back(c);
    }
    std::vector<Column> columns = left.columns();
    for (const std::size_t c : right_cols) {
        Column column = right.columns()[c];
        if (left.find_column(column.name)) column.name += spec.suffix;
        columns.push_back(column);
    }

    std::vector<std::vector<CellValue>> rows;
    auto emit = [&](const std::vector<CellValue>* lrow, const std::vector<CellValue>* rrow,
                    std::optional<std::size_t> right_row_for_keys) {
        std::vector<CellValue> row;
        if (lrow) {
            row = *lrow;
        } else {
            row.assign(left.column_count(), std::monostate{});
            // Unmatched right rows surface their key values through the left
            // key columns when the kinds agree.
            if (right_row_for_keys) {
                for (std::size_t k = 0; k < left_keys.size(); ++k) {
                    if (left.columns()[left_keys[k]].kind ==
                        right.columns()[right_keys[k]].kind)
                        row[left_keys[k]] = right.at(*right_row_for_keys, right_keys[k]);
                }
            }
        }
        if (rrow) {
            for (const std::size_t c : right_cols) row.push_back((*rrow)[c]);
        } else {
            for (std::size_t i = 0; i < right_cols.size(); ++i) row.emplace_back();
        }
        rows.push_back(std::move(row));
    };

    if (spec.cross_join) {
        for (const auto& lrow : left.rows()) {
            for (const auto& rrow : right.rows()) emit(&lrow, &rrow, std::nullopt);
        }
        return Table::make(std::move(columns), std::move(rows), left.provenance());
    }

    std::vector<bool> right_matched(right.row_count(), false);
    for (std::size_t lr = 0; lr < left.row_count(); ++lr) {
        bool matched = false;
        for (std::size_t rr = 0; rr < right.row_count(); ++rr) {
            bool equal = true;
            for (std::size_t k = 0; k < left_keys.size(); ++k) {
                if (!key_cells_equal(left.at(lr, left_keys[k]), right.at(rr, right_keys[k]),
                                     left.columns()[left_keys[k]].kind,
                                     right.columns()[right_keys[k]].kind)) {
                    equal = false;
                    break;
                }
            }
            if (equal) {
                matched = true;
                right_matched[rr] = true;
                emit(&left.rows()[lr], &right.rows()[rr], std::nullopt);
            }
        }
        if (!matched && (spec.join_type == JoinType::Left || spec.join_type == JoinType::Outer))
            emit(&left.rows()[lr], nullptr, std::nullopt);
    }
    if (spec.join_type == JoinType::Right || spec.join_type == JoinType::Outer) {
        for (std::size_t rr = 0; rr < right.row_count(); ++rr) {
            if (!right_matched[rr]) emit(nullptr, &right.rows()[rr], rr);
        }
    }
    return Table::make(std::move(columns), std::move(rows), left.provenance());
}

Table op_handle_missing(const Table& table, const std::string& strategy,
                        const std::string& fill_value) {
    std::vector<Column> columns = table.columns();
    std::vector<std::vector<CellValue>> rows = table.rows();
    if (strategy == "drop_rows") {
        std::vector<std::size_t> keep;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            bool has_null = false;
            for (const auto& cell : rows[r]) {
                if (is_null(cell)) {
                    has_null = true;
                    break;
                }
            }
            if (!has_null) keep.push_back(r);
        }
        return keep_rows(table, keep);
    }
    if (strategy == "fill_zero") {
        for (std::size_t c = 0; c < columns.size(); ++c) {
            const ColumnKind kind = columns[c].kind;
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (!is_null(rows[r][c])) continue;
                if (kind == ColumnKind::Integer) rows[r][c] = std::int64_t{0};
                else if (kind == ColumnKind::Float) rows[r][c] = 0.0;
                else
                    fail(ErrorCode::StrategyTypeError,
                         "fill_zero on " + std::string(column_kind_name(kind)) + " column '" +
                             columns[c].name + "'");
            }
        }
        return Table::make(std::move(columns), std::move(rows), table.provenance());
    }
    if (strategy == "fill_text") {
        for (std::size_t c = 0; c < columns.size(); ++c) {
            if (columns[c].kind != ColumnKind::Text) continue;
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (is_null(rows[r][c])) rows[r][c] = fill_value;
            }
        }
        return Table::make(std::move(columns), std::move(rows), table.provenance());
    }
    fail(ErrorCode::ArgumentSchemaError, "unknown strategy '" + strategy + "'");
}

namespace {

struct Dispatcher {
    const Table& state;
    const ActionContext& context;

    StepOutcome operator()(const PrintTable&) const {
        return StepOutcome::report_text(render_table(state));
    }
    StepOutcome operator()(const GetDataInfo& a) const {
        return StepOutcome::report_text(op_get_data_info(state, a.show_missing));
    }
    StepOutcome operator()(const SelectColumn& a) const {
        return StepOutcome::new_state(op_select_column(state, a.column_names));
    }
    StepOutcome operator()(const SelectRow& a) const {
        if (a.indices.has_value() == a.condition.has_value())
            fail(ErrorCode::ArgumentSchemaError,
                 "exactly one of indices/condition must be given");
        if (a.lookup) {
            std::vector<bool> mask(state.row_count(), false);
            if (a.indices) {
                for (const std::int64_t index : *a.indices) {
                    if (index < 0 || static_cast<std::size_t>(index) >= state.row_count())
                        fail(ErrorCode::IndexOutOfRange, "row " + std::to_string(index));
                    mask[static_cast<std::size_t>(index)] = true;
                }
            } else {
                mask = evaluate_condition(parse_condition(*a.condition), state);
            }
            return StepOutcome::report_text(op_select_row_lookup(state, mask));
        }
        if (a.indices) return StepOutcome::new_state(op_select_row_indices(state, *a.indices));
        return StepOutcome::new_state(
            op_select_row_condition(state, parse_condition(*a.condition)));
    }
    StepOutcome operator()(const SortBy& a) const {
        return StepOutcome::new_state(op_sort_by(state, a.columns, a.order));
    }
    StepOutcome operator()(const Aggregate& a) const {
        // show_stats_only carries no extra semantics here: the aggregate
        // result always becomes the new state.
        return StepOutcome::new_state(op_aggregate(state, a.columns_ops, a.group_by));
    }
    StepOutcome operator()(const ComputeColumn& a) const {
        return StepOutcome::new_state(op_compute_column(state, a));
    }
    StepOutcome operator()(const StringOperation& a) const {
        return StepOutcome::new_state(op_string_operation(state, a));
    }
    StepOutcome operator()(const ProcessDatetime& a) const {
        return StepOutcome::new_state(op_process_datetime(state, a));
    }
    StepOutcome operator()(const Join& a) const {
        const Table& other = context.resolve(a.other_table_ref);
        return StepOutcome::new_state(op_join(state, other, a));
    }
    StepOutcome operator()(const HandleMissing& a) const {
        return StepOutcome::new_state(op_handle_missing(state, a.strategy, a.fill_value));
    }
    StepOutcome operator()(const RetrieveOriginal&) const {
        if (!context.original) fail(ErrorCode::UnknownTableRef, "no original table retained");
        return StepOutcome::new_state(*context.original);
    }
    StepOutcome operator()(const FinalAnswer& a) const {
        if (a.answer.empty()) fail(ErrorCode::ArgumentSchemaError, "answer must be non-empty");
        return StepOutcome::terminal(a.answer);
    }
};

} // namespace

StepOutcome apply_action(const Table& state, const ActionContext& context, const Action& action) {
    try {
        return std::visit(Dispatcher{state, context}, action);
    } catch (const TabError& e) {
        throw TabError(e.code(), action_name(action) + ": " + e.what());
    }
}

StepOutcome apply_action(const Table& state, const Table& original, const Action& action) {
    ActionContext context;
    context.original = &original;
    return apply_action(state, context, action);
}

} // namespace tabqa
