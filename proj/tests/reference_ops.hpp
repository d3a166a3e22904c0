// SPDX-License-Identifier: Apache-2.0
// Straight-line reference semantics for every atomic operation, written
// independently of the engine so the oracle-equivalence suites have a second
// route to the same answers.
#pragma once

#include "tabqa/action.hpp"
#include "tabqa/condition.hpp"
#include "tabqa/table.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tabqa::ref {

using Row = std::vector<CellValue>;

struct RefTable {
    std::vector<Column> columns;
    std::vector<Row> rows;

    static RefTable of(const Table& table) { return {table.columns(), table.rows()}; }

    Table to_table() const { return Table::make(columns, rows); }

    std::size_t col(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (columns[i].name == name) return i;
        }
        throw std::runtime_error("ref: no column " + name);
    }
};

inline bool table_equal(const Table& a, const Table& b) {
    if (a.column_count() != b.column_count() || a.row_count() != b.row_count()) return false;
    for (std::size_t c = 0; c < a.column_count(); ++c) {
        if (a.columns()[c].name != b.columns()[c].name) return false;
        if (a.columns()[c].kind != b.columns()[c].kind) return false;
    }
    for (std::size_t r = 0; r < a.row_count(); ++r) {
        for (std::size_t c = 0; c < a.column_count(); ++c) {
            if (!(a.at(r, c) == b.at(r, c))) return false;
        }
    }
    return true;
}

inline RefTable select_column(const RefTable& t, const std::vector<std::string>& names) {
    RefTable out;
    std::vector<std::size_t> picks;
    for (const auto& name : names) picks.push_back(t.col(name));
    for (const auto p : picks) out.columns.push_back(t.columns[p]);
    for (const auto& row : t.rows) {
        Row r;
        for (const auto p : picks) r.push_back(row[p]);
        out.rows.push_back(r);
    }
    return out;
}

inline RefTable select_rows(const RefTable& t, std::vector<std::int64_t> indices) {
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    RefTable out;
    out.columns = t.columns;
    for (const auto i : indices) out.rows.push_back(t.rows[static_cast<std::size_t>(i)]);
    return out;
}

inline double ref_num(const CellValue& cell) {
    if (const auto* i = std::get_if<std::int64_t>(&cell)) return static_cast<double>(*i);
    return std::get<double>(cell);
}

inline bool ref_atom(const ConditionAtom& atom, const RefTable& t, const Row& row) {
    const std::size_t c = t.col(atom.column);
    const CellValue& cell = row[c];
    if (std::holds_alternative<std::monostate>(cell)) return false;
    const ColumnKind kind = t.columns[c].kind;
    if (atom.cmp == Comparator::Contains)
        return render_cell(cell).find(atom.literal.text) != std::string::npos;
    const bool numeric = (kind == ColumnKind::Integer || kind == ColumnKind::Float) &&
                         atom.literal.kind == ConditionLiteral::Kind::Number;
    const bool dated =
        kind == ColumnKind::Datetime && atom.literal.kind == ConditionLiteral::Kind::Date;
    if (atom.cmp == Comparator::Eq || atom.cmp == Comparator::Ne) {
        bool equal;
        if (numeric) equal = ref_num(cell) == atom.literal.number;
        else if (dated) equal = std::get<Datetime>(cell).epoch_s == atom.literal.date.epoch_s;
        else equal = render_cell(cell) == atom.literal.text;
        return atom.cmp == Comparator::Eq ? equal : !equal;
    }
    double lhs, rhs;
    if (numeric) {
        lhs = ref_num(cell);
        rhs = atom.literal.number;
    } else if (dated) {
        lhs = static_cast<double>(std::get<Datetime>(cell).epoch_s);
        rhs = static_cast<double>(atom.literal.date.epoch_s);
    } else {
        throw std::runtime_error("ref: ordering comparator on non-ordered column");
    }
    switch (atom.cmp) {
        case Comparator::Lt: return lhs < rhs;
        case Comparator::Le: return lhs <= rhs;
        case Comparator::Gt: return lhs > rhs;
        case Comparator::Ge: return lhs >= rhs;
        default: return false;
    }
}

inline bool ref_condition(const Condition& condition, const RefTable& t, const Row& row) {
    if (condition.node == Condition::Node::Atom) return ref_atom(condition.atom, t, row);
    if (condition.node == Condition::Node::And) {
        for (const auto& child : condition.children)
            if (!ref_condition(child, t, row)) return false;
        return true;
    }
    for (const auto& child : condition.children)
        if (ref_condition(child, t, row)) return true;
    return false;
}

inline RefTable filter_condition(const RefTable& t, const Condition& condition) {
    RefTable out;
    out.columns = t.columns;
    for (const auto& row : t.rows)
        if (ref_condition(condition, t, row)) out.rows.push_back(row);
    return out;
}

inline int ref_cmp(const CellValue& a, const CellValue& b, ColumnKind kind) {
    if (kind == ColumnKind::Text) {
        const auto& x = std::get<std::string>(a);
        const auto& y = std::get<std::string>(b);
        return x < y ? -1 : (x > y ? 1 : 0);
    }
    if (kind == ColumnKind::Boolean)
        return (std::get<bool>(a) ? 1 : 0) - (std::get<bool>(b) ? 1 : 0);
    if (kind == ColumnKind::Datetime) {
        const auto x = std::get<Datetime>(a).epoch_s, y = std::get<Datetime>(b).epoch_s;
        return x < y ? -1 : (x > y ? 1 : 0);
    }
    if (kind == ColumnKind::Integer) {
        const auto x = std::get<std::int64_t>(a), y = std::get<std::int64_t>(b);
        return x < y ? -1 : (x > y ? 1 : 0);
    }
    const double x = std::get<double>(a), y = std::get<double>(b);
    return x < y ? -1 : (x > y ? 1 : 0);
}

// Insertion sort keyed left to right, a different algorithm from the
// engine's stable_sort on an index permutation.
inline RefTable sort_by(const RefTable& t, const std::vector<std::string>& columns,
                        const std::vector<SortOrder>& order) {
    std::vector<std::size_t> keys;
    for (const auto& name : columns) keys.push_back(t.col(name));
    auto before = [&](const Row& a, const Row& b) -> bool {
        for (std::size_t k = 0; k < keys.size(); ++k) {
            const CellValue& x = a[keys[k]];
            const CellValue& y = b[keys[k]];
            const bool nx = std::holds_alternative<std::monostate>(x);
            const bool ny = std::holds_alternative<std::monostate>(y);
            const bool asc = order[k] == SortOrder::Asc;
            if (nx || ny) {
                if (nx && ny) continue;
                return asc ? ny : nx;
            }
            const int rel = ref_cmp(x, y, t.columns[keys[k]].kind);
            if (rel != 0) return asc ? rel < 0 : rel > 0;
        }
        return false;
    };
    RefTable out;
    out.columns = t.columns;
    for (const auto& row : t.rows) {
        std::size_t at = out.rows.size();
        while (at > 0 && before(row, out.rows[at - 1])) --at;
        out.rows.insert(out.rows.begin() + static_cast<long>(at), row);
    }
    return out;
}

inline CellValue ref_aggregate_one(const RefTable& t, const std::vector<std::size_t>& rows,
                                   std::size_t col, AggOp op) {
    if (op == AggOp::Count) {
        std::int64_t n = 0;
        for (const auto r : rows)
            if (!std::holds_alternative<std::monostate>(t.rows[r][col])) ++n;
        return n;
    }
    const ColumnKind declared = t.columns[col].kind;
    const bool ordered_only = op == AggOp::Min || op == AggOp::Max || op == AggOp::Diff;
    const bool numeric = declared == ColumnKind::Integer || declared == ColumnKind::Float;
    if (!numeric && !(declared == ColumnKind::Datetime && ordered_only))
        throw TabError(ErrorCode::NonNumericAggregate, "ref");
    std::vector<std::size_t> usable;
    for (const auto r : rows)
        if (!std::holds_alternative<std::monostate>(t.rows[r][col])) usable.push_back(r);
    if (usable.empty()) return std::monostate{};
    const ColumnKind kind = t.columns[col].kind;
    if (kind == ColumnKind::Datetime) {
        Datetime lo = std::get<Datetime>(t.rows[usable[0]][col]);
        Datetime hi = lo;
        for (const auto r : usable) {
            const Datetime v = std::get<Datetime>(t.rows[r][col]);
            if (v.epoch_s < lo.epoch_s) lo = v;
            if (v.epoch_s > hi.epoch_s) hi = v;
        }
        if (op == AggOp::Min) return lo;
        if (op == AggOp::Max) return hi;
        return static_cast<double>(hi.epoch_s - lo.epoch_s) / 86400.0;
    }
    if (kind == ColumnKind::Integer && op != AggOp::Avg) {
        std::int64_t sum = 0;
        std::int64_t lo = std::get<std::int64_t>(t.rows[usable[0]][col]), hi = lo;
        for (const auto r : usable) {
            const std::int64_t v = std::get<std::int64_t>(t.rows[r][col]);
            sum += v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (op == AggOp::Sum) return sum;
        if (op == AggOp::Min) return lo;
        if (op == AggOp::Max) return hi;
        return hi - lo;
    }
    double sum = 0.0;
    double lo = ref_num(t.rows[usable[0]][col]), hi = lo;
    for (const auto r : usable) {
        const double v = ref_num(t.rows[r][col]);
        sum += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    switch (op) {
        case AggOp::Sum: return sum;
        case AggOp::Avg: return sum / static_cast<double>(usable.size());
        case AggOp::Min: return lo;
        case AggOp::Max: return hi;
        case AggOp::Diff: return hi - lo;
        default: return std::monostate{};
    }
}

inline ColumnKind ref_agg_kind(ColumnKind source, AggOp op) {
    if (op == AggOp::Count) return ColumnKind::Integer;
    if (op == AggOp::Avg) return ColumnKind::Float;
    if (op == AggOp::Diff && source == ColumnKind::Datetime) return ColumnKind::Float;
    return source;
}

inline RefTable aggregate(const RefTable& t,
                          const std::vector<std::pair<std::string, AggOp>>& columns_ops,
                          const std::vector<std::string>& group_by) {
    std::vector<std::size_t> key_cols;
    for (const auto& name : group_by) key_cols.push_back(t.col(name));
    std::vector<Row> keys;
    std::vector<std::vector<std::size_t>> members;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        Row key;
        for (const auto c : key_cols) key.push_back(t.rows[r][c]);
        std::size_t g = keys.size();
        for (std::size_t i = 0; i < keys.size(); ++i) {
            if (keys[i] == key) {
                g = i;
                break;
            }
        }
        if (g == keys.size()) {
            keys.push_back(key);
            members.emplace_back();
        }
        members[g].push_back(r);
    }
    if (key_cols.empty()) {
        keys.assign(1, {});
        members.assign(1, {});
        for (std::size_t r = 0; r < t.rows.size(); ++r) members[0].push_back(r);
    }
    RefTable out;
    for (const auto c : key_cols) out.columns.push_back(t.columns[c]);
    for (const auto& [name, op] : columns_ops) {
        const std::size_t c = t.col(name);
        out.columns.push_back({std::string(agg_op_name(op)) + "_" + name,
                               ref_agg_kind(t.columns[c].kind, op)});
    }
    for (std::size_t g = 0; g < keys.size(); ++g) {
        Row row = keys[g];
        for (const auto& [name, op] : columns_ops)
            row.push_back(ref_aggregate_one(t, members[g], t.col(name), op));
        out.rows.push_back(row);
    }
    return out;
}

inline RefTable compute_column(const RefTable& t, const ComputeColumn& spec) {
    RefTable out = t;
    const std::size_t a = t.col(spec.col_a);
    std::optional<std::size_t> b;
    double scalar = 0.0;
    if (spec.element_wise) b = t.col(std::get<std::string>(spec.col_b_or_scalar));
    else scalar = std::get<double>(spec.col_b_or_scalar);
    const bool ints = t.columns[a].kind == ColumnKind::Integer &&
                      (!b || t.columns[*b].kind == ColumnKind::Integer) &&
                      (b || std::nearbyint(scalar) == scalar) && spec.op != ArithOp::Div;
    out.columns.push_back({spec.new_col, ints ? ColumnKind::Integer : ColumnKind::Float});
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const CellValue& ca = t.rows[r][a];
        const CellValue cb = b ? t.rows[r][*b] : CellValue(scalar);
        if (std::holds_alternative<std::monostate>(ca) ||
            std::holds_alternative<std::monostate>(cb)) {
            out.rows[r].push_back(std::monostate{});
            continue;
        }
        const double x = ref_num(ca), y = ref_num(cb);
        double v = 0.0;
        if (spec.op == ArithOp::Add) v = x + y;
        if (spec.op == ArithOp::Sub) v = x - y;
        if (spec.op == ArithOp::Mul) v = x * y;
        if (spec.op == ArithOp::Div) {
            if (y == 0.0) throw TabError(ErrorCode::DivisionByZero, "ref");
            v = x / y;
        }
        if (ints) out.rows[r].push_back(static_cast<std::int64_t>(std::llround(v)));
        else out.rows[r].push_back(v);
    }
    return out;
}

inline RefTable handle_missing(const RefTable& t, const std::string& strategy,
                               const std::string& fill) {
    RefTable out;
    out.columns = t.columns;
    if (strategy == "drop_rows") {
        for (const auto& row : t.rows) {
            bool any_null = false;
            for (const auto& cell : row)
                if (std::holds_alternative<std::monostate>(cell)) any_null = true;
            if (!any_null) out.rows.push_back(row);
        }
        return out;
    }
    out.rows = t.rows;
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
        for (auto& row : out.rows) {
            if (!std::holds_alternative<std::monostate>(row[c])) continue;
            if (strategy == "fill_zero") {
                if (t.columns[c].kind == ColumnKind::Integer) row[c] = std::int64_t{0};
                else if (t.columns[c].kind == ColumnKind::Float) row[c] = 0.0;
                else throw TabError(ErrorCode::StrategyTypeError, "ref");
            } else if (t.columns[c].kind == ColumnKind::Text) {
                row[c] = fill;
            }
        }
    }
    return out;
}

inline RefTable join(const RefTable& left, const RefTable& right, const Join& spec) {
    std::vector<std::size_t> lk, rk;
    if (!spec.cross_join) {
        for (const auto& name : spec.left_on) lk.push_back(left.col(name));
        for (const auto& name : spec.right_on) rk.push_back(right.col(name));
    }
    std::vector<std::size_t> rcols;
    for (std::size_t c = 0; c < right.columns.size(); ++c)
        if (std::find(rk.begin(), rk.end(), c) == rk.end()) rcols.push_back(c);
    RefTable out;
    out.columns = left.columns;
    for (const auto c : rcols) {
        Column column = right.columns[c];
        bool clash = false;
        for (const auto& existing : left.columns)
            if (existing.name == column.name) clash = true;
        if (clash) column.name += spec.suffix;
        out.columns.push_back(column);
    }
    auto key_eq = [&](const Row& a, const Row& b) {
        for (std::size_t k = 0; k < lk.size(); ++k) {
            const CellValue& x = a[lk[k]];
            const CellValue& y = b[rk[k]];
            if (std::holds_alternative<std::monostate>(x) ||
                std::holds_alternative<std::monostate>(y))
                return false;
            const bool numx = left.columns[lk[k]].kind == ColumnKind::Integer ||
                              left.columns[lk[k]].kind == ColumnKind::Float;
            const bool numy = right.columns[rk[k]].kind == ColumnKind::Integer ||
                              right.columns[rk[k]].kind == ColumnKind::Float;
            if (numx && numy) {
                if (ref_num(x) != ref_num(y)) return false;
            } else if (!(x == y)) {
                return false;
            }
        }
        return true;
    };
    if (spec.cross_join) {
        for (const auto& a : left.rows) {
            for (const auto& b : right.rows) {
                Row row = a;
                for (const auto c : rcols) row.push_back(b[c]);
                out.rows.push_back(row);
            }
        }
        return out;
    }
    std::vector<bool> right_used(right.rows.size(), false);
    for (const auto& a : left.rows) {
        bool matched = false;
        for (std::size_t rr = 0; rr < right.rows.size(); ++rr) {
            if (!key_eq(a, right.rows[rr])) continue;
            matched = true;
            right_used[rr] = true;
            Row row = a;
            for (const auto c : rcols) row.push_back(right.rows[rr][c]);
            out.rows.push_back(row);
        }
        if (!matched && (spec.join_type == JoinType::Left || spec.join_type == JoinType::Outer)) {
            Row row = a;
            for (std::size_t i = 0; i < rcols.size(); ++i) row.push_back(std::monostate{});
            out.rows.push_back(row);
        }
    }
    if (spec.join_type == JoinType::Right || spec.join_type == JoinType::Outer) {
        for (std::size_t rr = 0; rr < right.rows.size(); ++rr) {
            if (right_used[rr]) continue;
            Row row(left.columns.size(), std::monostate{});
            for (std::size_t k = 0; k < lk.size(); ++k) {
                if (left.columns[lk[k]].kind == right.columns[rk[k]].kind)
                    row[lk[k]] = right.rows[rr][rk[k]];
            }
            for (const auto c : rcols) row.push_back(right.rows[rr][c]);
            out.rows.push_back(row);
        }
    }
    return out;
}

// Sakamoto's method, Monday=0; independent of the engine's calendar code.
inline int ref_weekday(int y, int m, int d) {
    static const int offsets[] = {0, 3, 2, 5, 0, 3, 5, 1, 4, 6, 2, 4};
    if (m < 3) y -= 1;
    const int sunday0 = (y + y / 4 - y / 100 + y / 400 + offsets[m - 1] + d) % 7;
    return (sunday0 + 6) % 7;
}

inline bool ref_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

// Year/month walk from the epoch; only valid for non-negative day counts.
inline void ref_civil(std::int64_t days, int& y, int& m, int& d) {
    y = 1970;
    for (;;) {
        const int len = ref_leap(y) ? 366 : 365;
        if (days >= len) {
            days -= len;
            ++y;
        } else {
            break;
        }
    }
    static const int month_len[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    m = 1;
    for (;;) {
        int len = month_len[m - 1];
        if (m == 2 && ref_leap(y)) len = 29;
        if (days >= len) {
            days -= len;
            ++m;
        } else {
            break;
        }
    }
    d = static_cast<int>(days) + 1;
}

inline std::string ref_upper(const std::string& s) {
    std::string out = s;
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

inline std::string ref_lower(const std::string& s) {
    std::string out = s;
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::string ref_replace(std::string s, const std::string& from, const std::string& to) {
    if (from.empty()) return s;
    std::string out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        if (s.compare(pos, from.size(), from) == 0) {
            out += to;
            pos += from.size();
        } else {
            out += s[pos++];
        }
    }
    return out;
}

inline RefTable string_operation(const RefTable& t, const StringOperation& spec) {
    RefTable out = t;
    std::vector<std::size_t> cols;
    for (const auto& name : spec.columns) cols.push_back(t.col(name));
    for (const auto c : cols) {
        if (t.columns[c].kind != ColumnKind::Text)
            throw TabError(ErrorCode::TypeMismatch, "ref: non-text column");
    }
    if (spec.operation == "concat") {
        std::string name;
        if (spec.new_columns && !spec.new_columns->empty()) name = (*spec.new_columns)[0];
        else {
            for (std::size_t i = 0; i < spec.columns.size(); ++i)
                name += (i ? "_" : "") + spec.columns[i];
        }
        out.columns.push_back({name, ColumnKind::Text});
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            std::string joined;
            bool all_null = true;
            for (std::size_t i = 0; i < cols.size(); ++i) {
                if (i) joined += spec.sep;
                if (!std::holds_alternative<std::monostate>(t.rows[r][cols[i]])) {
                    all_null = false;
                    joined += std::get<std::string>(t.rows[r][cols[i]]);
                }
            }
            out.rows[r].push_back(all_null ? CellValue(std::monostate{}) : CellValue(joined));
        }
        return out;
    }
    const bool in_place = !spec.new_columns.has_value();
    for (std::size_t i = 0; i < cols.size(); ++i) {
        const std::size_t c = cols[i];
        if (spec.operation == "to_number") {
            std::vector<CellValue> values(t.rows.size(), std::monostate{});
            bool all_int = true;
            for (std::size_t r = 0; r < t.rows.size(); ++r) {
                if (std::holds_alternative<std::monostate>(t.rows[r][c])) continue;
                std::string s = std::get<std::string>(t.rows[r][c]);
                std::string cleaned;
                for (std::size_t p = 0; p < s.size(); ++p) {
                    if (s[p] == '$' || s[p] == ',' ||
                        std::isspace(static_cast<unsigned char>(s[p])))
                        continue;
                    // multi-byte currency marks handled by the euro/pound/yen
                    // prefixes below
                    cleaned += s[p];
                }
                for (const char* sym : {"€", "£", "¥"}) {
                    cleaned = ref_replace(cleaned, sym, "");
                }
                try {
                    std::size_t used = 0;
                    const long long v = std::stoll(cleaned, &used);
                    if (used == cleaned.size() && !cleaned.empty()) {
                        values[r] = static_cast<std::int64_t>(v);
                        continue;
                    }
                } catch (...) {
                }
                try {
                    std::size_t used = 0;
                    const double v = std::stod(cleaned, &used);
                    if (used != cleaned.size() || cleaned.empty() || !std::isfinite(v))
                        throw std::runtime_error("bad");
                    values[r] = v;
                    all_int = false;
                } catch (...) {
                    throw TabError(ErrorCode::ConversionError, "ref");
                }
            }
            if (!all_int) {
                for (auto& v : values)
                    if (const auto* iv = std::get_if<std::int64_t>(&v))
                        v = static_cast<double>(*iv);
            }
            const ColumnKind kind = all_int ? ColumnKind::Integer : ColumnKind::Float;
            if (in_place) {
                out.columns[c].kind = kind;
                for (std::size_t r = 0; r < t.rows.size(); ++r) out.rows[r][c] = values[r];
            } else {
                out.columns.push_back({(*spec.new_columns)[i], kind});
                for (std::size_t r = 0; r < t.rows.size(); ++r) out.rows[r].push_back(values[r]);
            }
            continue;
        }
        auto transform = [&](const CellValue& cell) -> CellValue {
            if (std::holds_alternative<std::monostate>(cell)) return cell;
            const std::string& s = std::get<std::string>(cell);
            if (spec.operation == "upper") return ref_upper(s);
            if (spec.operation == "lower") return ref_lower(s);
            if (spec.operation == "substring") {
                const auto len = static_cast<std::int64_t>(s.size());
                std::int64_t lo = std::max<std::int64_t>(0, std::min(spec.start, len));
                std::int64_t hi = std::max(lo, std::min(spec.end, len));
                return s.substr(static_cast<std::size_t>(lo), static_cast<std::size_t>(hi - lo));
            }
            if (spec.operation == "replace") return ref_replace(s, spec.from, spec.to);
            // to_na
            std::string trimmed = s;
            while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.front())))
                trimmed.erase(trimmed.begin());
            while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.back())))
                trimmed.pop_back();
            const std::string lowered = ref_lower(trimmed);
            std::vector<std::string> sentinels = spec.na_values;
            if (sentinels.empty()) sentinels = {"-", "n/a", "na", "unknown", "null", ""};
            for (const auto& sentinel : sentinels)
                if (lowered == ref_lower(sentinel)) return std::monostate{};
            return cell;
        };
        if (in_place) {
            for (std::size_t r = 0; r < t.rows.size(); ++r)
                out.rows[r][c] = transform(t.rows[r][c]);
        } else {
            out.columns.push_back({(*spec.new_columns)[i], ColumnKind::Text});
            for (std::size_t r = 0; r < t.rows.size(); ++r)
                out.rows[r].push_back(transform(t.rows[r][c]));
        }
    }
    return out;
}

inline RefTable grouped_time_diff(const RefTable& t, const ComputeColumn& spec) {
    RefTable out = t;
    const std::size_t dc = t.col(spec.col_a);
    std::optional<std::size_t> gc;
    if (const auto* name = std::get_if<std::string>(&spec.col_b_or_scalar); name && !name->empty())
        gc = t.col(*name);
    out.columns.push_back({spec.new_col, ColumnKind::Float});
    std::vector<Row> keys;
    std::vector<std::optional<std::int64_t>> last;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        Row key;
        if (gc) key.push_back(t.rows[r][*gc]);
        std::size_t g = keys.size();
        for (std::size_t i = 0; i < keys.size(); ++i)
            if (keys[i] == key) {
                g = i;
                break;
            }
        if (g == keys.size()) {
            keys.push_back(key);
            last.push_back(std::nullopt);
        }
        if (std::holds_alternative<std::monostate>(t.rows[r][dc])) {
            out.rows[r].push_back(std::monostate{});
            continue;
        }
        const std::int64_t epoch = std::get<Datetime>(t.rows[r][dc]).epoch_s;
        if (last[g])
            out.rows[r].push_back(static_cast<double>(epoch - *last[g]) / 86400.0);
        else
            out.rows[r].push_back(std::monostate{});
        last[g] = epoch;
    }
    return out;
}

} // namespace tabqa::ref
