// SPDX-License-Identifier: Apache-2.0
#include "tabqa/table.hpp"

#include "tabqa/datetime.hpp"
#include "tabqa/reward.hpp"
#include "tabqa/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace tabqa {

namespace {

std::string trim_copy(const std::string& text) {
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
    return text.substr(begin, end - begin);
}

bool utf8_valid(const std::string& bytes) {
    std::size_t i = 0;
    while (i < bytes.size()) {
        const unsigned char c = static_cast<unsigned char>(bytes[i]);
        std::size_t extra = 0;
        if (c < 0x80) extra = 0;
        else if ((c >> 5) == 0x6) extra = 1;
        else if ((c >> 4) == 0xe) extra = 2;
        else if ((c >> 3) == 0x1e) extra = 3;
        else return false;
        if (i + extra >= bytes.size() + (extra == 0 ? 1 : 0)) {
            if (i + extra >= bytes.size() && extra > 0) return false;
        }
        for (std::size_t k = 1; k <= extra; ++k) {
            if (i + k >= bytes.size()) return false;
            if ((static_cast<unsigned char>(bytes[i + k]) >> 6) != 0x2) return false;
        }
        i += extra + 1;
    }
    return true;
}

} // namespace

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::SchemaError: return "SchemaError";
        case ErrorCode::UnknownColumn: return "UnknownColumn";
        case ErrorCode::DuplicateColumn: return "DuplicateColumn";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::ConditionParseError: return "ConditionParseError";
        case ErrorCode::ConditionTypeError: return "ConditionTypeError";
        case ErrorCode::TypeMismatch: return "TypeMismatch";
        case ErrorCode::NonNumericAggregate: return "NonNumericAggregate";
        case ErrorCode::DivisionByZero: return "DivisionByZero";
        case ErrorCode::ConversionError: return "ConversionError";
        case ErrorCode::UnparseableDatetime: return "UnparseableDatetime";
        case ErrorCode::UnknownTimezone: return "UnknownTimezone";
        case ErrorCode::IncomparableKeyTypes: return "IncomparableKeyTypes";
        case ErrorCode::StrategyTypeError: return "StrategyTypeError";
        case ErrorCode::UnknownTableRef: return "UnknownTableRef";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::NoActionFound: return "NoActionFound";
        case ErrorCode::UnknownTool: return "UnknownTool";
        case ErrorCode::ArgumentSchemaError: return "ArgumentSchemaError";
        case ErrorCode::BackendTimeout: return "BackendTimeout";
        case ErrorCode::RateLimited: return "RateLimited";
        case ErrorCode::PolicyError: return "PolicyError";
        case ErrorCode::ConfidenceUnavailable: return "ConfidenceUnavailable";
        case ErrorCode::NoAnswerAvailable: return "NoAnswerAvailable";
        case ErrorCode::ManifestError: return "ManifestError";
        case ErrorCode::LoadError: return "LoadError";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Error";
}

const char* column_kind_name(ColumnKind kind) {
    switch (kind) {
        case ColumnKind::Boolean: return "boolean";
        case ColumnKind::Integer: return "integer";
        case ColumnKind::Float: return "float";
        case ColumnKind::Text: return "text";
        case ColumnKind::Datetime: return "datetime";
    }
    return "text";
}

std::string render_double(double value) {
    char buffer[64];
    const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return std::string(buffer, result.ptr);
}

std::string render_cell(const CellValue& cell) {
    struct Renderer {
        std::string operator()(std::monostate) const { return ""; }
        std::string operator()(bool value) const { return value ? "true" : "false"; }
        std::string operator()(std::int64_t value) const { return std::to_string(value); }
        std::string operator()(double value) const { return render_double(value); }
        std::string operator()(const std::string& value) const { return value; }
        std::string operator()(const Datetime& value) const { return format_datetime(value); }
    };
    return std::visit(Renderer{}, cell);
}

void EncodingConfig::validate() const {
    const std::string* tokens[] = {&relation_token, &pair_separator, &row_delimiter};
    for (const auto* token : tokens) {
        if (token->empty()) fail(ErrorCode::ConfigError, "encoding tokens must be non-empty");
    }
    for (const auto* a : tokens) {
        for (const auto* b : tokens) {
            if (a != b && a->find(*b) != std::string::npos)
                fail(ErrorCode::ConfigError,
                     "encoding token '" + *b + "' is a substring of '" + *a + "'");
        }
    }
}

Table Table::make(std::vector<Column> columns, std::vector<std::vector<CellValue>> rows,
                  std::optional<std::string> provenance) {
    std::set<std::string> seen;
    for (auto& column : columns) {
        column.name = trim_copy(column.name);
        if (column.name.empty()) fail(ErrorCode::SchemaError, "empty column name");
        if (!seen.insert(column.name).second)
            fail(ErrorCode::SchemaError, "duplicate column name '" + column.name + "'");
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != columns.size())
            fail(ErrorCode::SchemaError, "row " + std::to_string(r) + " has " +
                                             std::to_string(rows[r].size()) + " cells, expected " +
                                             std::to_string(columns.size()));
        for (std::size_t c = 0; c < columns.size(); ++c) {
            const CellValue& cell = rows[r][c];
            if (is_null(cell)) continue;
            const bool ok = (columns[c].kind == ColumnKind::Boolean && std::holds_alternative<bool>(cell)) ||
                            (columns[c].kind == ColumnKind::Integer && std::holds_alternative<std::int64_t>(cell)) ||
                            (columns[c].kind == ColumnKind::Float && std::holds_alternative<double>(cell)) ||
                            (columns[c].kind == ColumnKind::Text && std::holds_alternative<std::string>(cell)) ||
                            (columns[c].kind == ColumnKind::Datetime && std::holds_alternative<Datetime>(cell));
            if (!ok)
                fail(ErrorCode::SchemaError, "cell (" + std::to_string(r) + "," + std::to_string(c) +
                                                 ") does not match column kind " +
                                                 column_kind_name(columns[c].kind));
            if (const double* value = std::get_if<double>(&cell); value && !std::isfinite(*value))
                fail(ErrorCode::SchemaError, "non-finite float at row " + std::to_string(r));
        }
    }
    Table table;
    table.columns_ = std::move(columns);
    table.rows_ = std::move(rows);
    table.provenance_ = std::move(provenance);
    return table;
}

const CellValue& Table::at(std::size_t row, std::size_t col) const {
    if (row >= rows_.size() || col >= columns_.size())
        fail(ErrorCode::IndexOutOfRange, "cell (" + std::to_string(row) + "," + std::to_string(col) + ")");
    return rows_[row][col];
}

std::optional<std::size_t> Table::find_column(const std::string& name) const {
    const std::string trimmed = trim_copy(name);
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        if (columns_[i].name == trimmed) return i;
    }
    return std::nullopt;
}

std::size_t Table::column_index(const std::string& name) const {
    if (auto index = find_column(name)) return *index;
    fail(ErrorCode::UnknownColumn, "'" + trim_copy(name) + "'");
}

std::size_t Table::null_count(std::size_t col) const {
    std::size_t count = 0;
    for (const auto& row : rows_) {
        if (is_null(row[col])) ++count;
    }
    return count;
}

namespace {

std::vector<std::vector<std::string>> parse_csv_records(const std::string& raw) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t i = 0;
    // Skip a UTF-8 BOM.
    if (raw.size() >= 3 && raw.compare(0, 3, "\xef\xbb\xbf") == 0) i = 3;
    auto end_field = [&] {
        record.push_back(field);
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        records.push_back(record);
        record.clear();
    };
    for (; i < raw.size(); ++i) {
        const char c = raw[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < raw.size() && raw[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"' && field.empty() && !field_started) {
            in_quotes = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
            field_started = false;
        } else if (c == '\r' && i + 1 < raw.size() && raw[i + 1] == '\n') {
            end_record();
            ++i;
        } else if (c == '\n') {
            end_record();
        } else {
            field += c;
            field_started = true;
        }
    }
    if (in_quotes) fail(ErrorCode::ParseError, "unterminated quoted field");
    if (field_started || !field.empty() || !record.empty()) end_record();
    return records;
}

Table table_from_json_records(const std::string& raw, std::optional<std::string> provenance) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, e.what());
    }
    if (!doc.is_array()) fail(ErrorCode::SchemaError, "expected a JSON array of records");
    std::vector<Column> columns;
    std::vector<std::vector<CellValue>> cells;
    auto column_slot = [&](const std::string& key) {
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (columns[i].name == key) return i;
        }
        columns.push_back({key, ColumnKind::Text});
        for (auto& row : cells) row.emplace_back();
        return columns.size() - 1;
    };
    for (const auto& record : doc) {
        if (!record.is_object()) fail(ErrorCode::SchemaError, "record is not an object");
        cells.emplace_back(columns.size());
        auto& row = cells.back();
        for (const auto& [key, value] : record.items()) {
            const std::size_t slot = column_slot(key);
            if (slot >= row.size()) row.resize(columns.size());
            if (value.is_null()) continue;
            if (value.is_string()) row[slot] = value.get<std::string>();
            else if (value.is_number_integer()) row[slot] = std::to_string(value.get<std::int64_t>());
            else if (value.is_number()) row[slot] = render_double(value.get<double>());
            else if (value.is_boolean()) row[slot] = std::string(value.get<bool>() ? "true" : "false");
            else fail(ErrorCode::SchemaError, "nested value under key '" + key + "'");
        }
    }
    for (auto& row : cells) row.resize(columns.size());
    return Table::make(std::move(columns), std::move(cells), std::move(provenance));
}

} // namespace

Table parse_table(const std::string& raw, TableFormat format, std::optional<std::string> provenance) {
    if (!utf8_valid(raw)) fail(ErrorCode::ParseError, "input is not valid UTF-8");
    if (format == TableFormat::JsonRecords) return table_from_json_records(raw, std::move(provenance));

    const auto records = parse_csv_records(raw);
    if (records.empty()) fail(ErrorCode::SchemaError, "missing header row");
    std::vector<Column> columns;
    columns.reserve(records[0].size());
    for (const auto& name : records[0]) columns.push_back({name, ColumnKind::Text});

    std::vector<std::vector<CellValue>> rows;
    rows.reserve(records.size() - 1);
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != columns.size())
            fail(ErrorCode::ParseError, "row " + std::to_string(r) + " has " +
                                            std::to_string(records[r].size()) + " fields, expected " +
                                            std::to_string(columns.size()));
        std::vector<CellValue> row;
        row.reserve(columns.size());
        for (const auto& field : records[r]) {
            if (field.empty()) row.emplace_back();
            else row.emplace_back(field);
        }
        rows.push_back(std::move(row));
    }
    return Table::make(std::move(columns), std::move(rows), std::move(provenance));
}

namespace {

bool parse_int_strict(const std::string& text, std::int64_t& out) {
    const std::string t = trim_copy(text);
    if (t.empty()) return false;
    const char* begin = t.data();
    const char* end = t.data() + t.size();
    const auto result = std::from_chars(begin, end, out);
    return result.ec == std::errc() && result.ptr == end;
}

bool parse_double_strict(const std::string& text, double& out) {
    const std::string t = trim_copy(text);
    if (t.empty()) return false;
    const char* begin = t.data();
    const char* end = t.data() + t.size();
    const auto result = std::from_chars(begin, end, out);
    return result.ec == std::errc() && result.ptr == end && std::isfinite(out);
}

} // namespace

Table infer_types(const Table& table) {
    std::vector<Column> columns = table.columns();
    std::vector<std::vector<CellValue>> rows = table.rows();
    for (std::size_t c = 0; c < columns.size(); ++c) {
        if (columns[c].kind != ColumnKind::Text) continue;
        bool all_int = true, all_float = true, all_datetime = true, any = false;
        for (const auto& row : rows) {
            if (is_null(row[c])) continue;
            any = true;
            const auto& text = std::get<std::string>(row[c]);
            std::int64_t i64;
            double f64;
            if (all_int && !parse_int_strict(text, i64)) all_int = false;
            if (all_float && !parse_double_strict(text, f64)) all_float = false;
            if (all_datetime && !parse_datetime_auto(trim_copy(text))) all_datetime = false;
            if (!all_int && !all_float && !all_datetime) break;
        }
        if (!any) continue;
        ColumnKind target = ColumnKind::Text;
        if (all_int) target = ColumnKind::Integer;
        else if (all_float) target = ColumnKind::Float;
        else if (all_datetime) target = ColumnKind::Datetime;
        if (target == ColumnKind::Text) continue;
        columns[c].kind = target;
        for (auto& row : rows) {
            if (is_null(row[c])) continue;
            const auto text = std::get<std::string>(row[c]);
            if (target == ColumnKind::Integer) {
                std::int64_t value = 0;
                parse_int_strict(text, value);
                row[c] = value;
            } else if (target == ColumnKind::Float) {
                double value = 0;
                parse_double_strict(text, value);
                row[c] = value;
            } else {
                row[c] = *parse_datetime_auto(trim_copy(text));
            }
        }
    }
    return Table::make(std::move(columns), std::move(rows), table.provenance());
}

std::string encode(const Table& table, const EncodingConfig& config) {
    config.validate();
    std::string out;
    for (std::size_t r = 0; r < table.row_count(); ++r) {
        if (r > 0) out += config.row_delimiter;
        bool first_part = true;
        auto append_part = [&](const std::string& part) {
            if (part.empty()) return;
            if (!first_part) out += ' ';
            out += part;
            first_part = false;
        };
        for (std::size_t c = 0; c < table.column_count(); ++c) {
            append_part(table.columns()[c].name);
            append_part(config.relation_token);
            append_part(render_cell(table.at(r, c)));
            append_part(config.pair_separator);
        }
    }
    return out;
}

std::string Observation::to_text() const {
    std::ostringstream out;
    out << "shape: (" << total_rows << ", " << total_cols << ")\n";
    out << "columns:\n";
    for (std::size_t i = 0; i < columns.size(); ++i) {
        out << "  " << columns[i].name << " (" << column_kind_name(columns[i].kind) << "), "
            << missing_counts[i] << " missing\n";
    }
    out << "rows (" << sampled_rows.size() << " of " << total_rows << " shown):\n";
    for (const auto& row : sampled_rows) out << "  " << row << "\n";
    return out.str();
}

Observation observe(const Table& table, const ObserveConfig& config) {
    if (config.max_rows < 1) fail(ErrorCode::ConfigError, "max_rows must be >= 1");
    Observation obs;
    obs.total_rows = table.row_count();
    obs.total_cols = table.column_count();
    obs.columns = table.columns();
    obs.missing_counts.resize(table.column_count());
    for (std::size_t c = 0; c < table.column_count(); ++c) obs.missing_counts[c] = table.null_count(c);

    const std::size_t take = std::min(config.max_rows, table.row_count());
    std::vector<std::size_t> indices(table.row_count());
    std::iota(indices.begin(), indices.end(), 0);
    if (config.uniform_sample && take < indices.size()) {
        Rng rng(config.seed);
        for (std::size_t i = 0; i < take; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.bounded(indices.size() - i));
            std::swap(indices[i], indices[j]);
        }
        indices.resize(take);
        std::sort(indices.begin(), indices.end());
    } else {
        indices.resize(take);
    }
    for (const std::size_t r : indices) {
        std::string line;
        for (std::size_t c = 0; c < table.column_count(); ++c) {
            if (c > 0) line += ", ";
            line += table.columns()[c].name + "=" + render_cell(table.at(r, c));
        }
        obs.sampled_rows.push_back(std::move(line));
    }
    return obs;
}

Observation observe(const Table& table, std::size_t max_rows) {
    ObserveConfig config;
    config.max_rows = max_rows;
    return observe(table, config);
}

std::size_t token_length(const Table& table, const EncodingConfig& config) {
    return tokenize(encode(table, config)).size();
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (const char c : bytes) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string table_digest(const Table& table) {
    std::string material;
    for (const auto& column : table.columns()) {
        material += column.name;
        material += '\x1f';
        material += column_kind_name(column.kind);
        material += '\x1e';
    }
    material += '\x1d';
    material += encode(table, EncodingConfig{});
    char buffer[17];
    std::snprintf(buffer, sizeof(buffer), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(material)));
    return buffer;
}

} // namespace tabqa
