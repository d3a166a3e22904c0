// SPDX-License-Identifier: Apache-2.0
#include "tabqa/condition.hpp"

#include "tabqa/datetime.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

namespace tabqa {

const char* comparator_name(Comparator cmp) {
    switch (cmp) {
        case Comparator::Eq: return "==";
        case Comparator::Ne: return "!=";
        case Comparator::Lt: return "<";
        case Comparator::Le: return "<=";
        case Comparator::Gt: return ">";
        case Comparator::Ge: return ">=";
        case Comparator::Contains: return "contains";
    }
    return "==";
}

namespace {

[[noreturn]] void parse_fail(std::size_t offset, const std::string& what) {
    fail(ErrorCode::ConditionParseError, what + " at offset " + std::to_string(offset));
}

struct Lexer {
    const std::string& text;
    std::size_t pos = 0;

    explicit Lexer(const std::string& t) : text(t) {}

    void skip_space() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }

    bool eof() {
        skip_space();
        return pos >= text.size();
    }

    char peek() { return text[pos]; }

    bool try_keyword(const char* word) {
        skip_space();
        std::size_t len = 0;
        while (word[len]) ++len;
        if (pos + len > text.size()) return false;
        for (std::size_t i = 0; i < len; ++i) {
            if (std::tolower(static_cast<unsigned char>(text[pos + i])) != word[i]) return false;
        }
        // Keywords must end at a word boundary.
        if (pos + len < text.size()) {
            const char next = text[pos + len];
            if (std::isalnum(static_cast<unsigned char>(next)) || next == '_') return false;
        }
        pos += len;
        return true;
    }

    std::string read_quoted(char quote) {
        const std::size_t start = pos;
        ++pos; // opening quote
        std::string value;
        while (pos < text.size()) {
            const char c = text[pos];
            if (c == quote) {
                if (pos + 1 < text.size() && text[pos + 1] == quote) {
                    value += quote;
                    pos += 2;
                    continue;
                }
                ++pos;
                return value;
            }
            value += c;
            ++pos;
        }
        parse_fail(start, "unterminated quoted string");
    }
};

bool ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

// A bare literal that looks like YYYY-MM-DD (optionally THH:MM:SS[Z]).
bool looks_like_date(const std::string& text, std::size_t pos) {
    if (pos + 10 > text.size()) return false;
    for (int i = 0; i < 4; ++i)
        if (!std::isdigit(static_cast<unsigned char>(text[pos + static_cast<std::size_t>(i)]))) return false;
    return text[pos + 4] == '-';
}

struct Parser {
    Lexer lex;

    explicit Parser(const std::string& text) : lex(text) {}

    Condition parse_expr() {
        Condition first = parse_term();
        if (!lex.try_keyword("or")) return first;
        Condition node;
        node.node = Condition::Node::Or;
        node.children.push_back(std::move(first));
        do {
            node.children.push_back(parse_term());
        } while (lex.try_keyword("or"));
        return node;
    }

    Condition parse_term() {
        Condition first = parse_factor();
        if (!lex.try_keyword("and")) return first;
        Condition node;
        node.node = Condition::Node::And;
        node.children.push_back(std::move(first));
        do {
            node.children.push_back(parse_factor());
        } while (lex.try_keyword("and"));
        return node;
    }

    Condition parse_factor() {
        if (lex.eof()) parse_fail(lex.pos, "expected expression");
        if (lex.peek() == '(') {
            ++lex.pos;
            Condition inner = parse_expr();
            if (lex.eof() || lex.peek() != ')') parse_fail(lex.pos, "expected ')'");
            ++lex.pos;
            return inner;
        }
        Condition node;
        node.node = Condition::Node::Atom;
        node.atom = parse_atom();
        return node;
    }

    ConditionAtom parse_atom() {
        ConditionAtom atom;
        if (lex.eof()) parse_fail(lex.pos, "expected column");
        if (lex.peek() == '"') {
            atom.column = lex.read_quoted('"');
        } else if (ident_start(lex.peek())) {
            const std::size_t start = lex.pos;
            while (lex.pos < lex.text.size() && ident_char(lex.text[lex.pos])) ++lex.pos;
            atom.column = lex.text.substr(start, lex.pos - start);
        } else {
            parse_fail(lex.pos, "expected column name");
        }
        atom.cmp = parse_comparator();
        atom.literal = parse_literal();
        return atom;
    }

    Comparator parse_comparator() {
        if (lex.try_keyword("contains")) return Comparator::Contains;
        if (lex.eof()) parse_fail(lex.pos, "expected comparator");
        const char c = lex.peek();
        if (c == '=' || c == '!' || c == '<' || c == '>') {
            const bool next_eq = lex.pos + 1 < lex.text.size() && lex.text[lex.pos + 1] == '=';
            if (c == '=' && next_eq) { lex.pos += 2; return Comparator::Eq; }
            if (c == '!' && next_eq) { lex.pos += 2; return Comparator::Ne; }
            if (c == '<') { lex.pos += next_eq ? 2 : 1; return next_eq ? Comparator::Le : Comparator::Lt; }
            if (c == '>') { lex.pos += next_eq ? 2 : 1; return next_eq ? Comparator::Ge : Comparator::Gt; }
        }
        parse_fail(lex.pos, "expected comparator");
    }

    ConditionLiteral parse_literal() {
        ConditionLiteral literal;
        if (lex.eof()) parse_fail(lex.pos, "expected literal");
        const char c = lex.peek();
        if (c == '\'' || c == '"') {
            literal.kind = ConditionLiteral::Kind::Text;
            literal.text = lex.read_quoted(c);
            return literal;
        }
        if (looks_like_date(lex.text, lex.pos)) {
            std::size_t end = lex.pos;
            while (end < lex.text.size()) {
                const char d = lex.text[end];
                if (std::isdigit(static_cast<unsigned char>(d)) || d == '-' || d == ':' || d == 'T' ||
                    d == 'Z')
                    ++end;
                else
                    break;
            }
            const std::string candidate = lex.text.substr(lex.pos, end - lex.pos);
            if (auto parsed = parse_datetime_auto(candidate)) {
                literal.kind = ConditionLiteral::Kind::Date;
                literal.date = *parsed;
                literal.text = candidate;
                lex.pos = end;
                return literal;
            }
            parse_fail(lex.pos, "invalid date literal");
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.') {
            std::size_t end = lex.pos;
            if (lex.text[end] == '-' || lex.text[end] == '+') ++end;
            bool digits = false;
            while (end < lex.text.size() &&
                   (std::isdigit(static_cast<unsigned char>(lex.text[end])) || lex.text[end] == '.' ||
                    lex.text[end] == 'e' || lex.text[end] == 'E' ||
                    ((lex.text[end] == '-' || lex.text[end] == '+') &&
                     (lex.text[end - 1] == 'e' || lex.text[end - 1] == 'E')))) {
                if (std::isdigit(static_cast<unsigned char>(lex.text[end]))) digits = true;
                ++end;
            }
            double value = 0.0;
            const char* begin_ptr = lex.text.data() + lex.pos;
            const char* end_ptr = lex.text.data() + end;
            const auto result = std::from_chars(begin_ptr, end_ptr, value);
            if (!digits || result.ec != std::errc() || result.ptr != end_ptr)
                parse_fail(lex.pos, "invalid number literal");
            literal.kind = ConditionLiteral::Kind::Number;
            literal.number = value;
            literal.text = render_double(value);
            lex.pos = end;
            return literal;
        }
        parse_fail(lex.pos, "expected literal");
    }
};

} // namespace

Condition parse_condition(const std::string& text) {
    Parser parser(text);
    Condition condition = parser.parse_expr();
    if (!parser.lex.eof()) parse_fail(parser.lex.pos, "unexpected trailing input");
    return condition;
}

namespace {

bool needs_quotes(const std::string& column) {
    if (column.empty()) return true;
    if (!ident_start(column[0])) return true;
    for (const char c : column) {
        if (!ident_char(c)) return true;
    }
    // Bare keywords would be re-lexed as operators.
    std::string lower;
    for (const char c : column) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return lower == "and" || lower == "or" || lower == "contains";
}

std::string quote_with(const std::string& value, char quote) {
    std::string out(1, quote);
    for (const char c : value) {
        out += c;
        if (c == quote) out += quote;
    }
    out += quote;
    return out;
}

std::string print_literal(const ConditionLiteral& literal) {
    switch (literal.kind) {
        case ConditionLiteral::Kind::Number: return render_double(literal.number);
        case ConditionLiteral::Kind::Text: return quote_with(literal.text, '\'');
        case ConditionLiteral::Kind::Date: return format_datetime(literal.date);
    }
    return "''";
}

std::string print_node(const Condition& condition) {
    if (condition.node == Condition::Node::Atom) {
        const auto& atom = condition.atom;
        const std::string column =
            needs_quotes(atom.column) ? quote_with(atom.column, '"') : atom.column;
        return column + " " + comparator_name(atom.cmp) + " " + print_literal(atom.literal);
    }
    const char* joiner = condition.node == Condition::Node::And ? " AND " : " OR ";
    std::string out;
    for (std::size_t i = 0; i < condition.children.size(); ++i) {
        if (i > 0) out += joiner;
        const auto& child = condition.children[i];
        if (child.node == Condition::Node::Atom) out += print_node(child);
        else out += "(" + print_node(child) + ")";
    }
    return out;
}

double cell_as_number(const CellValue& cell) {
    if (const auto* i = std::get_if<std::int64_t>(&cell)) return static_cast<double>(*i);
    return std::get<double>(cell);
}

bool atom_matches(const ConditionAtom& atom, const Table& table, std::size_t row, std::size_t col) {
    const CellValue& cell = table.at(row, col);
    if (is_null(cell)) return false;
    const ColumnKind kind = table.columns()[col].kind;
    const auto& literal = atom.literal;

    if (atom.cmp == Comparator::Contains)
        return render_cell(cell).find(literal.text) != std::string::npos;

    const bool ordering = atom.cmp != Comparator::Eq && atom.cmp != Comparator::Ne;
    int relation = 0; // -1 / 0 / +1, valid only when comparable is true
    bool comparable = false;
    bool equal = false;

    if ((kind == ColumnKind::Integer || kind == ColumnKind::Float) &&
        literal.kind == ConditionLiteral::Kind::Number) {
        const double lhs = cell_as_number(cell);
        relation = lhs < literal.number ? -1 : (lhs > literal.number ? 1 : 0);
        comparable = true;
        equal = relation == 0;
    } else if (kind == ColumnKind::Datetime && literal.kind == ConditionLiteral::Kind::Date) {
        const auto lhs = std::get<Datetime>(cell).epoch_s;
        const auto rhs = literal.date.epoch_s;
        relation = lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
        comparable = true;
        equal = relation == 0;
    } else {
        // Mixed kinds fall back to text equality on the rendered cell.
        equal = render_cell(cell) == literal.text;
    }

    switch (atom.cmp) {
        case Comparator::Eq: return equal;
        case Comparator::Ne: return !equal;
        default: break;
    }
    if (!comparable || !ordering)
        fail(ErrorCode::ConditionTypeError,
             "ordering comparator on column '" + atom.column + "' of kind " +
                 column_kind_name(kind));
    switch (atom.cmp) {
        case Comparator::Lt: return relation < 0;
        case Comparator::Le: return relation <= 0;
        case Comparator::Gt: return relation > 0;
        case Comparator::Ge: return relation >= 0;
        default: return false;
    }
}

void check_atom_types(const ConditionAtom& atom, const Table& table) {
    const std::size_t col = table.column_index(atom.column);
    const ColumnKind kind = table.columns()[col].kind;
    if (atom.cmp == Comparator::Eq || atom.cmp == Comparator::Ne ||
        atom.cmp == Comparator::Contains)
        return;
    const bool numeric_ok = (kind == ColumnKind::Integer || kind == ColumnKind::Float) &&
                            atom.literal.kind == ConditionLiteral::Kind::Number;
    const bool date_ok =
        kind == ColumnKind::Datetime && atom.literal.kind == ConditionLiteral::Kind::Date;
    if (!numeric_ok && !date_ok)
        fail(ErrorCode::ConditionTypeError,
             "ordering comparator on column '" + atom.column + "' of kind " +
                 column_kind_name(kind));
}

bool eval_node(const Condition& condition, const Table& table, std::size_t row) {
    switch (condition.node) {
        case Condition::Node::Atom:
            return atom_matches(condition.atom, table, row,
                                table.column_index(condition.atom.column));
        case Condition::Node::And:
            for (const auto& child : condition.children) {
                if (!eval_node(child, table, row)) return false;
            }
            return true;
        case Condition::Node::Or:
            for (const auto& child : condition.children) {
                if (eval_node(child, table, row)) return true;
            }
            return false;
    }
    return false;
}

void check_types(const Condition& condition, const Table& table) {
    if (condition.node == Condition::Node::Atom) {
        check_atom_types(condition.atom, table);
        return;
    }
    for (const auto& child : condition.children) check_types(child, table);
}

} // namespace

std::string pretty_print(const Condition& condition) { return print_node(condition); }

std::vector<bool> evaluate_condition(const Condition& condition, const Table& table) {
    // Validate every referenced column and comparator type up front so that
    // short-circuit evaluation cannot mask errors on some rows.
    check_types(condition, table);
    std::vector<bool> mask(table.row_count(), false);
    for (std::size_t r = 0; r < table.row_count(); ++r) mask[r] = eval_node(condition, table, r);
    return mask;
}

} // namespace tabqa
