// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tabqa/table.hpp"

#include <string>
#include <vector>

namespace tabqa {

enum class Comparator { Eq, Ne, Lt, Le, Gt, Ge, Contains };

const char* comparator_name(Comparator cmp);

struct ConditionLiteral {
    enum class Kind { Number, Text, Date };
    Kind kind = Kind::Text;
    double number = 0.0;
    std::string text;
    Datetime date;
};

struct ConditionAtom {
    std::string column;
    Comparator cmp = Comparator::Eq;
    ConditionLiteral literal;
};

/// Boolean expression tree: expr := term (OR term)*, term := factor
/// (AND factor)*, factor := '(' expr ')' | column cmp literal.
struct Condition {
    enum class Node { Atom, And, Or };
    Node node = Node::Atom;
    ConditionAtom atom;
    std::vector<Condition> children;
};

/// Parses the grammar above. Literals are quoted text, numbers, or bare ISO
/// dates; column names may be double-quoted to include spaces. Raises
/// ConditionParseError carrying the byte offset.
Condition parse_condition(const std::string& text);

/// Canonical rendering; parse(pretty_print(c)) reproduces the same tree.
std::string pretty_print(const Condition& condition);

/// Row mask under SQL-style null semantics (any comparison with null is
/// false). Ordering comparators require numeric or datetime columns.
std::vector<bool> evaluate_condition(const Condition& condition, const Table& table);

} // namespace tabqa
