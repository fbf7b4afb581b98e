#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "wsms/error.hpp"

namespace wsms {

/// Attribute values are integers or strings; there is no implicit coercion.
using Value = std::variant<std::int64_t, std::string>;
using Row = std::vector<Value>;

inline std::string value_to_string(const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  return std::get<std::string>(v);
}

/// SQL-style literal rendering: strings single-quoted with '' escaping.
inline std::string value_to_literal(const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  std::string out = "'";
  for (char c : std::get<std::string>(v)) {
    if (c == '\'') out += '\'';
    out += c;
  }
  out += '\'';
  return out;
}

enum class Comparator { Eq, Lt, Gt, Le, Ge, Ne };

inline const char* to_string(Comparator op) {
  switch (op) {
    case Comparator::Eq: return "=";
    case Comparator::Lt: return "<";
    case Comparator::Gt: return ">";
    case Comparator::Le: return "<=";
    case Comparator::Ge: return ">=";
    case Comparator::Ne: return "<>";
  }
  return "?";
}

inline std::optional<Comparator> parse_comparator(std::string_view text) {
  if (text == "=") return Comparator::Eq;
  if (text == "<") return Comparator::Lt;
  if (text == ">") return Comparator::Gt;
  if (text == "<=") return Comparator::Le;
  if (text == ">=") return Comparator::Ge;
  if (text == "<>") return Comparator::Ne;
  return std::nullopt;
}

/// Compares two values; mixing integers and strings is a TypeMismatch error.
inline bool compare_values(const Value& lhs, Comparator op, const Value& rhs) {
  if (lhs.index() != rhs.index()) {
    throw Error(ErrorKind::TypeMismatch, "cannot compare " + value_to_literal(lhs) + " with " +
                                             value_to_literal(rhs));
  }
  const bool lt = lhs < rhs;
  const bool eq = lhs == rhs;
  switch (op) {
    case Comparator::Eq: return eq;
    case Comparator::Lt: return lt;
    case Comparator::Gt: return !lt && !eq;
    case Comparator::Le: return lt || eq;
    case Comparator::Ge: return !lt;
    case Comparator::Ne: return !eq;
  }
  return false;
}

struct AttrRef {
  std::string name;
  bool operator==(const AttrRef&) const = default;
};

using Operand = std::variant<AttrRef, Value>;

/// `lhs op rhs` where rhs is another attribute or a literal.
struct Predicate {
  std::string lhs;
  Comparator op = Comparator::Eq;
  Operand rhs;

  bool operator==(const Predicate&) const = default;

  bool has_attribute_rhs() const { return std::holds_alternative<AttrRef>(rhs); }

  /// attr = attr; treated as a join condition by the planner.
  bool is_equi_join() const { return op == Comparator::Eq && has_attribute_rhs(); }

  std::vector<std::string> attributes() const {
    std::vector<std::string> out{lhs};
    if (const auto* a = std::get_if<AttrRef>(&rhs); a && a->name != lhs) out.push_back(a->name);
    return out;
  }

  std::string to_string() const {
    std::string out = lhs + " " + wsms::to_string(op) + " ";
    if (const auto* a = std::get_if<AttrRef>(&rhs)) return out + a->name;
    return out + value_to_literal(std::get<Value>(rhs));
  }
};

/// Multiset of tuples over an ordered schema.
struct Relation {
  std::vector<std::string> schema;
  std::vector<Row> rows;

  bool operator==(const Relation&) const = default;

  std::optional<std::size_t> index_of(std::string_view name) const {
    auto it = std::find(schema.begin(), schema.end(), name);
    if (it == schema.end()) return std::nullopt;
    return static_cast<std::size_t>(it - schema.begin());
  }

  bool has(std::string_view name) const { return index_of(name).has_value(); }

  std::size_t require(std::string_view name) const {
    if (auto idx = index_of(name)) return *idx;
    throw Error(ErrorKind::UnknownAttribute, std::string(name));
  }

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
};

/// The relation holding one empty tuple; drives source services.
inline Relation seed_relation() { return Relation{{}, {Row{}}}; }

inline bool evaluate(const Predicate& p, const Relation& schema_of, const Row& row) {
  const Value& lhs = row[schema_of.require(p.lhs)];
  if (const auto* a = std::get_if<AttrRef>(&p.rhs)) {
    return compare_values(lhs, p.op, row[schema_of.require(a->name)]);
  }
  return compare_values(lhs, p.op, std::get<Value>(p.rhs));
}

/// Reorders columns to `schema` (which must be a permutation of r.schema).
inline Relation reorder_columns(const Relation& r, const std::vector<std::string>& schema) {
  std::vector<std::size_t> idx;
  idx.reserve(schema.size());
  for (const auto& a : schema) idx.push_back(r.require(a));
  Relation out{schema, {}};
  out.rows.reserve(r.rows.size());
  for (const auto& row : r.rows) {
    Row next;
    next.reserve(idx.size());
    for (auto i : idx) next.push_back(row[i]);
    out.rows.push_back(std::move(next));
  }
  return out;
}

/// Multiset equality up to column order.
inline bool multiset_equal(const Relation& a, const Relation& b) {
  if (a.schema.size() != b.schema.size() || a.rows.size() != b.rows.size()) return false;
  auto sorted_schema = a.schema;
  std::sort(sorted_schema.begin(), sorted_schema.end());
  auto sb = b.schema;
  std::sort(sb.begin(), sb.end());
  if (sorted_schema != sb) return false;
  auto ra = reorder_columns(a, sorted_schema).rows;
  auto rb = reorder_columns(b, sorted_schema).rows;
  std::sort(ra.begin(), ra.end());
  std::sort(rb.begin(), rb.end());
  return ra == rb;
}

inline std::string csv_field(const Value& v) {
  std::string s = value_to_string(v);
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Header row then one line per tuple, `\n` terminated.
inline void write_csv(std::ostream& os, const Relation& r) {
  for (std::size_t i = 0; i < r.schema.size(); ++i) os << (i ? "," : "") << r.schema[i];
  os << '\n';
  for (const auto& row : r.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << csv_field(row[i]);
    os << '\n';
  }
}

}  // namespace wsms
