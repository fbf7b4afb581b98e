#pragma once

#include <cctype>
#include <charconv>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "wsms/catalog.hpp"
#include "wsms/error.hpp"
#include "wsms/relation.hpp"

namespace wsms {

// ---------------------------------------------------------------------------
// Scanner

enum class TokenKind { Keyword, Identifier, Number, String, Comparator, Comma, Star, LParen, RParen, Dot };

inline const char* to_string(TokenKind k) {
  switch (k) {
    case TokenKind::Keyword: return "keyword";
    case TokenKind::Identifier: return "identifier";
    case TokenKind::Number: return "number";
    case TokenKind::String: return "string";
    case TokenKind::Comparator: return "comparator";
    case TokenKind::Comma: return "','";
    case TokenKind::Star: return "'*'";
    case TokenKind::LParen: return "'('";
    case TokenKind::RParen: return "')'";
    case TokenKind::Dot: return "'.'";
  }
  return "token";
}

struct Token {
  TokenKind kind;
  std::string text;  // keywords uppercased; strings keep their quotes
  std::size_t position = 0;

  bool operator==(const Token&) const = default;
};

inline bool is_keyword(std::string_view upper) {
  return upper == "SELECT" || upper == "FROM" || upper == "WHERE" || upper == "AND";
}

inline std::string to_upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

/// Splits a query into tokens. Throws Error(Lexical) with the byte offset of
/// the first illegal character or unterminated string.
inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto ident_start = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
  auto ident_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  auto digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
  while (i < text.size()) {
    const char c = text[i];
    const std::size_t start = i;
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (ident_start(c)) {
      while (i < text.size() && ident_char(text[i])) ++i;
      std::string word(text.substr(start, i - start));
      std::string upper = to_upper(word);
      if (is_keyword(upper)) {
        out.push_back({TokenKind::Keyword, upper, start});
      } else {
        out.push_back({TokenKind::Identifier, word, start});
      }
    } else if (digit(c) || (c == '-' && i + 1 < text.size() && digit(text[i + 1]))) {
      ++i;
      while (i < text.size() && digit(text[i])) ++i;
      std::string lexeme(text.substr(start, i - start));
      std::int64_t value = 0;
      auto [ptr, ec] = std::from_chars(lexeme.data(), lexeme.data() + lexeme.size(), value);
      if (ec != std::errc{} || ptr != lexeme.data() + lexeme.size()) {
        throw Error(ErrorKind::Lexical, "integer literal out of range at offset " + std::to_string(start), start);
      }
      out.push_back({TokenKind::Number, lexeme, start});
    } else if (c == '\'') {
      ++i;
      bool closed = false;
      while (i < text.size()) {
        if (text[i] == '\'') {
          if (i + 1 < text.size() && text[i + 1] == '\'') {
            i += 2;
            continue;
          }
          ++i;
          closed = true;
          break;
        }
        ++i;
      }
      if (!closed) throw Error(ErrorKind::Lexical, "unterminated string at offset " + std::to_string(start), start);
      out.push_back({TokenKind::String, std::string(text.substr(start, i - start)), start});
    } else if (c == '<' || c == '>' || c == '=') {
      ++i;
      if (c == '<' && i < text.size() && (text[i] == '=' || text[i] == '>')) ++i;
      else if (c == '>' && i < text.size() && text[i] == '=') ++i;
      out.push_back({TokenKind::Comparator, std::string(text.substr(start, i - start)), start});
    } else if (c == ',' || c == '*' || c == '(' || c == ')' || c == '.') {
      static const std::map<char, TokenKind> kinds{{',', TokenKind::Comma},
                                                   {'*', TokenKind::Star},
                                                   {'(', TokenKind::LParen},
                                                   {')', TokenKind::RParen},
                                                   {'.', TokenKind::Dot}};
      out.push_back({kinds.at(c), std::string(1, c), start});
      ++i;
    } else {
      throw Error(ErrorKind::Lexical,
                  "illegal character '" + std::string(1, c) + "' at offset " + std::to_string(start), start);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parser

/// Single-block Select-Project-Join query.
struct QueryAst {
  bool star = false;
  std::vector<std::string> projection;  // empty iff star
  std::vector<std::string> sources;     // capability names, as written
  std::vector<Predicate> predicates;    // conjunction, as written

  bool operator==(const QueryAst&) const = default;
};

namespace detail {

class Parser {
 public:
  explicit Parser(const std::vector<Token>& tokens) : tokens_(tokens) {}

  QueryAst parse_query() {
    QueryAst ast;
    expect_keyword("SELECT");
    if (peek_is(TokenKind::Star)) {
      ++pos_;
      ast.star = true;
    } else {
      ast.projection.push_back(expect_identifier("identifier or '*'"));
      while (accept(TokenKind::Comma)) ast.projection.push_back(expect_identifier("identifier"));
    }
    expect_keyword("FROM");
    ast.sources.push_back(expect_identifier("capability name"));
    while (accept(TokenKind::Comma)) ast.sources.push_back(expect_identifier("capability name"));
    if (accept_keyword("WHERE")) {
      ast.predicates.push_back(parse_predicate());
      while (accept_keyword("AND")) ast.predicates.push_back(parse_predicate());
    }
    if (pos_ < tokens_.size()) fail("end of query");
    return ast;
  }

 private:
  Predicate parse_predicate() {
    Predicate p;
    p.lhs = expect_identifier("attribute name");
    if (!peek_is(TokenKind::Comparator)) fail("comparator");
    p.op = *parse_comparator(tokens_[pos_++].text);
    if (pos_ >= tokens_.size()) fail("attribute, number or string");
    const Token& t = tokens_[pos_];
    switch (t.kind) {
      case TokenKind::Identifier: p.rhs = AttrRef{t.text}; break;
      case TokenKind::Number: p.rhs = Value{std::stoll(t.text)}; break;
      case TokenKind::String: p.rhs = Value{unquote(t.text)}; break;
      default: fail("attribute, number or string");
    }
    ++pos_;
    return p;
  }

  static std::string unquote(const std::string& lexeme) {
    std::string out;
    for (std::size_t i = 1; i + 1 < lexeme.size(); ++i) {
      out += lexeme[i];
      if (lexeme[i] == '\'') ++i;
    }
    return out;
  }

  bool peek_is(TokenKind k) const { return pos_ < tokens_.size() && tokens_[pos_].kind == k; }

  bool accept(TokenKind k) {
    if (!peek_is(k)) return false;
    ++pos_;
    return true;
  }

  bool accept_keyword(const char* kw) {
    if (!peek_is(TokenKind::Keyword) || tokens_[pos_].text != kw) return false;
    ++pos_;
    return true;
  }

  void expect_keyword(const char* kw) {
    if (!accept_keyword(kw)) fail(kw);
  }

  std::string expect_identifier(const char* expected) {
    if (!peek_is(TokenKind::Identifier)) fail(expected);
    return tokens_[pos_++].text;
  }

  [[noreturn]] void fail(const std::string& expected) const {
    if (pos_ >= tokens_.size()) {
      std::size_t end = tokens_.empty() ? 0 : tokens_.back().position + tokens_.back().text.size();
      throw Error(ErrorKind::Syntax, "unexpected end of query at offset " + std::to_string(end) +
                                         ", expected " + expected, end);
    }
    const Token& t = tokens_[pos_];
    throw Error(ErrorKind::Syntax, "unexpected " + std::string(to_string(t.kind)) + " '" + t.text +
                                       "' at offset " + std::to_string(t.position) + ", expected " + expected,
                t.position);
  }

  const std::vector<Token>& tokens_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// query := SELECT proj FROM caps [WHERE pred (AND pred)*]
inline QueryAst parse(const std::vector<Token>& tokens) { return detail::Parser(tokens).parse_query(); }

inline QueryAst parse_query(std::string_view text) { return parse(tokenize(text)); }

/// Canonical text; parse(tokenize(render(a))) == a.
inline std::string render(const QueryAst& ast) {
  std::string out = "SELECT ";
  if (ast.star) {
    out += "*";
  } else {
    for (std::size_t i = 0; i < ast.projection.size(); ++i) out += (i ? ", " : "") + ast.projection[i];
  }
  out += " FROM ";
  for (std::size_t i = 0; i < ast.sources.size(); ++i) out += (i ? ", " : "") + ast.sources[i];
  for (std::size_t i = 0; i < ast.predicates.size(); ++i) {
    out += (i ? " AND " : " WHERE ") + ast.predicates[i].to_string();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validator

/// A query bound to catalog services.
struct ValidatedQuery {
  QueryAst ast;
  std::map<std::string, std::string> bindings;   // capability -> chosen service id
  std::map<std::string, std::string> producers;  // output attribute -> service id
  std::vector<std::string> services;             // chosen ids, sorted
  std::vector<std::string> projection;           // star expanded

  std::set<std::string> service_set() const { return {services.begin(), services.end()}; }
};

/// Binds capabilities (Map + Select) and resolves attribute names.
inline ValidatedQuery validate_query(const QueryAst& ast, const Catalog& c, const CostModel& cm = {}) {
  if (ast.sources.empty()) throw Error(ErrorKind::Validation, "query has no sources");
  if (!ast.star && ast.projection.empty()) throw Error(ErrorKind::Validation, "empty projection");
  ValidatedQuery vq;
  vq.ast = ast;
  std::set<std::string> caps;
  for (const auto& cap : ast.sources) {
    if (!caps.insert(cap).second) throw Error(ErrorKind::Validation, "capability '" + cap + "' listed twice");
  }
  auto mapped = map_services(c, caps);
  for (const auto& cap : ast.sources) {
    const auto& candidates = mapped.at(cap);
    if (candidates.empty()) throw Error(ErrorKind::UnknownCapability, "'" + cap + "'");
    const auto& chosen = select_service(candidates, cm);
    vq.bindings[cap] = chosen.id;
    vq.services.push_back(chosen.id);
  }
  std::sort(vq.services.begin(), vq.services.end());

  std::map<std::string, std::vector<std::string>> produced_by;
  for (const auto& id : vq.services) {
    for (const auto& a : c.service(id).outputs) produced_by[a].push_back(id);
  }
  auto resolve = [&](const std::string& attr) -> const std::string& {
    auto it = produced_by.find(attr);
    if (it == produced_by.end()) throw Error(ErrorKind::UnknownAttribute, "'" + attr + "'");
    if (it->second.size() > 1) {
      throw Error(ErrorKind::AmbiguousAttribute,
                  "'" + attr + "' is produced by " + it->second[0] + " and " + it->second[1]);
    }
    return it->second.front();
  };
  for (const auto& [attr, ids] : produced_by) {
    if (ids.size() == 1) vq.producers[attr] = ids.front();
  }
  for (const auto& id : vq.services) {
    for (const auto& in : c.service(id).inputs) {
      if (!produced_by.contains(in)) {
        throw Error(ErrorKind::Unsatisfiable,
                    "input '" + in + "' of " + id + " is not produced by any service in FROM");
      }
      resolve(in);
    }
  }
  if (ast.star) {
    std::set<std::string> seen;
    for (const auto& cap : ast.sources) {
      for (const auto& a : c.service(vq.bindings.at(cap)).outputs) {
        if (seen.insert(a).second) vq.projection.push_back(a);
      }
    }
  } else {
    std::set<std::string> seen;
    for (const auto& a : ast.projection) {
      resolve(a);
      if (!seen.insert(a).second) throw Error(ErrorKind::Validation, "attribute '" + a + "' projected twice");
      vq.projection.push_back(a);
    }
  }
  for (const auto& p : ast.predicates) {
    for (const auto& a : p.attributes()) resolve(a);
    if (p.has_attribute_rhs() && p.op != Comparator::Eq) {
      throw Error(ErrorKind::Validation, "attribute comparison '" + p.to_string() + "' must use '='");
    }
  }
  return vq;
}

inline ValidatedQuery validate_query(std::string_view text, const Catalog& c, const CostModel& cm = {}) {
  return validate_query(parse_query(text), c, cm);
}

}  // namespace wsms
