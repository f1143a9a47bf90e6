#pragma once

#include <cctype>
#include <charconv>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "stlmon/formula.hpp"

namespace stlmon {

namespace detail {

enum class Tok { Ident, Number, String, LParen, RParen, LBracket, RBracket, Comma, Colon, Semi, Arrow, Lt, Le, Gt, Ge, End };

struct Token {
  Tok kind;
  std::string text;
  double number = 0.0;
  int line = 1;
  int column = 1;
};

class Lexer {
public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      Token t{Tok::End, {}, 0.0, line_, col_};
      if (pos_ >= src_.size()) {
        out.push_back(t);
        return out;
      }
      const char c = src_[pos_];
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        const std::size_t start = pos_;
        while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) advance();
        t.kind = Tok::Ident;
        t.text = std::string(src_.substr(start, pos_ - start));
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' ||
                 (c == '-' && pos_ + 1 < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])) || src_[pos_ + 1] == '.'))) {
        lex_number(t);
      } else if (c == '"') {
        lex_string(t);
      } else {
        const char n = pos_ + 1 < src_.size() ? src_[pos_ + 1] : '\0';
        int len = 1;
        switch (c) {
          case '(': t.kind = Tok::LParen; break;
          case ')': t.kind = Tok::RParen; break;
          case '[': t.kind = Tok::LBracket; break;
          case ']': t.kind = Tok::RBracket; break;
          case ',': t.kind = Tok::Comma; break;
          case ':': t.kind = Tok::Colon; break;
          case ';': t.kind = Tok::Semi; break;
          case '-':
            if (n != '>') throw SpecError("unexpected '-'", line_, col_);
            t.kind = Tok::Arrow;
            len = 2;
            break;
          case '<':
            t.kind = n == '=' ? Tok::Le : Tok::Lt;
            len = n == '=' ? 2 : 1;
            break;
          case '>':
            t.kind = n == '=' ? Tok::Ge : Tok::Gt;
            len = n == '=' ? 2 : 1;
            break;
          default: throw SpecError(std::string("unexpected character '") + c + "'", line_, col_);
        }
        t.text = std::string(src_.substr(pos_, len));
        for (int i = 0; i < len; ++i) advance();
      }
      out.push_back(std::move(t));
    }
  }

private:
  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else if ((static_cast<unsigned char>(src_[pos_]) & 0xC0) != 0x80) {
      ++col_;
    }
    ++pos_;
  }

  void skip_space() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  void lex_number(Token& t) {
    const std::size_t start = pos_;
    if (src_[pos_] == '-') advance();
    while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.')) advance();
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      advance();
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) advance();
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
    }
    t.kind = Tok::Number;
    t.text = std::string(src_.substr(start, pos_ - start));
    const char* first = t.text.data();
    const char* last = first + t.text.size();
    auto res = std::from_chars(first, last, t.number);
    if (res.ec != std::errc() || res.ptr != last || !std::isfinite(t.number))
      throw SpecError("malformed number '" + t.text + "'", t.line, t.column);
  }

  void lex_string(Token& t) {
    advance();
    std::string s;
    for (;;) {
      if (pos_ >= src_.size()) throw SpecError("unterminated string", t.line, t.column);
      const char c = src_[pos_];
      if (c == '"') {
        advance();
        break;
      }
      if (c == '\\') {
        advance();
        if (pos_ >= src_.size()) throw SpecError("unterminated string", t.line, t.column);
        const char e = src_[pos_];
        s += e == 'n' ? '\n' : e;
        advance();
        continue;
      }
      s += c;
      advance();
    }
    t.kind = Tok::String;
    t.text = std::move(s);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

inline bool is_keyword(const std::string& s) {
  static const std::set<std::string> kw{"rule", "doc", "not", "and", "or", "G", "F", "P"};
  return kw.count(s) > 0;
}

class Parser {
public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  SpecFile spec() {
    SpecFile out;
    std::set<std::string> ids;
    if (peek().kind == Tok::End) fail(peek(), "expected 'rule'");
    while (peek().kind != Tok::End) {
      const Token& kw = peek();
      Rule r = rule();
      if (!ids.insert(r.id).second) fail(kw, "duplicate rule id '" + r.id + "'");
      out.rules.push_back(std::move(r));
    }
    return out;
  }

  FormulaPtr whole_formula() {
    FormulaPtr f = formula(true);
    expect(Tok::End, "end of input");
    return f;
  }

private:
  Rule rule() {
    const Token& kw = next();
    if (kw.kind != Tok::Ident || kw.text != "rule") fail(kw, "expected 'rule'");
    const Token& id = next();
    if (id.kind != Tok::Ident || is_keyword(id.text)) fail(id, "expected rule identifier");
    expect(Tok::Colon, "':'");
    Rule r{id.text, formula(true), std::nullopt};
    if (peek().kind == Tok::Ident && peek().text == "doc") {
      next();
      const Token& s = next();
      if (s.kind != Tok::String) fail(s, "expected string after 'doc'");
      r.doc = s.text;
    }
    expect(Tok::Semi, "';'");
    return r;
  }

  // `top` is true only for the outermost position of a rule, where an
  // unbracketed G denotes the whole stream.
  FormulaPtr formula(bool top = false) {
    FormulaPtr lhs = disj(top);
    if (peek().kind == Tok::Arrow) {
      reject_stream(*lhs, next());
      return make_implies(std::move(lhs), formula());
    }
    return lhs;
  }

  FormulaPtr disj(bool top) {
    FormulaPtr f = conj(top);
    while (peek_word("or")) {
      reject_stream(*f, next());
      f = make_or(std::move(f), conj(false));
    }
    return f;
  }

  FormulaPtr conj(bool top) {
    FormulaPtr f = unary(top);
    while (peek_word("and")) {
      reject_stream(*f, next());
      f = make_and(std::move(f), unary(false));
    }
    return f;
  }

  FormulaPtr unary(bool top) {
    const Token& t = peek();
    if (t.kind == Tok::LParen) {
      next();
      FormulaPtr f = formula();
      expect(Tok::RParen, "')'");
      return f;
    }
    if (t.kind != Tok::Ident) fail(t, "expected formula");
    if (t.text == "not") {
      next();
      return make_not(unary(false));
    }
    if (t.text == "G" || t.text == "F") return temporal(top);
    if (t.text == "P") {
      const Token& kw = next();
      const auto [rho, tau] = pair();
      if (!(rho > 0.0 && rho <= 1.0)) fail(kw, "proportion outside (0,1]");
      if (!(tau > 0.0)) fail(kw, "proportion window must be positive");
      return make_prop(rho, tau, unary(false));
    }
    if (is_keyword(t.text)) fail(t, "unexpected keyword '" + t.text + "'");
    return atom();
  }

  FormulaPtr temporal(bool top) {
    const Token& kw = next();
    const bool always = kw.text == "G";
    std::optional<Interval> bound;
    if (peek().kind == Tok::LBracket) {
      const auto [lo, hi] = pair();
      if (lo < 0.0) fail(kw, "negative interval");
      if (lo > hi) fail(kw, "inverted interval");
      bound = Interval{lo, hi};
    }
    // The operand of a whole-stream G is itself at top level: `G G[0,1] x` is
    // not special, but nothing below may be unbounded.
    FormulaPtr arg = unary(false);
    if (always) {
      if (!bound || bound->hi >= kWholeStreamBound) {
        if (!top) fail(kw, "unbounded G is only allowed at rule top level");
        if (bound && bound->lo != 0.0) fail(kw, "whole-stream G must start at 0");
        return make_always_stream(std::move(arg));
      }
      return make_always(*bound, std::move(arg));
    }
    if (!bound || bound->hi >= kWholeStreamBound) fail(kw, "F requires a finite interval");
    return make_eventually(*bound, std::move(arg));
  }

  std::pair<double, double> pair() {
    expect(Tok::LBracket, "'['");
    const double a = num();
    expect(Tok::Comma, "','");
    const double b = num();
    expect(Tok::RBracket, "']'");
    return {a, b};
  }

  double num() {
    const Token& t = next();
    if (t.kind != Tok::Number) fail(t, "expected number");
    return t.number;
  }

  FormulaPtr atom() {
    const Token& id = next();
    Cmp op;
    switch (peek().kind) {
      case Tok::Lt: op = Cmp::LT; break;
      case Tok::Le: op = Cmp::LE; break;
      case Tok::Gt: op = Cmp::GT; break;
      case Tok::Ge: op = Cmp::GE; break;
      default: return make_bool(id.text);
    }
    next();
    return make_atom(id.text, op, num());
  }

  static void reject_stream(const Formula& f, const Token& at) {
    if (is_whole_stream(f)) fail(at, "unbounded G is only allowed at rule top level");
  }

  const Token& peek() const { return toks_[pos_]; }
  const Token& next() {
    const Token& t = toks_[pos_];
    if (t.kind != Tok::End) ++pos_;
    return t;
  }
  bool peek_word(const char* w) const { return peek().kind == Tok::Ident && peek().text == w; }

  void expect(Tok k, const char* what) {
    const Token& t = next();
    if (t.kind != k) fail(t, std::string("expected ") + what);
  }

  [[noreturn]] static void fail(const Token& t, const std::string& msg) {
    std::string near = t.kind == Tok::End ? "end of input" : "'" + t.text + "'";
    throw SpecError(msg + " near " + near, t.line, t.column);
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses a UTF-8 rule file. Throws SpecError with line/column.
inline SpecFile parse_spec(std::string_view text) {
  return detail::Parser(detail::Lexer(text).run()).spec();
}

/// Parses a single formula in rule-top-level position.
inline FormulaPtr parse_formula(std::string_view text) {
  return detail::Parser(detail::Lexer(text).run()).whole_formula();
}

}  // namespace stlmon
