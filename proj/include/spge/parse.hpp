#pragma once

// Surface syntax.
//
//   program  :=  header? command
//   header   :=  '#params:' ident (',' ident)*
//   command  :=  stmt (';' stmt)*
//   stmt     :=  'skip'
//             |  x ':=' expr
//             |  x ':=' 'sam' '(' nameexpr ',' dist ',' lambda ')'
//             |  'obs' '(' dist ',' constexpr ')'
//             |  'if' bexpr '{' command '}' 'else' '{' command '}'
//             |  'while' bexpr '{' command '}'
//   nameexpr :=  'name' '(' tag (',' expr)? ')' | tag        (tag: ident or "string")
//   dist     :=  'N' '(' expr ',' expr ')'
//   lambda   :=  ('lam' | 'λ') y '.' expr
//   bexpr    :=  conjunction of comparisons; 'true', 'false', '!'/'¬',
//                '&&'/'∧', '<', '<=', '>', '>=' (the latter three desugar
//                onto '<' and negation), parentheses
//   expr     :=  arithmetic over numbers, variables, and the built-in
//                operators (exp, log, sqrt, relu, normal_pdf, floor, step,
//                gxy); '×' is accepted for '*'
//
// '//' starts a line comment. A bare tag in name position abbreviates
// name(tag, 0). Identifiers may contain non-ASCII letters, so θ1 works.
// Lambda binders are renamed to fresh internal ids ('$k') during parsing,
// which makes later substitution capture-free.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spge/ast.hpp"

namespace spge {

struct ParseError : std::runtime_error {
  int line, col;
  ParseError(const std::string& msg, int line_, int col_)
      : std::runtime_error("parse error at " + std::to_string(line_) + ":" +
                           std::to_string(col_) + ": " + msg),
        line(line_),
        col(col_) {}
};

// A parsed program: the command plus the parameters declared in its header.
struct Program {
  CmdPtr body;
  std::vector<std::string> params;
};

namespace detail {

enum class Tok : std::uint8_t {
  Ident, Number, String,
  KwSkip, KwIf, KwElse, KwWhile, KwTrue, KwFalse, KwSam, KwObs, KwName, KwLam, KwDist,
  Assign, Semi, LBrace, RBrace, LParen, RParen, Comma, Dot,
  Plus, Minus, Star, Slash, Lt, Le, Gt, Ge, AndAnd, Bang,
  Eof,
};

struct Token {
  Tok kind;
  std::string text;
  double number = 0.0;
  int line = 1, col = 1;
};

inline bool is_ident_start(unsigned char c) {
  return std::isalpha(c) || c == '_' || c >= 0x80;
}
inline bool is_ident_char(unsigned char c) {
  return std::isalnum(c) || c == '_' || c >= 0x80;
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space_and_comments();
      Token t;
      t.line = line_;
      t.col = col_;
      if (pos_ >= src_.size()) {
        t.kind = Tok::Eof;
        out.push_back(t);
        return out;
      }
      const unsigned char c = src_[pos_];
      if (match("λ")) { t.kind = Tok::KwLam; }
      else if (match("∧")) { t.kind = Tok::AndAnd; }
      else if (match("¬")) { t.kind = Tok::Bang; }
      else if (match("≤")) { t.kind = Tok::Le; }
      else if (match("≥")) { t.kind = Tok::Ge; }
      else if (match("×")) { t.kind = Tok::Star; }
      else if (std::isdigit(c) || (c == '.' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
        lex_number(t);
      } else if (c == '"') {
        lex_string(t);
      } else if (is_ident_start(c)) {
        lex_ident(t);
      } else {
        lex_symbol(t);
      }
      out.push_back(std::move(t));
    }
  }

 private:
  void advance(std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      if (src_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
      ++pos_;
    }
  }

  bool match(std::string_view s) {
    if (src_.substr(pos_, s.size()) != s) return false;
    advance(s.size());
    return true;
  }

  void skip_space_and_comments() {
    for (;;) {
      while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) advance(1);
      if (pos_ + 1 < src_.size() && src_[pos_] == '/' && src_[pos_ + 1] == '/') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance(1);
        continue;
      }
      return;
    }
  }

  void lex_number(Token& t) {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance(1);
    if (pos_ < src_.size() && src_[pos_] == '.' && pos_ + 1 < src_.size() &&
        std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]))) {
      advance(1);
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance(1);
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t look = pos_ + 1;
      if (look < src_.size() && (src_[look] == '+' || src_[look] == '-')) ++look;
      if (look < src_.size() && std::isdigit(static_cast<unsigned char>(src_[look]))) {
        advance(look - pos_);
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance(1);
      }
    }
    t.kind = Tok::Number;
    t.text = std::string(src_.substr(start, pos_ - start));
    try {
      t.number = std::stod(t.text);
    } catch (const std::exception&) {
      throw ParseError("numeric literal out of range: " + t.text, t.line, t.col);
    }
  }

  void lex_string(Token& t) {
    advance(1);
    const std::size_t start = pos_;
    while (pos_ < src_.size() && src_[pos_] != '"' && src_[pos_] != '\n') advance(1);
    if (pos_ >= src_.size() || src_[pos_] != '"') {
      throw ParseError("unterminated string literal", t.line, t.col);
    }
    t.kind = Tok::String;
    t.text = std::string(src_.substr(start, pos_ - start));
    advance(1);
  }

  void lex_ident(Token& t) {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && is_ident_char(static_cast<unsigned char>(src_[pos_]))) advance(1);
    t.text = std::string(src_.substr(start, pos_ - start));
    if (t.text == "skip") t.kind = Tok::KwSkip;
    else if (t.text == "if") t.kind = Tok::KwIf;
    else if (t.text == "else") t.kind = Tok::KwElse;
    else if (t.text == "while") t.kind = Tok::KwWhile;
    else if (t.text == "true") t.kind = Tok::KwTrue;
    else if (t.text == "false") t.kind = Tok::KwFalse;
    else if (t.text == "sam") t.kind = Tok::KwSam;
    else if (t.text == "obs") t.kind = Tok::KwObs;
    else if (t.text == "name") t.kind = Tok::KwName;
    else if (t.text == "lam") t.kind = Tok::KwLam;
    else if (t.text == "N") t.kind = Tok::KwDist;
    else t.kind = Tok::Ident;
  }

  void lex_symbol(Token& t) {
    auto two = [&](char a, char b) {
      return pos_ + 1 < src_.size() && src_[pos_] == a && src_[pos_ + 1] == b;
    };
    if (two(':', '=')) { t.kind = Tok::Assign; advance(2); return; }
    if (two('<', '=')) { t.kind = Tok::Le; advance(2); return; }
    if (two('>', '=')) { t.kind = Tok::Ge; advance(2); return; }
    if (two('&', '&')) { t.kind = Tok::AndAnd; advance(2); return; }
    switch (src_[pos_]) {
      case ';': t.kind = Tok::Semi; break;
      case '{': t.kind = Tok::LBrace; break;
      case '}': t.kind = Tok::RBrace; break;
      case '(': t.kind = Tok::LParen; break;
      case ')': t.kind = Tok::RParen; break;
      case ',': t.kind = Tok::Comma; break;
      case '.': t.kind = Tok::Dot; break;
      case '+': t.kind = Tok::Plus; break;
      case '-': t.kind = Tok::Minus; break;
      case '*': t.kind = Tok::Star; break;
      case '/': t.kind = Tok::Slash; break;
      case '<': t.kind = Tok::Lt; break;
      case '>': t.kind = Tok::Gt; break;
      case '!': t.kind = Tok::Bang; break;
      default:
        throw ParseError("unexpected character '" + std::string(1, src_[pos_]) + "'", t.line, t.col);
    }
    advance(1);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1, col_ = 1;
};

class Parser {
 public:
  explicit Parser(std::string_view src) : tokens_(Lexer(src).run()) {}

  CmdPtr command_eof() {
    CmdPtr c = command();
    expect(Tok::Eof, "end of input");
    return c;
  }

  ExprPtr expr_eof() {
    ExprPtr e = expr();
    expect(Tok::Eof, "end of input");
    return e;
  }

  BoolPtr bexpr_eof() {
    BoolPtr b = bexpr();
    expect(Tok::Eof, "end of input");
    return b;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    const std::size_t i = pos_ + ahead;
    return tokens_[i < tokens_.size() ? i : tokens_.size() - 1];
  }
  Token take() { return tokens_[pos_ < tokens_.size() - 1 ? pos_++ : pos_]; }
  bool accept(Tok k) {
    if (peek().kind != k) return false;
    take();
    return true;
  }
  Token expect(Tok k, const std::string& what) {
    if (peek().kind != k) fail("expected " + what);
    return take();
  }
  [[noreturn]] void fail(const std::string& msg) const {
    const Token& t = peek();
    throw ParseError(msg + (t.kind == Tok::Eof ? " (got end of input)" : " (got '" + t.text + "')"),
                     t.line, t.col);
  }

  CmdPtr command() {
    CmdPtr c = statement();
    while (accept(Tok::Semi)) {
      if (peek().kind == Tok::RBrace || peek().kind == Tok::Eof) break;  // trailing ';'
      c = mk_seq(c, statement());
    }
    return c;
  }

  CmdPtr block() {
    expect(Tok::LBrace, "'{'");
    if (accept(Tok::RBrace)) return mk_skip();
    CmdPtr c = command();
    expect(Tok::RBrace, "'}'");
    return c;
  }

  CmdPtr statement() {
    switch (peek().kind) {
      case Tok::KwSkip: take(); return mk_skip();
      case Tok::KwIf: {
        take();
        BoolPtr cond = bexpr();
        CmdPtr then_branch = block();
        expect(Tok::KwElse, "'else'");
        return mk_if(std::move(cond), std::move(then_branch), block());
      }
      case Tok::KwWhile: {
        take();
        BoolPtr cond = bexpr();
        return mk_while(std::move(cond), block());
      }
      case Tok::KwObs: {
        take();
        expect(Tok::LParen, "'('");
        DistExpr d = dist();
        expect(Tok::Comma, "','");
        const Token at = peek();
        ExprPtr v = expr();
        expect(Tok::RParen, "')'");
        double folded;
        if (!fold_constant(*v, folded)) {
          throw ParseError("observed value must be a constant", at.line, at.col);
        }
        return mk_observe(std::move(d), folded);
      }
      case Tok::Ident: {
        const Token x = take();
        expect(Tok::Assign, "':='");
        if (peek().kind == Tok::KwSam) {
          take();
          expect(Tok::LParen, "'('");
          NameExpr n = name_expr();
          expect(Tok::Comma, "','");
          DistExpr d = dist();
          expect(Tok::Comma, "','");
          Lambda l = lambda();
          expect(Tok::RParen, "')'");
          return mk_sample(Var::param(x.text), std::move(n), std::move(d), std::move(l));
        }
        return mk_assign(Var::param(x.text), expr());
      }
      default: fail("expected a statement");
    }
  }

  NameExpr name_expr() {
    if (peek().kind == Tok::Ident || peek().kind == Tok::String) {
      return NameExpr{take().text, mk_const(0.0)};
    }
    expect(Tok::KwName, "a name");
    expect(Tok::LParen, "'('");
    if (peek().kind != Tok::Ident && peek().kind != Tok::String) fail("expected a name tag");
    std::string tag = take().text;
    ExprPtr idx = accept(Tok::Comma) ? expr() : mk_const(0.0);
    expect(Tok::RParen, "')'");
    return NameExpr{std::move(tag), std::move(idx)};
  }

  DistExpr dist() {
    expect(Tok::KwDist, "a distribution");
    expect(Tok::LParen, "'('");
    ExprPtr mean = expr();
    expect(Tok::Comma, "','");
    ExprPtr variance = expr();
    expect(Tok::RParen, "')'");
    return DistExpr{std::move(mean), std::move(variance)};
  }

  Lambda lambda() {
    expect(Tok::KwLam, "'lam'");
    const Token y = expect(Tok::Ident, "a binder");
    expect(Tok::Dot, "'.'");
    const Var fresh = Var::param("$" + std::to_string(binder_counter_++));
    binders_.push_back({y.text, fresh});
    ExprPtr body = expr();
    binders_.pop_back();
    return Lambda{fresh, std::move(body)};
  }

  BoolPtr bexpr() {
    BoolPtr b = bool_term();
    while (accept(Tok::AndAnd)) b = mk_and(b, bool_term());
    return b;
  }

  BoolPtr bool_term() {
    if (accept(Tok::Bang)) return mk_not(bool_term());
    return bool_atom();
  }

  BoolPtr bool_atom() {
    if (accept(Tok::KwTrue)) return mk_true();
    if (accept(Tok::KwFalse)) return mk_not(mk_true());
    if (peek().kind == Tok::LParen) {
      // Either a parenthesised boolean or the left operand of a comparison.
      const std::size_t save = pos_;
      take();
      try {
        BoolPtr inner = bexpr();
        expect(Tok::RParen, "')'");
        return inner;
      } catch (const ParseError&) {
        pos_ = save;
      }
    }
    return comparison();
  }

  BoolPtr comparison() {
    ExprPtr lhs = expr();
    switch (peek().kind) {
      case Tok::Lt: take(); return mk_less(std::move(lhs), expr());
      case Tok::Gt: take(); return mk_less(expr(), std::move(lhs));
      case Tok::Le: take(); return mk_not(mk_less(expr(), std::move(lhs)));
      case Tok::Ge: take(); return mk_not(mk_less(std::move(lhs), expr()));
      default: fail("expected a comparison");
    }
  }

  ExprPtr expr() {
    ExprPtr e = term();
    for (;;) {
      if (accept(Tok::Plus)) e = mk_call(Op::Add, {e, term()});
      else if (accept(Tok::Minus)) e = mk_call(Op::Sub, {e, term()});
      else return e;
    }
  }

  ExprPtr term() {
    ExprPtr e = factor();
    for (;;) {
      if (accept(Tok::Star)) e = mk_call(Op::Mul, {e, factor()});
      else if (accept(Tok::Slash)) e = mk_call(Op::Div, {e, factor()});
      else return e;
    }
  }

  ExprPtr factor() {
    if (accept(Tok::Minus)) {
      // A minus directly on a numeric literal is a negative literal; unary
      // negation of anything else stays a Neg node.
      if (peek().kind == Tok::Number) return mk_const(-take().number);
      return mk_call(Op::Neg, {factor()});
    }
    return atom();
  }

  ExprPtr atom() {
    const Token t = peek();
    if (accept(Tok::Number)) return mk_const(t.number);
    if (accept(Tok::LParen)) {
      ExprPtr e = expr();
      expect(Tok::RParen, "')'");
      return e;
    }
    if (peek().kind == Tok::Ident) {
      take();
      if (peek().kind == Tok::LParen) {
        const OpInfo* info = find_op(t.text);
        if (info == nullptr) {
          throw ParseError("unknown operator '" + t.text + "'", t.line, t.col);
        }
        take();
        std::vector<ExprPtr> args;
        if (peek().kind != Tok::RParen) {
          args.push_back(expr());
          while (accept(Tok::Comma)) args.push_back(expr());
        }
        expect(Tok::RParen, "')'");
        if (static_cast<int>(args.size()) != info->arity) {
          throw ParseError("operator '" + t.text + "' expects " + std::to_string(info->arity) +
                               " argument(s)",
                           t.line, t.col);
        }
        return mk_call(info->op, std::move(args));
      }
      // Innermost matching binder, else a program variable.
      for (auto it = binders_.rbegin(); it != binders_.rend(); ++it) {
        if (it->first == t.text) return mk_ref(it->second);
      }
      return mk_ref(Var::param(t.text));
    }
    fail("expected an expression");
  }

  static bool fold_constant(const Expr& e, double& out) {
    switch (e.kind) {
      case Expr::Kind::Const: out = e.value; return true;
      case Expr::Kind::Ref: return false;
      case Expr::Kind::Call: {
        double a[3];
        for (std::size_t i = 0; i < e.args.size(); ++i) {
          if (!fold_constant(*e.args[i], a[i])) return false;
        }
        out = op_value(e.op->op, a);
        return true;
      }
    }
    return false;
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  int binder_counter_ = 0;
  std::vector<std::pair<std::string, Var>> binders_;
};

}  // namespace detail

// Parses a full program file: optional '#params:' header, then one command.
inline Program parse_program(std::string_view src) {
  Program out;
  // The header is line-oriented; find it before tokenising.
  std::size_t pos = 0;
  for (;;) {
    while (pos < src.size() && (src[pos] == ' ' || src[pos] == '\t' || src[pos] == '\r' || src[pos] == '\n')) ++pos;
    if (src.substr(pos, 2) == "//") {
      while (pos < src.size() && src[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  if (src.substr(pos, 8) == "#params:") {
    std::size_t eol = src.find('\n', pos);
    if (eol == std::string_view::npos) eol = src.size();
    std::string header(src.substr(pos + 8, eol - pos - 8));
    std::string current;
    auto flush = [&]() {
      if (!current.empty()) {
        out.params.push_back(current);
        current.clear();
      }
    };
    for (const char ch : header) {
      if (ch == ',' || ch == ' ' || ch == '\t' || ch == '\r') flush();
      else current.push_back(ch);
    }
    flush();
    src = src.substr(eol);
  }
  out.body = detail::Parser(src).command_eof();
  return out;
}

inline Program parse_program_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open program file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_program(buf.str());
}

// Parses a bare command (no header), e.g. in tests.
inline CmdPtr parse_command(std::string_view src) { return detail::Parser(src).command_eof(); }

inline ExprPtr parse_expr(std::string_view src) { return detail::Parser(src).expr_eof(); }

inline BoolPtr parse_bexpr(std::string_view src) { return detail::Parser(src).bexpr_eof(); }

}  // namespace spge
