#pragma once

#include <cctype>
#include <cstdint>
#include <string>
#include <vector>

#include "activforms/diag.hpp"

namespace activforms {

enum class Tok {
  End, Ident, Int, String,
  // punctuation
  LParen, RParen, LBrace, RBrace, LBracket, RBracket,
  Comma, Semi, Colon, Dot, Question, Arrow,
  // operators
  Assign, PlusAssign, MinusAssign, StarAssign, SlashAssign, PercentAssign,
  OrAssign, AndAssign, XorAssign, ShlAssign, ShrAssign,
  Plus, Minus, Star, Slash, Percent,
  PlusPlus, MinusMinus,
  Lt, Le, Gt, Ge, EqEq, NotEq,
  AndAnd, OrOr, Not,
  Amp, Pipe, Caret, Shl, Shr,
  MinOf, MaxOf,          // <? >?
  LeadsTo,               // -->
};

struct Token {
  Tok kind;
  std::string text;
  int64_t value = 0;
  SourcePos pos;
};

class Lexer {
public:
  explicit Lexer(std::string_view src) : src_(src) {}

  /// Tokenizes the whole input; lexical problems are reported as diagnostics
  /// and scanning continues at the next character.
  std::vector<Token> run(std::vector<Diagnostic>& diags) {
    std::vector<Token> out;
    while (true) {
      skip_space_and_comments(diags);
      SourcePos pos{line_, col_};
      if (at_end()) {
        out.push_back({Tok::End, "", 0, pos});
        break;
      }
      char c = peek();
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::string id;
        while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_'))
          id.push_back(take());
        out.push_back({Tok::Ident, id, 0, pos});
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(c))) {
        int64_t v = 0;
        std::string text;
        while (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) {
          char d = take();
          text.push_back(d);
          v = v * 10 + (d - '0');
        }
        out.push_back({Tok::Int, text, v, pos});
        continue;
      }
      if (c == '"') {
        take();
        std::string s;
        while (!at_end() && peek() != '"') {
          char d = take();
          if (d == '\\' && !at_end()) {
            char e = take();
            s.push_back(e == 'n' ? '\n' : e);
          } else {
            s.push_back(d);
          }
        }
        if (at_end()) {
          diags.push_back({DiagKind::SyntaxError, pos, "unterminated string literal"});
        } else {
          take();
        }
        out.push_back({Tok::String, s, 0, pos});
        continue;
      }
      out.push_back(punct(diags, pos));
    }
    return out;
  }

private:
  bool at_end() const { return i_ >= src_.size(); }
  char peek(size_t ahead = 0) const { return i_ + ahead < src_.size() ? src_[i_ + ahead] : '\0'; }
  char take() {
    char c = src_[i_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  void skip_space_and_comments(std::vector<Diagnostic>& diags) {
    while (!at_end()) {
      char c = peek();
      if (std::isspace(static_cast<unsigned char>(c))) {
        take();
      } else if (c == '/' && peek(1) == '/') {
        while (!at_end() && peek() != '\n') take();
      } else if (c == '/' && peek(1) == '*') {
        SourcePos pos{line_, col_};
        take();
        take();
        while (!at_end() && !(peek() == '*' && peek(1) == '/')) take();
        if (at_end()) {
          diags.push_back({DiagKind::SyntaxError, pos, "unterminated block comment"});
          return;
        }
        take();
        take();
      } else {
        return;
      }
    }
  }

  Token punct(std::vector<Diagnostic>& diags, SourcePos pos) {
    auto two = [&](char a, char b) { return peek() == a && peek(1) == b; };
    auto emit2 = [&](Tok t) {
      std::string s;
      s.push_back(take());
      s.push_back(take());
      return Token{t, s, 0, pos};
    };
    auto emit3 = [&](Tok t) {
      std::string s;
      s.push_back(take());
      s.push_back(take());
      s.push_back(take());
      return Token{t, s, 0, pos};
    };
    auto emit1 = [&](Tok t) {
      std::string s(1, take());
      return Token{t, s, 0, pos};
    };

    if (peek() == '-' && peek(1) == '-' && peek(2) == '>') return emit3(Tok::LeadsTo);
    if (two('-', '>')) return emit2(Tok::Arrow);
    if (two('+', '+')) return emit2(Tok::PlusPlus);
    if (two('-', '-')) return emit2(Tok::MinusMinus);
    if (two('+', '=')) return emit2(Tok::PlusAssign);
    if (two('-', '=')) return emit2(Tok::MinusAssign);
    if (two('*', '=')) return emit2(Tok::StarAssign);
    if (two('/', '=')) return emit2(Tok::SlashAssign);
    if (two('%', '=')) return emit2(Tok::PercentAssign);
    if (two('|', '=')) return emit2(Tok::OrAssign);
    if (two('&', '=')) return emit2(Tok::AndAssign);
    if (two('^', '=')) return emit2(Tok::XorAssign);
    if (peek() == '<' && peek(1) == '<' && peek(2) == '=') return emit3(Tok::ShlAssign);
    if (peek() == '>' && peek(1) == '>' && peek(2) == '=') return emit3(Tok::ShrAssign);
    if (two('<', '<')) return emit2(Tok::Shl);
    if (two('>', '>')) return emit2(Tok::Shr);
    if (two('<', '?')) return emit2(Tok::MinOf);
    if (two('>', '?')) return emit2(Tok::MaxOf);
    if (two('<', '=')) return emit2(Tok::Le);
    if (two('>', '=')) return emit2(Tok::Ge);
    if (two('=', '=')) return emit2(Tok::EqEq);
    if (two('!', '=')) return emit2(Tok::NotEq);
    if (two('&', '&')) return emit2(Tok::AndAnd);
    if (two('|', '|')) return emit2(Tok::OrOr);

    switch (peek()) {
      case '(': return emit1(Tok::LParen);
      case ')': return emit1(Tok::RParen);
      case '{': return emit1(Tok::LBrace);
      case '}': return emit1(Tok::RBrace);
      case '[': return emit1(Tok::LBracket);
      case ']': return emit1(Tok::RBracket);
      case ',': return emit1(Tok::Comma);
      case ';': return emit1(Tok::Semi);
      case ':': return emit1(Tok::Colon);
      case '.': return emit1(Tok::Dot);
      case '?': return emit1(Tok::Question);
      case '=': return emit1(Tok::Assign);
      case '+': return emit1(Tok::Plus);
      case '-': return emit1(Tok::Minus);
      case '*': return emit1(Tok::Star);
      case '/': return emit1(Tok::Slash);
      case '%': return emit1(Tok::Percent);
      case '<': return emit1(Tok::Lt);
      case '>': return emit1(Tok::Gt);
      case '!': return emit1(Tok::Not);
      case '&': return emit1(Tok::Amp);
      case '|': return emit1(Tok::Pipe);
      case '^': return emit1(Tok::Caret);
      default: {
        char c = take();
        diags.push_back({DiagKind::SyntaxError, pos, std::string("unexpected character '") + c + "'"});
        return Token{Tok::End, std::string(1, c), 0, pos};
      }
    }
  }

  std::string_view src_;
  size_t i_ = 0;
  int line_ = 1;
  int col_ = 1;
};

} // namespace activforms
