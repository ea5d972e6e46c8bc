#pragma once

#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "activforms/ast.hpp"
#include "activforms/lexer.hpp"

namespace activforms {

struct ParseResult {
  ModelNetwork network;
  std::vector<Diagnostic> diagnostics;
  bool ok() const { return diagnostics.empty(); }
};

struct QueryParseResult {
  Query query;
  std::vector<Diagnostic> diagnostics;
  bool ok() const { return diagnostics.empty(); }
};

class Parser {
public:
  explicit Parser(std::string_view src) {
    Lexer lex(src);
    toks_ = lex.run(diags_);
  }

  ParseResult parse_document() {
    ParseResult res;
    while (!at(Tok::End)) {
      if (!top_level(res.network)) sync_to_semi();
    }
    res.diagnostics = std::move(diags_);
    return res;
  }

  QueryParseResult parse_query_text(const std::string& text) {
    QueryParseResult res;
    res.query = query_body(text);
    res.diagnostics = std::move(diags_);
    return res;
  }

  ExprPtr parse_expression_only() {
    ExprPtr e = expression();
    if (!at(Tok::End)) error("trailing input after expression");
    return e;
  }

  std::vector<Diagnostic> take_diagnostics() { return std::move(diags_); }

private:
  // -- token helpers --------------------------------------------------------
  const Token& cur() const { return toks_[i_]; }
  const Token& ahead(size_t n) const { return toks_[std::min(i_ + n, toks_.size() - 1)]; }
  bool at(Tok t) const { return cur().kind == t; }
  bool at_word(const char* w) const { return cur().kind == Tok::Ident && cur().text == w; }
  bool ahead_word(size_t n, const char* w) const {
    return ahead(n).kind == Tok::Ident && ahead(n).text == w;
  }
  Token take() { return toks_[i_ == toks_.size() - 1 ? i_ : i_++]; }
  bool accept(Tok t) {
    if (at(t)) {
      take();
      return true;
    }
    return false;
  }
  bool accept_word(const char* w) {
    if (at_word(w)) {
      take();
      return true;
    }
    return false;
  }
  void expect(Tok t, const char* what) {
    if (!accept(t)) error(std::string("expected ") + what + " but found '" + cur().text + "'");
  }
  std::string expect_ident(const char* what) {
    if (at(Tok::Ident)) return take().text;
    error(std::string("expected ") + what + " but found '" + cur().text + "'");
    return "";
  }
  void error(std::string msg) { diags_.push_back({DiagKind::SyntaxError, cur().pos, std::move(msg)}); }
  void sync_to_semi() {
    int depth = 0;
    while (!at(Tok::End)) {
      if (at(Tok::LBrace)) ++depth;
      if (at(Tok::RBrace)) {
        if (depth == 0) {
          take();
          return;
        }
        --depth;
      }
      if (at(Tok::Semi) && depth == 0) {
        take();
        return;
      }
      take();
    }
  }

  static const std::unordered_set<std::string>& type_keywords() {
    static const std::unordered_set<std::string> kw = {"int", "bool", "clock", "chan", "scalar", "void"};
    return kw;
  }
  static const std::unordered_set<std::string>& prefix_keywords() {
    static const std::unordered_set<std::string> kw = {"const", "broadcast", "urgent", "meta"};
    return kw;
  }

  bool looks_like_type_start() const {
    if (cur().kind != Tok::Ident) return false;
    if (prefix_keywords().count(cur().text) || type_keywords().count(cur().text)) return true;
    // "TypedefName ident" introduces a declaration.
    return ahead(1).kind == Tok::Ident && !reserved(ahead(1).text);
  }

  static bool reserved(const std::string& w) {
    static const std::unordered_set<std::string> kw = {
        "if", "else", "for", "while", "do", "return", "true", "false", "not", "and", "or",
        "imply", "forall", "exists", "sum", "deadlock", "typedef", "struct", "automaton",
        "location", "edge", "system", "query", "guard", "sync", "update", "weight",
        "invariant", "rate", "init", "committed"};
    return kw.count(w) > 0 || type_keywords().count(w) > 0 || prefix_keywords().count(w) > 0;
  }

  // -- top level -------------------------------------------------------------
  bool top_level(ModelNetwork& net) {
    if (at_word("typedef")) return parse_typedef(net);
    if (at_word("automaton")) return parse_automaton(net);
    if (at_word("system")) return parse_system(net);
    if (at_word("query")) return parse_query_decl(net);
    if (looks_like_type_start()) return parse_decl_or_function(net.globals, &net.functions);
    error("expected declaration, automaton, system, or query");
    return false;
  }

  bool parse_typedef(ModelNetwork& net) {
    SourcePos pos = cur().pos;
    take(); // typedef
    if (!accept_word("struct")) {
      error("expected 'struct' after 'typedef'");
      return false;
    }
    expect(Tok::LBrace, "'{'");
    TypedefDecl td;
    td.pos = pos;
    while (!at(Tok::RBrace) && !at(Tok::End)) {
      std::vector<VarDecl> fields;
      if (!parse_var_decl_line(fields)) return false;
      for (auto& f : fields) td.fields.push_back(std::move(f));
    }
    expect(Tok::RBrace, "'}'");
    td.name = expect_ident("type name");
    expect(Tok::Semi, "';'");
    net.typedefs.push_back(std::move(td));
    return true;
  }

  TypeExpr parse_type_prefix_and_base() {
    TypeExpr t;
    t.pos = cur().pos;
    for (;;) {
      if (accept_word("const")) t.is_const = true;
      else if (accept_word("broadcast")) t.broadcast = true;
      else if (accept_word("urgent")) t.urgent = true;
      else if (accept_word("meta")) t.meta = true;
      else break;
    }
    t.base = expect_ident("type name");
    if (t.base == "int" && at(Tok::LBracket)) {
      take();
      t.range_lo = expression();
      expect(Tok::Comma, "','");
      t.range_hi = expression();
      expect(Tok::RBracket, "']'");
    } else if (t.base == "scalar" && at(Tok::LBracket)) {
      take();
      t.range_hi = expression();
      expect(Tok::RBracket, "']'");
    }
    return t;
  }

  // Parses "Type name dims [= init] (, name dims [= init])* ;" into decls.
  bool parse_var_decl_line(std::vector<VarDecl>& out) {
    TypeExpr base = parse_type_prefix_and_base();
    for (;;) {
      VarDecl v;
      v.pos = cur().pos;
      v.type = base.clone();
      v.name = expect_ident("variable name");
      while (at(Tok::LBracket)) {
        take();
        v.type.array_dims.push_back(expression());
        expect(Tok::RBracket, "']'");
      }
      if (accept(Tok::Assign)) parse_initializer(v);
      out.push_back(std::move(v));
      if (accept(Tok::Comma)) continue;
      expect(Tok::Semi, "';'");
      return true;
    }
  }

  void parse_initializer(VarDecl& v) {
    if (at(Tok::LBrace)) {
      v.has_init_list = true;
      flatten_init_list(v.init_list);
    } else {
      v.init = expression();
    }
  }

  void flatten_init_list(std::vector<ExprPtr>& leaves) {
    expect(Tok::LBrace, "'{'");
    if (accept(Tok::RBrace)) return;
    for (;;) {
      if (at(Tok::LBrace)) {
        flatten_init_list(leaves);
      } else {
        leaves.push_back(expression());
      }
      if (accept(Tok::Comma)) continue;
      expect(Tok::RBrace, "'}'");
      return;
    }
  }

  bool parse_decl_or_function(std::vector<VarDecl>& vars, std::vector<FunctionDecl>* funcs) {
    // Function iff: Type Ident '('
    size_t save = i_;
    TypeExpr t = parse_type_prefix_and_base();
    if (at(Tok::Ident) && ahead(1).kind == Tok::LParen && funcs) {
      FunctionDecl f;
      f.pos = t.pos;
      f.return_type = std::move(t);
      f.name = take().text;
      take(); // (
      if (!at(Tok::RParen)) {
        for (;;) {
          VarDecl p;
          p.pos = cur().pos;
          p.type = parse_type_prefix_and_base();
          p.name = expect_ident("parameter name");
          f.params.push_back(std::move(p));
          if (!accept(Tok::Comma)) break;
        }
      }
      expect(Tok::RParen, "')'");
      expect(Tok::LBrace, "'{'");
      while (!at(Tok::RBrace) && !at(Tok::End)) {
        StmtPtr s = statement();
        if (s) f.body.push_back(std::move(s));
      }
      expect(Tok::RBrace, "'}'");
      funcs->push_back(std::move(f));
      return true;
    }
    // plain declaration: rewind and reparse the whole line
    i_ = save;
    return parse_var_decl_line(vars);
  }

  // -- statements ------------------------------------------------------------
  StmtPtr statement() {
    auto s = std::make_unique<Stmt>();
    s->pos = cur().pos;
    if (accept(Tok::Semi)) {
      s->kind = Stmt::Kind::Empty;
      return s;
    }
    if (at(Tok::LBrace)) {
      take();
      s->kind = Stmt::Kind::Block;
      while (!at(Tok::RBrace) && !at(Tok::End)) {
        StmtPtr inner = statement();
        if (inner) s->body.push_back(std::move(inner));
      }
      expect(Tok::RBrace, "'}'");
      return s;
    }
    if (at_word("for")) {
      take();
      expect(Tok::LParen, "'('");
      // iteration form: for (id : Type)
      if (at(Tok::Ident) && ahead(1).kind == Tok::Colon) {
        s->kind = Stmt::Kind::Iteration;
        s->iter_var = take().text;
        take(); // :
        s->iter_type = parse_type_prefix_and_base();
        expect(Tok::RParen, "')'");
        s->loop_body = statement();
        return s;
      }
      s->kind = Stmt::Kind::For;
      s->e1 = expression();
      expect(Tok::Semi, "';'");
      s->e2 = expression();
      expect(Tok::Semi, "';'");
      s->e3 = expression();
      expect(Tok::RParen, "')'");
      s->loop_body = statement();
      return s;
    }
    if (at_word("while")) {
      take();
      s->kind = Stmt::Kind::While;
      expect(Tok::LParen, "'('");
      s->e1 = expression();
      expect(Tok::RParen, "')'");
      s->loop_body = statement();
      return s;
    }
    if (at_word("do")) {
      take();
      s->kind = Stmt::Kind::DoWhile;
      s->loop_body = statement();
      if (!accept_word("while")) error("expected 'while' in do-while");
      expect(Tok::LParen, "'('");
      s->e1 = expression();
      expect(Tok::RParen, "')'");
      expect(Tok::Semi, "';'");
      return s;
    }
    if (at_word("if")) {
      take();
      s->kind = Stmt::Kind::If;
      expect(Tok::LParen, "'('");
      s->e1 = expression();
      expect(Tok::RParen, "')'");
      s->then_branch = statement();
      if (accept_word("else")) s->else_branch = statement();
      return s;
    }
    if (at_word("return")) {
      take();
      s->kind = Stmt::Kind::Return;
      if (!at(Tok::Semi)) s->e1 = expression();
      expect(Tok::Semi, "';'");
      return s;
    }
    if (looks_like_type_start()) {
      std::vector<VarDecl> decls;
      if (!parse_var_decl_line(decls)) return nullptr;
      if (decls.size() == 1) {
        s->kind = Stmt::Kind::Decl;
        s->decl = std::move(decls[0]);
        return s;
      }
      s->kind = Stmt::Kind::Block;
      for (auto& d : decls) {
        auto ds = std::make_unique<Stmt>();
        ds->kind = Stmt::Kind::Decl;
        ds->pos = d.pos;
        ds->decl = std::move(d);
        s->body.push_back(std::move(ds));
      }
      return s;
    }
    s->kind = Stmt::Kind::Expr;
    s->e1 = expression();
    expect(Tok::Semi, "';'");
    return s;
  }

  // -- automata ---------------------------------------------------------------
  bool parse_automaton(ModelNetwork& net) {
    Automaton a;
    a.pos = cur().pos;
    take(); // automaton
    a.name = expect_ident("automaton name");
    if (accept(Tok::LParen)) {
      if (!at(Tok::RParen)) {
        for (;;) {
          VarDecl p;
          p.pos = cur().pos;
          p.type = parse_type_prefix_and_base();
          p.name = expect_ident("parameter name");
          a.params.push_back(std::move(p));
          if (!accept(Tok::Comma)) break;
        }
      }
      expect(Tok::RParen, "')'");
    }
    expect(Tok::LBrace, "'{'");
    while (!at(Tok::RBrace) && !at(Tok::End)) {
      if (at_word("location") || at_word("init") || at_word("urgent") || at_word("committed")) {
        // "urgent" may also prefix a chan declaration; locations are
        // recognized by the 'location' keyword following the prefixes.
        if (at_word("urgent") && !ahead_word(1, "location")) {
          if (!parse_decl_or_function(a.locals, &a.functions)) return false;
          continue;
        }
        if (!parse_location(a)) return false;
        continue;
      }
      if (at_word("edge")) {
        if (!parse_edge(a)) return false;
        continue;
      }
      if (looks_like_type_start()) {
        if (!parse_decl_or_function(a.locals, &a.functions)) return false;
        continue;
      }
      error("expected location, edge, or declaration in automaton body");
      return false;
    }
    expect(Tok::RBrace, "'}'");
    for (size_t i = 0; i < a.locations.size(); ++i)
      if (a.locations[i].initial && a.initial < 0) a.initial = static_cast<int>(i);
    net.automata.push_back(std::move(a));
    return true;
  }

  bool parse_location(Automaton& a) {
    Location loc;
    loc.pos = cur().pos;
    bool urgent = false, committed = false;
    for (;;) {
      if (accept_word("init")) loc.initial = true;
      else if (accept_word("urgent")) urgent = true;
      else if (accept_word("committed")) committed = true;
      else break;
    }
    if (urgent && committed)
      diags_.push_back({DiagKind::TypeError, loc.pos, "a location cannot be both urgent and committed"});
    if (committed) loc.kind = LocationKind::Committed;
    else if (urgent) loc.kind = LocationKind::Urgent;
    if (!accept_word("location")) {
      error("expected 'location'");
      return false;
    }
    loc.name = expect_ident("location name");
    if (accept(Tok::LBrace)) {
      while (!at(Tok::RBrace) && !at(Tok::End)) {
        if (accept_word("invariant")) {
          loc.invariant = expression();
          expect(Tok::Semi, "';'");
        } else if (accept_word("rate")) {
          if (at(Tok::Int)) {
            loc.exponential_rate = take().value;
          } else {
            error("expected integer rate");
          }
          expect(Tok::Semi, "';'");
        } else {
          error("expected 'invariant' or 'rate'");
          return false;
        }
      }
      expect(Tok::RBrace, "'}'");
    } else {
      expect(Tok::Semi, "';'");
    }
    if (a.location_index(loc.name) >= 0)
      diags_.push_back({DiagKind::DuplicateDeclaration, loc.pos, "duplicate location '" + loc.name + "'"});
    a.locations.push_back(std::move(loc));
    return true;
  }

  bool parse_edge(Automaton& a) {
    Edge e;
    e.pos = cur().pos;
    take(); // edge
    std::string src = expect_ident("source location");
    expect(Tok::Arrow, "'->'");
    std::string dst = expect_ident("target location");
    e.source = a.location_index(src);
    e.target = a.location_index(dst);
    if (e.source < 0)
      diags_.push_back({DiagKind::UnknownIdentifier, e.pos, "unknown source location '" + src + "'"});
    if (e.target < 0)
      diags_.push_back({DiagKind::UnknownIdentifier, e.pos, "unknown target location '" + dst + "'"});
    expect(Tok::LBrace, "'{'");
    while (!at(Tok::RBrace) && !at(Tok::End)) {
      if (accept_word("guard")) {
        e.guard = expression();
        expect(Tok::Semi, "';'");
      } else if (accept_word("sync")) {
        e.sync.channel = expect_ident("channel name");
        if (accept(Tok::LBracket)) {
          e.sync.index = expression();
          expect(Tok::RBracket, "']'");
        }
        if (accept(Tok::Not)) e.sync.kind = SyncKind::Send;
        else if (accept(Tok::Question)) e.sync.kind = SyncKind::Receive;
        else error("expected '!' or '?' after channel name");
        expect(Tok::Semi, "';'");
      } else if (accept_word("update")) {
        for (;;) {
          e.updates.push_back(expression());
          if (accept(Tok::Comma)) continue;
          break;
        }
        expect(Tok::Semi, "';'");
      } else if (accept_word("weight")) {
        e.weight = expression();
        expect(Tok::Semi, "';'");
      } else {
        error("expected guard, sync, update, or weight");
        return false;
      }
    }
    expect(Tok::RBrace, "'}'");
    a.edges.push_back(std::move(e));
    return true;
  }

  bool parse_system(ModelNetwork& net) {
    take(); // system
    for (;;) {
      InstanceDecl inst;
      inst.pos = cur().pos;
      std::string first = expect_ident("instance or automaton name");
      if (accept(Tok::Assign)) {
        inst.instance_name = first;
        inst.automaton_name = expect_ident("automaton name");
        expect(Tok::LParen, "'('");
        if (!at(Tok::RParen)) {
          for (;;) {
            inst.args.push_back(expression());
            if (!accept(Tok::Comma)) break;
          }
        }
        expect(Tok::RParen, "')'");
      } else {
        inst.instance_name = first;
        inst.automaton_name = first;
      }
      net.instances.push_back(std::move(inst));
      if (accept(Tok::Comma)) continue;
      expect(Tok::Semi, "';'");
      return true;
    }
  }

  bool parse_query_decl(ModelNetwork& net) {
    SourcePos pos = cur().pos;
    take(); // query
    std::string name;
    if (at(Tok::Ident)) name = take().text;
    if (!at(Tok::String)) {
      error("expected query string");
      return false;
    }
    std::string text = take().text;
    expect(Tok::Semi, "';'");
    Parser qp(text);
    QueryParseResult qr = qp.parse_query_text(text);
    for (auto& d : qr.diagnostics) {
      d.pos = pos;
      diags_.push_back(d);
    }
    qr.query.name = name;
    qr.query.pos = pos;
    net.queries.push_back(std::move(qr.query));
    return true;
  }

  // -- query bodies ------------------------------------------------------------
  Query query_body(const std::string& text) {
    Query q;
    q.text = text;
    q.pos = cur().pos;
    if (at_word("Pr")) {
      take();
      q.kind = Query::Kind::ProbabilityEstimation;
      expect(Tok::LBracket, "'['");
      expect(Tok::Le, "'<='");
      if (at(Tok::Int)) q.time_bound = take().value;
      else error("expected integer time bound");
      expect(Tok::RBracket, "']'");
      expect(Tok::LParen, "'('");
      expect(Tok::Lt, "'<'");
      expect(Tok::Gt, "'>'");
      q.predicate = expression();
      expect(Tok::RParen, "')'");
      if (q.time_bound <= 0) error("time bound must be positive");
      return q;
    }
    if (at_word("simulate")) {
      take();
      q.kind = Query::Kind::Simulation;
      if (at(Tok::Int)) q.runs = take().value;
      else error("expected run count");
      expect(Tok::LBracket, "'['");
      expect(Tok::Le, "'<='");
      if (at(Tok::Int)) q.time_bound = take().value;
      else error("expected integer time bound");
      expect(Tok::RBracket, "']'");
      Tok close = Tok::RParen;
      if (accept(Tok::LBrace)) close = Tok::RBrace;
      else expect(Tok::LParen, "'(' or '{'");
      for (;;) {
        q.monitors.push_back(expression());
        if (!accept(Tok::Comma)) break;
      }
      expect(close, close == Tok::RBrace ? "'}'" : "')'");
      if (q.runs <= 0) error("run count must be positive");
      if (q.time_bound <= 0) error("time bound must be positive");
      return q;
    }
    if (at_word("A") && ahead(1).kind == Tok::LBracket && ahead(2).kind == Tok::RBracket) {
      take();
      take();
      take();
      if (at_word("no") && ahead_word(1, "deadlock")) {
        take();
        take();
        q.kind = Query::Kind::DeadlockFreedom;
        return q;
      }
      q.kind = Query::Kind::Invariant;
      q.predicate = expression();
      return q;
    }
    if (at_word("E") && ahead(1).kind == Tok::Lt && ahead(2).kind == Tok::Gt) {
      take();
      take();
      take();
      q.kind = Query::Kind::Reachability;
      q.predicate = expression();
      return q;
    }
    // leads-to: expr --> expr
    q.predicate = expression();
    if (accept(Tok::LeadsTo)) {
      q.kind = Query::Kind::LeadsTo;
      q.predicate2 = expression();
      return q;
    }
    error("expected 'Pr', 'simulate', 'A[]', 'E<>', or a leads-to query");
    q.kind = Query::Kind::Invariant;
    return q;
  }

  // -- expressions ---------------------------------------------------------------
  ExprPtr expression() { return assignment(); }

  ExprPtr assignment() {
    ExprPtr lhs = ternary();
    AssignOp op;
    switch (cur().kind) {
      case Tok::Assign: op = AssignOp::Assign; break;
      case Tok::PlusAssign: op = AssignOp::Add; break;
      case Tok::MinusAssign: op = AssignOp::Sub; break;
      case Tok::StarAssign: op = AssignOp::Mul; break;
      case Tok::SlashAssign: op = AssignOp::Div; break;
      case Tok::PercentAssign: op = AssignOp::Mod; break;
      case Tok::OrAssign: op = AssignOp::BitOr; break;
      case Tok::AndAssign: op = AssignOp::BitAnd; break;
      case Tok::XorAssign: op = AssignOp::BitXor; break;
      case Tok::ShlAssign: op = AssignOp::Shl; break;
      case Tok::ShrAssign: op = AssignOp::Shr; break;
      default: return lhs;
    }
    SourcePos pos = cur().pos;
    take();
    auto e = std::make_unique<Expr>();
    e->kind = Expr::Kind::Assign;
    e->pos = pos;
    e->assign_op = op;
    e->a = std::move(lhs);
    e->b = assignment();
    return e;
  }

  ExprPtr ternary() {
    ExprPtr cond = binary(0);
    if (!at(Tok::Question)) return cond;
    SourcePos pos = cur().pos;
    take();
    auto e = std::make_unique<Expr>();
    e->kind = Expr::Kind::Ternary;
    e->pos = pos;
    e->a = std::move(cond);
    e->b = assignment();
    expect(Tok::Colon, "':'");
    e->c = assignment();
    return e;
  }

  struct OpInfo {
    BinaryOp op;
    int prec;
    bool right = false;
  };

  bool binary_op_info(OpInfo& out) const {
    switch (cur().kind) {
      case Tok::Star: out = {BinaryOp::Mul, 11}; return true;
      case Tok::Slash: out = {BinaryOp::Div, 11}; return true;
      case Tok::Percent: out = {BinaryOp::Mod, 11}; return true;
      case Tok::Plus: out = {BinaryOp::Add, 10}; return true;
      case Tok::Minus: out = {BinaryOp::Sub, 10}; return true;
      case Tok::Shl: out = {BinaryOp::Shl, 9}; return true;
      case Tok::Shr: out = {BinaryOp::Shr, 9}; return true;
      case Tok::MinOf: out = {BinaryOp::Min, 8}; return true;
      case Tok::MaxOf: out = {BinaryOp::Max, 8}; return true;
      case Tok::Lt: out = {BinaryOp::Lt, 7}; return true;
      case Tok::Le: out = {BinaryOp::Le, 7}; return true;
      case Tok::Gt: out = {BinaryOp::Gt, 7}; return true;
      case Tok::Ge: out = {BinaryOp::Ge, 7}; return true;
      case Tok::EqEq: out = {BinaryOp::Eq, 6}; return true;
      case Tok::NotEq: out = {BinaryOp::Ne, 6}; return true;
      case Tok::Amp: out = {BinaryOp::BitAnd, 5}; return true;
      case Tok::Caret: out = {BinaryOp::BitXor, 4}; return true;
      case Tok::Pipe: out = {BinaryOp::BitOr, 3}; return true;
      case Tok::AndAnd: out = {BinaryOp::And, 2}; return true;
      case Tok::OrOr: out = {BinaryOp::Or, 1}; return true;
      case Tok::Ident:
        if (cur().text == "and") { out = {BinaryOp::And, 2}; return true; }
        if (cur().text == "or") { out = {BinaryOp::Or, 1}; return true; }
        if (cur().text == "imply") { out = {BinaryOp::Imply, 0, true}; return true; }
        return false;
      default: return false;
    }
  }

  ExprPtr binary(int min_prec) {
    ExprPtr lhs = unary();
    for (;;) {
      OpInfo info;
      if (!binary_op_info(info) || info.prec < min_prec) return lhs;
      SourcePos pos = cur().pos;
      take();
      ExprPtr rhs = binary(info.right ? info.prec : info.prec + 1);
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::Binary;
      e->pos = pos;
      e->binary_op = info.op;
      e->a = std::move(lhs);
      e->b = std::move(rhs);
      lhs = std::move(e);
    }
  }

  ExprPtr unary() {
    SourcePos pos = cur().pos;
    auto mk = [&](UnaryOp op, ExprPtr inner) {
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::Unary;
      e->pos = pos;
      e->unary_op = op;
      e->a = std::move(inner);
      return e;
    };
    if (accept(Tok::Plus)) return mk(UnaryOp::Plus, unary());
    if (accept(Tok::Minus)) return mk(UnaryOp::Minus, unary());
    if (accept(Tok::Not)) return mk(UnaryOp::Not, unary());
    if (accept_word("not")) return mk(UnaryOp::Not, unary());
    if (accept(Tok::PlusPlus)) return mk(UnaryOp::PreInc, unary());
    if (accept(Tok::MinusMinus)) return mk(UnaryOp::PreDec, unary());
    return postfix();
  }

  ExprPtr postfix() {
    ExprPtr e = primary();
    for (;;) {
      SourcePos pos = cur().pos;
      if (accept(Tok::LBracket)) {
        auto idx = std::make_unique<Expr>();
        idx->kind = Expr::Kind::Index;
        idx->pos = pos;
        idx->a = std::move(e);
        idx->b = expression();
        expect(Tok::RBracket, "']'");
        e = std::move(idx);
      } else if (accept(Tok::Dot)) {
        auto fld = std::make_unique<Expr>();
        fld->kind = Expr::Kind::Field;
        fld->pos = pos;
        fld->a = std::move(e);
        fld->name = expect_ident("field name");
        e = std::move(fld);
      } else if (at(Tok::LParen)) {
        take();
        auto call = std::make_unique<Expr>();
        call->kind = Expr::Kind::Call;
        call->pos = pos;
        call->a = std::move(e);
        if (!at(Tok::RParen)) {
          for (;;) {
            call->args.push_back(expression());
            if (!accept(Tok::Comma)) break;
          }
        }
        expect(Tok::RParen, "')'");
        e = std::move(call);
      } else if (accept(Tok::PlusPlus)) {
        auto u = std::make_unique<Expr>();
        u->kind = Expr::Kind::Unary;
        u->pos = pos;
        u->unary_op = UnaryOp::PostInc;
        u->a = std::move(e);
        e = std::move(u);
      } else if (accept(Tok::MinusMinus)) {
        auto u = std::make_unique<Expr>();
        u->kind = Expr::Kind::Unary;
        u->pos = pos;
        u->unary_op = UnaryOp::PostDec;
        u->a = std::move(e);
        e = std::move(u);
      } else {
        return e;
      }
    }
  }

  ExprPtr primary() {
    SourcePos pos = cur().pos;
    if (at(Tok::Int)) {
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::IntLit;
      e->pos = pos;
      e->int_value = take().value;
      return e;
    }
    if (at_word("true") || at_word("false")) {
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::BoolLit;
      e->pos = pos;
      e->bool_value = take().text == "true";
      return e;
    }
    if (at_word("deadlock")) {
      take();
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::Deadlock;
      e->pos = pos;
      return e;
    }
    if (at_word("forall") || at_word("exists") || at_word("sum")) {
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::Quantifier;
      e->pos = pos;
      e->quant_kind = take().text;
      expect(Tok::LParen, "'('");
      e->name = expect_ident("bound variable");
      expect(Tok::Colon, "':'");
      TypeExpr t = parse_type_prefix_and_base();
      e->quant_type = t.base;
      expect(Tok::RParen, "')'");
      e->a = expression();
      return e;
    }
    if (at(Tok::Ident)) {
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::Ident;
      e->pos = pos;
      e->name = take().text;
      return e;
    }
    if (accept(Tok::LParen)) {
      ExprPtr e = expression();
      expect(Tok::RParen, "')'");
      return e;
    }
    error(std::string("expected expression but found '") + cur().text + "'");
    if (!at(Tok::End)) take();
    auto e = std::make_unique<Expr>();
    e->kind = Expr::Kind::IntLit;
    e->pos = pos;
    return e;
  }

  std::vector<Token> toks_;
  size_t i_ = 0;
  std::vector<Diagnostic> diags_;
};

/// Parses one complete model document.
inline ParseResult parse_model(std::string_view text) {
  Parser p(text);
  return p.parse_document();
}

/// Parses a verification query string.
inline QueryParseResult parse_query(const std::string& text) {
  Parser p(text);
  return p.parse_query_text(text);
}

/// Merges several parsed documents (model + stubs) into one closed network.
inline ModelNetwork compose_networks(std::vector<ModelNetwork> parts, std::vector<Diagnostic>& diags) {
  ModelNetwork out;
  std::unordered_set<std::string> global_names, automaton_names, instance_names;
  for (auto& part : parts) {
    for (auto& td : part.typedefs) {
      if (!global_names.insert(td.name).second)
        diags.push_back({DiagKind::DuplicateDeclaration, td.pos, "duplicate type '" + td.name + "'"});
      out.typedefs.push_back(std::move(td));
    }
    for (auto& g : part.globals) {
      if (!global_names.insert(g.name).second)
        diags.push_back({DiagKind::DuplicateDeclaration, g.pos, "duplicate declaration '" + g.name + "'"});
      out.globals.push_back(std::move(g));
    }
    for (auto& f : part.functions) {
      if (!global_names.insert(f.name).second)
        diags.push_back({DiagKind::DuplicateDeclaration, f.pos, "duplicate function '" + f.name + "'"});
      out.functions.push_back(std::move(f));
    }
    for (auto& a : part.automata) {
      if (!automaton_names.insert(a.name).second)
        diags.push_back({DiagKind::DuplicateDeclaration, a.pos, "duplicate automaton '" + a.name + "'"});
      out.automata.push_back(std::move(a));
    }
    for (auto& inst : part.instances) {
      if (!instance_names.insert(inst.instance_name).second)
        diags.push_back({DiagKind::DuplicateDeclaration, inst.pos,
                         "duplicate instance '" + inst.instance_name + "'"});
      out.instances.push_back(std::move(inst));
    }
    for (auto& q : part.queries) out.queries.push_back(std::move(q));
  }
  return out;
}

} // namespace activforms
