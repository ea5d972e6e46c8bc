#pragma once

#include <sstream>
#include <string>

#include "activforms/ast.hpp"

namespace activforms {

class Printer {
public:
  std::string print(const ModelNetwork& net) {
    out_.str("");
    for (const auto& td : net.typedefs) {
      line("typedef struct {");
      indent_++;
      for (const auto& f : td.fields) line(decl_text(f) + ";");
      indent_--;
      line("} " + td.name + ";");
    }
    for (const auto& g : net.globals) line(decl_text(g) + ";");
    for (const auto& f : net.functions) print_function(f);
    for (const auto& a : net.automata) print_automaton(a);
    if (!net.instances.empty()) {
      std::string s = "system ";
      for (size_t i = 0; i < net.instances.size(); ++i) {
        const auto& inst = net.instances[i];
        if (i) s += ", ";
        if (inst.instance_name == inst.automaton_name && inst.args.empty()) {
          s += inst.instance_name;
        } else {
          s += inst.instance_name + " = " + inst.automaton_name + "(";
          for (size_t j = 0; j < inst.args.size(); ++j) {
            if (j) s += ", ";
            s += expr(*inst.args[j]);
          }
          s += ")";
        }
      }
      line(s + ";");
    }
    for (const auto& q : net.queries) {
      std::string s = "query ";
      if (!q.name.empty()) s += q.name + " ";
      s += "\"" + q.text + "\";";
      line(s);
    }
    return out_.str();
  }

  std::string expr(const Expr& e) { return expr_prec(e, 0); }

private:
  void print_function(const FunctionDecl& f) {
    std::string head = type_text(f.return_type) + " " + f.name + "(";
    for (size_t i = 0; i < f.params.size(); ++i) {
      if (i) head += ", ";
      head += decl_text(f.params[i]);
    }
    line(head + ") {");
    indent_++;
    for (const auto& s : f.body) print_stmt(*s);
    indent_--;
    line("}");
  }

  void print_automaton(const Automaton& a) {
    std::string head = "automaton " + a.name;
    if (!a.params.empty()) {
      head += "(";
      for (size_t i = 0; i < a.params.size(); ++i) {
        if (i) head += ", ";
        head += decl_text(a.params[i]);
      }
      head += ")";
    }
    line(head + " {");
    indent_++;
    for (const auto& v : a.locals) line(decl_text(v) + ";");
    for (const auto& f : a.functions) print_function(f);
    for (const auto& loc : a.locations) {
      std::string s;
      if (loc.initial) s += "init ";
      if (loc.kind == LocationKind::Urgent) s += "urgent ";
      if (loc.kind == LocationKind::Committed) s += "committed ";
      s += "location " + loc.name;
      if (loc.invariant || loc.exponential_rate) {
        line(s + " {");
        indent_++;
        if (loc.invariant) line("invariant " + expr(*loc.invariant) + ";");
        if (loc.exponential_rate) line("rate " + std::to_string(*loc.exponential_rate) + ";");
        indent_--;
        line("}");
      } else {
        line(s + ";");
      }
    }
    for (const auto& e : a.edges) {
      line("edge " + a.locations[e.source].name + " -> " + a.locations[e.target].name + " {");
      indent_++;
      if (e.guard) line("guard " + expr(*e.guard) + ";");
      if (e.sync.kind != SyncKind::None) {
        std::string s = "sync " + e.sync.channel;
        if (e.sync.index) s += "[" + expr(*e.sync.index) + "]";
        s += e.sync.kind == SyncKind::Send ? "!" : "?";
        line(s + ";");
      }
      if (!e.updates.empty()) {
        std::string s = "update ";
        for (size_t i = 0; i < e.updates.size(); ++i) {
          if (i) s += ", ";
          s += expr(*e.updates[i]);
        }
        line(s + ";");
      }
      if (e.weight) line("weight " + expr(*e.weight) + ";");
      indent_--;
      line("}");
    }
    indent_--;
    line("}");
  }

  void print_stmt(const Stmt& s) {
    switch (s.kind) {
      case Stmt::Kind::Empty: line(";"); break;
      case Stmt::Kind::Expr: line(expr(*s.e1) + ";"); break;
      case Stmt::Kind::Decl: line(decl_text(s.decl) + ";"); break;
      case Stmt::Kind::Block:
        line("{");
        indent_++;
        for (const auto& b : s.body) print_stmt(*b);
        indent_--;
        line("}");
        break;
      case Stmt::Kind::For:
        line("for (" + expr(*s.e1) + "; " + expr(*s.e2) + "; " + expr(*s.e3) + ")");
        print_body(*s.loop_body);
        break;
      case Stmt::Kind::Iteration:
        line("for (" + s.iter_var + " : " + type_text(s.iter_type) + ")");
        print_body(*s.loop_body);
        break;
      case Stmt::Kind::While:
        line("while (" + expr(*s.e1) + ")");
        print_body(*s.loop_body);
        break;
      case Stmt::Kind::DoWhile:
        line("do");
        print_body(*s.loop_body);
        line("while (" + expr(*s.e1) + ");");
        break;
      case Stmt::Kind::If:
        line("if (" + expr(*s.e1) + ")");
        print_body(*s.then_branch);
        if (s.else_branch) {
          line("else");
          print_body(*s.else_branch);
        }
        break;
      case Stmt::Kind::Return:
        line(s.e1 ? "return " + expr(*s.e1) + ";" : "return;");
        break;
    }
  }

  void print_body(const Stmt& s) {
    indent_++;
    print_stmt(s);
    indent_--;
  }

  std::string type_text(const TypeExpr& t) {
    std::string s;
    if (t.is_const) s += "const ";
    if (t.urgent) s += "urgent ";
    if (t.broadcast) s += "broadcast ";
    if (t.meta) s += "meta ";
    s += t.base;
    if (t.range_lo && t.range_hi) s += "[" + expr(*t.range_lo) + "," + expr(*t.range_hi) + "]";
    else if (t.range_hi) s += "[" + expr(*t.range_hi) + "]";
    return s;
  }

  std::string decl_text(const VarDecl& v) {
    std::string s = type_text(v.type) + " " + v.name;
    for (const auto& d : v.type.array_dims) s += "[" + expr(*d) + "]";
    if (v.init) s += " = " + expr(*v.init);
    if (v.has_init_list) {
      s += " = { ";
      for (size_t i = 0; i < v.init_list.size(); ++i) {
        if (i) s += ", ";
        s += expr(*v.init_list[i]);
      }
      s += " }";
    }
    return s;
  }

  static int binop_prec(BinaryOp op) {
    switch (op) {
      case BinaryOp::Mul: case BinaryOp::Div: case BinaryOp::Mod: return 11;
      case BinaryOp::Add: case BinaryOp::Sub: return 10;
      case BinaryOp::Shl: case BinaryOp::Shr: return 9;
      case BinaryOp::Min: case BinaryOp::Max: return 8;
      case BinaryOp::Lt: case BinaryOp::Le: case BinaryOp::Gt: case BinaryOp::Ge: return 7;
      case BinaryOp::Eq: case BinaryOp::Ne: return 6;
      case BinaryOp::BitAnd: return 5;
      case BinaryOp::BitXor: return 4;
      case BinaryOp::BitOr: return 3;
      case BinaryOp::And: return 2;
      case BinaryOp::Or: return 1;
      case BinaryOp::Imply: return 0;
    }
    return 0;
  }

  static const char* binop_text(BinaryOp op) {
    switch (op) {
      case BinaryOp::Mul: return "*";
      case BinaryOp::Div: return "/";
      case BinaryOp::Mod: return "%";
      case BinaryOp::Add: return "+";
      case BinaryOp::Sub: return "-";
      case BinaryOp::Shl: return "<<";
      case BinaryOp::Shr: return ">>";
      case BinaryOp::Min: return "<?";
      case BinaryOp::Max: return ">?";
      case BinaryOp::Lt: return "<";
      case BinaryOp::Le: return "<=";
      case BinaryOp::Gt: return ">";
      case BinaryOp::Ge: return ">=";
      case BinaryOp::Eq: return "==";
      case BinaryOp::Ne: return "!=";
      case BinaryOp::BitAnd: return "&";
      case BinaryOp::BitXor: return "^";
      case BinaryOp::BitOr: return "|";
      case BinaryOp::And: return "&&";
      case BinaryOp::Or: return "||";
      case BinaryOp::Imply: return "imply";
    }
    return "?";
  }

  static const char* assign_text(AssignOp op) {
    switch (op) {
      case AssignOp::Assign: return "=";
      case AssignOp::Add: return "+=";
      case AssignOp::Sub: return "-=";
      case AssignOp::Mul: return "*=";
      case AssignOp::Div: return "/=";
      case AssignOp::Mod: return "%=";
      case AssignOp::BitOr: return "|=";
      case AssignOp::BitAnd: return "&=";
      case AssignOp::BitXor: return "^=";
      case AssignOp::Shl: return "<<=";
      case AssignOp::Shr: return ">>=";
    }
    return "=";
  }

  std::string expr_prec(const Expr& e, int parent_prec) {
    switch (e.kind) {
      case Expr::Kind::IntLit: return std::to_string(e.int_value);
      case Expr::Kind::BoolLit: return e.bool_value ? "true" : "false";
      case Expr::Kind::Ident: return e.name;
      case Expr::Kind::Deadlock: return "deadlock";
      case Expr::Kind::Index: return expr_prec(*e.a, 12) + "[" + expr_prec(*e.b, 0) + "]";
      case Expr::Kind::Field: return expr_prec(*e.a, 12) + "." + e.name;
      case Expr::Kind::Call: {
        std::string s = expr_prec(*e.a, 12) + "(";
        for (size_t i = 0; i < e.args.size(); ++i) {
          if (i) s += ", ";
          s += expr_prec(*e.args[i], 0);
        }
        return s + ")";
      }
      case Expr::Kind::Unary: {
        switch (e.unary_op) {
          case UnaryOp::Plus: return paren("+" + expr_prec(*e.a, 12), 12, parent_prec);
          case UnaryOp::Minus: return paren("-" + expr_prec(*e.a, 12), 12, parent_prec);
          case UnaryOp::Not: return paren("!" + expr_prec(*e.a, 12), 12, parent_prec);
          case UnaryOp::PreInc: return paren("++" + expr_prec(*e.a, 12), 12, parent_prec);
          case UnaryOp::PreDec: return paren("--" + expr_prec(*e.a, 12), 12, parent_prec);
          case UnaryOp::PostInc: return paren(expr_prec(*e.a, 12) + "++", 12, parent_prec);
          case UnaryOp::PostDec: return paren(expr_prec(*e.a, 12) + "--", 12, parent_prec);
        }
        return "";
      }
      case Expr::Kind::Binary: {
        int p = binop_prec(e.binary_op);
        std::string s = expr_prec(*e.a, p) + " " + binop_text(e.binary_op) + " " + expr_prec(*e.b, p + 1);
        return paren(std::move(s), p, parent_prec);
      }
      case Expr::Kind::Ternary: {
        std::string s = expr_prec(*e.a, 1) + " ? " + expr_prec(*e.b, 0) + " : " + expr_prec(*e.c, 0);
        return paren(std::move(s), 0, parent_prec);
      }
      case Expr::Kind::Assign: {
        std::string s = expr_prec(*e.a, 12) + " " + assign_text(e.assign_op) + " " + expr_prec(*e.b, 0);
        return paren(std::move(s), 0, parent_prec);
      }
      case Expr::Kind::Quantifier: {
        std::string s = e.quant_kind + " (" + e.name + " : " + e.quant_type + ") " + expr_prec(*e.a, 0);
        return paren(std::move(s), 0, parent_prec);
      }
    }
    return "";
  }

  static std::string paren(std::string s, int prec, int parent_prec) {
    if (prec < parent_prec) return "(" + s + ")";
    return s;
  }

  void line(const std::string& s) {
    for (int i = 0; i < indent_; ++i) out_ << "  ";
    out_ << s << "\n";
  }

  std::ostringstream out_;
  int indent_ = 0;
};

inline std::string pretty_print(const ModelNetwork& net) {
  Printer p;
  return p.print(net);
}

inline std::string expr_to_string(const Expr& e) {
  Printer p;
  return p.expr(e);
}

} // namespace activforms
