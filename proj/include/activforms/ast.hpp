#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "activforms/diag.hpp"

namespace activforms {

// ---------------------------------------------------------------------------
// Expressions
// ---------------------------------------------------------------------------

enum class UnaryOp { Plus, Minus, Not, PreInc, PreDec, PostInc, PostDec };

enum class BinaryOp {
  Mul, Div, Mod,
  Add, Sub,
  Shl, Shr,
  Min, Max, // <? and >?
  Lt, Le, Gt, Ge,
  Eq, Ne,
  BitAnd, BitXor, BitOr,
  And, Or, Imply,
};

enum class AssignOp { Assign, Add, Sub, Mul, Div, Mod, BitOr, BitAnd, BitXor, Shl, Shr };

struct Expr;
using ExprPtr = std::unique_ptr<Expr>;

struct Expr {
  enum class Kind {
    IntLit,
    BoolLit,
    Ident,
    Index,     // a[i]
    Field,     // a.b
    Unary,
    Binary,
    Ternary,
    Assign,
    Call,      // f(args) -- callee is Ident or Field (instance.function)
    Quantifier, // forall/exists/sum -- parsed, rejected by the type checker
    Deadlock,
  };

  Kind kind;
  SourcePos pos;

  int64_t int_value = 0;
  bool bool_value = false;
  std::string name;         // Ident / Field member / quantifier variable
  UnaryOp unary_op{};
  BinaryOp binary_op{};
  AssignOp assign_op{};
  ExprPtr a, b, c;          // operands: a[b], a.name, a op b, a ? b : c
  std::vector<ExprPtr> args;
  std::string quant_kind;   // "forall" | "exists" | "sum"
  std::string quant_type;   // raw type text, kept only for pretty-printing

  // Resolution annotation id, filled by the type checker.
  mutable int info_ref = -1;

  Expr clone() const;
};

inline ExprPtr clone_ptr(const ExprPtr& p) {
  if (!p) return nullptr;
  return std::make_unique<Expr>(p->clone());
}

inline Expr Expr::clone() const {
  Expr e;
  e.kind = kind;
  e.pos = pos;
  e.int_value = int_value;
  e.bool_value = bool_value;
  e.name = name;
  e.unary_op = unary_op;
  e.binary_op = binary_op;
  e.assign_op = assign_op;
  e.a = clone_ptr(a);
  e.b = clone_ptr(b);
  e.c = clone_ptr(c);
  for (const auto& arg : args) e.args.push_back(clone_ptr(arg));
  e.quant_kind = quant_kind;
  e.quant_type = quant_type;
  return e;
}

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

struct TypeRef;

struct RecordField {
  std::string name;
  std::shared_ptr<TypeRef> type;
};

/// Resolved model-language type. Ranged ints carry their bounds; arrays and
/// records are structural.
struct TypeRef {
  enum class Kind { Int, RangedInt, Bool, Clock, Chan, Array, Record, Void, Unsupported };

  Kind kind = Kind::Int;
  int64_t lo = 0, hi = 0;                 // RangedInt bounds
  bool broadcast = false;                 // Chan
  bool urgent = false;                    // Chan
  std::shared_ptr<TypeRef> element;       // Array
  int64_t array_size = 0;                 // Array
  std::vector<RecordField> fields;        // Record
  std::string record_name;                // Record (typedef name, may be empty)

  bool is_numeric() const { return kind == Kind::Int || kind == Kind::RangedInt || kind == Kind::Clock; }
  bool is_scalar() const { return is_numeric() || kind == Kind::Bool; }
  bool same_scalar_kind(const TypeRef& o) const {
    // Ranged and plain ints are interchangeable for state transfer.
    auto base = [](Kind k) { return k == Kind::RangedInt ? Kind::Int : k; };
    return base(kind) == base(o.kind);
  }
};

using TypePtr = std::shared_ptr<TypeRef>;

// ---------------------------------------------------------------------------
// Declarations, statements, functions
// ---------------------------------------------------------------------------

struct TypeExpr {
  // Syntactic type as written; resolved to TypeRef during checking.
  bool is_const = false;
  bool broadcast = false;
  bool urgent = false;
  bool meta = false;       // parsed, rejected
  std::string base;        // "int" | "bool" | "clock" | "chan" | "scalar" | typedef name
  ExprPtr range_lo, range_hi;       // int[lo,hi]
  std::vector<ExprPtr> array_dims;  // trailing [N] dims
  SourcePos pos;

  TypeExpr clone() const {
    TypeExpr t;
    t.is_const = is_const;
    t.broadcast = broadcast;
    t.urgent = urgent;
    t.meta = meta;
    t.base = base;
    t.range_lo = clone_ptr(range_lo);
    t.range_hi = clone_ptr(range_hi);
    for (const auto& d : array_dims) t.array_dims.push_back(clone_ptr(d));
    t.pos = pos;
    return t;
  }
};

struct VarDecl {
  TypeExpr type;
  std::string name;
  ExprPtr init;          // optional; aggregate initializers use InitList below
  std::vector<ExprPtr> init_list; // { e, e, ... } flattened one level per nesting via nested lists
  bool has_init_list = false;
  SourcePos pos;

  VarDecl clone() const {
    VarDecl v;
    v.type = type.clone();
    v.name = name;
    v.init = clone_ptr(init);
    for (const auto& e : init_list) v.init_list.push_back(clone_ptr(e));
    v.has_init_list = has_init_list;
    v.pos = pos;
    return v;
  }
};

struct TypedefDecl {
  std::string name;
  std::vector<VarDecl> fields; // struct fields (no init)
  SourcePos pos;
};

struct Stmt;
using StmtPtr = std::unique_ptr<Stmt>;

struct Stmt {
  enum class Kind { Expr, Block, For, Iteration, While, DoWhile, If, Return, Empty, Decl };
  Kind kind;
  SourcePos pos;
  mutable int info_ref = -1; // checker annotation id (Decl/Iteration slots)

  ExprPtr e1, e2, e3;                 // for(e1;e2;e3) / while(e1) / if(e1) / return e1
  std::vector<StmtPtr> body;          // block statements
  StmtPtr then_branch, else_branch, loop_body;
  std::string iter_var;               // for (v : type)
  TypeExpr iter_type;
  VarDecl decl;                       // local declaration statement
};

struct FunctionDecl {
  TypeExpr return_type;   // base "void" allowed
  std::string name;
  std::vector<VarDecl> params; // scalar params only (checked)
  std::vector<VarDecl> locals;
  std::vector<StmtPtr> body;
  SourcePos pos;
};

// ---------------------------------------------------------------------------
// Automata
// ---------------------------------------------------------------------------

enum class LocationKind { Normal, Urgent, Committed };

struct Location {
  std::string name;
  LocationKind kind = LocationKind::Normal;
  bool initial = false;
  ExprPtr invariant;                 // boolean, optional
  std::optional<int64_t> exponential_rate; // unbounded-delay stochastic rate
  SourcePos pos;
};

enum class SyncKind { None, Send, Receive };

struct SyncLabel {
  SyncKind kind = SyncKind::None;
  std::string channel;
  ExprPtr index; // channel array subscript, optional
};

struct Edge {
  int source = -1;  // location index
  int target = -1;
  ExprPtr guard;                    // optional (true)
  SyncLabel sync;
  std::vector<ExprPtr> updates;     // assignment / call expressions
  ExprPtr weight;                   // probabilistic branch weight, optional
  SourcePos pos;
};

struct Automaton {
  std::string name;
  std::vector<VarDecl> params;      // const scalar parameters
  std::vector<VarDecl> locals;
  std::vector<FunctionDecl> functions;
  std::vector<Location> locations;
  std::vector<Edge> edges;
  int initial = -1;
  SourcePos pos;

  int location_index(const std::string& n) const {
    for (size_t i = 0; i < locations.size(); ++i)
      if (locations[i].name == n) return static_cast<int>(i);
    return -1;
  }
};

struct InstanceDecl {
  std::string instance_name;
  std::string automaton_name;
  std::vector<ExprPtr> args;
  SourcePos pos;
};

// ---------------------------------------------------------------------------
// Queries
// ---------------------------------------------------------------------------

struct Query {
  enum class Kind { ProbabilityEstimation, Simulation, Invariant, Reachability, LeadsTo, DeadlockFreedom };
  Kind kind;
  std::string name;          // optional label
  int64_t time_bound = 0;    // Pr / simulate bound
  int64_t runs = 0;          // simulate N
  ExprPtr predicate;         // Pr target / invariant / reachability / leads-to lhs
  ExprPtr predicate2;        // leads-to rhs
  std::vector<ExprPtr> monitors; // simulate expressions
  std::string text;          // original text, for reports
  SourcePos pos;
};

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

struct ModelNetwork {
  std::vector<TypedefDecl> typedefs;
  std::vector<VarDecl> globals;       // consts, variables, clocks, channels
  std::vector<FunctionDecl> functions;
  std::vector<Automaton> automata;
  std::vector<InstanceDecl> instances;
  std::vector<Query> queries;

  const Automaton* find_automaton(const std::string& name) const {
    for (const auto& a : automata)
      if (a.name == name) return &a;
    return nullptr;
  }
  int instance_index(const std::string& name) const {
    for (size_t i = 0; i < instances.size(); ++i)
      if (instances[i].instance_name == name) return static_cast<int>(i);
    return -1;
  }
};

} // namespace activforms
