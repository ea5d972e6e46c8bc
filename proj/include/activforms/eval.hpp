#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "activforms/typecheck.hpp"

namespace activforms {

/// Full variable/clock/location state of a running network. Copyable; the
/// checker hashes it and the engine snapshots it for hot swaps.
struct MachineState {
  std::vector<int64_t> globals;
  std::vector<std::vector<int64_t>> instance_stores;
  std::vector<int> active; // active location index per instance
  int64_t logical_time = 0;

  bool operator==(const MachineState& o) const {
    return globals == o.globals && instance_stores == o.instance_stores && active == o.active;
  }
};

class Evaluator {
public:
  explicit Evaluator(const CheckedModel& cm) : cm_(cm) {}

  int64_t eval(const Expr& e, MachineState& st, int self_instance) {
    ops_ = 0;
    depth_ = 0;
    return eval_expr(e, st, self_instance);
  }

  /// Runs an edge's update list (assignments and calls, left to right).
  void run_updates(const std::vector<ExprPtr>& updates, MachineState& st, int self_instance) {
    ops_ = 0;
    depth_ = 0;
    for (const auto& u : updates) eval_expr(*u, st, self_instance);
  }

  int64_t call_function(int func, const std::vector<int64_t>& args, MachineState& st, int self_instance) {
    ops_ = 0;
    depth_ = 0;
    return invoke(func, args.data(), args.size(), st, self_instance);
  }

private:
  struct ReturnSignal {
    int64_t value;
    bool has_value;
  };

  struct Lvalue {
    StoreKind store;
    int instance = -1;
    int slot = 0;
    const TypeRef* type = nullptr;
  };

  void budget() {
    if (++ops_ > 50'000'000)
      throw Error(Error::Kind::Internal, "expression evaluation budget exceeded (runaway loop?)");
  }

  int64_t* slot_ptr(const Lvalue& lv, MachineState& st) {
    switch (lv.store) {
      case StoreKind::Global: return &st.globals[lv.slot];
      case StoreKind::Instance: return &st.instance_stores[lv.instance][lv.slot];
      case StoreKind::Frame: return &frame_pool_[depth_ - 1][lv.slot];
      default: throw Error(Error::Kind::Internal, "bad lvalue store");
    }
  }

  Lvalue resolve_lvalue(const Expr& e, MachineState& st, int self) {
    budget();
    switch (e.kind) {
      case Expr::Kind::Ident: {
        const ExprInfo& info = cm_.info(e);
        if (info.symbol < 0) throw Error(Error::Kind::Internal, "unresolved identifier " + e.name);
        const Symbol& s = cm_.symbols[info.symbol];
        Lvalue lv;
        lv.store = s.store;
        lv.slot = s.slot;
        lv.type = s.type.get();
        lv.instance = self;
        return lv;
      }
      case Expr::Kind::Index: {
        Lvalue base = resolve_lvalue(*e.a, st, self);
        int64_t idx = eval_expr(*e.b, st, self);
        if (!base.type || base.type->kind != TypeRef::Kind::Array)
          throw Error(Error::Kind::Internal, "indexing non-array");
        if (idx < 0 || idx >= base.type->array_size)
          throw Error(Error::Kind::ArrayIndexOutOfBounds,
                      "index " + std::to_string(idx) + " outside array of length " +
                          std::to_string(base.type->array_size));
        base.slot += static_cast<int>(idx) * type_width(*base.type->element);
        base.type = base.type->element.get();
        return base;
      }
      case Expr::Kind::Field: {
        const ExprInfo& info = cm_.info(e);
        if (info.instance >= 0 && info.symbol >= 0) {
          // query-scope instance member
          const Symbol& s = cm_.symbols[info.symbol];
          Lvalue lv;
          lv.store = StoreKind::Instance;
          lv.instance = info.instance;
          lv.slot = s.slot;
          lv.type = s.type.get();
          return lv;
        }
        Lvalue base = resolve_lvalue(*e.a, st, self);
        if (!base.type || base.type->kind != TypeRef::Kind::Record)
          throw Error(Error::Kind::Internal, "field access on non-record");
        int off = 0;
        for (const auto& f : base.type->fields) {
          if (f.name == e.name) {
            base.slot += off;
            base.type = f.type.get();
            return base;
          }
          off += type_width(*f.type);
        }
        throw Error(Error::Kind::Internal, "missing field " + e.name);
      }
      default:
        throw Error(Error::Kind::Internal, "expression is not an lvalue");
    }
  }

  void range_check(const TypeRef& t, int64_t v) {
    if (t.kind == TypeRef::Kind::RangedInt && (v < t.lo || v > t.hi))
      throw Error(Error::Kind::RangeViolation,
                  "value " + std::to_string(v) + " outside range [" + std::to_string(t.lo) + "," +
                      std::to_string(t.hi) + "]");
    if (t.kind == TypeRef::Kind::Clock && v < 0)
      throw Error(Error::Kind::RangeViolation, "clocks cannot be negative");
  }

  int64_t load(const Lvalue& lv, MachineState& st) { return *slot_ptr(lv, st); }

  void store(const Lvalue& lv, MachineState& st, int64_t v) {
    range_check(*lv.type, v);
    *slot_ptr(lv, st) = v;
  }

  static int64_t wrap_add(int64_t a, int64_t b) {
    return static_cast<int64_t>(static_cast<uint64_t>(a) + static_cast<uint64_t>(b));
  }
  static int64_t wrap_sub(int64_t a, int64_t b) {
    return static_cast<int64_t>(static_cast<uint64_t>(a) - static_cast<uint64_t>(b));
  }
  static int64_t wrap_mul(int64_t a, int64_t b) {
    return static_cast<int64_t>(static_cast<uint64_t>(a) * static_cast<uint64_t>(b));
  }

  int64_t apply_binary(BinaryOp op, int64_t a, int64_t b, SourcePos pos) {
    switch (op) {
      case BinaryOp::Add: return wrap_add(a, b);
      case BinaryOp::Sub: return wrap_sub(a, b);
      case BinaryOp::Mul: return wrap_mul(a, b);
      case BinaryOp::Div:
        if (b == 0)
          throw Error(Error::Kind::DivisionByZero,
                      "division by zero at " + std::to_string(pos.line) + ":" + std::to_string(pos.column));
        return a / b; // truncates toward zero
      case BinaryOp::Mod:
        if (b == 0)
          throw Error(Error::Kind::DivisionByZero,
                      "modulo by zero at " + std::to_string(pos.line) + ":" + std::to_string(pos.column));
        return a % b;
      case BinaryOp::Shl:
        if (b < 0 || b > 63) throw Error(Error::Kind::RangeViolation, "shift count out of range");
        return static_cast<int64_t>(static_cast<uint64_t>(a) << b);
      case BinaryOp::Shr:
        if (b < 0 || b > 63) throw Error(Error::Kind::RangeViolation, "shift count out of range");
        return a >> b;
      case BinaryOp::Min: return std::min(a, b);
      case BinaryOp::Max: return std::max(a, b);
      case BinaryOp::Lt: return a < b;
      case BinaryOp::Le: return a <= b;
      case BinaryOp::Gt: return a > b;
      case BinaryOp::Ge: return a >= b;
      case BinaryOp::Eq: return a == b;
      case BinaryOp::Ne: return a != b;
      case BinaryOp::BitAnd: return a & b;
      case BinaryOp::BitXor: return a ^ b;
      case BinaryOp::BitOr: return a | b;
      default: throw Error(Error::Kind::Internal, "unexpected operator");
    }
  }

  int64_t eval_expr(const Expr& e, MachineState& st, int self) {
    budget();
    switch (e.kind) {
      case Expr::Kind::IntLit: return e.int_value;
      case Expr::Kind::BoolLit: return e.bool_value ? 1 : 0;
      case Expr::Kind::Ident: {
        const ExprInfo& info = cm_.info(e);
        if (info.symbol >= 0 && cm_.symbols[info.symbol].kind == Symbol::Kind::Function)
          throw Error(Error::Kind::Internal, "function used as value");
        return load(resolve_lvalue(e, st, self), st);
      }
      case Expr::Kind::Index:
      case Expr::Kind::Field: {
        const ExprInfo& info = cm_.info(e);
        if (info.instance >= 0 && info.location >= 0) // query predicate Inst.Location
          return st.active[info.instance] == info.location ? 1 : 0;
        Lvalue lv = resolve_lvalue(e, st, self);
        if (!lv.type->is_scalar())
          throw Error(Error::Kind::Internal, "aggregate used as value");
        return load(lv, st);
      }
      case Expr::Kind::Unary: {
        switch (e.unary_op) {
          case UnaryOp::Plus: return eval_expr(*e.a, st, self);
          case UnaryOp::Minus: return wrap_sub(0, eval_expr(*e.a, st, self));
          case UnaryOp::Not: return eval_expr(*e.a, st, self) ? 0 : 1;
          case UnaryOp::PreInc:
          case UnaryOp::PreDec: {
            Lvalue lv = resolve_lvalue(*e.a, st, self);
            int64_t v = load(lv, st) + (e.unary_op == UnaryOp::PreInc ? 1 : -1);
            store(lv, st, v);
            return v;
          }
          case UnaryOp::PostInc:
          case UnaryOp::PostDec: {
            Lvalue lv = resolve_lvalue(*e.a, st, self);
            int64_t v = load(lv, st);
            store(lv, st, v + (e.unary_op == UnaryOp::PostInc ? 1 : -1));
            return v;
          }
        }
        return 0;
      }
      case Expr::Kind::Binary: {
        switch (e.binary_op) {
          case BinaryOp::And: return eval_expr(*e.a, st, self) ? (eval_expr(*e.b, st, self) ? 1 : 0) : 0;
          case BinaryOp::Or: return eval_expr(*e.a, st, self) ? 1 : (eval_expr(*e.b, st, self) ? 1 : 0);
          case BinaryOp::Imply:
            return eval_expr(*e.a, st, self) ? (eval_expr(*e.b, st, self) ? 1 : 0) : 1;
          default: {
            int64_t a = eval_expr(*e.a, st, self);
            int64_t b = eval_expr(*e.b, st, self);
            return apply_binary(e.binary_op, a, b, e.pos);
          }
        }
      }
      case Expr::Kind::Ternary:
        return eval_expr(*e.a, st, self) ? eval_expr(*e.b, st, self) : eval_expr(*e.c, st, self);
      case Expr::Kind::Assign: {
        Lvalue lhs = resolve_lvalue(*e.a, st, self);
        if (!lhs.type->is_scalar()) {
          // aggregate copy: rhs must be an lvalue of the same shape
          Lvalue rhs = resolve_lvalue(*e.b, st, self);
          int w = type_width(*lhs.type);
          for (int i = 0; i < w; ++i) {
            int64_t v = *slot_ptr({rhs.store, rhs.instance, rhs.slot + i, nullptr}, st);
            Lvalue cell{lhs.store, lhs.instance, lhs.slot + i, nullptr};
            *slot_ptr(cell, st) = v;
          }
          return 0;
        }
        int64_t rhs = eval_expr(*e.b, st, self);
        int64_t v;
        if (e.assign_op == AssignOp::Assign) {
          v = rhs;
        } else {
          int64_t cur = load(lhs, st);
          BinaryOp op;
          switch (e.assign_op) {
            case AssignOp::Add: op = BinaryOp::Add; break;
            case AssignOp::Sub: op = BinaryOp::Sub; break;
            case AssignOp::Mul: op = BinaryOp::Mul; break;
            case AssignOp::Div: op = BinaryOp::Div; break;
            case AssignOp::Mod: op = BinaryOp::Mod; break;
            case AssignOp::BitOr: op = BinaryOp::BitOr; break;
            case AssignOp::BitAnd: op = BinaryOp::BitAnd; break;
            case AssignOp::BitXor: op = BinaryOp::BitXor; break;
            case AssignOp::Shl: op = BinaryOp::Shl; break;
            case AssignOp::Shr: op = BinaryOp::Shr; break;
            default: op = BinaryOp::Add; break;
          }
          v = apply_binary(op, cur, rhs, e.pos);
        }
        store(lhs, st, v);
        return v;
      }
      case Expr::Kind::Call: {
        const ExprInfo& info = cm_.info(e);
        if (info.func < 0) throw Error(Error::Kind::Internal, "unresolved call");
        int64_t args[16];
        if (e.args.size() > 16) throw Error(Error::Kind::Internal, "too many call arguments");
        for (size_t i = 0; i < e.args.size(); ++i) args[i] = eval_expr(*e.args[i], st, self);
        int callee_self = self;
        const ExprInfo& target = cm_.info(*e.a);
        if (target.instance >= 0) callee_self = target.instance;
        return invoke(info.func, args, e.args.size(), st, callee_self);
      }
      default:
        throw Error(Error::Kind::Internal, "cannot evaluate expression");
    }
  }

  int64_t invoke(int func, const int64_t* args, size_t nargs, MachineState& st, int self) {
    const CompiledFunction& f = cm_.functions[func];
    if (nargs != f.param_types.size())
      throw Error(Error::Kind::Internal, "call arity mismatch");
    if (depth_ > 256) throw Error(Error::Kind::Internal, "call stack overflow");
    if (depth_ == frame_pool_.size()) frame_pool_.emplace_back();
    std::vector<int64_t>& frame = frame_pool_[depth_];
    frame.assign(static_cast<size_t>(std::max(f.frame_width, 1)), 0);
    for (size_t i = 0; i < nargs; ++i) {
      range_check(*f.param_types[i], args[i]);
      frame[f.param_slots[i]] = args[i];
    }
    ++depth_;
    std::optional<ReturnSignal> ret;
    for (const auto& s : f.decl->body) {
      ret = exec_stmt(*s, st, self);
      if (ret) break;
    }
    --depth_;
    if (f.return_type->kind == TypeRef::Kind::Void) return 0;
    if (!ret || !ret->has_value)
      throw Error(Error::Kind::Internal, "function '" + f.decl->name + "' returned no value");
    return ret->value;
  }

  std::optional<ReturnSignal> exec_stmt(const Stmt& s, MachineState& st, int self) {
    budget();
    switch (s.kind) {
      case Stmt::Kind::Empty: return std::nullopt;
      case Stmt::Kind::Expr:
        eval_expr(*s.e1, st, self);
        return std::nullopt;
      case Stmt::Kind::Decl: {
        const ExprInfo& info = cm_.info(s);
        if (!info.type) throw Error(Error::Kind::Internal, "unresolved local declaration");
        fill_defaults(*info.type, info.symbol, frame_pool_[depth_ - 1]);
        if (s.decl.init) {
          if (info.type->is_scalar()) {
            int64_t v = eval_expr(*s.decl.init, st, self);
            range_check(*info.type, v);
            frame_pool_[depth_ - 1][info.symbol] = v;
          } else {
            Lvalue rhs = resolve_lvalue(*s.decl.init, st, self);
            int w = type_width(*info.type);
            for (int i = 0; i < w; ++i) {
              Lvalue cell{rhs.store, rhs.instance, rhs.slot + i, nullptr};
              frame_pool_[depth_ - 1][info.symbol + i] = *slot_ptr(cell, st);
            }
          }
        } else if (s.decl.has_init_list) {
          std::vector<LeafVar> leaves;
          enumerate_leaves(*info.type, s.decl.name, info.symbol, leaves, StoreKind::Frame);
          for (size_t i = 0; i < leaves.size() && i < s.decl.init_list.size(); ++i) {
            int64_t v = eval_expr(*s.decl.init_list[i], st, self);
            range_check(*leaves[i].type, v);
            frame_pool_[depth_ - 1][leaves[i].slot] = v;
          }
        }
        return std::nullopt;
      }
      case Stmt::Kind::Block:
        for (const auto& b : s.body) {
          auto r = exec_stmt(*b, st, self);
          if (r) return r;
        }
        return std::nullopt;
      case Stmt::Kind::For: {
        eval_expr(*s.e1, st, self);
        while (eval_expr(*s.e2, st, self)) {
          auto r = exec_stmt(*s.loop_body, st, self);
          if (r) return r;
          eval_expr(*s.e3, st, self);
        }
        return std::nullopt;
      }
      case Stmt::Kind::Iteration: {
        const ExprInfo& info = cm_.info(s);
        if (!info.type || info.type->kind != TypeRef::Kind::RangedInt)
          throw Error(Error::Kind::Internal, "bad iteration bounds");
        for (int64_t v = info.type->lo; v <= info.type->hi; ++v) {
          frame_pool_[depth_ - 1][info.symbol] = v;
          auto r = exec_stmt(*s.loop_body, st, self);
          if (r) return r;
        }
        return std::nullopt;
      }
      case Stmt::Kind::While:
        while (eval_expr(*s.e1, st, self)) {
          auto r = exec_stmt(*s.loop_body, st, self);
          if (r) return r;
        }
        return std::nullopt;
      case Stmt::Kind::DoWhile:
        do {
          auto r = exec_stmt(*s.loop_body, st, self);
          if (r) return r;
        } while (eval_expr(*s.e1, st, self));
        return std::nullopt;
      case Stmt::Kind::If:
        if (eval_expr(*s.e1, st, self)) return exec_stmt(*s.then_branch, st, self);
        if (s.else_branch) return exec_stmt(*s.else_branch, st, self);
        return std::nullopt;
      case Stmt::Kind::Return:
        if (s.e1) return ReturnSignal{eval_expr(*s.e1, st, self), true};
        return ReturnSignal{0, false};
    }
    return std::nullopt;
  }

  const CheckedModel& cm_;
  std::vector<std::vector<int64_t>> frame_pool_;
  size_t depth_ = 0;
  long long ops_ = 0;

public:
  static int64_t default_value(const TypeRef& t) {
    if (t.kind == TypeRef::Kind::RangedInt && (t.lo > 0 || t.hi < 0)) return t.lo;
    return 0;
  }

  static void fill_defaults(const TypeRef& t, int base, std::vector<int64_t>& store) {
    std::vector<LeafVar> leaves;
    enumerate_leaves(t, "", base, leaves, StoreKind::None);
    for (const auto& l : leaves) store[l.slot] = default_value(*l.type);
  }

  /// Evaluates a declaration's initializer into a raw store, used when the
  /// engine builds the initial global and instance stores.
  void init_var(const Symbol& sym, MachineState& st, int self, std::vector<int64_t>& target) {
    if (!sym.decl) return;
    fill_defaults(*sym.type, sym.slot, target);
    const VarDecl& decl = *sym.decl;
    ops_ = 0;
    depth_ = 0;
    if (decl.init) {
      if (sym.type->is_scalar()) {
        int64_t v = eval_expr(*decl.init, st, self);
        range_check(*sym.type, v);
        target[sym.slot] = v;
      } else {
        Lvalue rhs = resolve_lvalue(*decl.init, st, self);
        for (int i = 0; i < sym.width; ++i) {
          Lvalue cell{rhs.store, rhs.instance, rhs.slot + i, nullptr};
          target[sym.slot + i] = *slot_ptr(cell, st);
        }
      }
    } else if (decl.has_init_list) {
      std::vector<LeafVar> leaves;
      enumerate_leaves(*sym.type, decl.name, sym.slot, leaves, StoreKind::None);
      for (size_t i = 0; i < leaves.size() && i < decl.init_list.size(); ++i) {
        int64_t v = eval_expr(*decl.init_list[i], st, self);
        range_check(*leaves[i].type, v);
        target[leaves[i].slot] = v;
      }
    }
  }
};

} // namespace activforms
