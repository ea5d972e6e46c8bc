#pragma once

#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "activforms/ast.hpp"
#include "activforms/parser.hpp"

namespace activforms {

// ---------------------------------------------------------------------------
// Resolved program representation shared by the engine, checker, and SMC.
// ---------------------------------------------------------------------------

enum class StoreKind { Global, Instance, Frame, None };

struct Symbol {
  enum class Kind { Variable, Channel, Function, Type };
  Kind kind = Kind::Variable;
  std::string name;
  TypePtr type;
  StoreKind store = StoreKind::None;
  int slot = -1;
  int width = 0;
  bool is_const = false;
  int automaton = -1;   // owning automaton index (-1 global)
  int func_index = -1;  // Kind::Function
  int channel_base = -1; // Kind::Channel: first channel id (arrays span a range)
  int channel_count = 0;
  const VarDecl* decl = nullptr; // for initialization at load time
  int64_t const_value = 0;       // folded scalar constants
  bool const_folded = false;
};

struct ExprInfo {
  TypePtr type;
  int symbol = -1;      // resolved symbol id; for Decl/Iteration statements: frame slot
  int func = -1;        // resolved call target
  int instance = -1;    // query-scope instance reference
  int location = -1;    // query-scope location predicate
  bool folded = false;
  int64_t value = 0;
  bool is_const_expr = false;
};

struct CompiledFunction {
  const FunctionDecl* decl = nullptr;
  int automaton = -1;
  int frame_width = 0;
  std::vector<int> param_slots;
  std::vector<TypePtr> param_types;
  TypePtr return_type;
};

struct LeafVar {
  std::string qualified_name;
  StoreKind store;
  int slot;
  TypePtr type; // scalar
};

struct AutomatonLayout {
  int instance_width = 0;          // params + locals
  std::vector<int> clock_slots;    // instance-store slots holding clocks
  std::vector<LeafVar> leaves;     // names relative to the automaton scope
};

struct ChannelInfo {
  std::string name;   // flattened name, e.g. "data[3]"
  bool broadcast = false;
  bool urgent = false;
};

struct CheckedModel {
  std::shared_ptr<const ModelNetwork> network;
  std::vector<Diagnostic> diagnostics;

  std::vector<Symbol> symbols;
  std::vector<CompiledFunction> functions;
  std::vector<ExprInfo> expr_infos;

  int global_width = 0;
  std::vector<int> global_clock_slots;
  std::vector<LeafVar> global_leaves;
  std::vector<AutomatonLayout> automaton_layouts;
  std::vector<ChannelInfo> channels;

  // typedef name -> resolved record type
  std::map<std::string, TypePtr> record_types;

  bool ok() const { return diagnostics.empty(); }

  const ExprInfo& info(const Expr& e) const {
    static const ExprInfo none{};
    return e.info_ref >= 0 ? expr_infos[e.info_ref] : none;
  }
  const ExprInfo& info(const Stmt& s) const {
    static const ExprInfo none{};
    return s.info_ref >= 0 ? expr_infos[s.info_ref] : none;
  }

  int find_channel(const std::string& flat_name) const {
    for (size_t i = 0; i < channels.size(); ++i)
      if (channels[i].name == flat_name) return static_cast<int>(i);
    return -1;
  }
};

inline int type_width(const TypeRef& t) {
  switch (t.kind) {
    case TypeRef::Kind::Array: return static_cast<int>(t.array_size) * type_width(*t.element);
    case TypeRef::Kind::Record: {
      int w = 0;
      for (const auto& f : t.fields) w += type_width(*f.type);
      return w;
    }
    case TypeRef::Kind::Void:
    case TypeRef::Kind::Chan:
    case TypeRef::Kind::Unsupported: return 0;
    default: return 1;
  }
}

inline void enumerate_leaves(const TypeRef& t, const std::string& prefix, int base,
                             std::vector<LeafVar>& out, StoreKind store) {
  switch (t.kind) {
    case TypeRef::Kind::Array: {
      int ew = type_width(*t.element);
      for (int64_t i = 0; i < t.array_size; ++i)
        enumerate_leaves(*t.element, prefix + "[" + std::to_string(i) + "]",
                         base + static_cast<int>(i) * ew, out, store);
      return;
    }
    case TypeRef::Kind::Record: {
      int off = 0;
      for (const auto& f : t.fields) {
        enumerate_leaves(*f.type, prefix + "." + f.name, base + off, out, store);
        off += type_width(*f.type);
      }
      return;
    }
    case TypeRef::Kind::Chan:
    case TypeRef::Kind::Void:
    case TypeRef::Kind::Unsupported: return;
    default:
      out.push_back({prefix, store, base, std::make_shared<TypeRef>(t)});
      return;
  }
}

// ---------------------------------------------------------------------------
// Checker
// ---------------------------------------------------------------------------

class TypeChecker {
public:
  CheckedModel run(ModelNetwork net) {
    cm_.network = std::make_shared<ModelNetwork>(std::move(net));
    const ModelNetwork& n = *cm_.network;

    resolve_typedefs(n);
    resolve_globals(n);
    resolve_global_functions(n);
    for (size_t i = 0; i < n.automata.size(); ++i) resolve_automaton(n.automata[i], static_cast<int>(i));
    check_function_bodies(n);
    check_automata(n);
    check_instances(n);
    check_queries(n);
    return std::move(cm_);
  }

private:
  using Kind = TypeRef::Kind;

  void diag(DiagKind k, SourcePos pos, std::string msg) {
    cm_.diagnostics.push_back({k, pos, std::move(msg)});
  }

  ExprInfo& info_of(const Expr& e) {
    if (e.info_ref < 0) {
      e.info_ref = static_cast<int>(cm_.expr_infos.size());
      cm_.expr_infos.emplace_back();
    }
    return cm_.expr_infos[e.info_ref];
  }
  ExprInfo& info_of(const Stmt& st) {
    if (st.info_ref < 0) {
      st.info_ref = static_cast<int>(cm_.expr_infos.size());
      cm_.expr_infos.emplace_back();
    }
    return cm_.expr_infos[st.info_ref];
  }

  // -- type resolution -------------------------------------------------------

  TypePtr resolve_type(const TypeExpr& te) {
    TypePtr base;
    if (te.meta) {
      diag(DiagKind::NotSupported, te.pos, "'meta' declarations are not supported");
      return std::make_shared<TypeRef>(TypeRef{Kind::Unsupported});
    }
    if (te.base == "int") {
      if (te.range_lo && te.range_hi) {
        auto t = std::make_shared<TypeRef>();
        t->kind = Kind::RangedInt;
        t->lo = const_eval_or(te.range_lo.get(), 0);
        t->hi = const_eval_or(te.range_hi.get(), 0);
        if (t->lo > t->hi) diag(DiagKind::TypeError, te.pos, "empty integer range");
        base = t;
      } else {
        base = std::make_shared<TypeRef>(TypeRef{Kind::Int});
      }
    } else if (te.base == "bool") {
      base = std::make_shared<TypeRef>(TypeRef{Kind::Bool});
    } else if (te.base == "clock") {
      base = std::make_shared<TypeRef>(TypeRef{Kind::Clock});
    } else if (te.base == "chan") {
      auto t = std::make_shared<TypeRef>(TypeRef{Kind::Chan});
      t->broadcast = te.broadcast;
      t->urgent = te.urgent;
      base = t;
    } else if (te.base == "void") {
      base = std::make_shared<TypeRef>(TypeRef{Kind::Void});
    } else if (te.base == "scalar") {
      diag(DiagKind::NotSupported, te.pos, "'scalar' types are not supported");
      return std::make_shared<TypeRef>(TypeRef{Kind::Unsupported});
    } else {
      auto it = cm_.record_types.find(te.base);
      if (it == cm_.record_types.end()) {
        diag(DiagKind::UnknownIdentifier, te.pos, "unknown type '" + te.base + "'");
        return std::make_shared<TypeRef>(TypeRef{Kind::Unsupported});
      }
      base = it->second;
    }
    // array dims apply outermost-first: int a[2][3] is array(2, array(3, int))
    for (auto it = te.array_dims.rbegin(); it != te.array_dims.rend(); ++it) {
      int64_t n = const_eval_or(it->get(), -1);
      if (n < 0) {
        diag(DiagKind::TypeError, te.pos, "array size must be a constant expression");
        n = 0;
      }
      auto arr = std::make_shared<TypeRef>();
      arr->kind = Kind::Array;
      arr->element = base;
      arr->array_size = n;
      base = arr;
    }
    return base;
  }

  void resolve_typedefs(const ModelNetwork& n) {
    for (const auto& td : n.typedefs) {
      auto rec = std::make_shared<TypeRef>();
      rec->kind = Kind::Record;
      rec->record_name = td.name;
      for (const auto& f : td.fields) {
        TypePtr ft = resolve_type(f.type);
        if (ft->kind == Kind::Chan || ft->kind == Kind::Clock)
          diag(DiagKind::TypeError, f.pos, "record fields must be data types");
        rec->fields.push_back({f.name, ft});
      }
      if (cm_.record_types.count(td.name))
        diag(DiagKind::DuplicateDeclaration, td.pos, "duplicate type '" + td.name + "'");
      cm_.record_types[td.name] = rec;
    }
  }

  int add_symbol(Symbol s) {
    cm_.symbols.push_back(std::move(s));
    return static_cast<int>(cm_.symbols.size() - 1);
  }

  int lookup(const std::vector<std::unordered_map<std::string, int>>& scopes, const std::string& name) const {
    for (auto it = scopes.rbegin(); it != scopes.rend(); ++it) {
      auto f = it->find(name);
      if (f != it->end()) return f->second;
    }
    return -1;
  }

  void declare(std::unordered_map<std::string, int>& scope, const std::string& name, int sym, SourcePos pos) {
    if (!scope.emplace(name, sym).second)
      diag(DiagKind::DuplicateDeclaration, pos, "duplicate declaration '" + name + "'");
  }

  void resolve_globals(const ModelNetwork& n) {
    scopes_.clear();
    scopes_.emplace_back(); // global scope
    for (const auto& g : n.globals) {
      TypePtr t = resolve_type(g.type);
      Symbol s;
      s.name = g.name;
      s.type = t;
      s.is_const = g.type.is_const;
      if (t->kind == Kind::Chan) {
        s.kind = Symbol::Kind::Channel;
        s.channel_base = static_cast<int>(cm_.channels.size());
        s.channel_count = 1;
        cm_.channels.push_back({g.name, t->broadcast, t->urgent});
      } else if (t->kind == Kind::Array && t->element->kind == Kind::Chan) {
        s.kind = Symbol::Kind::Channel;
        s.type = t;
        s.channel_base = static_cast<int>(cm_.channels.size());
        s.channel_count = static_cast<int>(t->array_size);
        for (int64_t i = 0; i < t->array_size; ++i)
          cm_.channels.push_back({g.name + "[" + std::to_string(i) + "]",
                                  t->element->broadcast, t->element->urgent});
      } else if (t->kind != Kind::Unsupported) {
        s.kind = Symbol::Kind::Variable;
        s.store = StoreKind::Global;
        s.slot = cm_.global_width;
        s.width = type_width(*t);
        cm_.global_width += s.width;
        collect_clock_slots(*t, s.slot, cm_.global_clock_slots);
        enumerate_leaves(*t, g.name, s.slot, cm_.global_leaves, StoreKind::Global);
      }
      s.decl = &g;
      int id = add_symbol(s);
      declare(scopes_.back(), g.name, id, g.pos);
      if (s.kind == Symbol::Kind::Variable) check_initializer(g, *s.type, true);
      if (s.is_const) fold_const_initializer(g, id);
    }
  }

  void collect_clock_slots(const TypeRef& t, int base, std::vector<int>& out) {
    if (t.kind == Kind::Clock) {
      out.push_back(base);
    } else if (t.kind == Kind::Array) {
      int ew = type_width(*t.element);
      for (int64_t i = 0; i < t.array_size; ++i) collect_clock_slots(*t.element, base + static_cast<int>(i) * ew, out);
    } else if (t.kind == Kind::Record) {
      int off = 0;
      for (const auto& f : t.fields) {
        collect_clock_slots(*f.type, base + off, out);
        off += type_width(*f.type);
      }
    }
  }

  void resolve_global_functions(const ModelNetwork& n) {
    for (const auto& f : n.functions) declare_function(f, -1);
  }

  void declare_function(const FunctionDecl& f, int automaton) {
    CompiledFunction cf;
    cf.decl = &f;
    cf.automaton = automaton;
    cf.return_type = resolve_type(f.return_type);
    int frame = 0;
    for (const auto& p : f.params) {
      TypePtr pt = resolve_type(p.type);
      if (!pt->is_scalar())
        diag(DiagKind::NotSupported, p.pos, "function parameters must be scalar");
      cf.param_slots.push_back(frame);
      cf.param_types.push_back(pt);
      frame += 1;
    }
    cf.frame_width = frame;
    Symbol s;
    s.kind = Symbol::Kind::Function;
    s.name = f.name;
    s.type = cf.return_type;
    s.automaton = automaton;
    s.func_index = static_cast<int>(cm_.functions.size());
    cm_.functions.push_back(cf);
    int id = add_symbol(s);
    declare(scopes_.back(), f.name, id, f.pos);
  }

  void resolve_automaton(const Automaton& a, int index) {
    cm_.automaton_layouts.emplace_back();
    AutomatonLayout& layout = cm_.automaton_layouts.back();
    scopes_.emplace_back(); // automaton scope
    int width = 0;
    auto add_instance_var = [&](const VarDecl& v, bool is_param) {
      TypePtr t = resolve_type(v.type);
      if (is_param && !t->is_scalar())
        diag(DiagKind::NotSupported, v.pos, "automaton parameters must be scalar");
      Symbol s;
      s.kind = Symbol::Kind::Variable;
      s.name = v.name;
      s.type = t;
      s.is_const = v.type.is_const || is_param;
      s.store = StoreKind::Instance;
      s.automaton = index;
      s.slot = width;
      s.width = type_width(*t);
      s.decl = &v;
      width += s.width;
      collect_clock_slots(*t, s.slot, layout.clock_slots);
      enumerate_leaves(*t, v.name, s.slot, layout.leaves, StoreKind::Instance);
      int id = add_symbol(s);
      declare(scopes_.back(), v.name, id, v.pos);
      if (!is_param) check_initializer(v, *t, false);
    };
    for (const auto& p : a.params) add_instance_var(p, true);
    for (const auto& l : a.locals) add_instance_var(l, false);
    layout.instance_width = width;
    for (const auto& f : a.functions) declare_function(f, index);

    automaton_scopes_.push_back(scopes_.back());
    scopes_.pop_back();
  }

  void check_initializer(const VarDecl& v, const TypeRef& t, bool is_global) {
    (void)is_global;
    if (v.init) {
      TypePtr it = check_expr(*v.init, nullptr);
      require_assignable(t, *it, v.pos);
      check_static_range(t, v.init.get(), v.pos);
    }
    if (v.has_init_list) {
      std::vector<LeafVar> leaves;
      enumerate_leaves(t, v.name, 0, leaves, StoreKind::None);
      if (leaves.size() != v.init_list.size()) {
        diag(DiagKind::TypeError, v.pos,
             "initializer has " + std::to_string(v.init_list.size()) + " values, expected " +
                 std::to_string(leaves.size()));
      }
      for (size_t i = 0; i < v.init_list.size() && i < leaves.size(); ++i) {
        TypePtr it = check_expr(*v.init_list[i], nullptr);
        require_assignable(*leaves[i].type, *it, v.pos);
        check_static_range(*leaves[i].type, v.init_list[i].get(), v.pos);
      }
    }
  }

  void check_static_range(const TypeRef& t, const Expr* e, SourcePos pos) {
    if (t.kind != Kind::RangedInt || !e) return;
    int64_t v;
    if (try_const_eval(e, v) && (v < t.lo || v > t.hi))
      diag(DiagKind::RangeError, pos,
           "constant " + std::to_string(v) + " outside range [" + std::to_string(t.lo) + "," +
               std::to_string(t.hi) + "]");
  }

  void fold_const_initializer(const VarDecl& v, int sym) {
    if (v.init) {
      int64_t val;
      if (try_const_eval(v.init.get(), val)) {
        cm_.symbols[sym].const_value = val;
        cm_.symbols[sym].const_folded = true;
      }
    }
  }

  // -- function bodies, guards, updates ---------------------------------------

  void check_function_bodies(const ModelNetwork& n) {
    for (size_t i = 0; i < cm_.functions.size(); ++i) {
      CompiledFunction& cf = cm_.functions[i];
      const FunctionDecl& f = *cf.decl;
      scopes_.emplace_back();
      if (cf.automaton >= 0) scopes_.push_back(automaton_scopes_[cf.automaton]);
      scopes_.emplace_back(); // parameter/frame scope
      frame_top_ = 0;
      for (size_t p = 0; p < f.params.size(); ++p) {
        Symbol s;
        s.kind = Symbol::Kind::Variable;
        s.name = f.params[p].name;
        s.type = cf.param_types[p];
        s.store = StoreKind::Frame;
        s.slot = cf.param_slots[p];
        s.width = 1;
        int id = add_symbol(s);
        declare(scopes_.back(), f.params[p].name, id, f.params[p].pos);
        frame_top_ = std::max(frame_top_, s.slot + 1);
      }
      for (const auto& st : f.body) check_stmt(*st, cf);
      cf.frame_width = frame_top_;
      scopes_.pop_back();
      if (cf.automaton >= 0) scopes_.pop_back();
      scopes_.pop_back();
    }
    (void)n;
  }

  void check_stmt(const Stmt& s, CompiledFunction& cf) {
    switch (s.kind) {
      case Stmt::Kind::Empty: return;
      case Stmt::Kind::Expr: check_expr(*s.e1, &cf); return;
      case Stmt::Kind::Decl: {
        TypePtr t = resolve_type(s.decl.type);
        if (t->kind == Kind::Clock || t->kind == Kind::Chan) {
          diag(DiagKind::NotSupported, s.pos, "clocks and channels cannot be declared in functions");
          return;
        }
        Symbol sym;
        sym.kind = Symbol::Kind::Variable;
        sym.name = s.decl.name;
        sym.type = t;
        sym.is_const = s.decl.type.is_const;
        sym.store = StoreKind::Frame;
        sym.slot = frame_top_;
        sym.width = type_width(*t);
        frame_top_ += sym.width;
        int id = add_symbol(sym);
        declare(scopes_.back(), s.decl.name, id, s.pos);
        check_initializer(s.decl, *t, false);
        auto& info = info_of(s);
        info.symbol = sym.slot;
        info.type = t;
        return;
      }
      case Stmt::Kind::Block: {
        scopes_.emplace_back();
        for (const auto& b : s.body) check_stmt(*b, cf);
        scopes_.pop_back();
        return;
      }
      case Stmt::Kind::For:
        check_expr(*s.e1, &cf);
        require_bool(*s.e2, &cf);
        check_expr(*s.e3, &cf);
        check_stmt(*s.loop_body, cf);
        return;
      case Stmt::Kind::Iteration: {
        TypeExpr te = s.iter_type.clone();
        TypePtr t = resolve_type(te);
        if (t->kind != Kind::RangedInt)
          diag(DiagKind::NotSupported, s.pos, "iteration requires a ranged int type");
        scopes_.emplace_back();
        Symbol sym;
        sym.kind = Symbol::Kind::Variable;
        sym.name = s.iter_var;
        sym.type = t;
        sym.store = StoreKind::Frame;
        sym.slot = frame_top_++;
        sym.width = 1;
        int id = add_symbol(sym);
        declare(scopes_.back(), s.iter_var, id, s.pos);
        // the evaluator finds the loop variable slot and bounds here
        auto& info = info_of(s);
        info.symbol = sym.slot;
        info.type = t;
        check_stmt(*s.loop_body, cf);
        scopes_.pop_back();
        return;
      }
      case Stmt::Kind::While:
      case Stmt::Kind::DoWhile:
        require_bool(*s.e1, &cf);
        check_stmt(*s.loop_body, cf);
        return;
      case Stmt::Kind::If:
        require_bool(*s.e1, &cf);
        check_stmt(*s.then_branch, cf);
        if (s.else_branch) check_stmt(*s.else_branch, cf);
        return;
      case Stmt::Kind::Return: {
        if (s.e1) {
          TypePtr t = check_expr(*s.e1, &cf);
          require_assignable(*cf.return_type, *t, s.pos);
        } else if (cf.return_type->kind != Kind::Void) {
          diag(DiagKind::TypeError, s.pos, "missing return value");
        }
        return;
      }
    }
  }

  // -- automata ---------------------------------------------------------------

  void check_automata(const ModelNetwork& n) {
    for (size_t ai = 0; ai < n.automata.size(); ++ai) {
      const Automaton& a = n.automata[ai];
      scopes_.push_back(automaton_scopes_[ai]);
      int initial_count = 0;
      for (const auto& loc : a.locations) {
        if (loc.initial) ++initial_count;
        if (loc.invariant) require_bool(*loc.invariant, nullptr);
        if (loc.exponential_rate && *loc.exponential_rate <= 0)
          diag(DiagKind::TypeError, loc.pos, "exponential rate must be positive");
      }
      if (initial_count != 1)
        diag(DiagKind::TypeError, a.pos,
             "automaton '" + a.name + "' must have exactly one initial location");
      // all-or-none branch weights per source location
      std::map<int, std::pair<int, int>> weights; // source -> (weighted, unweighted)
      for (const auto& e : a.edges) {
        if (e.guard) require_bool(*e.guard, nullptr);
        if (e.weight) {
          TypePtr t = check_expr(*e.weight, nullptr);
          if (!t->is_numeric()) diag(DiagKind::TypeError, e.pos, "branch weight must be numeric");
        }
        for (const auto& u : e.updates) {
          if (u->kind != Expr::Kind::Assign && u->kind != Expr::Kind::Call &&
              !(u->kind == Expr::Kind::Unary &&
                (u->unary_op == UnaryOp::PreInc || u->unary_op == UnaryOp::PreDec ||
                 u->unary_op == UnaryOp::PostInc || u->unary_op == UnaryOp::PostDec)))
            diag(DiagKind::TypeError, u->pos, "updates must be assignments or calls");
          check_expr(*u, nullptr);
        }
        if (e.sync.kind != SyncKind::None) check_sync(e, a);
        if (e.weight && e.sync.kind != SyncKind::None)
          diag(DiagKind::TypeError, e.pos, "weighted branches cannot carry synchronizations");
        if (e.source >= 0) {
          auto& w = weights[e.source];
          if (e.weight) w.first++;
          else w.second++;
        }
      }
      for (const auto& [loc, w] : weights) {
        if (w.first > 0 && w.second > 0)
          diag(DiagKind::TypeError, a.locations[loc].pos,
               "edges leaving '" + a.locations[loc].name + "' mix weighted and unweighted branches");
      }
      scopes_.pop_back();
    }
  }

  void check_sync(const Edge& e, const Automaton& a) {
    int sym = lookup(scopes_, e.sync.channel);
    if (sym < 0 || cm_.symbols[sym].kind != Symbol::Kind::Channel) {
      diag(DiagKind::UnknownChannel, e.pos, "unknown channel '" + e.sync.channel + "'");
      return;
    }
    const Symbol& s = cm_.symbols[sym];
    if (e.sync.index) {
      TypePtr t = check_expr(*e.sync.index, nullptr);
      if (!t->is_numeric()) diag(DiagKind::TypeError, e.pos, "channel index must be numeric");
      if (s.channel_count <= 1)
        diag(DiagKind::TypeError, e.pos, "channel '" + e.sync.channel + "' is not an array");
    } else if (s.channel_count > 1) {
      diag(DiagKind::TypeError, e.pos, "channel array '" + e.sync.channel + "' needs an index");
    }
    (void)a;
  }

  void check_instances(const ModelNetwork& n) {
    if (n.instances.empty() && !n.automata.empty()) return; // open template set is fine
    for (const auto& inst : n.instances) {
      const Automaton* a = n.find_automaton(inst.automaton_name);
      if (!a) {
        diag(DiagKind::UnknownIdentifier, inst.pos, "unknown automaton '" + inst.automaton_name + "'");
        continue;
      }
      if (inst.args.size() != a->params.size()) {
        diag(DiagKind::ArityError, inst.pos,
             "instance '" + inst.instance_name + "' passes " + std::to_string(inst.args.size()) +
                 " arguments, automaton takes " + std::to_string(a->params.size()));
        continue;
      }
      for (const auto& arg : inst.args) {
        check_expr(*arg, nullptr);
        int64_t v;
        if (!try_const_eval(arg.get(), v))
          diag(DiagKind::TypeError, inst.pos, "instance arguments must be constant expressions");
      }
    }
  }

  // -- queries ------------------------------------------------------------------

  void check_queries(const ModelNetwork& n) {
    for (const auto& q : n.queries) {
      query_network_ = &n;
      if (q.predicate) require_bool_query(*q.predicate);
      if (q.predicate2) require_bool_query(*q.predicate2);
      for (const auto& m : q.monitors) {
        TypePtr t = check_query_expr(*m);
        if (!t->is_numeric())
          diag(DiagKind::TypeError, m->pos, "monitored expressions must be numeric");
      }
      query_network_ = nullptr;
    }
  }
  void require_bool_query(const Expr& e) {
    TypePtr t = check_query_expr(e);
    if (t->kind != Kind::Bool)
      diag(DiagKind::TypeError, e.pos, "query predicate must be boolean");
  }

  TypePtr check_query_expr(const Expr& e) {
    // Query scope: globals plus Instance.member / Instance.Location references.
    in_query_ = true;
    TypePtr t = check_expr(e, nullptr);
    in_query_ = false;
    return t;
  }

  // -- expressions ----------------------------------------------------------------

  TypePtr bool_type() { return std::make_shared<TypeRef>(TypeRef{Kind::Bool}); }
  TypePtr int_type() { return std::make_shared<TypeRef>(TypeRef{Kind::Int}); }

  void require_bool(const Expr& e, CompiledFunction* cf) {
    TypePtr t = check_expr(e, cf);
    if (t->kind != Kind::Bool && t->kind != Kind::Unsupported)
      diag(DiagKind::TypeError, e.pos, "expected boolean expression");
  }

  void require_assignable(const TypeRef& dst, const TypeRef& src, SourcePos pos) {
    if (dst.kind == Kind::Unsupported || src.kind == Kind::Unsupported) return;
    if (dst.kind == Kind::Bool || src.kind == Kind::Bool) {
      if (dst.kind != src.kind)
        diag(DiagKind::TypeError, pos, "cannot mix bool and numeric values");
      return;
    }
    if (dst.is_numeric() && src.is_numeric()) return;
    if (dst.kind == Kind::Record && src.kind == Kind::Record) {
      if (dst.record_name != src.record_name)
        diag(DiagKind::TypeError, pos, "record types differ");
      return;
    }
    if (dst.kind == Kind::Array && src.kind == Kind::Array) {
      if (dst.array_size != src.array_size)
        diag(DiagKind::TypeError, pos, "array sizes differ");
      else
        require_assignable(*dst.element, *src.element, pos);
      return;
    }
    diag(DiagKind::TypeError, pos, "incompatible types in assignment");
  }

  TypePtr check_expr(const Expr& e, CompiledFunction* cf) {
    TypePtr t = check_expr_inner(e, cf);
    info_of(e).type = t;
    return t;
  }

  TypePtr check_expr_inner(const Expr& e, CompiledFunction* cf) {
    switch (e.kind) {
      case Expr::Kind::IntLit: {
        auto& info = info_of(e);
        info.folded = true;
        info.value = e.int_value;
        info.is_const_expr = true;
        return int_type();
      }
      case Expr::Kind::BoolLit: {
        auto& info = info_of(e);
        info.folded = true;
        info.value = e.bool_value ? 1 : 0;
        info.is_const_expr = true;
        return bool_type();
      }
      case Expr::Kind::Deadlock:
        diag(DiagKind::NotSupported, e.pos, "'deadlock' is only supported as 'A[] no deadlock'");
        return bool_type();
      case Expr::Kind::Quantifier:
        diag(DiagKind::NotSupported, e.pos, "'" + e.quant_kind + "' expressions are not supported");
        return bool_type();
      case Expr::Kind::Ident: {
        int sym = lookup(scopes_, e.name);
        if (sym < 0 && in_query_ && query_network_) {
          // maybe an instance name; resolved at the Field level
          int inst = query_network_->instance_index(e.name);
          if (inst >= 0) {
            info_of(e).instance = inst;
            return std::make_shared<TypeRef>(TypeRef{Kind::Unsupported});
          }
        }
        if (sym < 0) {
          diag(DiagKind::UnknownIdentifier, e.pos, "unknown identifier '" + e.name + "'");
          return int_type();
        }
        const Symbol& s = cm_.symbols[sym];
        if (s.kind == Symbol::Kind::Channel) {
          diag(DiagKind::TypeError, e.pos, "channel '" + e.name + "' used as value");
          return int_type();
        }
        auto& info = info_of(e);
        info.symbol = sym;
        if (s.kind == Symbol::Kind::Function) {
          info.func = s.func_index;
          return s.type;
        }
        if (s.is_const && s.const_folded) {
          info.is_const_expr = true;
          info.folded = true;
          info.value = s.const_value;
        }
        return s.type;
      }
      case Expr::Kind::Index: {
        TypePtr base = check_expr(*e.a, cf);
        TypePtr idx = check_expr(*e.b, cf);
        if (!idx->is_numeric()) diag(DiagKind::TypeError, e.pos, "array index must be numeric");
        if (base->kind == Kind::Array) return base->element;
        if (base->kind != Kind::Unsupported)
          diag(DiagKind::TypeError, e.pos, "indexing a non-array value");
        return int_type();
      }
      case Expr::Kind::Field: {
        // Query-scope instance references: Inst.Location / Inst.member / Inst.func
        if (in_query_ && e.a->kind == Expr::Kind::Ident && query_network_) {
          int inst = query_network_->instance_index(e.a->name);
          if (inst >= 0 && lookup(scopes_, e.a->name) < 0) {
            info_of(*e.a).instance = inst;
            return resolve_instance_member(e, inst);
          }
        }
        TypePtr base = check_expr(*e.a, cf);
        if (base->kind == Kind::Record) {
          for (const auto& f : base->fields)
            if (f.name == e.name) return f.type;
          diag(DiagKind::TypeError, e.pos, "no field '" + e.name + "' in record");
          return int_type();
        }
        if (base->kind != Kind::Unsupported)
          diag(DiagKind::TypeError, e.pos, "field access on a non-record value");
        return int_type();
      }
      case Expr::Kind::Unary: {
        TypePtr t = check_expr(*e.a, cf);
        if (e.unary_op == UnaryOp::Not) {
          if (t->kind != Kind::Bool && t->kind != Kind::Unsupported)
            diag(DiagKind::TypeError, e.pos, "'!' requires a boolean operand");
          return bool_type();
        }
        if (!t->is_numeric() && t->kind != Kind::Unsupported)
          diag(DiagKind::TypeError, e.pos, "numeric operand required");
        if (e.unary_op != UnaryOp::Plus && e.unary_op != UnaryOp::Minus) require_lvalue(*e.a);
        return int_type();
      }
      case Expr::Kind::Binary: {
        TypePtr a = check_expr(*e.a, cf);
        TypePtr b = check_expr(*e.b, cf);
        switch (e.binary_op) {
          case BinaryOp::And: case BinaryOp::Or: case BinaryOp::Imply:
            if ((a->kind != Kind::Bool && a->kind != Kind::Unsupported) ||
                (b->kind != Kind::Bool && b->kind != Kind::Unsupported))
              diag(DiagKind::TypeError, e.pos, "logical operators require boolean operands");
            return bool_type();
          case BinaryOp::Eq: case BinaryOp::Ne:
            if (a->is_scalar() && b->is_scalar() && (a->kind == Kind::Bool) != (b->kind == Kind::Bool))
              diag(DiagKind::TypeError, e.pos, "cannot compare bool with numeric");
            return bool_type();
          case BinaryOp::Lt: case BinaryOp::Le: case BinaryOp::Gt: case BinaryOp::Ge:
            if (!a->is_numeric() || !b->is_numeric())
              diag(DiagKind::TypeError, e.pos, "comparison requires numeric operands");
            return bool_type();
          default:
            if (!a->is_numeric() || !b->is_numeric())
              diag(DiagKind::TypeError, e.pos, "arithmetic requires numeric operands");
            fold_binary(e);
            return int_type();
        }
      }
      case Expr::Kind::Ternary: {
        require_bool(*e.a, cf);
        TypePtr b = check_expr(*e.b, cf);
        TypePtr c = check_expr(*e.c, cf);
        if (b->is_scalar() && c->is_scalar() && (b->kind == Kind::Bool) != (c->kind == Kind::Bool))
          diag(DiagKind::TypeError, e.pos, "ternary branches have different types");
        return b;
      }
      case Expr::Kind::Assign: {
        TypePtr lhs = check_expr(*e.a, cf);
        TypePtr rhs = check_expr(*e.b, cf);
        require_lvalue(*e.a);
        if (e.assign_op == AssignOp::Assign) {
          require_assignable(*lhs, *rhs, e.pos);
        } else {
          if (!lhs->is_numeric() || !rhs->is_numeric())
            diag(DiagKind::TypeError, e.pos, "compound assignment requires numeric operands");
        }
        return lhs;
      }
      case Expr::Kind::Call: {
        int func = -1;
        if (e.a->kind == Expr::Kind::Ident) {
          TypePtr ct = check_expr(*e.a, cf);
          func = info_of(*e.a).func;
          if (func < 0) {
            diag(DiagKind::TypeError, e.pos, "'" + e.a->name + "' is not a function");
            return ct;
          }
        } else if (in_query_ && e.a->kind == Expr::Kind::Field) {
          TypePtr ct = check_expr(*e.a, cf);
          func = info_of(*e.a).func;
          if (func < 0) {
            diag(DiagKind::TypeError, e.pos, "call target is not a function");
            return ct;
          }
        } else {
          diag(DiagKind::TypeError, e.pos, "call target must be a function name");
          return int_type();
        }
        const CompiledFunction& f = cm_.functions[func];
        if (e.args.size() != f.param_types.size()) {
          diag(DiagKind::ArityError, e.pos,
               "call passes " + std::to_string(e.args.size()) + " arguments, function takes " +
                   std::to_string(f.param_types.size()));
        }
        for (size_t i = 0; i < e.args.size(); ++i) {
          TypePtr at = check_expr(*e.args[i], cf);
          if (i < f.param_types.size()) require_assignable(*f.param_types[i], *at, e.args[i]->pos);
        }
        info_of(e).func = func;
        return f.return_type;
      }
    }
    return int_type();
  }

  TypePtr resolve_instance_member(const Expr& field, int inst) {
    const InstanceDecl& id = query_network_->instances[inst];
    const Automaton* a = query_network_->find_automaton(id.automaton_name);
    auto& info = info_of(field);
    info.instance = inst;
    if (!a) return int_type();
    int ai = -1;
    for (size_t i = 0; i < query_network_->automata.size(); ++i)
      if (&query_network_->automata[i] == a) ai = static_cast<int>(i);
    int loc = a->location_index(field.name);
    if (loc >= 0) {
      info.location = loc;
      return bool_type();
    }
    // instance-local variable or function
    auto it = automaton_scopes_[ai].find(field.name);
    if (it != automaton_scopes_[ai].end()) {
      const Symbol& s = cm_.symbols[it->second];
      info.symbol = it->second;
      if (s.kind == Symbol::Kind::Function) info.func = s.func_index;
      return s.type;
    }
    diag(DiagKind::UnknownIdentifier, field.pos,
         "'" + field.name + "' is neither a location nor a member of '" + id.instance_name + "'");
    return int_type();
  }

  void require_lvalue(const Expr& e) {
    if (e.kind == Expr::Kind::Ident) {
      int sym = info_of(e).symbol;
      if (sym >= 0 && cm_.symbols[sym].is_const)
        diag(DiagKind::TypeError, e.pos, "cannot assign to constant '" + e.name + "'");
      return;
    }
    if (e.kind == Expr::Kind::Index || e.kind == Expr::Kind::Field) {
      require_lvalue(*e.a);
      return;
    }
    diag(DiagKind::TypeError, e.pos, "expression is not assignable");
  }

  void fold_binary(const Expr& e) {
    const auto& a = info_of(*e.a);
    const auto& b = info_of(*e.b);
    if (!a.folded || !b.folded) return;
    int64_t v = 0;
    switch (e.binary_op) {
      case BinaryOp::Add: v = a.value + b.value; break;
      case BinaryOp::Sub: v = a.value - b.value; break;
      case BinaryOp::Mul: v = a.value * b.value; break;
      case BinaryOp::Div: if (b.value == 0) return; v = a.value / b.value; break;
      case BinaryOp::Mod: if (b.value == 0) return; v = a.value % b.value; break;
      default: return;
    }
    auto& info = info_of(e);
    info.folded = true;
    info.value = v;
    info.is_const_expr = a.is_const_expr && b.is_const_expr;
  }

  bool try_const_eval(const Expr* e, int64_t& out) {
    if (!e) return false;
    switch (e->kind) {
      case Expr::Kind::IntLit: out = e->int_value; return true;
      case Expr::Kind::BoolLit: out = e->bool_value ? 1 : 0; return true;
      case Expr::Kind::Ident: {
        int sym = lookup(scopes_, e->name);
        if (sym < 0) return false;
        const Symbol& s = cm_.symbols[sym];
        if (s.kind == Symbol::Kind::Variable && s.is_const && s.const_folded) {
          out = s.const_value;
          return true;
        }
        return false;
      }
      case Expr::Kind::Unary: {
        int64_t v;
        if (!try_const_eval(e->a.get(), v)) return false;
        switch (e->unary_op) {
          case UnaryOp::Plus: out = v; return true;
          case UnaryOp::Minus: out = -v; return true;
          case UnaryOp::Not: out = v ? 0 : 1; return true;
          default: return false;
        }
      }
      case Expr::Kind::Binary: {
        int64_t a, b;
        if (!try_const_eval(e->a.get(), a) || !try_const_eval(e->b.get(), b)) return false;
        switch (e->binary_op) {
          case BinaryOp::Add: out = a + b; return true;
          case BinaryOp::Sub: out = a - b; return true;
          case BinaryOp::Mul: out = a * b; return true;
          case BinaryOp::Div: if (b == 0) return false; out = a / b; return true;
          case BinaryOp::Mod: if (b == 0) return false; out = a % b; return true;
          case BinaryOp::Min: out = std::min(a, b); return true;
          case BinaryOp::Max: out = std::max(a, b); return true;
          default: return false;
        }
      }
      default: return false;
    }
  }

  int64_t const_eval_or(const Expr* e, int64_t fallback) {
    int64_t v;
    if (try_const_eval(e, v)) return v;
    if (e) diag(DiagKind::TypeError, e->pos, "expected a constant expression");
    return fallback;
  }

  CheckedModel cm_;
  std::vector<std::unordered_map<std::string, int>> scopes_;
  std::vector<std::unordered_map<std::string, int>> automaton_scopes_;
  int frame_top_ = 0;
  bool in_query_ = false;
  const ModelNetwork* query_network_ = nullptr;
};

/// Type-checks a parsed network; diagnostics are collected, never thrown.
inline CheckedModel typecheck_model(ModelNetwork net) {
  TypeChecker tc;
  return tc.run(std::move(net));
}

/// Parses and checks in one step; throws on syntax errors.
inline CheckedModel load_and_check(std::string_view text) {
  ParseResult pr = parse_model(text);
  if (!pr.ok()) throw Error(Error::Kind::ParseError, join_diagnostics(pr.diagnostics));
  return typecheck_model(std::move(pr.network));
}

} // namespace activforms
