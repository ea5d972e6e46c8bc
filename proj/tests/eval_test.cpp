#include <gtest/gtest.h>

#include "activforms/engine.hpp"
#include "activforms/eval.hpp"
#include "activforms/parser.hpp"
#include "activforms/typecheck.hpp"

using namespace activforms;

namespace {

// Expression evaluation is exercised through model initializers and functions,
// which is the path the engine itself uses.
int64_t run_function(const std::string& decls, const std::string& fn, int64_t fallback = -1) {
  std::string text = decls + "\nautomaton A { init location L; }\nsystem A;\n";
  CheckedModel checked = load_and_check(text);
  if (!checked.ok()) {
    ADD_FAILURE() << join_diagnostics(checked.diagnostics);
    return fallback;
  }
  auto cm = std::make_shared<CheckedModel>(std::move(checked));
  auto engine = load_model(cm);
  int func = -1;
  for (size_t i = 0; i < cm->functions.size(); ++i)
    if (cm->functions[i].decl->name == fn) func = static_cast<int>(i);
  if (func < 0) {
    ADD_FAILURE() << "no function " << fn;
    return fallback;
  }
  Evaluator ev(*cm);
  return ev.call_function(func, {}, engine->mutable_state(), -1);
}

TEST(Eval, PrecedenceAndArithmetic) {
  EXPECT_EQ(run_function("int f() { return 2 + 3 * 4; }", "f"), 14);
  EXPECT_EQ(run_function("int f() { return (2 + 3) * 4; }", "f"), 20);
  EXPECT_EQ(run_function("int f() { return 7 / 2; }", "f"), 3);
  EXPECT_EQ(run_function("int f() { return -7 / 2; }", "f"), -3); // truncation toward zero
  EXPECT_EQ(run_function("int f() { return -7 % 2; }", "f"), -1);
  EXPECT_EQ(run_function("int f() { return 3 <? 5; }", "f"), 3);
  EXPECT_EQ(run_function("int f() { return 3 >? 5; }", "f"), 5);
}

TEST(Eval, TernaryAndShortCircuitAreLazy) {
  const char* decls = R"(
int hits = 0;
int bump() { hits = hits + 1; return 1; }
int f() {
  bool c;
  c = false && bump() == 1;
  c = true || bump() == 1;
  return (1 == 1) ? 42 : bump();
}
int probes() { return hits; }
)";
  EXPECT_EQ(run_function(decls, "f"), 42);
  std::string text = std::string(decls) + "\nautomaton A { init location L; }\nsystem A;\n";
  auto cm = std::make_shared<CheckedModel>(load_and_check(text));
  auto engine = load_model(cm);
  Evaluator ev(*cm);
  int f = -1, probes = -1;
  for (size_t i = 0; i < cm->functions.size(); ++i) {
    if (cm->functions[i].decl->name == "f") f = static_cast<int>(i);
    if (cm->functions[i].decl->name == "probes") probes = static_cast<int>(i);
  }
  ev.call_function(f, {}, engine->mutable_state(), -1);
  EXPECT_EQ(ev.call_function(probes, {}, engine->mutable_state(), -1), 0);
}

TEST(Eval, RecordFieldComparison) {
  // mirrors the goal test: gConf.qualities.packetLoss < MAX_PACKET_LOSS
  const char* decls = R"(
const int MAX_PACKET_LOSS = 10;
typedef struct {
  int packetLoss;
  int energyConsumption;
} Qualities;
typedef struct {
  Qualities qualities;
} Configuration;
Configuration gConf = { 9, 125 };
bool f() { return gConf.qualities.packetLoss < MAX_PACKET_LOSS; }
)";
  EXPECT_EQ(run_function(decls, "f"), 1);
}

TEST(Eval, ArrayOutOfBoundsRaises) {
  const char* decls = R"(
int a[3] = { 1, 2, 3 };
int f() { return a[3]; }
)";
  std::string text = std::string(decls) + "\nautomaton A { init location L; }\nsystem A;\n";
  auto cm = std::make_shared<CheckedModel>(load_and_check(text));
  auto engine = load_model(cm);
  Evaluator ev(*cm);
  int f = 0;
  for (size_t i = 0; i < cm->functions.size(); ++i)
    if (cm->functions[i].decl->name == "f") f = static_cast<int>(i);
  try {
    ev.call_function(f, {}, engine->mutable_state(), -1);
    FAIL() << "expected ArrayIndexOutOfBounds";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), Error::Kind::ArrayIndexOutOfBounds);
  }
}

TEST(Eval, DivisionByZeroRaises) {
  const char* decls = "int z = 0;\nint f() { return 4 / z; }";
  std::string text = std::string(decls) + "\nautomaton A { init location L; }\nsystem A;\n";
  auto cm = std::make_shared<CheckedModel>(load_and_check(text));
  auto engine = load_model(cm);
  Evaluator ev(*cm);
  try {
    ev.call_function(0, {}, engine->mutable_state(), -1);
    FAIL() << "expected DivisionByZero";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), Error::Kind::DivisionByZero);
  }
}

TEST(Eval, RangeViolationOnRangedAssignment) {
  const char* decls = R"(
int[0,15] p = 0;
int f() { p = 16; return p; }
)";
  std::string text = std::string(decls) + "\nautomaton A { init location L; }\nsystem A;\n";
  auto cm = std::make_shared<CheckedModel>(load_and_check(text));
  auto engine = load_model(cm);
  Evaluator ev(*cm);
  try {
    ev.call_function(0, {}, engine->mutable_state(), -1);
    FAIL() << "expected RangeViolation";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), Error::Kind::RangeViolation);
  }
}

TEST(Eval, LoopsAndLocals) {
  const char* decls = R"(
int f() {
  int total = 0;
  int i;
  for (i = 0; i < 5; i = i + 1) {
    total += i;
  }
  int j = 0;
  while (j < 3) {
    total += 10;
    j++;
  }
  do {
    total += 100;
  } while (false);
  for (k : int[1,3]) {
    total += k;
  }
  return total;
}
)";
  EXPECT_EQ(run_function(decls, "f"), 10 + 30 + 100 + 6);
}

TEST(Eval, StructCopyAssignment) {
  const char* decls = R"(
typedef struct {
  int moteId;
  int linkId;
  int stepType;
  int newValue;
} Step;
Step plan[2];
Step tmp = { 7, 3, 1, 60 };
int f() {
  plan[1] = tmp;
  return plan[1].moteId * 100 + plan[1].newValue;
}
)";
  EXPECT_EQ(run_function(decls, "f"), 760);
}

TEST(Eval, PurityWithoutAssignments) {
  const char* decls = R"(
int base = 21;
int f() { return base * 2; }
)";
  std::string text = std::string(decls) + "\nautomaton A { init location L; }\nsystem A;\n";
  auto cm = std::make_shared<CheckedModel>(load_and_check(text));
  auto engine = load_model(cm);
  Evaluator ev(*cm);
  MachineState before = engine->state();
  EXPECT_EQ(ev.call_function(0, {}, engine->mutable_state(), -1), 42);
  EXPECT_EQ(ev.call_function(0, {}, engine->mutable_state(), -1), 42);
  EXPECT_TRUE(before == engine->state());
}

TEST(Eval, RangedDefaultsToLowerBoundWhenZeroExcluded) {
  const char* decls = R"(
int[5,10] v;
int f() { return v; }
)";
  EXPECT_EQ(run_function(decls, "f"), 5);
}

} // namespace
