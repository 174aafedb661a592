#ifndef SEALEDRULES_RULE_H_
#define SEALEDRULES_RULE_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sealedrules/bytes.h"

namespace sealedrules {

// Opaque, non-empty identifier of a device (at most 128 bytes).
class DeviceId {
 public:
  static constexpr std::size_t kMaxLength = 128;

  // Throws SchemaError when the value violates the length bounds.
  explicit DeviceId(std::string value);

  const std::string& value() const noexcept { return value_; }

  friend bool operator==(const DeviceId&, const DeviceId&) = default;
  friend auto operator<=>(const DeviceId&, const DeviceId&) = default;

 private:
  std::string value_;
};

// A reading or a rule operand. Equality is type-strict: "90" != 90.
using Scalar = std::variant<std::string, double, bool>;

bool IsNumeric(const Scalar& s);
std::string ScalarToString(const Scalar& s);

struct DeviceEvent {
  DeviceId device;
  std::string capability;
  std::string attribute;
  Scalar value;
  std::int64_t timestamp_us = 0;

  friend bool operator==(const DeviceEvent&, const DeviceEvent&) = default;
};

enum class Operator {
  kEquals,
  kGreaterThan,
  kLessThan,
  kGreaterThanOrEquals,
  kLessThanOrEquals,
};

std::string_view OperatorName(Operator op);
std::optional<Operator> ParseOperator(std::string_view name);

struct Condition {
  DeviceId device;
  std::string attribute;
  Operator op = Operator::kEquals;
  Scalar value;

  friend bool operator==(const Condition&, const Condition&) = default;
};

struct ActionCommand {
  DeviceId device;
  std::string capability;
  std::string command;
  std::vector<Scalar> arguments;

  friend bool operator==(const ActionCommand&, const ActionCommand&) = default;
};

enum class Combinator { kAll, kAny };

struct Rule {
  std::string id;
  std::string name;
  std::vector<Condition> conditions;
  Combinator combinator = Combinator::kAll;
  std::vector<ActionCommand> actions;

  friend bool operator==(const Rule&, const Rule&) = default;

  // True when any condition or action names the device.
  bool References(const DeviceId& d) const;
  // True when any condition names the device.
  bool TriggeredBy(const DeviceId& d) const;
  // Distinct condition devices, in first-appearance order.
  std::vector<DeviceId> TriggerDevices() const;
};

// Parsing. Unknown fields are ignored. Throws SyntaxError on malformed JSON
// and SchemaError on missing or ill-typed fields.
Rule ParseRule(std::string_view json_text);
DeviceEvent ParseEvent(std::string_view json_text);
ActionCommand ParseCommand(std::string_view json_text);
// A JSON array of rules, or an object with a "rules" array.
std::vector<Rule> ParseRuleset(std::string_view json_text);

// One upload message: a ruleset, optionally flagged to extend the stored
// records of its devices rather than replace them. Accepts the same forms
// as ParseRuleset plus {"rules":[...],"append":true}.
struct RulesetUpload {
  std::vector<Rule> rules;
  bool append = false;
};
RulesetUpload ParseRulesetUpload(std::string_view json_text);
std::string SerializeRulesetUpload(const RulesetUpload& upload);
// Splits a ruleset into upload messages of at most max_bytes each. The
// first message replaces, the rest append. Throws SchemaError when a single
// rule does not fit.
std::vector<std::string> SplitRulesetUpload(const std::vector<Rule>& rules,
                                            std::size_t max_bytes);

std::string SerializeRule(const Rule& rule);
std::string SerializeEvent(const DeviceEvent& event);
std::string SerializeCommand(const ActionCommand& command);
std::string SerializeRuleset(const std::vector<Rule>& rules);

// Rejects duplicate rule ids. Throws SchemaError.
void ValidateRuleset(const std::vector<Rule>& rules);

// False when device or attribute differ, or when the operator is not
// applicable to the pair of values.
bool MatchCondition(const Condition& c, const DeviceEvent& e);

// Applies the operator to two values. Mixed kinds never compare equal;
// numeric operators require two numbers.
bool ApplyOperator(Operator op, const Scalar& observed, const Scalar& expected);

// Returns the rule's actions, in declaration order, when the combinator over
// per-condition matches holds; otherwise an empty list.
std::vector<ActionCommand> EvaluateRule(const Rule& rule,
                                        const DeviceEvent& event);

// Resolves the last known value of (device, attribute), if any.
using ValueLookup = std::function<std::optional<Scalar>(
    const DeviceId& device, std::string_view attribute)>;

// Observation points used by access tracing. Either member may be empty.
struct EvaluationHooks {
  std::function<void()> on_condition;
  std::function<void()> on_action;
};

// Like EvaluateRule, but conditions that do not concern the event's
// (device, attribute) pair are checked against lookup(). Conditions with no
// known value do not hold. Conditions are visited in order and evaluation
// stops as soon as the combinator is decided.
std::vector<ActionCommand> EvaluateRuleWithContext(
    const Rule& rule, const DeviceEvent& event, const ValueLookup& lookup,
    const EvaluationHooks* hooks = nullptr);

}  // namespace sealedrules

template <>
struct std::hash<sealedrules::DeviceId> {
  std::size_t operator()(const sealedrules::DeviceId& d) const noexcept {
    return std::hash<std::string>{}(d.value());
  }
};

#endif  // SEALEDRULES_RULE_H_
