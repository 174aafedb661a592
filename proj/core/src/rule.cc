#include "sealedrules/rule.h"

#include <algorithm>
#include <charconv>
#include <unordered_set>

#include "json.hpp"
#include "sealedrules/error.h"

namespace sealedrules {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

DeviceId::DeviceId(std::string value) : value_(std::move(value)) {
  if (value_.empty()) throw SchemaError("device id must be non-empty");
  if (value_.size() > kMaxLength) {
    throw SchemaError("device id longer than 128 bytes");
  }
}

bool IsNumeric(const Scalar& s) { return std::holds_alternative<double>(s); }

std::string ScalarToString(const Scalar& s) {
  if (const auto* str = std::get_if<std::string>(&s)) return *str;
  if (const auto* b = std::get_if<bool>(&s)) return *b ? "true" : "false";
  return json(std::get<double>(s)).dump();
}

std::string_view OperatorName(Operator op) {
  switch (op) {
    case Operator::kEquals:
      return "equals";
    case Operator::kGreaterThan:
      return "greater_than";
    case Operator::kLessThan:
      return "less_than";
    case Operator::kGreaterThanOrEquals:
      return "greater_than_or_equals";
    case Operator::kLessThanOrEquals:
      return "less_than_or_equals";
  }
  return "equals";
}

std::optional<Operator> ParseOperator(std::string_view name) {
  for (Operator op :
       {Operator::kEquals, Operator::kGreaterThan, Operator::kLessThan,
        Operator::kGreaterThanOrEquals, Operator::kLessThanOrEquals}) {
    if (OperatorName(op) == name) return op;
  }
  return std::nullopt;
}

bool Rule::References(const DeviceId& d) const {
  return TriggeredBy(d) ||
         std::any_of(actions.begin(), actions.end(),
                     [&](const ActionCommand& a) { return a.device == d; });
}

bool Rule::TriggeredBy(const DeviceId& d) const {
  return std::any_of(conditions.begin(), conditions.end(),
                     [&](const Condition& c) { return c.device == d; });
}

std::vector<DeviceId> Rule::TriggerDevices() const {
  std::vector<DeviceId> out;
  for (const Condition& c : conditions) {
    if (std::find(out.begin(), out.end(), c.device) == out.end()) {
      out.push_back(c.device);
    }
  }
  return out;
}

namespace {

json ParseJson(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SyntaxError(std::string("malformed JSON: ") + e.what());
  }
}

const json& Field(const json& obj, const char* name, const std::string& ctx) {
  auto it = obj.find(name);
  if (it == obj.end()) {
    throw SchemaError(ctx + ": missing field '" + name + "'");
  }
  return *it;
}

std::string StringField(const json& obj, const char* name,
                        const std::string& ctx, bool required = true,
                        bool non_empty = false) {
  auto it = obj.find(name);
  if (it == obj.end()) {
    if (required) throw SchemaError(ctx + ": missing field '" + name + "'");
    return {};
  }
  if (!it->is_string()) {
    throw SchemaError(ctx + ": field '" + name + "' must be a string");
  }
  std::string s = it->get<std::string>();
  if (non_empty && s.empty()) {
    throw SchemaError(ctx + ": field '" + name + "' must be non-empty");
  }
  return s;
}

DeviceId DeviceField(const json& obj, const std::string& ctx) {
  std::string s = StringField(obj, "device", ctx);
  try {
    return DeviceId(std::move(s));
  } catch (const SchemaError& e) {
    throw SchemaError(ctx + ": " + e.what());
  }
}

Scalar ScalarFromJson(const json& v, const std::string& ctx) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number()) return v.get<double>();
  throw SchemaError(ctx + ": value must be a string, number or boolean");
}

ojson ScalarToJson(const Scalar& s) {
  return std::visit([](const auto& v) { return ojson(v); }, s);
}

void RequireObject(const json& j, const std::string& ctx) {
  if (!j.is_object()) throw SchemaError(ctx + ": expected a JSON object");
}

Condition ConditionFromJson(const json& j, const std::string& ctx) {
  RequireObject(j, ctx);
  DeviceId device = DeviceField(j, ctx);
  std::string attribute = StringField(j, "attribute", ctx, true, true);
  std::string op_name = StringField(j, "operator", ctx);
  auto op = ParseOperator(op_name);
  if (!op) throw SchemaError(ctx + ": unknown operator '" + op_name + "'");
  Scalar value = ScalarFromJson(Field(j, "value", ctx), ctx);
  if (*op != Operator::kEquals && !IsNumeric(value)) {
    throw SchemaError(ctx + ": operator '" + op_name +
                      "' requires a numeric value");
  }
  return Condition{std::move(device), std::move(attribute), *op,
                   std::move(value)};
}

ActionCommand CommandFromJson(const json& j, const std::string& ctx) {
  RequireObject(j, ctx);
  ActionCommand a{DeviceField(j, ctx), StringField(j, "capability", ctx, false),
                  StringField(j, "command", ctx, true, true),
                  {}};
  if (auto it = j.find("arguments"); it != j.end()) {
    if (!it->is_array()) throw SchemaError(ctx + ": 'arguments' must be a list");
    for (const json& arg : *it) a.arguments.push_back(ScalarFromJson(arg, ctx));
  }
  return a;
}

Rule RuleFromJson(const json& j, const std::string& ctx_in) {
  RequireObject(j, ctx_in);
  Rule r;
  r.id = StringField(j, "id", ctx_in, true, true);
  const std::string ctx = ctx_in + " '" + r.id + "'";
  r.name = StringField(j, "name", ctx, false);

  const json& conds = Field(j, "if", ctx);
  if (!conds.is_array() || conds.empty()) {
    throw SchemaError(ctx + ": 'if' must be a non-empty list");
  }
  for (std::size_t i = 0; i < conds.size(); ++i) {
    r.conditions.push_back(
        ConditionFromJson(conds[i], ctx + " if[" + std::to_string(i) + "]"));
  }

  if (auto it = j.find("combinator"); it != j.end()) {
    if (!it->is_string()) throw SchemaError(ctx + ": 'combinator' must be a string");
    const auto c = it->get<std::string>();
    if (c == "all") {
      r.combinator = Combinator::kAll;
    } else if (c == "any") {
      r.combinator = Combinator::kAny;
    } else {
      throw SchemaError(ctx + ": unknown combinator '" + c + "'");
    }
  }

  const json& acts = Field(j, "then", ctx);
  if (!acts.is_array() || acts.empty()) {
    throw SchemaError(ctx + ": 'then' must be a non-empty list");
  }
  for (std::size_t i = 0; i < acts.size(); ++i) {
    r.actions.push_back(
        CommandFromJson(acts[i], ctx + " then[" + std::to_string(i) + "]"));
  }
  return r;
}

ojson ConditionToJson(const Condition& c) {
  ojson j;
  j["device"] = c.device.value();
  j["attribute"] = c.attribute;
  j["operator"] = OperatorName(c.op);
  j["value"] = ScalarToJson(c.value);
  return j;
}

ojson CommandToJson(const ActionCommand& a) {
  ojson j;
  j["device"] = a.device.value();
  j["capability"] = a.capability;
  j["command"] = a.command;
  ojson args = ojson::array();
  for (const Scalar& s : a.arguments) args.push_back(ScalarToJson(s));
  j["arguments"] = std::move(args);
  return j;
}

ojson RuleToJson(const Rule& r) {
  ojson j;
  j["id"] = r.id;
  j["name"] = r.name;
  ojson conds = ojson::array();
  for (const Condition& c : r.conditions) conds.push_back(ConditionToJson(c));
  j["if"] = std::move(conds);
  j["combinator"] = r.combinator == Combinator::kAll ? "all" : "any";
  ojson acts = ojson::array();
  for (const ActionCommand& a : r.actions) acts.push_back(CommandToJson(a));
  j["then"] = std::move(acts);
  return j;
}

}  // namespace

Rule ParseRule(std::string_view json_text) {
  return RuleFromJson(ParseJson(json_text), "rule");
}

DeviceEvent ParseEvent(std::string_view json_text) {
  const json j = ParseJson(json_text);
  const std::string ctx = "event";
  RequireObject(j, ctx);
  DeviceEvent e{DeviceField(j, ctx), StringField(j, "capability", ctx, false),
                StringField(j, "attribute", ctx, true, true),
                ScalarFromJson(Field(j, "value", ctx), ctx), 0};
  if (auto it = j.find("timestamp"); it != j.end()) {
    if (!it->is_number_integer() || it->get<std::int64_t>() < 0) {
      throw SchemaError(ctx + ": 'timestamp' must be a non-negative integer");
    }
    e.timestamp_us = it->get<std::int64_t>();
  }
  return e;
}

ActionCommand ParseCommand(std::string_view json_text) {
  return CommandFromJson(ParseJson(json_text), "command");
}

namespace {

std::vector<Rule> RulesetFromJson(const json& j) {
  const json* list = &j;
  if (j.is_object()) {
    list = &Field(j, "rules", "ruleset");
  }
  if (!list->is_array()) throw SchemaError("ruleset: expected a list of rules");
  std::vector<Rule> rules;
  rules.reserve(list->size());
  for (std::size_t i = 0; i < list->size(); ++i) {
    rules.push_back(RuleFromJson((*list)[i], "rules[" + std::to_string(i) + "]"));
  }
  ValidateRuleset(rules);
  return rules;
}

}  // namespace

std::vector<Rule> ParseRuleset(std::string_view json_text) {
  return RulesetFromJson(ParseJson(json_text));
}

RulesetUpload ParseRulesetUpload(std::string_view json_text) {
  const json j = ParseJson(json_text);
  RulesetUpload upload;
  upload.rules = RulesetFromJson(j);
  if (j.is_object() && j.contains("append")) {
    if (!j["append"].is_boolean()) throw SchemaError("ruleset: 'append' must be a boolean");
    upload.append = j["append"].get<bool>();
  }
  return upload;
}

std::string SerializeRulesetUpload(const RulesetUpload& upload) {
  ojson j;
  ojson arr = ojson::array();
  for (const Rule& r : upload.rules) arr.push_back(RuleToJson(r));
  j["rules"] = std::move(arr);
  if (upload.append) j["append"] = true;
  return j.dump();
}

std::vector<std::string> SplitRulesetUpload(const std::vector<Rule>& rules,
                                            std::size_t max_bytes) {
  // {"rules":[ ... ],"append":true}
  constexpr std::size_t kOverhead = 32;
  std::vector<std::string> out;
  RulesetUpload part;
  std::size_t bytes = kOverhead;
  auto flush = [&] {
    out.push_back(SerializeRulesetUpload(part));
    part.rules.clear();
    part.append = true;
    bytes = kOverhead;
  };
  for (const Rule& r : rules) {
    const std::size_t n = SerializeRule(r).size() + 1;
    if (n + kOverhead > max_bytes) {
      throw SchemaError("rule '" + r.id + "' does not fit in one upload message");
    }
    if (bytes + n > max_bytes) flush();
    part.rules.push_back(r);
    bytes += n;
  }
  if (!part.rules.empty() || out.empty()) flush();
  return out;
}

std::string SerializeRule(const Rule& rule) { return RuleToJson(rule).dump(); }

std::string SerializeEvent(const DeviceEvent& e) {
  ojson j;
  j["device"] = e.device.value();
  j["capability"] = e.capability;
  j["attribute"] = e.attribute;
  j["value"] = ScalarToJson(e.value);
  j["timestamp"] = e.timestamp_us;
  return j.dump();
}

std::string SerializeCommand(const ActionCommand& command) {
  return CommandToJson(command).dump();
}

std::string SerializeRuleset(const std::vector<Rule>& rules) {
  ojson arr = ojson::array();
  for (const Rule& r : rules) arr.push_back(RuleToJson(r));
  return arr.dump();
}

void ValidateRuleset(const std::vector<Rule>& rules) {
  std::unordered_set<std::string> ids;
  for (const Rule& r : rules) {
    if (!ids.insert(r.id).second) {
      throw SchemaError("ruleset: duplicate rule id '" + r.id + "'");
    }
  }
}

bool ApplyOperator(Operator op, const Scalar& observed, const Scalar& expected) {
  if (op == Operator::kEquals) return observed == expected;
  const auto* lhs = std::get_if<double>(&observed);
  const auto* rhs = std::get_if<double>(&expected);
  if (lhs == nullptr || rhs == nullptr) return false;
  switch (op) {
    case Operator::kGreaterThan:
      return *lhs > *rhs;
    case Operator::kLessThan:
      return *lhs < *rhs;
    case Operator::kGreaterThanOrEquals:
      return *lhs >= *rhs;
    case Operator::kLessThanOrEquals:
      return *lhs <= *rhs;
    case Operator::kEquals:
      break;
  }
  return false;
}

bool MatchCondition(const Condition& c, const DeviceEvent& e) {
  if (c.device != e.device || c.attribute != e.attribute) return false;
  return ApplyOperator(c.op, e.value, c.value);
}

std::vector<ActionCommand> EvaluateRule(const Rule& rule,
                                        const DeviceEvent& event) {
  return EvaluateRuleWithContext(
      rule, event,
      [](const DeviceId&, std::string_view) -> std::optional<Scalar> {
        return std::nullopt;
      });
}

std::vector<ActionCommand> EvaluateRuleWithContext(
    const Rule& rule, const DeviceEvent& event, const ValueLookup& lookup,
    const EvaluationHooks* hooks) {
  const bool want_all = rule.combinator == Combinator::kAll;
  bool decided = want_all;
  for (const Condition& c : rule.conditions) {
    if (hooks != nullptr && hooks->on_condition) hooks->on_condition();
    bool holds;
    if (c.device == event.device && c.attribute == event.attribute) {
      holds = ApplyOperator(c.op, event.value, c.value);
    } else {
      const std::optional<Scalar> known = lookup(c.device, c.attribute);
      holds = known.has_value() && ApplyOperator(c.op, *known, c.value);
    }
    if (want_all && !holds) {
      decided = false;
      break;
    }
    if (!want_all && holds) {
      decided = true;
      break;
    }
  }
  if (!decided) return {};
  if (hooks != nullptr && hooks->on_action) {
    for (std::size_t i = 0; i < rule.actions.size(); ++i) hooks->on_action();
  }
  return rule.actions;
}

}  // namespace sealedrules
