#include "sealedrules/config.h"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "sealedrules/error.h"

namespace sealedrules {

namespace {

class LineParser {
 public:
  LineParser(std::string_view text, std::size_t line_no)
      : s_(text), line_(line_no) {}

  [[noreturn]] void Fail(const std::string& what) const {
    throw ConfigError("line " + std::to_string(line_) + ": " + what);
  }

  void SkipSpace() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  bool AtEndOrComment() {
    SkipSpace();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }

  bool Consume(char c) {
    SkipSpace();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::string Key() {
    SkipSpace();
    if (pos_ < s_.size() && s_[pos_] == '"') return QuotedString();
    const std::size_t start = pos_;
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.') {
        ++pos_;
      } else {
        break;
      }
    }
    if (pos_ == start) Fail("expected a key");
    return std::string(s_.substr(start, pos_ - start));
  }

  std::string QuotedString() {
    if (!Consume('"')) Fail("expected '\"'");
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) Fail("dangling escape");
        const char e = s_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: Fail(std::string("unsupported escape \\") + e);
        }
      }
      out += c;
    }
    if (pos_ >= s_.size()) Fail("unterminated string");
    ++pos_;
    return out;
  }

  Scalar ScalarValue() {
    SkipSpace();
    if (pos_ >= s_.size()) Fail("missing value");
    if (s_[pos_] == '"') return QuotedString();
    if (s_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return false;
    }
    const std::size_t start = pos_;
    while (pos_ < s_.size() && std::string_view("+-0123456789.eE_").find(s_[pos_]) !=
                                   std::string_view::npos) {
      ++pos_;
    }
    std::string digits;
    for (char c : s_.substr(start, pos_ - start)) {
      if (c != '_' && c != '+') digits += c;
    }
    double d = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), d);
    if (digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size()) {
      Fail("unsupported value");
    }
    return d;
  }

  ConfigValue Value() {
    SkipSpace();
    if (pos_ < s_.size() && s_[pos_] == '[') {
      ++pos_;
      std::vector<Scalar> items;
      if (Consume(']')) return items;
      for (;;) {
        items.push_back(ScalarValue());
        if (Consume(']')) break;
        if (!Consume(',')) Fail("expected ',' or ']' in array");
        if (Consume(']')) break;  // trailing comma
      }
      return items;
    }
    Scalar v = ScalarValue();
    return std::visit([](auto&& x) -> ConfigValue { return x; }, std::move(v));
  }

 private:
  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

template <typename T>
std::optional<T> TypedGet(const std::map<std::string, ConfigValue, std::less<>>& values,
                          std::string_view key, const char* type_name) {
  auto it = values.find(key);
  if (it == values.end()) return std::nullopt;
  if (const T* v = std::get_if<T>(&it->second)) return *v;
  throw ConfigError("'" + std::string(key) + "' must be " + type_name);
}

GeneratorSpec GeneratorFromTable(const ConfigTable& t, const std::filesystem::path& base,
                                 const std::string& device) {
  GeneratorSpec g;
  const std::string kind = t.String("generator").value_or("default");
  if (kind == "constant") {
    g.kind = GeneratorSpec::Kind::kConstant;
    auto it = t.values().find("value");
    if (it == t.values().end()) throw ConfigError(device + ": constant generator needs 'value'");
    if (const auto* s = std::get_if<std::string>(&it->second)) g.constant = *s;
    else if (const auto* d = std::get_if<double>(&it->second)) g.constant = *d;
    else if (const auto* b = std::get_if<bool>(&it->second)) g.constant = *b;
    else throw ConfigError(device + ": 'value' must be a scalar");
  } else if (kind == "uniform") {
    g.kind = GeneratorSpec::Kind::kUniform;
    auto lo = t.Number("lo"), hi = t.Number("hi");
    if (!lo || !hi || *lo > *hi) throw ConfigError(device + ": uniform generator needs lo <= hi");
    g.lo = *lo;
    g.hi = *hi;
  } else if (kind == "choice") {
    g.kind = GeneratorSpec::Kind::kChoice;
    g.values = t.Array("values").value_or(std::vector<Scalar>{});
    if (g.values.empty()) throw ConfigError(device + ": choice generator needs 'values'");
  } else if (kind == "trace") {
    g.kind = GeneratorSpec::Kind::kTrace;
    auto file = t.String("trace");
    if (!file) throw ConfigError(device + ": trace generator needs 'trace'");
    std::filesystem::path p(*file);
    if (p.is_relative()) p = base / p;
    try {
      g.values = LoadValueTrace(p);
    } catch (const Error& e) {
      throw ConfigError(device + ": " + e.what());
    }
  } else {
    throw ConfigError(device + ": unknown generator '" + kind + "'");
  }
  return g;
}

}  // namespace

void ConfigTable::Set(std::string key, ConfigValue value) {
  values_.insert_or_assign(std::move(key), std::move(value));
}

bool ConfigTable::Has(std::string_view key) const { return values_.find(key) != values_.end(); }

std::optional<std::string> ConfigTable::String(std::string_view key) const {
  return TypedGet<std::string>(values_, key, "a string");
}

std::optional<double> ConfigTable::Number(std::string_view key) const {
  return TypedGet<double>(values_, key, "a number");
}

std::optional<bool> ConfigTable::Bool(std::string_view key) const {
  return TypedGet<bool>(values_, key, "a boolean");
}

std::optional<std::vector<Scalar>> ConfigTable::Array(std::string_view key) const {
  return TypedGet<std::vector<Scalar>>(values_, key, "an array");
}

std::optional<std::uint64_t> ConfigTable::Count(std::string_view key) const {
  const std::optional<double> d = Number(key);
  if (!d) return std::nullopt;
  if (*d < 0 || *d != static_cast<double>(static_cast<std::uint64_t>(*d))) {
    throw ConfigError("'" + std::string(key) + "' must be a non-negative integer");
  }
  return static_cast<std::uint64_t>(*d);
}

const ConfigTable* ConfigDocument::Table(std::string_view name) const {
  auto it = tables.find(name);
  return it == tables.end() ? nullptr : &it->second;
}

ConfigDocument ParseConfig(std::string_view text) {
  ConfigDocument doc;
  ConfigTable* current = &doc.root;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view() : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    LineParser p(line, line_no);
    if (p.AtEndOrComment()) continue;
    if (p.Consume('[')) {
      const bool array = p.Consume('[');
      const std::string name = p.Key();
      if (!p.Consume(']') || (array && !p.Consume(']'))) p.Fail("malformed table header");
      if (!p.AtEndOrComment()) p.Fail("trailing characters after table header");
      if (array) {
        current = &doc.arrays[name].emplace_back();
      } else {
        if (doc.tables.count(name)) p.Fail("table [" + name + "] defined twice");
        current = &doc.tables[name];
      }
      continue;
    }
    const std::string key = p.Key();
    if (!p.Consume('=')) p.Fail("expected '=' after '" + key + "'");
    ConfigValue value = p.Value();
    if (!p.AtEndOrComment()) p.Fail("trailing characters after value");
    if (current->Has(key)) p.Fail("duplicate key '" + key + "'");
    current->Set(key, std::move(value));
  }
  return doc;
}

std::string ReadTextFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteTextFile(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("short write to " + path.string());
}

ConfigDocument LoadConfigFile(const std::filesystem::path& path) {
  std::string text;
  try {
    text = ReadTextFile(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  try {
    return ParseConfig(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

BrokerAddress ParseBrokerAddress(std::string_view text) {
  const std::size_t colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw ConfigError("broker address must be host:port, got '" + std::string(text) + "'");
  }
  unsigned port = 0;
  const std::string_view digits = text.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || port > 65535) {
    throw ConfigError("bad broker port '" + std::string(digits) + "'");
  }
  return BrokerAddress{std::string(text.substr(0, colon)), static_cast<std::uint16_t>(port)};
}

std::vector<DeviceId> Scenario::devices() const {
  std::vector<DeviceId> out;
  for (const DeviceProfile& p : profiles) out.push_back(p.device);
  return out;
}

std::vector<DeviceId> Scenario::actuators() const {
  std::vector<DeviceId> out;
  for (const DeviceProfile& p : profiles) {
    if (!IsSensor(p.kind)) out.push_back(p.device);
  }
  return out;
}

Scenario ScenarioFromConfig(const ConfigDocument& doc,
                            const std::filesystem::path& base_dir) {
  Scenario s;
  const ConfigTable* t = doc.Table("scenario");
  if (t == nullptr) throw ConfigError("missing [scenario] table");
  s.name = t->String("name").value_or("scenario");
  s.seed = t->Count("seed").value_or(1);
  s.events = t->Count("events").value_or(0);
  if (auto mode = t->String("mode")) {
    auto m = ParseMode(*mode);
    if (!m) throw ConfigError("unknown mode '" + *mode + "'");
    s.mode = *m;
  }
  if (auto rules = t->String("rules")) {
    s.rules_file = std::filesystem::path(*rules);
    if (s.rules_file.is_relative()) s.rules_file = base_dir / s.rules_file;
  }
  auto devices = doc.arrays.find("device");
  if (devices == doc.arrays.end() || devices->second.empty()) {
    throw ConfigError("scenario has no [[device]] entries");
  }
  for (const ConfigTable& d : devices->second) {
    auto id = d.String("id");
    auto kind_name = d.String("kind");
    if (!id || !kind_name) throw ConfigError("[[device]] needs 'id' and 'kind'");
    auto kind = ParseDeviceKind(*kind_name);
    if (!kind) throw ConfigError(*id + ": unknown kind '" + *kind_name + "'");
    DeviceProfile p = [&] {
      try {
        return DefaultProfile(DeviceId(*id), *kind);
      } catch (const SchemaError& e) {
        throw ConfigError(std::string("bad device id: ") + e.what());
      }
    }();
    if (auto period = d.Count("period_ms")) p.emit_period = std::chrono::milliseconds(*period);
    if (d.Has("generator")) {
      if (p.channels.size() != 1) {
        throw ConfigError(*id + ": a generator can only be set on single-channel sensors");
      }
      p.channels[0].generator = GeneratorFromTable(d, base_dir, *id);
    }
    s.profiles.push_back(std::move(p));
  }
  return s;
}

Scenario LoadScenario(const std::filesystem::path& path) {
  return ScenarioFromConfig(LoadConfigFile(path), path.parent_path());
}

}  // namespace sealedrules
