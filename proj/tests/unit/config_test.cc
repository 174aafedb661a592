#include "sealedrules/config.h"

#include <gtest/gtest.h>

#include <fstream>

#include "sealedrules/error.h"
#include "test_support.h"

namespace sealedrules {
namespace {

using testing::SourceDir;
using testing::TempDir;

// The message of the ConfigError thrown by ParseConfig, or "" if none.
std::string ParseFailure(std::string_view text) {
  try {
    ParseConfig(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(ParseConfig, ValuesTablesAndArrays) {
  const ConfigDocument doc = ParseConfig(R"(# top
broker = "127.0.0.1:1999"   # trailing comment
events = 10_000
alpha = 1e-3
verbose = true
rules = [100, 400, "x", false,]

[scenario]
name = "s"

[[device]]
id = "a"
[[device]]
id = "b"
)");
  EXPECT_EQ(doc.root.String("broker"), "127.0.0.1:1999");
  EXPECT_EQ(doc.root.Count("events"), 10000u);
  EXPECT_DOUBLE_EQ(*doc.root.Number("alpha"), 1e-3);
  EXPECT_EQ(doc.root.Bool("verbose"), true);
  EXPECT_EQ(doc.root.Array("rules"),
            (std::vector<Scalar>{100.0, 400.0, std::string("x"), false}));
  ASSERT_TRUE(doc.Table("scenario"));
  EXPECT_EQ(doc.Table("scenario")->String("name"), "s");
  EXPECT_FALSE(doc.Table("missing"));
  ASSERT_EQ(doc.arrays.at("device").size(), 2u);
  EXPECT_EQ(doc.arrays.at("device")[1].String("id"), "b");
  EXPECT_FALSE(doc.root.String("absent"));
}

TEST(ParseConfig, StringEscapes) {
  const auto doc = ParseConfig(R"(s = "a\"b\\c\td")");
  EXPECT_EQ(doc.root.String("s"), "a\"b\\c\td");
}

TEST(ParseConfig, ErrorsNameTheLine) {
  struct Case {
    const char* text;
    const char* expect;
  };
  const Case cases[] = {
      {"a = 1\n\nb = \n", "line 3: missing value"},
      {"a = 1\nb 2\n", "line 2: expected '='"},
      {"a = \"open\n", "line 1: unterminated string"},
      {"a = 1\na = 2\n", "line 2: duplicate key 'a'"},
      {"[t]\n[t]\n", "line 2: table [t] defined twice"},
      {"[t\n", "line 1: malformed table header"},
      {"a = {x = 1}\n", "line 1: unsupported value"},
      {"a = 1 2\n", "line 1: trailing characters"},
      {"a = [1 2]\n", "line 1: expected ',' or ']'"},
      {"a = 1979-05-27\n", "line 1: unsupported value"},
      {"a = \"x\\q\"\n", "line 1: unsupported escape"},
      {"= 1\n", "line 1: expected a key"},
  };
  for (const Case& c : cases) {
    const std::string msg = ParseFailure(c.text);
    EXPECT_NE(msg.find(c.expect), std::string::npos) << c.text << " gave '" << msg << "'";
  }
}

TEST(ConfigTable, TypedGettersRejectOtherTypes) {
  const auto doc = ParseConfig("s = \"x\"\nn = -1\nf = 1.5\n");
  EXPECT_THROW(doc.root.Number("s"), ConfigError);
  EXPECT_THROW(doc.root.String("n"), ConfigError);
  EXPECT_THROW(doc.root.Count("n"), ConfigError);
  EXPECT_THROW(doc.root.Count("f"), ConfigError);
  EXPECT_THROW(doc.root.Bool("s"), ConfigError);
  EXPECT_THROW(doc.root.Array("s"), ConfigError);
}

TEST(BrokerAddress, Parses) {
  const BrokerAddress a = ParseBrokerAddress("10.0.0.2:1884");
  EXPECT_EQ(a.host, "10.0.0.2");
  EXPECT_EQ(a.port, 1884);
  EXPECT_EQ(ParseBrokerAddress("localhost:0").port, 0);
  for (const char* bad : {"localhost", ":1883", "h:", "h:65536", "h:12x"}) {
    EXPECT_THROW(ParseBrokerAddress(bad), ConfigError) << bad;
  }
}

TEST(Scenario, LoadsTheShippedScenarios) {
  const Scenario p = LoadScenario(SourceDir() / "scenarios" / "presence.toml");
  EXPECT_EQ(p.name, "presence");
  EXPECT_EQ(p.seed, 4u);
  EXPECT_EQ(p.events, 1u);
  EXPECT_EQ(p.mode, Mode::kFull);
  EXPECT_EQ(p.rules_file, SourceDir() / "scenarios" / "presence-rules.json");
  EXPECT_EQ(p.devices(), (std::vector<DeviceId>{DeviceId("presence-1"), DeviceId("thermostat-1"),
                                                DeviceId("switch-1")}));
  EXPECT_EQ(p.actuators(), (std::vector<DeviceId>{DeviceId("thermostat-1"), DeviceId("switch-1")}));
  ASSERT_EQ(p.profiles[0].channels.size(), 1u);
  EXPECT_EQ(ValueGenerator(p.profiles[0].channels[0].generator, 1).Next(),
            Scalar(std::string("present")));

  for (const char* name : {"presence.toml", "airquality.toml"}) {
    const Scenario s = LoadScenario(SourceDir() / "scenarios" / name);
    EXPECT_NO_THROW(ParseRuleset(ReadTextFile(s.rules_file))) << name;
  }
}

TEST(Scenario, GeneratorsAndErrors) {
  TempDir dir;
  std::ofstream(dir / "t.txt") << "1\n2\n";
  auto load = [&](const std::string& body) {
    std::ofstream(dir / "s.toml") << "[scenario]\nevents = 3\n" << body;
    return LoadScenario(dir / "s.toml");
  };
  const Scenario ok = load(
      "[[device]]\nid = \"t\"\nkind = \"temperature\"\ngenerator = \"uniform\"\nlo = 1\nhi = 2\n"
      "period_ms = 250\n"
      "[[device]]\nid = \"p\"\nkind = \"presence\"\ngenerator = \"choice\"\nvalues = [\"a\", \"b\"]\n"
      "[[device]]\nid = \"r\"\nkind = \"humidity\"\ngenerator = \"trace\"\ntrace = \"t.txt\"\n");
  EXPECT_EQ(ok.profiles[0].emit_period, std::chrono::milliseconds(250));
  EXPECT_EQ(ok.profiles[1].channels[0].generator.values.size(), 2u);
  EXPECT_EQ(ok.profiles[2].channels[0].generator.values, (std::vector<Scalar>{1.0, 2.0}));

  EXPECT_THROW(load(""), ConfigError);
  EXPECT_THROW(load("[[device]]\nid = \"x\"\n"), ConfigError);
  EXPECT_THROW(load("[[device]]\nid = \"x\"\nkind = \"toaster\"\n"), ConfigError);
  EXPECT_THROW(load("[[device]]\nid = \"\"\nkind = \"switch\"\n"), ConfigError);
  EXPECT_THROW(load("[[device]]\nid = \"x\"\nkind = \"air_quality\"\ngenerator = \"constant\"\n"
                    "value = 1\n"),
               ConfigError);
  EXPECT_THROW(load("[[device]]\nid = \"x\"\nkind = \"temperature\"\ngenerator = \"uniform\"\n"
                    "lo = 3\nhi = 1\n"),
               ConfigError);
  EXPECT_THROW(load("[[device]]\nid = \"x\"\nkind = \"temperature\"\ngenerator = \"trace\"\n"
                    "trace = \"missing.txt\"\n"),
               ConfigError);
  EXPECT_THROW(load("[[device]]\nid = \"x\"\nkind = \"temperature\"\ngenerator = \"wave\"\n"),
               ConfigError);
  std::ofstream(dir / "m.toml") << "[scenario]\nmode = \"secure\"\n[[device]]\nid = \"a\"\n"
                                   "kind = \"switch\"\n";
  EXPECT_THROW(LoadScenario(dir / "m.toml"), ConfigError);
  EXPECT_THROW(LoadScenario(dir / "nope.toml"), ConfigError);
}

TEST(TextFiles, RoundTripAndErrors) {
  TempDir dir;
  WriteTextFile(dir / "a.txt", "hello\n");
  EXPECT_EQ(ReadTextFile(dir / "a.txt"), "hello\n");
  EXPECT_THROW(ReadTextFile(dir / "missing"), IoError);
  EXPECT_THROW(WriteTextFile(dir / "no" / "such" / "dir.txt", "x"), IoError);
}

}  // namespace
}  // namespace sealedrules
