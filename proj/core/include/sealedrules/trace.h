#ifndef SEALEDRULES_TRACE_H_
#define SEALEDRULES_TRACE_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sealedrules {

enum class AccessOp : std::uint8_t { kRead = 0, kWrite = 1 };

enum class Region : std::uint8_t {
  kEventBuf = 0,
  kCache,
  kStore,
  kRuleCond,
  kRuleAct,
  kOutBuf,
};

inline constexpr std::size_t kRegionCount = 6;
inline constexpr std::size_t kSymbolCount = 2 * kRegionCount;
inline constexpr std::size_t kBigramCount = kSymbolCount * kSymbolCount;
inline constexpr double kDefaultSmoothing = 1e-3;

struct AccessSymbol {
  AccessOp op;
  Region region;

  std::size_t index() const {
    return static_cast<std::size_t>(op) * kRegionCount +
           static_cast<std::size_t>(region);
  }
  friend bool operator==(const AccessSymbol&, const AccessSymbol&) = default;
};

std::string_view RegionName(Region r);
std::optional<Region> ParseRegion(std::string_view name);

using AccessTrace = std::vector<AccessSymbol>;

// One "R|W,region" pair per line.
std::string DumpTrace(const AccessTrace& trace);
// Throws SyntaxError on a malformed line.
AccessTrace ParseTrace(std::string_view text);

// A discrete distribution over a fixed alphabet.
class TraceDistribution {
 public:
  // Probabilities must be non-negative and sum to 1 within 1e-9
  // (SchemaError otherwise).
  explicit TraceDistribution(std::vector<double> probabilities,
                             std::size_t sample_count = 0);

  const std::vector<double>& probabilities() const noexcept { return p_; }
  std::size_t alphabet_size() const noexcept { return p_.size(); }
  std::size_t sample_count() const noexcept { return samples_; }

 private:
  std::vector<double> p_;
  std::size_t samples_;
};

// Bigram relative frequencies over the 144-cell alphabet with additive
// smoothing: p = (count + alpha) / (bigrams + 144 * alpha).
// Throws EmptyTrace for an empty trace.
TraceDistribution BuildDistribution(const AccessTrace& trace,
                                    double alpha = kDefaultSmoothing);

struct DivergenceScore {
  double value = 0.0;  // nats
};

// Forward KL(p || q) = sum p_i ln(p_i / q_i). Throws AlphabetMismatch.
DivergenceScore KlDivergence(const TraceDistribution& p,
                             const TraceDistribution& q);

}  // namespace sealedrules

#endif  // SEALEDRULES_TRACE_H_
