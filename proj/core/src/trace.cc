#include "sealedrules/trace.h"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "sealedrules/error.h"

namespace sealedrules {

namespace {
constexpr std::string_view kRegionNames[kRegionCount] = {
    "event_buf", "cache", "store", "rule_cond", "rule_act", "out_buf"};
}

std::string_view RegionName(Region r) {
  return kRegionNames[static_cast<std::size_t>(r)];
}

std::optional<Region> ParseRegion(std::string_view name) {
  for (std::size_t i = 0; i < kRegionCount; ++i) {
    if (kRegionNames[i] == name) return static_cast<Region>(i);
  }
  return std::nullopt;
}

std::string DumpTrace(const AccessTrace& trace) {
  std::string out;
  out.reserve(trace.size() * 12);
  for (const AccessSymbol& s : trace) {
    out += s.op == AccessOp::kRead ? 'R' : 'W';
    out += ',';
    out += RegionName(s.region);
    out += '\n';
  }
  return out;
}

AccessTrace ParseTrace(std::string_view text) {
  AccessTrace trace;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.size() < 3 || (line[0] != 'R' && line[0] != 'W') || line[1] != ',') {
      throw SyntaxError("trace line " + std::to_string(line_no) + ": malformed");
    }
    auto region = ParseRegion(line.substr(2));
    if (!region) {
      throw SyntaxError("trace line " + std::to_string(line_no) +
                        ": unknown region");
    }
    trace.push_back({line[0] == 'R' ? AccessOp::kRead : AccessOp::kWrite, *region});
  }
  return trace;
}

TraceDistribution::TraceDistribution(std::vector<double> probabilities,
                                     std::size_t sample_count)
    : p_(std::move(probabilities)), samples_(sample_count) {
  if (p_.empty()) throw SchemaError("distribution: empty alphabet");
  double sum = 0.0;
  for (double v : p_) {
    if (!(v >= 0.0)) throw SchemaError("distribution: negative probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw SchemaError("distribution: probabilities do not sum to 1");
  }
}

TraceDistribution BuildDistribution(const AccessTrace& trace, double alpha) {
  if (trace.empty()) throw EmptyTrace("cannot build a distribution from an empty trace");
  std::vector<double> counts(kBigramCount, 0.0);
  for (std::size_t i = 1; i < trace.size(); ++i) {
    counts[trace[i - 1].index() * kSymbolCount + trace[i].index()] += 1.0;
  }
  const std::size_t bigrams = trace.size() - 1;
  const double denom = static_cast<double>(bigrams) + alpha * kBigramCount;
  if (denom <= 0.0) {
    // One symbol and no smoothing: no bigram information at all.
    return TraceDistribution(std::vector<double>(kBigramCount, 1.0 / kBigramCount), 0);
  }
  for (double& c : counts) c = (c + alpha) / denom;
  return TraceDistribution(std::move(counts), bigrams);
}

DivergenceScore KlDivergence(const TraceDistribution& p,
                             const TraceDistribution& q) {
  if (p.alphabet_size() != q.alphabet_size()) {
    throw AlphabetMismatch("distributions have different alphabets");
  }
  const auto& pp = p.probabilities();
  const auto& qq = q.probabilities();
  double sum = 0.0;
  for (std::size_t i = 0; i < pp.size(); ++i) {
    if (pp[i] == 0.0) continue;
    if (qq[i] == 0.0) return {std::numeric_limits<double>::infinity()};
    sum += pp[i] * std::log(pp[i] / qq[i]);
  }
  // Rounding can leave a tiny negative residue for near-equal inputs.
  return {sum < 0.0 ? 0.0 : sum};
}

}  // namespace sealedrules
