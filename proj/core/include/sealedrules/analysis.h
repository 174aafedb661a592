#ifndef SEALEDRULES_ANALYSIS_H_
#define SEALEDRULES_ANALYSIS_H_

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sealedrules/attestation.h"
#include "sealedrules/boundary.h"
#include "sealedrules/rule.h"
#include "sealedrules/trace.h"

namespace sealedrules {

// Feeds messages (as published on evt/<device>) through the boundary and
// returns the symbols recorded for them, in processing order. Outputs of
// the engine are discarded. Throws TracingDisabled when the boundary is not
// tracing.
AccessTrace RecordTrace(TrustedBoundary& boundary,
                        const std::vector<OutboundMessage>& messages);

struct EventSet {
  std::string name;
  std::vector<DeviceEvent> events;
};

// A ruleset, the keys of every device it names, and the event sets to
// compare. Each set is replayed on a freshly provisioned boundary so that
// cache and last-value state do not leak from one set into the next.
struct TraceFixture {
  std::vector<Rule> rules;
  SessionKeySet keys;
  Mode mode = Mode::kFull;
  std::vector<EventSet> sets;
};

std::unique_ptr<TrustedBoundary> ProvisionFixture(const TraceFixture& fixture);
AccessTrace RecordEventSet(const TraceFixture& fixture, const EventSet& set);

struct ScoreMatrix {
  std::vector<std::string> names;
  // kl[i][j] = KL(P_i || P_j), the first set being the observed one.
  std::vector<std::vector<double>> kl;
  double threshold = 0;
  // Off-diagonal (i, j) with kl[i][j] below the threshold.
  std::vector<std::pair<std::size_t, std::size_t>> flagged;
};

// Requires at least two sets (InvalidConfig otherwise).
ScoreMatrix DistinguishabilityReport(const TraceFixture& fixture,
                                     double threshold = 0.05,
                                     double alpha = kDefaultSmoothing);

// Header ",name1,name2,..", then one row per observed set.
std::string ScoreMatrixCsv(const ScoreMatrix& m);

// Ten home-automation rules over four sensors and three actuators, and
// three ten-event sets: S1 drawn from a comfortable value band, S2 equal to
// S1 except for one re-drawn reading, S3 with the same device order but
// readings from an alarm band.
TraceFixture HomeTraceFixture(std::uint64_t seed);

}  // namespace sealedrules

#endif  // SEALEDRULES_ANALYSIS_H_
