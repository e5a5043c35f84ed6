#pragma once

// End-to-end transfer scenarios: a versioned JSON config describes the CA
// hierarchy, fleet, protocol options, faults and adversary; runScenario
// builds every actor on one simulated network and reports per-device
// outcomes, security-property checks and the recorded trace.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ttp/device.hpp"
#include "ttp/pki.hpp"
#include "ttp/simnet.hpp"

namespace ttp::scenario {

inline constexpr std::string_view kSchema = "ttp-scenario/1";

enum class Expectation : std::uint8_t { Reenrolled, Fallback, Terminal };

std::string_view toString(Expectation e);

struct Options {
  bool useRa = false;
  bool contactUpdateBeforeEnroll = false;
  bool serverSideKeygen = false;
  /// SP1 pushes one more firmware release before handing over.
  bool lastSp1Update = false;
  /// SP1 asks a device that reaches it through fallback to attest again.
  bool fallbackRa = false;
};

/// Seconds unless the name says otherwise.
struct Timing {
  std::uint64_t prepareAt = 1000;
  std::uint64_t transferStart = 2000;
  std::uint64_t windowLength = 3000;
  std::uint64_t opLifetime = 7200;
  std::uint64_t horizon = 6000;
  std::uint64_t rebootDelay = 5;
  std::uint64_t retryRound = 30;
  std::uint64_t bootSpreadMs = 10'000;
  std::uint64_t latencyMs = 20;
  std::uint64_t jitterMs = 10;
  std::uint64_t attemptTimeoutMs = 2000;
  std::uint32_t attempts = 4;
  std::uint32_t fallbackAttempts = 8;
  std::uint64_t sessionLingerMs = 600'000;
};

struct Faults {
  /// Device indices whose firmware image is corrupted before the transfer.
  std::set<std::uint32_t> raTamper;
  /// SP2 skips registering the factory certificates with CA2.
  bool skipCa2Registration = false;
};

struct Probes {
  /// Device 0's pre-transfer operational credential is replayed at SP1 after
  /// the window closes.
  bool oldCredentialAtSp1 = false;
  /// An insider enrolls at CA1 under a victim's name.
  bool nameMismatchEnroll = false;
};

struct ScenarioConfig {
  std::string name;
  pki::HierarchyVariant variant = pki::HierarchyVariant::A;
  std::uint32_t deviceCount = 1;
  std::uint64_t seed = 1;
  sim::AdversarySchedule adversary;
  Options options;
  /// nullopt selects the minimal pre-transfer truststore.
  std::optional<std::set<pki::CaRole>> preTransferTrust;
  Timing timing;
  Faults faults;
  Probes probes;
  Expectation expect = Expectation::Reenrolled;
  std::map<std::uint32_t, Expectation> expectOverrides;
  std::vector<std::size_t> updateInfoListCounts;
  std::uint64_t maxEvents = 5'000'000;
};

/// Throws ConfigParseError for syntax, schema or type problems and
/// ScenarioInvalid for values that cannot describe a run.
ScenarioConfig parseConfig(std::string_view text);
ScenarioConfig loadConfig(const std::filesystem::path& path);
void validate(const ScenarioConfig& config);

/// Built-in adversary schedules: none, replay_transfer, modify_transfer,
/// forge_transfer, drop_enroll, cross_session_replay, sp2_direct,
/// random_drop, replay_all. Throws ScenarioInvalid for other names.
sim::AdversarySchedule namedSchedule(std::string_view name, std::uint32_t deviceCount,
                                     const Timing& timing = {});
std::vector<std::string> namedScheduleNames();
/// Random mix of replay, modify, drop and injection rules.
sim::AdversarySchedule randomSchedule(Rng& rng);

/// Expected final phase for device `index`, after faults and overrides.
Expectation expectationFor(const ScenarioConfig& config, std::uint32_t index);

struct DeviceOutcome {
  std::string id;
  device::Phase phase = device::Phase::Blank;
  std::vector<device::Phase> history;
  ErrorCode fallbackReason = ErrorCode::None;
  bool fallbackContacted = false;
  std::string operationalIssuer;
  Expectation expected = Expectation::Reenrolled;
  bool met = false;
  std::string report;
};

struct ProbeOutcome {
  std::string name;
  bool ran = false;
  /// The attack was refused with the expected reason.
  bool refused = false;
  std::string detail;
};

struct ScenarioResult {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<DeviceOutcome> devices;
  std::vector<ProbeOutcome> probes;
  sim::Trace trace;
  crypto::Digest traceDigest{};
  sim::NetworkStats stats;
  std::uint64_t events = 0;
  bool quiescent = false;

  bool lifecycleHolds = true;
  /// No session SP1 took part in shares a fingerprint or key with the
  /// device's sessions after re-enrollment.
  bool forwardSecrecyHolds = true;
  std::vector<std::string> forwardSecrecyViolations;
  /// Post-reset state audit.
  std::vector<std::string> stateViolations;
  /// With contactUpdateBeforeEnroll: the update finished before CA2
  /// enrollment started.
  bool updateOrderHolds = true;
  /// Message class -> bytes, from the trace's size lines (largest seen).
  std::map<std::string, std::size_t> sizes;

  bool expectationsMet() const;
  bool securityHolds() const;
  bool passed() const { return expectationsMet() && securityHolds(); }
  std::string summary() const;
};

ScenarioResult runScenario(const ScenarioConfig& config, std::optional<std::uint64_t> seedOverride = std::nullopt);

struct SizeRow {
  std::string messageClass;
  std::size_t payloadBytes = 0;
  std::size_t signedBytes = 0;
};

/// Rows for TransferMessage, DeviceUpdateInfo and each UpdateInfoList(n),
/// taken from the size lines the run recorded.
std::vector<SizeRow> sizeTable(const ScenarioResult& result);
std::string formatSizeTable(const std::vector<SizeRow>& rows);

}  // namespace ttp::scenario
