#pragma once

// Deterministic discrete-event network with a Dolev-Yao adversary.
//
// Time is virtual (milliseconds). Events run in (time, seqWithinTime) order;
// seqWithinTime is a global counter assigned when an event is scheduled, so
// a (scenario, seed) pair always replays the same way.
//
// The adversary sits on every link. It sees only the label, endpoints and
// size of a datagram (never its content) and can record, replay, modify,
// inject or drop it.

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "ttp/crypto.hpp"
#include "ttp/error.hpp"
#include "ttp/messages.hpp"
#include "ttp/rng.hpp"

namespace ttp::sim {

using ActorId = std::string;
using SimTime = std::uint64_t;  // milliseconds

inline TimeStamp toTimeStamp(SimTime t) { return TimeStamp{t / 1000}; }
inline SimTime fromTimeStamp(TimeStamp t) { return t.seconds * 1000; }

class Trace {
 public:
  void line(SimTime t, std::string_view kind, std::string_view body);
  const std::vector<std::string>& lines() const { return lines_; }
  crypto::Digest digest() const;
  std::string text() const;
  void write(std::ostream& os) const;

 private:
  std::vector<std::string> lines_;
};

enum class EventKind : std::uint8_t { Deliver, Drop, TimerFire, AdversaryAction };

std::string_view toString(EventKind k);

struct SimEvent {
  SimTime time = 0;
  std::uint64_t seqWithinTime = 0;
  EventKind kind = EventKind::Deliver;
  ActorId src;
  ActorId dst;
  std::string label;
  Bytes payload;
  /// Identity of the datagram as first sent; copies keep it.
  std::uint64_t originUid = 0;
  bool tampered = false;
  bool replayed = false;
  bool injected = false;
  std::string injectKind;
  std::function<void()> timer;
};

/// What the adversary may look at.
struct ObservedDatagram {
  std::string label;
  ActorId src;
  ActorId dst;
  std::size_t size = 0;
  SimTime time = 0;
};

/// `*` matches any run of characters.
bool globMatch(std::string_view pattern, std::string_view text);

struct Trigger {
  std::string label = "*";
  std::string src = "*";
  std::string dst = "*";
  double probability = 1.0;
  std::uint64_t maxHits = UINT64_MAX;
};

bool matches(const Trigger& t, const ObservedDatagram& d);

enum class ActionKind : std::uint8_t { Record, Replay, Modify, Inject, Drop };

std::string_view toString(ActionKind k);

struct Action {
  ActionKind kind = ActionKind::Record;
  SimTime delay = 0;
  /// Inject only: "junk" (random bytes to the datagram's destination) or the
  /// name of an injector registered with the network.
  std::string injectKind;
};

struct Rule {
  Trigger trigger;
  Action action;
};

struct AdversarySchedule {
  std::string name = "none";
  std::vector<Rule> rules;
};

class AdversaryState {
 public:
  AdversaryState(AdversarySchedule schedule, Rng rng);

  const AdversarySchedule& schedule() const { return schedule_; }
  const std::vector<SimEvent>& recorded() const { return recorded_; }
  std::uint64_t hits(std::size_t rule) const { return hits_.at(rule); }

 private:
  friend std::vector<SimEvent> adversaryApply(AdversaryState& state, const SimEvent& event);

  AdversarySchedule schedule_;
  Rng rng_;
  std::vector<std::uint64_t> hits_;
  std::vector<SimEvent> recorded_;
};

/// Runs every matching rule against a freshly sent Deliver event and returns
/// the events that replace it (possibly none, possibly several). Copies are
/// byte-identical to the original; modifications flip exactly one byte.
std::vector<SimEvent> adversaryApply(AdversaryState& state, const SimEvent& event);

struct Datagram {
  ActorId src;
  ActorId dst;
  std::string label;
  Bytes bytes;
  std::uint64_t originUid = 0;
  bool tampered = false;
  bool replayed = false;
};

class Actor {
 public:
  virtual ~Actor() = default;
  virtual void receive(const Datagram& d) = 0;
};

struct NetworkOptions {
  SimTime latency = 20;
  SimTime jitter = 10;
  std::uint64_t maxEvents = 5'000'000;
};

struct NetworkStats {
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t replayed = 0;
  std::uint64_t modified = 0;
  std::uint64_t injected = 0;
  std::uint64_t accepted = 0;
  std::uint64_t falseAcceptances = 0;
  /// (label, reason) -> count of discarded datagrams.
  std::map<std::pair<std::string, std::string>, std::uint64_t> rejections;

  std::uint64_t rejected(std::string_view reason) const;
};

class Network {
 public:
  Network(Trace& trace, Rng rng, NetworkOptions options = {});

  void attach(const ActorId& id, Actor& actor);
  /// Routes every URI with this authority to the actor.
  void bindUri(const Uri& uri, const ActorId& id);
  /// Throws ScenarioInvalid for an unbound authority.
  ActorId resolve(const Uri& uri) const;

  void setAdversary(AdversaryState* adversary) { adversary_ = adversary; }
  void setInjector(const std::string& kind, std::function<void(const ActorId& target)> fn);

  SimTime now() const { return now_; }
  TimeStamp clock() const { return toTimeStamp(now_); }

  void send(const ActorId& src, const ActorId& dst, std::string label, Bytes bytes);
  void schedule(SimTime delay, std::function<void()> fn);

  /// Endpoints report every datagram they act on. Accepting one whose
  /// identity was already accepted, or one the adversary altered, counts as
  /// a false acceptance.
  void noteAccepted(const Datagram& d);
  void noteRejected(const Datagram& d, ErrorCode reason, std::string_view detail = {});
  void note(std::string_view kind, std::string_view body) { trace_.line(now_, kind, body); }

  /// Processes events until none remain. Throws BudgetExceeded when more
  /// than maxEvents are processed.
  void run();
  bool idle() const { return queue_.empty(); }
  std::uint64_t eventsProcessed() const { return processed_; }

  const NetworkStats& stats() const { return stats_; }
  Trace& trace() { return trace_; }

 private:
  struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
      return a.time != b.time ? a.time > b.time : a.seqWithinTime > b.seqWithinTime;
    }
  };

  void push(SimEvent e);
  void dispatch(SimEvent& e);
  std::string identityOf(const Datagram& d) const;

  Trace& trace_;
  Rng rng_;
  NetworkOptions options_;
  SimTime now_ = 0;
  std::uint64_t nextSeq_ = 0;
  std::uint64_t nextUid_ = 0;
  std::uint64_t processed_ = 0;
  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> queue_;
  std::map<ActorId, Actor*> actors_;
  std::map<std::string, ActorId> uris_;
  std::map<std::string, std::function<void(const ActorId&)>> injectors_;
  AdversaryState* adversary_ = nullptr;
  std::set<std::uint64_t> acceptedUids_;
  std::set<std::string> acceptedIdentities_;
  NetworkStats stats_;
};

}  // namespace ttp::sim
