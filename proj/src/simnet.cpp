#include "ttp/simnet.hpp"

#include <sstream>

#include "ttp/session.hpp"

namespace ttp::sim {

void Trace::line(SimTime t, std::string_view kind, std::string_view body) {
  std::string s = "t=" + std::to_string(t) + " " + std::string(kind);
  if (!body.empty()) {
    s += ' ';
    s += body;
  }
  lines_.push_back(std::move(s));
}

crypto::Digest Trace::digest() const { return crypto::digest(toBytes(text())); }

std::string Trace::text() const {
  std::string out;
  for (const auto& l : lines_) {
    out += l;
    out += '\n';
  }
  return out;
}

void Trace::write(std::ostream& os) const {
  for (const auto& l : lines_) os << l << '\n';
}

std::string_view toString(EventKind k) {
  switch (k) {
    case EventKind::Deliver: return "deliver";
    case EventKind::Drop: return "drop";
    case EventKind::TimerFire: return "timer";
    case EventKind::AdversaryAction: return "adv";
  }
  return "?";
}

std::string_view toString(ActionKind k) {
  switch (k) {
    case ActionKind::Record: return "record";
    case ActionKind::Replay: return "replay";
    case ActionKind::Modify: return "modify";
    case ActionKind::Inject: return "inject";
    case ActionKind::Drop: return "drop";
  }
  return "?";
}

bool globMatch(std::string_view pattern, std::string_view text) {
  std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
  while (t < text.size()) {
    if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = t;
    } else if (p < pattern.size() && pattern[p] == text[t]) {
      ++p;
      ++t;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      t = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

bool matches(const Trigger& t, const ObservedDatagram& d) {
  return globMatch(t.label, d.label) && globMatch(t.src, d.src) && globMatch(t.dst, d.dst);
}

AdversaryState::AdversaryState(AdversarySchedule schedule, Rng rng)
    : schedule_(std::move(schedule)), rng_(rng), hits_(schedule_.rules.size(), 0) {}

std::vector<SimEvent> adversaryApply(AdversaryState& state, const SimEvent& event) {
  std::vector<SimEvent> out;
  std::optional<SimEvent> current = event;
  const ObservedDatagram seen{event.label, event.src, event.dst, event.payload.size(), event.time};

  for (std::size_t i = 0; i < state.schedule_.rules.size() && current; ++i) {
    const auto& rule = state.schedule_.rules[i];
    if (!matches(rule.trigger, seen) || state.hits_[i] >= rule.trigger.maxHits) continue;
    if (!state.rng_.chance(rule.trigger.probability)) continue;
    ++state.hits_[i];

    switch (rule.action.kind) {
      case ActionKind::Record:
        state.recorded_.push_back(*current);
        break;
      case ActionKind::Replay: {
        SimEvent copy = event;
        copy.time = event.time + rule.action.delay;
        copy.replayed = true;
        out.push_back(std::move(copy));
        break;
      }
      case ActionKind::Modify: {
        if (current->payload.empty()) {
          current.reset();
          break;
        }
        const auto pos = state.rng_.below(current->payload.size());
        const auto mask = static_cast<std::uint8_t>(1 + state.rng_.below(255));
        current->payload[pos] ^= mask;
        current->tampered = true;
        break;
      }
      case ActionKind::Inject: {
        SimEvent inj;
        inj.time = event.time + rule.action.delay;
        inj.src = "mallory";
        inj.dst = event.dst;
        inj.injected = true;
        inj.tampered = true;
        if (rule.action.injectKind == "junk") {
          inj.kind = EventKind::Deliver;
          inj.label = event.label;
          inj.payload = state.rng_.bytes(16 + state.rng_.below(48));
        } else {
          inj.kind = EventKind::AdversaryAction;
          inj.label = rule.action.injectKind;
          inj.injectKind = rule.action.injectKind;
        }
        out.push_back(std::move(inj));
        break;
      }
      case ActionKind::Drop: {
        SimEvent dropped = *current;
        dropped.kind = EventKind::Drop;
        out.push_back(std::move(dropped));
        current.reset();
        break;
      }
    }
  }
  if (current) out.insert(out.begin(), std::move(*current));
  return out;
}

std::uint64_t NetworkStats::rejected(std::string_view reason) const {
  std::uint64_t n = 0;
  for (const auto& [key, count] : rejections) {
    if (key.second == reason) n += count;
  }
  return n;
}

Network::Network(Trace& trace, Rng rng, NetworkOptions options)
    : trace_(trace), rng_(rng), options_(options) {}

void Network::attach(const ActorId& id, Actor& actor) { actors_[id] = &actor; }

void Network::bindUri(const Uri& uri, const ActorId& id) { uris_[uri.authority()] = id; }

ActorId Network::resolve(const Uri& uri) const {
  const auto it = uris_.find(uri.authority());
  if (it == uris_.end()) throw Error(ErrorCode::ScenarioInvalid, "no actor serves " + uri.str());
  return it->second;
}

void Network::setInjector(const std::string& kind, std::function<void(const ActorId&)> fn) {
  injectors_[kind] = std::move(fn);
}

void Network::push(SimEvent e) {
  e.seqWithinTime = nextSeq_++;
  queue_.push(std::move(e));
}

void Network::send(const ActorId& src, const ActorId& dst, std::string label, Bytes bytes) {
  SimEvent e;
  e.kind = EventKind::Deliver;
  e.time = now_ + options_.latency + (options_.jitter ? rng_.below(options_.jitter + 1) : 0);
  e.src = src;
  e.dst = dst;
  e.label = std::move(label);
  e.payload = std::move(bytes);
  e.originUid = ++nextUid_;
  ++stats_.sent;

  std::ostringstream os;
  os << "uid=" << e.originUid << " src=" << src << " dst=" << dst << " label=" << e.label
     << " size=" << e.payload.size();
  trace_.line(now_, "send", os.str());

  if (!adversary_) {
    push(std::move(e));
    return;
  }
  for (auto& out : adversaryApply(*adversary_, e)) {
    std::ostringstream a;
    if (out.replayed) {
      ++stats_.replayed;
      a << "action=replay uid=" << out.originUid << " at=" << out.time;
    } else if (out.injected) {
      ++stats_.injected;
      a << "action=inject kind=" << (out.injectKind.empty() ? "junk" : out.injectKind) << " dst=" << out.dst
        << " at=" << out.time;
    } else if (out.tampered) {
      ++stats_.modified;
      a << "action=modify uid=" << out.originUid;
    } else if (out.kind == EventKind::Drop) {
      a << "action=drop uid=" << out.originUid;
    }
    if (!a.str().empty()) trace_.line(now_, "adv", a.str());
    if (out.injected && out.kind == EventKind::Deliver) out.originUid = ++nextUid_;
    push(std::move(out));
  }
}

void Network::schedule(SimTime delay, std::function<void()> fn) {
  SimEvent e;
  e.kind = EventKind::TimerFire;
  e.time = now_ + delay;
  e.timer = std::move(fn);
  push(std::move(e));
}

void Network::run() {
  while (!queue_.empty()) {
    if (++processed_ > options_.maxEvents) {
      throw Error(ErrorCode::BudgetExceeded, "more than " + std::to_string(options_.maxEvents) + " events");
    }
    SimEvent e = queue_.top();
    queue_.pop();
    now_ = e.time;
    dispatch(e);
  }
}

void Network::dispatch(SimEvent& e) {
  switch (e.kind) {
    case EventKind::TimerFire:
      e.timer();
      return;
    case EventKind::Drop: {
      ++stats_.dropped;
      std::ostringstream os;
      os << "uid=" << e.originUid << " src=" << e.src << " dst=" << e.dst << " label=" << e.label;
      trace_.line(now_, "drop", os.str());
      return;
    }
    case EventKind::AdversaryAction: {
      const auto it = injectors_.find(e.injectKind);
      trace_.line(now_, "adv", "action=run kind=" + e.injectKind + " target=" + e.dst +
                                   (it == injectors_.end() ? " unavailable=1" : ""));
      if (it != injectors_.end()) it->second(e.dst);
      return;
    }
    case EventKind::Deliver: {
      const auto actor = actors_.find(e.dst);
      std::ostringstream os;
      os << "uid=" << e.originUid << " src=" << e.src << " dst=" << e.dst << " label=" << e.label;
      if (e.replayed) os << " replayed=1";
      if (e.tampered) os << " tampered=1";
      trace_.line(now_, "deliver", os.str());
      if (actor == actors_.end()) return;
      ++stats_.delivered;
      actor->second->receive(Datagram{e.src, e.dst, e.label, e.payload, e.originUid, e.tampered, e.replayed});
      return;
    }
  }
}

std::string Network::identityOf(const Datagram& d) const {
  try {
    const auto frame = session::decodeFrame(d.bytes);
    return std::visit(
        [&](const auto& f) -> std::string {
          using F = std::decay_t<decltype(f)>;
          std::string key = d.dst + "|" + session::toHex(f.id);
          if constexpr (std::is_same_v<F, session::HandshakeHello>) return key + "|hello";
          if constexpr (std::is_same_v<F, session::HandshakeReply>) return key + "|reply";
          if constexpr (std::is_same_v<F, session::SessionRecord>) {
            return key + "|record|" + (f.fromInitiator ? "i" : "r") + "|" + std::to_string(f.seq);
          }
          return key + "|alert";
        },
        frame);
  } catch (const Error&) {
    return d.dst + "|raw|" + toHex(d.bytes);
  }
}

void Network::noteAccepted(const Datagram& d) {
  ++stats_.accepted;
  const bool repeatUid = !acceptedUids_.insert(d.originUid).second;
  const bool repeatIdentity = !acceptedIdentities_.insert(identityOf(d)).second;
  const bool falseAccept = d.tampered || repeatUid || repeatIdentity;
  std::ostringstream os;
  os << "uid=" << d.originUid << " at=" << d.dst << " label=" << d.label;
  if (falseAccept) {
    ++stats_.falseAcceptances;
    os << " FALSE_ACCEPTANCE=1";
  }
  trace_.line(now_, "accept", os.str());
}

void Network::noteRejected(const Datagram& d, ErrorCode reason, std::string_view detail) {
  ++stats_.rejections[{d.label, std::string(ttp::toString(reason))}];
  std::ostringstream os;
  os << "uid=" << d.originUid << " at=" << d.dst << " label=" << d.label << " reason=" << ttp::toString(reason);
  if (!detail.empty()) {
    std::string d2(detail);
    for (auto& c : d2) {
      if (c == ' ') c = '_';
    }
    os << " detail=" << d2;
  }
  trace_.line(now_, "reject", os.str());
}

}  // namespace ttp::sim
