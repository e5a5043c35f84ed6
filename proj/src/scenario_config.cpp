#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "ttp/scenario.hpp"

namespace ttp::scenario {

using nlohmann::json;

std::string_view toString(Expectation e) {
  switch (e) {
    case Expectation::Reenrolled: return "reenrolled";
    case Expectation::Fallback: return "fallback";
    case Expectation::Terminal: return "terminal";
  }
  return "?";
}

namespace {

[[noreturn]] void parseError(const std::string& what) { throw Error(ErrorCode::ConfigParseError, what); }
[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::ScenarioInvalid, what); }

// Reads fields from one JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) parseError(where_ + ": expected an object");
  }

  ~Fields() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) parseError(where_ + ": unknown key '" + key + "'");
    }
  }

  const json* get(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <class T>
  void opt(const std::string& key, T& out) {
    const json* v = get(key);
    if (!v) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v->is_boolean()) throw std::runtime_error("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v->is_number_unsigned()) throw std::runtime_error("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v->is_number()) throw std::runtime_error("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v->is_string()) throw std::runtime_error("");
      }
      out = v->get<T>();
    } catch (const std::exception&) {
      parseError(where_ + "." + key + ": wrong type");
    }
  }

  template <class T>
  void req(const std::string& key, T& out) {
    if (!j_.contains(key)) parseError(where_ + ": missing '" + key + "'");
    opt(key, out);
  }

  const std::string& where() const { return where_; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

Expectation parseExpectation(const std::string& s) {
  if (s == "reenrolled") return Expectation::Reenrolled;
  if (s == "fallback") return Expectation::Fallback;
  if (s == "terminal") return Expectation::Terminal;
  invalid("unknown expectation '" + s + "'");
}

pki::CaRole parseRole(const std::string& s) {
  if (s == "permanent") return pki::CaRole::Permanent;
  if (s == "ca1") return pki::CaRole::Ca1;
  if (s == "ca2") return pki::CaRole::Ca2;
  invalid("unknown CA role '" + s + "'");
}

sim::ActionKind parseAction(const std::string& s) {
  if (s == "record") return sim::ActionKind::Record;
  if (s == "replay") return sim::ActionKind::Replay;
  if (s == "modify") return sim::ActionKind::Modify;
  if (s == "inject") return sim::ActionKind::Inject;
  if (s == "drop") return sim::ActionKind::Drop;
  invalid("unknown adversary action '" + s + "'");
}

sim::AdversarySchedule parseAdversary(const json& j, const ScenarioConfig& cfg) {
  if (j.is_string()) return namedSchedule(j.get<std::string>(), cfg.deviceCount, cfg.timing);
  Fields f(j, "adversary");
  sim::AdversarySchedule s;
  f.opt("name", s.name);
  const json* rules = f.get("rules");
  if (!rules) return s;
  if (!rules->is_array()) parseError("adversary.rules: expected an array");
  for (std::size_t i = 0; i < rules->size(); ++i) {
    Fields r((*rules)[i], "adversary.rules[" + std::to_string(i) + "]");
    sim::Rule rule;
    std::string action;
    r.opt("label", rule.trigger.label);
    r.opt("src", rule.trigger.src);
    r.opt("dst", rule.trigger.dst);
    r.opt("probability", rule.trigger.probability);
    r.opt("maxHits", rule.trigger.maxHits);
    r.req("action", action);
    rule.action.kind = parseAction(action);
    r.opt("delayMs", rule.action.delay);
    r.opt("inject", rule.action.injectKind);
    if (rule.action.kind == sim::ActionKind::Inject && rule.action.injectKind.empty()) {
      invalid("inject rule without an inject kind");
    }
    s.rules.push_back(std::move(rule));
  }
  return s;
}

}  // namespace

ScenarioConfig parseConfig(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    parseError(e.what());
  }
  ScenarioConfig cfg;
  Fields f(j, "config");
  std::string schema;
  f.req("schema", schema);
  if (schema != kSchema) parseError("unsupported schema '" + schema + "'");
  f.req("name", cfg.name);
  std::string hierarchy;
  f.req("hierarchy", hierarchy);
  try {
    cfg.variant = pki::parseVariant(hierarchy);
  } catch (const Error&) {
    invalid("unknown hierarchy '" + hierarchy + "'");
  }
  f.req("deviceCount", cfg.deviceCount);
  f.opt("seed", cfg.seed);
  f.opt("maxEvents", cfg.maxEvents);

  if (const json* o = f.get("options")) {
    Fields g(*o, "options");
    g.opt("useRa", cfg.options.useRa);
    g.opt("contactUpdateBeforeEnroll", cfg.options.contactUpdateBeforeEnroll);
    g.opt("serverSideKeygen", cfg.options.serverSideKeygen);
    g.opt("lastSp1Update", cfg.options.lastSp1Update);
    g.opt("fallbackRa", cfg.options.fallbackRa);
  }
  if (const json* t = f.get("timing")) {
    Fields g(*t, "timing");
    auto& tm = cfg.timing;
    g.opt("prepareAt", tm.prepareAt);
    g.opt("transferStart", tm.transferStart);
    g.opt("windowLength", tm.windowLength);
    g.opt("opLifetime", tm.opLifetime);
    g.opt("horizon", tm.horizon);
    g.opt("rebootDelay", tm.rebootDelay);
    g.opt("retryRound", tm.retryRound);
    g.opt("bootSpreadMs", tm.bootSpreadMs);
    g.opt("latencyMs", tm.latencyMs);
    g.opt("jitterMs", tm.jitterMs);
    g.opt("attemptTimeoutMs", tm.attemptTimeoutMs);
    g.opt("attempts", tm.attempts);
    g.opt("fallbackAttempts", tm.fallbackAttempts);
    g.opt("sessionLingerMs", tm.sessionLingerMs);
  }
  if (const json* p = f.get("preTransferTrust")) {
    if (p->is_string()) {
      if (p->get<std::string>() != "minimal") invalid("preTransferTrust must be \"minimal\" or a list of roles");
    } else if (p->is_array()) {
      std::set<pki::CaRole> roles;
      for (const auto& r : *p) {
        if (!r.is_string()) parseError("preTransferTrust: expected role names");
        roles.insert(parseRole(r.get<std::string>()));
      }
      cfg.preTransferTrust = std::move(roles);
    } else {
      parseError("preTransferTrust: expected a string or an array");
    }
  }
  if (const json* fl = f.get("faults")) {
    Fields g(*fl, "faults");
    std::vector<std::uint32_t> tamper;
    g.opt("raTamper", tamper);
    cfg.faults.raTamper.insert(tamper.begin(), tamper.end());
    g.opt("skipCa2Registration", cfg.faults.skipCa2Registration);
  }
  if (const json* p = f.get("probes")) {
    Fields g(*p, "probes");
    g.opt("oldCredentialAtSp1", cfg.probes.oldCredentialAtSp1);
    g.opt("nameMismatchEnroll", cfg.probes.nameMismatchEnroll);
  }
  std::string expect = "reenrolled";
  f.opt("expect", expect);
  cfg.expect = parseExpectation(expect);
  if (const json* o = f.get("expectOverrides")) {
    if (!o->is_object()) parseError("expectOverrides: expected an object");
    for (const auto& [key, value] : o->items()) {
      std::uint32_t index = 0;
      try {
        std::size_t used = 0;
        index = static_cast<std::uint32_t>(std::stoul(key, &used));
        if (used != key.size()) throw std::invalid_argument(key);
      } catch (const std::exception&) {
        parseError("expectOverrides: key '" + key + "' is not a device index");
      }
      if (!value.is_string()) parseError("expectOverrides: expected expectation names");
      cfg.expectOverrides[index] = parseExpectation(value.get<std::string>());
    }
  }
  if (const json* s = f.get("sizes")) {
    Fields g(*s, "sizes");
    g.opt("updateInfoListCounts", cfg.updateInfoListCounts);
  }
  // Parsed last: named schedules depend on deviceCount and timing.
  if (const json* a = f.get("adversary")) cfg.adversary = parseAdversary(*a, cfg);

  validate(cfg);
  return cfg;
}

ScenarioConfig loadConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigParseError, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parseConfig(ss.str());
}

void validate(const ScenarioConfig& cfg) {
  const auto& t = cfg.timing;
  if (cfg.name.empty()) invalid("name must be nonempty");
  if (cfg.deviceCount == 0 || cfg.deviceCount > 1000) invalid("deviceCount must be in 1..1000");
  if (t.prepareAt >= t.transferStart) invalid("prepareAt must precede transferStart");
  if (t.windowLength == 0) invalid("windowLength must be positive");
  if (t.transferStart + t.windowLength > t.horizon) invalid("the reset window must close before the horizon");
  if (t.attempts == 0 || t.fallbackAttempts == 0) invalid("attempt budgets must be positive");
  if (t.attemptTimeoutMs == 0 || t.retryRound == 0) invalid("timeouts must be positive");
  if (t.opLifetime == 0) invalid("opLifetime must be positive");
  for (const auto i : cfg.faults.raTamper) {
    if (i >= cfg.deviceCount) invalid("raTamper index " + std::to_string(i) + " out of range");
  }
  for (const auto& [i, _] : cfg.expectOverrides) {
    if (i >= cfg.deviceCount) invalid("expectOverrides index " + std::to_string(i) + " out of range");
  }
  for (const auto n : cfg.updateInfoListCounts) {
    if (n == 0 || n > cfg.deviceCount) invalid("updateInfoListCounts entries must be in 1..deviceCount");
  }
  if (cfg.preTransferTrust) {
    Rng rng(0);
    const auto h = pki::buildHierarchy(cfg.variant, rng);
    for (const auto role : *cfg.preTransferTrust) {
      if (h.anchorOf(role) != role) {
        invalid(std::string(pki::toString(role)) + " is not a root in hierarchy " +
                std::string(pki::toString(cfg.variant)));
      }
    }
  }
  for (const auto& r : cfg.adversary.rules) {
    if (r.trigger.probability < 0.0 || r.trigger.probability > 1.0) invalid("probability must be in [0, 1]");
  }
}

Expectation expectationFor(const ScenarioConfig& cfg, std::uint32_t index) {
  Expectation e = cfg.expect;
  if (cfg.faults.skipCa2Registration) e = Expectation::Fallback;
  if (cfg.options.useRa && cfg.faults.raTamper.contains(index)) e = Expectation::Fallback;
  if (const auto it = cfg.expectOverrides.find(index); it != cfg.expectOverrides.end()) e = it->second;
  return e;
}

namespace {

sim::Rule rule(std::string label, sim::ActionKind kind, sim::SimTime delay = 0, std::string src = "*",
               std::string dst = "*") {
  sim::Rule r;
  r.trigger.label = std::move(label);
  r.trigger.src = std::move(src);
  r.trigger.dst = std::move(dst);
  r.action.kind = kind;
  r.action.delay = delay;
  return r;
}

}  // namespace

std::vector<std::string> namedScheduleNames() {
  return {"none",         "replay_transfer",      "modify_transfer", "forge_transfer", "drop_enroll",
          "cross_session_replay", "sp2_direct", "random_drop",     "replay_all"};
}

sim::AdversarySchedule namedSchedule(std::string_view name, std::uint32_t deviceCount, const Timing& timing) {
  using sim::ActionKind;
  sim::AdversarySchedule s;
  s.name = std::string(name);
  if (name == "none") return s;
  if (name == "replay_transfer") {
    s.rules.push_back(rule("transfer_notice*", ActionKind::Replay, 50, "sp1"));
    s.rules.push_back(rule("transfer_message*", ActionKind::Replay, 50));
    s.rules.push_back(rule("update_info_list*", ActionKind::Replay, 50));
    return s;
  }
  if (name == "modify_transfer") {
    auto notice = rule("transfer_notice", ActionKind::Modify, 0, "sp1");
    notice.trigger.maxHits = deviceCount;
    s.rules.push_back(notice);
    auto message = rule("transfer_message", ActionKind::Modify);
    message.trigger.maxHits = 1;
    s.rules.push_back(message);
    return s;
  }
  if (name == "forge_transfer") {
    auto r = rule("transfer_notice.hello", ActionKind::Inject, 0, "sp1");
    r.trigger.maxHits = deviceCount;
    r.action.injectKind = "forged_cwt";
    s.rules.push_back(r);
    return s;
  }
  if (name == "drop_enroll") {
    s.rules.push_back(rule("enroll*", ActionKind::Drop, 0, "*", "ca2"));
    return s;
  }
  if (name == "cross_session_replay") {
    const sim::SimTime late = timing.sessionLingerMs + 60'000;
    s.rules.push_back(rule("transfer_notice", ActionKind::Replay, late, "sp1"));
    s.rules.push_back(rule("checkin", ActionKind::Replay, late));
    return s;
  }
  if (name == "sp2_direct") {
    auto r = rule("transfer_message.hello", ActionKind::Inject, 0, "sp2");
    r.trigger.maxHits = 1;
    r.action.injectKind = "sp2_direct_cwt";
    s.rules.push_back(r);
    return s;
  }
  if (name == "random_drop") {
    auto r = rule("*", ActionKind::Drop);
    r.trigger.probability = 0.1;
    s.rules.push_back(r);
    return s;
  }
  if (name == "replay_all") {
    s.rules.push_back(rule("*", ActionKind::Replay, 5));
    return s;
  }
  invalid("unknown adversary schedule '" + std::string(name) + "'");
}

sim::AdversarySchedule randomSchedule(Rng& rng) {
  static const std::vector<std::string> classes = {
      "enroll",          "enroll_server_key", "register_factory_certs", "checkin",         "update_query",
      "trust_update",    "update_push",       "transfer_notice",        "update_info_list", "transfer_message",
      "ra_challenge",    "ra_evidence",       "fallback_contact",       "*"};
  static const std::vector<std::string> suffixes = {"", ".hello", ".reply", ".resp", "*"};
  static const std::vector<sim::SimTime> delays = {0, 5, 400, 2500, 700'000};

  sim::AdversarySchedule s;
  s.name = "random";
  const auto n = 1 + rng.below(3);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto& cls = classes[rng.below(classes.size())];
    sim::Rule r;
    r.trigger.label = cls == "*" ? "*" : cls + suffixes[rng.below(suffixes.size())];
    switch (rng.below(4)) {
      case 0:
        r.action.kind = sim::ActionKind::Replay;
        r.action.delay = delays[rng.below(delays.size())];
        r.trigger.probability = 0.25 + 0.25 * static_cast<double>(rng.below(4));
        break;
      case 1:
        r.action.kind = sim::ActionKind::Modify;
        r.trigger.maxHits = 1 + rng.below(5);
        break;
      case 2:
        r.action.kind = sim::ActionKind::Drop;
        r.trigger.probability = 0.02 * static_cast<double>(1 + rng.below(5));
        break;
      default:
        r.action.kind = sim::ActionKind::Inject;
        r.action.injectKind = "junk";
        r.action.delay = delays[rng.below(3)];
        r.trigger.maxHits = 1 + rng.below(10);
        break;
    }
    s.name += "-" + std::string(sim::toString(r.action.kind));
    s.rules.push_back(std::move(r));
  }
  return s;
}

// --- size table -------------------------------------------------------------

std::vector<SizeRow> sizeTable(const ScenarioResult& result) {
  auto at = [&](const std::string& key) -> std::size_t {
    const auto it = result.sizes.find(key);
    return it == result.sizes.end() ? 0 : it->second;
  };
  std::vector<SizeRow> rows;
  rows.push_back({"TransferMessage (SP2)", at("transfer_message.payload"), at("transfer_message.cwt")});
  rows.push_back({"TransferMessage (relayed)", at("transfer_message.relayed.payload"), at("transfer_message.relayed")});
  rows.push_back({"DeviceUpdateInfo", at("device_update_info"), 0});
  std::vector<std::pair<std::size_t, std::string>> lists;
  for (const auto& [key, _] : result.sizes) {
    if (key.rfind("update_info_list(", 0) == 0 && key.find(").") != std::string::npos) {
      const auto n = std::stoul(key.substr(17));
      const std::string base = "update_info_list(" + std::to_string(n) + ")";
      if (std::none_of(lists.begin(), lists.end(), [&](const auto& p) { return p.first == n; })) {
        lists.emplace_back(n, base);
      }
    }
  }
  std::sort(lists.begin(), lists.end());
  for (const auto& [n, base] : lists) {
    rows.push_back({"UpdateInfoList(" + std::to_string(n) + ")", at(base + ".payload"), at(base + ".signed")});
  }
  return rows;
}

std::string formatSizeTable(const std::vector<SizeRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(28) << "message" << std::right << std::setw(10) << "payload" << std::setw(10)
     << "signed" << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(28) << r.messageClass << std::right << std::setw(10) << r.payloadBytes
       << std::setw(10);
    if (r.signedBytes) {
      os << r.signedBytes;
    } else {
      os << "-";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace ttp::scenario
