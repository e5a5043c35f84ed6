// Command-line front end for the transfer simulator.
//
//   ttp-sim run <config> [--seed N] [--trace out]
//   ttp-sim sizes <config>
//   ttp-sim attack-suite <config-dir>
//
// Exit codes: 0 pass, 1 expectation failed, 2 config error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ttp/scenario.hpp"

namespace fs = std::filesystem;
using namespace ttp;

namespace {

constexpr int kPass = 0;
constexpr int kExpectationFailed = 1;
constexpr int kConfigError = 2;

bool isConfigError(const Error& e) {
  return e.code() == ErrorCode::ConfigParseError || e.code() == ErrorCode::ScenarioInvalid;
}

void printResult(const scenario::ScenarioResult& r) {
  for (const auto& d : r.devices) {
    std::cout << "  " << d.id << " " << device::toString(d.phase) << " expected=" << scenario::toString(d.expected)
              << (d.met ? "" : "  <-- MISMATCH") << '\n';
  }
  for (const auto& v : r.stateViolations) std::cout << "  state violation: " << v << '\n';
  for (const auto& v : r.forwardSecrecyViolations) std::cout << "  forward secrecy: " << v << '\n';
  std::cout << r.summary() << '\n';
}

int runCommand(const std::string& path, std::optional<std::uint64_t> seed, const std::string& tracePath) {
  const auto cfg = scenario::loadConfig(path);
  const auto result = scenario::runScenario(cfg, seed);
  if (!tracePath.empty()) {
    std::ofstream out(tracePath);
    if (!out) throw Error(ErrorCode::ConfigParseError, "cannot write " + tracePath);
    result.trace.write(out);
  }
  printResult(result);
  return result.passed() ? kPass : kExpectationFailed;
}

int sizesCommand(const std::string& path) {
  const auto cfg = scenario::loadConfig(path);
  const auto result = scenario::runScenario(cfg);
  std::cout << scenario::formatSizeTable(scenario::sizeTable(result));
  return kPass;
}

int attackSuiteCommand(const std::string& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::ConfigParseError, dir + " is not a directory");
  std::vector<fs::path> configs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") configs.push_back(entry.path());
  }
  std::sort(configs.begin(), configs.end());
  if (configs.empty()) throw Error(ErrorCode::ConfigParseError, "no .json configs in " + dir);

  std::vector<scenario::ScenarioConfig> loaded;
  for (const auto& p : configs) loaded.push_back(scenario::loadConfig(p));

  int failures = 0;
  for (const auto& cfg : loaded) {
    const auto result = scenario::runScenario(cfg);
    const bool ok = result.passed();
    failures += ok ? 0 : 1;
    std::cout << (ok ? "PASS " : "FAIL ") << result.summary() << '\n';
    if (!ok) printResult(result);
  }
  std::cout << (loaded.size() - failures) << "/" << loaded.size() << " scenarios passed\n";
  return failures == 0 ? kPass : kExpectationFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trusted transfer protocol simulator"};
  app.require_subcommand(1);

  std::string config;
  std::uint64_t seed = 0;
  std::string tracePath;
  auto* run = app.add_subcommand("run", "Run one scenario");
  run->add_option("config", config, "Scenario file")->required();
  auto* seedOpt = run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--trace", tracePath, "Write the event trace to this file");

  std::string sizesConfig;
  auto* sizes = app.add_subcommand("sizes", "Print encoded message sizes");
  sizes->add_option("config", sizesConfig, "Scenario file")->required();

  std::string dir;
  auto* suite = app.add_subcommand("attack-suite", "Run every scenario in a directory");
  suite->add_option("config-dir", dir, "Directory of scenario files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kPass : kConfigError;
  }

  try {
    if (*run) return runCommand(config, *seedOpt ? std::optional(seed) : std::nullopt, tracePath);
    if (*sizes) return sizesCommand(sizesConfig);
    if (*suite) return attackSuiteCommand(dir);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return isConfigError(e) ? kConfigError : kExpectationFailed;
  }
  return kConfigError;
}
