#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace flam {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;  // filled on failure (or informative values on pass)
};

struct ModuleReport {
  std::string module;
  std::vector<CheckResult> checks;
  bool all_passed() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

struct SelftestOptions {
  uint64_t seed = 42;
  std::string module_filter;   // empty = every module
  std::string weights_path;    // optional: backbone suite loads and validates it
  bool include_complexity = true;  // the timing-based attention check (~10 s)
};

// Runs each module's invariant suite. Module names: numgrid, attention,
// transformer, backbone, matcher, geoeval.
std::vector<ModuleReport> run_selftest(const SelftestOptions& opts);

}  // namespace flam
