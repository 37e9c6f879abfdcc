#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace iet::verify {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  uint64_t seed = 0;
  std::vector<CheckResult> checks;
  bool all_pass = true;
  std::string first_failure;

  std::string to_text() const;
  std::string to_json() const;
};

std::vector<std::string> suite_names();

// Runs one named suite ("all" chains every suite). Tolerances may be
// overridden per key, e.g. {"dense_tol", 1e-10}, {"grad_tol", 1e-4}.
SuiteReport run_suite(const std::string& suite, uint64_t seed,
                      const std::map<std::string, double>& tolerances = {});

}  // namespace iet::verify
