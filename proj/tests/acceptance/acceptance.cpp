// SPDX-License-Identifier: Apache-2.0
//
// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.
// Arguments select criterion ids; none runs all ten.
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "lmdm/verify/acceptance.hpp"

int main(int argc, char** argv) {
  std::vector<int> ids;
  for (int i = 1; i < argc; ++i) ids.push_back(std::atoi(argv[i]));
  lmdm::verify::AcceptanceOptions opts;
  opts.log = [](const std::string& line) { std::fprintf(stderr, "  | %s\n", line.c_str()); };
  const auto results = lmdm::verify::run_acceptance(opts, ids);
  int failed = 0;
  for (const auto& r : results) {
    std::printf("%s\n", lmdm::verify::format_result(r).c_str());
    failed += r.passed ? 0 : 1;
  }
  std::printf("%zu criteria, %d failed\n", results.size(), failed);
  return failed == 0 ? 0 : 1;
}
