#pragma once

#include <string>
#include <vector>

namespace supcon {

struct VerifyResult {
    std::string suite;
    bool passed = false;
    std::string detail;
};

const std::vector<std::string>& verify_suite_names();

/// Runs the named self-check suites (all of them when filter is empty):
/// oracle, gradcheck, schedule, formats, metrics, augment. Each suite
/// returns pass/fail plus a one-line summary.
std::vector<VerifyResult> run_verify(const std::string& filter = "");

}  // namespace supcon
