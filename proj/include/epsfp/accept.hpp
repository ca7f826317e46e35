#pragma once

#include "epsfp/config.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace epsfp::accept {

struct CriterionResult {
    std::string id;        // "A1" .. "A12"
    std::string summary;
    bool pass = false;
    std::string detail;
};

// Runs every acceptance criterion against the given configuration, printing
// one pass/fail line per criterion. Artifacts (reports, ROC table) land in
// out_dir when non-empty. Returns the per-criterion results.
std::vector<CriterionResult> run_acceptance(const cfg::AppConfig& config,
                                            const std::string& out_dir, std::ostream& log);

} // namespace epsfp::accept
