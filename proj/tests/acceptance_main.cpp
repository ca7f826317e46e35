// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Also reachable as `epsfp accept`.

#include "epsfp/accept.hpp"

#include <cstdlib>
#include <iostream>

int main(int argc, char** argv) {
    std::string out_dir = "acceptance_out";
    if (argc > 1) out_dir = argv[1];
    const char* env_cfg = std::getenv("EPSFP_CONFIG");

    epsfp::cfg::AppConfig config = env_cfg ? epsfp::cfg::AppConfig::from_file(env_cfg)
                                           : epsfp::cfg::AppConfig::defaults();
    auto results = epsfp::accept::run_acceptance(config, out_dir, std::cout);

    int failures = 0;
    for (const auto& r : results) failures += !r.pass;
    std::cout << (failures == 0 ? "ACCEPTANCE: all criteria passed\n"
                                : "ACCEPTANCE: " + std::to_string(failures) + " criteria FAILED\n");
    return failures == 0 ? 0 : 1;
}
