#pragma once

#include <string>
#include <vector>

namespace cmfuse {

struct SuiteCheck {
    std::string module;
    std::string name;
    double tol = 0.0;
    double max_rel_err = 0.0;
    bool pass = false;
};

// Named finite-difference checks at 64-bit precision. `filter` is "all" or a
// module key: tensor-ops | attention | pipelines | audio-encoder | msa-layer |
// cross-transformer | fusion-ops | adaptive-block | trimodal | loss-classify.
// A positive tol_override replaces every default tolerance.
std::vector<SuiteCheck> run_gradient_suite(const std::string& filter,
                                           double tol_override = 0.0);

bool suite_passed(const std::vector<SuiteCheck>& checks);

}  // namespace cmfuse
