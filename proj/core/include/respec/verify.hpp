#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace respec {

// Self-contained correctness audit: enumeration-based losslessness
// oracles, the acceptance-variance identity, and finite-difference
// gradient checks, plus a deliberate-mutation negative control.
struct VerifyReport {
    struct Line {
        std::string name;
        bool pass = false;
        std::string detail;
    };
    std::vector<Line> lines;
    bool all_pass = true;

    void add(const std::string & name, bool pass, const std::string & detail);
};

VerifyReport run_verify(uint64_t seed);

std::string format_report(const VerifyReport & report);

} // namespace respec
