#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace inscorr::acceptance {

struct CriterionResult {
    std::string id;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

struct Options {
    // Empty runs everything; otherwise ids such as "A1", "A4".
    std::vector<std::string> only;
    // Scratch space for the reproducibility check.
    std::filesystem::path scratch = std::filesystem::temp_directory_path() / "inscorr-acceptance";
    // Called after each criterion finishes.
    std::function<void(const CriterionResult&)> on_result;
};

std::vector<std::string> criterion_ids();

CriterionResult gradient_correctness();       // A1
CriterionResult schedule_exactness();         // A2
CriterionResult selection_oracle();           // A3
CriterionResult qualitative_ordering();       // A4
CriterionResult attack_efficacy();            // A5
CriterionResult reduction_identities();       // A6
CriterionResult noise_invariants();           // A7
CriterionResult memorization_proxy();         // A8
CriterionResult reproducibility(const std::filesystem::path& scratch);  // A9

std::vector<CriterionResult> run(const Options& opts = {});

// "PASS A1 (0.4s) detail"
std::string format_line(const CriterionResult& r);

}  // namespace inscorr::acceptance
