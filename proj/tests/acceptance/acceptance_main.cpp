// Runs every acceptance criterion and prints one PASS/FAIL line each.
// Usage: acceptance [--scratch DIR] [A1 A4 ...]

#include <iostream>
#include <string>

#include "inscorr/acceptance.hpp"

int main(int argc, char** argv) {
    inscorr::acceptance::Options opts;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--scratch" && i + 1 < argc)
            opts.scratch = argv[++i];
        else
            opts.only.push_back(a);
    }
    opts.on_result = [](const inscorr::acceptance::CriterionResult& r) {
        std::cout << inscorr::acceptance::format_line(r) << std::endl;
    };
    const auto results = inscorr::acceptance::run(opts);
    std::size_t passed = 0;
    for (const auto& r : results) passed += r.passed ? 1 : 0;
    std::cout << passed << "/" << results.size() << " criteria passed" << std::endl;
    return passed == results.size() && !results.empty() ? 0 : 1;
}
