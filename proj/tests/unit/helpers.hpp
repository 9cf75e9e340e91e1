#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "inscorr/tensor.hpp"

namespace inscorr::testing {

// Central difference of f w.r.t. every value of the leaf `t`.
inline std::vector<double> numeric_grad(Tensor& t, const std::function<double()>& f, double h = 1e-6) {
    auto vals = t.mutable_values();
    std::vector<double> out(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const double keep = vals[i];
        vals[i] = keep + h;
        const double up = f();
        vals[i] = keep - h;
        const double down = f();
        vals[i] = keep;
        out[i] = (up - down) / (2.0 * h);
    }
    return out;
}

inline double max_rel_err(std::span<const double> a, std::span<const double> b, double floor = 1e-8) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), floor}));
    return worst;
}

inline std::vector<double> uniform_values(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& name) {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        path_ = std::filesystem::temp_directory_path() /
                ("inscorr-" + name + "-" + (info ? std::string(info->name()) : std::string("x")));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

}  // namespace inscorr::testing
