#pragma once

#include <array>
#include <vector>

namespace bomlloc {

struct Sample {
    std::vector<double> x;      // fingerprint feature vector
    std::array<double, 2> y{};  // 2-D coordinates in meters
};

// A small labeled dataset from one environment ("day"); the unit of
// meta-learning.
struct Task {
    int domain_id = 0;
    std::vector<Sample> samples;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
};

}  // namespace bomlloc
