#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tasklens/package.hpp"

namespace tasklens::fixtures {

struct FixtureInfo {
    int stage_count = 0;             // sequential stages emitted
    std::vector<TaskId> added_convs;  // unet-plus only
};

// 51-task U-Net package (encoder / bottleneck / decoder), with code map and src/.
ModelPackage unet(FixtureInfo* info = nullptr);
// unet plus two extra bottleneck convolutions.
ModelPackage unet_plus(FixtureInfo* info = nullptr);

struct RandomGraphOptions {
    int tasks = 20;
    std::uint64_t seed = 1;
    int max_inputs = 3;
    bool softmax = true;
};

ModelGraph random_graph(const RandomGraphOptions& opts);
ModelPackage random_package(const RandomGraphOptions& opts);

// Splitmix-seeded xorshift; identical sequences on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed);
    std::uint64_t next();
    int uniform(int lo, int hi);  // inclusive
    double unit();                // [0, 1)

private:
    std::uint64_t state_;
};

}  // namespace tasklens::fixtures
