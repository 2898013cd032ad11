#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "firescar/grid.hpp"

namespace testing_support {

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("firescar_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline firescar::Mask random_mask(std::mt19937_64& rng, int h, int w, double p) {
    std::bernoulli_distribution b(p);
    firescar::Mask m(h, w);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = b(rng) ? 1 : 0;
    return m;
}

}  // namespace testing_support
