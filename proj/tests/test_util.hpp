#pragma once

#include "damtl/common.hpp"
#include "oracles.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace testutil
{
    inline damtl::Matrix from_dense(const oracle::Dense &d)
    {
        damtl::Matrix m(static_cast<long>(d.size()), static_cast<long>(d.front().size()));
        for (std::size_t i = 0; i < d.size(); ++i)
            for (std::size_t j = 0; j < d[i].size(); ++j)
                m(static_cast<long>(i), static_cast<long>(j)) = d[i][j];
        return m;
    }

    inline damtl::Matrix random_matrix(long r, long c, std::mt19937_64 &gen)
    {
        std::normal_distribution<double> nd;
        damtl::Matrix m(r, c);
        for (long j = 0; j < c; ++j)
            for (long i = 0; i < r; ++i)
                m(i, j) = nd(gen);
        return m;
    }

    inline damtl::Matrix random_spd(long n, std::mt19937_64 &gen, double shift = 0.5)
    {
        return from_dense(oracle::random_spd(static_cast<std::size_t>(n), gen, shift));
    }

    inline std::filesystem::path scratch_dir(const std::string &name)
    {
        auto dir = std::filesystem::temp_directory_path() / ("damtl_test_" + name);
        std::filesystem::remove_all(dir);
        std::filesystem::create_directories(dir);
        return dir;
    }
} // namespace testutil
