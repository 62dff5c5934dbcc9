#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace damtl
{
    // splitmix64 finalizer; used to derive decorrelated stream seeds from a master seed.
    inline constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept
    {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    // Stream tags keep every random process (event timing, data, common noise, ...) on its own
    // generator so that enabling or disabling one process never shifts another one's draws.
    enum class StreamTag : std::uint64_t
    {
        Topology = 1,
        GroundTruth = 2,
        Field = 3,
        NodeModel = 4,
        NodeData = 5,
        CommonNoise = 6,
        OuterNoise = 7,
        EventInner = 8,
        EventConsensus = 9,
        EventTask = 10,
        EventOuter = 11,
        EventBroadcast = 12,
        Dataset = 13,
    };

    inline constexpr std::uint64_t stream_seed(std::uint64_t master, StreamTag tag, std::uint64_t index) noexcept
    {
        return mix_seed(mix_seed(master ^ (static_cast<std::uint64_t>(tag) << 56)) ^ index);
    }

    // splitmix64 as a 64-bit engine; cheap to seed, used where a fresh stream per index is needed.
    class SplitMix64
    {
    public:
        using result_type = std::uint64_t;
        explicit SplitMix64(std::uint64_t seed = 1) noexcept : state_(seed) {}
        static constexpr result_type min() noexcept { return 0; }
        static constexpr result_type max() noexcept { return ~result_type{0}; }
        result_type operator()() noexcept
        {
            const std::uint64_t out = mix_seed(state_);
            state_ += 0x9e3779b97f4a7c15ULL;
            return out;
        }

    private:
        std::uint64_t state_;
    };

    // Both engines are fully specified; the distribution transforms below are written out so draws
    // are identical across standard library implementations.
    template <class Engine>
    class BasicRng
    {
    public:
        explicit BasicRng(std::uint64_t seed = 1) : engine_(seed) {}

        std::uint64_t next_u64() { return engine_(); }

        // Uniform on [0, 1) with 53 random bits.
        double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

        double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

        // Standard normal via Box-Muller; caches the paired value.
        double normal()
        {
            if (has_spare_)
            {
                has_spare_ = false;
                return spare_;
            }
            double u1 = 0.0;
            do
            {
                u1 = uniform();
            } while (u1 <= 0.0);
            const double u2 = uniform();
            const double r = std::sqrt(-2.0 * std::log(u1));
            const double a = 2.0 * std::numbers::pi * u2;
            spare_ = r * std::sin(a);
            has_spare_ = true;
            return r * std::cos(a);
        }

        double normal(double mean, double stddev) { return mean + stddev * normal(); }

        double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

        // Uniform integer in [0, n).
        std::uint64_t below(std::uint64_t n)
        {
            const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
            std::uint64_t x = 0;
            do
            {
                x = engine_();
            } while (x >= limit);
            return x % n;
        }

    private:
        Engine engine_;
        double spare_ = 0.0;
        bool has_spare_ = false;
    };

    using Rng = BasicRng<std::mt19937_64>;
    using CounterRng = BasicRng<SplitMix64>;
} // namespace damtl
