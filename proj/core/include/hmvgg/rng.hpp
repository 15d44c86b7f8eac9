#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace hmvgg {

// Seeded random source with hand-rolled distributions so that identical
// seeds give identical streams on every build. std::mt19937_64 output is
// fixed by the standard; the distribution mappings below are ours.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n), n > 0
    std::int64_t uniform_int(std::int64_t n) {
        const auto un = static_cast<std::uint64_t>(n);
        return static_cast<std::int64_t>(
            static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * un) >> 64));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
            std::swap(v[static_cast<std::size_t>(i)],
                      v[static_cast<std::size_t>(uniform_int(i + 1))]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace hmvgg
