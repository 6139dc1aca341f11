#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace mocapo {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

inline constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset) noexcept
{
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Length-prefixed FNV-1a, so that ("ab","c") and ("a","bc") hash differently.
inline std::uint64_t fnv1a_field(std::string_view bytes, std::uint64_t h) noexcept
{
    auto const n = static_cast<std::uint64_t>(bytes.size());
    for (int i = 0; i < 8; ++i) {
        h ^= static_cast<unsigned char>((n >> (8 * i)) & 0xff);
        h *= 0x100000001b3ULL;
    }
    return fnv1a(bytes, h);
}

/// Maps a 64-bit hash to [0, 1).
inline constexpr double unit_interval(std::uint64_t h) noexcept
{
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// All draws go through explicit integer arithmetic on mt19937_64 output so that a
// seed reproduces the same run with any standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    double uniform01() { return unit_interval(next()); }

    // uniform in [0, n); n must be > 0
    std::size_t uniform_index(std::size_t n)
    {
        auto const bound = static_cast<std::uint64_t>(n);
        auto const limit = bound * (UINT64_MAX / bound);
        std::uint64_t x = next();
        while (x >= limit) { x = next(); }
        return static_cast<std::size_t>(x % bound);
    }

    bool coin() { return (next() >> 63) != 0U; }

    template <typename T>
    void shuffle(std::vector<T>& v)
    {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[uniform_index(i)]);
        }
    }

    // k distinct indices out of [0, n), in draw order
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k)
    {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (std::size_t i = 0; i < k && i < n; ++i) {
            std::swap(idx[i], idx[i + uniform_index(n - i)]);
        }
        idx.resize(std::min(k, n));
        return idx;
    }

    template <typename T>
    std::vector<T> sample(std::vector<T> const& pool, std::size_t k)
    {
        std::vector<T> out;
        out.reserve(k);
        for (auto i : sample_indices(pool.size(), k)) { out.push_back(pool[i]); }
        return out;
    }

    template <typename Container>
    auto const& pick(Container const& c)
    {
        auto it = c.begin();
        std::advance(it, static_cast<std::ptrdiff_t>(uniform_index(c.size())));
        return *it;
    }

    /// Independent stream derived from a seed and a stream label.
    static Rng stream(std::uint64_t seed, std::string_view label)
    {
        return Rng(splitmix64(seed ^ fnv1a(label)));
    }

private:
    std::mt19937_64 engine_;
};

} // namespace mocapo
