#pragma once

#include <compare>
#include <cstdint>

namespace bvloop {

/// Bidegree (form degree, ghost number). The total degree deg+gh is the
/// grading under which the dot product and dot bracket are graded
/// (anti)commutative.
struct Grading {
    int deg = 0;
    int gh = 0;

    constexpr int total() const { return deg + gh; }

    constexpr Grading operator+(const Grading& o) const { return {deg + o.deg, gh + o.gh}; }
    constexpr Grading operator-(const Grading& o) const { return {deg - o.deg, gh - o.gh}; }
    constexpr Grading& operator+=(const Grading& o)
    {
        deg += o.deg;
        gh += o.gh;
        return *this;
    }
    auto operator<=>(const Grading&) const = default;
};

/// Koszul parity of transposing homogeneous factors a and b:
/// sign is (-1)^{deg a deg b + gh a gh b}.
constexpr int koszul_parity(const Grading& a, const Grading& b)
{
    return (a.deg * b.deg + a.gh * b.gh) & 1;
}

constexpr int koszul_sign(const Grading& a, const Grading& b)
{
    return koszul_parity(a, b) ? -1 : 1;
}

} // namespace bvloop
