#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <string>

namespace bvloop {

/// Exact rational scalar. All symbolic coefficients use this type; the
/// symbolic layer never touches floating point.
using Rat = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

inline std::string to_string(const Rat& r) { return r.str(); }

inline double to_double(const Rat& r) { return static_cast<double>(r); }

/// Parses "p" or "p/q". Throws std::invalid_argument on malformed input.
inline Rat parse_rat(const std::string& s)
{
    auto slash = s.find('/');
    try {
        if (slash == std::string::npos)
            return Rat(BigInt(s));
        BigInt num(s.substr(0, slash));
        BigInt den(s.substr(slash + 1));
        if (den == 0)
            throw std::invalid_argument("zero denominator");
        return Rat(num, den);
    } catch (const std::runtime_error& e) {
        throw std::invalid_argument("bad rational '" + s + "': " + e.what());
    }
}

} // namespace bvloop
