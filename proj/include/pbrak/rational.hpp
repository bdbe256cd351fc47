#pragma once

#include <cstdint>
#include <numeric>
#include <optional>
#include <string>

// Exact rational arithmetic on int64 numerator/denominator. Used for
// literal constants, power exponents, and time tags, where exact equality
// must be decidable. Operations return nullopt on overflow so callers can
// fall back to floating point.

namespace pbrak {

struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;  // always > 0, gcd(|num|, den) == 1

    friend bool operator==(const Rational&, const Rational&) = default;
};

namespace detail {
inline bool fits64(__int128 v) {
    return v >= static_cast<__int128>(INT64_MIN) && v <= static_cast<__int128>(INT64_MAX);
}
}  // namespace detail

inline std::optional<Rational> rat_make(__int128 n, __int128 d) {
    if (d == 0) return std::nullopt;
    if (d < 0) {
        n = -n;
        d = -d;
    }
    __int128 a = n < 0 ? -n : n;
    __int128 g = 1;
    {
        __int128 x = a, y = d;
        while (y != 0) {
            __int128 r = x % y;
            x = y;
            y = r;
        }
        g = x == 0 ? 1 : x;
    }
    n /= g;
    d /= g;
    if (!detail::fits64(n) || !detail::fits64(d)) return std::nullopt;
    return Rational{static_cast<std::int64_t>(n), static_cast<std::int64_t>(d)};
}

inline Rational rat_int(std::int64_t n) { return Rational{n, 1}; }

inline std::optional<Rational> rat_add(const Rational& a, const Rational& b) {
    return rat_make(static_cast<__int128>(a.num) * b.den + static_cast<__int128>(b.num) * a.den,
                    static_cast<__int128>(a.den) * b.den);
}
inline std::optional<Rational> rat_sub(const Rational& a, const Rational& b) {
    return rat_make(static_cast<__int128>(a.num) * b.den - static_cast<__int128>(b.num) * a.den,
                    static_cast<__int128>(a.den) * b.den);
}
inline std::optional<Rational> rat_mul(const Rational& a, const Rational& b) {
    return rat_make(static_cast<__int128>(a.num) * b.num, static_cast<__int128>(a.den) * b.den);
}
inline std::optional<Rational> rat_div(const Rational& a, const Rational& b) {
    if (b.num == 0) return std::nullopt;
    return rat_make(static_cast<__int128>(a.num) * b.den, static_cast<__int128>(a.den) * b.num);
}

inline Rational rat_neg(const Rational& a) { return Rational{-a.num, a.den}; }

inline bool rat_is_integer(const Rational& a) { return a.den == 1; }
inline bool rat_is_zero(const Rational& a) { return a.num == 0; }

inline double rat_to_double(const Rational& a) {
    return static_cast<double>(a.num) / static_cast<double>(a.den);
}

inline int rat_cmp(const Rational& a, const Rational& b) {
    __int128 l = static_cast<__int128>(a.num) * b.den;
    __int128 r = static_cast<__int128>(b.num) * a.den;
    return l < r ? -1 : (l > r ? 1 : 0);
}

// "3", "-1/2"
inline std::string rat_to_string(const Rational& a) {
    std::string s = std::to_string(a.num);
    if (a.den != 1) s += "/" + std::to_string(a.den);
    return s;
}

}  // namespace pbrak
