#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>

// Elementary functions built only from IEEE +, -, *, / and exact scaling, so
// results are bit-identical on every conforming platform (the build disables
// FMA contraction). Used wherever encoder and decoder must agree exactly.

namespace plenopress::detmath {

namespace detail {

/// exp(x) for x in [-708, 709]: x = n ln2 + r with |r| <= ln2 / 2 (Cody-Waite
/// split of ln2), degree-13 Taylor polynomial for exp(r), and 2^n assembled
/// directly in the exponent field. n is rounded with the 1.5 * 2^52 trick,
/// whose low mantissa bits then hold n in two's complement.
inline double exp_core(double x) {
    constexpr double kLn2Hi = 6.93147180369123816490e-01;
    constexpr double kLn2Lo = 1.90821492927058770002e-10;
    constexpr double kInvLn2 = 1.44269504088896338700e+00;
    constexpr double kShifter = 0x1.8p52;
    const double t = x * kInvLn2 + kShifter;
    const double n = t - kShifter;
    const double r = (x - n * kLn2Hi) - n * kLn2Lo;
    double p = 1.0 / 6227020800.0;
    p = p * r + 1.0 / 479001600.0;
    p = p * r + 1.0 / 39916800.0;
    p = p * r + 1.0 / 3628800.0;
    p = p * r + 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    std::uint64_t bits;
    std::memcpy(&bits, &t, sizeof bits);
    bits = (bits + 1023) << 52;
    double scale;
    std::memcpy(&scale, &bits, sizeof scale);
    return p * scale;
}

}  // namespace detail

/// exp(x), relative error below 4e-16.
double exp(double x);

/// In-place exp of values known to be finite and <= 0 (softmax weights).
/// Arguments below -708 are treated as -708.
inline void exp_nonpositive(double* v, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double x = v[i] < -708.0 ? -708.0 : v[i];
        v[i] = detail::exp_core(x);
    }
}

/// Standard normal CDF, Abramowitz & Stegun 26.2.17 (|error| < 7.5e-8).
double normal_cdf(double x);

/// Logistic sigmoid 1 / (1 + exp(-x)).
double sigmoid(double x);

}  // namespace plenopress::detmath
