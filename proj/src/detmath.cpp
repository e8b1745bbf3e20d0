#include "plenopress/detmath.hpp"

#include <cmath>
#include <limits>

namespace plenopress::detmath {

double exp(double x) {
    if (std::isnan(x)) return x;
    if (x > 709.0) return std::numeric_limits<double>::infinity();
    if (x < -745.0) return 0.0;
    if (x < -708.0) return detail::exp_core(x + 64.0 * 0.69314718055994530942) * 0x1p-64;
    return detail::exp_core(x);
}

double normal_cdf(double x) {
    constexpr double kP = 0.2316419;
    constexpr double kB1 = 0.319381530, kB2 = -0.356563782, kB3 = 1.781477937, kB4 = -1.821255978,
                     kB5 = 1.330274429;
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    const double ax = std::fabs(x);
    const double t = 1.0 / (1.0 + kP * ax);
    const double poly = t * (kB1 + t * (kB2 + t * (kB3 + t * (kB4 + t * kB5))));
    const double upper = kInvSqrt2Pi * exp(-0.5 * ax * ax) * poly;
    return x >= 0.0 ? 1.0 - upper : upper;
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + exp(-x));
    const double e = exp(x);
    return e / (1.0 + e);
}

}  // namespace plenopress::detmath
