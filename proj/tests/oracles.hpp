#pragma once

// Closed-form references for the unit-area disk, written independently of
// the library's solvers.

#include <cmath>
#include <functional>

namespace oracle {

inline constexpr double pi = 3.141592653589793238462643383279502884;
inline double radius() { return 1.0 / std::sqrt(pi); }

// Neumann Green's function with pole at the center:
// (1/2pi) log(1/r) + r^2/4 + c0 with c0 fixing the zero mean.
inline double center_constant() { return std::log(radius()) / (2 * pi) - 3.0 / (8 * pi); }
inline double green_center(double x1, double x2) {
    double r = std::hypot(x1, x2);
    return std::log(1.0 / r) / (2 * pi) + 0.25 * r * r + center_constant();
}
inline void green_center_gradient(double x1, double x2, double& g1, double& g2) {
    double r2 = x1 * x1 + x2 * x2;
    g1 = -x1 / (2 * pi * r2) + 0.5 * x1;
    g2 = -x2 / (2 * pi * r2) + 0.5 * x2;
}

// Method of images for an interior pole xi != 0, plus the quadratic area term.
inline double green_images(double x1, double x2, double p1, double p2) {
    double R = radius();
    double d = std::hypot(x1 - p1, x2 - p2);
    double x2n = x1 * x1 + x2 * x2, p2n = p1 * p1 + p2 * p2;
    double img = std::sqrt(std::max(0.0, p2n * x2n - 2 * R * R * (x1 * p1 + x2 * p2) + R * R * R * R)) / R;
    double C = std::log(R) / pi - 3.0 / (8 * pi);
    return -(std::log(d) + std::log(img)) / (2 * pi) + (x2n + p2n) / (4 * pi * R * R) + C;
}

inline double robin_interior(double p1, double p2) {
    double R = radius(), p2n = p1 * p1 + p2 * p2;
    return -std::log((R * R - p2n) / R) / (2 * pi) + p2n / (2 * pi * R * R) + std::log(R) / pi -
           3.0 / (8 * pi);
}

inline double robin_boundary() { return std::log(radius()) / pi + 1.0 / (8 * pi); }

// Composite Gauss-Legendre on [a, b] with n panels of 20 points.
inline double integrate(const std::function<double(double)>& f, double a, double b, int panels) {
    static const double x[10] = {0.0765265211334973, 0.2277858511416451, 0.3737060887154195,
                                 0.5108670019508271, 0.6360536807265150, 0.7463319064601508,
                                 0.8391169718222188, 0.9122344282513259, 0.9639719272779138,
                                 0.9931285991850949};
    static const double w[10] = {0.1527533871307258, 0.1491729864726037, 0.1420961093183820,
                                 0.1316886384491766, 0.1181945319615184, 0.1019301198172404,
                                 0.0832767415767048, 0.0626720483341091, 0.0406014298003869,
                                 0.0176140071391521};
    double h = (b - a) / panels, s = 0.0;
    for (int p = 0; p < panels; ++p) {
        double c = a + (p + 0.5) * h;
        for (int i = 0; i < 10; ++i) s += w[i] * (f(c + 0.5 * h * x[i]) + f(c - 0.5 * h * x[i]));
    }
    return 0.5 * h * s;
}

}  // namespace oracle
