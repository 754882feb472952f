#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

#include "toda/geometry.hpp"

namespace toda {

namespace {

struct Rule {
    std::vector<double> x;
    std::vector<double> w;
};

Rule compute_gauss_legendre(int n) {
    Rule r;
    r.x.resize(n);
    r.w.resize(n);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double dp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        r.x[i] = 0.5 * (1.0 - x);
        r.w[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    return r;
}

}  // namespace

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    if (n < 1 || n > 64) throw std::invalid_argument("gauss_legendre: n out of range");
    static std::mutex mu;
    static std::map<int, Rule> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, compute_gauss_legendre(n)).first;
    nodes = it->second.x;
    weights = it->second.w;
}

double integrate_graded(const std::function<double(double)>& f, double a, double b,
                        double first, int per_panel) {
    std::vector<double> gx, gw;
    gauss_legendre(per_panel, gx, gw);
    double total = 0.0;
    double lo = a;
    double len = std::min(first, b - a);
    while (lo < b) {
        double hi = std::min(b, lo + len);
        if (b - hi < 0.25 * len) hi = b;
        double part = 0.0;
        for (int i = 0; i < per_panel; ++i) part += gw[i] * f(lo + (hi - lo) * gx[i]);
        total += part * (hi - lo);
        lo = hi;
        len *= 2.0;
    }
    return total;
}

double CutOff::profile(double s) {
    s = std::abs(s);
    if (s <= 1.0) return 1.0;
    if (s >= 2.0) return 0.0;
    double t = s - 1.0;
    return 1.0 - t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

double CutOff::profile_d1(double s) {
    double sgn = s < 0 ? -1.0 : 1.0;
    s = std::abs(s);
    if (s <= 1.0 || s >= 2.0) return 0.0;
    double t = s - 1.0;
    return -sgn * 30.0 * t * t * (t - 1.0) * (t - 1.0);
}

double CutOff::profile_d2(double s) {
    s = std::abs(s);
    if (s <= 1.0 || s >= 2.0) return 0.0;
    double t = s - 1.0;
    return -60.0 * t * (2.0 * t - 1.0) * (t - 1.0);
}

double CutOff::laplacian(double dist) const {
    if (dist <= r0_ || dist >= 2.0 * r0_) return 0.0;
    return d2(dist) + d1(dist) / dist;
}

std::vector<ChartPoint> chart_rule(const Chart& chart, double outer, double inner_scale,
                                   int angular, int radial_per_panel, bool surface_measure) {
    std::vector<double> gx, gw;
    gauss_legendre(radial_per_panel, gx, gw);
    std::vector<double> edges{0.0};
    double first = inner_scale > 0.0 ? inner_scale / 4.0 : outer / 64.0;
    first = std::min(first, outer);
    double len = first;
    while (edges.back() < outer) {
        double next = edges.back() + len;
        if (outer - next < 0.25 * len) next = outer;
        edges.push_back(std::min(next, outer));
        len = edges.back() - edges[edges.size() - 2];
        len *= 2.0;
    }

    std::vector<double> th, thw;
    if (chart.is_boundary()) {
        std::vector<double> ax, aw;
        gauss_legendre(std::max(2, angular / 2), ax, aw);
        for (size_t i = 0; i < ax.size(); ++i) {
            th.push_back(kPi * ax[i]);
            thw.push_back(kPi * aw[i]);
        }
    } else {
        for (int k = 0; k < angular; ++k) {
            th.push_back(2.0 * kPi * (k + 0.5) / angular);
            thw.push_back(2.0 * kPi / angular);
        }
    }

    std::vector<ChartPoint> out;
    out.reserve((edges.size() - 1) * gx.size() * th.size());
    for (size_t p = 0; p + 1 < edges.size(); ++p) {
        double lo = edges[p], hi = edges[p + 1];
        for (size_t i = 0; i < gx.size(); ++i) {
            double s = lo + (hi - lo) * gx[i];
            double wr = gw[i] * (hi - lo) * s;
            for (size_t k = 0; k < th.size(); ++k) {
                ChartPoint cp;
                cp.y = Point(s * std::cos(th[k]), s * std::sin(th[k]));
                cp.x = chart.to_surface(cp.y);
                cp.w = wr * thw[k];
                if (surface_measure) cp.w *= std::exp(chart.phi_hat(cp.y));
                out.push_back(cp);
            }
        }
    }
    return out;
}

}  // namespace toda
