#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "toda/geometry.hpp"

namespace toda {

namespace {

// Triangulation of the closed quarter disk {x >= 0, y >= 0} refined by
// longest-edge propagation (Rivara). nb[e][k] is the neighbor across the
// edge opposite vertex k.
class QuarterMesh {
public:
    explicit QuarterMesh(double h) : R_(disk_radius()) { build_rings(h); }

    template <class SizeFn>
    void refine(const SizeFn& size, double h_bg) {
        for (int pass = 0; pass < 200; ++pass) {
            std::vector<int> marked;
            for (int e = 0; e < static_cast<int>(v_.size()); ++e) {
                double target = std::min(h_bg, size(e));
                if (diameter(e) > target) marked.push_back(e);
            }
            if (marked.empty()) return;
            for (int e : marked) {
                double target = std::min(h_bg, size(e));
                if (diameter(e) > target) bisect_lepp(e);
            }
        }
        throw std::runtime_error("mesh refinement did not terminate");
    }

    const std::vector<Point>& nodes() const { return p_; }
    const std::vector<std::array<int, 3>>& tris() const { return v_; }

    double diameter(int e) const {
        double d = 0.0;
        for (int k = 0; k < 3; ++k) d = std::max(d, (p_[v_[e][k]] - p_[v_[e][(k + 1) % 3]]).norm());
        return d;
    }

    // Distance from a point to the (closed) triangle e.
    double distance(int e, const Point& x) const {
        const Point& a = p_[v_[e][0]];
        const Point& b = p_[v_[e][1]];
        const Point& c = p_[v_[e][2]];
        double s1 = (b - a).cross(x - a), s2 = (c - b).cross(x - b), s3 = (a - c).cross(x - c);
        bool neg = s1 < 0 || s2 < 0 || s3 < 0, pos = s1 > 0 || s2 > 0 || s3 > 0;
        if (!(neg && pos)) return 0.0;
        auto seg = [&](const Point& u, const Point& w) {
            Point d = w - u;
            double t = std::clamp((x - u).dot(d) / d.norm2(), 0.0, 1.0);
            return (x - (u + d * t)).norm();
        };
        return std::min({seg(a, b), seg(b, c), seg(c, a)});
    }

private:
    void build_rings(double h) {
        int n = std::max(2, static_cast<int>(std::ceil(R_ / h)));
        std::vector<std::vector<int>> ring(n + 1);
        std::vector<std::vector<double>> ang(n + 1);
        p_.push_back(Point(0.0, 0.0));
        ring[0] = {0};
        ang[0] = {0.0};
        for (int i = 1; i <= n; ++i) {
            double r = R_ * i / n;
            int s = static_cast<int>(std::ceil(i * kPi / 2.0));
            for (int k = 0; k <= s; ++k) {
                double t = 0.5 * kPi * k / s;
                Point q(r * std::cos(t), r * std::sin(t));
                if (k == 0) q = Point(r, 0.0);
                if (k == s) q = Point(0.0, r);
                ring[i].push_back(static_cast<int>(p_.size()));
                ang[i].push_back(t);
                p_.push_back(q);
            }
        }
        for (size_t k = 0; k + 1 < ring[1].size(); ++k) add_tri(0, ring[1][k], ring[1][k + 1]);
        for (int i = 2; i <= n; ++i) {
            size_t a = 0, b = 0;
            const auto& in = ring[i - 1];
            const auto& out = ring[i];
            while (a + 1 < in.size() || b + 1 < out.size()) {
                bool adv_out;
                if (a + 1 >= in.size()) adv_out = true;
                else if (b + 1 >= out.size()) adv_out = false;
                else adv_out = ang[i][b + 1] <= ang[i - 1][a + 1];
                if (adv_out) {
                    add_tri(in[a], out[b], out[b + 1]);
                    ++b;
                } else {
                    add_tri(in[a], out[b], in[a + 1]);
                    ++a;
                }
            }
        }
        link();
    }

    void add_tri(int a, int b, int c) {
        if ((p_[b] - p_[a]).cross(p_[c] - p_[a]) < 0) std::swap(b, c);
        v_.push_back({a, b, c});
    }

    void link() {
        nb_.assign(v_.size(), {-1, -1, -1});
        std::map<std::pair<int, int>, std::pair<int, int>> owner;
        for (int e = 0; e < static_cast<int>(v_.size()); ++e) {
            for (int k = 0; k < 3; ++k) {
                int a = v_[e][(k + 1) % 3], b = v_[e][(k + 2) % 3];
                auto key = std::make_pair(std::min(a, b), std::max(a, b));
                auto it = owner.find(key);
                if (it == owner.end()) {
                    owner.emplace(key, std::make_pair(e, k));
                } else {
                    nb_[e][k] = it->second.first;
                    nb_[it->second.first][it->second.second] = e;
                }
            }
        }
    }

    // Local index of the longest edge, ties broken by vertex ids.
    int longest(int e) const {
        int best = 0;
        auto key = [&](int k) {
            int a = v_[e][(k + 1) % 3], b = v_[e][(k + 2) % 3];
            return std::make_tuple((p_[a] - p_[b]).norm2(), -std::min(a, b), -std::max(a, b));
        };
        for (int k = 1; k < 3; ++k)
            if (key(k) > key(best)) best = k;
        return best;
    }

    int local_index(int e, int nbr) const {
        for (int k = 0; k < 3; ++k)
            if (nb_[e][k] == nbr) return k;
        throw std::logic_error("mesh adjacency corrupted");
    }

    int midpoint(int a, int b, bool boundary) {
        auto key = std::make_pair(std::min(a, b), std::max(a, b));
        auto it = mid_.find(key);
        if (it != mid_.end()) return it->second;
        const Point& pa = p_[a];
        const Point& pb = p_[b];
        Point m = (pa + pb) * 0.5;
        if (boundary) {
            if (pa.y == 0.0 && pb.y == 0.0) m.y = 0.0;
            else if (pa.x == 0.0 && pb.x == 0.0) m.x = 0.0;
            else m = m * (R_ / m.norm());
        }
        int id = static_cast<int>(p_.size());
        p_.push_back(m);
        mid_.emplace(key, id);
        return id;
    }

    void set_back(int ext, int old_e, int new_e) {
        if (ext < 0) return;
        nb_[ext][local_index(ext, old_e)] = new_e;
    }

    // Bisect e across its edge opposite vertex k (which must be the longest
    // edge of the neighbor too, or a boundary edge).
    void split(int e, int k) {
        int n = nb_[e][k];
        int c = v_[e][k], e1 = v_[e][(k + 1) % 3], e2 = v_[e][(k + 2) % 3];
        int m = midpoint(e1, e2, n < 0);
        auto anb = nb_[e];
        int a1 = e, a2 = static_cast<int>(v_.size());
        v_.push_back({});
        nb_.push_back({});
        if (n < 0) {
            v_[a1] = {c, e1, m};
            v_[a2] = {c, m, e2};
            nb_[a1] = {-1, a2, anb[(k + 2) % 3]};
            nb_[a2] = {-1, anb[(k + 1) % 3], a1};
            set_back(anb[(k + 1) % 3], e, a2);
            return;
        }
        int kn = local_index(n, e);
        int d = v_[n][kn];
        auto nnb = nb_[n];
        int n1 = n, n2 = static_cast<int>(v_.size());
        v_.push_back({});
        nb_.push_back({});
        // a = (c, e1, e2) and n = (d, e2, e1) share the edge e1-e2.
        v_[a1] = {c, e1, m};
        v_[a2] = {c, m, e2};
        v_[n1] = {d, e2, m};
        v_[n2] = {d, m, e1};
        nb_[a1] = {n2, a2, anb[(k + 2) % 3]};
        nb_[a2] = {n1, anb[(k + 1) % 3], a1};
        nb_[n1] = {a2, n2, nnb[(kn + 2) % 3]};
        nb_[n2] = {a1, nnb[(kn + 1) % 3], n1};
        set_back(anb[(k + 1) % 3], e, a2);
        set_back(nnb[(kn + 1) % 3], n, n2);
    }

    void bisect_lepp(int t) {
        std::vector<int> stack{t};
        while (!stack.empty()) {
            int e = stack.back();
            int k = longest(e);
            int n = nb_[e][k];
            if (n < 0) {
                split(e, k);
                stack.pop_back();
                continue;
            }
            int kn = longest(n);
            if (nb_[n][kn] == e) {
                split(e, k);
                stack.pop_back();
            } else {
                stack.push_back(n);
            }
            if (stack.size() > 100000) throw std::runtime_error("LEPP chain too long");
        }
    }

    double R_;
    std::vector<Point> p_;
    std::vector<std::array<int, 3>> v_;
    std::vector<std::array<int, 3>> nb_;
    std::map<std::pair<int, int>, int> mid_;
};

struct Site {
    Point c;
    double r0, hz, core;
};

}  // namespace

std::shared_ptr<const Surface> build_surface(double h_target, int quad_order,
                                             const std::vector<RefinementSite>& sites) {
    const double R = disk_radius();
    if (!(h_target > 0.0 && h_target < R)) {
        std::ostringstream msg;
        msg << "build_surface: h_target = " << h_target << " outside (0, " << R << ")";
        throw std::invalid_argument(msg.str());
    }
    if (quad_order < 2 || quad_order > 10)
        throw std::invalid_argument("build_surface: quadrature order must lie in [2, 10]");

    std::vector<Site> all;
    for (const auto& s : sites) {
        if (!(s.r0 > 0.0)) throw std::invalid_argument("build_surface: site radius must be positive");
        double hz = std::min(h_target / 4.0, s.r0 / 8.0);
        double core = s.core > 0.0 ? std::min(s.core, hz) : hz;
        for (int sx : {1, -1})
            for (int sy : {1, -1}) all.push_back({Point(sx * s.center.x, sy * s.center.y), s.r0, hz, core});
    }

    try {
        // Slightly finer rings than h keep ring triangles below 1.5 h.
        QuarterMesh qm(h_target / 1.1);
        auto size = [&](int e) {
            double best = h_target;
            for (const auto& s : all) {
                double d = qm.distance(e, s.c);
                double v;
                if (d <= 2.0 * s.r0) v = std::max(s.core, std::min(s.hz, 0.25 * d));
                else v = s.hz + 0.5 * (d - 2.0 * s.r0);
                best = std::min(best, v);
            }
            return best;
        };
        qm.refine(size, h_target);

        // Mirror across the x-axis, then the y-axis.
        std::vector<Point> nodes = qm.nodes();
        std::vector<std::array<int, 3>> tris = qm.tris();
        for (int axis = 0; axis < 2; ++axis) {
            std::vector<int> image(nodes.size());
            size_t n0 = nodes.size();
            for (size_t i = 0; i < n0; ++i) {
                const Point& q = nodes[i];
                double coord = axis == 0 ? q.y : q.x;
                if (coord == 0.0) {
                    image[i] = static_cast<int>(i);
                } else {
                    image[i] = static_cast<int>(nodes.size());
                    nodes.push_back(axis == 0 ? Point(q.x, -q.y) : Point(-q.x, q.y));
                }
            }
            size_t t0 = tris.size();
            for (size_t e = 0; e < t0; ++e) {
                auto t = tris[e];
                tris.push_back({image[t[0]], image[t[2]], image[t[1]]});
            }
        }
        return std::make_shared<const Surface>(std::move(nodes), std::move(tris), quad_order);
    } catch (const std::exception& ex) {
        std::ostringstream msg;
        msg << "mesh generation failed for h_target = " << h_target << ": " << ex.what();
        throw std::runtime_error(msg.str());
    }
}

}  // namespace toda
