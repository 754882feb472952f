#include <algorithm>
#include <complex>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "toda/elliptic.hpp"
#include "toda/geometry.hpp"

namespace toda {

using cplx = std::complex<double>;

double distance_to_boundary(const Point& x) { return disk_radius() - x.norm(); }

bool on_boundary(const Point& x, double tol) { return std::abs(x.norm() - disk_radius()) <= tol; }

Point boundary_point(double s) {
    double R = disk_radius();
    return {R * std::cos(s / R), R * std::sin(s / R)};
}

double boundary_arclength(const Point& x) {
    double t = std::atan2(x.y, x.x);
    if (t < 0) t += 2.0 * kPi;
    return disk_radius() * t;
}

// ---------------------------------------------------------------- Chart

Chart::Chart(Point center, ChartKind kind, double radius)
    : center_(center), kind_(kind), radius_(radius), R_(disk_radius()) {
    if (kind_ == ChartKind::Boundary) angle_ = std::atan2(center.y, center.x);
}

Point Chart::to_local(const Point& x) const {
    if (kind_ == ChartKind::Interior) return x - center_;
    cplx z = std::polar(1.0, -angle_) * cplx(x.x, x.y);
    cplx y = 2.0 * cplx(0.0, R_) * (R_ - z) / (R_ + z);
    return {y.real(), y.imag()};
}

Point Chart::to_surface(const Point& y) const {
    if (kind_ == ChartKind::Interior) return y + center_;
    cplx w = 0.5 * cplx(y.x, y.y);
    cplx iR(0.0, R_);
    cplx z = R_ * (iR - w) / (w + iR);
    cplx x = std::polar(1.0, angle_) * z;
    return {x.real(), x.imag()};
}

double Chart::phi_hat(const Point& y) const {
    if (kind_ == ChartKind::Interior) return 0.0;
    double a = 0.5 * y.x, b = 0.5 * y.y + R_;
    return 4.0 * std::log(R_) - 2.0 * std::log(a * a + b * b);
}

double Chart::inv_conformal_at(const Point& x) const {
    if (kind_ == ChartKind::Interior) return 1.0;
    cplx z = std::polar(1.0, -angle_) * cplx(x.x, x.y);
    double m = 4.0 * R_ * R_ / std::norm(R_ + z);
    return m * m;
}

std::array<double, 4> Chart::jacobian(const Point& y) const {
    if (kind_ == ChartKind::Interior) return {1.0, 0.0, 0.0, 1.0};
    cplx w = 0.5 * cplx(y.x, y.y);
    cplx iR(0.0, R_);
    cplx d = std::polar(1.0, angle_) * (-cplx(0.0, R_ * R_) / ((w + iR) * (w + iR)));
    return {d.real(), -d.imag(), d.imag(), d.real()};
}

Point Chart::tangent() const {
    if (kind_ == ChartKind::Interior) return {1.0, 0.0};
    return {-std::sin(angle_), std::cos(angle_)};
}

double Chart::arc_orientation() const { return 1.0; }

Chart make_chart(const Point& xi) {
    double R = disk_radius();
    double r = xi.norm();
    if (r > R * (1.0 + 1e-12)) throw std::invalid_argument("make_chart: point outside the disk");
    if (std::abs(r - R) <= 1e-12) {
        Point c = xi * (R / r);
        return Chart(c, ChartKind::Boundary, R);
    }
    return Chart(xi, ChartKind::Interior, 0.5 * (R - r));
}

Chart make_chart(const Surface&, const Point& xi) { return make_chart(xi); }

// -------------------------------------------------------------- Surface

Surface::Surface(std::vector<Point> nodes, std::vector<std::array<int, 3>> elements,
                 int quad_order)
    : radius_(disk_radius()), quad_order_(quad_order), nodes_(std::move(nodes)),
      elems_(std::move(elements)) {
    if (quad_order_ < 2 || quad_order_ > 10)
        throw std::invalid_argument("Surface: quadrature order must lie in [2, 10]");
    build_geometry();
    build_locator();
}

Surface::~Surface() = default;

namespace {

double wrap_angle(double t) {
    while (t < 0) t += 2.0 * kPi;
    while (t >= 2.0 * kPi) t -= 2.0 * kPi;
    return t;
}

std::array<double, 3> barycentric(const Point& p0, const Point& p1, const Point& p2,
                                  const Point& x) {
    Point e1 = p1 - p0, e2 = p2 - p0, d = x - p0;
    double det = e1.cross(e2);
    double l1 = d.cross(e2) / det;
    double l2 = e1.cross(d) / det;
    return {1.0 - l1 - l2, l1, l2};
}

}  // namespace

void Surface::build_geometry() {
    const int ne = num_elements();
    grads_.resize(ne);
    tri_area_.resize(ne);
    measure_.resize(ne);
    elem_bedge_.assign(ne, -1);

    for (int e = 0; e < ne; ++e) {
        auto& t = elems_[e];
        double a2 = (nodes_[t[1]] - nodes_[t[0]]).cross(nodes_[t[2]] - nodes_[t[0]]);
        if (a2 < 0) {
            std::swap(t[1], t[2]);
            a2 = -a2;
        }
        if (!(a2 > 0)) {
            std::ostringstream msg;
            msg << "Surface: degenerate element " << e;
            throw std::runtime_error(msg.str());
        }
        tri_area_[e] = 0.5 * a2;
        for (int i = 0; i < 3; ++i) {
            const Point& pj = nodes_[t[(i + 1) % 3]];
            const Point& pk = nodes_[t[(i + 2) % 3]];
            grads_[e][i] = Point(pj.y - pk.y, pk.x - pj.x) / a2;
        }
    }

    // Edge incidence: interior edges shared by two elements, boundary edges by one.
    std::map<std::pair<int, int>, std::vector<int>> edges;
    for (int e = 0; e < ne; ++e) {
        for (int i = 0; i < 3; ++i) {
            int a = elems_[e][i], b = elems_[e][(i + 1) % 3];
            edges[{std::min(a, b), std::max(a, b)}].push_back(e);
        }
    }
    bedges_.clear();
    for (const auto& [key, list] : edges) {
        if (list.size() > 2) throw std::runtime_error("Surface: non-conforming mesh");
        if (list.size() == 1) {
            int e = list[0];
            const auto& t = elems_[e];
            int a = -1, b = -1;
            for (int i = 0; i < 3; ++i) {
                int u = t[i], v = t[(i + 1) % 3];
                if (std::min(u, v) == key.first && std::max(u, v) == key.second) a = u, b = v;
            }
            if (!on_boundary(nodes_[a], 1e-9) || !on_boundary(nodes_[b], 1e-9))
                throw std::runtime_error("Surface: boundary edge off the circle");
            BoundaryEdge be;
            be.a = a;
            be.b = b;
            be.elem = e;
            be.theta_a = wrap_angle(std::atan2(nodes_[a].y, nodes_[a].x));
            double tb = wrap_angle(std::atan2(nodes_[b].y, nodes_[b].x));
            double d = wrap_angle(tb - be.theta_a);
            if (d > kPi) throw std::runtime_error("Surface: clockwise boundary edge");
            be.theta_b = be.theta_a + d;
            if (elem_bedge_[e] >= 0) throw std::runtime_error("Surface: element with two boundary edges");
            elem_bedge_[e] = static_cast<int>(bedges_.size());
            bedges_.push_back(be);
        }
    }
    std::vector<int> order(bedges_.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(),
              [&](int i, int j) { return bedges_[i].theta_a < bedges_[j].theta_a; });
    std::vector<BoundaryEdge> sorted;
    for (int i : order) sorted.push_back(bedges_[i]);
    bedges_ = std::move(sorted);
    elem_bedge_.assign(ne, -1);
    for (size_t i = 0; i < bedges_.size(); ++i) elem_bedge_[bedges_[i].elem] = static_cast<int>(i);

    // Quadrature: conical product rule on triangles, polar rule on segments.
    const int nu = (quad_order_ + 3) / 2;
    const int nv = (quad_order_ + 2) / 2;
    std::vector<double> ux, uw, vx, vw;
    gauss_legendre(nu, ux, uw);
    gauss_legendre(nv, vx, vw);
    const double R = radius_;

    qps_.clear();
    qp_offset_.assign(ne + 1, 0);
    for (int e = 0; e < ne; ++e) {
        qp_offset_[e] = static_cast<int>(qps_.size());
        const auto& t = elems_[e];
        const Point& p0 = nodes_[t[0]];
        const Point& p1 = nodes_[t[1]];
        const Point& p2 = nodes_[t[2]];
        for (int i = 0; i < nu; ++i) {
            for (int j = 0; j < nv; ++j) {
                double l1 = ux[i];
                double l2 = (1.0 - ux[i]) * vx[j];
                QuadPoint q;
                q.bary = {1.0 - l1 - l2, l1, l2};
                q.x = p0 * q.bary[0] + p1 * q.bary[1] + p2 * q.bary[2];
                q.w = 2.0 * tri_area_[e] * uw[i] * vw[j] * (1.0 - ux[i]);
                q.elem = e;
                qps_.push_back(q);
            }
        }
        measure_[e] = tri_area_[e];
        if (elem_bedge_[e] >= 0) {
            const auto& be = bedges_[elem_bedge_[e]];
            double dth = be.theta_b - be.theta_a;
            double alpha = 0.5 * dth;
            double thm = be.theta_a + alpha;
            measure_[e] += 0.5 * R * R * (dth - std::sin(dth));
            for (int i = 0; i < nu; ++i) {
                double th = be.theta_a + dth * ux[i];
                double rho = R * std::cos(alpha) / std::cos(th - thm);
                for (int j = 0; j < nu; ++j) {
                    double r = rho + (R - rho) * ux[j];
                    QuadPoint q;
                    q.x = Point(r * std::cos(th), r * std::sin(th));
                    q.w = uw[i] * dth * uw[j] * (R - rho) * r;
                    q.elem = e;
                    q.bary = toda::barycentric(p0, p1, p2, q.x);
                    qps_.push_back(q);
                }
            }
        }
    }
    qp_offset_[ne] = static_cast<int>(qps_.size());
}

std::vector<QuadPoint> Surface::refined_rule(int e, int n) const {
    const int nu = (quad_order_ + 3) / 2;
    std::vector<double> ux, uw;
    gauss_legendre(nu, ux, uw);
    const auto& t = elems_[e];
    const Point& p0 = nodes_[t[0]];
    const Point& p1 = nodes_[t[1]];
    const Point& p2 = nodes_[t[2]];
    std::vector<QuadPoint> out;
    auto add = [&](const Point& x, double w) {
        QuadPoint q;
        q.x = x;
        q.w = w;
        q.elem = e;
        q.bary = toda::barycentric(p0, p1, p2, x);
        out.push_back(q);
    };
    auto node = [&](int i, int j) { return p0 + (p1 - p0) * (double(i) / n) + (p2 - p0) * (double(j) / n); };
    const double sub_area = tri_area_[e] / (n * n);
    auto tri = [&](const Point& a, const Point& b, const Point& c) {
        for (int i = 0; i < nu; ++i)
            for (int j = 0; j < nu; ++j) {
                double l1 = ux[i], l2 = (1.0 - ux[i]) * ux[j];
                add(a * (1.0 - l1 - l2) + b * l1 + c * l2, 2.0 * sub_area * uw[i] * uw[j] * (1.0 - ux[i]));
            }
    };
    for (int i = 0; i < n; ++i)
        for (int j = 0; i + j < n; ++j) {
            tri(node(i, j), node(i + 1, j), node(i, j + 1));
            if (i + j < n - 1) tri(node(i + 1, j), node(i + 1, j + 1), node(i, j + 1));
        }
    if (elem_bedge_[e] >= 0) {
        const auto& be = bedges_[elem_bedge_[e]];
        const double R = radius_;
        double dth = be.theta_b - be.theta_a;
        double alpha = 0.5 * dth, thm = be.theta_a + alpha;
        for (int p = 0; p < n; ++p)
            for (int i = 0; i < nu; ++i) {
                double th = be.theta_a + dth * (p + ux[i]) / n;
                double rho = R * std::cos(alpha) / std::cos(th - thm);
                for (int j = 0; j < nu; ++j) {
                    double r = rho + (R - rho) * ux[j];
                    add(Point(r * std::cos(th), r * std::sin(th)), uw[i] * dth / n * uw[j] * (R - rho) * r);
                }
            }
    }
    return out;
}

void Surface::build_locator() {
    const int ne = num_elements();
    nbr_.assign(ne, {-1, -1, -1});
    std::map<std::pair<int, int>, std::pair<int, int>> owner;
    for (int e = 0; e < ne; ++e) {
        for (int k = 0; k < 3; ++k) {
            int a = elems_[e][(k + 1) % 3], b = elems_[e][(k + 2) % 3];
            auto key = std::make_pair(std::min(a, b), std::max(a, b));
            auto it = owner.find(key);
            if (it == owner.end()) {
                owner.emplace(key, std::make_pair(e, k));
            } else {
                nbr_[e][k] = it->second.first;
                nbr_[it->second.first][it->second.second] = e;
            }
        }
    }

    const double R = radius_;
    grid_n_ = 64;
    cell_ = 2.0 * R / grid_n_;
    start_.assign(static_cast<size_t>(grid_n_) * grid_n_, -1);
    std::vector<double> best(start_.size(), 1e300);
    for (int e = 0; e < ne; ++e) {
        const auto& t = elems_[e];
        Point c = (nodes_[t[0]] + nodes_[t[1]] + nodes_[t[2]]) / 3.0;
        int i = std::clamp(static_cast<int>(std::floor((c.x + R) / cell_)), 0, grid_n_ - 1);
        int j = std::clamp(static_cast<int>(std::floor((c.y + R) / cell_)), 0, grid_n_ - 1);
        Point cc(-R + (i + 0.5) * cell_, -R + (j + 0.5) * cell_);
        double d = (c - cc).norm2();
        size_t idx = static_cast<size_t>(i) * grid_n_ + j;
        if (d < best[idx]) {
            best[idx] = d;
            start_[idx] = e;
        }
    }
}

std::optional<Location> Surface::locate(const Point& x) const {
    const double R = radius_;
    if (x.norm() > R * (1.0 + 1e-10)) return std::nullopt;
    int i = std::clamp(static_cast<int>(std::floor((x.x + R) / cell_)), 0, grid_n_ - 1);
    int j = std::clamp(static_cast<int>(std::floor((x.y + R) / cell_)), 0, grid_n_ - 1);
    int e = start_[static_cast<size_t>(i) * grid_n_ + j];
    if (e < 0) e = 0;

    // Straight walk through a convex triangulation.
    const double eps = 1e-13;
    for (int step = 0; step <= num_elements(); ++step) {
        const auto& t = elems_[e];
        auto b = toda::barycentric(nodes_[t[0]], nodes_[t[1]], nodes_[t[2]], x);
        int k = 0;
        if (b[1] < b[k]) k = 1;
        if (b[2] < b[k]) k = 2;
        if (b[k] >= -eps) return Location{e, b};
        int next = nbr_[e][k];
        if (next < 0) break;
        e = next;
    }

    // Outside the polygon: the point lies in a boundary segment.
    if (bedges_.empty()) return std::nullopt;
    double th = wrap_angle(std::atan2(x.y, x.x));
    auto it = std::upper_bound(bedges_.begin(), bedges_.end(), th,
                               [](double v, const BoundaryEdge& be) { return v < be.theta_a; });
    const BoundaryEdge* be = it == bedges_.begin() ? &bedges_.back() : &*(it - 1);
    if (it != bedges_.begin() && th > be->theta_b + 1e-14) be = &bedges_.back();
    const auto& t = elems_[be->elem];
    return Location{be->elem, toda::barycentric(nodes_[t[0]], nodes_[t[1]], nodes_[t[2]], x)};
}

std::array<double, 3> Surface::barycentric(int e, const Point& x) const {
    const auto& t = elems_[e];
    return toda::barycentric(nodes_[t[0]], nodes_[t[1]], nodes_[t[2]], x);
}

double Surface::interpolate(const Eigen::VectorXd& nodal, const Point& x) const {
    auto loc = locate(x);
    if (!loc) throw std::out_of_range("Surface::interpolate: point outside the surface");
    const auto& t = elems_[loc->elem];
    return loc->bary[0] * nodal[t[0]] + loc->bary[1] * nodal[t[1]] + loc->bary[2] * nodal[t[2]];
}

double Surface::element_diameter(int e) const {
    const auto& t = elems_[e];
    double d = 0.0;
    for (int i = 0; i < 3; ++i) d = std::max(d, (nodes_[t[i]] - nodes_[t[(i + 1) % 3]]).norm());
    return d;
}

MeshStats Surface::stats() const {
    MeshStats s;
    s.h_min = 1e300;
    s.min_angle_deg = 180.0;
    for (int e = 0; e < num_elements(); ++e) {
        double d = element_diameter(e);
        s.h_max = std::max(s.h_max, d);
        s.h_min = std::min(s.h_min, d);
        const auto& t = elems_[e];
        for (int i = 0; i < 3; ++i) {
            Point a = nodes_[t[(i + 1) % 3]] - nodes_[t[i]];
            Point b = nodes_[t[(i + 2) % 3]] - nodes_[t[i]];
            double ang = std::atan2(std::abs(a.cross(b)), a.dot(b)) * 180.0 / kPi;
            s.min_angle_deg = std::min(s.min_angle_deg, ang);
        }
    }
    return s;
}

double Surface::local_h(const Point& x, double r) const {
    double h = 0.0;
    for (int e = 0; e < num_elements(); ++e) {
        const auto& t = elems_[e];
        double d = element_diameter(e);
        double dist = 1e300;
        for (int k = 0; k < 3; ++k) dist = std::min(dist, (nodes_[t[k]] - x).norm());
        if (dist <= r + d) h = std::max(h, d);
    }
    return h;
}

double Surface::integrate(const PointFunction& f) const {
    double s = 0.0;
    for (const auto& q : qps_) {
        double v = f(q.x);
        if (!std::isfinite(v)) throw std::domain_error("integrate: non-finite integrand");
        s += q.w * v;
    }
    return s;
}

double Surface::integrate_qp(const std::function<double(const QuadPoint&)>& f) const {
    double s = 0.0;
    for (const auto& q : qps_) {
        double v = f(q);
        if (!std::isfinite(v)) throw std::domain_error("integrate: non-finite integrand");
        s += q.w * v;
    }
    return s;
}

double Surface::boundary_length() const {
    double s = 0.0;
    for (const auto& be : bedges_) s += radius_ * (be.theta_b - be.theta_a);
    return s;
}

Eigen::VectorXd Surface::load(const std::function<double(const QuadPoint&)>& f) const {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(num_nodes());
    for (const auto& q : qps_) {
        double v = q.w * f(q);
        const auto& t = elems_[q.elem];
        b[t[0]] += v * q.bary[0];
        b[t[1]] += v * q.bary[1];
        b[t[2]] += v * q.bary[2];
    }
    return b;
}

void Surface::write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write mesh file " + path);
    out.precision(17);
    out << "nodes " << nodes_.size() << "\n";
    for (size_t i = 0; i < nodes_.size(); ++i)
        out << i << " " << nodes_[i].x << " " << nodes_[i].y << "\n";
    out << "elements " << elems_.size() << "\n";
    for (size_t e = 0; e < elems_.size(); ++e)
        out << e << " " << elems_[e][0] << " " << elems_[e][1] << " " << elems_[e][2] << "\n";
    out << "boundary_edges " << bedges_.size() << "\n";
    for (size_t k = 0; k < bedges_.size(); ++k)
        out << k << " " << bedges_[k].a << " " << bedges_[k].b << "\n";
}

std::shared_ptr<const Surface> Surface::read(const std::string& path, int quad_order) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read mesh file " + path);
    std::string tag;
    size_t n = 0;
    in >> tag >> n;
    if (tag != "nodes") throw std::runtime_error("mesh file: expected node table");
    std::vector<Point> nodes(n);
    for (size_t i = 0; i < n; ++i) {
        size_t idx;
        in >> idx >> nodes[i].x >> nodes[i].y;
    }
    in >> tag >> n;
    if (tag != "elements") throw std::runtime_error("mesh file: expected element table");
    std::vector<std::array<int, 3>> elems(n);
    for (size_t e = 0; e < n; ++e) {
        size_t idx;
        in >> idx >> elems[e][0] >> elems[e][1] >> elems[e][2];
    }
    if (!in) throw std::runtime_error("mesh file: truncated");
    return std::make_shared<const Surface>(std::move(nodes), std::move(elems), quad_order);
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    if (n < 2 || y.size() != n) throw std::invalid_argument("fit_line: need at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < n; ++i) sx += x[i], sy += y[i], sxx += x[i] * x[i], sxy += x[i] * y[i];
    LineFit f;
    f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    f.intercept = (sy - f.slope * sx) / n;
    return f;
}

}  // namespace toda
