#include "arbcert/smolyak.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>

#include "arbcert/errors.hpp"
#include "arbcert/relu.hpp"

namespace arbcert {

double AnisotropyConfig::slope_K() const {
    return a_K > 0.0 ? a_K : static_cast<double>(std::min(beta_K, beta_tau)) / beta_K;
}

double AnisotropyConfig::slope_tau() const {
    return a_tau > 0.0 ? a_tau : static_cast<double>(std::min(beta_K, beta_tau)) / beta_tau;
}

void AnisotropyConfig::validate() const {
    if (beta_K < 1 || beta_tau < 1) {
        throw InputError("smoothness orders must be at least 1");
    }
    if (level_L < 0) {
        throw InputError("level must be nonnegative");
    }
}

std::vector<LevelPair> build_index_set(const AnisotropyConfig& cfg) {
    cfg.validate();
    const double aK = cfg.slope_K();
    const double aT = cfg.slope_tau();
    const double L = cfg.level_L + 1e-12;
    std::vector<LevelPair> out;
    for (int i = 0; aK * i <= L; ++i) {
        for (int j = 0; aK * i + aT * j <= L; ++j) {
            out.push_back({i, j});
        }
    }
    std::sort(out.begin(), out.end(), [](const LevelPair& a, const LevelPair& b) {
        return a.i + a.j != b.i + b.j ? a.i + a.j < b.i + b.j : a.i < b.i;
    });
    return out;
}

// ---------------------------------------------------------------------------
// CpwlFunction

namespace {

double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
    return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

}  // namespace

CpwlFunction::CpwlFunction(std::vector<Eigen::Vector2d> vertices,
                           std::vector<std::array<int, 3>> triangles, std::vector<double> values)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)), values_(std::move(values)) {
    const int V = vertex_count();
    if (static_cast<int>(values_.size()) != V) {
        throw StructureError("one nodal value per vertex is required");
    }
    if (triangles_.empty()) {
        throw StructureError("mesh has no triangles");
    }
    double scale = 0.0;
    for (const auto& v : vertices_) {
        if (!v.allFinite()) {
            throw StructureError("vertex coordinates must be finite");
        }
        scale = std::max(scale, v.cwiseAbs().maxCoeff());
    }
    std::map<std::pair<int, int>, int> edge_use;
    for (auto& t : triangles_) {
        for (int c = 0; c < 3; ++c) {
            if (t[c] < 0 || t[c] >= V) {
                throw StructureError("triangle references a missing vertex");
            }
        }
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
            throw StructureError("triangle repeats a vertex");
        }
        double area2 = cross(vertices_[t[0]], vertices_[t[1]], vertices_[t[2]]);
        if (std::abs(area2) <= 1e-14 * std::max(1.0, scale * scale)) {
            throw StructureError("degenerate triangle");
        }
        if (area2 < 0.0) {
            std::swap(t[1], t[2]);
        }
        for (int c = 0; c < 3; ++c) {
            const int a = t[c];
            const int b = t[(c + 1) % 3];
            ++edge_use[{std::min(a, b), std::max(a, b)}];
        }
    }
    for (const auto& [e, n] : edge_use) {
        if (n > 2) {
            throw StructureError("edge shared by more than two triangles");
        }
    }
    for (double v : values_) {
        if (!std::isfinite(v)) {
            throw StructureError("nodal values must be finite");
        }
    }
    build_locator();
}

CpwlFunction CpwlFunction::tensor(const std::vector<double>& xs, const std::vector<double>& ys,
                                  const std::function<double(int, int)>& value) {
    const int nx = static_cast<int>(xs.size());
    const int ny = static_cast<int>(ys.size());
    if (nx < 2 || ny < 2) {
        throw StructureError("tensor mesh needs two nodes per axis");
    }
    std::vector<Eigen::Vector2d> verts;
    std::vector<double> vals;
    verts.reserve(static_cast<std::size_t>(nx * ny));
    vals.reserve(static_cast<std::size_t>(nx * ny));
    for (int q = 0; q < ny; ++q) {
        for (int p = 0; p < nx; ++p) {
            verts.emplace_back(xs[p], ys[q]);
            vals.push_back(value(p, q));
        }
    }
    std::vector<std::array<int, 3>> tris;
    tris.reserve(static_cast<std::size_t>(2 * (nx - 1) * (ny - 1)));
    for (int q = 0; q + 1 < ny; ++q) {
        for (int p = 0; p + 1 < nx; ++p) {
            const int v00 = q * nx + p;
            const int v10 = v00 + 1;
            const int v01 = v00 + nx;
            const int v11 = v01 + 1;
            tris.push_back({v00, v10, v11});
            tris.push_back({v00, v11, v01});
        }
    }
    return CpwlFunction(std::move(verts), std::move(tris), std::move(vals));
}

Rect CpwlFunction::bounding_box() const { return box_; }

void CpwlFunction::build_locator() {
    box_ = {vertices_[0].x(), vertices_[0].x(), vertices_[0].y(), vertices_[0].y()};
    for (const auto& v : vertices_) {
        box_.x_lo = std::min(box_.x_lo, v.x());
        box_.x_hi = std::max(box_.x_hi, v.x());
        box_.y_lo = std::min(box_.y_lo, v.y());
        box_.y_hi = std::max(box_.y_hi, v.y());
    }
    const int side = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(triangles_.size()) / 2.0)));
    bx_ = side;
    by_ = side;
    buckets_.assign(static_cast<std::size_t>(bx_ * by_), {});
    const double wx = std::max(box_.x_hi - box_.x_lo, 1e-300);
    const double wy = std::max(box_.y_hi - box_.y_lo, 1e-300);
    auto cell = [](double u, double lo, double w, int n) {
        return std::clamp(static_cast<int>(std::floor((u - lo) / w * n)), 0, n - 1);
    };
    for (int t = 0; t < triangle_count(); ++t) {
        double xl = 1e300, xh = -1e300, yl = 1e300, yh = -1e300;
        for (int c = 0; c < 3; ++c) {
            const auto& v = vertices_[triangles_[t][c]];
            xl = std::min(xl, v.x());
            xh = std::max(xh, v.x());
            yl = std::min(yl, v.y());
            yh = std::max(yh, v.y());
        }
        const double padx = 1e-9 * wx;
        const double pady = 1e-9 * wy;
        const int i0 = cell(xl - padx, box_.x_lo, wx, bx_);
        const int i1 = cell(xh + padx, box_.x_lo, wx, bx_);
        const int j0 = cell(yl - pady, box_.y_lo, wy, by_);
        const int j1 = cell(yh + pady, box_.y_lo, wy, by_);
        for (int j = j0; j <= j1; ++j) {
            for (int i = i0; i <= i1; ++i) {
                buckets_[static_cast<std::size_t>(j * bx_ + i)].push_back(t);
            }
        }
    }
}

std::array<double, 3> CpwlFunction::barycentric(int tri, const Eigen::Vector2d& p) const {
    const auto& t = triangles_[tri];
    const Eigen::Vector2d& a = vertices_[t[0]];
    const Eigen::Vector2d& b = vertices_[t[1]];
    const Eigen::Vector2d& c = vertices_[t[2]];
    const double area = cross(a, b, c);
    const double l0 = cross(p, b, c) / area;
    const double l1 = cross(a, p, c) / area;
    return {l0, l1, 1.0 - l0 - l1};
}

Eigen::Vector3d CpwlFunction::barycentric_form(int tri, int corner) const {
    const auto& t = triangles_[tri];
    const Eigen::Vector2d& a = vertices_[t[corner]];
    const Eigen::Vector2d& b = vertices_[t[(corner + 1) % 3]];
    const Eigen::Vector2d& c = vertices_[t[(corner + 2) % 3]];
    const double area = cross(a, b, c);
    // cross(p, b, c) is affine in p.
    const double ax = (b.y() - c.y()) / area;
    const double ay = (c.x() - b.x()) / area;
    const double a0 = (b.x() * c.y() - b.y() * c.x()) / area;
    return {ax, ay, a0};
}

int CpwlFunction::locate(const Eigen::Vector2d& p) const {
    const double wx = std::max(box_.x_hi - box_.x_lo, 1e-300);
    const double wy = std::max(box_.y_hi - box_.y_lo, 1e-300);
    const int i = std::clamp(static_cast<int>(std::floor((p.x() - box_.x_lo) / wx * bx_)), 0, bx_ - 1);
    const int j = std::clamp(static_cast<int>(std::floor((p.y() - box_.y_lo) / wy * by_)), 0, by_ - 1);
    int best = -1;
    double best_min = -1e-10;
    for (int t : buckets_[static_cast<std::size_t>(j * bx_ + i)]) {
        const auto l = barycentric(t, p);
        const double m = std::min({l[0], l[1], l[2]});
        if (m > best_min) {
            best_min = m;
            best = t;
            if (m >= 0.0) {
                break;
            }
        }
    }
    return best;
}

double CpwlFunction::evaluate(double x, double y) const {
    const Eigen::Vector2d p(x, y);
    const int t = locate(p);
    if (t < 0) {
        throw InputError("evaluation point outside the mesh");
    }
    const auto l = barycentric(t, p);
    const auto& tri = triangles_[t];
    return l[0] * values_[tri[0]] + l[1] * values_[tri[1]] + l[2] * values_[tri[2]];
}

std::vector<std::vector<int>> CpwlFunction::vertex_stars() const {
    std::vector<std::vector<int>> stars(vertices_.size());
    for (int t = 0; t < triangle_count(); ++t) {
        for (int c = 0; c < 3; ++c) {
            stars[triangles_[t][c]].push_back(t);
        }
    }
    return stars;
}

int CpwlFunction::max_valence() const {
    int d = 0;
    for (const auto& s : vertex_stars()) {
        d = std::max(d, static_cast<int>(s.size()));
    }
    return d;
}

double CpwlFunction::lipschitz() const {
    double lip = 0.0;
    for (int t = 0; t < triangle_count(); ++t) {
        Eigen::Vector2d g = Eigen::Vector2d::Zero();
        for (int c = 0; c < 3; ++c) {
            const Eigen::Vector3d f = barycentric_form(t, c);
            g += values_[triangles_[t][c]] * f.head<2>();
        }
        lip = std::max(lip, g.norm());
    }
    return lip;
}

// ---------------------------------------------------------------------------
// Smolyak

namespace {

struct SparseLayout {
    std::vector<LevelPair> index;
    int I = 0;  // finest level per axis
    int J = 0;
    std::vector<int> coeff;  // combination coefficients aligned with `index`
};

SparseLayout layout(const AnisotropyConfig& cfg) {
    SparseLayout s;
    s.index = build_index_set(cfg);
    std::set<std::pair<int, int>> in;
    for (const auto& lp : s.index) {
        in.insert({lp.i, lp.j});
        s.I = std::max(s.I, lp.i);
        s.J = std::max(s.J, lp.j);
    }
    for (const auto& lp : s.index) {
        int c = 0;
        for (int a = 0; a <= 1; ++a) {
            for (int b = 0; b <= 1; ++b) {
                if (in.count({lp.i + a, lp.j + b})) {
                    c += ((a + b) % 2 == 0) ? 1 : -1;
                }
            }
        }
        s.coeff.push_back(c);
    }
    return s;
}

}  // namespace

int sparse_node_count(const AnisotropyConfig& cfg) {
    const SparseLayout s = layout(cfg);
    const int nx = (1 << s.I) + 1;
    const int ny = (1 << s.J) + 1;
    std::vector<char> mark(static_cast<std::size_t>(nx * ny), 0);
    int count = 0;
    for (const auto& lp : s.index) {
        const int sx = 1 << (s.I - lp.i);
        const int sy = 1 << (s.J - lp.j);
        for (int n = 0; n <= (1 << lp.j); ++n) {
            for (int m = 0; m <= (1 << lp.i); ++m) {
                char& c = mark[static_cast<std::size_t>(n * sy * nx + m * sx)];
                if (!c) {
                    c = 1;
                    ++count;
                }
            }
        }
    }
    return count;
}

SmolyakFit smolyak_fit(const Target2D& target, const AnisotropyConfig& cfg, const Rect& domain) {
    if (!(domain.x_hi > domain.x_lo) || !(domain.y_hi > domain.y_lo)) {
        throw InputError("domain must have positive extent");
    }
    const SparseLayout s = layout(cfg);
    const int nx = (1 << s.I) + 1;
    const int ny = (1 << s.J) + 1;
    std::vector<double> xs(static_cast<std::size_t>(nx)), ys(static_cast<std::size_t>(ny));
    for (int p = 0; p < nx; ++p) {
        xs[p] = domain.x_lo + (domain.x_hi - domain.x_lo) * p / (nx - 1);
    }
    for (int q = 0; q < ny; ++q) {
        ys[q] = domain.y_lo + (domain.y_hi - domain.y_lo) * q / (ny - 1);
    }

    SmolyakFit fit;
    fit.index_set = s.index;
    std::vector<double> sample(static_cast<std::size_t>(nx * ny), 0.0);
    std::vector<char> have(static_cast<std::size_t>(nx * ny), 0);
    for (const auto& lp : s.index) {
        const int sx = 1 << (s.I - lp.i);
        const int sy = 1 << (s.J - lp.j);
        for (int n = 0; n <= (1 << lp.j); ++n) {
            for (int m = 0; m <= (1 << lp.i); ++m) {
                const int p = m * sx;
                const int q = n * sy;
                const auto id = static_cast<std::size_t>(q * nx + p);
                if (have[id]) {
                    continue;
                }
                const double v = target(xs[p], ys[q]);
                if (!std::isfinite(v)) {
                    throw InputError("target is not finite at a sparse-grid node");
                }
                sample[id] = v;
                have[id] = 1;
                fit.sparse_nodes.emplace_back(xs[p], ys[q]);
                fit.sparse_values.push_back(v);
            }
        }
    }

    // Bilinear interpolant of component grid (i, j) at fine lattice node (p, q).
    auto component = [&](const LevelPair& lp, int p, int q) {
        const int sx = 1 << (s.I - lp.i);
        const int sy = 1 << (s.J - lp.j);
        int m = p / sx;
        int n = q / sy;
        if (m == (1 << lp.i)) {
            --m;
        }
        if (n == (1 << lp.j)) {
            --n;
        }
        const double fx = static_cast<double>(p - m * sx) / sx;
        const double fy = static_cast<double>(q - n * sy) / sy;
        auto at = [&](int mm, int nn) { return sample[static_cast<std::size_t>(nn * sy * nx + mm * sx)]; };
        return (1 - fx) * (1 - fy) * at(m, n) + fx * (1 - fy) * at(m + 1, n) +
               (1 - fx) * fy * at(m, n + 1) + fx * fy * at(m + 1, n + 1);
    };

    std::vector<double> nodal(static_cast<std::size_t>(nx * ny), 0.0);
    for (int q = 0; q < ny; ++q) {
        for (int p = 0; p < nx; ++p) {
            const auto id = static_cast<std::size_t>(q * nx + p);
            if (have[id]) {
                nodal[id] = sample[id];
                continue;
            }
            double v = 0.0;
            for (std::size_t c = 0; c < s.index.size(); ++c) {
                if (s.coeff[c] != 0) {
                    v += s.coeff[c] * component(s.index[c], p, q);
                }
            }
            nodal[id] = v;
        }
    }
    fit.cpwl = CpwlFunction::tensor(xs, ys, [&](int p, int q) {
        return nodal[static_cast<std::size_t>(q * nx + p)];
    });
    return fit;
}

double weighted_l2_error(const std::function<double(double, double)>& approx,
                         const Target2D& target, const Rect& domain, int n,
                         const std::function<double(double, double)>& weight) {
    if (n < 1) {
        throw InputError("evaluation grid needs at least one interval");
    }
    const double hx = (domain.x_hi - domain.x_lo) / n;
    const double hy = (domain.y_hi - domain.y_lo) / n;
    double wsum = 0.0;
    double acc = 0.0;
    double qsum = 0.0;
    for (int j = 0; j <= n; ++j) {
        const double y = domain.y_lo + j * hy;
        const double qy = (j == 0 || j == n) ? 0.5 : 1.0;
        for (int i = 0; i <= n; ++i) {
            const double x = domain.x_lo + i * hx;
            const double qx = (i == 0 || i == n) ? 0.5 : 1.0;
            const double w = weight ? weight(x, y) : 1.0;
            const double e = approx(x, y) - target(x, y);
            acc += qx * qy * w * e * e;
            qsum += qx * qy;
            wsum += w;
        }
    }
    const double mean_w = wsum / ((n + 1.0) * (n + 1.0));
    return std::sqrt(acc / (qsum * mean_w));
}

PcaHead pca_head(const Eigen::MatrixXd& X, const Eigen::VectorXd& strike_weights, int k) {
    const int T = static_cast<int>(X.rows());
    const int N = static_cast<int>(X.cols());
    if (strike_weights.size() != N) {
        throw DimensionError("one weight per strike is required");
    }
    if (k < 1 || k > std::min(T, N)) {
        throw DimensionError("number of modes out of range");
    }
    if (strike_weights.minCoeff() <= 0.0) {
        throw InputError("strike weights must be positive");
    }
    const Eigen::VectorXd sq = strike_weights.cwiseSqrt();
    const Eigen::MatrixXd Y = X * sq.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Y.transpose() * Y);
    const Eigen::VectorXd ev = es.eigenvalues().reverse();
    const Eigen::MatrixXd E = es.eigenvectors().rowwise().reverse();

    PcaHead h;
    h.eigenvalues = ev;
    h.modes.resize(N, k);
    for (int m = 0; m < k; ++m) {
        Eigen::VectorXd u = E.col(m).cwiseQuotient(sq);
        Eigen::Index arg = 0;
        u.cwiseAbs().maxCoeff(&arg);
        if (u[arg] < 0.0) {
            u = -u;
        }
        h.modes.col(m) = u;
    }
    h.coefficients = X * strike_weights.asDiagonal() * h.modes;
    const Eigen::MatrixXd R = X - h.coefficients * h.modes.transpose();
    h.residual = (R.array().square().rowwise() * strike_weights.transpose().array()).sum();
    return h;
}

std::vector<FrontierRow> error_frontier(const Target2D& target, const std::vector<int>& levels,
                                        const AnisotropyConfig& base, const Rect& domain,
                                        int eval_n,
                                        const std::function<double(double, double)>& weight) {
    if (levels.empty()) {
        throw InputError("frontier needs at least one level");
    }
    for (std::size_t i = 1; i < levels.size(); ++i) {
        if (levels[i] <= levels[i - 1]) {
            throw InputError("frontier levels must be ascending");
        }
    }
    std::vector<FrontierRow> rows;
    double env = std::numeric_limits<double>::infinity();
    for (int L : levels) {
        AnisotropyConfig cfg = base;
        cfg.level_L = L;
        const auto t0 = std::chrono::steady_clock::now();
        const SmolyakFit fit = smolyak_fit(target, cfg, domain);
        const CompiledNet net = compile_to_relu(fit.cpwl);
        const auto t1 = std::chrono::steady_clock::now();
        FrontierRow r;
        r.level = L;
        r.node_count = fit.cpwl.vertex_count();
        r.sparse_nodes = static_cast<int>(fit.sparse_nodes.size());
        r.param_count = net.net.param_count();
        r.error = weighted_l2_error([&](double x, double y) { return fit.cpwl.evaluate(x, y); },
                                    target, domain, eval_n, weight);
        env = std::min(env, r.error);
        r.error_envelope = env;
        r.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
        rows.push_back(r);
    }
    return rows;
}

}  // namespace arbcert
