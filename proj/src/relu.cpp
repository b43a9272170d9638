#include "arbcert/relu.hpp"

#include <cmath>

#include "arbcert/errors.hpp"

namespace arbcert {

void ReluLayer::finalize() {
    W.resize(out_dim, in_dim);
    W.setFromTriplets(entries.begin(), entries.end());
    W.makeCompressed();
}

void ReluNet::push(ReluLayer layer) {
    if (!layers_.empty() && layers_.back().out_dim != layer.in_dim) {
        throw DimensionError("layer input width does not match previous output");
    }
    if (layer.bias.size() != layer.out_dim) {
        throw DimensionError("bias length does not match layer width");
    }
    layer.finalize();
    layers_.push_back(std::move(layer));
}

double ReluNet::evaluate(double x, double y) const {
    Eigen::VectorXd h(2);
    h << x, y;
    for (const auto& l : layers_) {
        Eigen::VectorXd z = l.W * h + l.bias;
        if (l.relu) {
            z = z.cwiseMax(0.0);
        }
        h = std::move(z);
    }
    return h.size() == 1 ? h[0] : 0.0;
}

int ReluNet::depth() const {
    int d = 0;
    for (const auto& l : layers_) {
        d += l.relu ? 1 : 0;
    }
    return d;
}

long long ReluNet::param_count() const {
    long long p = 0;
    for (const auto& l : layers_) {
        p += static_cast<long long>(l.W.nonZeros()) + l.bias.size();
    }
    return p;
}

double ReluNet::lipschitz_upper_bound() const {
    double prod = 1.0;
    for (const auto& l : layers_) {
        if (l.W.nonZeros() == 0) {
            return 0.0;
        }
        Eigen::VectorXd v(l.in_dim);
        for (int i = 0; i < l.in_dim; ++i) {
            v[i] = 1.0 + 0.5 * std::sin(0.9 * i + 0.2);
        }
        v.normalize();
        double s2 = 0.0;
        for (int it = 0; it < 200; ++it) {
            Eigen::VectorXd u = l.W.transpose() * (l.W * v);
            const double n = u.norm();
            if (n == 0.0) {
                break;
            }
            s2 = v.dot(u);
            v = u / n;
        }
        prod *= std::sqrt(std::max(0.0, s2));
    }
    return prod;
}

nlohmann::json ReluNet::to_json() const {
    nlohmann::json j;
    j["depth"] = depth();
    j["param_count"] = param_count();
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& l : layers_) {
        nlohmann::json lj;
        lj["in"] = l.in_dim;
        lj["out"] = l.out_dim;
        lj["relu"] = l.relu;
        nlohmann::json w = nlohmann::json::array();
        for (int r = 0; r < l.W.outerSize(); ++r) {
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(l.W, r); it; ++it) {
                w.push_back({it.row(), it.col(), it.value()});
            }
        }
        lj["weights"] = std::move(w);
        lj["bias"] = std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size());
        arr.push_back(std::move(lj));
    }
    j["layers"] = std::move(arr);
    return j;
}

ReluNet ReluNet::from_json(const nlohmann::json& j) {
    ReluNet net;
    for (const auto& lj : j.at("layers")) {
        ReluLayer l;
        l.in_dim = lj.at("in").get<int>();
        l.out_dim = lj.at("out").get<int>();
        l.relu = lj.at("relu").get<bool>();
        for (const auto& e : lj.at("weights")) {
            l.entries.emplace_back(e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<double>());
        }
        const auto b = lj.at("bias").get<std::vector<double>>();
        l.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
        net.push(std::move(l));
    }
    return net;
}

namespace {

// A nonnegative quantity expressed as a linear combination of previous-layer units.
using Combo = std::vector<std::pair<int, double>>;

int ceil_log2(int d) {
    int l = 0;
    while ((1 << l) < d) {
        ++l;
    }
    return l;
}

}  // namespace

CompiledNet compile_to_relu(const CpwlFunction& f, int d_max) {
    const auto stars = f.vertex_stars();
    const auto& tris = f.triangles();
    const auto& verts = f.vertices();
    const int V = f.vertex_count();

    CompiledNet out;
    out.vertices = V;
    out.triangles = f.triangle_count();
    out.max_valence = f.max_valence();

    // Convex stars are what make the min-of-forms identity hold.
    std::vector<std::vector<Eigen::Vector3d>> forms(static_cast<std::size_t>(V));
    for (int v = 0; v < V; ++v) {
        for (int t : stars[v]) {
            int corner = 0;
            while (tris[t][corner] != v) {
                ++corner;
            }
            forms[v].push_back(f.barycentric_form(t, corner));
        }
        for (const auto& form : forms[v]) {
            const double scale = form.head<2>().norm() * 1e-9;
            for (int t : stars[v]) {
                for (int c = 0; c < 3; ++c) {
                    const auto& p = verts[tris[t][c]];
                    if (form[0] * p.x() + form[1] * p.y() + form[2] < -scale * (1.0 + p.norm())) {
                        throw StructureError("vertex star is not convex");
                    }
                }
            }
        }
    }

    std::vector<int> active;
    for (int v = 0; v < V; ++v) {
        if (f.values()[v] != 0.0 && !stars[v].empty()) {
            active.push_back(v);
        }
    }

    int depth = 1;
    for (int v : active) {
        depth = std::max(depth, 1 + ceil_log2(static_cast<int>(stars[v].size())));
    }
    out.depth_within_bound = out.max_valence <= d_max && depth <= 4;

    // Layer 1: truncated barycentric forms.
    ReluLayer first;
    first.in_dim = 2;
    std::vector<std::vector<Combo>> lists(active.size());
    std::vector<double> b1;
    int unit = 0;
    for (std::size_t a = 0; a < active.size(); ++a) {
        for (const auto& form : forms[active[a]]) {
            first.entries.emplace_back(unit, 0, form[0]);
            first.entries.emplace_back(unit, 1, form[1]);
            b1.push_back(form[2]);
            lists[a].push_back({{unit, 1.0}});
            ++unit;
        }
    }
    if (unit == 0) {
        first.entries.emplace_back(0, 0, 0.0);
        b1.push_back(0.0);
        unit = 1;
    }
    first.out_dim = unit;
    first.bias = Eigen::Map<Eigen::VectorXd>(b1.data(), static_cast<Eigen::Index>(b1.size()));
    ReluNet net;
    net.push(std::move(first));

    // Comparator levels: min(p, q) = p - relu(p - q) for p, q >= 0, so relu(p) = p.
    for (int level = 2; level <= depth; ++level) {
        ReluLayer layer;
        layer.in_dim = net.layers().back().out_dim;
        std::vector<double> bias;
        int u = 0;
        auto emit = [&](const Combo& c) {
            for (const auto& [idx, w] : c) {
                layer.entries.emplace_back(u, idx, w);
            }
            bias.push_back(0.0);
            return u++;
        };
        for (auto& list : lists) {
            std::vector<Combo> next;
            std::size_t i = 0;
            for (; i + 1 < list.size(); i += 2) {
                const int keep = emit(list[i]);
                Combo diff = list[i];
                for (const auto& [idx, w] : list[i + 1]) {
                    diff.emplace_back(idx, -w);
                }
                const int gap = emit(diff);
                next.push_back({{keep, 1.0}, {gap, -1.0}});
            }
            if (i < list.size()) {
                next.push_back({{emit(list[i]), 1.0}});
            }
            list = std::move(next);
        }
        if (u == 0) {
            layer.entries.emplace_back(0, 0, 0.0);
            bias.push_back(0.0);
            u = 1;
        }
        layer.out_dim = u;
        layer.bias = Eigen::Map<Eigen::VectorXd>(bias.data(), static_cast<Eigen::Index>(bias.size()));
        net.push(std::move(layer));
    }

    ReluLayer readout;
    readout.in_dim = net.layers().back().out_dim;
    readout.out_dim = 1;
    readout.relu = false;
    for (std::size_t a = 0; a < active.size(); ++a) {
        const double g = f.values()[active[a]];
        for (const auto& [idx, w] : lists[a].front()) {
            readout.entries.emplace_back(0, idx, g * w);
        }
    }
    readout.bias = Eigen::VectorXd::Zero(1);
    net.push(std::move(readout));

    out.net = std::move(net);
    out.c1 = 3.0 * depth;
    out.c2 = 33.0;
    return out;
}

}  // namespace arbcert
