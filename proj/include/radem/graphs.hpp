#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "radem/bounds.hpp"
#include "radem/core.hpp"
#include "radem/moments.hpp"

namespace radem {

// Bijection between coordinates and unordered vertex pairs of K_n, in
// colexicographic order: edge {u,v} with u < v gets index v(v-1)/2 + u.
class EdgeIndexer {
public:
    explicit EdgeIndexer(int vertices) : n_(vertices) {
        if (vertices < 2) throw ValidationError("EdgeIndexer: need at least 2 vertices");
    }

    int vertices() const { return n_; }
    int edges() const { return n_ * (n_ - 1) / 2; }

    int index(int u, int v) const {
        if (u == v || u < 0 || v < 0 || u >= n_ || v >= n_)
            throw std::out_of_range("EdgeIndexer: bad vertex pair");
        if (u > v) std::swap(u, v);
        return v * (v - 1) / 2 + u;
    }

    std::pair<int, int> pair(int k) const {
        if (k < 0 || k >= edges()) throw std::out_of_range("EdgeIndexer: bad edge index");
        int v = int((1.0 + std::sqrt(1.0 + 8.0 * double(k))) / 2.0);
        while (v * (v - 1) / 2 > k) --v;
        while ((v + 1) * v / 2 <= k) ++v;
        return {k - v * (v - 1) / 2, v};
    }

    // number of shared endpoints, in {0,1,2}
    int overlap(int k, int l) const {
        auto [a, b] = pair(k);
        auto [c, d] = pair(l);
        return int(a == c) + int(a == d) + int(b == c) + int(b == d);
    }

private:
    int n_;
};

// A fixed pattern graph with its automorphism count.
class GraphSpec {
public:
    GraphSpec(int vertices, std::vector<std::pair<int, int>> edge_list)
        : v_(vertices), edges_(std::move(edge_list)) {
        if (v_ < 1) throw ValidationError("GraphSpec: empty vertex set");
        std::set<std::pair<int, int>> seen;
        adj_.assign(v_, 0u);
        for (auto& [u, w] : edges_) {
            if (u == w) throw ValidationError("GraphSpec: loops are not allowed");
            if (u < 0 || w < 0 || u >= v_ || w >= v_)
                throw ValidationError("GraphSpec: edge endpoint out of range");
            if (u > w) std::swap(u, w);
            if (!seen.insert({u, w}).second) throw ValidationError("GraphSpec: duplicate edge");
            adj_[u] |= 1u << w;
            adj_[w] |= 1u << u;
        }
        if (edges_.empty()) throw ValidationError("GraphSpec: pattern needs at least one edge");
        aut_ = automorphism_count(*this);
    }

    int vertices() const { return v_; }
    int edge_count() const { return int(edges_.size()); }
    const std::vector<std::pair<int, int>>& edges() const { return edges_; }
    long long aut() const { return aut_; }
    bool adjacent(int u, int w) const { return (adj_[u] >> w) & 1u; }
    std::uint32_t neighbors(int u) const { return adj_[u]; }

    // brute force over vertex permutations; patterns are tiny
    static long long automorphism_count(const GraphSpec& g) {
        if (g.vertices() > 8)
            throw CapacityError("automorphism_count: brute force is limited to 8 vertices");
        std::vector<int> perm(g.vertices());
        std::iota(perm.begin(), perm.end(), 0);
        long long count = 0;
        do {
            bool ok = true;
            for (const auto& [u, w] : g.edges())
                if (!g.adjacent(perm[u], perm[w])) {
                    ok = false;
                    break;
                }
            if (ok) ++count;
        } while (std::next_permutation(perm.begin(), perm.end()));
        return count;
    }

private:
    int v_;
    std::vector<std::pair<int, int>> edges_;
    std::vector<std::uint32_t> adj_;
    long long aut_;
};

// text format: first line "v e", then e lines "u w", 0-based
inline GraphSpec parse_pattern(const std::string& text) {
    std::istringstream in(text);
    int v = 0, e = 0;
    if (!(in >> v >> e)) throw ValidationError("parse_pattern: missing header line \"v e\"");
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < e; ++i) {
        int a = 0, b = 0;
        if (!(in >> a >> b)) throw ValidationError("parse_pattern: truncated edge list");
        edges.emplace_back(a, b);
    }
    return GraphSpec(v, std::move(edges));
}

inline GraphSpec builtin_pattern(const std::string& name) {
    if (name == "edge" || name == "k2") return GraphSpec(2, {{0, 1}});
    if (name == "path2" || name == "cherry") return GraphSpec(3, {{0, 1}, {1, 2}});
    if (name == "triangle" || name == "k3") return GraphSpec(3, {{0, 1}, {1, 2}, {0, 2}});
    if (name == "square" || name == "c4") return GraphSpec(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}});
    if (name == "k4")
        return GraphSpec(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
    throw ValidationError("unknown pattern \"" + name + "\" (try edge, path2, triangle, square, k4)");
}

// An Erdos-Renyi sample: edge bits plus adjacency bitset rows for counting.
class ERSample {
public:
    ERSample(const EdgeIndexer& idx, const Configuration& cfg)
        : n_(idx.vertices()), words_((n_ + 63) / 64), rows_(std::size_t(n_) * words_, 0) {
        if (cfg.size() != idx.edges()) throw ValidationError("ERSample: configuration size mismatch");
        for (int k = 0; k < idx.edges(); ++k)
            if (cfg.bit(k)) {
                auto [u, v] = idx.pair(k);
                set_edge(u, v);
            }
    }

    explicit ERSample(int vertices)
        : n_(vertices), words_((vertices + 63) / 64), rows_(std::size_t(vertices) * words_, 0) {}

    void set_edge(int u, int v) {
        rows_[std::size_t(u) * words_ + (v >> 6)] |= std::uint64_t(1) << (v & 63);
        rows_[std::size_t(v) * words_ + (u >> 6)] |= std::uint64_t(1) << (u & 63);
    }

    int vertices() const { return n_; }
    bool has_edge(int u, int v) const {
        return (rows_[std::size_t(u) * words_ + (v >> 6)] >> (v & 63)) & 1u;
    }
    int degree(int u) const {
        int d = 0;
        for (int w = 0; w < words_; ++w) d += std::popcount(rows_[std::size_t(u) * words_ + w]);
        return d;
    }
    const std::uint64_t* row(int u) const { return rows_.data() + std::size_t(u) * words_; }
    int words() const { return words_; }

private:
    int n_, words_;
    std::vector<std::uint64_t> rows_;
};

namespace detail {

// DFS over ordered injections of the pattern into the sample; candidates at
// each level intersect the adjacency rows of already-placed neighbours.
inline long long count_ordered_embeddings(const ERSample& s, const GraphSpec& g,
                                          const std::vector<int>& order,
                                          std::vector<int>& image, std::vector<std::uint64_t>& used,
                                          std::size_t level) {
    if (level == order.size()) return 1;
    const int pv = order[level];
    const int words = s.words();
    // candidates: intersection of rows of placed neighbours (all unused
    // vertices when the level has none)
    std::vector<std::uint64_t> cand(words, ~std::uint64_t(0));
    for (std::size_t e = 0; e < level; ++e) {
        if (!g.adjacent(pv, order[e])) continue;
        const std::uint64_t* row = s.row(image[order[e]]);
        for (int w = 0; w < words; ++w) cand[w] &= row[w];
    }
    for (int w = 0; w < words; ++w) cand[w] &= ~used[w];
    if (words * 64 > s.vertices()) {
        const int extra = words * 64 - s.vertices();
        cand[words - 1] &= (~std::uint64_t(0)) >> extra;
    }
    long long total = 0;
    for (int w = 0; w < words; ++w) {
        std::uint64_t bits = cand[w];
        while (bits) {
            const int b = std::countr_zero(bits);
            bits &= bits - 1;
            const int vertex = w * 64 + b;
            image[pv] = vertex;
            used[w] |= std::uint64_t(1) << b;
            total += count_ordered_embeddings(s, g, order, image, used, level + 1);
            used[w] &= ~(std::uint64_t(1) << b);
        }
    }
    image[pv] = -1;
    return total;
}

inline std::vector<int> embedding_order(const GraphSpec& g) {
    const int v = g.vertices();
    std::vector<int> order;
    std::vector<bool> placed(v, false);
    for (int step = 0; step < v; ++step) {
        int best = -1, best_score = -1;
        for (int u = 0; u < v; ++u) {
            if (placed[u]) continue;
            int score = 0;
            for (int w = 0; w < v; ++w)
                if (placed[w] && g.adjacent(u, w)) ++score;
            score = score * 16 + std::popcount(g.neighbors(u));
            if (score > best_score) {
                best_score = score;
                best = u;
            }
        }
        order.push_back(best);
        placed[best] = true;
    }
    return order;
}

} // namespace detail

inline long long automorphism_count(const GraphSpec& g) { return g.aut(); }

// Number of copies of the pattern present in the sample (subgraphs, not
// induced): ordered injections divided by the automorphism count.
inline long long subgraph_count(const ERSample& sample, const GraphSpec& pattern) {
    if (pattern.vertices() > sample.vertices()) return 0;
    std::vector<int> order = detail::embedding_order(pattern);
    std::vector<int> image(pattern.vertices(), -1);
    std::vector<std::uint64_t> used(sample.words(), 0);
    const long long ordered =
        detail::count_ordered_embeddings(sample, pattern, order, image, used, 0);
    return ordered / pattern.aut();
}

inline double expected_subgraph_count(int n, double p, const GraphSpec& pattern) {
    return binomial(n, pattern.vertices()) * factorial(pattern.vertices()) /
           double(pattern.aut()) * std::pow(p, pattern.edge_count());
}

// Leading term of cov(X_Gamma, X_Phi): copies sharing exactly one edge.
// Relative error O(1/n); the exact finite-n value is subgraph_covariance.
inline double covariance_leading(const GraphSpec& gamma, const GraphSpec& phi, int n, double p) {
    return 2.0 * std::pow(double(n), gamma.vertices() + phi.vertices() - 2) /
           double(gamma.aut() * phi.aut()) * double(gamma.edge_count() * phi.edge_count()) *
           std::pow(p, gamma.edge_count() + phi.edge_count() - 1) * (1.0 - p);
}

namespace detail {

inline bool graphs_isomorphic(const GraphSpec& a, const GraphSpec& b) {
    if (a.vertices() != b.vertices() || a.edge_count() != b.edge_count()) return false;
    std::vector<int> perm(a.vertices());
    std::iota(perm.begin(), perm.end(), 0);
    do {
        bool ok = true;
        for (const auto& [u, w] : a.edges())
            if (!b.adjacent(perm[u], perm[w])) {
                ok = false;
                break;
            }
        if (ok) return true;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return false;
}

// injective vertex maps of `small` into `big` sending edges to edges
inline long long count_embeddings_into(const GraphSpec& small, const GraphSpec& big) {
    std::vector<int> image(small.vertices(), -1);
    std::vector<bool> used(big.vertices(), false);
    std::function<long long(int)> rec = [&](int level) -> long long {
        if (level == small.vertices()) return 1;
        long long total = 0;
        for (int cand = 0; cand < big.vertices(); ++cand) {
            if (used[cand]) continue;
            bool ok = true;
            for (int prev = 0; prev < level; ++prev)
                if (small.adjacent(level, prev) && !big.adjacent(cand, image[prev])) {
                    ok = false;
                    break;
                }
            if (!ok) continue;
            image[level] = cand;
            used[cand] = true;
            total += rec(level + 1);
            used[cand] = false;
        }
        image[level] = -1;
        return total;
    };
    return rec(0);
}

// nonempty edge subsets of the pattern, up to isomorphism
inline std::vector<GraphSpec> subgraph_types(const GraphSpec& g) {
    if (g.edge_count() > 20)
        throw CapacityError("subgraph_types: pattern has too many edges for subset enumeration");
    std::vector<GraphSpec> types;
    const int e = g.edge_count();
    for (std::uint32_t mask = 1; mask < (1u << e); ++mask) {
        std::map<int, int> relabel;
        std::vector<std::pair<int, int>> edges;
        for (int i = 0; i < e; ++i)
            if (mask & (1u << i)) {
                auto [u, w] = g.edges()[i];
                if (!relabel.count(u)) relabel[u] = int(relabel.size());
                if (!relabel.count(w)) relabel[w] = int(relabel.size());
                edges.emplace_back(relabel[u], relabel[w]);
            }
        GraphSpec cand(int(relabel.size()), std::move(edges));
        bool fresh = true;
        for (const auto& t : types)
            if (graphs_isomorphic(t, cand)) {
                fresh = false;
                break;
            }
        if (fresh) types.push_back(std::move(cand));
    }
    return types;
}

} // namespace detail

// Exact finite-n covariance of two subgraph counts: the full sum over pairs
// of copies sharing edges, organised by the isomorphism type of the shared
// edge set. Each type t contributes
//   (#copies of t) (pq)^{e_t} p^{e_G + e_P - 2 e_t} N_G(t) N_P(t)
// where N_G(t) is the number of copies of Gamma through a fixed copy of t.
inline double subgraph_covariance(const GraphSpec& gamma, const GraphSpec& phi, int n, double p) {
    const double q = 1.0 - p;
    double cov = 0.0;
    for (const GraphSpec& t : detail::subgraph_types(gamma)) {
        const long long emb_phi = detail::count_embeddings_into(t, phi);
        if (emb_phi == 0) continue;
        const long long emb_gamma = detail::count_embeddings_into(t, gamma);
        const double copies_t = binomial(n, t.vertices()) * factorial(t.vertices()) / double(t.aut());
        const double through_gamma = double(emb_gamma) *
                                     falling_factorial(n - t.vertices(),
                                                       gamma.vertices() - t.vertices()) /
                                     double(gamma.aut());
        const double through_phi = double(emb_phi) *
                                   falling_factorial(n - t.vertices(),
                                                     phi.vertices() - t.vertices()) /
                                   double(phi.aut());
        cov += copies_t * std::pow(p * q, t.edge_count()) *
               std::pow(p, gamma.edge_count() + phi.edge_count() - 2 * t.edge_count()) *
               through_gamma * through_phi;
    }
    return cov;
}

// sigma_i of the subgraph CLT; the limiting covariance is rank one.
inline double asymptotic_sigma(const GraphSpec& gamma, double p) {
    return std::sqrt(2.0 * p * (1.0 - p)) * double(gamma.edge_count()) / double(gamma.aut()) *
           std::pow(p, gamma.edge_count() - 1);
}

inline GaussianTarget clt_target_subgraphs(const std::vector<GraphSpec>& patterns, double p) {
    const int d = int(patterns.size());
    Matrix sigma(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            sigma(i, j) = asymptotic_sigma(patterns[i], p) * asymptotic_sigma(patterns[j], p);
    return GaussianTarget(std::move(sigma));
}

// n^{1-v}(X_Gamma - E[X_Gamma]) over the C(n,2)-coordinate space. Derivative
// hooks count copies through the forced edge(s) directly; the second
// derivative vanishes unless the two edges can lie in a common copy, which
// for patterns on fewer than 4 vertices forces a shared endpoint.
class NormalizedSubgraphFunctional final : public Functional {
public:
    NormalizedSubgraphFunctional(GraphSpec pattern, int n, double p)
        : pattern_(std::move(pattern)), idx_(n), n_(n),
          scale_(std::pow(double(n), 1 - pattern_.vertices())),
          mean_(expected_subgraph_count(n, p, pattern_)) {}

    const GraphSpec& pattern() const { return pattern_; }
    const EdgeIndexer& indexer() const { return idx_; }
    double scale() const { return scale_; }

    double value(const Configuration& cfg) const override {
        ERSample s(idx_, cfg);
        return scale_ * (double(subgraph_count(s, pattern_)) - mean_);
    }

    double plus_minus_gap(const Configuration& cfg, int k) const override {
        auto [u, v] = idx_.pair(k);
        return scale_ * double(copies_through(cfg, {{u, v}}, {k}));
    }

    double plus_minus_gap2(const Configuration& cfg, int k, int l) const override {
        auto [u, v] = idx_.pair(k);
        auto [x, y] = idx_.pair(l);
        if (pattern_.vertices() < 4 && idx_.overlap(k, l) == 0) return 0.0;
        return scale_ * double(copies_through(cfg, {{u, v}, {x, y}}, {k, l}));
    }

    std::optional<std::vector<int>> second_derivative_support(int k) const override {
        if (pattern_.vertices() >= 4) return std::nullopt; // disjoint pairs admitted
        return incident_edges(k, /*include_self=*/false);
    }

    std::optional<std::vector<int>> derivative_dependency(int k) const override {
        if (pattern_.vertices() > 3) return std::nullopt;
        if (pattern_.vertices() == 2) return std::vector<int>{};
        return incident_edges(k, /*include_self=*/false);
    }

private:
    std::vector<int> incident_edges(int k, bool include_self) const {
        auto [u, v] = idx_.pair(k);
        std::vector<int> out;
        out.reserve(2 * (n_ - 2) + 1);
        for (int w = 0; w < n_; ++w) {
            if (w != u && w != v) {
                out.push_back(idx_.index(u, w));
                out.push_back(idx_.index(v, w));
            }
        }
        if (include_self) out.push_back(k);
        std::sort(out.begin(), out.end());
        return out;
    }

    // copies of the pattern whose edge set contains all pinned edges, with
    // the pinned coordinates treated as present and everything else read
    // from the configuration
    long long copies_through(const Configuration& cfg, std::vector<std::pair<int, int>> pinned,
                             std::vector<int> pinned_coords) const {
        const int pv = pattern_.vertices();
        std::vector<int> image(pv, -1);
        std::vector<int> where(n_, -1); // sample vertex -> pattern vertex
        long long ordered = 0;

        auto edge_present = [&](int a, int b) {
            const int k = idx_.index(a, b);
            for (int pk : pinned_coords)
                if (pk == k) return true;
            return cfg.bit(k);
        };

        // choose the ordered pattern edges that map onto the pinned sample
        // edges, then extend over the remaining pattern vertices
        std::function<long long(std::size_t)> place_pins = [&](std::size_t pin) -> long long {
            if (pin == pinned.size()) return extend(image, where, edge_present);
            long long total = 0;
            const auto [su, sv] = pinned[pin];
            for (const auto& [a, b] : pattern_.edges()) {
                const int combos[2][2] = {{a, b}, {b, a}};
                for (const auto& c : combos) {
                    const int pa = c[0], pb = c[1];
                    // consistency with earlier pins
                    if ((image[pa] != -1 && image[pa] != su) || (image[pa] == -1 && where[su] != -1))
                        continue;
                    if ((image[pb] != -1 && image[pb] != sv) || (image[pb] == -1 && where[sv] != -1))
                        continue;
                    const bool seta = image[pa] == -1, setb = image[pb] == -1;
                    if (seta) {
                        image[pa] = su;
                        where[su] = pa;
                    }
                    if (setb) {
                        image[pb] = sv;
                        where[sv] = pb;
                    }
                    total += place_pins(pin + 1);
                    if (seta) {
                        image[pa] = -1;
                        where[su] = -1;
                    }
                    if (setb) {
                        image[pb] = -1;
                        where[sv] = -1;
                    }
                }
            }
            return total;
        };
        ordered = place_pins(0);
        return ordered / pattern_.aut();
    }

    template <typename EdgeFn>
    long long extend(std::vector<int>& image, std::vector<int>& where, EdgeFn&& edge_present) const {
        const int pv = pattern_.vertices();
        std::vector<int> todo;
        for (int a = 0; a < pv; ++a)
            if (image[a] == -1) todo.push_back(a);
        // place the most-constrained vertex first at every level
        std::function<long long(std::size_t)> rec = [&](std::size_t lvl) -> long long {
            if (lvl == todo.size()) {
                // all pattern edges among placed vertices must be present
                for (const auto& [a, b] : pattern_.edges())
                    if (!edge_present(image[a], image[b])) return 0;
                return 1;
            }
            // reorder so that a vertex with a placed neighbour comes next
            for (std::size_t t = lvl; t < todo.size(); ++t) {
                bool anchored = false;
                for (int w = 0; w < pv; ++w)
                    if (pattern_.adjacent(todo[t], w) && image[w] != -1) anchored = true;
                if (anchored) {
                    std::swap(todo[lvl], todo[t]);
                    break;
                }
            }
            const int a = todo[lvl];
            long long total = 0;
            for (int cand = 0; cand < n_; ++cand) {
                if (where[cand] != -1) continue;
                bool ok = true;
                for (int w = 0; w < pv; ++w)
                    if (pattern_.adjacent(a, w) && image[w] != -1 && !edge_present(cand, image[w])) {
                        ok = false;
                        break;
                    }
                if (!ok) continue;
                image[a] = cand;
                where[cand] = a;
                total += rec(lvl + 1);
                image[a] = -1;
                where[cand] = -1;
            }
            return total;
        };
        return rec(0);
    }

    GraphSpec pattern_;
    EdgeIndexer idx_;
    int n_;
    double scale_;
    double mean_;
};

// ---- vertex degree counts -------------------------------------------------

inline int degree_count(const ERSample& s, int i) {
    int c = 0;
    for (int u = 0; u < s.vertices(); ++u)
        if (s.degree(u) == i) ++c;
    return c;
}

inline double expected_degree_count(int n, double p, int i) {
    return double(n) * binomial(n - 1, i) * std::pow(p, i) * std::pow(1.0 - p, n - 1 - i);
}

// Exact cov(V_i, V_j) under p = theta/(n-1).
inline double degree_covariance(int n, double theta, int i, int j) {
    if (!(theta > 0.0 && theta < 1.0)) throw ValidationError("degree_covariance: theta in (0,1)");
    const double p = theta / double(n - 1);
    const double evi = expected_degree_count(n, p, i);
    const double evj = expected_degree_count(n, p, j);
    return 1.0 / double(n) * evi * evj *
               ((double(i) - theta) * (double(j) - theta) / (theta * (1.0 - theta / double(n - 1))) -
                1.0) +
           (i == j ? evi : 0.0);
}

// Limiting covariance of the normalized degree vector.
inline Matrix degree_limit_sigma(double theta, const std::vector<int>& degrees) {
    const int d = int(degrees.size());
    Matrix sigma(d, d);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            const int i = degrees[a], j = degrees[b];
            sigma(a, b) = std::pow(theta, i + j) / (factorial(i) * factorial(j)) *
                              std::exp(-2.0 * theta) *
                              ((double(i) - theta) * (double(j) - theta) / theta - 1.0) +
                          (i == j ? std::pow(theta, i) / factorial(i) * std::exp(-theta) : 0.0);
        }
    return sigma;
}

inline GaussianTarget degree_limit_target(double theta, const std::vector<int>& degrees) {
    return GaussianTarget(degree_limit_sigma(theta, degrees));
}

// (V_i - E[V_i])/sqrt(n) over the C(n,2)-coordinate space. Second derivative
// vanishes unless the two edges share exactly one vertex; first and second
// derivatives obey |D_k| <= 2 sqrt(pq)/sqrt(n), |D_k D_l| <= 2pq/sqrt(n).
class NormalizedDegreeFunctional final : public Functional {
public:
    // Poisson-limit covariances decay factorially in the degree, so indices
    // above the cap are refused rather than silently computed.
    static constexpr int kDefaultDegreeCap = 10;

    NormalizedDegreeFunctional(int n, double theta, int degree,
                               int degree_cap = kDefaultDegreeCap)
        : idx_(n), n_(n), degree_(degree), p_(theta / double(n - 1)),
          scale_(1.0 / std::sqrt(double(n))), mean_(expected_degree_count(n, p_, degree)) {
        if (!(theta > 0.0 && theta < 1.0))
            throw ValidationError("NormalizedDegreeFunctional: theta in (0,1)");
        if (degree < 0 || degree > n - 1)
            throw ValidationError("NormalizedDegreeFunctional: degree out of range");
        if (degree > degree_cap)
            throw ValidationError("NormalizedDegreeFunctional: degree exceeds the cap of " +
                                  std::to_string(degree_cap));
    }

    double p() const { return p_; }
    const EdgeIndexer& indexer() const { return idx_; }

    double value(const Configuration& cfg) const override {
        ERSample s(idx_, cfg);
        return scale_ * (double(degree_count(s, degree_)) - mean_);
    }

    double plus_minus_gap(const Configuration& cfg, int k) const override {
        auto [u, v] = idx_.pair(k);
        const int du = degree_without(cfg, u, k, -1);
        const int dv = degree_without(cfg, v, k, -1);
        const double change = double(du + 1 == degree_) - double(du == degree_) +
                              double(dv + 1 == degree_) - double(dv == degree_);
        return scale_ * change;
    }

    double plus_minus_gap2(const Configuration& cfg, int k, int l) const override {
        auto [u, v] = idx_.pair(k);
        auto [x, y] = idx_.pair(l);
        int shared = -1;
        if (u == x || u == y) shared = u;
        if (v == x || v == y) shared = shared == -1 ? v : -2; // -2: same edge
        if (shared < 0) return 0.0;
        const int ds = degree_without(cfg, shared, k, l);
        const double change = double(ds + 2 == degree_) - 2.0 * double(ds + 1 == degree_) +
                              double(ds == degree_);
        return scale_ * change;
    }

    std::optional<std::vector<int>> second_derivative_support(int k) const override {
        return incident_edges(k);
    }

    std::optional<std::vector<int>> derivative_dependency(int k) const override {
        return incident_edges(k);
    }

private:
    std::vector<int> incident_edges(int k) const {
        auto [u, v] = idx_.pair(k);
        std::vector<int> out;
        out.reserve(2 * (n_ - 2));
        for (int w = 0; w < n_; ++w)
            if (w != u && w != v) {
                out.push_back(idx_.index(u, w));
                out.push_back(idx_.index(v, w));
            }
        std::sort(out.begin(), out.end());
        return out;
    }

    int degree_without(const Configuration& cfg, int u, int skip1, int skip2) const {
        int d = 0;
        for (int w = 0; w < n_; ++w) {
            if (w == u) continue;
            const int k = idx_.index(u, w);
            if (k == skip1 || k == skip2) continue;
            d += cfg.bit(k);
        }
        return d;
    }

    EdgeIndexer idx_;
    int n_;
    int degree_;
    double p_;
    double scale_;
    double mean_;
};

// ---- symmetry classes for the K_n edge space -------------------------------

namespace detail {

// canonical key of a tuple of edges under vertex relabelling: the minimum
// first-occurrence pattern over endpoint orderings (and the k/l swap for
// triples, whose moments are symmetric in the last two slots)
inline std::uint64_t edge_tuple_key(std::vector<std::pair<int, int>> tuple, bool swap_last_two) {
    std::uint64_t best = ~std::uint64_t(0);
    const int m = int(tuple.size());
    std::vector<int> flat(2 * m);
    const int variants = 1 << m;
    for (int swap_kl = 0; swap_kl < (swap_last_two ? 2 : 1); ++swap_kl) {
        auto t = tuple;
        if (swap_kl && m >= 3) std::swap(t[m - 2], t[m - 1]);
        for (int orient = 0; orient < variants; ++orient) {
            for (int e = 0; e < m; ++e) {
                flat[2 * e] = (orient >> e) & 1 ? t[e].second : t[e].first;
                flat[2 * e + 1] = (orient >> e) & 1 ? t[e].first : t[e].second;
            }
            std::uint64_t key = 0;
            std::map<int, int> rel;
            for (int i = 0; i < 2 * m; ++i) {
                auto it = rel.find(flat[i]);
                int lab;
                if (it == rel.end()) {
                    lab = int(rel.size());
                    rel.emplace(flat[i], lab);
                } else {
                    lab = it->second;
                }
                key = key * 8 + std::uint64_t(lab);
            }
            best = std::min(best, key);
        }
    }
    return best;
}

} // namespace detail

// Classes for vertex-permutation-invariant functionals over the edge space
// of K_n (subgraph and degree counts): one class of single coordinates, and
// triple classes keyed by the isomorphism type of (e_m; e_k, e_l) with m
// pinned to a representative edge by edge-transitivity.
inline SymmetryClasses er_symmetry_classes(const EdgeIndexer& idx,
                                           const std::vector<const Functional*>& fs,
                                           double tuple_budget = 5e7) {
    SymmetryClasses cls;
    cls.singles.push_back({0, double(idx.edges()), 0});
    cls.single_ids = 1;

    const int m_rep = 0; // edge {0,1}
    std::set<int> partner_set;
    bool all = false;
    for (const Functional* f : fs) {
        auto s = f->second_derivative_support(m_rep);
        if (!s) {
            all = true;
            break;
        }
        partner_set.insert(s->begin(), s->end());
    }
    std::vector<int> partners;
    if (all) {
        for (int k = 0; k < idx.edges(); ++k)
            if (k != m_rep) partners.push_back(k);
    } else {
        partner_set.erase(m_rep);
        partners.assign(partner_set.begin(), partner_set.end());
    }
    if (double(partners.size()) * double(partners.size()) > tuple_budget)
        throw CapacityError("er_symmetry_classes: admitted pair count exceeds the budget");

    const auto em = idx.pair(m_rep);
    std::map<std::uint64_t, int> triple_ids;
    std::map<std::uint64_t, int> pair_ids;
    std::map<std::uint64_t, std::size_t> cls_of_key;
    for (int k : partners)
        for (int l : partners) {
            const auto ek = idx.pair(k), el = idx.pair(l);
            const std::uint64_t tkey = detail::edge_tuple_key(
                {{em.first, em.second}, {ek.first, ek.second}, {el.first, el.second}}, true);
            auto it = cls_of_key.find(tkey);
            if (it != cls_of_key.end()) {
                cls.triples[it->second].multiplicity += double(idx.edges());
                continue;
            }
            const std::uint64_t pkey =
                detail::edge_tuple_key({{ek.first, ek.second}, {el.first, el.second}}, false);
            int pid;
            if (auto pit = pair_ids.find(pkey); pit != pair_ids.end()) {
                pid = pit->second;
            } else {
                pid = int(pair_ids.size());
                pair_ids.emplace(pkey, pid);
            }
            const int tid = int(triple_ids.size());
            triple_ids.emplace(tkey, tid);
            cls_of_key.emplace(tkey, cls.triples.size());
            cls.triples.push_back({m_rep, k, l, double(idx.edges()), pid, tid});
        }
    cls.pair_ids = int(pair_ids.size());
    cls.triple_ids = int(triple_ids.size());
    return cls;
}

} // namespace radem
