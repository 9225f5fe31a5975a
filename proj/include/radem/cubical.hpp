#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "radem/bounds.hpp"
#include "radem/core.hpp"
#include "radem/moments.hpp"

namespace radem {

enum class CubicalModel { Voxel, Plaquette };

inline constexpr int kMaxLatticeDim = 6;

// The d-dimensional n-periodic cube lattice. Top-dimensional cells are
// indexed row-major by their base point; lower cells by (direction set,
// base point).
class CubicalLattice {
public:
    CubicalLattice(int dim, int side) : d_(dim), n_(side) {
        if (dim < 1 || dim > kMaxLatticeDim)
            throw ValidationError("CubicalLattice: dimension must be in [1, 6]");
        if (side < 3) throw ValidationError("CubicalLattice: side must be at least 3");
        tops_ = 1;
        for (int i = 0; i < d_; ++i) tops_ *= std::uint64_t(n_);
    }

    int dim() const { return d_; }
    int side() const { return n_; }
    std::uint64_t top_cells() const { return tops_; }
    // N_delta = C(d, delta) n^d
    double cell_count(int delta) const { return binomial(d_, delta) * double(tops_); }
    std::uint64_t total_cells() const { return tops_ << d_; }

    int top_index(std::span<const int> z) const {
        int idx = 0;
        for (int i = d_ - 1; i >= 0; --i) idx = idx * n_ + z[i];
        return idx;
    }

    std::array<int, kMaxLatticeDim> top_point(int idx) const {
        std::array<int, kMaxLatticeDim> z{};
        for (int i = 0; i < d_; ++i) {
            z[i] = idx % n_;
            idx /= n_;
        }
        return z;
    }

    int wrap(int c) const {
        c %= n_;
        return c < 0 ? c + n_ : c;
    }

    // signed coordinate offset b - a folded into (-n/2, n/2]
    int offset(int a, int b) const {
        int o = wrap(b - a);
        if (o > n_ / 2) o -= n_;
        return o;
    }

private:
    int d_, n_;
    std::uint64_t tops_;
};

// An open cell: base point z and the set of directions it extends along.
struct CellId {
    std::array<int, kMaxLatticeDim> z{};
    std::uint32_t dirs = 0;

    int dim() const { return std::popcount(dirs); }
};

inline std::uint64_t cell_uid(const CubicalLattice& lat, const CellId& c) {
    return (std::uint64_t(c.dirs) * lat.top_cells()) + std::uint64_t(lat.top_index({c.z.data(), std::size_t(lat.dim())}));
}

// The 2^{d - dim} top cells whose closure contains the cell.
inline std::vector<int> incident_top_cells(const CubicalLattice& lat, const CellId& cell) {
    const int d = lat.dim();
    std::vector<int> free_dirs;
    for (int i = 0; i < d; ++i)
        if (!((cell.dirs >> i) & 1u)) free_dirs.push_back(i);
    std::vector<int> out;
    out.reserve(std::size_t(1) << free_dirs.size());
    std::array<int, kMaxLatticeDim> w = cell.z;
    for (std::uint32_t choice = 0; choice < (1u << free_dirs.size()); ++choice) {
        for (std::size_t b = 0; b < free_dirs.size(); ++b)
            w[free_dirs[b]] = lat.wrap(cell.z[free_dirs[b]] - int((choice >> b) & 1u));
        out.push_back(lat.top_index({w.data(), std::size_t(d)}));
    }
    return out;
}

// Sample = one bit per top cell (kept iff the bit is set).
inline bool cell_present(const CubicalLattice& lat, const Configuration& sample,
                         const CellId& cell, CubicalModel model) {
    if (model == CubicalModel::Plaquette) {
        if (cell.dim() < lat.dim()) return true;
        return sample.bit(lat.top_index({cell.z.data(), std::size_t(lat.dim())}));
    }
    for (int t : incident_top_cells(lat, cell))
        if (sample.bit(t)) return true;
    return false;
}

// V_j(delta) = (-1)^{delta-j} C(delta, j), the j-th intrinsic volume of an
// open delta-cube.
inline double open_cube_volume(int delta, int j) {
    if (j > delta) return 0.0;
    return ((delta - j) % 2 ? -1.0 : 1.0) * binomial(delta, j);
}

struct IntrinsicVolumeVector {
    std::vector<double> v; // v[j], j = 0..d
    double operator[](int j) const { return v[j]; }
};

inline IntrinsicVolumeVector intrinsic_volumes(const CubicalLattice& lat,
                                               const Configuration& sample, CubicalModel model) {
    const int d = lat.dim();
    IntrinsicVolumeVector out;
    out.v.assign(d + 1, 0.0);
    CellId cell;
    for (std::uint32_t dirs = 0; dirs < (1u << d); ++dirs) {
        cell.dirs = dirs;
        const int delta = std::popcount(dirs);
        for (std::uint64_t t = 0; t < lat.top_cells(); ++t) {
            cell.z = lat.top_point(int(t));
            if (!cell_present(lat, sample, cell, model)) continue;
            for (int j = 0; j <= delta; ++j) out.v[j] += open_cube_volume(delta, j);
        }
    }
    return out;
}

// P_delta: probability that a delta-cell is present.
inline double cell_presence_probability(const CubicalLattice& lat, CubicalModel model, double p,
                                        int delta) {
    if (model == CubicalModel::Plaquette) return delta == lat.dim() ? p : 1.0;
    return 1.0 - std::pow(1.0 - p, double(std::uint64_t(1) << (lat.dim() - delta)));
}

inline double expected_intrinsic_volume(const CubicalLattice& lat, CubicalModel model, double p,
                                        int j) {
    const int d = lat.dim();
    if (j < 0 || j > d) throw std::out_of_range("expected_intrinsic_volume: bad order");
    if (model == CubicalModel::Plaquette) {
        if (j == d) return p * double(lat.top_cells());
        return ((d - j) % 2 ? -1.0 : 1.0) * binomial(d, j) * (p - 1.0) * double(lat.top_cells());
    }
    double m = 0.0;
    for (int delta = j; delta <= d; ++delta)
        m += lat.cell_count(delta) * cell_presence_probability(lat, model, p, delta) *
             open_cube_volume(delta, j);
    return m;
}

// Number of (a-cell, b-cell) pairs whose minimal common cube is a fixed
// delta-cube.
inline double n_abdelta(int a, int b, int delta) {
    double s = 0.0;
    for (int l = 0; l <= delta; ++l)
        s += ((delta - l) % 2 ? -1.0 : 1.0) * binomial(delta, l) * binomial(l, a) * binomial(l, b) *
             std::pow(2.0, delta + l - a - b);
    return s;
}

// cov(V_i, V_j) of the voxel model equals c(i,j) n^d with the constant
// below; exact for every n >= 3.
inline double voxel_covariance_constant(int d, double p, int i, int j) {
    const double q = 1.0 - p;
    double c = 0.0;
    for (int a = 0; a <= d; ++a)
        for (int b = 0; b <= d; ++b)
            for (int delta = std::max(a, b); delta <= d; ++delta) {
                const double nab = n_abdelta(a, b, delta);
                if (nab == 0.0) continue;
                const double e_ab = double((std::uint64_t(1) << (d - a)) + (std::uint64_t(1) << (d - b)));
                const double e_delta = double(std::uint64_t(1) << (d - delta));
                // q^{e_ab}(q^{-e_delta} - 1), written to stay finite for small q
                const double factor = std::pow(q, e_ab - e_delta) - std::pow(q, e_ab);
                c += open_cube_volume(a, i) * open_cube_volume(b, j) * binomial(d, delta) * nab *
                     factor;
            }
    return c;
}

inline double voxel_covariance(const CubicalLattice& lat, double p, int i, int j) {
    return voxel_covariance_constant(lat.dim(), p, i, j) * double(lat.top_cells());
}

// Unsigned product form C(d,i) C(d,j) p(1-p) n^d.
inline double plaquette_covariance(const CubicalLattice& lat, double p, int i, int j) {
    return binomial(lat.dim(), i) * binomial(lat.dim(), j) * p * (1.0 - p) *
           double(lat.top_cells());
}

// Definitional value: the only randomness is the top layer, each kept cell
// contributing xi_{D,j} = (-1)^{d-j} C(d,j), so the covariance carries the
// sign (-1)^{i+j}. Agrees with the unsigned form above in absolute value,
// and in sign exactly when i+j is even.
inline double plaquette_oracle_covariance(const CubicalLattice& lat, double p, int i, int j) {
    const int d = lat.dim();
    return open_cube_volume(d, i) * open_cube_volume(d, j) * p * (1.0 - p) *
           double(lat.top_cells());
}

// n^{-d/2}(V_j - E[V_j]). Derivative hooks walk the closure of the flipped
// top cell; the second derivative vanishes unless the two cubes share a
// face, i.e. sit within Chebyshev distance one on the torus.
class NormalizedVolumeFunctional final : public Functional {
public:
    NormalizedVolumeFunctional(CubicalLattice lat, CubicalModel model, double p, int order)
        : lat_(lat), model_(model), j_(order),
          scale_(std::pow(double(lat.top_cells()), -0.5)),
          mean_(expected_intrinsic_volume(lat, model, p, order)) {
        if (order < 0 || order > lat.dim())
            throw std::out_of_range("NormalizedVolumeFunctional: bad order");
    }

    const CubicalLattice& lattice() const { return lat_; }
    CubicalModel model() const { return model_; }
    int order() const { return j_; }
    double scale() const { return scale_; }

    double value(const Configuration& cfg) const override {
        if (model_ == CubicalModel::Plaquette) {
            double kept = 0.0;
            for (std::uint64_t t = 0; t < lat_.top_cells(); ++t) kept += cfg.bit(int(t));
            const double vj = plaquette_constant_part() + open_cube_volume(lat_.dim(), j_) * kept;
            return scale_ * (vj - mean_);
        }
        return scale_ * (intrinsic_volumes(lat_, cfg, model_)[j_] - mean_);
    }

    double plus_minus_gap(const Configuration& cfg, int k) const override {
        if (model_ == CubicalModel::Plaquette) return scale_ * open_cube_volume(lat_.dim(), j_);
        // cells of the closure of cube k that no other kept cube supports
        const int d = lat_.dim();
        const auto z = lat_.top_point(k);
        double gap = 0.0;
        CellId cell;
        for (std::uint32_t dirs = 0; dirs < (1u << d); ++dirs) {
            const int delta = std::popcount(dirs);
            if (j_ > delta) continue;
            const double w = open_cube_volume(delta, j_);
            std::vector<int> free_dirs;
            for (int i = 0; i < d; ++i)
                if (!((dirs >> i) & 1u)) free_dirs.push_back(i);
            cell.dirs = dirs;
            for (std::uint32_t corner = 0; corner < (1u << free_dirs.size()); ++corner) {
                cell.z = z;
                for (std::size_t b = 0; b < free_dirs.size(); ++b)
                    cell.z[free_dirs[b]] = lat_.wrap(z[free_dirs[b]] + int((corner >> b) & 1u));
                bool supported_elsewhere = false;
                for (int t : incident_top_cells(lat_, cell))
                    if (t != k && cfg.bit(t)) {
                        supported_elsewhere = true;
                        break;
                    }
                if (!supported_elsewhere) gap += w;
            }
        }
        return scale_ * gap;
    }

    double plus_minus_gap2(const Configuration& cfg, int k, int l) const override {
        if (model_ == CubicalModel::Plaquette) return 0.0;
        if (!neighbours(k, l)) return 0.0;
        // only cells in both closures react to both bits:
        // four-point difference is -(1 - rest) per such cell
        const int d = lat_.dim();
        const auto z = lat_.top_point(k);
        double acc = 0.0;
        CellId cell;
        for (std::uint32_t dirs = 0; dirs < (1u << d); ++dirs) {
            const int delta = std::popcount(dirs);
            if (j_ > delta) continue;
            const double w = open_cube_volume(delta, j_);
            std::vector<int> free_dirs;
            for (int i = 0; i < d; ++i)
                if (!((dirs >> i) & 1u)) free_dirs.push_back(i);
            cell.dirs = dirs;
            for (std::uint32_t corner = 0; corner < (1u << free_dirs.size()); ++corner) {
                cell.z = z;
                for (std::size_t b = 0; b < free_dirs.size(); ++b)
                    cell.z[free_dirs[b]] = lat_.wrap(z[free_dirs[b]] + int((corner >> b) & 1u));
                bool touches_l = false, rest = false;
                for (int t : incident_top_cells(lat_, cell)) {
                    if (t == l) touches_l = true;
                    if (t != k && t != l && cfg.bit(t)) rest = true;
                }
                if (touches_l && !rest) acc -= w;
            }
        }
        return scale_ * acc;
    }

    std::optional<std::vector<int>> second_derivative_support(int k) const override {
        if (model_ == CubicalModel::Plaquette) return std::vector<int>{};
        return neighbour_cells(k);
    }

    std::optional<std::vector<int>> derivative_dependency(int k) const override {
        if (model_ == CubicalModel::Plaquette) return std::vector<int>{};
        return neighbour_cells(k);
    }

private:
    double plaquette_constant_part() const {
        double c = 0.0;
        for (int delta = j_; delta < lat_.dim(); ++delta)
            c += lat_.cell_count(delta) * open_cube_volume(delta, j_);
        return c;
    }

    bool neighbours(int k, int l) const {
        if (k == l) return false;
        const auto a = lat_.top_point(k), b = lat_.top_point(l);
        for (int i = 0; i < lat_.dim(); ++i)
            if (std::abs(lat_.offset(a[i], b[i])) > 1) return false;
        return true;
    }

    std::vector<int> neighbour_cells(int k) const {
        const int d = lat_.dim();
        const auto z = lat_.top_point(k);
        std::vector<int> out;
        std::array<int, kMaxLatticeDim> w{};
        const int count = int(std::pow(3.0, d));
        for (int code = 0; code < count; ++code) {
            int c = code;
            bool zero = true;
            for (int i = 0; i < d; ++i) {
                const int o = c % 3 - 1;
                c /= 3;
                w[i] = lat_.wrap(z[i] + o);
                if (o != 0) zero = false;
            }
            if (zero) continue;
            const int t = lat_.top_index({w.data(), std::size_t(d)});
            if (t != k) out.push_back(t);
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    CubicalLattice lat_;
    CubicalModel model_;
    int j_;
    double scale_;
    double mean_;
};

// Target covariance of the normalized intrinsic-volume vector. For the
// plaquette model the unsigned product-form matrix and the definitional signed
// one differ for odd i+j; `signed_plaquette` selects the latter.
inline Matrix cubical_sigma(const CubicalLattice& lat, CubicalModel model, double p,
                            bool signed_plaquette = false) {
    const int d = lat.dim();
    Matrix sigma(d + 1, d + 1);
    for (int i = 0; i <= d; ++i)
        for (int j = 0; j <= d; ++j) {
            if (model == CubicalModel::Voxel)
                sigma(i, j) = voxel_covariance_constant(d, p, i, j);
            else if (signed_plaquette)
                sigma(i, j) = open_cube_volume(d, i) * open_cube_volume(d, j) * p * (1.0 - p);
            else
                sigma(i, j) = binomial(d, i) * binomial(d, j) * p * (1.0 - p);
        }
    return sigma;
}

inline GaussianTarget cubical_clt_target(const CubicalLattice& lat, CubicalModel model, double p,
                                         bool signed_plaquette = false) {
    return GaussianTarget(cubical_sigma(lat, model, p, signed_plaquette));
}

// Translation-and-symmetry classes for the torus: one single class, triple
// classes keyed by the canonical pair of offsets of (k,l) from m under the
// hyperoctahedral group.
inline SymmetryClasses cubical_symmetry_classes(const CubicalLattice& lat,
                                                const std::vector<const Functional*>& fs) {
    const int d = lat.dim();
    SymmetryClasses cls;
    cls.singles.push_back({0, double(lat.top_cells()), 0});
    cls.single_ids = 1;

    const int m_rep = 0;
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
        for (std::uint64_t k = 0; k < lat.top_cells(); ++k)
            if (int(k) != m_rep) partners.push_back(int(k));
    } else {
        partner_set.erase(m_rep);
        partners.assign(partner_set.begin(), partner_set.end());
    }

    // hyperoctahedral group: coordinate permutations x sign flips
    std::vector<std::vector<int>> perms;
    std::vector<int> perm(d);
    std::iota(perm.begin(), perm.end(), 0);
    do {
        perms.push_back(perm);
    } while (std::next_permutation(perm.begin(), perm.end()));

    auto offset_of = [&](int cell) {
        const auto z = lat.top_point(cell);
        std::array<int, kMaxLatticeDim> o{};
        for (int i = 0; i < d; ++i) o[i] = lat.offset(0, z[i]);
        return o;
    };
    auto encode = [&](const std::array<int, kMaxLatticeDim>& a,
                      const std::array<int, kMaxLatticeDim>& b, bool with_b) {
        std::uint64_t key = 0;
        for (int i = 0; i < d; ++i) key = key * 5 + std::uint64_t(a[i] + 2);
        if (with_b)
            for (int i = 0; i < d; ++i) key = key * 5 + std::uint64_t(b[i] + 2);
        return key;
    };
    auto canonical = [&](std::array<int, kMaxLatticeDim> ka, std::array<int, kMaxLatticeDim> la,
                         bool pair_only) {
        std::uint64_t best = ~std::uint64_t(0);
        for (const auto& pm : perms)
            for (std::uint32_t flips = 0; flips < (1u << d); ++flips) {
                std::array<int, kMaxLatticeDim> ga{}, gb{};
                for (int i = 0; i < d; ++i) {
                    const int sgn = (flips >> i) & 1u ? -1 : 1;
                    ga[i] = sgn * ka[pm[i]];
                    gb[i] = sgn * la[pm[i]];
                }
                if (pair_only) {
                    // difference vector only, symmetric under negation
                    best = std::min(best, encode(ga, gb, false));
                } else {
                    best = std::min(best, encode(ga, gb, true));
                    best = std::min(best, encode(gb, ga, true));
                }
            }
        return best;
    };

    std::map<std::uint64_t, int> pair_ids;
    std::map<std::uint64_t, std::size_t> cls_of_key;
    for (int k : partners)
        for (int l : partners) {
            const auto ok = offset_of(k), ol = offset_of(l);
            const std::uint64_t tkey = canonical(ok, ol, false);
            auto it = cls_of_key.find(tkey);
            if (it != cls_of_key.end()) {
                cls.triples[it->second].multiplicity += double(lat.top_cells());
                continue;
            }
            // pair key: canonical form of the offset l - k (and its negation)
            std::array<int, kMaxLatticeDim> diff{}, zero{};
            const auto zk = lat.top_point(k), zl = lat.top_point(l);
            for (int i = 0; i < d; ++i) diff[i] = lat.offset(zk[i], zl[i]);
            std::array<int, kMaxLatticeDim> ndiff{};
            for (int i = 0; i < d; ++i) ndiff[i] = -diff[i];
            const std::uint64_t pkey =
                std::min(canonical(diff, zero, true), canonical(ndiff, zero, true));
            int pid;
            if (auto pit = pair_ids.find(pkey); pit != pair_ids.end()) {
                pid = pit->second;
            } else {
                pid = int(pair_ids.size());
                pair_ids.emplace(pkey, pid);
            }
            const int tid = int(cls_of_key.size());
            cls_of_key.emplace(tkey, cls.triples.size());
            cls.triples.push_back({m_rep, k, l, double(lat.top_cells()), pid, tid});
        }
    cls.pair_ids = int(pair_ids.size());
    cls.triple_ids = int(cls_of_key.size());
    return cls;
}

} // namespace radem
