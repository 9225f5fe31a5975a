#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <memory>
#include <set>
#include <thread>
#include <unordered_map>
#include <vector>

#include "radem/core.hpp"
#include "radem/report.hpp"
#include "radem/tables.hpp"

namespace radem {

// A product of powers of discrete derivatives, the integrand of a moment.
// l < 0 means a first-order derivative D_k F; otherwise D_l D_k F.
struct DerivativeFactor {
    const Functional* f = nullptr;
    int k = 0;
    int l = -1;
    int power = 1;
};
using DerivativeProduct = std::vector<DerivativeFactor>;

namespace detail {

inline double eval_factor(const DerivativeFactor& fac, const RademacherSpace& sp,
                          const Configuration& cfg) {
    double v;
    if (fac.l < 0) {
        v = sp.sqrt_pq(fac.k) * fac.f->plus_minus_gap(cfg, fac.k);
    } else if (fac.l == fac.k) {
        v = 0.0;
    } else {
        v = sp.sqrt_pq(fac.k) * sp.sqrt_pq(fac.l) * fac.f->plus_minus_gap2(cfg, fac.k, fac.l);
    }
    double r = v;
    for (int p = 1; p < fac.power; ++p) r *= v;
    return r;
}

inline int thread_budget() {
    if (const char* env = std::getenv("RADEM_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : int(hc);
}

// Runs `count` independent jobs, writing each result into its slot. The
// reduction over slots happens in index order in the caller, so results do
// not depend on the number of workers.
template <typename Fn>
void parallel_for_jobs(std::uint64_t count, Fn&& fn) {
    const int workers = std::min<std::uint64_t>(thread_budget(), count);
    if (workers <= 1) {
        for (std::uint64_t j = 0; j < count; ++j) fn(j);
        return;
    }
    std::atomic<std::uint64_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const std::uint64_t j = next.fetch_add(1);
                if (j >= count) return;
                fn(j);
            }
        });
    for (auto& th : pool) th.join();
}

} // namespace detail

inline constexpr std::uint64_t kMomentChunk = 8192;

// Sample mean and standard error of a derivative product over i.i.d.
// configurations. Chunk c draws from a stream keyed by (seed, stream, c) and
// partial sums merge in chunk order, so the value is reproducible for a
// fixed seed and chunk size no matter how many threads run.
inline MomentEstimate estimate_moment_mc(const RademacherSpace& sp, const DerivativeProduct& prod,
                                         std::uint64_t samples, std::uint64_t seed,
                                         std::uint64_t stream = 0) {
    if (samples < 2) throw ValidationError("estimate_moment_mc: need at least 2 samples");
    // coordinates the integrand reads; nullopt from any factor means all
    std::vector<int> coords;
    bool all = false;
    {
        std::set<int> cs;
        for (const auto& fac : prod) {
            auto add = [&](int k) {
                auto dep = fac.f->derivative_dependency(k);
                if (!dep) {
                    all = true;
                    return;
                }
                cs.insert(dep->begin(), dep->end());
            };
            add(fac.k);
            if (all) break;
            if (fac.l >= 0) add(fac.l);
            if (all) break;
        }
        coords.assign(cs.begin(), cs.end());
    }

    const std::uint64_t chunks = (samples + kMomentChunk - 1) / kMomentChunk;
    std::vector<double> sums(chunks, 0.0), sumsqs(chunks, 0.0);
    detail::parallel_for_jobs(chunks, [&](std::uint64_t c) {
        Rng rng(seed, stream, c);
        Configuration cfg(sp.size());
        const std::uint64_t lo = c * kMomentChunk;
        const std::uint64_t hi = std::min(samples, lo + kMomentChunk);
        double s = 0.0, s2 = 0.0;
        for (std::uint64_t it = lo; it < hi; ++it) {
            if (all)
                sp.sample_into(rng, cfg);
            else
                sp.sample_coords_into(rng, coords, cfg);
            double v = 1.0;
            for (const auto& fac : prod) {
                v *= detail::eval_factor(fac, sp, cfg);
                if (v == 0.0) break;
            }
            s += v;
            s2 += v * v;
        }
        sums[c] = s;
        sumsqs[c] = s2;
    });
    double sum = 0.0, sumsq = 0.0;
    for (std::uint64_t c = 0; c < chunks; ++c) {
        sum += sums[c];
        sumsq += sumsqs[c];
    }
    MomentEstimate m;
    m.samples = samples;
    m.value = sum / double(samples);
    const double var = std::max(0.0, sumsq / double(samples) - m.value * m.value);
    m.std_error = std::sqrt(var / double(samples));
    return m;
}

inline MomentEstimate estimate_moment_exact(const RademacherSpace& sp,
                                            const DerivativeProduct& prod,
                                            int exact_limit = 14) {
    if (sp.size() > exact_limit)
        throw CapacityError("estimate_moment_exact: space too large, use the sampling backend");
    std::unordered_map<const Functional*, ValueTable> tables;
    for (const auto& fac : prod)
        if (!tables.count(fac.f)) tables.emplace(fac.f, ValueTable::tabulate(*fac.f, sp));
    double acc = 0.0;
    const std::uint64_t total = std::uint64_t(1) << sp.size();
    for (std::uint64_t msk = 0; msk < total; ++msk) {
        double v = 1.0;
        for (const auto& fac : prod) {
            const ValueTable& t = tables.at(fac.f);
            double d = fac.l < 0 ? t.first_derivative(sp, msk, fac.k)
                                 : t.second_derivative(sp, msk, fac.k, fac.l);
            double r = d;
            for (int p = 1; p < fac.power; ++p) r *= d;
            v *= r;
            if (v == 0.0) break;
        }
        acc += sp.weight_mask(msk) * v;
    }
    return MomentEstimate::exactly(acc);
}

// Classes of coordinates and coordinate triples over which the B-term
// moments are constant. Moment ids tie tuples that share an estimate;
// representatives are evaluated once per id.
struct SymmetryClasses {
    struct Single {
        int k = 0;
        double multiplicity = 1.0;
        int moment_id = 0;
    };
    // (m, k, l): second derivatives taken at (m,k) and (m,l); first
    // derivatives at (k,l). Requires m != k and m != l.
    struct Triple {
        int m = 0, k = 0, l = 0;
        double multiplicity = 1.0;
        int pair_id = 0;   // for E[(D_k F)^2 (D_l F)^2]
        int triple_id = 0; // for E[(D_m D_k F)^2 (D_m D_l F)^2]
    };

    std::vector<Single> singles;
    std::vector<Triple> triples;
    int single_ids = 0, pair_ids = 0, triple_ids = 0;

    // One class per tuple: no reduction, valid for any model. Triples are
    // restricted by the functionals' sparsity oracles.
    static SymmetryClasses full_enumeration(const RademacherSpace& sp,
                                            const std::vector<const Functional*>& fs,
                                            double tuple_budget = 5e7) {
        const int n = sp.size();
        SymmetryClasses cls;
        cls.singles.reserve(n);
        for (int k = 0; k < n; ++k) cls.singles.push_back({k, 1.0, k});
        cls.single_ids = n;
        // union of admitted partners over the vector
        std::vector<std::vector<int>> partners(n);
        bool any_oracle_missing = false;
        for (int m = 0; m < n; ++m) {
            std::set<int> s;
            for (const Functional* f : fs) {
                auto sup = f->second_derivative_support(m);
                if (!sup) {
                    any_oracle_missing = true;
                    for (int k = 0; k < n; ++k)
                        if (k != m) s.insert(k);
                    break;
                }
                for (int k : *sup)
                    if (k != m) s.insert(k);
            }
            partners[m].assign(s.begin(), s.end());
        }
        double count = 0.0;
        for (int m = 0; m < n; ++m) count += double(partners[m].size()) * double(partners[m].size());
        if (count > tuple_budget)
            throw CapacityError(
                any_oracle_missing
                    ? "b_terms: no sparsity oracle and the triple count exceeds the budget"
                    : "b_terms: admitted triple count exceeds the budget");
        int pair_id = 0, triple_id = 0;
        std::map<std::pair<int, int>, int> pair_ids;
        for (int m = 0; m < n; ++m)
            for (int k : partners[m])
                for (int l : partners[m]) {
                    auto key = std::minmax(k, l);
                    auto it = pair_ids.find(key);
                    int pid;
                    if (it == pair_ids.end()) {
                        pid = pair_id++;
                        pair_ids.emplace(key, pid);
                    } else {
                        pid = it->second;
                    }
                    cls.triples.push_back({m, k, l, 1.0, pid, triple_id++});
                }
        cls.pair_ids = pair_id;
        cls.triple_ids = triple_id;
        return cls;
    }
};

// Supplies the four moment shapes the B terms need, caching by class id so
// symmetry reduction pays off. Implementations must be safe to call
// sequentially; the exact backend is pure, the sampling backend derives a
// private stream per (functional, kind, id).
class MomentBackend {
public:
    virtual ~MomentBackend() = default;
    // E[(D_k F_i)^2]
    virtual MomentEstimate single_sq(int i, int k, int id) = 0;
    // E[(D_k F_i)^4]
    virtual MomentEstimate single_4th(int i, int k, int id) = 0;
    // E[(D_k F_i)^2 (D_l F_i)^2]
    virtual MomentEstimate pair(int i, int k, int l, int id) = 0;
    // E[(D_m D_k F_j)^2 (D_m D_l F_j)^2]
    virtual MomentEstimate triple(int j, int m, int k, int l, int id) = 0;
    virtual bool exact() const = 0;
    virtual std::uint64_t samples() const { return 0; }
};

class ExactMomentBackend final : public MomentBackend {
public:
    ExactMomentBackend(const std::vector<const Functional*>& fs, const RademacherSpace& sp,
                       int exact_limit = 14)
        : sp_(&sp) {
        if (sp.size() > exact_limit)
            throw CapacityError("ExactMomentBackend: space exceeds the exact-enumeration limit");
        for (const Functional* f : fs) {
            tabs_.push_back(ValueTable::tabulate(*f, sp));
            derivs_.emplace_back(tabs_.back(), sp);
        }
    }

    MomentEstimate single_sq(int i, int k, int id) override {
        return cached(key(0, i, id), [&](std::uint64_t m) {
            const double d = derivs_[i].first(k, m);
            return d * d;
        });
    }
    MomentEstimate single_4th(int i, int k, int id) override {
        return cached(key(1, i, id), [&](std::uint64_t m) {
            const double d = derivs_[i].first(k, m);
            return d * d * d * d;
        });
    }
    MomentEstimate pair(int i, int k, int l, int id) override {
        return cached(key(2, i, id), [&](std::uint64_t m) {
            const double a = derivs_[i].first(k, m), b = derivs_[i].first(l, m);
            return a * a * b * b;
        });
    }
    MomentEstimate triple(int j, int m, int k, int l, int id) override {
        return cached(key(3, j, id), [&](std::uint64_t msk) {
            const double a = derivs_[j].second(*sp_, k, m, msk);
            const double b = k == l ? a : derivs_[j].second(*sp_, l, m, msk);
            return a * a * b * b;
        });
    }
    bool exact() const override { return true; }

private:
    static std::uint64_t key(int kind, int i, int id) {
        return (std::uint64_t(kind) << 56) | (std::uint64_t(std::uint32_t(i)) << 32) |
               std::uint32_t(id);
    }
    template <typename Fn>
    MomentEstimate cached(std::uint64_t k, Fn&& fn) {
        auto it = cache_.find(k);
        if (it != cache_.end()) return it->second;
        double acc = 0.0;
        const std::uint64_t total = std::uint64_t(1) << sp_->size();
        for (std::uint64_t msk = 0; msk < total; ++msk) acc += sp_->weight_mask(msk) * fn(msk);
        MomentEstimate m = MomentEstimate::exactly(acc);
        cache_.emplace(k, m);
        return m;
    }
    const RademacherSpace* sp_;
    std::vector<ValueTable> tabs_;
    std::vector<DerivativeTables> derivs_;
    std::unordered_map<std::uint64_t, MomentEstimate> cache_;
};

class McMomentBackend final : public MomentBackend {
public:
    McMomentBackend(const std::vector<const Functional*>& fs, const RademacherSpace& sp,
                    std::uint64_t samples, std::uint64_t seed)
        : fs_(fs), sp_(&sp), samples_(samples), seed_(seed) {}

    MomentEstimate single_sq(int i, int k, int id) override {
        return cached(key(0, i, id), {{fs_[i], k, -1, 2}});
    }
    MomentEstimate single_4th(int i, int k, int id) override {
        return cached(key(1, i, id), {{fs_[i], k, -1, 4}});
    }
    MomentEstimate pair(int i, int k, int l, int id) override {
        return cached(key(2, i, id), {{fs_[i], k, -1, 2}, {fs_[i], l, -1, 2}});
    }
    MomentEstimate triple(int j, int m, int k, int l, int id) override {
        return cached(key(3, j, id), {{fs_[j], k, m, 2}, {fs_[j], l, m, 2}});
    }
    bool exact() const override { return false; }
    std::uint64_t samples() const override { return samples_; }

private:
    static std::uint64_t key(int kind, int i, int id) {
        return (std::uint64_t(kind) << 56) | (std::uint64_t(std::uint32_t(i)) << 32) |
               std::uint32_t(id);
    }
    MomentEstimate cached(std::uint64_t k, const DerivativeProduct& prod) {
        auto it = cache_.find(k);
        if (it != cache_.end()) return it->second;
        MomentEstimate m = estimate_moment_mc(*sp_, prod, samples_, seed_, /*stream=*/k);
        cache_.emplace(k, m);
        return m;
    }
    std::vector<const Functional*> fs_;
    const RademacherSpace* sp_;
    std::uint64_t samples_, seed_;
    std::unordered_map<std::uint64_t, MomentEstimate> cache_;
};

} // namespace radem
