#pragma once

#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "radem/bounds.hpp"
#include "radem/chaos.hpp"
#include "radem/cubical.hpp"
#include "radem/graphs.hpp"

namespace radem {

struct ResultRow {
    std::string experiment;
    int n = 0;
    int i = -1, j = -1;
    std::string term;
    double value = 0.0;
    double std_error = 0.0;
    std::uint64_t samples = 0;
    std::uint64_t seed = 0;
    std::int64_t wall_ms = 0;
};

struct ExperimentConfig {
    std::string kind;                  // verify | bound | surrogate | rates
    std::string model = "subgraph";    // subgraph | degree | voxel | plaquette
    std::string n_spec = "16..128";
    std::vector<std::string> patterns = {"edge", "triangle"};
    std::vector<int> degrees = {0, 1, 2};
    int dim = 2;
    double p = 0.5;
    double theta = 0.5;
    std::uint64_t samples = 100000;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string backend = "auto"; // exact | mc | auto
    std::string out;
    std::string input; // rates: prior CSV (defaults to `out`, append style)
};

// ---- config file and ranges -------------------------------------------------

// flat "key = value" lines; [section] headers and #-comments are skipped
inline std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config: expected key = value, got \"" + line + "\"");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

// "lo..hi" doubles geometrically from lo to hi; comma lists and single
// values are taken verbatim
inline std::vector<int> parse_n_range(const std::string& spec) {
    std::vector<int> out;
    const auto dots = spec.find("..");
    if (dots != std::string::npos) {
        const int lo = std::stoi(spec.substr(0, dots));
        const int hi = std::stoi(spec.substr(dots + 2));
        if (lo < 1 || hi < lo) throw ValidationError("bad n range \"" + spec + "\"");
        for (int n = lo; n <= hi; n *= 2) out.push_back(n);
        return out;
    }
    std::istringstream in(spec);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        if (!tok.empty()) out.push_back(std::stoi(tok));
    }
    if (out.empty()) throw ValidationError("empty n range");
    return out;
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string tok;
    while (std::getline(in, tok, ','))
        if (!tok.empty()) out.push_back(tok);
    return out;
}

// ---- bound instances --------------------------------------------------------

// A fully assembled application instance: the functional vector, its
// symmetry classes, the target covariance, the exact finite-n covariance,
// and a sampler of the normalized vector for surrogate runs.
struct BoundInstance {
    std::string name;
    int n = 0;
    std::unique_ptr<RademacherSpace> space;
    std::vector<std::unique_ptr<Functional>> owned;
    std::vector<const Functional*> fs;
    SymmetryClasses classes;
    Matrix sigma;
    Matrix cov;
    VectorSampler sampler;
};

inline BoundInstance make_subgraph_instance(const std::vector<GraphSpec>& patterns, int n,
                                            double p) {
    BoundInstance inst;
    inst.name = "bound-subgraph";
    inst.n = n;
    EdgeIndexer idx(n);
    inst.space = std::make_unique<RademacherSpace>(idx.edges(), p);
    const int d = int(patterns.size());
    for (const auto& g : patterns)
        inst.owned.push_back(std::make_unique<NormalizedSubgraphFunctional>(g, n, p));
    for (const auto& f : inst.owned) inst.fs.push_back(f.get());
    inst.classes = er_symmetry_classes(idx, inst.fs);
    inst.sigma = Matrix(d, d);
    inst.cov = Matrix(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            inst.sigma(i, j) = asymptotic_sigma(patterns[i], p) * asymptotic_sigma(patterns[j], p);
            inst.cov(i, j) =
                std::pow(double(n), 2 - patterns[i].vertices() - patterns[j].vertices()) *
                subgraph_covariance(patterns[i], patterns[j], n, p);
        }
    // the sampler draws a full graph and evaluates every count
    auto pats = std::make_shared<std::vector<GraphSpec>>(patterns);
    auto means = std::make_shared<std::vector<double>>();
    auto scales = std::make_shared<std::vector<double>>();
    for (const auto& g : patterns) {
        means->push_back(expected_subgraph_count(n, p, g));
        scales->push_back(std::pow(double(n), 1 - g.vertices()));
    }
    const RademacherSpace* sp = inst.space.get();
    inst.sampler = [n, sp, pats, means, scales](Rng& rng, std::span<double> out) {
        EdgeIndexer idx2(n);
        Configuration cfg(idx2.edges());
        sp->sample_into(rng, cfg);
        ERSample s(idx2, cfg);
        for (std::size_t i = 0; i < pats->size(); ++i)
            out[i] = (*scales)[i] * (double(subgraph_count(s, (*pats)[i])) - (*means)[i]);
    };
    return inst;
}

inline BoundInstance make_degree_instance(const std::vector<int>& degrees, int n, double theta) {
    BoundInstance inst;
    inst.name = "bound-degree";
    inst.n = n;
    EdgeIndexer idx(n);
    const double p = theta / double(n - 1);
    inst.space = std::make_unique<RademacherSpace>(idx.edges(), p);
    const int d = int(degrees.size());
    for (int deg : degrees)
        inst.owned.push_back(std::make_unique<NormalizedDegreeFunctional>(n, theta, deg));
    for (const auto& f : inst.owned) inst.fs.push_back(f.get());
    inst.classes = er_symmetry_classes(idx, inst.fs);
    inst.sigma = degree_limit_sigma(theta, degrees);
    inst.cov = Matrix(d, d);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
            inst.cov(a, b) = degree_covariance(n, theta, degrees[a], degrees[b]) / double(n);
    auto degs = std::make_shared<std::vector<int>>(degrees);
    auto means = std::make_shared<std::vector<double>>();
    for (int deg : degrees) means->push_back(expected_degree_count(n, p, deg));
    inst.sampler = [n, p, degs, means](Rng& rng, std::span<double> out) {
        // binomial thinning: draw the edge count, then distinct edges
        const int total = n * (n - 1) / 2;
        std::binomial_distribution<int> bin(total, p);
        const int m = bin(rng);
        std::set<int> chosen;
        while (int(chosen.size()) < m) chosen.insert(int(rng() % std::uint64_t(total)));
        std::vector<int> degree_of(n, 0);
        EdgeIndexer idx2(n);
        for (int k : chosen) {
            auto [u, v] = idx2.pair(k);
            ++degree_of[u];
            ++degree_of[v];
        }
        std::vector<int> counts;
        counts.assign(degs->size(), 0);
        for (int u = 0; u < n; ++u)
            for (std::size_t a = 0; a < degs->size(); ++a)
                if (degree_of[u] == (*degs)[a]) ++counts[a];
        for (std::size_t a = 0; a < degs->size(); ++a)
            out[a] = (double(counts[a]) - (*means)[a]) / std::sqrt(double(n));
    };
    return inst;
}

inline BoundInstance make_cubical_instance(CubicalModel model, int dim, int n, double p) {
    BoundInstance inst;
    inst.name = model == CubicalModel::Voxel ? "bound-voxel" : "bound-plaquette";
    inst.n = n;
    CubicalLattice lat(dim, n);
    inst.space = std::make_unique<RademacherSpace>(int(lat.top_cells()), p);
    for (int j = 0; j <= dim; ++j)
        inst.owned.push_back(std::make_unique<NormalizedVolumeFunctional>(lat, model, p, j));
    for (const auto& f : inst.owned) inst.fs.push_back(f.get());
    inst.classes = cubical_symmetry_classes(lat, inst.fs);
    // the plaquette target uses the definitional (signed) covariance so the
    // gap vanishes; the unsigned product-form matrix stays available through
    // cubical_sigma for the unsigned-vs-definitional comparison
    inst.sigma = cubical_sigma(lat, model, p, /*signed_plaquette=*/true);
    const int d1 = dim + 1;
    inst.cov = Matrix(d1, d1);
    for (int i = 0; i <= dim; ++i)
        for (int j = 0; j <= dim; ++j)
            inst.cov(i, j) = model == CubicalModel::Voxel
                                 ? voxel_covariance_constant(dim, p, i, j)
                                 : plaquette_oracle_covariance(lat, p, i, j) / double(lat.top_cells());
    if (model == CubicalModel::Voxel) {
        auto means = std::make_shared<std::vector<double>>();
        for (int j = 0; j <= dim; ++j)
            means->push_back(expected_intrinsic_volume(lat, model, p, j));
        const RademacherSpace* sp = inst.space.get();
        inst.sampler = [lat, model, sp, means](Rng& rng, std::span<double> out) {
            Configuration cfg(int(lat.top_cells()));
            sp->sample_into(rng, cfg);
            IntrinsicVolumeVector v = intrinsic_volumes(lat, cfg, model);
            const double scale = std::pow(double(lat.top_cells()), -0.5);
            for (int j = 0; j <= lat.dim(); ++j) out[j] = scale * (v[j] - (*means)[j]);
        };
    } else {
        // every V_j is an affine function of the kept-cell count
        inst.sampler = [lat, p](Rng& rng, std::span<double> out) {
            std::binomial_distribution<long long> bin((long long)lat.top_cells(), p);
            const double kept = double(bin(rng));
            const double centred = kept - p * double(lat.top_cells());
            const double scale = std::pow(double(lat.top_cells()), -0.5);
            for (int j = 0; j <= lat.dim(); ++j)
                out[j] = scale * open_cube_volume(lat.dim(), j) * centred;
        };
    }
    return inst;
}

// "@path" loads the edge-list text format, anything else is a builtin name
inline GraphSpec load_pattern(const std::string& name) {
    if (!name.empty() && name.front() == '@') {
        std::ifstream in(name.substr(1));
        if (!in) throw ValidationError("cannot read pattern file " + name.substr(1));
        std::stringstream buf;
        buf << in.rdbuf();
        return parse_pattern(buf.str());
    }
    return builtin_pattern(name);
}

inline BoundInstance make_instance(const ExperimentConfig& cfg, int n) {
    if (cfg.model == "subgraph") {
        std::vector<GraphSpec> pats;
        for (const auto& name : cfg.patterns) pats.push_back(load_pattern(name));
        return make_subgraph_instance(pats, n, cfg.p);
    }
    if (cfg.model == "degree") return make_degree_instance(cfg.degrees, n, cfg.theta);
    if (cfg.model == "voxel") return make_cubical_instance(CubicalModel::Voxel, cfg.dim, n, cfg.p);
    if (cfg.model == "plaquette")
        return make_cubical_instance(CubicalModel::Plaquette, cfg.dim, n, cfg.p);
    throw ValidationError("unknown model \"" + cfg.model + "\"");
}

// ---- experiment runners -----------------------------------------------------

namespace detail {

inline std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

} // namespace detail

// The calculus identity suite on random polynomial functionals: residuals of
// the product rule, adjointness, integration by parts, integrated Mehler,
// Poincare slack, chain rule and approximate IBP envelopes, plus one Mehler
// Monte Carlo z-score.
inline std::vector<ResultRow> run_verify(const ExperimentConfig& cfg) {
    const std::int64_t t0 = detail::now_ms();
    std::vector<int> ns = parse_n_range(cfg.n_spec);
    const int n = std::min(12, ns.front());
    Rng rng(cfg.seed, 0x7e57u);
    std::vector<double> probs(n);
    for (int k = 0; k < n; ++k) probs[k] = 0.15 + 0.7 * rng.uniform();
    RademacherSpace sp(probs);

    double product_rule = 0.0, adjoint = 0.0, ibp = 0.0, integrated = 0.0;
    double poincare_min = 1e300, chain_margin = 1e300, approx_margin = 1e300;
    const int trials = 24;
    for (int t = 0; t < trials; ++t) {
        auto f = PolynomialFunctional::random(sp, rng);
        auto g = PolynomialFunctional::random(sp, rng);
        Configuration omega(sp.size());
        for (int r = 0; r < 20; ++r) {
            sp.sample_into(rng, omega);
            const int k = int(rng() % std::uint64_t(n));
            product_rule = std::max(product_rule, verify_product_rule(f, g, sp, omega, k));
        }
        std::vector<ChaosDecomposition> u;
        for (int k = 0; k < n; ++k) u.push_back(walsh_expand(PolynomialFunctional::random(sp, rng, 6), sp));
        adjoint = std::max(adjoint, verify_adjoint(f, u, sp));
        ibp = std::max(ibp, verify_ibp(f, g, sp));
        const int k1 = int(rng() % std::uint64_t(n)), k2 = (k1 + 1) % n;
        integrated = std::max(integrated, verify_integrated_mehler(f, sp, std::vector<int>{k1}));
        integrated = std::max(integrated, verify_integrated_mehler(f, sp, std::vector<int>{k1, k2}));
        poincare_min = std::min(poincare_min, verify_poincare(f, sp));

        const int d = 2;
        std::vector<const Functional*> fv = {&f, &g};
        std::vector<double> a(d);
        for (int i = 0; i < d; ++i) a[i] = 2.0 * rng.uniform() - 1.0;
        CosineFunction cosf(a, rng.uniform());
        sp.sample_into(rng, omega);
        auto cr = verify_chain_rule(fv, cosf, sp, omega, int(rng() % std::uint64_t(n)));
        chain_margin = std::min(chain_margin, cr.bound - cr.remainder);
        auto ai = verify_approx_ibp(fv, cosf, sp, 0);
        approx_margin = std::min(approx_margin, ai.bound - ai.remainder);
    }
    Configuration omega(sp.size(), true);
    auto f = PolynomialFunctional::random(sp, rng, 6);
    MehlerCheck mh = verify_mehler(f, sp, omega, 0.5, cfg.samples, cfg.seed + 1);

    std::vector<ResultRow> rows;
    auto add = [&](const std::string& term, double v, double se = 0.0) {
        rows.push_back({"verify-calculus", n, -1, -1, term, v, se, cfg.samples, cfg.seed,
                        detail::now_ms() - t0});
    };
    add("product_rule_max_residual", product_rule);
    add("adjoint_max_residual", adjoint);
    add("ibp_max_residual", ibp);
    add("integrated_mehler_max_residual", integrated);
    add("poincare_min_slack", poincare_min);
    add("chain_rule_min_margin", chain_margin);
    add("approx_ibp_min_margin", approx_margin);
    add("mehler_mc_z", mh.z, mh.std_error);
    return rows;
}

inline void append_bound_rows(std::vector<ResultRow>& rows, const BoundInstance& inst,
                              const BoundReport& rep, const ExperimentConfig& cfg,
                              std::int64_t t0) {
    const std::int64_t ms = detail::now_ms() - t0;
    for (int i = 0; i < rep.dim; ++i)
        for (int j = 0; j < rep.dim; ++j) {
            auto add = [&](const std::string& term, double v, double se) {
                rows.push_back({inst.name, inst.n, i, j, term, v, se, rep.samples, cfg.seed, ms});
            };
            add("gap", rep.gap(i, j), 0.0);
            add("b1", rep.b1(i, j), rep.b1_err(i, j));
            add("b2", rep.b2(i, j), rep.b2_err(i, j));
            add("b3", rep.b3(i, j), rep.b3_err(i, j));
            add("b4", rep.b4(i, j), rep.b4_err(i, j));
        }
    rows.push_back({inst.name, inst.n, -1, -1, "total", rep.total, rep.total_err, rep.samples,
                    cfg.seed, ms});
}

inline std::vector<ResultRow> run_bound(const ExperimentConfig& cfg) {
    std::vector<ResultRow> rows;
    for (int n : parse_n_range(cfg.n_spec)) {
        const std::int64_t t0 = detail::now_ms();
        BoundInstance inst = make_instance(cfg, n);
        BTermsOptions opt;
        opt.samples = cfg.samples;
        opt.seed = cfg.seed;
        opt.backend = cfg.backend == "exact"  ? BTermsOptions::Backend::Exact
                      : cfg.backend == "mc"   ? BTermsOptions::Backend::Mc
                                              : BTermsOptions::Backend::Auto;
        BoundReport rep = b_terms(inst.fs, *inst.space, inst.classes, inst.sigma, inst.cov, opt);
        append_bound_rows(rows, inst, rep, cfg, t0);
    }
    return rows;
}

inline std::vector<ResultRow> run_surrogate(const ExperimentConfig& cfg) {
    std::vector<ResultRow> rows;
    for (int n : parse_n_range(cfg.n_spec)) {
        const std::int64_t t0 = detail::now_ms();
        BoundInstance inst = make_instance(cfg, n);
        GaussianTarget target(inst.sigma);
        auto family = default_cosine_family(target.dim(), 32);
        SurrogateReport rep = d4_surrogate(inst.sampler, target, family, cfg.samples, cfg.seed);
        const std::int64_t ms = detail::now_ms() - t0;
        const std::string name = "surrogate-" + cfg.model;
        for (std::size_t g = 0; g < rep.rows.size(); ++g)
            rows.push_back({name, n, int(g), -1, "discrepancy", rep.rows[g].discrepancy,
                            rep.rows[g].std_error, cfg.samples, cfg.seed, ms});
        rows.push_back({name, n, -1, -1, "max_discrepancy", rep.max_discrepancy,
                        rep.max_discrepancy_std_error, cfg.samples, cfg.seed, ms});
    }
    return rows;
}

// ---- CSV / JSON -------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
    out << "experiment,n,i,j,term,value,std_error,samples,seed,wall_ms\n";
    for (const auto& r : rows) {
        if (!std::isfinite(r.value) || !std::isfinite(r.std_error))
            throw ValidationError("non-finite value in result row " + r.experiment + "/" + r.term);
        out << r.experiment << ',' << r.n << ',' << r.i << ',' << r.j << ',' << r.term << ','
            << format_double(r.value) << ',' << format_double(r.std_error) << ',' << r.samples
            << ',' << r.seed << ',' << r.wall_ms << '\n';
    }
}

inline void write_csv_file(const std::string& path, const std::vector<ResultRow>& rows) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    write_csv(out, rows);
}

inline std::vector<ResultRow> read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read " + path);
    std::vector<ResultRow> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        std::istringstream ls(line);
        std::string tok;
        ResultRow r;
        std::getline(ls, r.experiment, ',');
        std::getline(ls, tok, ',');
        r.n = std::stoi(tok);
        std::getline(ls, tok, ',');
        r.i = std::stoi(tok);
        std::getline(ls, tok, ',');
        r.j = std::stoi(tok);
        std::getline(ls, r.term, ',');
        std::getline(ls, tok, ',');
        r.value = std::stod(tok);
        std::getline(ls, tok, ',');
        r.std_error = std::stod(tok);
        std::getline(ls, tok, ',');
        r.samples = std::stoull(tok);
        std::getline(ls, tok, ',');
        r.seed = std::stoull(tok);
        std::getline(ls, tok, ',');
        r.wall_ms = std::stoll(tok);
        rows.push_back(std::move(r));
    }
    return rows;
}

// Reads a prior bound CSV and appends per-experiment log-log slope rows of
// the total bound against n. Without --in the CSV at --out is read and
// rewritten with the slope rows appended.
inline std::vector<ResultRow> run_rates(const ExperimentConfig& cfg) {
    const std::string& source = cfg.input.empty() ? cfg.out : cfg.input;
    if (source.empty()) throw ValidationError("rates: need --in or --out pointing at a bound CSV");
    std::vector<ResultRow> rows = read_csv_file(source);
    std::map<std::string, std::vector<std::pair<double, double>>> series;
    for (const auto& r : rows)
        if (r.term == "total") series[r.experiment].emplace_back(double(r.n), r.value);
    if (series.empty()) throw ValidationError("rates: no total rows in " + source);
    std::vector<ResultRow> out = rows;
    for (const auto& [name, pts] : series) {
        RateFit fit = fit_rate(pts);
        out.push_back({name, 0, -1, -1, "slope", fit.slope, 0.0, 0, cfg.seed, 0});
        out.push_back({name, 0, -1, -1, "intercept", fit.intercept, 0.0, 0, cfg.seed, 0});
        out.push_back({name, 0, -1, -1, "r2", fit.r_squared, 0.0, 0, cfg.seed, 0});
    }
    return out;
}

inline std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg) {
    if (cfg.kind == "verify") return run_verify(cfg);
    if (cfg.kind == "bound") return run_bound(cfg);
    if (cfg.kind == "surrogate") return run_surrogate(cfg);
    if (cfg.kind == "rates") return run_rates(cfg);
    throw ValidationError("unknown experiment kind \"" + cfg.kind + "\"");
}

} // namespace radem
