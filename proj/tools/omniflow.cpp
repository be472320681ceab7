// omniflow command-line front end.
//
// Exit codes: 0 pass, 1 defect found, 2 configuration or input error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <regex>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "omniflow.hpp"

using namespace omniflow;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

enum Exit { kPass = 0, kDefect = 1, kConfig = 2 };

struct Output {
    std::string path;
    bool to_stdout = false;
};

void emit(const json& doc, const Output& out) {
    if (!out.path.empty()) {
        std::ofstream f(out.path);
        if (!f) throw ConfigurationError("cannot write " + out.path);
        f << doc.dump(2) << "\n";
    }
    if (out.to_stdout || out.path.empty()) std::cout << doc.dump(2) << "\n";
}

json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigurationError("cannot open " + path);
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigurationError(path + ": " + e.what());
    }
}

std::ifstream open_input(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigurationError("cannot open " + path);
    return f;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ConfigurationError("cannot write " + path);
    return f;
}

int highest_variable(const std::string& expr) {
    static const std::regex var("q([0-9]+)");
    int d = 0;
    for (std::sregex_iterator it(expr.begin(), expr.end(), var), end; it != end; ++it) d = std::max(d, std::stoi((*it)[1]));
    return d;
}

/// --phi0 accepts a polynomial expression in q1..qd or a JSON file.
Polynomial load_phi0(const std::string& arg, int dim) {
    if (arg.size() > 5 && arg.substr(arg.size() - 5) == ".json") return polynomial_sum_from_json(read_json_file(arg));
    return parse_polynomial(arg, dim > 0 ? dim : std::max(2, highest_variable(arg)));
}

FlowPotential load_flow(const std::string& path) {
    const json j = read_json_file(path);
    return flow_from_json(j.contains("flow") ? j.at("flow") : j);
}

TimePolynomial time_poly(const std::vector<double>& c) { return TimePolynomial(c); }

Box parse_box(const std::vector<double>& v, int dim) {
    if (v.size() == 2) return Box::cube(dim, v[0], v[1]);
    if (static_cast<int>(v.size()) == 2 * dim) {
        Box b{std::vector<double>(dim), std::vector<double>(dim)};
        for (int a = 0; a < dim; ++a) {
            b.lo[a] = v[2 * a];
            b.hi[a] = v[2 * a + 1];
        }
        for (int a = 0; a < dim; ++a)
            if (!(b.lo[a] < b.hi[a])) throw InvalidParameter("box needs lo < hi on every axis");
        return b;
    }
    throw InvalidParameter("--box takes lo,hi or one lo,hi pair per axis");
}

json header(const std::string& command, const json& config, std::uint64_t seed) {
    return {{"command", command}, {"version", kVersion}, {"config", config}, {"seed", seed}};
}

json box_json(const Box& b) { return {{"lo", b.lo}, {"hi", b.hi}}; }

json invariant_json(const InvariantValue& v) { return v ? json(*v) : json("pole"); }

json convexity_json(const ConvexityReport& c) {
    json j = {{"verdict", to_string(c.verdict)},
              {"min_eigenvalue", c.min_eigenvalue},
              {"coefficients_nonnegative", c.coefficients_nonnegative}};
    if (c.witness) j["witness"] = *c.witness;
    return j;
}

// ---------------------------------------------------------------------------
// construct
// ---------------------------------------------------------------------------

struct ConstructOpts {
    std::string family, phi0;
    int dim = 0, k = 2, n = 4;
    std::vector<int> ks;
    std::string ctilde = "3", a = "0", b = "0", c1 = "1", c2 = "0";
    std::vector<double> mu{1.0}, eta{0.0, 1.0}, mu4{0, 0, 1}, mu6{0, 0, 0, 1};
    std::vector<int> powers{2};
    double T = 1.0;
    std::uint64_t seed = 1;
    Output out;
};

int cmd_construct(const ConstructOpts& o) {
    json config = {{"family", o.family}, {"T", o.T}};
    std::vector<std::pair<std::string, HomogeneousPolynomial>> blocks;  // for the convexity report
    std::string stated;
    std::optional<FlowPotential> flow;

    if (o.family == "zeldovich" || o.family == "zeldovich-type") {
        if (o.phi0.empty()) throw InvalidParameter("--phi0 is required for " + o.family);
        const Polynomial phi0 = load_phi0(o.phi0, o.dim);
        config["phi0"] = to_json(phi0);
        if (o.family == "zeldovich") {
            flow = zeldovich_flow(phi0, o.T);
        } else {
            config["mu"] = o.mu;
            config["eta"] = o.eta;
            flow = zeldovich_type_flow(phi0, time_poly(o.mu), time_poly(o.eta), o.T);
        }
        for (const auto& [deg, part] : phi0.parts()) blocks.emplace_back("phi0 degree " + std::to_string(deg), part);
        stated = stated_convexity_window(o.family);
    } else if (o.family == "radial") {
        const int d = o.dim > 0 ? o.dim : 2;
        config["dim"] = d;
        config["powers"] = o.powers;
        std::vector<std::pair<int, TimePolynomial>> p;
        for (int n : o.powers) {
            if (n < 1) throw InvalidParameter("radial powers must be >= 1");
            p.emplace_back(n, TimePolynomial::power(1));
            blocks.emplace_back("|q|^" + std::to_string(2 * n), radial_power(d, n));
        }
        flow = radial_flow(d, TimePolynomial::constant(1.0), std::move(p), o.T);
        stated = stated_convexity_window(o.family);
    } else if (o.family == "p2-even") {
        const Rational a = parse_rational(o.a), b = parse_rational(o.b);
        const std::vector<int> ks = o.ks.empty() ? std::vector<int>{o.k} : o.ks;
        config["k"] = ks;
        config["a"] = to_string(a);
        config["b"] = to_string(b);
        flow = exa2d_flow(ks, a, b, o.T);
        for (int k : ks) blocks.emplace_back("p2_" + std::to_string(2 * k), family_p2_even(k, a, b).poly);
        stated = stated_convexity_window(o.family, ks.front());
    } else if (o.family == "p2-odd") {
        const Rational c1 = parse_rational(o.c1), c2 = parse_rational(o.c2);
        config["k"] = o.k;
        config["c1"] = to_string(c1);
        config["c2"] = to_string(c2);
        const auto fam = family_p2_odd(o.k, c1, c2);
        flow = polynomial_flow(2, {{fam.poly, TimePolynomial::power(1)}}, o.T);
        blocks.emplace_back("p2_" + std::to_string(2 * o.k + 1), fam.poly);
        stated = stated_convexity_window(o.family, o.k);
    } else if (o.family == "pd46") {
        const int d = o.dim > 0 ? o.dim : 3;
        const Rational c = parse_rational(o.ctilde);
        config["dim"] = d;
        config["ctilde"] = to_string(c);
        config["mu4"] = o.mu4;
        config["mu6"] = o.mu6;
        flow = pd46_flow(d, c, o.T, time_poly(o.mu4), time_poly(o.mu6));
        blocks.emplace_back("p4", family_pd4(d, c));
        blocks.emplace_back("p6", family_pd6(d, c));
        stated = stated_convexity_window(o.family);
    } else if (o.family == "p3-2n") {
        const Rational c = parse_rational(o.ctilde);
        config["n_max"] = o.n;
        config["ctilde"] = to_string(c);
        flow = xpoly_flow(c, o.n, o.T);
        for (int n = 2; n <= o.n; ++n) blocks.emplace_back("p3_" + std::to_string(2 * n), family_p3_2n(n, c));
        stated = stated_convexity_window(o.family, o.n);
    } else if (o.family == "control") {
        flow = control_flow(o.T);
        blocks.emplace_back("q1^2 q2^2", HomogeneousPolynomial::monomial({2, 2}, 1));
        blocks.emplace_back("q1^4", HomogeneousPolynomial::monomial({4, 0}, 1));
        stated = "convex potential; Hessians at different times do not commute";
    } else {
        throw InvalidParameter("unknown family '" + o.family +
                               "' (zeldovich, zeldovich-type, radial, p2-even, p2-odd, pd46, p3-2n, control)");
    }

    json conv = json::array();
    bool all_convex = true;
    ConvexityOptions copt;
    copt.seed = o.seed;
    for (const auto& [name, p] : blocks) {
        const auto rep = convexity_range_check(p, copt);
        all_convex = all_convex && rep.verdict != ConvexityVerdict::NotConvex;
        json c = convexity_json(rep);
        c["block"] = name;
        conv.push_back(std::move(c));
    }
    std::cerr << o.family << ": " << stated << "\n";
    for (const auto& c : conv)
        std::cerr << "  " << c["block"].get<std::string>() << ": sampled " << c["verdict"].get<std::string>()
                  << " (min eigenvalue on the unit sphere " << c["min_eigenvalue"].get<double>() << ")\n";

    emit({{"header", header("construct", config, o.seed)},
          {"flow", to_json(*flow)},
          {"convexity", {{"stated", stated}, {"blocks", conv}}}},
         o.out);
    return kPass;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct VerifyOpts {
    std::string flow;
    int points = 256, time_pairs = 16;
    std::vector<double> box, t_range;
    std::uint64_t seed = 20240917;
    std::optional<double> tol;
    VerifyTolerances tols;
    Output out;
};

int cmd_verify(VerifyOpts o) {
    const FlowPotential flow = load_flow(o.flow);
    SamplingSpec spec;
    spec.num_points = o.points;
    spec.num_time_pairs = o.time_pairs;
    spec.seed = o.seed;
    if (!o.box.empty()) spec.box = parse_box(o.box, flow.dim());
    if (!o.t_range.empty()) {
        if (o.t_range.size() != 2) throw InvalidParameter("--t-range takes t0,t1");
        spec.t_lo = o.t_range[0];
        spec.t_hi = o.t_range[1];
    }
    if (o.tol) o.tols.commutation = o.tols.bipotential = o.tols.intermediate = o.tols.eigenframe = *o.tol;
    const auto rep = verify_omnipotential(flow, spec);
    const bool ok = rep.passes(o.tols);
    const json tol_json = {{"commutation", o.tols.commutation},
                           {"bipotential", o.tols.bipotential},
                           {"intermediate", o.tols.intermediate},
                           {"eigenframe", o.tols.eigenframe}};
    const json config = {{"flow", o.flow}, {"points", o.points}, {"time_pairs", o.time_pairs},
                         {"box", box_json(rep.box)}, {"t_range", {rep.t_lo, rep.t_hi}}, {"tolerances", tol_json}};
    emit({{"header", header("verify", config, o.seed)}, {"pass", ok}, {"report", to_json(rep)}}, o.out);
    if (!ok) {
        std::cerr << "omni-potentiality defect: commutation " << rep.commutation_defect << " at "
                  << format_point(rep.worst_commutation.q) << " (t1=" << rep.worst_commutation.t1
                  << ", t2=" << rep.worst_commutation.t2 << "), bipotential " << rep.bipotential_defect
                  << ", intermediate " << rep.intermediate_defect << ", eigenframe drift " << rep.eigenframe_drift;
        if (!rep.shell_crossings.empty()) std::cerr << ", " << rep.shell_crossings.size() << " shell crossings";
        std::cerr << "\n";
    }
    return ok ? kPass : kDefect;
}

// ---------------------------------------------------------------------------
// wkb
// ---------------------------------------------------------------------------

struct WkbOpts {
    std::string phi0;
    std::vector<double> box{-1, 1, -1, 1};
    int branch = 2, order = 1, degree = 28;
    double kappa = 50, eps = 0.05, T = 0.2, a0_slope = 0.0;
    std::vector<double> f{0, 0, 1};
    std::vector<double> sweep;
    bool verify = false;
    int points = 256, time_pairs = 16;
    double tol = 1e-3;
    std::uint64_t seed = 20240917;
    std::string patch_csv, patch_json, flow_out;
    int export_n = 65;
    Output out;
};

int cmd_wkb(const WkbOpts& o) {
    const Polynomial phi0 = load_phi0(o.phi0, 2);
    const Box omega = parse_box(o.box, 2);
    WkbOptions wo;
    wo.degree = o.degree;
    const auto eik = build_eikonal(phi0, omega, o.branch, std::nullopt, wo);
    const double slope = o.a0_slope;
    auto patch = std::make_shared<const RayPatch>(transport_amplitudes(eik, [slope](double s) { return cplx(1.0 + slope * s); }));
    const auto wkb = assemble_wkb_flow(patch, o.kappa, o.eps, time_poly(o.f), o.T, {o.order});

    const json config = {{"phi0", to_json(phi0)}, {"box", o.box},       {"branch", o.branch}, {"kappa", o.kappa},
                         {"eps", o.eps},          {"order", o.order},   {"f", o.f},           {"T", o.T},
                         {"degree", o.degree},    {"a0_seed_slope", o.a0_slope}, {"kappa_sweep", o.sweep},
                         {"verify", o.verify},    {"tolerance", o.tol}};
    json doc = {{"header", header("wkb", config, o.seed)},
                {"patch", to_json(*patch)},
                {"residual", to_json(wkb.residual)},
                {"assembled", {{"T", wkb.T}, {"halvings", wkb.halvings}, {"min_eigenvalue", wkb.min_eigenvalue}}}};
    if (!o.sweep.empty()) {
        json sw = json::array();
        for (int order : {0, 1}) {
            const auto s = kappa_sweep(*patch, o.sweep, order);
            json rs = json::array();
            for (const auto& r : s.residuals) rs.push_back(to_json(r));
            sw.push_back({{"order", order}, {"slope", s.slope}, {"residuals", rs}});
        }
        doc["kappa_sweep"] = sw;
    }
    int code = kPass;
    if (o.verify) {
        SamplingSpec spec;
        spec.box = omega;
        spec.num_points = o.points;
        spec.num_time_pairs = o.time_pairs;
        spec.seed = o.seed;
        const auto rep = verify_omnipotential(wkb.flow, spec);
        const double defect = std::max({rep.commutation_defect, rep.bipotential_defect, rep.intermediate_defect});
        const bool ok = defect <= o.tol && rep.convexity_ok && rep.shell_crossings.empty();
        doc["verification"] = {{"defect", defect}, {"pass", ok}, {"report", to_json(rep)}};
        if (!ok) {
            std::cerr << "WKB flow defect " << defect << " exceeds " << o.tol << "\n";
            code = kDefect;
        }
    }
    if (!o.patch_csv.empty()) {
        auto f = open_output(o.patch_csv);
        write_patch_csv(f, *patch, o.export_n, o.export_n);
    }
    if (!o.patch_json.empty()) open_output(o.patch_json) << patch_to_json(*patch, o.export_n, o.export_n).dump() << "\n";
    if (!o.flow_out.empty())
        open_output(o.flow_out) << json{{"header", header("wkb", config, o.seed)}, {"flow", to_json(wkb.flow)}}.dump()
                                << "\n";
    emit(doc, o.out);
    return code;
}

// ---------------------------------------------------------------------------
// reconstruct
// ---------------------------------------------------------------------------

struct ReconstructOpts {
    std::string flow, lagrangian, eulerian, permutation, divergence_csv, solver = "auction";
    int grid = 16;
    std::vector<double> box{-1, 1};
    std::optional<double> t;
    std::optional<std::uint64_t> shuffle;
    std::uint64_t seed = 1;
    Output out;
};

int cmd_reconstruct(const ReconstructOpts& o) {
    json config = {{"solver", o.solver}};
    PointCloudPair pair;
    if (!o.flow.empty()) {
        if (!o.t) throw InvalidParameter("--t is required with --flow");
        const FlowPotential flow = load_flow(o.flow);
        const Box box = parse_box(o.box, flow.dim());
        config.update({{"flow", o.flow}, {"grid", o.grid}, {"box", box_json(box)}, {"t", *o.t}});
        pair = generate_pair(flow, o.grid, box, *o.t);
    } else {
        if (o.lagrangian.empty() || o.eulerian.empty())
            throw InvalidParameter("give --flow, or --lagrangian and --eulerian point files");
        auto fl = open_input(o.lagrangian);
        auto fe = open_input(o.eulerian);
        pair.lagrangian = read_points_csv(fl);
        pair.eulerian = read_points_csv(fe);
        config.update({{"lagrangian", o.lagrangian}, {"eulerian", o.eulerian}});
        if (!o.permutation.empty()) {
            auto fp = open_input(o.permutation);
            pair.true_permutation = read_permutation(fp);
            config["permutation"] = o.permutation;
        }
        pair.validate();
    }
    if (o.shuffle) {
        pair = shuffle_eulerian(pair, *o.shuffle);
        config["shuffle"] = *o.shuffle;
    }
    SolverOptions so;
    so.method = solver_from_string(o.solver);
    const auto rep = mak_reconstruct(pair, so);
    const auto mono = cyclical_monotonicity_check(pair, rep.assignment.sigma, 10000, o.seed);
    json doc = {{"header", header("reconstruct", config, o.seed)},
                {"report", to_json(rep)},
                {"cyclical_monotonicity", {{"checked", mono.checked}, {"violations", mono.violations}}}};
    if (!o.divergence_csv.empty()) {
        const auto div = displacement_divergence(pair, rep.assignment);
        auto f = open_output(o.divergence_csv);
        write_divergence_csv(f, pair, div);
    }
    emit(doc, o.out);
    const bool ok = (!rep.match_fraction || *rep.match_fraction == 1.0) && mono.violations == 0;
    if (!ok) std::cerr << "reconstruction is not exact: match fraction " << rep.match_fraction.value_or(-1) << "\n";
    return ok ? kPass : kDefect;
}

// ---------------------------------------------------------------------------
// invariants
// ---------------------------------------------------------------------------

struct InvariantsOpts {
    std::string matrix, matrix_file, flow;
    std::vector<double> q, times;
    double tol = 1e-9, drift_tol = 1e-8;
    Output out;
};

SymmetricMatrix parse_matrix(const std::string& text) {
    json rows = json::array();
    std::stringstream ss(text);
    std::string row;
    while (std::getline(ss, row, ';')) {
        std::stringstream rs(row);
        auto pts = read_points_csv(rs);
        if (pts.size() != 1) throw InvalidParameter("matrix rows are ';'-separated lists of numbers");
        rows.push_back(pts[0]);
    }
    return symmetric_matrix_from_json(rows);
}

int cmd_invariants(const InvariantsOpts& o) {
    if (!o.flow.empty()) {
        const FlowPotential flow = load_flow(o.flow);
        if (static_cast<int>(o.q.size()) != flow.dim()) throw DimensionMismatch("--q needs one coordinate per dimension");
        std::vector<double> times = o.times;
        if (times.empty()) {
            const auto r = flow.time_range();
            for (int k = 0; k <= 8; ++k) times.push_back(r[0] + (r[1] - r[0]) * k / 8.0);
        }
        const auto traj = g_invariant_along_trajectory(flow, o.q, times);
        json table = json::array();
        for (std::size_t i = 0; i < traj.times.size(); ++i) {
            json row = {{"t", traj.times[i]}};
            json vals = json::array();
            for (const auto& v : traj.values[i]) vals.push_back(invariant_json(v));
            row["g"] = vals;
            table.push_back(row);
        }
        json mean = json::array();
        for (const auto& m : traj.mean) mean.push_back(m ? json(*m) : json(nullptr));
        const bool ok = traj.drift <= o.drift_tol;
        emit({{"header", header("invariants", {{"flow", o.flow}, {"q", o.q}, {"times", times}, {"drift_tol", o.drift_tol}}, 0)},
              {"trajectory", table},
              {"mean", mean},
              {"drift", traj.drift},
              {"poles", traj.poles},
              {"pass", ok}},
             o.out);
        return ok ? kPass : kDefect;
    }

    SymmetricMatrix h;
    json config = {{"tol", o.tol}};
    if (!o.matrix.empty()) {
        h = parse_matrix(o.matrix);
        config["matrix"] = o.matrix;
    } else if (!o.matrix_file.empty()) {
        h = symmetric_matrix_from_json(read_json_file(o.matrix_file));
        config["matrix_file"] = o.matrix_file;
    } else {
        throw InvalidParameter("give --matrix, --matrix-file or --flow");
    }
    const auto frame = eigenframe(h);
    const auto set = invariant_set(frame);
    json table = json::array();
    for (const auto& [key, v] : set.values) {
        const auto& [k, m, n] = key;
        table.push_back({{"k", k}, {"m", m + 1}, {"n", n + 1}, {"value", invariant_json(v)}});
    }
    json doc = {{"header", header("invariants", config, 0)},
                {"eigenvalues", std::vector<double>(frame.eigenvalues.data(), frame.eigenvalues.data() + frame.dim())},
                {"distinct_eigenvalues", frame.distinct},
                {"invariants", table},
                {"poles", set.has_pole()}};
    if (h.dim() == 3) {
        json closed = json::array();
        for (int w = 1; w <= 3; ++w) closed.push_back(invariant_json(gamma3_closed_form(h, w)));
        doc["gamma3_closed_form"] = closed;
    }
    const auto rel = check_relations(h, o.tol);
    doc["relations"] = to_json(rel);
    emit(doc, o.out);
    return rel.status == RelationStatus::fail ? kDefect : kPass;
}

void add_output(CLI::App* app, Output& out) {
    app->add_option("-o,--out", out.path, "write the JSON report to this file");
    app->add_flag("--stdout", out.to_stdout, "print the JSON report to stdout");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Omni-potential flows: construction, verification, WKB patches and MAK reconstruction"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    ConstructOpts co;
    auto* construct = app.add_subcommand("construct", "build a flow from a named family and write its JSON spec");
    construct->add_option("--family", co.family, "zeldovich | zeldovich-type | radial | p2-even | p2-odd | pd46 | p3-2n | control")
        ->required();
    construct->add_option("--phi0", co.phi0, "initial potential: expression in q1..qd or JSON file");
    construct->add_option("--dim", co.dim, "space dimension");
    construct->add_option("--k", co.k, "family index k");
    construct->add_option("--ks", co.ks, "several k for p2-even (one block t^k p_2k each)")->delimiter(',');
    construct->add_option("--n", co.n, "highest n for p3-2n");
    construct->add_option("--ctilde", co.ctilde, "c~ (exact rational)");
    construct->add_option("--a", co.a, "a of p2-even (exact rational)");
    construct->add_option("--b", co.b, "b of p2-even (exact rational)");
    construct->add_option("--c1", co.c1, "c1 of p2-odd");
    construct->add_option("--c2", co.c2, "c2 of p2-odd");
    construct->add_option("--mu", co.mu, "time coefficients of the |q|^2/2 factor (zeldovich-type)")->delimiter(',');
    construct->add_option("--eta", co.eta, "time coefficients of the phi0 factor (zeldovich-type)")->delimiter(',');
    construct->add_option("--mu4", co.mu4, "time coefficients of the p4 block (pd46)")->delimiter(',');
    construct->add_option("--mu6", co.mu6, "time coefficients of the p6 block (pd46)")->delimiter(',');
    construct->add_option("--powers", co.powers, "radial powers n of |q|^(2n)")->delimiter(',');
    construct->add_option("--T", co.T, "final time");
    construct->add_option("--seed", co.seed, "seed of the convexity sampling");
    add_output(construct, co.out);

    VerifyOpts vo;
    auto* verify = app.add_subcommand("verify", "sample a flow and measure omni-potentiality defects");
    verify->add_option("--flow", vo.flow, "flow JSON")->required();
    verify->add_option("--points", vo.points, "spatial sample points");
    verify->add_option("--time-pairs", vo.time_pairs, "time pairs per point");
    verify->add_option("--box", vo.box, "lo,hi or per-axis lo,hi pairs")->delimiter(',');
    verify->add_option("--t-range", vo.t_range, "t0,t1")->delimiter(',');
    verify->add_option("--seed", vo.seed, "sampling seed");
    verify->add_option("--tol", vo.tol, "tolerance for every defect");
    verify->add_option("--tol-commutation", vo.tols.commutation);
    verify->add_option("--tol-bipotential", vo.tols.bipotential);
    verify->add_option("--tol-intermediate", vo.tols.intermediate);
    verify->add_option("--tol-eigenframe", vo.tols.eigenframe);
    add_output(verify, vo.out);

    WkbOpts wo;
    auto* wkb = app.add_subcommand("wkb", "build a 2-D WKB patch and assemble the omni-potential flow");
    wkb->add_option("--phi0", wo.phi0, "initial potential: expression in q1, q2 or JSON file")->required();
    wkb->add_option("--box", wo.box, "patch x0,x1,y0,y1")->delimiter(',');
    wkb->add_option("--branch", wo.branch, "eigen branch of grad S (1 smaller, 2 larger eigenvalue)");
    wkb->add_option("--kappa", wo.kappa);
    wkb->add_option("--eps", wo.eps);
    wkb->add_option("--order", wo.order, "truncation order P (0 or 1)");
    wkb->add_option("--f", wo.f, "time coefficients of f(t)")->delimiter(',');
    wkb->add_option("--T", wo.T, "requested final time");
    wkb->add_option("--degree", wo.degree, "Chebyshev degree of the fits");
    wkb->add_option("--a0-seed-slope", wo.a0_slope, "A0 = 1 + slope * sigma on the seed line");
    wkb->add_option("--kappa-sweep", wo.sweep, "kappa values for the residual scaling study")->delimiter(',');
    wkb->add_flag("--verify", wo.verify, "verify the assembled flow on the patch");
    wkb->add_option("--points", wo.points);
    wkb->add_option("--time-pairs", wo.time_pairs);
    wkb->add_option("--tol", wo.tol, "defect tolerance for --verify");
    wkb->add_option("--seed", wo.seed);
    wkb->add_option("--patch-csv", wo.patch_csv, "tabulate S, A0, A1 to CSV");
    wkb->add_option("--patch-json", wo.patch_json, "tabulate S, A0, A1 to JSON");
    wkb->add_option("--export-n", wo.export_n, "nodes per axis of the patch export");
    wkb->add_option("--flow-out", wo.flow_out, "write the assembled flow JSON");
    add_output(wkb, wo.out);

    ReconstructOpts ro;
    auto* rec = app.add_subcommand("reconstruct", "recover the Lagrangian map by discrete optimal transport");
    rec->add_option("--flow", ro.flow, "flow JSON to sample");
    rec->add_option("--grid", ro.grid, "grid nodes per axis");
    rec->add_option("--box", ro.box, "lo,hi or per-axis lo,hi pairs")->delimiter(',');
    rec->add_option("--t", ro.t, "time of the Eulerian snapshot");
    rec->add_option("--lagrangian", ro.lagrangian, "Lagrangian points CSV");
    rec->add_option("--eulerian", ro.eulerian, "Eulerian points CSV");
    rec->add_option("--permutation", ro.permutation, "true pairing, one index per line");
    rec->add_option("--solver", ro.solver, "auction | hungarian");
    rec->add_option("--shuffle", ro.shuffle, "relabel the Eulerian points with this seed");
    rec->add_option("--divergence-csv", ro.divergence_csv, "write -div of the displacement");
    rec->add_option("--seed", ro.seed, "seed of the monotonicity spot check");
    add_output(rec, ro.out);

    InvariantsOpts io;
    auto* inv = app.add_subcommand("invariants", "eigen-invariants of a matrix or along a flow trajectory");
    inv->add_option("--matrix", io.matrix, "rows separated by ';', entries by ','");
    inv->add_option("--matrix-file", io.matrix_file, "matrix JSON: {\"dim\", \"upper\"} or an array of rows");
    inv->add_option("--flow", io.flow, "flow JSON");
    inv->add_option("--q", io.q, "Lagrangian point")->delimiter(',');
    inv->add_option("--times", io.times)->delimiter(',');
    inv->add_option("--tol", io.tol, "relative tolerance of the relation checks");
    inv->add_option("--drift-tol", io.drift_tol);
    add_output(inv, io.out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kPass : kConfig;
    }

    try {
        if (*construct) return cmd_construct(co);
        if (*verify) return cmd_verify(vo);
        if (*wkb) return cmd_wkb(wo);
        if (*rec) return cmd_reconstruct(ro);
        if (*inv) return cmd_invariants(io);
    } catch (const LocatedError& e) {
        std::cerr << "error: " << e.what() << " at " << format_point(e.location());
        if (e.time() != 0.0) std::cerr << ", t=" << e.time();
        std::cerr << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfig;
    }
    return kConfig;
}
