#include <iostream>
#include <sstream>
#include <string>
#include <optional>
#include <vector>

#include <CLI11.hpp>

#include "qmcfb/studies.hpp"

using namespace qmcfb;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    bool deterministic = false;
    std::string out;
    std::string cache = "cache";
};

ExperimentConfig load(const Globals& g) {
    ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
    if (g.seed) cfg.qmc.seed = *g.seed;
    return cfg;
}

RunContext context(const Globals& g) {
    if (g.threads < 0) throw ValidationError("--threads must be >= 0");
    RunContext ctx;
    ctx.threads = g.threads;
    ctx.cache_dir = g.cache;
    return ctx;
}

std::vector<double> parse_sigma(const std::string& text, int smax) {
    std::vector<double> sigma(static_cast<std::size_t>(smax), 0.0);
    if (text.empty()) return sigma;
    std::stringstream ss(text);
    std::string item;
    std::size_t j = 0;
    while (std::getline(ss, item, ',')) {
        if (j >= sigma.size()) throw ValidationError("--sigma has more than smax = " + std::to_string(smax) + " entries");
        try {
            std::size_t used = 0;
            sigma[j] = std::stod(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw ValidationError("--sigma: cannot parse '" + item + "'");
        }
        ++j;
    }
    return sigma;
}

/// Provenance comments, then either stdout or <out>/<name>.csv.
void emit(csv::Table table, const ExperimentConfig& cfg, const Globals& g, const std::string& name, bool to_file) {
    if (!g.deterministic) table.prepend_comment("generated=" + csv::timestamp_utc());
    table.prepend_comment("config-hash=" + config_hash(cfg));
    if (!to_file) {
        std::cout << table.str();
        return;
    }
    const std::filesystem::path path = std::filesystem::path(g.out.empty() ? "out" : g.out) / (name + ".csv");
    table.write(path);
    std::cerr << "wrote " << path.string() << " (" << table.size() << " rows)\n";
}

csv::Table trajectory_table(const Trajectory& tr, const SpatialGrid& sg) {
    const int n = sg.n();
    const auto m = tr.us.front().size();
    std::vector<std::string> header{"t"};
    for (int i = 1; i <= n; ++i) header.push_back("y_" + std::to_string(i));
    for (Eigen::Index i = 1; i <= m; ++i) header.push_back("u_" + std::to_string(i));
    csv::Table t(header);
    for (std::size_t k = 0; k < tr.ys.size(); ++k) {
        std::vector<std::string> cells{csv::num(tr.grid.t(static_cast<int>(k)))};
        for (int i = 0; i < n; ++i) cells.push_back(csv::num(tr.ys[k](i)));
        for (Eigen::Index i = 0; i < m; ++i) cells.push_back(csv::num(tr.us[k](i)));
        t.push(std::move(cells));
    }
    return t;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Parameter-averaged Riccati feedback with quasi-Monte Carlo"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "experiment config (JSON)");
    app.add_option("--seed", g.seed, "override qmc.seed");
    app.add_option("--threads", g.threads, "worker threads (0 = available parallelism)");
    app.add_flag("--deterministic", g.deterministic, "omit the timestamp comment");
    app.add_option("--out", g.out, "output directory (run defaults to out/, other commands print to stdout)");
    app.add_option("--cache", g.cache, "directory for cached reference means");

    auto* run = app.add_subcommand("run", "run the study named in the config");

    auto* points = app.add_subcommand("points", "emit a point set in [-1/2,1/2]^s");
    std::string pmethod = "lattice";
    std::int64_t pN = 127;
    int ps = 4, palpha = 2;
    points->add_option("--method", pmethod, "lattice | shifted | folded | interlaced | mc");
    points->add_option("--N", pN, "number of points (2^m for interlaced)");
    points->add_option("--s", ps, "dimension");
    points->add_option("--alpha", palpha, "interlacing order");

    auto* cbc = app.add_subcommand("cbc", "CBC generating vector and error trace");
    std::int64_t cN = 127;
    int cs = 4, calpha = 1;
    cbc->add_option("--N", cN, "prime N (lattice) or 2^m (alpha >= 2)");
    cbc->add_option("--s", cs, "dimension");
    cbc->add_option("--alpha", calpha, "1: rank-1 lattice, >= 2: interlaced polynomial lattice");

    auto* ric = app.add_subcommand("riccati", "Riccati trajectory diagnostics at one parameter");
    std::string rsigma;
    bool rfull = false;
    ric->add_option("--sigma", rsigma, "comma-separated parameter values, remaining entries 0");
    ric->add_flag("--full", rfull, "append the flattened matrices");

    auto* sim = app.add_subcommand("simulate", "closed-loop simulation at one parameter");
    std::string ssigma, slaw = "exact";
    bool sdump = false;
    sim->add_option("--sigma", ssigma, "comma-separated parameter values, remaining entries 0");
    sim->add_option("--law", slaw, "exact | nominal | averaged")->check(CLI::IsMember({"exact", "nominal", "averaged"}));
    sim->add_flag("--dump-trajectory", sdump, "emit t,y_1..y_n,u_1..u_m per time node");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const ExperimentConfig cfg = load(g);
        const RunContext ctx = context(g);
        const bool to_file = !g.out.empty();
        if (*run) {
            if (g.config.empty()) throw ValidationError("run: --config is required");
            csv::Table t = run_study(cfg, ctx);
            const std::string name = cfg.output.empty() ? study_name(cfg.study) : cfg.output;
            emit(std::move(t), cfg, g, name, true);
        } else if (*points) {
            const Model model = build_model(cfg.model);
            if (ps > model.fam.smax()) throw ValidationError("points: s exceeds model smax");
            emit(points_table(make_points(pmethod, pN, ps, palpha, cfg.qmc.seed, model.fam.bseq)), cfg, g, "points", to_file);
        } else if (*cbc) {
            const Model model = build_model(cfg.model);
            if (cs > model.fam.smax()) throw ValidationError("cbc: s exceeds model smax");
            const std::vector<double> b = leading_bseq(model.fam, cs);
            csv::Table t({"j", "z", "e2"});
            if (calpha == 1) {
                const qmc::LatticeRule rule = qmc::cbc_lattice(cN, cs, qmc::WeightSpec::pod(b));
                t.comment("kind=lattice,N=" + std::to_string(cN) + ",s=" + std::to_string(cs) +
                          ",bound=" + csv::num(qmc::theoretical_bound(cN, cs, qmc::WeightSpec::pod(b), 1.0)));
                for (int j = 0; j < cs; ++j) t.row(j + 1, static_cast<long long>(rule.z[j]), rule.e2_trace[j]);
            } else {
                if (cN < 4 || (cN & (cN - 1)) != 0) throw ValidationError("cbc: interlaced rules need N = 2^m");
                const int m = std::countr_zero(static_cast<std::uint64_t>(cN));
                const qmc::PolyLatticeRule rule = qmc::cbc_interlaced(m, cs, calpha, qmc::WeightSpec::spod(b, calpha));
                t.comment("kind=interlaced,m=" + std::to_string(m) + ",alpha=" + std::to_string(calpha) +
                          ",modulus=" + std::to_string(rule.modulus));
                for (std::size_t j = 0; j < rule.zpolys.size(); ++j)
                    t.row(static_cast<int>(j) + 1, static_cast<long long>(rule.zpolys[j]), rule.trace[j]);
            }
            emit(std::move(t), cfg, g, "cbc", to_file);
        } else if (*ric) {
            const Model model = build_model(cfg.model);
            const auto sigma = parse_sigma(rsigma, model.fam.smax());
            emit(riccati_table(model, time_grid(cfg.model), sigma, rfull), cfg, g, "riccati", to_file);
        } else if (*sim) {
            const Model model = build_model(cfg.model);
            const TimeGrid grid = time_grid(cfg.model);
            const auto sigma = parse_sigma(ssigma, model.fam.smax());
            const ParametricSolution exact = solve_parametric(model.fam, model.data, sigma, grid);
            FeedbackLaw law = exact.law;
            if (slaw == "nominal") {
                law = solve_parametric(model.fam, model.data, std::vector<double>(sigma.size(), 0.0), grid).law;
            } else if (slaw == "averaged") {
                law = averaged_law(cfg, model, grid, ctx);
            }
            const Trajectory tr = simulate(model.fam, sigma, law, model.data, grid);
            if (sdump) {
                csv::Table t = trajectory_table(tr, model.fam.grid);
                t.comment("law=" + slaw);
                emit(std::move(t), cfg, g, "trajectory", to_file);
            } else {
                csv::Table named({"law", "cost", "optimal_cost", "eps_fb"});
                named.push({slaw, csv::num(compute_cost(tr.ys, tr.us, model.data, model.fam, grid)),
                            csv::num(node_cost(model.fam, model.data, exact)), csv::num(feedback_distance(law, exact.law))});
                emit(std::move(named), cfg, g, "simulate", to_file);
            }
        }
        return 0;
    } catch (const SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
