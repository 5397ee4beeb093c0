#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "rrx/gaussian_limit.hpp"
#include "rrx/golden.hpp"
#include "rrx/measures.hpp"
#include "rrx/model_io.hpp"
#include "rrx/montecarlo.hpp"
#include "rrx/raking.hpp"
#include "rrx/two_marginal.hpp"

using nlohmann::json;

namespace {

std::uint64_t seed_or_env(std::optional<std::uint64_t> flag, std::uint64_t fallback) {
    if (flag) return *flag;
    if (const char* env = std::getenv("RRX_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw rrx::ValidationError("RRX_SEED is not an unsigned integer: '" +
                                       std::string(env) + "'");
        }
    }
    return fallback;
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') std::cout << '\n';
    } else {
        rrx::write_text_atomic(out_path, text);
        std::cout << "wrote " << out_path << "\n";
    }
}

std::vector<int> resolve_schedule(const rrx::CellGrid& grid,
                                  const std::vector<std::string>& names) {
    std::vector<int> schedule;
    for (const auto& name : names) {
        const int k = grid.partition_index(name);
        if (k < 0) throw rrx::ValidationError("unknown partition '" + name + "'");
        schedule.push_back(k);
    }
    if (schedule.empty()) throw rrx::ValidationError("empty schedule");
    return schedule;
}

std::vector<std::string> split_names(const std::string& arg) {
    std::vector<std::string> out;
    std::stringstream ss(arg);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<rrx::PiecewiseFunction> pick_functions(const rrx::Model& model,
                                                   const std::string& selector) {
    if (model.functions.empty())
        throw rrx::ValidationError("the model declares no functions");
    if (selector == "all" || selector.empty()) return model.functions;
    std::vector<rrx::PiecewiseFunction> out;
    for (const auto& name : split_names(selector)) {
        bool found = false;
        for (const auto& f : model.functions) {
            if (f.name == name) {
                out.push_back(f);
                found = true;
                break;
            }
        }
        if (!found) throw rrx::ValidationError("the model has no function '" + name + "'");
    }
    return out;
}

json grid_cells_json(const rrx::CellGrid& grid, const rrx::Vector& weights) {
    json cells = json::array();
    for (int c = 0; c < grid.num_cells(); ++c) {
        std::vector<std::string> labels;
        for (int k = 0; k < grid.num_partitions(); ++k)
            labels.push_back(grid.partition(k).labels[grid.labels()(c, k)]);
        cells.push_back({{"labels", labels}, {"weight", weights[c]}});
    }
    return cells;
}

// ---- rake ------------------------------------------------------------------

int cmd_rake(const std::string& table_path, const std::string& model_path,
             const std::string& targets_path, double tol, int max_iters,
             const std::string& trace_path, const std::string& out_path,
             const std::string& format) {
    if ((table_path.empty()) == (model_path.empty()))
        throw rrx::ValidationError("give exactly one of --table or --model");
    const rrx::CellGrid grid = table_path.empty()
                                   ? rrx::load_model(model_path).grid
                                   : rrx::read_contingency_csv(table_path);
    const rrx::RakingSchedule schedule = rrx::load_targets(targets_path, grid);

    rrx::RakingState state = rrx::RakingState::from_grid(grid);
    std::vector<rrx::Vector> iterates{state.weights()};
    std::vector<double> residuals{state.margin_residual(schedule.targets)};
    rrx::RakeReport report;
    const int period = static_cast<int>(schedule.targets.size());
    while (residuals.back() > tol && report.iterations < max_iters) {
        rrx::rake_step(state, schedule.targets[state.iteration() % period]);
        report.iterations += 1;
        iterates.push_back(state.weights());
        residuals.push_back(state.margin_residual(schedule.targets));
    }
    report.converged = residuals.back() <= tol;
    report.final_residual = residuals.back();

    if (!trace_path.empty()) {
        std::ostringstream os;
        os << "iteration";
        for (int c = 0; c < grid.num_cells(); ++c) os << "," << grid.cell_name(c);
        os << ",residual,divergence_increment\n";
        for (std::size_t i = 0; i < iterates.size(); ++i) {
            os << i;
            for (int c = 0; c < grid.num_cells(); ++c)
                os << "," << rrx::format_full(iterates[i][c]);
            os << "," << rrx::format_full(residuals[i]) << ",";
            if (i > 0) os << rrx::format_full(state.kl_history()[i - 1]);
            os << "\n";
        }
        rrx::write_text_atomic(trace_path, os.str());
    }

    if (format == "csv") {
        std::ostringstream os;
        os << "cell,weight\n";
        for (int c = 0; c < grid.num_cells(); ++c)
            os << grid.cell_name(c) << "," << rrx::format_full(state.weights()[c]) << "\n";
        emit(os.str(), out_path);
    } else {
        json j;
        j["iterations"] = report.iterations;
        j["converged"] = report.converged;
        j["final_residual"] = report.final_residual;
        j["cells"] = grid_cells_json(grid, state.weights());
        j["divergence_increments"] = state.kl_history();
        emit(j.dump(2) + "\n", out_path);
    }
    // short human table on stderr so piped stdout stays machine-readable
    std::ostringstream os;
    os << (report.converged ? "converged" : "stopped") << " after "
       << report.iterations << " steps, residual "
       << rrx::format_full(report.final_residual) << "\n";
    for (int c = 0; c < grid.num_cells(); ++c)
        os << "  " << grid.cell_name(c) << " " << rrx::format_short(state.weights()[c])
           << "\n";
    std::cerr << os.str();
    return 0;
}

// ---- limit-cov -------------------------------------------------------------

int cmd_limit_cov(const std::string& model_path, const std::string& schedule_arg,
                  const std::string& functions_arg, int n_max,
                  const std::string& out_path, const std::string& format) {
    const rrx::Model model = rrx::load_model(model_path);
    const auto functions = pick_functions(model, functions_arg);
    const auto schedule = resolve_schedule(model.grid, split_names(schedule_arg));
    const rrx::GaussianLimitModel limit = rrx::make_limit_model(model.grid, schedule);

    json per_n = json::array();
    std::vector<double> base;
    for (const auto& f : functions) base.push_back(rrx::variance_of(model.grid, f));
    for (int n = 0; n <= n_max; ++n) {
        const rrx::Matrix cov = rrx::covariance_matrix(limit, functions, n);
        Eigen::SelfAdjointEigenSolver<rrx::Matrix> es(cov);
        json variances = json::object();
        json reductions = json::object();
        json ratios = json::object();
        for (std::size_t i = 0; i < functions.size(); ++i) {
            variances[functions[i].name] = cov(i, i);
            reductions[functions[i].name] = base[i] - cov(i, i);
            ratios[functions[i].name] = base[i] > 0.0 ? cov(i, i) / base[i] : 1.0;
        }
        per_n.push_back({{"n", n},
                         {"variance", variances},
                         {"reduction", reductions},
                         {"risk_ratio", ratios},
                         {"psd", es.eigenvalues().minCoeff() >= -1e-10}});
    }
    if (format == "csv") {
        std::ostringstream os;
        os << "n,function,variance,reduction,risk_ratio,psd\n";
        for (const auto& row : per_n)
            for (const auto& f : functions)
                os << row["n"].get<int>() << "," << f.name << ","
                   << rrx::format_full(row["variance"][f.name].get<double>()) << ","
                   << rrx::format_full(row["reduction"][f.name].get<double>()) << ","
                   << rrx::format_full(row["risk_ratio"][f.name].get<double>()) << ","
                   << (row["psd"].get<bool>() ? 1 : 0) << "\n";
        emit(os.str(), out_path);
    } else {
        json j;
        j["schedule"] = split_names(schedule_arg);
        j["per_n"] = per_n;
        emit(j.dump(2) + "\n", out_path);
    }
    return 0;
}

// ---- two-margin ------------------------------------------------------------

int cmd_two_margin(const std::string& model_path, const std::string& functions_arg,
                   int n_max, const std::string& out_path, const std::string& format) {
    const rrx::Model model = rrx::load_model(model_path);
    const auto functions = pick_functions(model, functions_arg);
    const rrx::TwoMarginalModel tm = rrx::make_two_marginal(model.grid);
    const rrx::SpectralGap gap = rrx::spectral_gap(tm);

    json j;
    j["lambda"] = gap.lambda2;
    j["ergodic"] = gap.ergodic;
    j["per_function"] = json::object();
    std::ostringstream csv;
    csv << "function,n,s1_even_error,s2_odd_error\n";
    for (const auto& f : functions) {
        const rrx::LimitS lim = rrx::limit_s(tm, model.grid, f);
        const rrx::Vector ef_a = rrx::conditional_expectation(model.grid, f, 0);
        const rrx::Vector ef_b = rrx::conditional_expectation(model.grid, f, 1);
        json traj = json::array();
        for (int n = 0; n <= n_max; ++n) {
            const rrx::SMatrices sm = rrx::s_matrices_finite(tm, ef_a, ef_b, n);
            const double e1 = (sm.s1_even - lim.s1_even).cwiseAbs().maxCoeff();
            const double e2 = (sm.s2_odd - lim.s2_odd).cwiseAbs().maxCoeff();
            traj.push_back({{"n", n}, {"s1_even_error", e1}, {"s2_odd_error", e2}});
            csv << f.name << "," << n << "," << rrx::format_full(e1) << ","
                << rrx::format_full(e2) << "\n";
        }
        const rrx::InfinityCovariance inf_cov =
            rrx::g_infinity_covariance(tm, model.grid, f, f);
        json entry;
        entry["s1_even_limit"] = std::vector<double>(
            lim.s1_even.data(), lim.s1_even.data() + lim.s1_even.size());
        entry["s2_odd_limit"] = std::vector<double>(
            lim.s2_odd.data(), lim.s2_odd.data() + lim.s2_odd.size());
        entry["limit_variance"] = inf_cov.value;
        entry["decay"] = {{"fitted_rate", inf_cov.fit.fitted_rate},
                          {"gap", inf_cov.fit.gap},
                          {"points", inf_cov.fit.points}};
        entry["trajectory"] = traj;
        j["per_function"][f.name] = entry;
    }
    if (format == "csv")
        emit(csv.str(), out_path);
    else
        emit(j.dump(2) + "\n", out_path);
    return 0;
}

// ---- simulate --------------------------------------------------------------

int cmd_simulate(const std::string& config_path, std::optional<std::uint64_t> seed_flag,
                 int threads, const std::string& out_path, const std::string& format) {
    std::ifstream in(config_path);
    if (!in) throw rrx::ValidationError("cannot open '" + config_path + "'");
    json cfg;
    try {
        in >> cfg;
    } catch (const std::exception& e) {
        throw rrx::ValidationError("cannot parse '" + config_path + "': " + e.what());
    }
    const std::string generator = cfg.value("generator", "discrete-joint");
    const std::uint64_t seed = seed_or_env(seed_flag, cfg.value("seed", 0ull));

    if (generator == "bivariate-normal") {
        const rrx::EcdfReport r =
            rrx::ecdf_experiment(cfg.value("n", 200), cfg.value("reps", 1000),
                                 cfg.value("mid_steps", 10), seed, threads);
        json j;
        j["config"] = cfg;
        j["seed"] = seed;
        j["dropped"] = r.dropped;
        const char* coord[2] = {"x", "y"};
        const char* stage[3] = {"unraked", "mid", "limit"};
        for (int c = 0; c < 2; ++c) {
            json d, cl;
            for (int s = 0; s < 3; ++s) d[stage[s]] = r.distance[c][s];
            cl["mid"] = r.closer[c][0];
            cl["limit"] = r.closer[c][1];
            j["distance"][coord[c]] = d;
            j["share_improved"][coord[c]] = cl;
        }
        if (format == "csv") {
            std::ostringstream os;
            os << "coordinate,stage,distance\n";
            for (int c = 0; c < 2; ++c)
                for (int s = 0; s < 3; ++s)
                    os << coord[c] << "," << stage[s] << ","
                       << rrx::format_full(r.distance[c][s]) << "\n";
            emit(os.str(), out_path);
        } else {
            emit(j.dump(2) + "\n", out_path);
        }
        return 0;
    }
    if (generator != "discrete-joint")
        throw rrx::ValidationError("unknown generator '" + generator + "'");

    if (!cfg.contains("model"))
        throw rrx::ValidationError("'" + config_path + "': missing \"model\" path");
    const rrx::Model model = rrx::load_model(cfg.at("model").get<std::string>());
    rrx::ExperimentConfig config;
    config.grid = model.grid;
    config.functions = pick_functions(model, cfg.value("functions", "all"));
    config.schedule =
        resolve_schedule(model.grid, cfg.at("schedule").get<std::vector<std::string>>());
    config.n = cfg.value("n", 2000);
    config.reps = cfg.value("reps", 10000);
    config.threads = threads;
    config.seed = seed;
    const rrx::ExperimentReport r = rrx::run_raking_experiment(config);

    if (format == "csv") {
        std::ostringstream os;
        os << "step,function,mean,bias_scaled,bias_se,n_var,theory_var,ks\n";
        for (int s = 0; s <= static_cast<int>(r.schedule.size()); ++s)
            for (std::size_t f = 0; f < r.function_names.size(); ++f)
                os << s << "," << r.function_names[f] << ","
                   << rrx::format_full(r.mean(s, f)) << ","
                   << rrx::format_full(r.bias_scaled(s, f)) << ","
                   << rrx::format_full(r.bias_se(s, f)) << ","
                   << rrx::format_full(r.nvar(s, f)) << ","
                   << rrx::format_full(r.theory(s, f)) << ","
                   << rrx::format_full(r.ks(s, f)) << "\n";
        emit(os.str(), out_path);
    } else {
        json j;
        j["config"] = cfg;
        j["seed"] = seed;
        j["n"] = r.n;
        j["reps"] = r.reps;
        j["dropped"] = r.dropped;
        j["steps"] = json::array();
        for (int s = 0; s <= static_cast<int>(r.schedule.size()); ++s) {
            json step;
            step["step"] = s;
            for (std::size_t f = 0; f < r.function_names.size(); ++f) {
                step["per_function"][r.function_names[f]] = {
                    {"mean", r.mean(s, f)},          {"bias_scaled", r.bias_scaled(s, f)},
                    {"bias_se", r.bias_se(s, f)},    {"n_var", r.nvar(s, f)},
                    {"theory_var", r.theory(s, f)},  {"ks", r.ks(s, f)}};
            }
            j["steps"].push_back(step);
        }
        emit(j.dump(2) + "\n", out_path);
    }
    return 0;
}

// ---- verify-appendix -------------------------------------------------------

int cmd_verify(const std::string& which, std::optional<std::uint64_t> seed_flag,
               int threads) {
    rrx::golden::CheckReport report;
    if (which == "a1") {
        report = rrx::golden::small_table_case();
    } else if (which == "a2") {
        report = rrx::golden::variance_case();
    } else if (which == "a3") {
        report = rrx::golden::ecdf_case(seed_or_env(seed_flag, 411), threads);
    } else {
        throw rrx::ValidationError("--which must be a1, a2 or a3");
    }
    for (const auto& line : report.lines)
        std::cout << (line.ok ? "PASS" : "FAIL") << "  " << line.label << "  ["
                  << line.detail << "]\n";
    std::cout << report.name << ": " << (report.all_ok() ? "all checks passed" : "checks FAILED")
              << " (" << rrx::format_short(report.elapsed_ms) << " ms)\n";
    return report.all_ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"raking-ratio calibration and its Gaussian limit theory"};
    app.require_subcommand(1);

    std::string table_path, model_path, targets_path, trace_path, out_path;
    std::string schedule_arg, functions_arg = "all", format = "json", which;
    std::string config_path;
    double tol = 1e-9;
    int max_iters = 1000, n_max = 6, threads = 1;
    std::optional<std::uint64_t> seed_flag;

    auto* rake = app.add_subcommand("rake", "rake a table to margin targets");
    rake->add_option("--table", table_path, "two-way contingency CSV");
    rake->add_option("--model", model_path, "model JSON (any number of partitions)");
    rake->add_option("--targets", targets_path, "targets JSON")->required();
    rake->add_option("--tol", tol, "margin residual tolerance");
    rake->add_option("--max-iters", max_iters, "step limit");
    rake->add_option("--trace", trace_path, "per-iteration trace CSV path");
    rake->add_option("--out", out_path, "report path (default stdout)");
    rake->add_option("--format", format, "json|csv")
        ->check(CLI::IsMember({"json", "csv"}));

    auto* limit = app.add_subcommand("limit-cov", "raked-limit covariances per step count");
    limit->add_option("--model", model_path, "model JSON")->required();
    limit->add_option("--schedule", schedule_arg, "comma list of partition names, repeated cyclically")
        ->required();
    limit->add_option("--functions", functions_arg, "comma list or 'all'");
    limit->add_option("--n-max", n_max, "largest step count");
    limit->add_option("--out", out_path, "report path (default stdout)");
    limit->add_option("--format", format, "json|csv")
        ->check(CLI::IsMember({"json", "csv"}));

    auto* two = app.add_subcommand("two-margin", "alternating two-partition limits");
    two->add_option("--model", model_path, "model JSON with exactly 2 partitions")->required();
    two->add_option("--functions", functions_arg, "comma list or 'all'");
    two->add_option("--n-max", n_max, "trajectory length");
    two->add_option("--out", out_path, "report path (default stdout)");
    two->add_option("--format", format, "json|csv")
        ->check(CLI::IsMember({"json", "csv"}));

    auto* sim = app.add_subcommand("simulate", "replicated raking experiments");
    sim->add_option("--config", config_path, "experiment config JSON")->required();
    sim->add_option("--seed", seed_flag, "seed (fallback: RRX_SEED, then config)");
    sim->add_option("--threads", threads, "worker threads");
    sim->add_option("--out", out_path, "report path (default stdout)");
    sim->add_option("--format", format, "json|csv")
        ->check(CLI::IsMember({"json", "csv"}));

    auto* verify = app.add_subcommand("verify-appendix", "run a pinned reference case");
    verify->add_option("--which", which, "a1|a2|a3")->required();
    verify->add_option("--seed", seed_flag, "seed for a3 (fallback: RRX_SEED)");
    verify->add_option("--threads", threads, "worker threads for a3");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (rake->parsed())
            return cmd_rake(table_path, model_path, targets_path, tol, max_iters,
                            trace_path, out_path, format);
        if (limit->parsed())
            return cmd_limit_cov(model_path, schedule_arg, functions_arg, n_max,
                                 out_path, format);
        if (two->parsed())
            return cmd_two_margin(model_path, functions_arg, n_max, out_path, format);
        if (sim->parsed())
            return cmd_simulate(config_path, seed_flag, threads, out_path, format);
        if (verify->parsed()) return cmd_verify(which, seed_flag, threads);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
