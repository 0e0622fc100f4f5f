#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "metabr/estimation.hpp"
#include "metabr/inference.hpp"
#include "metabr/io.hpp"
#include "metabr/simulation.hpp"

using json = nlohmann::json;
using namespace metabr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInputError = 1;
constexpr int kExitNonconvergence = 2;
constexpr const char* kSchemaVersion = "1";

struct DataArgs {
    std::string path;
    bool var_column = false;
    std::vector<std::string> covariates;
};

void add_data_options(CLI::App* cmd, DataArgs& args) {
    cmd->add_option("--data", args.path, "input CSV (study,y,se|var,covariates...)")
        ->required();
    cmd->add_flag("--var-column", args.var_column,
                  "third column holds variances instead of standard errors");
    cmd->add_option("--covariates", args.covariates,
                    "covariate column names (comma separated)")
        ->delimiter(',');
}

Dataset load_dataset(const DataArgs& args) {
    const StudyTable table = read_study_table_file(args.path, !args.var_column);
    return table.to_dataset(args.covariates);
}

json invocation_json(const std::string& command, const DataArgs& data,
                     const std::string& method) {
    return json{{"schema_version", kSchemaVersion},
                {"command", command},
                {"data", data.path},
                {"var_column", data.var_column},
                {"covariates", data.covariates},
                {"method", method}};
}

FitOptions make_fit_options(const std::vector<double>& psi_interval, double tol,
                            std::optional<double> psi_start) {
    FitOptions opts;
    if (!psi_interval.empty()) {
        if (psi_interval.size() != 2)
            throw CLI::ValidationError("--psi-interval expects lo,hi");
        opts.psi_lo = psi_interval[0];
        opts.psi_hi = psi_interval[1];
    }
    opts.tol_score = tol;
    opts.psi_start = psi_start;
    return opts;
}

int run_fit(const DataArgs& data_args, const std::string& method_str,
            const std::vector<double>& psi_interval, double tol,
            std::optional<double> psi_start, const std::string& format) {
    const Dataset data = load_dataset(data_args);
    const Method method = method_from_string(method_str);
    const FitOptions opts = make_fit_options(psi_interval, tol, psi_start);
    const FitResult res = fit(data, method, opts);

    if (format == "json") {
        json out = invocation_json("fit", data_args, method_str);
        out["beta"] = std::vector<double>(res.beta.begin(), res.beta.end());
        out["se_beta"] = std::vector<double>(res.se_beta.begin(), res.se_beta.end());
        out["psi"] = res.psi;
        out["iterations"] = res.iterations;
        out["converged"] = res.converged;
        out["at_boundary"] = res.at_boundary;
        out["runtime_seconds"] = res.runtime_seconds;
        std::cout << out.dump(2) << "\n";
    } else {
        std::cout << "quantity,value\n";
        for (Eigen::Index j = 0; j < res.beta.size(); ++j)
            std::cout << "beta" << j << "," << res.beta(j) << "\n";
        for (Eigen::Index j = 0; j < res.se_beta.size(); ++j)
            std::cout << "se_beta" << j << "," << res.se_beta(j) << "\n";
        std::cout << "psi," << res.psi << "\n"
                  << "iterations," << res.iterations << "\n"
                  << "converged," << res.converged << "\n"
                  << "at_boundary," << res.at_boundary << "\n";
    }
    return res.converged ? kExitOk : kExitNonconvergence;
}

ProfileTarget parse_target(const std::string& spec, double value) {
    if (spec == "psi") return ProfileTarget::psi(value);
    if (spec.rfind("beta:", 0) == 0) {
        const int j = std::stoi(spec.substr(5));
        if (j < 1) throw CLI::ValidationError("--target beta:<j> is 1-based");
        return ProfileTarget::beta(j - 1, value);
    }
    throw CLI::ValidationError("--target must be beta:<j> or psi");
}

int run_profile(const DataArgs& data_args, const std::string& method_str,
                const std::string& target_str, const std::vector<double>& grid,
                bool want_ci, double level,
                const std::vector<double>& psi_interval, double tol) {
    const Dataset data = load_dataset(data_args);
    const Method method = method_from_string(method_str);
    const FitOptions opts = make_fit_options(psi_interval, tol, std::nullopt);

    std::cout.precision(10);
    if (!grid.empty()) {
        if (grid.size() != 3)
            throw CLI::ValidationError("--grid expects lo,hi,n");
        const double lo = grid[0], hi = grid[1];
        const int n = static_cast<int>(grid[2]);
        if (n < 2 || hi <= lo) throw CLI::ValidationError("bad --grid range");
        std::cout << "tau,statistic\n";
        for (int i = 0; i < n; ++i) {
            const double tau = lo + (hi - lo) * i / (n - 1);
            const ProfileTarget target = parse_target(target_str, tau);
            std::cout << tau << ","
                      << profile_statistic(data, method, target, opts) << "\n";
        }
    }
    if (want_ci) {
        const ProfileTarget which = parse_target(target_str, 0.0);
        const IntervalResult ci = plr_ci(data, method, which, level, opts);
        std::cout << "ci_lower,ci_upper,level\n"
                  << ci.lower << "," << ci.upper << "," << ci.level << "\n";
    }
    return kExitOk;
}

BrockwellDesign brockwell_from_config(const Config& cfg, int reps,
                                      std::uint64_t seed, int workers) {
    BrockwellDesign d = BrockwellDesign::paper_defaults();
    if (auto it = cfg.find("beta0"); it != cfg.end()) d.beta0 = std::stod(it->second);
    if (auto it = cfg.find("psi_grid"); it != cfg.end())
        d.psi_grid = parse_double_list(it->second);
    if (auto it = cfg.find("k_list"); it != cfg.end())
        d.k_list = parse_int_list(it->second);
    if (auto it = cfg.find("psi_hi"); it != cfg.end()) d.psi_hi = std::stod(it->second);
    if (auto it = cfg.find("level"); it != cfg.end()) d.level = std::stod(it->second);
    if (auto it = cfg.find("deltas"); it != cfg.end())
        d.deltas = parse_double_list(it->second);
    if (auto it = cfg.find("calibration"); it != cfg.end())
        d.exact_calibration = (it->second == "exact");
    d.reps = reps;
    d.seed = seed;
    d.workers = workers;
    return d;
}

int run_simulate(const std::string& design_path, int reps, std::uint64_t seed,
                 int workers, const std::string& out_path) {
    const Config cfg = read_config_file(design_path);
    const auto it = cfg.find("study");
    if (it == cfg.end()) {
        std::cerr << "config error at key 'study': missing\n";
        return kExitInputError;
    }
    const std::string study = it->second;

    SimMetrics metrics;
    if (study == "bootstrap") {
        const auto data_it = cfg.find("data");
        if (data_it == cfg.end()) {
            std::cerr << "config error at key 'data': missing for bootstrap study\n";
            return kExitInputError;
        }
        DataArgs da;
        da.path = data_it->second;
        if (auto f = cfg.find("var_column"); f != cfg.end())
            da.var_column = (f->second == "true" || f->second == "1");
        StudyTable table = read_study_table_file(da.path, !da.var_column);
        std::vector<std::string> names;
        if (auto f = cfg.find("covariates"); f != cfg.end()) {
            std::istringstream is(f->second);
            std::string tok;
            while (std::getline(is, tok, ',')) names.push_back(tok);
        }
        Dataset base = table.to_dataset(names);
        const FitResult ml = fit(base, Method::ML);
        BootstrapDesign design{std::move(base), Theta{ml.beta, ml.psi}, reps, seed,
                               workers};
        metrics = pvalue_distribution_study(design);
    } else {
        const BrockwellDesign design = brockwell_from_config(cfg, reps, seed, workers);
        if (study == "brockwell-estimation") {
            metrics = estimation_study(design);
        } else if (study == "brockwell-coverage") {
            metrics = coverage_study(design, design.level);
        } else if (study == "brockwell-power") {
            metrics = power_study(design);
        } else {
            std::cerr << "config error at key 'study': unknown study '" << study
                      << "'\n";
            return kExitInputError;
        }
    }

    if (out_path.empty() || out_path == "-") {
        metrics.write_csv(std::cout);
    } else {
        std::ofstream out(out_path);
        if (!out) {
            std::cerr << "cannot open output file " << out_path << "\n";
            return kExitInputError;
        }
        metrics.write_csv(out);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"random-effects meta-analysis and meta-regression by maximum "
                 "likelihood and bias-reduced penalized likelihood"};
    app.require_subcommand(1);

    // fit
    DataArgs fit_data;
    std::string fit_method = "ml";
    std::vector<double> fit_interval;
    double fit_tol = 1e-6;
    std::optional<double> fit_psi_start;
    std::string fit_format = "json";
    auto* cmd_fit = app.add_subcommand("fit", "fit a model to a study table");
    add_data_options(cmd_fit, fit_data);
    cmd_fit->add_option("--method", fit_method, "ml|mean-brpl|median-brpl|dl");
    cmd_fit->add_option("--psi-interval", fit_interval, "psi root interval lo,hi")
        ->delimiter(',');
    cmd_fit->add_option("--tol", fit_tol, "score convergence tolerance");
    cmd_fit->add_option("--psi-start", fit_psi_start, "starting value for psi");
    cmd_fit->add_option("--format", fit_format, "json|csv")
        ->check(CLI::IsMember({"json", "csv"}));

    // profile
    DataArgs prof_data;
    std::string prof_method = "median-brpl";
    std::string prof_target = "beta:1";
    std::vector<double> prof_grid;
    bool prof_ci = false;
    double prof_level = 0.95;
    std::vector<double> prof_interval;
    double prof_tol = 1e-6;
    auto* cmd_profile =
        app.add_subcommand("profile", "profile ratio statistic and intervals");
    add_data_options(cmd_profile, prof_data);
    cmd_profile->add_option("--method", prof_method, "ml|mean-brpl|median-brpl");
    cmd_profile->add_option("--target", prof_target, "beta:<j> (1-based) or psi");
    cmd_profile->add_option("--grid", prof_grid, "lo,hi,n evaluation grid")
        ->delimiter(',');
    cmd_profile->add_flag("--ci", prof_ci, "solve confidence interval endpoints");
    cmd_profile->add_option("--level", prof_level, "confidence level");
    cmd_profile->add_option("--psi-interval", prof_interval, "psi root interval lo,hi")
        ->delimiter(',');
    cmd_profile->add_option("--tol", prof_tol, "score convergence tolerance");

    // simulate
    std::string sim_design;
    int sim_reps = 10000;
    std::uint64_t sim_seed = 1;
    int sim_workers = 1;
    std::string sim_out;
    auto* cmd_simulate = app.add_subcommand("simulate", "run a Monte Carlo study");
    cmd_simulate->add_option("--design", sim_design, "design config file")->required();
    cmd_simulate->add_option("--reps", sim_reps, "replicates per cell");
    cmd_simulate->add_option("--seed", sim_seed, "master RNG seed");
    cmd_simulate->add_option("--workers", sim_workers, "worker thread count");
    cmd_simulate->add_option("--out", sim_out, "output CSV path (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_fit->parsed())
            return run_fit(fit_data, fit_method, fit_interval, fit_tol,
                           fit_psi_start, fit_format);
        if (cmd_profile->parsed())
            return run_profile(prof_data, prof_method, prof_target, prof_grid,
                               prof_ci, prof_level, prof_interval, prof_tol);
        if (cmd_simulate->parsed())
            return run_simulate(sim_design, sim_reps, sim_seed, sim_workers, sim_out);
    } catch (const CsvError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInputError;
    }
    return kExitOk;
}
