// Command-line entry point: dataset ingestion, synthetic benchmarking, model
// fitting, prediction, split evaluation, and counterfactual export.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
// PHYSIOMTL_LOG={quiet,info,debug} controls stderr verbosity.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "physiomtl/physiomtl.hpp"

namespace fs = std::filesystem;
using namespace physiomtl;

namespace {

int log_level() {
    static const int level = [] {
        const char* env = std::getenv("PHYSIOMTL_LOG");
        if (!env) return 1;
        const std::string v(env);
        if (v == "quiet" || v == "0") return 0;
        if (v == "debug" || v == "2") return 2;
        return 1;
    }();
    return level;
}

void info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "physiomtl: " << msg << "\n";
}

void debug(const std::string& msg) {
    if (log_level() >= 2) std::cerr << "physiomtl[debug]: " << msg << "\n";
}

// "a:b:n" -> n points from a to b inclusive; otherwise a comma list.
std::vector<double> parse_grid(const std::string& spec) {
    std::vector<double> out;
    if (spec.find(':') != std::string::npos) {
        double a = 0, b = 0;
        int n = 0;
        char c1 = 0, c2 = 0;
        std::istringstream is(spec);
        if (!(is >> a >> c1 >> b >> c2 >> n) || c1 != ':' || c2 != ':' || n < 1 ||
            !is.eof())
            throw InvalidInput("bad grid '" + spec + "' (want start:stop:count)");
        if (n == 1) {
            out.push_back(a);
            return out;
        }
        for (int i = 0; i < n; ++i)
            out.push_back(a + (b - a) * static_cast<double>(i) / (n - 1));
        return out;
    }
    std::istringstream is(spec);
    std::string item;
    while (std::getline(is, item, ','))
        out.push_back(csv::parse_double(item, "grid '" + spec + "'"));
    if (out.empty()) throw InvalidInput("empty grid '" + spec + "'");
    return out;
}

std::vector<std::string> parse_list(const std::string& spec) {
    std::vector<std::string> out;
    std::istringstream is(spec);
    std::string item;
    while (std::getline(is, item, ','))
        if (!csv::trim(item).empty()) out.push_back(csv::trim(item));
    return out;
}

// Flat key=value or JSON config file; CLI flags take precedence, so only
// options the user did not pass get overwritten.
std::map<std::string, std::string> read_config_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open config file " + path.string());
    std::map<std::string, std::string> kv;
    if (path.extension() == ".json") {
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw IngestError(path.string() + ": " + e.what());
        }
        if (!j.is_object()) throw IngestError(path.string() + ": expected a JSON object");
        for (const auto& [key, value] : j.items())
            kv[key] = value.is_string() ? value.get<std::string>() : value.dump();
        return kv;
    }
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = csv::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw IngestError(path.string() + ":" + std::to_string(line_no) +
                              ": expected key=value");
        kv[csv::trim(t.substr(0, eq))] = csv::trim(t.substr(eq + 1));
    }
    return kv;
}

// Fit/method options shared by the fitting subcommands.
struct MethodFlags {
    harness::MethodConfig cfg;
    std::string map_kind = "kernel";
    std::string m_spec;
    std::string config_file;

    void attach(CLI::App* cmd, bool with_seed = true) {
        cmd->add_option("--config", config_file,
                        "config file (key=value lines or a JSON object); flags override");
        cmd->add_option("--alpha", cfg.fit.alpha, "transport regularization weight");
        cmd->add_option("--gamma", cfg.fit.gamma,
                        "Sinkhorn coefficient (median-normalized cost units)");
        cmd->add_option("--sigma", cfg.fit.sigma, "RBF lengthscale (standardized units)");
        cmd->add_option("--map", map_kind, "transport map family")
            ->check(CLI::IsMember({"linear", "kernel"}));
        cmd->add_option("--m", m_spec, "similarity weights, comma separated");
        if (with_seed) cmd->add_option("--seed", cfg.fit.seed, "random seed");
        cmd->add_option("--lambda", cfg.lasso_lambda, "single_lasso l1 penalty");
        cmd->add_option("--knn-k", cfg.knn_k, "k for the nearest-task transfer rule");
        cmd->add_option("--ridge-eps", cfg.fit.ridge_eps, "per-task fit ridge");
        cmd->add_option("--max-outer", cfg.fit.max_outer, "outer iteration budget");
        cmd->add_option("--tol-obj", cfg.fit.tol_obj, "relative objective tolerance");
        cmd->add_option("--period", cfg.fit.period_hours, "rhythm period in hours");
    }

    void finalize(const CLI::App* cmd) {
        if (!config_file.empty()) {
            const auto kv = read_config_file(config_file);
            const auto want = [&](const char* flag, const char* key) -> const std::string* {
                const CLI::Option* opt = cmd->get_option_no_throw(flag);
                if (opt && opt->count() > 0) return nullptr;  // flag wins
                const auto it = kv.find(key);
                return it == kv.end() ? nullptr : &it->second;
            };
            const auto num = [](const std::string& s, const char* key) {
                return csv::parse_double(s, std::string("config key ") + key);
            };
            if (const auto* v = want("--alpha", "alpha")) cfg.fit.alpha = num(*v, "alpha");
            if (const auto* v = want("--gamma", "gamma")) cfg.fit.gamma = num(*v, "gamma");
            if (const auto* v = want("--sigma", "sigma")) cfg.fit.sigma = num(*v, "sigma");
            if (const auto* v = want("--map", "map")) map_kind = *v;
            if (const auto* v = want("--m", "m")) m_spec = *v;
            if (const auto* v = want("--seed", "seed"))
                cfg.fit.seed = static_cast<long>(num(*v, "seed"));
            if (const auto* v = want("--lambda", "lambda"))
                cfg.lasso_lambda = num(*v, "lambda");
            if (const auto* v = want("--knn-k", "knn_k"))
                cfg.knn_k = static_cast<int>(num(*v, "knn_k"));
            if (const auto* v = want("--ridge-eps", "ridge_eps"))
                cfg.fit.ridge_eps = num(*v, "ridge_eps");
            if (const auto* v = want("--max-outer", "max_outer"))
                cfg.fit.max_outer = static_cast<int>(num(*v, "max_outer"));
            if (const auto* v = want("--tol-obj", "tol_obj")) cfg.fit.tol_obj = num(*v, "tol_obj");
            if (const auto* v = want("--period", "period"))
                cfg.fit.period_hours = num(*v, "period");
        }
        cfg.fit.map_kind = map_kind_from_string(map_kind);
        if (!m_spec.empty()) {
            const auto vals = parse_grid(m_spec);
            cfg.fit.m.resize(static_cast<Eigen::Index>(vals.size()));
            for (size_t i = 0; i < vals.size(); ++i)
                cfg.fit.m[static_cast<Eigen::Index>(i)] = vals[i];
        }
    }
};

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw IngestError("cannot write " + path.string());
    out << content;
}

int run_ingest(const std::string& root, const std::string& out_dir,
               const std::vector<int>& exclude, double window_minutes, double zscore) {
    mmash::IngestOptions opt;
    if (!exclude.empty()) opt.exclude_subjects = exclude;
    opt.window_minutes = window_minutes;
    opt.zscore_threshold = zscore;

    mmash::IngestReport report;
    const auto tasks = mmash::load_mmash(root, opt, &report);
    fs::create_directories(out_dir);
    csv::write_tasks_csv(fs::path(out_dir) / "tasks.csv", tasks);
    csv::write_features_csv(fs::path(out_dir) / "features.csv", tasks, mmash::feature_names());
    const nlohmann::json j = report;
    write_text(fs::path(out_dir) / "ingest_report.json", j.dump(2) + "\n");
    info("ingested " + std::to_string(tasks.size()) + " subjects into " + out_dir);
    return 0;
}

int run_synth(const synth::SynthConfig& cfg, const std::string& out_dir, bool sweep,
              const std::string& shifts_spec, int sweep_seeds, const std::string& methods_spec,
              MethodFlags& flags) {
    fs::create_directories(out_dir);
    const auto tasks = synth::generate_tasks(cfg);
    csv::write_tasks_csv(fs::path(out_dir) / "tasks.csv", tasks);
    csv::write_features_csv(fs::path(out_dir) / "features.csv", tasks, {"s"});
    info("generated " + std::to_string(tasks.size()) + " synthetic tasks into " + out_dir);

    if (sweep) {
        const auto shifts = parse_grid(shifts_spec);
        const auto methods = parse_list(methods_spec);
        const auto rows = harness::divergence_sweep(cfg, shifts, methods, sweep_seeds,
                                                    static_cast<std::uint64_t>(cfg.seed),
                                                    flags.cfg);
        harness::write_sweep_csv(fs::path(out_dir) / "divergence_sweep.csv", rows);
        info("sweep: " + std::to_string(rows.size()) + " rows over " +
             std::to_string(shifts.size()) + " shifts");
    }
    return 0;
}

int run_fit(const std::string& tasks_csv, const std::string& features_csv,
            const std::string& out_path, const std::string& trace_path, MethodFlags& flags) {
    std::vector<std::string> names;
    const auto tasks = csv::load_tasks(tasks_csv, features_csv, &names);
    info("fitting " + to_string(flags.cfg.fit.map_kind) + " PhysioMTL on " +
         std::to_string(tasks.size()) + " tasks");
    PhysioMtlModel model = fit(tasks, flags.cfg.fit);
    model.map.feature_names = names;
    if (!model.coupling.converged)
        info("warning: Sinkhorn stopped at marginal violation " +
             csv::format_double(model.coupling.max_marginal_violation()) +
             " (tol " + csv::format_double(flags.cfg.fit.sinkhorn_tol) + ")");

    write_text(out_path, model_to_json(model).dump(2) + "\n");
    if (!trace_path.empty()) {
        std::ostringstream trace;
        trace << "iteration,objective\n";
        for (size_t i = 0; i < model.objective_trace.size(); ++i)
            trace << i << ',' << csv::format_double(model.objective_trace[i]) << '\n';
        write_text(trace_path, trace.str());
    }
    debug("final objective " + csv::format_double(model.objective_trace.back()));
    info("model written to " + out_path);
    return 0;
}

int run_predict(const std::string& model_path, const std::string& features_csv,
                const std::string& times_spec, const std::string& out_path) {
    std::ifstream in(model_path);
    if (!in) throw IngestError("cannot open model file " + model_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IngestError(model_path + ": " + e.what());
    }
    const PhysioMtlModel model = model_from_json(j);
    auto features = csv::load_features_csv(features_csv);
    const auto times = parse_grid(times_spec);

    // align feature columns with the model schema by name
    if (!model.map.feature_names.empty() && features.names != model.map.feature_names) {
        Eigen::MatrixXd aligned(features.values.rows(),
                                static_cast<Eigen::Index>(model.map.feature_names.size()));
        for (size_t k = 0; k < model.map.feature_names.size(); ++k) {
            const auto it = std::find(features.names.begin(), features.names.end(),
                                      model.map.feature_names[k]);
            if (it == features.names.end())
                throw InvalidInput(features_csv + ": missing feature column '" +
                                   model.map.feature_names[k] + "' required by the model");
            aligned.col(static_cast<Eigen::Index>(k)) =
                features.values.col(it - features.names.begin());
        }
        features.values = std::move(aligned);
        features.names = model.map.feature_names;
    }

    std::ostringstream out;
    out << "task_id,time_hours,hrv_ms\n";
    for (size_t r = 0; r < features.task_ids.size(); ++r) {
        const auto curve =
            predict_unseen(model, features.values.row(static_cast<Eigen::Index>(r)), times);
        for (size_t i = 0; i < times.size(); ++i)
            out << features.task_ids[r] << ',' << csv::format_double(times[i]) << ','
                << csv::format_double(curve[i]) << '\n';
    }
    write_text(out_path, out.str());
    info("predictions for " + std::to_string(features.task_ids.size()) + " tasks written to " +
         out_path);
    return 0;
}

int run_evaluate(const std::string& tasks_csv, const std::string& features_csv,
                 const std::string& methods_spec, const std::string& fractions_spec, int repeats,
                 std::uint64_t seed, const std::string& out_path, const std::string& json_path,
                 MethodFlags& flags) {
    const auto tasks = csv::load_tasks(tasks_csv, features_csv);
    const auto methods = parse_list(methods_spec);
    const auto fractions = parse_grid(fractions_spec);
    if (methods.empty()) throw InvalidInput("no methods given");

    std::vector<harness::ExperimentReport> reports;
    for (const auto& method : methods) {
        for (double fraction : fractions) {
            debug("evaluate " + method + " at fraction " + csv::format_double(fraction));
            reports.push_back(harness::run_split_experiment(tasks, method, fraction, repeats,
                                                            seed, flags.cfg));
            const auto& r = reports.back();
            info(method + " @ " + csv::format_double(fraction) + ": mean RMSE " +
                 csv::format_double(r.mean()) + " over " + std::to_string(r.rmses.size()) +
                 " repeats" +
                 (r.failures.empty()
                      ? std::string{}
                      : " (" + std::to_string(r.failures.size()) + " failed)"));
        }
    }
    harness::write_report_csv(out_path, reports);
    if (!json_path.empty()) {
        const nlohmann::json j = reports;
        write_text(json_path, j.dump(2) + "\n");
    }
    info("report written to " + out_path);
    return 0;
}

int run_counterfactual(const std::string& model_path, const std::string& dim,
                       const std::string& grid_spec, const std::string& times_spec,
                       const std::string& baseline_spec, const std::string& out_path) {
    std::ifstream in(model_path);
    if (!in) throw IngestError("cannot open model file " + model_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IngestError(model_path + ": " + e.what());
    }
    const PhysioMtlModel model = model_from_json(j);

    Eigen::VectorXd baseline = harness::feature_median(model.train_features);
    if (!baseline_spec.empty()) {
        for (const auto& item : parse_list(baseline_spec)) {
            const auto eq = item.find('=');
            if (eq == std::string::npos)
                throw InvalidInput("bad --baseline entry '" + item + "' (want name=value)");
            const std::string name = csv::trim(item.substr(0, eq));
            const auto& names = model.map.feature_names;
            const auto it = std::find(names.begin(), names.end(), name);
            if (it == names.end())
                throw InvalidInput("unknown baseline dimension '" + name + "'");
            baseline[it - names.begin()] =
                csv::parse_double(item.substr(eq + 1), "--baseline " + name);
        }
    }

    const auto curves = harness::counterfactual_sweep(model, baseline, dim,
                                                      parse_grid(grid_spec),
                                                      parse_grid(times_spec));
    harness::write_curves_csv(out_path, curves);
    info(std::to_string(curves.size()) + " curves written to " + out_path);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PhysioMTL: multi-task cosinor regression with an optimal-transport map"};
    app.require_subcommand(1);
    std::function<int()> action;

    // ingest-mmash
    auto* ingest = app.add_subcommand("ingest-mmash", "MMASH tree -> canonical tasks/features CSVs");
    {
        static std::string root, out_dir = "mmash_out";
        static std::vector<int> exclude;
        static double window_minutes = 5.0, zscore = 2.5;
        ingest->add_option("--root", root, "MMASH dataset root")->required();
        ingest->add_option("--out", out_dir, "output directory");
        ingest->add_option("--exclude", exclude, "subject numbers to exclude (default 4)");
        ingest->add_option("--window-minutes", window_minutes, "RMSSD window length");
        ingest->add_option("--zscore", zscore, "outlier z-score threshold");
        ingest->callback([&] {
            action = [&] { return run_ingest(root, out_dir, exclude, window_minutes, zscore); };
        });
    }

    // synth-bench
    auto* synth_cmd = app.add_subcommand("synth-bench", "generate the synthetic benchmark");
    {
        static synth::SynthConfig cfg;
        static std::string out_dir = "synth_out";
        static bool sweep = false;
        static std::string shifts = "0,2,4,6,8";
        static int sweep_seeds = 10;
        static std::string methods = "physiomtl_linear,global_average,knn_transfer,single_lasso";
        static MethodFlags flags;
        synth_cmd->add_option("--out", out_dir, "output directory");
        synth_cmd->add_option("--seed", cfg.seed, "generator seed");
        synth_cmd->add_option("--n-train", cfg.n_train, "training task count");
        synth_cmd->add_option("--n-test", cfg.n_test, "test task count");
        synth_cmd->add_option("--n-per-task", cfg.n_per_task, "observations per task");
        synth_cmd->add_option("--noise", cfg.sigma_noise, "observation noise std");
        synth_cmd->add_option("--p", cfg.p, "feature support lower bound");
        synth_cmd->add_option("--q", cfg.q, "feature support upper bound");
        synth_cmd->add_flag("--sweep", sweep, "also run the divergence sweep");
        synth_cmd->add_option("--shifts", shifts, "sweep shift grid");
        synth_cmd->add_option("--sweep-seeds", sweep_seeds, "seeds per shift");
        synth_cmd->add_option("--methods", methods, "sweep methods, comma separated");
        // fit flags configure the sweep's PhysioMTL entries, not the generator
        flags.attach(synth_cmd, /*with_seed=*/false);
        synth_cmd->callback([&, synth_cmd] {
            action = [&, synth_cmd] {
                flags.finalize(synth_cmd);
                return run_synth(cfg, out_dir, sweep, shifts, sweep_seeds, methods, flags);
            };
        });
    }

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "fit PhysioMTL from the canonical CSVs");
    {
        static std::string tasks_csv, features_csv, out_path = "model.json", trace_path;
        static MethodFlags flags;
        fit_cmd->add_option("--tasks", tasks_csv, "tasks CSV (task_id,time_hours,hrv_ms)")
            ->required();
        fit_cmd->add_option("--features", features_csv, "features CSV (task_id,<dims>)")
            ->required();
        fit_cmd->add_option("--out", out_path, "model JSON path");
        fit_cmd->add_option("--trace", trace_path, "objective trace CSV path");
        flags.attach(fit_cmd);
        fit_cmd->callback([&, fit_cmd] {
            action = [&, fit_cmd] {
                flags.finalize(fit_cmd);
                return run_fit(tasks_csv, features_csv, out_path, trace_path, flags);
            };
        });
    }

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "predict curves for unseen tasks");
    {
        static std::string model_path, features_csv, times = "0:24:49", out_path = "pred.csv";
        predict_cmd->add_option("--model", model_path, "fitted model JSON")->required();
        predict_cmd->add_option("--features", features_csv, "features CSV of unseen tasks")
            ->required();
        predict_cmd->add_option("--times", times, "time grid (start:stop:count or list)");
        predict_cmd->add_option("--out", out_path, "output CSV");
        predict_cmd->callback([&] {
            action = [&] { return run_predict(model_path, features_csv, times, out_path); };
        });
    }

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "repeated random-split RMSE evaluation");
    {
        static std::string tasks_csv, features_csv, out_path = "report.csv", json_path;
        static std::string methods =
            "global_average,single_lasso,knn_transfer,physiomtl_linear,physiomtl_kernel";
        static std::string fractions = "0.8,0.6,0.4,0.2";
        static int repeats = 10;
        static std::uint64_t seed = 0;
        static MethodFlags flags;
        eval_cmd->add_option("--tasks", tasks_csv, "tasks CSV")->required();
        eval_cmd->add_option("--features", features_csv, "features CSV")->required();
        eval_cmd->add_option("--methods", methods, "methods, comma separated");
        eval_cmd->add_option("--fractions,--fraction", fractions, "train fractions");
        eval_cmd->add_option("--repeats", repeats, "repeats per (method, fraction)");
        eval_cmd->add_option("--seed", seed, "master seed");
        eval_cmd->add_option("--out", out_path, "report CSV path");
        eval_cmd->add_option("--json", json_path, "full report JSON path");
        flags.attach(eval_cmd, /*with_seed=*/false);
        eval_cmd->callback([&, eval_cmd] {
            action = [&, eval_cmd] {
                flags.finalize(eval_cmd);
                return run_evaluate(tasks_csv, features_csv, methods, fractions, repeats, seed,
                                    out_path, json_path, flags);
            };
        });
    }

    // counterfactual
    auto* cf_cmd = app.add_subcommand("counterfactual", "sweep one feature through the map");
    {
        static std::string model_path, dim, grid, times = "0:24:49", baseline,
                                              out_path = "curves.csv";
        cf_cmd->add_option("--model", model_path, "fitted model JSON")->required();
        cf_cmd->add_option("--dim", dim, "feature dimension to vary")->required();
        cf_cmd->add_option("--grid", grid, "value grid (start:stop:count or list)")->required();
        cf_cmd->add_option("--times", times, "time grid");
        cf_cmd->add_option("--baseline", baseline,
                           "baseline overrides name=value,... (default: training medians)");
        cf_cmd->add_option("--out", out_path, "curves CSV path");
        cf_cmd->callback([&] {
            action = [&] {
                return run_counterfactual(model_path, dim, grid, times, baseline, out_path);
            };
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage error
    }

    try {
        return action();
    } catch (const InvalidInput& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalFailure& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const DivergedSolve& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {  // IngestError, DegenerateFit, InsufficientData
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
