// uqkit command-line front end: run, compare, search, select-descriptors, histogram.

#include "uqkit/cli.hpp"
#include "uqkit/error.hpp"
#include "uqkit/parallel.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

struct CommonFlags {
    std::string data, target = "target", id_col = "id", unit, method = "quantile", out, config;
    double alpha_lo = 0.14, alpha_hi = 0.84;
    std::uint64_t seed = 0;
    bool serial = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--data", f.data, "dataset CSV or JSON");
    cmd->add_option("--target", f.target, "target column")->capture_default_str();
    cmd->add_option("--id-col", f.id_col, "id column")->capture_default_str();
    cmd->add_option("--unit", f.unit, "target unit label");
    cmd->add_option("--method", f.method, "quantile | threesplit-l1 | threesplit-l2 | gp")->capture_default_str();
    cmd->add_option("--alpha-lo", f.alpha_lo, "lower quantile")->capture_default_str();
    cmd->add_option("--alpha-hi", f.alpha_hi, "upper quantile")->capture_default_str();
    cmd->add_option("--seed", f.seed, "split and model seed")->capture_default_str();
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--config", f.config, "JSON config; its keys override flags");
    cmd->add_flag("--serial", f.serial, "use the serial reference kernels");
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) uqkit::fail(uqkit::ErrorCode::IoError, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::parse_error& e) {
        uqkit::fail(uqkit::ErrorCode::ParseError, path + ": " + e.what());
    }
}

uqkit::ExperimentConfig build_config(const CommonFlags& f) {
    const nlohmann::json flags = {{"data", f.data},         {"target", f.target},     {"id_col", f.id_col},
                                  {"unit", f.unit},         {"method", f.method},     {"alpha_lo", f.alpha_lo},
                                  {"alpha_hi", f.alpha_hi}, {"seed", f.seed},         {"out", f.out}};
    auto config = uqkit::config_from_json(flags);
    if (!f.config.empty()) config = uqkit::config_from_json(read_json(f.config), config);
    return config;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) uqkit::fail(uqkit::ErrorCode::IoError, "cannot write " + path);
    out << text;
}

void print_error(std::string_view code, const std::string& message) {
    const nlohmann::json doc = {{"error", std::string(code)}, {"message", message}};
    std::cerr << doc.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    uqkit::configure_threads_from_env();

    CLI::App app{"uqkit: prediction intervals for tabular regression"};
    app.require_subcommand(1);

    CommonFlags run_flags;
    auto* run = app.add_subcommand("run", "train one method and write report, intervals and histogram");
    add_common(run, run_flags);

    CommonFlags search_flags;
    int budget = 20;
    std::string search_model;
    auto* search = app.add_subcommand("search", "random hyperparameter search for one GBDT model");
    add_common(search, search_flags);
    search->add_option("--budget", budget, "number of sampled configs")->capture_default_str();
    search->add_option("--search-model", search_model, "mid | lower | upper | error");

    std::vector<std::string> report_paths;
    std::string compare_out;
    auto* compare = app.add_subcommand("compare", "tabulate reports that share a test partition");
    compare->add_option("reports", report_paths, "report.json files")->required()->expected(2, -1);
    compare->add_option("--out", compare_out, "output directory");

    CommonFlags sel_flags;
    std::vector<std::string> model_paths;
    int top_k = 50;
    auto* select = app.add_subcommand("select-descriptors", "intersect the top features of three GBDT models");
    add_common(select, sel_flags);
    select->add_option("--models", model_paths, "three GBDT model JSON files")->expected(3);
    select->add_option("--top-k", top_k, "features taken from each model")->capture_default_str();

    std::string intervals_path, hist_out;
    int bins = 30;
    std::vector<double> range;
    auto* histogram = app.add_subcommand("histogram", "bin predicted minus exact error from intervals.csv");
    histogram->add_option("--intervals", intervals_path, "intervals.csv from a run")->required();
    histogram->add_option("--bins", bins, "number of bins")->capture_default_str();
    histogram->add_option("--range", range, "lo hi")->expected(2);
    histogram->add_option("--out", hist_out, "output CSV (stdout if omitted)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            const auto config = build_config(run_flags);
            const auto exec = run_flags.serial ? uqkit::Exec::serial : uqkit::Exec::parallel;
            const auto result = uqkit::cmd_run(config, exec);
            std::cout << result.report_json["report"].dump(2) << "\n";
        } else if (search->parsed()) {
            auto config = build_config(search_flags);
            if (!search_model.empty()) config.search_model = search_model;
            if (search->count("--budget") > 0) config.search_budget = budget;
            const auto exec = search_flags.serial ? uqkit::Exec::serial : uqkit::Exec::parallel;
            const auto result = uqkit::cmd_search(config, config.search_budget, exec);
            const auto& best = result.trials[result.best];
            const nlohmann::json summary = {{"model", config.search_model},
                                            {"trial", result.best},
                                            {"score", best.score},
                                            {"config", uqkit::gbdt_config_to_json(best.config)}};
            std::cout << summary.dump(2) << "\n";
        } else if (compare->parsed()) {
            std::vector<std::filesystem::path> paths(report_paths.begin(), report_paths.end());
            const auto result = uqkit::cmd_compare(paths, compare_out);
            std::cout << result.csv;
        } else if (select->parsed()) {
            std::vector<std::string> names;
            if (!model_paths.empty()) {
                std::vector<uqkit::GbdtModel> models;
                for (const auto& p : model_paths) models.push_back(uqkit::gbdt_from_json(read_json(p)));
                names = uqkit::select_descriptors(models, top_k);
            } else {
                const auto config = build_config(sel_flags);
                const auto exec = sel_flags.serial ? uqkit::Exec::serial : uqkit::Exec::parallel;
                names = uqkit::select_descriptors_from_data(config, top_k, exec);
            }
            const nlohmann::json doc = {{"top_k", top_k}, {"descriptors", names}};
            if (!sel_flags.out.empty()) {
                std::filesystem::create_directories(sel_flags.out);
                write_file((std::filesystem::path(sel_flags.out) / "descriptors.json").string(), doc.dump(2) + "\n");
            }
            std::cout << doc.dump(2) << "\n";
        } else if (histogram->parsed()) {
            std::optional<std::pair<double, double>> r;
            if (range.size() == 2) r = std::make_pair(range[0], range[1]);
            const auto hist = uqkit::histogram_from_intervals_csv(intervals_path, bins, r);
            const auto csv = uqkit::histogram_csv(hist);
            if (hist_out.empty()) {
                std::cout << csv;
            } else {
                write_file(hist_out, csv);
            }
        }
    } catch (const uqkit::Error& e) {
        print_error(uqkit::error_code_name(e.code()), e.what());
        return 2;
    } catch (const std::exception& e) {
        print_error("Internal", e.what());
        return 1;
    }
    return 0;
}
