#include "uqkit/cli.hpp"

#include "uqkit/error.hpp"
#include "uqkit/format.hpp"
#include "uqkit/hash.hpp"
#include "uqkit/loss.hpp"
#include "uqkit/random.hpp"
#include "uqkit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace uqkit {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
    if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json parse_json_file(const std::filesystem::path& path) {
    try {
        return nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Dataset load(const ExperimentConfig& config, std::size_t* dropped = nullptr) {
    require(!config.data_path.empty(), ErrorCode::InvalidArgument, "no dataset path given");
    auto loaded = load_dataset(config.data_path, config.target, config.id_col, config.unit);
    if (dropped) *dropped = loaded.dropped_rows;
    return std::move(loaded.data);
}

bool uses_gbdt(const ExperimentConfig& c) {
    return c.method == Method::Quantile ||
           ((c.method == Method::ThreeSplitL1 || c.method == Method::ThreeSplitL2) && c.engine == "gbdt");
}

}  // namespace

KernelExpr default_kernel(int dims) {
    KernelExpr k;
    k.with_rbf_ard(dims).with_white_noise();
    return k;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json gp = {{"restarts", c.gp_restarts}, {"max_iter", c.gp_max_iter}, {"features", c.gp_features}};
    if (c.kernel) gp["kernel"] = *c.kernel;
    return {{"data", c.data_path},
            {"target", c.target},
            {"id_col", c.id_col},
            {"unit", c.unit},
            {"method", to_string(c.method)},
            {"alpha_lo", c.alpha_lo},
            {"alpha_hi", c.alpha_hi},
            {"seed", c.seed},
            {"target_pct", c.target_pct},
            {"histogram_bins", c.histogram_bins},
            {"quantile",
             {{"lower", gbdt_config_to_json(c.quantile.lower)},
              {"mid", gbdt_config_to_json(c.quantile.mid)},
              {"upper", gbdt_config_to_json(c.quantile.upper)}}},
            {"threesplit",
             {{"engine", c.engine},
              {"gbdt", gbdt_config_to_json(c.threesplit_gbdt)},
              {"forest", forest_config_to_json(c.threesplit_forest)}}},
            {"gp", gp},
            {"search", {{"model", c.search_model}, {"budget", c.search_budget}}}};
}

ExperimentConfig config_from_json(const nlohmann::json& doc, ExperimentConfig c) {
    require(doc.is_object(), ErrorCode::ParseError, "config must be a JSON object");
    try {
        c.data_path = doc.value("data", c.data_path);
        c.target = doc.value("target", c.target);
        c.id_col = doc.value("id_col", c.id_col);
        c.unit = doc.value("unit", c.unit);
        if (doc.contains("method")) c.method = method_from_string(doc["method"].get<std::string>());
        c.alpha_lo = doc.value("alpha_lo", c.alpha_lo);
        c.alpha_hi = doc.value("alpha_hi", c.alpha_hi);
        if (doc.contains("seed")) {
            // A run seed also reseeds every model unless a model sets its own.
            c.seed = doc["seed"].get<std::uint64_t>();
            c.quantile.lower.seed = c.quantile.mid.seed = c.quantile.upper.seed = c.seed;
            c.threesplit_gbdt.seed = c.threesplit_forest.seed = c.seed;
        }
        c.target_pct = doc.value("target_pct", c.target_pct);
        c.histogram_bins = doc.value("histogram_bins", c.histogram_bins);
        c.out = doc.value("out", c.out);
        if (doc.contains("quantile")) {
            const auto& q = doc["quantile"];
            // "all" applies to the three models, then per-model keys refine it.
            if (q.contains("all")) {
                c.quantile.lower = gbdt_config_from_json(q["all"], c.quantile.lower);
                c.quantile.mid = gbdt_config_from_json(q["all"], c.quantile.mid);
                c.quantile.upper = gbdt_config_from_json(q["all"], c.quantile.upper);
            }
            if (q.contains("lower")) c.quantile.lower = gbdt_config_from_json(q["lower"], c.quantile.lower);
            if (q.contains("mid")) c.quantile.mid = gbdt_config_from_json(q["mid"], c.quantile.mid);
            if (q.contains("upper")) c.quantile.upper = gbdt_config_from_json(q["upper"], c.quantile.upper);
        }
        if (doc.contains("threesplit")) {
            const auto& t = doc["threesplit"];
            c.engine = t.value("engine", c.engine);
            if (t.contains("gbdt")) c.threesplit_gbdt = gbdt_config_from_json(t["gbdt"], c.threesplit_gbdt);
            if (t.contains("forest")) c.threesplit_forest = forest_config_from_json(t["forest"], c.threesplit_forest);
        }
        if (doc.contains("gp")) {
            const auto& g = doc["gp"];
            c.gp_restarts = g.value("restarts", c.gp_restarts);
            c.gp_max_iter = g.value("max_iter", c.gp_max_iter);
            if (g.contains("features")) c.gp_features = g["features"].get<std::vector<std::string>>();
            if (g.contains("kernel")) c.kernel = g["kernel"];
        }
        if (doc.contains("search")) {
            c.search_model = doc["search"].value("model", c.search_model);
            c.search_budget = doc["search"].value("budget", c.search_budget);
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("malformed config: ") + e.what());
    }
    require(c.engine == "gbdt" || c.engine == "forest", ErrorCode::InvalidArgument,
            "engine must be gbdt or forest, got '" + c.engine + "'");
    require(c.histogram_bins >= 1, ErrorCode::InvalidArgument, "histogram_bins must be >= 1");
    require(c.gp_restarts >= 1, ErrorCode::InvalidArgument, "gp restarts must be >= 1");
    return c;
}

std::string config_hash(const ExperimentConfig& config) { return sha256_hex(config_to_json(config).dump()); }

std::string provenance_comment(const nlohmann::json& p) {
    return "# config_hash=" + p.value("config_hash", std::string()) +
           " dataset_hash=" + p.value("dataset_hash", std::string()) +
           " seed=" + std::to_string(p.value("seed", std::uint64_t{0})) + "\n";
}

RunOutput cmd_run(const ExperimentConfig& config, Exec exec) {
    std::size_t dropped = 0;
    const Dataset data = load(config, &dropped);
    const std::string dhash = dataset_hash(data);

    nlohmann::json models = nlohmann::json::object();
    nlohmann::json diagnostics = nlohmann::json::object();
    RunOutput out;
    int n_clipped = 0, n_crossings = 0;
    SplitPlan plan;
    Dataset test;

    switch (config.method) {
        case Method::Quantile: {
            plan = make_split(data.size(), SplitKind::TwoWay, config.seed);
            const Dataset train = data.subset(plan.partitions[0]);
            test = data.subset(plan.partitions[1]);
            auto q = quantile_intervals(train, test, config.alpha_lo, config.alpha_hi, config.quantile, exec);
            out.intervals = std::move(q.intervals);
            n_crossings = q.crossings;
            models["lower"] = gbdt_to_json(q.lower);
            models["mid"] = gbdt_to_json(q.mid);
            models["upper"] = gbdt_to_json(q.upper);
            diagnostics["raw_bounds_inbounds_pct"] = inbounds_percentage(out.intervals, to_vector(test.targets),
                                                                         InboundsMode::RawBounds);
            break;
        }
        case Method::ThreeSplitL1:
        case Method::ThreeSplitL2: {
            plan = make_split(data.size(), SplitKind::ThreeWay, config.seed);
            test = data.subset(plan.partitions[2]);
            const Engine engine = config.engine == "forest" ? Engine(config.threesplit_forest)
                                                            : Engine(config.threesplit_gbdt);
            const auto kind = config.method == Method::ThreeSplitL1 ? ErrorTargetKind::L1 : ErrorTargetKind::L2;
            auto t = threesplit_intervals(data, plan, kind, engine, exec);
            out.intervals = std::move(t.intervals);
            n_clipped = t.clipped;
            models["base"] = std::move(t.base_model);
            models["error"] = std::move(t.error_model);
            break;
        }
        case Method::Gp: {
            plan = make_split(data.size(), SplitKind::TwoWay, config.seed);
            Dataset selected = config.gp_features.empty() ? data : data.select_features(config.gp_features);
            const Dataset train = selected.subset(plan.partitions[0]);
            test = selected.subset(plan.partitions[1]);
            const int dims = static_cast<int>(selected.dims());
            require(dims <= 64, ErrorCode::TooManyFeatures,
                    "GP supports at most 64 features, got " + std::to_string(dims) +
                        "; select descriptors first");
            const KernelExpr kernel = config.kernel ? kernel_from_json(*config.kernel, dims) : default_kernel(dims);
            GpFitOptions opts;
            opts.restarts = config.gp_restarts;
            opts.seed = config.seed;
            opts.optimizer.max_iter = config.gp_max_iter;
            opts.exec = exec;
            const GpModel model = fit_gp(train, kernel, opts);
            auto g = gp_intervals(model, test, exec);
            out.intervals = std::move(g.intervals);
            n_clipped = g.clipped_variances;
            models["gp"] = gp_to_json(model);
            diagnostics["log_likelihood"] = model.log_likelihood;
            diagnostics["jitter"] = model.jitter;
            diagnostics["restarts_failed"] = model.restarts_failed;
            break;
        }
    }

    out.ids = test.ids;
    out.observed = test.targets;
    const auto observed = to_vector(test.targets);
    out.report = build_report(config.target, config.method, out.intervals, observed, config.target_pct);
    out.report.n_clipped = n_clipped;
    out.report.n_crossings = n_crossings;

    const std::size_t n_test = plan.kind == SplitKind::TwoWay ? plan.partitions[1].size() : plan.partitions[2].size();
    const nlohmann::json provenance = {{"config_hash", config_hash(config)},
                                       {"dataset_hash", dhash},
                                       {"seed", config.seed},
                                       {"n_rows", data.size()},
                                       {"dropped_rows", dropped},
                                       {"split", {{"kind", to_string(plan.kind)}, {"seed", plan.seed}, {"n_test", n_test}}}};
    out.report_json = {{"report", report_to_json(out.report)},
                       {"provenance", provenance},
                       {"config", config_to_json(config)},
                       {"diagnostics", diagnostics}};

    if (!config.out.empty()) {
        const std::filesystem::path dir(config.out);
        std::error_code ec;
        std::filesystem::create_directories(dir / "models", ec);
        if (ec) fail(ErrorCode::IoError, "cannot create " + (dir / "models").string() + ": " + ec.message());
        const std::string header = provenance_comment(provenance);

        write_text(dir / "report.json", out.report_json.dump(2) + "\n");
        write_text(dir / "report.csv", header + report_csv_header() + "\n" + report_csv_row(out.report) + "\n");

        std::string iv = header + "id,observed,center,half_width,inbounds_flag\n";
        for (std::size_t i = 0; i < out.intervals.size(); ++i) {
            const auto& p = out.intervals[i];
            const bool in = p.center - p.half_width <= observed[i] && observed[i] <= p.center + p.half_width;
            iv += csv_field(out.ids[i]) + "," + format_double(observed[i]) + "," + format_double(p.center) + "," +
                  format_double(p.half_width) + "," + (in ? "1" : "0") + "\n";
        }
        write_text(dir / "intervals.csv", iv);

        std::vector<double> predicted, exact;
        for (std::size_t i = 0; i < out.intervals.size(); ++i) {
            predicted.push_back(out.intervals[i].half_width);
            exact.push_back(std::abs(observed[i] - out.intervals[i].center));
        }
        write_text(dir / "histogram.csv",
                   header + histogram_csv(residual_histogram(predicted, exact, config.histogram_bins)));
        for (const auto& [name, doc] : models.items()) write_text(dir / "models" / (name + ".json"), doc.dump() + "\n");
    }
    return out;
}

CompareOutput cmd_compare(const std::vector<nlohmann::json>& reports) {
    require(reports.size() >= 2, ErrorCode::InvalidArgument, "compare needs at least two reports");
    struct Row {
        UqReport report;
        std::size_t order;
    };
    std::vector<Row> rows;
    nlohmann::json key;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& doc = reports[i];
        require(doc.contains("report") && doc.contains("provenance"), ErrorCode::ParseError,
                "report " + std::to_string(i) + " lacks report/provenance sections");
        UqReport r = report_from_json(doc["report"]);
        const auto& p = doc["provenance"];
        const nlohmann::json k = {{"property", r.property_name},
                                  {"dataset_hash", p.value("dataset_hash", std::string())},
                                  {"split_seed", p.at("split").value("seed", std::uint64_t{0})},
                                  {"n_test", r.n_test}};
        if (i == 0) {
            key = k;
        } else if (k != key) {
            fail(ErrorCode::MismatchedPartitions,
                 "report " + std::to_string(i) + " (" + k.dump() + ") does not match report 0 (" + key.dump() + ")");
        }
        rows.push_back({std::move(r), i});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return to_string(a.report.method) < to_string(b.report.method);
    });

    CompareOutput out;
    out.csv = "method,base_mae,error_mae,inbounds_pct,scale_factor,rescaled_inbounds_pct,rescaled_error_mae,"
              "holdout_inbounds_pct\n";
    nlohmann::json table = nlohmann::json::array();
    for (const auto& row : rows) {
        const auto& r = row.report;
        out.csv += to_string(r.method) + "," + format_double(r.base_mae) + "," + format_double(r.error_mae) + "," +
                   format_double(r.inbounds_pct) + "," + format_double(r.scale_factor) + "," +
                   format_double(r.rescaled_inbounds_pct) + "," + format_double(r.rescaled_error_mae) + "," +
                   format_double(r.holdout_inbounds_pct) + "\n";
        table.push_back({{"method", to_string(r.method)},
                         {"base_mae", r.base_mae},
                         {"error_mae", r.error_mae},
                         {"inbounds_pct", r.inbounds_pct},
                         {"scale_factor", r.scale_factor},
                         {"rescaled_inbounds_pct", r.rescaled_inbounds_pct},
                         {"rescaled_error_mae", r.rescaled_error_mae},
                         {"holdout_inbounds_pct", r.holdout_inbounds_pct}});
    }
    out.json = key;
    out.json["step_pct"] = 100.0 / key["n_test"].get<double>();
    out.json["rows"] = table;
    return out;
}

CompareOutput cmd_compare(const std::vector<std::filesystem::path>& report_paths, const std::filesystem::path& out_dir) {
    std::vector<nlohmann::json> docs;
    for (const auto& p : report_paths) docs.push_back(parse_json_file(p));
    auto out = cmd_compare(docs);
    if (!out_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        if (ec) fail(ErrorCode::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
        write_text(out_dir / "comparison.json", out.json.dump(2) + "\n");
        write_text(out_dir / "comparison.csv", out.csv);
    }
    return out;
}

SearchOutput cmd_search(const ExperimentConfig& config, int budget, Exec exec) {
    require(budget >= 1, ErrorCode::InvalidArgument, "search budget must be >= 1");
    require(uses_gbdt(config), ErrorCode::InvalidArgument, "search needs a GBDT-based method");
    const std::string& which = config.search_model;
    require(which == "mid" || which == "base" || which == "lower" || which == "upper" || which == "error",
            ErrorCode::InvalidArgument, "search model must be mid, base, lower, upper or error");

    std::size_t dropped = 0;
    const Dataset data = load(config, &dropped);
    const auto outer = make_split(data.size(), SplitKind::TwoWay, config.seed);
    const Dataset pool = data.subset(outer.partitions[0]);
    const auto inner = make_split(pool.size(), SplitKind::TwoWay, derive_seed(config.seed, 1));
    Dataset fit_part = pool.subset(inner.partitions[0]);
    Dataset valid = pool.subset(inner.partitions[1]);

    Objective objective = Objective::mse();
    if (which == "lower") objective = Objective::quantile(config.alpha_lo);
    if (which == "upper") objective = Objective::quantile(config.alpha_hi);
    if (which == "error") {
        // Error targets come from a base model fit on the first half of the
        // fitting rows; the trial models learn them on the second half.
        const auto& rows = inner.partitions[0];
        const std::size_t half = rows.size() / 2;
        std::vector<int> a, b;
        for (std::size_t i = 0; i < rows.size(); ++i) (i < half ? a : b).push_back(static_cast<int>(i));
        const Dataset base_part = fit_part.subset(a);
        Dataset err_part = fit_part.subset(b);
        GbdtConfig base_cfg = config.threesplit_gbdt;
        base_cfg.objective = Objective::mse();
        const GbdtModel base = fit_gbdt(base_part, base_cfg, exec);
        const bool squared = config.method == Method::ThreeSplitL2;
        auto to_error = [&](Dataset& d) {
            const Eigen::VectorXd r = d.targets - predict_gbdt(base, d.features, std::nullopt, exec);
            d.targets = squared ? r.array().square().matrix().eval() : r.cwiseAbs().eval();
        };
        to_error(err_part);
        to_error(valid);
        fit_part = std::move(err_part);
    }

    SearchOutput out;
    Rng rng(derive_seed(config.seed, 0x5eec));
    const auto observed = to_vector(valid.targets);
    for (int t = 0; t < budget; ++t) {
        GbdtConfig c;
        c.n_trees = 100 + static_cast<int>(rng.index(901));
        c.learning_rate = std::exp(rng.uniform(std::log(0.01), std::log(0.3)));
        c.max_leaves = 4 + static_cast<int>(rng.index(60));
        c.min_samples_leaf = 1 + static_cast<int>(rng.index(50));
        c.subsample = rng.uniform(0.5, 1.0);
        c.colsample = rng.uniform(0.5, 1.0);
        c.seed = config.seed;
        c.objective = objective;
        // Keep the leaf floor feasible for small fitting sets.
        c.min_samples_leaf = std::min<int>(c.min_samples_leaf, std::max<int>(1, static_cast<int>(fit_part.size()) / 2));
        const GbdtModel model = fit_gbdt(fit_part, c, exec);
        const auto pred = to_vector(predict_gbdt(model, valid.features, std::nullopt, exec));
        const double score = objective.kind() == LossKind::Quantile ? loss_value(objective, observed, pred)
                                                                     : mean_absolute_error(pred, observed);
        out.trials.push_back({c, score});
        if (score < out.trials[out.best].score) out.best = static_cast<std::size_t>(t);
    }

    out.trace_csv = "trial,n_trees,learning_rate,max_leaves,min_samples_leaf,subsample,colsample,score\n";
    for (std::size_t t = 0; t < out.trials.size(); ++t) {
        const auto& c = out.trials[t].config;
        out.trace_csv += std::to_string(t) + "," + std::to_string(c.n_trees) + "," + format_double(c.learning_rate) +
                         "," + std::to_string(c.max_leaves) + "," + std::to_string(c.min_samples_leaf) + "," +
                         format_double(c.subsample) + "," + format_double(c.colsample) + "," +
                         format_double(out.trials[t].score) + "\n";
    }
    if (!config.out.empty()) {
        const std::filesystem::path dir(config.out);
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) fail(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
        const nlohmann::json provenance = {
            {"config_hash", config_hash(config)}, {"dataset_hash", dataset_hash(data)}, {"seed", config.seed}};
        write_text(dir / "search_trace.csv", provenance_comment(provenance) + out.trace_csv);
        const nlohmann::json best = {{"model", which},
                                     {"trial", out.best},
                                     {"score", out.trials[out.best].score},
                                     {"config", gbdt_config_to_json(out.trials[out.best].config)},
                                     {"provenance", provenance}};
        write_text(dir / "search_best.json", best.dump(2) + "\n");
    }
    return out;
}

std::vector<std::string> select_descriptors_from_data(const ExperimentConfig& config, int top_k, Exec exec) {
    const Dataset data = load(config);
    const auto plan = make_split(data.size(), SplitKind::TwoWay, config.seed);
    const Dataset train = data.subset(plan.partitions[0]);
    std::vector<GbdtModel> models;
    for (int i = 0; i < 3; ++i) {
        GbdtConfig c = config.quantile.mid;
        c.objective = Objective::mse();
        c.seed = config.seed + static_cast<std::uint64_t>(i);
        c.subsample = 0.8;
        c.colsample = 0.8;
        models.push_back(fit_gbdt(train, c, exec));
    }
    return select_descriptors(models, top_k);
}

Histogram histogram_from_intervals_csv(const std::filesystem::path& path, int n_bins,
                                       std::optional<std::pair<double, double>> range) {
    std::istringstream in(read_text(path));
    std::string line;
    std::vector<std::string> header;
    int c_obs = -1, c_center = -1, c_hw = -1;
    std::vector<double> predicted, exact;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_csv_line(line);
        if (header.empty()) {
            header = fields;
            for (std::size_t j = 0; j < header.size(); ++j) {
                if (header[j] == "observed") c_obs = static_cast<int>(j);
                if (header[j] == "center") c_center = static_cast<int>(j);
                if (header[j] == "half_width") c_hw = static_cast<int>(j);
            }
            require(c_obs >= 0 && c_center >= 0 && c_hw >= 0, ErrorCode::MissingColumn,
                    path.string() + " needs observed, center and half_width columns");
            continue;
        }
        require(fields.size() == header.size(), ErrorCode::ParseError,
                path.string() + ":" + std::to_string(line_no) + ": wrong field count");
        auto num = [&](int col) {
            auto v = parse_double(fields[static_cast<std::size_t>(col)]);
            require(v.has_value(), ErrorCode::UnparseableNumeric,
                    path.string() + ":" + std::to_string(line_no) + ": not a number: " +
                        fields[static_cast<std::size_t>(col)]);
            return *v;
        };
        predicted.push_back(num(c_hw));
        exact.push_back(std::abs(num(c_obs) - num(c_center)));
    }
    require(!header.empty(), ErrorCode::EmptyInput, path.string() + " has no header");
    return residual_histogram(predicted, exact, n_bins, range);
}

}  // namespace uqkit
