#include "uqkit/uq.hpp"

#include "uqkit/error.hpp"
#include "uqkit/format.hpp"
#include "uqkit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numeric>

namespace uqkit {

std::string to_string(Method method) {
    switch (method) {
        case Method::Quantile: return "quantile";
        case Method::ThreeSplitL1: return "threesplit-l1";
        case Method::ThreeSplitL2: return "threesplit-l2";
        case Method::Gp: return "gp";
    }
    return "unknown";
}

Method method_from_string(const std::string& name) {
    if (name == "quantile") return Method::Quantile;
    if (name == "threesplit-l1") return Method::ThreeSplitL1;
    if (name == "threesplit-l2") return Method::ThreeSplitL2;
    if (name == "gp") return Method::Gp;
    fail(ErrorCode::InvalidArgument, "unknown method '" + name + "'");
}

namespace {

bool covers(double center, double half_width, double observed) {
    return center - half_width <= observed && observed <= center + half_width;
}

}  // namespace

QuantileResult quantile_intervals(const Dataset& train, const Dataset& test, double alpha_lo, double alpha_hi,
                                  const QuantileConfigs& configs, Exec exec) {
    require(0.0 < alpha_lo && alpha_lo < alpha_hi && alpha_hi < 1.0, ErrorCode::InvalidArgument,
            "need 0 < alpha_lo < alpha_hi < 1");
    GbdtConfig lo = configs.lower, mid = configs.mid, hi = configs.upper;
    lo.objective = Objective::quantile(alpha_lo);
    mid.objective = Objective::mse();
    hi.objective = Objective::quantile(alpha_hi);

    QuantileResult out;
    out.lower = fit_gbdt(train, lo, exec);
    out.mid = fit_gbdt(train, mid, exec);
    out.upper = fit_gbdt(train, hi, exec);
    const Eigen::VectorXd pl = predict_gbdt(out.lower, test.features, std::nullopt, exec);
    const Eigen::VectorXd pm = predict_gbdt(out.mid, test.features, std::nullopt, exec);
    const Eigen::VectorXd pu = predict_gbdt(out.upper, test.features, std::nullopt, exec);
    out.intervals.reserve(test.size());
    for (Eigen::Index i = 0; i < pm.size(); ++i) {
        PredictionInterval iv;
        iv.method = Method::Quantile;
        iv.center = pm(i);
        iv.half_width = std::abs(pu(i) - pl(i)) / 2.0;
        iv.raw_lower = pl(i);
        iv.raw_upper = pu(i);
        if (pu(i) < pl(i)) ++out.crossings;
        out.intervals.push_back(iv);
    }
    return out;
}

namespace {

struct Fitted {
    std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> predict;
    nlohmann::json doc;
};

Fitted fit_engine(const Engine& engine, const Dataset& train, Exec exec) {
    if (const auto* gbdt = std::get_if<GbdtConfig>(&engine)) {
        GbdtConfig config = *gbdt;
        config.objective = Objective::mse();
        auto model = std::make_shared<GbdtModel>(fit_gbdt(train, config, exec));
        Fitted f;
        f.doc = gbdt_to_json(*model);
        f.predict = [model, exec](const Eigen::MatrixXd& X) { return predict_gbdt(*model, X, std::nullopt, exec); };
        return f;
    }
    auto model = std::make_shared<ForestModel>(fit_forest(train, std::get<ForestConfig>(engine), exec));
    Fitted f;
    f.doc = forest_to_json(*model);
    f.predict = [model, exec](const Eigen::MatrixXd& X) { return predict_forest(*model, X, exec); };
    return f;
}

}  // namespace

ThreeSplitResult threesplit_intervals(const Dataset& data, const SplitPlan& plan, ErrorTargetKind kind,
                                      const Engine& engine, Exec exec) {
    require(plan.kind == SplitKind::ThreeWay && plan.partitions.size() == 3, ErrorCode::InvalidArgument,
            "3split needs a ThreeWay split plan");
    std::size_t total = 0;
    for (const auto& p : plan.partitions) {
        total += p.size();
        for (int r : p) {
            require(r >= 0 && static_cast<std::size_t>(r) < data.size(), ErrorCode::InvalidArgument,
                    "split plan index out of range");
        }
    }
    require(total == data.size(), ErrorCode::InvalidArgument, "split plan does not cover the dataset");

    const Dataset base_part = data.subset(plan.partitions[0]);
    Dataset error_part = data.subset(plan.partitions[1]);
    const Dataset valid_part = data.subset(plan.partitions[2]);

    const Fitted base = fit_engine(engine, base_part, exec);
    const Eigen::VectorXd resid = error_part.targets - base.predict(error_part.features);
    error_part.targets = kind == ErrorTargetKind::L1 ? resid.cwiseAbs().eval() : resid.array().square().matrix().eval();

    ThreeSplitResult out;
    out.error_targets = error_part.targets;
    const Fitted err = fit_engine(engine, error_part, exec);
    out.base_model = base.doc;
    out.error_model = err.doc;
    out.base_predictions = base.predict(valid_part.features);
    const Eigen::VectorXd err_pred = err.predict(valid_part.features);

    const Method method = kind == ErrorTargetKind::L1 ? Method::ThreeSplitL1 : Method::ThreeSplitL2;
    out.intervals.reserve(valid_part.size());
    for (Eigen::Index i = 0; i < err_pred.size(); ++i) {
        double e = err_pred(i);
        if (e < 0.0) {
            e = 0.0;
            ++out.clipped;
        }
        PredictionInterval iv;
        iv.method = method;
        iv.center = out.base_predictions(i);
        iv.half_width = kind == ErrorTargetKind::L1 ? e : std::sqrt(e);
        out.intervals.push_back(iv);
    }
    return out;
}

GpIntervalResult gp_intervals(const GpModel& model, const Dataset& test, Exec exec) {
    const GpPosterior post = gp_posterior(model, test.features, exec);
    GpIntervalResult out;
    out.clipped_variances = post.clipped_variances;
    out.intervals.reserve(test.size());
    for (Eigen::Index i = 0; i < post.mean.size(); ++i) {
        PredictionInterval iv;
        iv.method = Method::Gp;
        iv.center = post.mean(i);
        iv.half_width = post.std(i);
        out.intervals.push_back(iv);
    }
    return out;
}

double inbounds_percentage(std::span<const PredictionInterval> intervals, std::span<const double> observed,
                           InboundsMode mode) {
    require(intervals.size() == observed.size(), ErrorCode::LengthMismatch,
            "intervals and observations differ in length");
    require(!intervals.empty(), ErrorCode::EmptyInput, "no intervals");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        const auto& iv = intervals[i];
        if (mode == InboundsMode::Symmetric) {
            if (covers(iv.center, iv.half_width, observed[i])) ++hits;
        } else {
            require(iv.raw_lower.has_value() && iv.raw_upper.has_value(), ErrorCode::MissingRawBounds,
                    "interval " + std::to_string(i) + " has no raw bounds");
            const double lo = std::min(*iv.raw_lower, *iv.raw_upper);
            const double hi = std::max(*iv.raw_lower, *iv.raw_upper);
            if (lo <= observed[i] && observed[i] <= hi) ++hits;
        }
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(intervals.size());
}

std::vector<PredictionInterval> scale_intervals(std::span<const PredictionInterval> intervals, double scale) {
    std::vector<PredictionInterval> out(intervals.begin(), intervals.end());
    for (auto& iv : out) iv.half_width *= scale;
    return out;
}

double interval_error_mae(std::span<const PredictionInterval> intervals, std::span<const double> observed) {
    require(intervals.size() == observed.size(), ErrorCode::LengthMismatch,
            "intervals and observations differ in length");
    require(!intervals.empty(), ErrorCode::EmptyInput, "no intervals");
    double sum = 0.0;
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        sum += std::abs(intervals[i].half_width - std::abs(observed[i] - intervals[i].center));
    }
    return sum / static_cast<double>(intervals.size());
}

Calibration calibrate_scale(std::span<const PredictionInterval> intervals, std::span<const double> observed,
                            double target_pct) {
    require(intervals.size() == observed.size(), ErrorCode::LengthMismatch,
            "intervals and observations differ in length");
    require(!intervals.empty(), ErrorCode::EmptyInput, "no intervals");
    const std::size_t n = intervals.size();

    // Each positive-width interval becomes covered at an exact threshold s*
    // (found in floating point, matching the inclusive test used for
    // coverage). Coverage(s) = fixed hits + #{s* <= s}.
    std::size_t fixed_hits = 0;
    std::vector<double> thresholds;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& iv = intervals[i];
        const double o = observed[i];
        if (!(iv.half_width > 0.0)) {
            if (covers(iv.center, 0.0, o)) ++fixed_hits;
            continue;
        }
        double s = std::abs(o - iv.center) / iv.half_width;
        if (!std::isfinite(s)) continue;  // never covered at finite scale
        const double inf = std::numeric_limits<double>::infinity();
        while (!covers(iv.center, s * iv.half_width, o)) s = std::nextafter(s, inf);
        while (s > 0.0 && covers(iv.center, std::nextafter(s, 0.0) * iv.half_width, o)) s = std::nextafter(s, 0.0);
        thresholds.push_back(s);
    }

    Calibration cal;
    if (thresholds.empty()) {
        cal.all_zero_widths = true;
        cal.scale = 1.0;
        cal.inbounds_pct = inbounds_percentage(intervals, observed);
        return cal;
    }
    std::sort(thresholds.begin(), thresholds.end());
    // Thresholds of 0 are met by every s > 0.
    const std::size_t m_min = static_cast<std::size_t>(
        std::upper_bound(thresholds.begin(), thresholds.end(), 0.0) - thresholds.begin());
    auto pct = [&](std::size_t m) { return 100.0 * static_cast<double>(fixed_hits + m) / static_cast<double>(n); };
    std::size_t best_m = m_min;
    double best_gap = std::abs(pct(m_min) - target_pct);
    for (std::size_t m = m_min + 1; m <= thresholds.size(); ++m) {
        // Skip counts that share a threshold with the next point: they are not attainable.
        if (m < thresholds.size() && thresholds[m] == thresholds[m - 1]) continue;
        const double gap = std::abs(pct(m) - target_pct);
        if (gap < best_gap) {
            best_gap = gap;
            best_m = m;
        }
    }
    if (best_m == m_min) {
        cal.scale = m_min < thresholds.size() ? thresholds[m_min] / 2.0 : 1.0;
    } else {
        cal.scale = thresholds[best_m - 1];
    }
    cal.inbounds_pct = inbounds_percentage(scale_intervals(intervals, cal.scale), observed);
    return cal;
}

std::vector<std::string> select_descriptors(std::span<const std::vector<FeatureGain>> tables,
                                            const std::vector<std::string>& feature_names, int top_k) {
    require(!tables.empty(), ErrorCode::EmptyInput, "no importance tables");
    require(top_k >= 1, ErrorCode::InvalidArgument, "top_k must be >= 1");
    std::map<std::string, std::size_t> position;
    for (std::size_t j = 0; j < feature_names.size(); ++j) position.emplace(feature_names[j], j);
    require(position.size() == feature_names.size(), ErrorCode::InvalidArgument, "duplicate feature names");

    const std::size_t d = feature_names.size();
    std::vector<std::vector<double>> gains(d);  // per feature, one per table
    std::vector<int> hits(d, 0);
    for (const auto& table : tables) {
        std::vector<double> g(d, 0.0);
        for (const auto& fg : table) {
            auto it = position.find(fg.name);
            require(it != position.end(), ErrorCode::FeatureMismatch, "unknown feature '" + fg.name + "'");
            g[it->second] = fg.gain;
        }
        std::vector<std::size_t> order;
        for (std::size_t j = 0; j < d; ++j) {
            if (g[j] > 0.0) order.push_back(j);
        }
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return g[a] > g[b]; });
        if (order.size() > static_cast<std::size_t>(top_k)) order.resize(static_cast<std::size_t>(top_k));
        for (std::size_t j : order) ++hits[j];
        for (std::size_t j = 0; j < d; ++j) gains[j].push_back(g[j]);
    }

    std::vector<std::size_t> chosen;
    std::vector<double> mean_gain(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        if (hits[j] != static_cast<int>(tables.size())) continue;
        // Sum in sorted order so the mean does not depend on table order.
        std::sort(gains[j].begin(), gains[j].end());
        mean_gain[j] = std::accumulate(gains[j].begin(), gains[j].end(), 0.0) / static_cast<double>(tables.size());
        chosen.push_back(j);
    }
    require(!chosen.empty(), ErrorCode::EmptyIntersection,
            "top-" + std::to_string(top_k) + " descriptor sets do not intersect");
    std::stable_sort(chosen.begin(), chosen.end(),
                     [&](std::size_t a, std::size_t b) { return mean_gain[a] > mean_gain[b]; });
    std::vector<std::string> out;
    for (std::size_t j : chosen) out.push_back(feature_names[j]);
    return out;
}

std::vector<std::string> select_descriptors(std::span<const GbdtModel> models, int top_k) {
    require(!models.empty(), ErrorCode::EmptyInput, "no models");
    std::vector<std::vector<FeatureGain>> tables;
    for (const auto& m : models) {
        require(m.feature_names == models.front().feature_names, ErrorCode::FeatureMismatch,
                "models were trained on different features");
        tables.push_back(feature_importance(m));
    }
    return select_descriptors(tables, models.front().feature_names, top_k);
}

Histogram residual_histogram(std::span<const double> predicted, std::span<const double> reference, int n_bins,
                             std::optional<std::pair<double, double>> range) {
    require(predicted.size() == reference.size(), ErrorCode::LengthMismatch,
            "predicted and reference differ in length");
    require(n_bins >= 1, ErrorCode::InvalidArgument, "n_bins must be >= 1");
    std::vector<double> r(predicted.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = predicted[i] - reference[i];

    double lo = 0.0, hi = 0.0;
    if (range) {
        std::tie(lo, hi) = *range;
        require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, ErrorCode::InvalidArgument,
                "histogram range must satisfy lo < hi");
    } else {
        if (!r.empty()) {
            const auto [mn, mx] = std::minmax_element(r.begin(), r.end());
            lo = *mn;
            hi = *mx;
        }
        if (!(lo < hi)) {
            lo -= 0.5;
            hi += 0.5;
        }
    }

    Histogram h;
    h.edges.resize(static_cast<std::size_t>(n_bins) + 1);
    const double width = (hi - lo) / n_bins;
    for (int b = 0; b <= n_bins; ++b) h.edges[static_cast<std::size_t>(b)] = lo + width * b;
    h.edges.back() = hi;
    h.counts.assign(static_cast<std::size_t>(n_bins), 0);
    for (double v : r) {
        int b;
        if (v < lo) {
            b = 0;
            ++h.clamped_low;
        } else if (v > hi) {
            b = n_bins - 1;
            ++h.clamped_high;
        } else {
            b = std::min(n_bins - 1, static_cast<int>(std::floor((v - lo) / width)));
            // Floating-point rounding can place v one bin off its edges.
            while (b > 0 && v < h.edges[static_cast<std::size_t>(b)]) --b;
            while (b < n_bins - 1 && v >= h.edges[static_cast<std::size_t>(b) + 1]) ++b;
        }
        ++h.counts[static_cast<std::size_t>(b)];
    }
    return h;
}

std::string histogram_csv(const Histogram& hist) {
    std::string out = "bin_lo,bin_hi,count\n";
    for (std::size_t b = 0; b < hist.counts.size(); ++b) {
        out += format_double(hist.edges[b]) + "," + format_double(hist.edges[b + 1]) + "," +
               std::to_string(hist.counts[b]) + "\n";
    }
    return out;
}

UqReport build_report(const std::string& property_name, Method method, std::span<const PredictionInterval> intervals,
                      std::span<const double> observed, double target_pct) {
    require(intervals.size() == observed.size(), ErrorCode::LengthMismatch,
            "intervals and observations differ in length");
    require(!intervals.empty(), ErrorCode::EmptyInput, "no intervals");
    UqReport rep;
    rep.property_name = property_name;
    rep.method = method;
    rep.n_test = static_cast<int>(intervals.size());
    std::vector<double> centers;
    for (const auto& iv : intervals) centers.push_back(iv.center);
    rep.base_mae = mean_absolute_error(centers, observed);
    rep.error_mae = interval_error_mae(intervals, observed);
    rep.inbounds_pct = inbounds_percentage(intervals, observed);

    const Calibration cal = calibrate_scale(intervals, observed, target_pct);
    rep.scale_factor = cal.scale;
    rep.all_zero_widths = cal.all_zero_widths;
    const auto rescaled = scale_intervals(intervals, cal.scale);
    rep.rescaled_inbounds_pct = cal.inbounds_pct;
    rep.rescaled_error_mae = interval_error_mae(rescaled, observed);

    // Cross-fit: calibrate on even positions, evaluate on odd, and the reverse.
    if (intervals.size() >= 2) {
        std::vector<PredictionInterval> iv[2];
        std::vector<double> ob[2];
        for (std::size_t i = 0; i < intervals.size(); ++i) {
            iv[i % 2].push_back(intervals[i]);
            ob[i % 2].push_back(observed[i]);
        }
        double hits = 0.0;
        for (int fit = 0; fit < 2; ++fit) {
            const int eval = 1 - fit;
            const double s = calibrate_scale(iv[fit], ob[fit], target_pct).scale;
            hits += inbounds_percentage(scale_intervals(iv[eval], s), ob[eval]) / 100.0 *
                    static_cast<double>(iv[eval].size());
        }
        rep.holdout_inbounds_pct = 100.0 * hits / static_cast<double>(intervals.size());
    } else {
        rep.holdout_inbounds_pct = rep.rescaled_inbounds_pct;
    }
    return rep;
}

nlohmann::json report_to_json(const UqReport& r) {
    return {{"property", r.property_name},
            {"method", to_string(r.method)},
            {"base_mae", r.base_mae},
            {"error_mae", r.error_mae},
            {"inbounds_pct", r.inbounds_pct},
            {"scale_factor", r.scale_factor},
            {"n_test", r.n_test},
            {"rescaled_inbounds_pct", r.rescaled_inbounds_pct},
            {"rescaled_error_mae", r.rescaled_error_mae},
            {"holdout_inbounds_pct", r.holdout_inbounds_pct},
            {"all_zero_widths", r.all_zero_widths},
            {"n_clipped", r.n_clipped},
            {"n_crossings", r.n_crossings}};
}

UqReport report_from_json(const nlohmann::json& doc) {
    UqReport r;
    try {
        r.property_name = doc.at("property").get<std::string>();
        r.method = method_from_string(doc.at("method").get<std::string>());
        r.base_mae = doc.at("base_mae").get<double>();
        r.error_mae = doc.at("error_mae").get<double>();
        r.inbounds_pct = doc.at("inbounds_pct").get<double>();
        r.scale_factor = doc.at("scale_factor").get<double>();
        r.n_test = doc.at("n_test").get<int>();
        r.rescaled_inbounds_pct = doc.value("rescaled_inbounds_pct", r.inbounds_pct);
        r.rescaled_error_mae = doc.value("rescaled_error_mae", r.error_mae);
        r.holdout_inbounds_pct = doc.value("holdout_inbounds_pct", r.rescaled_inbounds_pct);
        r.all_zero_widths = doc.value("all_zero_widths", false);
        r.n_clipped = doc.value("n_clipped", 0);
        r.n_crossings = doc.value("n_crossings", 0);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("malformed report: ") + e.what());
    }
    return r;
}

std::string report_csv_header() { return "property,method,base_mae,error_mae,inbounds_pct,scale_factor,n_test"; }

std::string report_csv_row(const UqReport& r) {
    return r.property_name + "," + to_string(r.method) + "," + format_double(r.base_mae) + "," +
           format_double(r.error_mae) + "," + format_double(r.inbounds_pct) + "," + format_double(r.scale_factor) +
           "," + std::to_string(r.n_test);
}

}  // namespace uqkit
