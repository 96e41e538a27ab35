#pragma once

#include "uqkit/boosting.hpp"
#include "uqkit/data.hpp"
#include "uqkit/forest.hpp"
#include "uqkit/gp.hpp"
#include "uqkit/parallel.hpp"

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace uqkit {

enum class Method { Quantile, ThreeSplitL1, ThreeSplitL2, Gp };

std::string to_string(Method method);
Method method_from_string(const std::string& name);  // quantile | threesplit-l1 | threesplit-l2 | gp

struct PredictionInterval {
    double center = 0.0;
    double half_width = 0.0;
    Method method = Method::Quantile;
    std::optional<double> raw_lower;  // quantile method only
    std::optional<double> raw_upper;
};

// ---- quantile triad -------------------------------------------------------

struct QuantileConfigs {
    GbdtConfig lower;
    GbdtConfig mid;
    GbdtConfig upper;
};

struct QuantileResult {
    std::vector<PredictionInterval> intervals;
    GbdtModel lower, mid, upper;
    int crossings = 0;  // test rows with raw_upper < raw_lower
};

// Objectives of the three configs are overwritten with Quantile(alpha_lo),
// MSE and Quantile(alpha_hi). half_width = |upper - lower| / 2.
QuantileResult quantile_intervals(const Dataset& train, const Dataset& test, double alpha_lo, double alpha_hi,
                                  const QuantileConfigs& configs = {}, Exec exec = Exec::parallel);

// ---- 3split ---------------------------------------------------------------

enum class ErrorTargetKind { L1, L2 };

using Engine = std::variant<GbdtConfig, ForestConfig>;

struct ThreeSplitResult {
    Eigen::VectorXd base_predictions;  // on the validation partition
    std::vector<PredictionInterval> intervals;
    Eigen::VectorXd error_targets;     // on the error partition
    int clipped = 0;                   // negative error predictions set to 0
    nlohmann::json base_model;
    nlohmann::json error_model;
};

// Base model on partition 0, error model on |residual| (L1) or residual^2
// (L2) over partition 1, intervals on partition 2. A GBDT engine always
// uses the MSE objective.
ThreeSplitResult threesplit_intervals(const Dataset& data, const SplitPlan& plan, ErrorTargetKind kind,
                                      const Engine& engine, Exec exec = Exec::parallel);

// ---- GP -------------------------------------------------------------------

struct GpIntervalResult {
    std::vector<PredictionInterval> intervals;
    int clipped_variances = 0;
};

// center = posterior mean, half_width = one posterior std.
GpIntervalResult gp_intervals(const GpModel& model, const Dataset& test, Exec exec = Exec::parallel);

// ---- metrics --------------------------------------------------------------

enum class InboundsMode { Symmetric, RawBounds };

// Percentage of observed values inside their interval, bounds inclusive.
double inbounds_percentage(std::span<const PredictionInterval> intervals, std::span<const double> observed,
                           InboundsMode mode = InboundsMode::Symmetric);

std::vector<PredictionInterval> scale_intervals(std::span<const PredictionInterval> intervals, double scale);

// MAE between half widths and |observed - center|.
double interval_error_mae(std::span<const PredictionInterval> intervals, std::span<const double> observed);

struct Calibration {
    double scale = 1.0;
    double inbounds_pct = 0.0;     // coverage at `scale`
    bool all_zero_widths = false;  // coverage cannot move; scale left at 1
};

// Smallest s > 0 whose symmetric coverage is closest to target_pct.
Calibration calibrate_scale(std::span<const PredictionInterval> intervals, std::span<const double> observed,
                            double target_pct = 68.0);

// ---- descriptor selection -------------------------------------------------

// Intersection of each table's top_k features (positive gain only), ordered by
// mean gain across tables, then by position in feature_names.
std::vector<std::string> select_descriptors(std::span<const std::vector<FeatureGain>> tables,
                                            const std::vector<std::string>& feature_names, int top_k = 50);
std::vector<std::string> select_descriptors(std::span<const GbdtModel> models, int top_k = 50);

// ---- histogram ------------------------------------------------------------

struct Histogram {
    std::vector<double> edges;  // n_bins + 1, uniform
    std::vector<long> counts;
    long clamped_low = 0;       // values below edges.front() placed in bin 0
    long clamped_high = 0;      // values above edges.back() placed in the last bin
};

// Bins residual = predicted - reference. Without a range, [min, max] of the
// residuals is used (widened by 0.5 each way when degenerate).
Histogram residual_histogram(std::span<const double> predicted, std::span<const double> reference, int n_bins,
                             std::optional<std::pair<double, double>> range = std::nullopt);

std::string histogram_csv(const Histogram& hist);

// ---- report ---------------------------------------------------------------

struct UqReport {
    std::string property_name;
    Method method = Method::Quantile;
    double base_mae = 0.0;
    double error_mae = 0.0;
    double inbounds_pct = 0.0;
    double scale_factor = 1.0;
    int n_test = 0;
    double rescaled_inbounds_pct = 0.0;
    double rescaled_error_mae = 0.0;
    // Coverage when the scale is fit on one half of the test rows (alternating
    // positions) and applied to the other half, both ways.
    double holdout_inbounds_pct = 0.0;
    bool all_zero_widths = false;
    int n_clipped = 0;
    int n_crossings = 0;
};

UqReport build_report(const std::string& property_name, Method method, std::span<const PredictionInterval> intervals,
                      std::span<const double> observed, double target_pct = 68.0);

nlohmann::json report_to_json(const UqReport& report);
UqReport report_from_json(const nlohmann::json& doc);

// Header property,method,base_mae,error_mae,inbounds_pct,scale_factor,n_test.
std::string report_csv_header();
std::string report_csv_row(const UqReport& report);

}  // namespace uqkit
