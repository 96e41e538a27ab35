#pragma once

#include <span>
#include <vector>

namespace uqkit {

// Linearly interpolated sample quantile (Hyndman-Fan type 7). Takes a copy
// because it partially sorts.
double empirical_quantile(std::vector<double> values, double alpha);

double mean(std::span<const double> values);

double mean_absolute_error(std::span<const double> a, std::span<const double> b);


// 1-based ranks, ties share their average rank.
std::vector<double> average_ranks(std::span<const double> values);
double pearson(std::span<const double> a, std::span<const double> b);
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace uqkit
