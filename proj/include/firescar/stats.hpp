#pragma once

#include <span>
#include <vector>

namespace firescar::stats {

/// Linear-interpolation quantile of already sorted data (the "type 7" rule).
double quantile_sorted(std::span<const double> sorted, double q);

/// Ranks with ties replaced by their average rank (1-based).
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman rank correlation; 0 when either side is constant or n < 2.
double spearman(std::span<const double> x, std::span<const double> y);

double mean(std::span<const double> v);

}  // namespace firescar::stats
