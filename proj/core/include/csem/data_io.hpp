#pragma once

#include <string>
#include <vector>

#include "csem/dataset.hpp"
#include "csem/estimator.hpp"

namespace csem {

/// Comma-separated values with a header row; `NA` and empty cells are
/// missing (NaN). Anything else non-numeric raises NonNumericCell.
Dataset load_csv(const std::string& path);

void write_csv(const Dataset& data, const std::string& path);

/// Keeps only rows complete on the given columns (all columns when empty).
Dataset listwise_complete(const Dataset& data, const std::vector<std::string>& columns = {});

/// z-scores every column (mean 0, SD 1 with the n-1 divisor).
Dataset zscore(const Dataset& data);

/// Sample covariance of the given columns, n-1 divisor.
SampleMoments moments_from_data(const Dataset& data, const std::vector<std::string>& columns);

/// Square covariance matrix stored as CSV with a header row naming the
/// variables; an optional leading row-name column is accepted.
SampleMoments load_covariance_csv(const std::string& path, long n);

}  // namespace csem
