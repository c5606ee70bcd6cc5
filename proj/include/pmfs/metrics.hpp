#ifndef PMFS_METRICS_HPP
#define PMFS_METRICS_HPP

#include <string>
#include <vector>

#include "pmfs/tensor.hpp"

namespace pmfs::metrics {

/// Mean over snapshot rows of the relative L2 error, in percent:
/// (100/N) * sum_n |y_n - yhat_n| / |y_n|, where each row of each pair is one
/// snapshot. Optional labels name the pairs in diagnostics.
double relative_error(const std::vector<Tensor>& predictions,
                      const std::vector<Tensor>& references,
                      const std::vector<std::string>& labels = {});

/// Single-pair convenience overload.
double relative_error(const Tensor& prediction, const Tensor& reference);

/// Per-row relative errors (percent) for one prediction/reference pair.
std::vector<double> rowwise_relative_error(const Tensor& prediction, const Tensor& reference,
                                           const std::string& label = "");

} // namespace pmfs::metrics

#endif
