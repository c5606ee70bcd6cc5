#include "pmfs/metrics.hpp"

#include <cmath>

#include "pmfs/errors.hpp"

namespace pmfs::metrics {

std::vector<double> rowwise_relative_error(const Tensor& prediction, const Tensor& reference,
                                           const std::string& label) {
    require_same_shape(prediction, reference, "relative error inputs");
    const std::size_t rows = reference.rows();
    const std::size_t cols = reference.cols();
    std::vector<double> out(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        double num = 0.0, den = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            const double r = reference(i, j);
            const double d = prediction(i, j) - r;
            num += d * d;
            den += r * r;
        }
        if (den == 0.0)
            throw MetricError("reference snapshot " + (label.empty() ? "" : label + " ") +
                              "row " + std::to_string(i) + " has zero norm");
        out[i] = 100.0 * std::sqrt(num) / std::sqrt(den);
    }
    return out;
}

double relative_error(const std::vector<Tensor>& predictions,
                      const std::vector<Tensor>& references,
                      const std::vector<std::string>& labels) {
    if (predictions.size() != references.size())
        throw ShapeError("got " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(references.size()) + " references");
    if (!labels.empty() && labels.size() != references.size())
        throw ShapeError("label count does not match the sample count");

    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t s = 0; s < references.size(); ++s) {
        const std::string label = labels.empty() ? "sample " + std::to_string(s) : labels[s];
        for (double e : rowwise_relative_error(predictions[s], references[s], label)) {
            sum += e;
            ++n;
        }
    }
    if (n == 0) throw MetricError("no snapshots to score");
    return sum / double(n);
}

double relative_error(const Tensor& prediction, const Tensor& reference) {
    return relative_error(std::vector<Tensor>{prediction}, std::vector<Tensor>{reference});
}

} // namespace pmfs::metrics
