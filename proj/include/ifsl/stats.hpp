#ifndef IFSL_STATS_HPP
#define IFSL_STATS_HPP

#include <cmath>
#include <span>
#include <string>

#include "error.hpp"

namespace ifsl {

    // Mean and normal-approximation 95% half-width, both in percent.
    struct Interval {
        double mean{0.0};
        double ci95{0.0};
    };

    // Values are fractions in [0, 1]; the standard deviation uses the E - 1 denominator.
    [[nodiscard]] inline Interval confidence_interval(std::span<const double> values)
    {
        if (values.size() < 2) {
            throw ValidationError("a confidence interval needs at least two episodes, got " + std::to_string(values.size()));
        }
        const auto count = static_cast<double>(values.size());
        double mean = 0.0;
        for (const double v : values) {
            mean += v;
        }
        mean /= count;
        double squares = 0.0;
        for (const double v : values) {
            squares += (v - mean) * (v - mean);
        }
        const double sd = std::sqrt(squares / (count - 1.0));
        return {100.0 * mean, 100.0 * 1.96 * sd / std::sqrt(count)};
    }

}

#endif // IFSL_STATS_HPP
