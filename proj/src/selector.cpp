#include "cast/selector.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cast {

double cumulative_utility(std::span<const std::vector<double>> values_per_sample, int k) {
    if (values_per_sample.empty()) {
        throw std::invalid_argument("cumulative_utility: no samples");
    }
    if (k < 1) {
        throw std::invalid_argument("cumulative_utility: k must be >= 1");
    }
    double total = 0.0;
    for (const auto& values : values_per_sample) {
        if (static_cast<int>(values.size()) < k) {
            throw std::invalid_argument("cumulative_utility: k = " + std::to_string(k) +
                                        " exceeds a sample list of length " +
                                        std::to_string(values.size()));
        }
        for (int s = 0; s < k; ++s) {
            total += values[static_cast<std::size_t>(s)];
        }
    }
    return total / static_cast<double>(values_per_sample.size());
}

std::vector<double> cumulative_utility_prefix(std::span<const std::vector<double>> values_per_sample,
                                              int limit) {
    if (values_per_sample.empty()) {
        throw std::invalid_argument("cumulative_utility_prefix: no samples");
    }
    if (limit < 1) {
        throw std::invalid_argument("cumulative_utility_prefix: limit must be >= 1");
    }
    const double inv_b = 1.0 / static_cast<double>(values_per_sample.size());
    std::vector<double> out(static_cast<std::size_t>(limit), 0.0);
    for (const auto& values : values_per_sample) {
        if (static_cast<int>(values.size()) < limit) {
            throw std::invalid_argument("cumulative_utility_prefix: limit exceeds a sample list");
        }
        double acc = 0.0;
        for (int s = 0; s < limit; ++s) {
            acc += values[static_cast<std::size_t>(s)];
            out[static_cast<std::size_t>(s)] += acc * inv_b;
        }
    }
    return out;
}

namespace {

void validate_input(const SelectorInput& in) {
    const std::size_t n = in.utilities.size();
    if (n == 0) {
        throw std::invalid_argument("selector: empty input");
    }
    if (in.costs.size() != n) {
        throw std::invalid_argument("selector: utility/cost length mismatch");
    }
    if (!(in.threshold > 0.0) || !std::isfinite(in.threshold)) {
        throw std::invalid_argument("selector: threshold must be a positive finite number");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(in.utilities[i]) || !std::isfinite(in.costs[i])) {
            throw std::invalid_argument("selector: non-finite entry at index " + std::to_string(i + 1));
        }
        if (i > 0 && in.utilities[i] < in.utilities[i - 1]) {
            throw std::invalid_argument("selector: utilities decrease at index " +
                                        std::to_string(i + 1));
        }
        if (i > 0 && in.costs[i] < in.costs[i - 1]) {
            throw std::invalid_argument("selector: costs decrease at index " + std::to_string(i + 1));
        }
    }
}

} // namespace

int max_valid_index(const SelectorInput& input, SlopeAnchorRule rule) {
    validate_input(input);
    const int n = static_cast<int>(input.utilities.size());
    std::vector<char> mark(static_cast<std::size_t>(n), 1);
    for (int i = 0; i < n; ++i) {
        if (rule == SlopeAnchorRule::marked_predecessors && !mark[static_cast<std::size_t>(i)]) {
            continue;
        }
        for (int j = i + 1; j < n; ++j) {
            const double dc = input.costs[static_cast<std::size_t>(j)] -
                              input.costs[static_cast<std::size_t>(i)];
            const double du = input.utilities[static_cast<std::size_t>(j)] -
                              input.utilities[static_cast<std::size_t>(i)];
            // equal costs give an undefined slope; such pairs never prune
            if (dc > 0.0 && du / dc < input.threshold) {
                mark[static_cast<std::size_t>(j)] = 0;
            }
        }
    }
    for (int j = n - 1; j >= 0; --j) {
        if (mark[static_cast<std::size_t>(j)]) {
            return j + 1;
        }
    }
    return 1; // unreachable: index 1 is never unmarked
}

int eagle_equivalence_check(std::span<const std::vector<double>> values_per_sample, int top_k,
                            double lambda, double delta) {
    if (!(lambda > 0.0)) {
        throw std::invalid_argument("eagle_equivalence_check: lambda must be positive");
    }
    if (values_per_sample.empty()) {
        throw std::invalid_argument("eagle_equivalence_check: no samples");
    }
    std::size_t min_len = values_per_sample.front().size();
    for (const auto& values : values_per_sample) {
        min_len = std::min(min_len, values.size());
    }
    const int n = static_cast<int>(min_len);
    if (top_k < 1 || top_k > n) {
        throw std::invalid_argument("eagle_equivalence_check: top_k out of range");
    }

    SelectorInput input;
    input.utilities = cumulative_utility_prefix(values_per_sample, n);
    input.costs.resize(static_cast<std::size_t>(n));
    for (int j = 1; j <= n; ++j) {
        input.costs[static_cast<std::size_t>(j - 1)] = lambda * j + delta;
    }
    double tail = 0.0;
    for (const auto& values : values_per_sample) {
        tail += values[static_cast<std::size_t>(top_k - 1)];
    }
    input.threshold = tail / (static_cast<double>(values_per_sample.size()) * lambda);
    return max_valid_index(input);
}

} // namespace cast
