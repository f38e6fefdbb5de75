#include "cast/distribution.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cast {

namespace {
constexpr double k_norm_tolerance = 1e-9;
}

Distribution::Distribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) {
        throw std::invalid_argument("distribution: empty probability vector");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
        const double p = probs_[i];
        if (!std::isfinite(p) || p < 0.0) {
            throw std::invalid_argument("distribution: invalid probability at token " +
                                        std::to_string(i));
        }
        sum += p;
    }
    if (std::fabs(sum - 1.0) > k_norm_tolerance) {
        throw std::invalid_argument("distribution: probabilities sum to " + std::to_string(sum) +
                                    ", expected 1 within 1e-9");
    }
}

Distribution Distribution::uniform(int vocab) {
    if (vocab < 1) {
        throw std::invalid_argument("distribution: vocab must be positive");
    }
    return Distribution(std::vector<double>(static_cast<std::size_t>(vocab), 1.0 / vocab));
}

Distribution Distribution::point_mass(int vocab, int token) {
    if (vocab < 1 || token < 0 || token >= vocab) {
        throw std::invalid_argument("distribution: point mass token out of range");
    }
    std::vector<double> p(static_cast<std::size_t>(vocab), 0.0);
    p[static_cast<std::size_t>(token)] = 1.0;
    return Distribution(std::move(p));
}

int Distribution::sample(Rng& rng) const {
    const double u = rng.uniform();
    double acc = 0.0;
    int last_positive = 0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
        if (probs_[i] > 0.0) {
            last_positive = static_cast<int>(i);
        }
        acc += probs_[i];
        if (u < acc) {
            return static_cast<int>(i);
        }
    }
    // u landed in the rounding slack past the accumulated CDF
    return last_positive;
}

int Distribution::argmax() const {
    int best = 0;
    for (std::size_t i = 1; i < probs_.size(); ++i) {
        if (probs_[i] > probs_[static_cast<std::size_t>(best)]) {
            best = static_cast<int>(i);
        }
    }
    return best;
}

double total_variation(const Distribution& a, const Distribution& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("total_variation: size mismatch");
    }
    double d = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        d += std::fabs(a.prob(i) - b.prob(i));
    }
    return 0.5 * d;
}

} // namespace cast
