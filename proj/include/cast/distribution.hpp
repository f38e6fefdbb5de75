#pragma once

#include <vector>

#include "cast/random.hpp"

namespace cast {

// Probability vector over a token vocabulary. Construction validates that
// entries are finite, non-negative, and sum to 1 within 1e-9.
class Distribution {
public:
    explicit Distribution(std::vector<double> probs);

    static Distribution uniform(int vocab);
    static Distribution point_mass(int vocab, int token);

    int size() const { return static_cast<int>(probs_.size()); }
    double prob(int token) const { return probs_[static_cast<std::size_t>(token)]; }
    const std::vector<double>& probs() const { return probs_; }

    // inverse-CDF draw; deterministic given the rng state
    int sample(Rng& rng) const;

    // ties resolved toward the lowest token index
    int argmax() const;

private:
    std::vector<double> probs_;
};

double total_variation(const Distribution& a, const Distribution& b);

} // namespace cast
