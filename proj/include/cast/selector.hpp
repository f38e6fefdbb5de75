#pragma once

#include <span>
#include <vector>

namespace cast {

// Which earlier indices may ground a pruning slope. `all_predecessors` is the
// contract: index j is invalidated when any earlier index i yields a marginal
// gain (u[j]-u[i])/(c[j]-c[i]) below the threshold, whether or not i itself
// survived. `marked_predecessors` restricts anchors to surviving indices and
// exists for experimentation only.
enum class SlopeAnchorRule { all_predecessors, marked_predecessors };

// Paired utility/cost prefix sequences feeding the threshold selector.
// utilities must be non-decreasing and costs non-decreasing (strictly
// increasing for the threshold to be meaningful; equal adjacent costs are
// tolerated and never prune).
struct SelectorInput {
    std::vector<double> utilities;
    std::vector<double> costs;
    double threshold = 0.0;
};

// Mean over samples of the sum of each sample's k best scores. Every list
// must be sorted descending and at least k long.
double cumulative_utility(std::span<const std::vector<double>> values_per_sample, int k);

// Convenience: cumulative_utility for k = 1..limit in one pass.
std::vector<double> cumulative_utility_prefix(std::span<const std::vector<double>> values_per_sample,
                                              int limit);

// Largest index (1-based) whose marginal utility per unit cost never falls
// below the threshold against any anchor allowed by the rule. Index 1 is
// unconditionally valid, so the result is always in [1, n].
int max_valid_index(const SelectorInput& input,
                    SlopeAnchorRule rule = SlopeAnchorRule::all_predecessors);

// Runs the selector with costs lambda*j + delta and the threshold derived
// from the batch-mean K-th score; with descending distinct scores the result
// is exactly K, reproducing fixed top-K retention as a special case.
int eagle_equivalence_check(std::span<const std::vector<double>> values_per_sample, int top_k,
                            double lambda, double delta);

} // namespace cast
