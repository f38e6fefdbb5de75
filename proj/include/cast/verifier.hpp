#pragma once

#include <span>
#include <vector>

#include "cast/distribution.hpp"
#include "cast/draft_tree.hpp"
#include "cast/random.hpp"

namespace cast {

// One accept/reject decision with the uniform draw that produced it, kept for
// replay and debugging.
struct AcceptanceEvent {
    int position = -1; // linearized position (or chain index)
    int token = -1;
    double target_prob = 0.0;
    double draft_prob = 0.0;
    double draw = 0.0;
    bool accepted = false;
};

struct VerifyResult {
    std::vector<int> accepted_tokens;   // accepted drafted tokens, root-descending
    std::vector<int> accepted_positions; // their linearized positions (chain: indices)
    int extra_token = -1;               // bonus (all accepted) or correction (after a rejection)
    bool all_accepted = false;          // true when extra_token is a bonus
    int accept_length = 0;              // accepted_tokens.size()
    std::vector<AcceptanceEvent> log;

    // every committed token of the cycle, in order
    std::vector<int> committed() const {
        std::vector<int> out = accepted_tokens;
        out.push_back(extra_token);
        return out;
    }
};

// u <= min(1, p/q); requires q > 0 since a drafted token always has positive
// draft probability.
bool accept_token(double target_prob, double draft_prob, double draw);

// norm(max(0, p - q)). When the positive part has no mass (p == q up to
// floating point) the target itself is returned; the rejection that would
// consume this branch has probability zero and the fallback only guards
// against round-off.
Distribution residual(const Distribution& target, const Distribution& draft);

// Sequential chain verification. draft_dists[i] is the distribution the i-th
// drafted token was sampled from; target_dists has one extra trailing entry
// supplying the bonus distribution after a fully accepted chain.
VerifyResult verify_chain(std::span<const int> draft_tokens,
                          std::span<const Distribution> draft_dists,
                          std::span<const Distribution> target_dists, Rng& rng);

// Tree verification by multi-round rejection sampling. Walks from the root;
// at each node its children are tried in position order (which linearize()
// makes the drafting order). A rejected child folds its proposal distribution
// out of the node's remaining target mass; an accepted child moves the walk
// down. Exhausting a node's children commits a correction sample from the
// final residual; reaching a leaf commits a bonus sample.
//
// draft_dists[i] must be the proposal distribution position i's token was
// actually drawn from at drafting time (i.e. already adjusted for its
// earlier-drawn siblings, selected or not). target_dists[0] is the
// distribution at the committed context and target_dists[i + 1] the one after
// position i's path. Under those inputs the committed sequence is distributed
// exactly as target-only sampling.
VerifyResult verify_tree(const LinearizedDraft& draft,
                         std::span<const Distribution> draft_dists,
                         std::span<const Distribution> target_dists, Rng& rng);

// Greedy (temperature-0) counterparts: a drafted token is accepted iff it
// equals the target argmax at its position, and the extra token is always
// that argmax. Committed output is token-identical to greedy target decoding.
VerifyResult greedy_verify_chain(std::span<const int> draft_tokens,
                                 std::span<const Distribution> target_dists);
VerifyResult greedy_verify_tree(const LinearizedDraft& draft,
                                std::span<const Distribution> target_dists);

} // namespace cast
