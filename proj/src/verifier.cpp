#include "cast/verifier.hpp"

#include <algorithm>
#include <stdexcept>

namespace cast {

bool accept_token(double target_prob, double draft_prob, double draw) {
    if (!(draft_prob > 0.0)) {
        throw std::logic_error("accept_token: drafted token has zero draft probability");
    }
    if (target_prob < 0.0) {
        throw std::logic_error("accept_token: negative target probability");
    }
    return draw <= std::min(1.0, target_prob / draft_prob);
}

Distribution residual(const Distribution& target, const Distribution& draft) {
    if (target.size() != draft.size()) {
        throw std::invalid_argument("residual: distribution size mismatch");
    }
    std::vector<double> rest(static_cast<std::size_t>(target.size()));
    double mass = 0.0;
    for (int i = 0; i < target.size(); ++i) {
        const double v = std::max(0.0, target.prob(i) - draft.prob(i));
        rest[static_cast<std::size_t>(i)] = v;
        mass += v;
    }
    if (mass <= 0.0) {
        return target;
    }
    for (double& v : rest) {
        v /= mass;
    }
    return Distribution(std::move(rest));
}

VerifyResult verify_chain(std::span<const int> draft_tokens,
                          std::span<const Distribution> draft_dists,
                          std::span<const Distribution> target_dists, Rng& rng) {
    const std::size_t d = draft_tokens.size();
    if (draft_dists.size() != d || target_dists.size() != d + 1) {
        throw std::logic_error("verify_chain: input length mismatch");
    }
    VerifyResult result;
    for (std::size_t i = 0; i < d; ++i) {
        const int token = draft_tokens[i];
        const double p = target_dists[i].prob(token);
        const double q = draft_dists[i].prob(token);
        const double u = rng.uniform();
        const bool ok = accept_token(p, q, u);
        result.log.push_back({static_cast<int>(i), token, p, q, u, ok});
        if (!ok) {
            result.extra_token = residual(target_dists[i], draft_dists[i]).sample(rng);
            result.accept_length = static_cast<int>(result.accepted_tokens.size());
            return result;
        }
        result.accepted_tokens.push_back(token);
        result.accepted_positions.push_back(static_cast<int>(i));
    }
    result.all_accepted = true;
    result.extra_token = target_dists[d].sample(rng);
    result.accept_length = static_cast<int>(result.accepted_tokens.size());
    return result;
}

namespace {

std::vector<std::vector<int>> children_by_position(const LinearizedDraft& draft) {
    // children of the root live under index 0; node i's under index i + 1
    std::vector<std::vector<int>> children(static_cast<std::size_t>(draft.size()) + 1);
    for (int i = 0; i < draft.size(); ++i) {
        children[static_cast<std::size_t>(draft.parents[static_cast<std::size_t>(i)] + 1)]
            .push_back(i);
    }
    return children;
}

} // namespace

VerifyResult verify_tree(const LinearizedDraft& draft,
                         std::span<const Distribution> draft_dists,
                         std::span<const Distribution> target_dists, Rng& rng) {
    const std::size_t d = static_cast<std::size_t>(draft.size());
    if (draft_dists.size() != d || target_dists.size() != d + 1) {
        throw std::logic_error("verify_tree: input length mismatch");
    }
    const auto children = children_by_position(draft);

    VerifyResult result;
    int current = -1; // -1 = root
    Distribution remaining = target_dists[0];
    while (true) {
        const auto& kids = children[static_cast<std::size_t>(current + 1)];
        bool descended = false;
        for (int child : kids) {
            const int token = draft.tokens[static_cast<std::size_t>(child)];
            const Distribution& proposal = draft_dists[static_cast<std::size_t>(child)];
            const double p = remaining.prob(token);
            const double q = proposal.prob(token);
            const double u = rng.uniform();
            const bool ok = accept_token(p, q, u);
            result.log.push_back({child, token, p, q, u, ok});
            if (ok) {
                result.accepted_tokens.push_back(token);
                result.accepted_positions.push_back(child);
                current = child;
                remaining = target_dists[static_cast<std::size_t>(child) + 1];
                descended = true;
                break;
            }
            remaining = residual(remaining, proposal);
        }
        if (!descended) {
            // leaf reached (bonus) or every child rejected (correction)
            result.all_accepted = kids.empty();
            result.extra_token = remaining.sample(rng);
            result.accept_length = static_cast<int>(result.accepted_tokens.size());
            return result;
        }
    }
}

VerifyResult greedy_verify_chain(std::span<const int> draft_tokens,
                                 std::span<const Distribution> target_dists) {
    if (target_dists.size() != draft_tokens.size() + 1) {
        throw std::logic_error("greedy_verify_chain: input length mismatch");
    }
    VerifyResult result;
    for (std::size_t i = 0; i < draft_tokens.size(); ++i) {
        const int best = target_dists[i].argmax();
        const bool ok = draft_tokens[i] == best;
        result.log.push_back({static_cast<int>(i), draft_tokens[i],
                              target_dists[i].prob(draft_tokens[i]), 1.0, 0.0, ok});
        if (!ok) {
            result.extra_token = best;
            result.accept_length = static_cast<int>(result.accepted_tokens.size());
            return result;
        }
        result.accepted_tokens.push_back(best);
        result.accepted_positions.push_back(static_cast<int>(i));
    }
    result.all_accepted = true;
    result.extra_token = target_dists[draft_tokens.size()].argmax();
    result.accept_length = static_cast<int>(result.accepted_tokens.size());
    return result;
}

VerifyResult greedy_verify_tree(const LinearizedDraft& draft,
                                std::span<const Distribution> target_dists) {
    if (target_dists.size() != static_cast<std::size_t>(draft.size()) + 1) {
        throw std::logic_error("greedy_verify_tree: input length mismatch");
    }
    const auto children = children_by_position(draft);

    VerifyResult result;
    int current = -1;
    while (true) {
        const int best = target_dists[static_cast<std::size_t>(current + 1)].argmax();
        const auto& kids = children[static_cast<std::size_t>(current + 1)];
        int matched = -1;
        for (int child : kids) {
            const int token = draft.tokens[static_cast<std::size_t>(child)];
            const bool ok = token == best;
            result.log.push_back(
                {child, token, target_dists[static_cast<std::size_t>(current + 1)].prob(token),
                 1.0, 0.0, ok});
            if (ok) {
                matched = child;
                break;
            }
        }
        if (matched < 0) {
            result.all_accepted = kids.empty();
            result.extra_token = best;
            result.accept_length = static_cast<int>(result.accepted_tokens.size());
            return result;
        }
        result.accepted_tokens.push_back(best);
        result.accepted_positions.push_back(matched);
        current = matched;
    }
}

} // namespace cast
