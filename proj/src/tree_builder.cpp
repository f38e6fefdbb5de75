#include "cast/tree_builder.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace cast {

void BuilderConfig::validate() const {
    if (top_k < 1) throw std::invalid_argument("builder config: top_k must be >= 1");
    if (max_depth < 1) throw std::invalid_argument("builder config: max_depth must be >= 1");
    if (max_verify < 1) throw std::invalid_argument("builder config: max_verify must be >= 1");
    if (!(breadth_threshold > 0.0) || !(depth_threshold > 0.0) || !(rerank_threshold > 0.0)) {
        throw std::invalid_argument("builder config: thresholds must be positive");
    }
    if (gain_buffer_capacity < 1) {
        throw std::invalid_argument("builder config: gain_buffer_capacity must be >= 1");
    }
}

std::string to_string(StopReason reason) {
    switch (reason) {
        case StopReason::depth_cap: return "depth_cap";
        case StopReason::gain_gate: return "gain_gate";
        case StopReason::pool_exhausted: return "pool_exhausted";
    }
    return "unknown";
}

DepthBufferBank::DepthBufferBank(int capacity) : capacity_(capacity) {
    if (capacity < 1) {
        throw std::invalid_argument("depth buffer bank: capacity must be >= 1");
    }
}

const std::deque<double>& DepthBufferBank::buffer(int layer_index) const {
    auto it = buffers_.find(layer_index);
    if (it == buffers_.end()) {
        it = buffers_.emplace(layer_index, std::deque<double>{1.0}).first;
    }
    return it->second;
}

double DepthBufferBank::average(int layer_index) const {
    const auto& buf = buffer(layer_index);
    return std::accumulate(buf.begin(), buf.end(), 0.0) / static_cast<double>(buf.size());
}

void DepthBufferBank::push(int layer_index, double ratio) {
    auto& buf = buffers_.try_emplace(layer_index, std::deque<double>{1.0}).first->second;
    buf.push_back(ratio);
    while (static_cast<int>(buf.size()) > capacity_) {
        buf.pop_front();
    }
}

int DepthBufferBank::size(int layer_index) const {
    return static_cast<int>(buffer(layer_index).size());
}

void DepthBufferBank::reset() { buffers_.clear(); }

bool should_deepen(const DepthBufferBank& bank, int layer_index, double utility, double cost,
                   const BuilderConfig& cfg) {
    if (!cfg.enable_depth_pruning) {
        return true;
    }
    if (!(cost > 0.0)) {
        throw std::logic_error("should_deepen: non-positive layer cost");
    }
    return bank.average(layer_index) * utility / cost >= cfg.depth_threshold;
}

bool record_gain(DepthBufferBank& bank, int layer_index, double utility_next,
                 double utility_current) {
    if (!(utility_current > 0.0)) {
        std::fprintf(stderr,
                     "tree builder: layer %d has zero utility, gain record skipped\n",
                     layer_index);
        return false;
    }
    bank.push(layer_index, utility_next / utility_current);
    return true;
}

TreeBuilder::TreeBuilder(BuilderConfig cfg, CostTable draft_costs, CostTable target_costs)
    : cfg_(cfg),
      draft_costs_(std::move(draft_costs)),
      target_costs_(std::move(target_costs)),
      bank_(cfg.gain_buffer_capacity) {
    cfg_.validate();
    if (draft_costs_.role() != ModelRole::draft || target_costs_.role() != ModelRole::target) {
        throw std::invalid_argument("tree builder: cost tables passed with swapped roles");
    }
    if (!draft_costs_.same_shape(target_costs_)) {
        throw std::invalid_argument("tree builder: draft and target cost tables disagree on shape");
    }
    if (cfg_.max_verify > target_costs_.max_tokens()) {
        throw std::invalid_argument("tree builder: max_verify exceeds the cost table token range");
    }
}

namespace {

struct Candidate {
    NodeId parent = k_no_node;
    int token = -1;
    double local_prob = 0.0;
    double value = 0.0;
    int proposal_index = -1; // into the per-sample scratch proposal pool
};

// Emits up to `count` children of one node. Sampling without replacement
// keeps, per child, the exact distribution it was drawn from; verification
// replays those proposals to preserve the target distribution.
void emit_children(const Distribution& base, DraftStrategy strategy, int count, double parent_value,
                   NodeId parent, Rng& rng, std::vector<Candidate>& pool,
                   std::vector<Distribution>& proposal_pool) {
    if (strategy == DraftStrategy::greedy_top_k) {
        std::vector<int> order(static_cast<std::size_t>(base.size()));
        std::iota(order.begin(), order.end(), 0);
        const int take = std::min(count, base.size());
        std::partial_sort(order.begin(), order.begin() + take, order.end(), [&](int a, int b) {
            const double pa = base.prob(a);
            const double pb = base.prob(b);
            return pa != pb ? pa > pb : a < b;
        });
        proposal_pool.push_back(base);
        const int proposal_index = static_cast<int>(proposal_pool.size()) - 1;
        for (int s = 0; s < take; ++s) {
            const int token = order[static_cast<std::size_t>(s)];
            pool.push_back({parent, token, base.prob(token), parent_value * base.prob(token),
                            proposal_index});
        }
        return;
    }

    std::vector<double> remaining = base.probs();
    double mass = 1.0;
    for (int s = 0; s < count; ++s) {
        if (mass <= 1e-12) {
            break; // support exhausted
        }
        std::vector<double> normalized = remaining;
        for (double& v : normalized) {
            v /= mass;
        }
        Distribution proposal(std::move(normalized));
        const int token = proposal.sample(rng);
        proposal_pool.push_back(std::move(proposal));
        pool.push_back({parent, token, base.prob(token), parent_value * base.prob(token),
                        static_cast<int>(proposal_pool.size()) - 1});
        mass -= remaining[static_cast<std::size_t>(token)];
        remaining[static_cast<std::size_t>(token)] = 0.0;
    }
}

} // namespace

int TreeBuilder::expand_layer(DraftBuild& build, const DraftSession& session, int layer_index,
                              Rng& rng) {
    const int batch = static_cast<int>(build.trees.size());
    if (batch == 0 || session.draft_model == nullptr) {
        throw std::invalid_argument("expand_layer: empty batch or missing draft model");
    }

    // context charged for this layer: the padded committed length plus every
    // node already drafted in earlier layers
    int context_len = session.shared_context_len;
    for (const LayerStats& s : build.trace.layers) {
        context_len += s.retained;
    }

    std::vector<std::vector<Candidate>> pools(static_cast<std::size_t>(batch));
    std::vector<std::vector<Distribution>> proposal_pools(static_cast<std::size_t>(batch));
    int min_pool = 0;
    for (int j = 0; j < batch; ++j) {
        DraftTree& tree = build.trees[static_cast<std::size_t>(j)];
        const auto& context = session.contexts[static_cast<std::size_t>(j)];
        for (NodeId parent : tree.layer(layer_index - 1)) {
            std::vector<int> sequence = context;
            const std::vector<int> path = tree.path_tokens(parent);
            sequence.insert(sequence.end(), path.begin(), path.end());
            const Distribution base = session.draft_model->next_distribution(sequence);
            emit_children(base, session.strategy, cfg_.top_k, tree.node(parent).value, parent, rng,
                          pools[static_cast<std::size_t>(j)],
                          proposal_pools[static_cast<std::size_t>(j)]);
        }
        const int pool_size = static_cast<int>(pools[static_cast<std::size_t>(j)].size());
        min_pool = j == 0 ? pool_size : std::min(min_pool, pool_size);
    }
    if (min_pool == 0) {
        throw std::logic_error("expand_layer: a sample produced an empty candidate pool");
    }

    // value-descending candidate order per sample; pool order breaks ties
    std::vector<std::vector<int>> ranked(static_cast<std::size_t>(batch));
    std::vector<std::vector<double>> sorted_values(static_cast<std::size_t>(batch));
    for (int j = 0; j < batch; ++j) {
        const auto& pool = pools[static_cast<std::size_t>(j)];
        auto& order = ranked[static_cast<std::size_t>(j)];
        order.resize(pool.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return pool[static_cast<std::size_t>(a)].value >
                                                    pool[static_cast<std::size_t>(b)].value; });
        auto& values = sorted_values[static_cast<std::size_t>(j)];
        values.reserve(pool.size());
        for (int idx : order) {
            values.push_back(pool[static_cast<std::size_t>(idx)].value);
        }
    }

    const int selector_len = std::min(min_pool, draft_costs_.max_tokens());
    const std::vector<double> utilities =
        cumulative_utility_prefix(std::span<const std::vector<double>>(sorted_values),
                                  selector_len);
    std::vector<double> costs(static_cast<std::size_t>(selector_len));
    for (int k = 1; k <= selector_len; ++k) {
        costs[static_cast<std::size_t>(k - 1)] =
            normalized_draft_cost(draft_costs_, target_costs_, context_len, k);
    }

    int retained;
    if (cfg_.enable_breadth_pruning) {
        retained = max_valid_index({utilities, costs, cfg_.breadth_threshold}, cfg_.anchor_rule);
    } else if (cfg_.fixed_breadth_via_equivalence) {
        retained = eagle_equivalence_check(std::span<const std::vector<double>>(sorted_values),
                                           std::min(cfg_.top_k, selector_len), 1.0, 0.0);
    } else {
        retained = std::min(cfg_.top_k, selector_len);
    }

    for (int j = 0; j < batch; ++j) {
        const auto& pool = pools[static_cast<std::size_t>(j)];
        const auto& proposal_pool = proposal_pools[static_cast<std::size_t>(j)];
        std::vector<int> keep(ranked[static_cast<std::size_t>(j)].begin(),
                              ranked[static_cast<std::size_t>(j)].begin() + retained);
        // insertion in pool order keeps sibling creation order equal to the
        // drafting order, which tree verification relies on
        std::sort(keep.begin(), keep.end());
        DraftTree& tree = build.trees[static_cast<std::size_t>(j)];
        auto& proposals = build.proposals[static_cast<std::size_t>(j)];
        for (int idx : keep) {
            const Candidate& cand = pool[static_cast<std::size_t>(idx)];
            tree.add_children(cand.parent, std::span<const int>(&cand.token, 1),
                              std::span<const double>(&cand.local_prob, 1));
            proposals.push_back(proposal_pool[static_cast<std::size_t>(cand.proposal_index)]);
        }
    }

    LayerStats stats;
    stats.retained = retained;
    stats.utility = utilities[static_cast<std::size_t>(retained - 1)];
    stats.cost = costs[static_cast<std::size_t>(retained - 1)];
    stats.pool_size = min_pool;
    stats.context_len = context_len;
    build.trace.layers.push_back(stats);
    return retained;
}

DraftBuild TreeBuilder::build_draft(const DraftSession& session, Rng& rng) {
    if (session.contexts.empty()) {
        throw std::invalid_argument("build_draft: empty batch");
    }
    DraftBuild build;
    build.trace.shared_context_len = session.shared_context_len;
    for (std::size_t j = 0; j < session.contexts.size(); ++j) {
        build.trees.emplace_back(static_cast<int>(session.contexts[j].size()),
                                 static_cast<int>(j));
    }
    build.proposals.assign(session.contexts.size(), {});

    for (int i = 1; i <= cfg_.max_depth; ++i) {
        expand_layer(build, session, i, rng);
        if (i >= 2) {
            const LayerStats& prev = build.trace.layers[static_cast<std::size_t>(i - 2)];
            const LayerStats& curr = build.trace.layers[static_cast<std::size_t>(i - 1)];
            if (!record_gain(bank_, i - 1, curr.utility, prev.utility)) {
                ++build.trace.skipped_gain_records;
            }
        }
        const LayerStats& curr = build.trace.layers.back();
        if (i == cfg_.max_depth) {
            build.trace.stop = StopReason::depth_cap;
            break;
        }
        if (!should_deepen(bank_, i, curr.utility, curr.cost, cfg_)) {
            build.trace.stop = StopReason::gain_gate;
            break;
        }
    }
    return build;
}

RerankResult TreeBuilder::rerank(const DraftBuild& build) const {
    const int batch = static_cast<int>(build.trees.size());
    if (batch == 0 || build.trace.layers.empty()) {
        throw std::logic_error("rerank: expansion has not run");
    }
    int total_nodes = 0;
    for (const LayerStats& s : build.trace.layers) {
        total_nodes += s.retained;
    }
    const int candidate_count = std::min(total_nodes, cfg_.max_verify);

    std::vector<std::vector<double>> sorted_values(static_cast<std::size_t>(batch));
    std::vector<std::vector<NodeId>> ranked_nodes(static_cast<std::size_t>(batch));
    for (int j = 0; j < batch; ++j) {
        const DraftTree& tree = build.trees[static_cast<std::size_t>(j)];
        auto& order = ranked_nodes[static_cast<std::size_t>(j)];
        order.resize(static_cast<std::size_t>(tree.size()) - 1);
        std::iota(order.begin(), order.end(), 1); // node ids, root excluded
        std::stable_sort(order.begin(), order.end(), [&](NodeId a, NodeId b) {
            return tree.node(a).value > tree.node(b).value;
        });
        auto& values = sorted_values[static_cast<std::size_t>(j)];
        values.reserve(order.size());
        for (NodeId id : order) {
            values.push_back(tree.node(id).value);
        }
    }

    int verify_count = candidate_count;
    if (cfg_.enable_dynamic_rerank) {
        SelectorInput input;
        input.utilities = cumulative_utility_prefix(
            std::span<const std::vector<double>>(sorted_values), candidate_count);
        input.costs.resize(static_cast<std::size_t>(candidate_count));
        for (int k = 1; k <= candidate_count; ++k) {
            input.costs[static_cast<std::size_t>(k - 1)] =
                normalized_target_cost(target_costs_, build.trace.shared_context_len, k);
        }
        input.threshold = cfg_.rerank_threshold;
        verify_count = max_valid_index(input, cfg_.anchor_rule);
    }

    RerankResult result;
    result.verify_count = verify_count;
    result.selected.reserve(static_cast<std::size_t>(batch));
    result.linearized.reserve(static_cast<std::size_t>(batch));
    for (int j = 0; j < batch; ++j) {
        const DraftTree& tree = build.trees[static_cast<std::size_t>(j)];
        std::vector<NodeId> selected(
            ranked_nodes[static_cast<std::size_t>(j)].begin(),
            ranked_nodes[static_cast<std::size_t>(j)].begin() + verify_count);
        if (!tree.validate_subtree(selected)) {
            throw std::logic_error("rerank: selection is not ancestor-closed");
        }
        result.linearized.push_back(linearize(tree, selected));
        result.selected.push_back(std::move(selected));
    }
    return result;
}

} // namespace cast
