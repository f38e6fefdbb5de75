#pragma once

#include <deque>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cast/cost_model.hpp"
#include "cast/draft_tree.hpp"
#include "cast/lm.hpp"
#include "cast/selector.hpp"

namespace cast {

// How a node emits its children during expansion.
//  - greedy_top_k: the K most probable tokens, used for temperature-0 runs.
//  - sample_without_replacement: K sequential draws, each from the draft
//    distribution renormalized over not-yet-drawn tokens. Verification needs
//    the per-draw proposal distributions to stay lossless, so they are kept
//    alongside each node.
enum class DraftStrategy { greedy_top_k, sample_without_replacement };

struct BuilderConfig {
    int top_k = 12;                      // children emitted per expanded node
    int max_depth = 13;                  // hard cap on generated layers
    int max_verify = 72;                 // cap on tokens sent to the target model
    double breadth_threshold = 2.5;      // marginal utility-per-cost floor per layer
    double depth_threshold = 2.5;        // gain-weighted utility-per-cost floor for deepening
    double rerank_threshold = 2.5;       // marginal utility-per-cost floor for verification
    int gain_buffer_capacity = 8;        // recent confidence-gain ratios kept per layer
    bool enable_breadth_pruning = true;
    bool enable_depth_pruning = true;
    bool enable_dynamic_rerank = true;
    // with breadth pruning off, route the fixed top-k count through the
    // selector equivalence construction instead of returning it directly
    bool fixed_breadth_via_equivalence = false;
    SlopeAnchorRule anchor_rule = SlopeAnchorRule::all_predecessors;

    void validate() const;
};

// Per-layer FIFO buffers of recent confidence-gain ratios, persisted across
// decode cycles within a session. A buffer starts as {1} and keeps at most
// `capacity` values, evicting oldest first.
class DepthBufferBank {
public:
    explicit DepthBufferBank(int capacity);

    double average(int layer_index) const;
    void push(int layer_index, double ratio);
    int size(int layer_index) const;
    void reset();

private:
    const std::deque<double>& buffer(int layer_index) const;
    int capacity_;
    mutable std::map<int, std::deque<double>> buffers_;
};

struct LayerStats {
    int retained = 0;        // nodes kept in this layer
    double utility = 0.0;    // cumulative utility at the retained count
    double cost = 0.0;       // normalized draft cost at the retained count
    int pool_size = 0;       // candidates before pruning (min across samples)
    int context_len = 0;     // context length the cost lookup used
};

enum class StopReason { depth_cap, gain_gate, pool_exhausted };
std::string to_string(StopReason reason);

struct ExpansionTrace {
    int shared_context_len = 0; // padded committed length the cycle started from
    std::vector<LayerStats> layers;
    StopReason stop = StopReason::depth_cap;
    int skipped_gain_records = 0; // zero-utility layers that could not record a gain
};

// Per-cycle drafting inputs. `contexts` are the committed sequences of the
// batch; `shared_context_len` is their padded common length.
struct DraftSession {
    const ModelInterface* draft_model = nullptr;
    std::span<const std::vector<int>> contexts;
    int shared_context_len = 0;
    DraftStrategy strategy = DraftStrategy::sample_without_replacement;
};

struct DraftBuild {
    std::vector<DraftTree> trees;                      // one per sample
    std::vector<std::vector<Distribution>> proposals;  // [sample][node id - 1]
    ExpansionTrace trace;

    const Distribution& proposal(int sample, NodeId id) const {
        return proposals[static_cast<std::size_t>(sample)][static_cast<std::size_t>(id) - 1];
    }
};

struct RerankResult {
    int verify_count = 0;                        // nodes each sample sends for verification
    std::vector<std::vector<NodeId>> selected;   // per-sample subtree, value-ranked
    std::vector<LinearizedDraft> linearized;
};

// True iff the gain-weighted utility-per-cost of the just-finished layer
// clears the depth threshold (always true with depth pruning disabled).
bool should_deepen(const DepthBufferBank& bank, int layer_index, double utility, double cost,
                   const BuilderConfig& cfg);

// Pushes utility_next / utility_current into the layer's buffer. A
// zero-utility layer cannot form a ratio; the push is skipped with a note on
// stderr and the function returns false.
bool record_gain(DepthBufferBank& bank, int layer_index, double utility_next,
                 double utility_current);

// Drives one drafting cycle: expansion with breadth/depth pruning, then
// cost-aware reranking. Layer widths, depth, and the verification count are
// batch-global decisions taken on batch-averaged utilities; node identities
// stay per-sample. The gain bank persists across cycles until reset_session().
class TreeBuilder {
public:
    TreeBuilder(BuilderConfig cfg, CostTable draft_costs, CostTable target_costs);

    const BuilderConfig& config() const { return cfg_; }
    const DepthBufferBank& gain_bank() const { return bank_; }
    void reset_session() { bank_.reset(); }

    // Emits children of every retained layer-(i-1) node, decides the retained
    // width n_i, prunes each sample to its own top n_i, and appends the
    // layer's stats to the trace. Returns n_i.
    int expand_layer(DraftBuild& build, const DraftSession& session, int layer_index, Rng& rng);

    DraftBuild build_draft(const DraftSession& session, Rng& rng);

    RerankResult rerank(const DraftBuild& build) const;

private:
    BuilderConfig cfg_;
    CostTable draft_costs_;
    CostTable target_costs_;
    DepthBufferBank bank_;
};

} // namespace cast
