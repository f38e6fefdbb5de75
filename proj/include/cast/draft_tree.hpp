#pragma once

#include <span>
#include <string>
#include <vector>

namespace cast {

using NodeId = int;
inline constexpr NodeId k_no_node = -1;

struct DraftNode {
    int token = -1;            // vocabulary index; -1 for the root (committed context)
    NodeId parent = k_no_node; // k_no_node for the root
    int depth = 0;
    double local_prob = 1.0;   // draft probability of this token given its path
    double value = 1.0;        // product of local_prob along the root path
};

// Rooted candidate-token tree for one batch sample. Nodes live in an arena;
// a node's id doubles as its creation order (appends only), which is the tie
// rule everywhere values are ranked. The root represents the committed
// context and carries value 1.
class DraftTree {
public:
    DraftTree(int root_context_length, int sample_index);

    NodeId root() const { return 0; }
    int size() const { return static_cast<int>(nodes_.size()); }
    int sample_index() const { return sample_index_; }
    int root_context_length() const { return root_context_length_; }

    const DraftNode& node(NodeId id) const;

    // number of layers below the root that exist so far
    int depth() const { return static_cast<int>(layers_.size()) - 1; }
    const std::vector<NodeId>& layer(int depth_index) const;

    // Appends children of `parent` in the given order; each child's value is
    // the parent value times its probability. Probabilities outside [0, 1]
    // are rejected.
    std::vector<NodeId> add_children(NodeId parent, std::span<const int> tokens,
                                     std::span<const double> probs);

    // (node, value) pairs of one layer, value-descending, ties by creation order
    std::vector<std::pair<NodeId, double>> layer_values(int depth_index) const;

    // tokens along the root-to-node path, root excluded
    std::vector<int> path_tokens(NodeId id) const;

    // true iff every selected node's parent is the root or also selected
    bool validate_subtree(std::span<const NodeId> selected) const;

    // GraphViz dump for inspection; not a stability contract
    std::string to_dot() const;

private:
    std::vector<DraftNode> nodes_;
    std::vector<std::vector<NodeId>> layers_;
    int root_context_length_;
    int sample_index_;
};

// Flat verification view of a selected subtree. Tokens are ordered by
// (depth, creation order); mask row i admits exactly the strict ancestors of
// position i plus i itself, so a model consuming it sees each token
// conditioned on its own path only.
struct LinearizedDraft {
    std::vector<int> tokens;
    std::vector<NodeId> sources;           // originating node per position
    std::vector<int> parents;              // position of the parent, -1 when it is the root
    std::vector<int> depths;               // node depth per position
    std::vector<std::vector<bool>> mask;   // ancestor attention rows

    int size() const { return static_cast<int>(tokens.size()); }
};

// Requires validate_subtree(selected); throws std::logic_error otherwise.
LinearizedDraft linearize(const DraftTree& tree, std::span<const NodeId> selected);

} // namespace cast
