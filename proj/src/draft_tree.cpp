#include "cast/draft_tree.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace cast {

DraftTree::DraftTree(int root_context_length, int sample_index)
    : root_context_length_(root_context_length), sample_index_(sample_index) {
    nodes_.push_back(DraftNode{});
    layers_.push_back({0});
}

const DraftNode& DraftTree::node(NodeId id) const {
    if (id < 0 || id >= size()) {
        throw std::invalid_argument("draft tree: node id out of range");
    }
    return nodes_[static_cast<std::size_t>(id)];
}

const std::vector<NodeId>& DraftTree::layer(int depth_index) const {
    if (depth_index < 0 || depth_index > depth()) {
        throw std::invalid_argument("draft tree: layer index out of range");
    }
    return layers_[static_cast<std::size_t>(depth_index)];
}

std::vector<NodeId> DraftTree::add_children(NodeId parent, std::span<const int> tokens,
                                            std::span<const double> probs) {
    const DraftNode& p = node(parent);
    if (tokens.size() != probs.size()) {
        throw std::invalid_argument("draft tree: token/probability length mismatch");
    }
    for (double q : probs) {
        if (!(q >= 0.0 && q <= 1.0)) {
            throw std::domain_error("draft tree: child probability outside [0, 1]");
        }
    }
    const int child_depth = p.depth + 1;
    const double parent_value = p.value;
    if (child_depth > depth() + 1) {
        throw std::logic_error("draft tree: parent is not in the deepest layer");
    }
    if (child_depth == depth() + 1) {
        layers_.emplace_back();
    }
    std::vector<NodeId> ids;
    ids.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        DraftNode child;
        child.token = tokens[i];
        child.parent = parent;
        child.depth = child_depth;
        child.local_prob = probs[i];
        child.value = parent_value * probs[i];
        const NodeId id = size();
        nodes_.push_back(child);
        layers_[static_cast<std::size_t>(child_depth)].push_back(id);
        ids.push_back(id);
    }
    return ids;
}

std::vector<std::pair<NodeId, double>> DraftTree::layer_values(int depth_index) const {
    const auto& ids = layer(depth_index);
    std::vector<std::pair<NodeId, double>> out;
    out.reserve(ids.size());
    for (NodeId id : ids) {
        out.emplace_back(id, nodes_[static_cast<std::size_t>(id)].value);
    }
    // layer lists are already in creation order, so a stable sort gives the
    // earlier-first tie rule
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return out;
}

std::vector<int> DraftTree::path_tokens(NodeId id) const {
    std::vector<int> path;
    for (NodeId cur = id; cur != root(); cur = node(cur).parent) {
        path.push_back(node(cur).token);
    }
    std::reverse(path.begin(), path.end());
    return path;
}

bool DraftTree::validate_subtree(std::span<const NodeId> selected) const {
    std::vector<char> in_set(static_cast<std::size_t>(size()), 0);
    for (NodeId id : selected) {
        if (id < 0 || id >= size()) {
            return false;
        }
        in_set[static_cast<std::size_t>(id)] = 1;
    }
    for (NodeId id : selected) {
        const NodeId parent = nodes_[static_cast<std::size_t>(id)].parent;
        if (id == root()) {
            continue;
        }
        if (parent != root() && !in_set[static_cast<std::size_t>(parent)]) {
            return false;
        }
    }
    return true;
}

std::string DraftTree::to_dot() const {
    std::ostringstream os;
    os << "digraph draft {\n";
    for (NodeId id = 0; id < size(); ++id) {
        const DraftNode& n = nodes_[static_cast<std::size_t>(id)];
        os << "  n" << id << " [label=\"" << (id == root() ? -1 : n.token) << ":" << n.value
           << "\"];\n";
        if (id != root()) {
            os << "  n" << n.parent << " -> n" << id << ";\n";
        }
    }
    os << "}\n";
    return os.str();
}

LinearizedDraft linearize(const DraftTree& tree, std::span<const NodeId> selected) {
    if (!tree.validate_subtree(selected)) {
        throw std::logic_error("linearize: selection is not a valid subtree");
    }
    std::vector<NodeId> order;
    order.reserve(selected.size());
    for (NodeId id : selected) {
        if (id != tree.root()) {
            order.push_back(id);
        }
    }
    std::sort(order.begin(), order.end(), [&](NodeId a, NodeId b) {
        const int da = tree.node(a).depth;
        const int db = tree.node(b).depth;
        return da != db ? da < db : a < b;
    });

    LinearizedDraft lin;
    const int n = static_cast<int>(order.size());
    lin.tokens.resize(static_cast<std::size_t>(n));
    lin.sources = order;
    lin.parents.resize(static_cast<std::size_t>(n));
    lin.depths.resize(static_cast<std::size_t>(n));
    lin.mask.assign(static_cast<std::size_t>(n),
                    std::vector<bool>(static_cast<std::size_t>(n), false));

    std::vector<int> position(static_cast<std::size_t>(tree.size()), -1);
    for (int i = 0; i < n; ++i) {
        position[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = i;
    }
    for (int i = 0; i < n; ++i) {
        const DraftNode& node = tree.node(order[static_cast<std::size_t>(i)]);
        lin.tokens[static_cast<std::size_t>(i)] = node.token;
        lin.depths[static_cast<std::size_t>(i)] = node.depth;
        const int parent_pos =
            node.parent == tree.root() ? -1 : position[static_cast<std::size_t>(node.parent)];
        lin.parents[static_cast<std::size_t>(i)] = parent_pos;
        if (parent_pos >= 0) {
            // inherit the parent's ancestor row; parents sort before children
            lin.mask[static_cast<std::size_t>(i)] = lin.mask[static_cast<std::size_t>(parent_pos)];
        }
        lin.mask[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = true;
    }
    return lin;
}

} // namespace cast
