#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "cast/distribution.hpp"
#include "cast/draft_tree.hpp"

namespace cast {

// Autoregressive model abstraction: a next-token distribution given a token
// sequence, plus a batched view over a linearized draft where each position
// is conditioned on its ancestor path only. Implementations are deterministic
// and immutable after construction.
class ModelInterface {
public:
    virtual ~ModelInterface() = default;

    virtual int vocab_size() const = 0;
    virtual Distribution next_distribution(std::span<const int> sequence) const = 0;

    // One distribution per draft position; position i equals
    // next_distribution(committed + path-of-i tokens). Mask semantics, not
    // left-to-right semantics.
    std::vector<Distribution> tree_forward(std::span<const int> committed,
                                           const LinearizedDraft& draft) const;
};

// Deterministic synthetic model: hashes the last `order` tokens (plus a seed)
// into a Dirichlet-style distribution with full support. A temperature below
// 1 concentrates the draws, above 1 flattens them. Distributions are memoized
// per context window behind a mutex, so instances stay shareable read-only.
class TableModel : public ModelInterface {
public:
    TableModel(int vocab, int order, std::uint64_t seed, double temperature = 1.0);

    int vocab_size() const override { return vocab_; }
    Distribution next_distribution(std::span<const int> sequence) const override;

private:
    int vocab_;
    int order_;
    std::uint64_t seed_;
    double temperature_;
    mutable std::mutex cache_mutex_;
    mutable std::map<std::vector<int>, Distribution> cache_;
};

// Draft stand-in with a one-knob acceptance control: a beta-mixture of the
// target distribution and the uniform distribution. beta = 0 reproduces the
// target exactly; beta = 1 is pure noise.
class SmoothedDraft : public ModelInterface {
public:
    SmoothedDraft(std::shared_ptr<const ModelInterface> target, double beta);

    int vocab_size() const override { return target_->vocab_size(); }
    Distribution next_distribution(std::span<const int> sequence) const override;

private:
    std::shared_ptr<const ModelInterface> target_;
    double beta_;
};

inline constexpr int k_pad_token = 0;

struct PaddedBatch {
    std::vector<std::vector<int>> sequences; // left-padded to a common length
    std::vector<int> lengths;                // original lengths
    int padded_length = 0;
};

// Left-pads every sequence to the batch maximum with the reserved pad token.
PaddedBatch pad_batch(std::span<const std::vector<int>> sequences);

// Strips the padding recorded by pad_batch.
std::vector<std::vector<int>> unpad_batch(const PaddedBatch& batch);

} // namespace cast
