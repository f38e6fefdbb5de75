#include "cast/lm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cast {

std::vector<Distribution> ModelInterface::tree_forward(std::span<const int> committed,
                                                       const LinearizedDraft& draft) const {
    std::vector<Distribution> out;
    out.reserve(static_cast<std::size_t>(draft.size()));
    std::vector<std::vector<int>> paths(static_cast<std::size_t>(draft.size()));
    for (int i = 0; i < draft.size(); ++i) {
        const int parent = draft.parents[static_cast<std::size_t>(i)];
        if (parent >= 0 && parent >= i) {
            throw std::invalid_argument("tree_forward: malformed draft, parent after child");
        }
        std::vector<int>& path = paths[static_cast<std::size_t>(i)];
        if (parent >= 0) {
            path = paths[static_cast<std::size_t>(parent)];
        }
        path.push_back(draft.tokens[static_cast<std::size_t>(i)]);
        std::vector<int> sequence(committed.begin(), committed.end());
        sequence.insert(sequence.end(), path.begin(), path.end());
        out.push_back(next_distribution(sequence));
    }
    return out;
}

TableModel::TableModel(int vocab, int order, std::uint64_t seed, double temperature)
    : vocab_(vocab), order_(order), seed_(seed), temperature_(temperature) {
    if (vocab < 2) {
        throw std::invalid_argument("table model: vocab must be >= 2");
    }
    if (order < 0) {
        throw std::invalid_argument("table model: order must be >= 0");
    }
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("table model: temperature must be positive");
    }
}

Distribution TableModel::next_distribution(std::span<const int> sequence) const {
    std::vector<int> window;
    const int take = std::min<int>(order_, static_cast<int>(sequence.size()));
    window.assign(sequence.end() - take, sequence.end());

    {
        std::lock_guard<std::mutex> lock(cache_mutex_);
        auto it = cache_.find(window);
        if (it != cache_.end()) {
            return it->second;
        }
    }

    std::uint64_t h = mix64(seed_);
    for (int token : window) {
        h = hash_combine(h, static_cast<std::uint64_t>(token) + 1);
    }
    Rng rng(h);
    std::vector<double> weights(static_cast<std::size_t>(vocab_));
    double sum = 0.0;
    for (double& w : weights) {
        const double e = -std::log(rng.uniform_pos()); // Exp(1), Dirichlet(1) after normalizing
        w = std::pow(std::max(e, 1e-12), 1.0 / temperature_);
        sum += w;
    }
    for (double& w : weights) {
        w /= sum;
    }
    Distribution dist(std::move(weights));

    std::lock_guard<std::mutex> lock(cache_mutex_);
    return cache_.emplace(std::move(window), std::move(dist)).first->second;
}

SmoothedDraft::SmoothedDraft(std::shared_ptr<const ModelInterface> target, double beta)
    : target_(std::move(target)), beta_(beta) {
    if (!target_) {
        throw std::invalid_argument("smoothed draft: null target model");
    }
    if (!(beta >= 0.0 && beta <= 1.0)) {
        throw std::invalid_argument("smoothed draft: beta must lie in [0, 1]");
    }
}

Distribution SmoothedDraft::next_distribution(std::span<const int> sequence) const {
    const Distribution base = target_->next_distribution(sequence);
    const double u = 1.0 / static_cast<double>(base.size());
    std::vector<double> mixed(static_cast<std::size_t>(base.size()));
    for (int i = 0; i < base.size(); ++i) {
        mixed[static_cast<std::size_t>(i)] = (1.0 - beta_) * base.prob(i) + beta_ * u;
    }
    return Distribution(std::move(mixed));
}

PaddedBatch pad_batch(std::span<const std::vector<int>> sequences) {
    if (sequences.empty()) {
        throw std::invalid_argument("pad_batch: empty batch");
    }
    PaddedBatch batch;
    for (const auto& seq : sequences) {
        batch.lengths.push_back(static_cast<int>(seq.size()));
        batch.padded_length = std::max(batch.padded_length, static_cast<int>(seq.size()));
    }
    for (const auto& seq : sequences) {
        std::vector<int> padded(static_cast<std::size_t>(batch.padded_length) - seq.size(),
                                k_pad_token);
        padded.insert(padded.end(), seq.begin(), seq.end());
        batch.sequences.push_back(std::move(padded));
    }
    return batch;
}

std::vector<std::vector<int>> unpad_batch(const PaddedBatch& batch) {
    std::vector<std::vector<int>> out;
    out.reserve(batch.sequences.size());
    for (std::size_t i = 0; i < batch.sequences.size(); ++i) {
        const auto& padded = batch.sequences[i];
        const int len = batch.lengths[i];
        out.emplace_back(padded.end() - len, padded.end());
    }
    return out;
}

} // namespace cast
