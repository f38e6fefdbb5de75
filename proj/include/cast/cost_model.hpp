#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace cast {

enum class ModelRole { target, draft };

std::string to_string(ModelRole role);
ModelRole model_role_from_string(const std::string& s);

// Bucketed inference-time grid for one model role at one batch size.
// cost(k, n) is the measured time in milliseconds of a call that feeds n
// tokens at a context of k*bucket_width tokens. Rows are non-decreasing in n
// (monotone repair is applied at build and load time) and every cell is a
// finite positive double. Immutable after construction, so tables can be
// shared read-only across concurrent decode sessions.
class CostTable {
public:
    CostTable(ModelRole role, int batch_size, int bucket_width, int bucket_count,
              int max_tokens, std::vector<double> grid_row_major);

    ModelRole role() const { return role_; }
    int batch_size() const { return batch_size_; }
    int bucket_width() const { return bucket_width_; }
    int bucket_count() const { return bucket_count_; }
    int max_tokens() const { return max_tokens_; }

    // bucket in [1, bucket_count] covering context length c >= 0; rounds up
    // and saturates at the last bucket
    int select_bucket(int context_len) const;

    // bucket is 1-based, tokens in [1, max_tokens]
    double cost(int bucket, int tokens) const;

    // full row of the bucket covering context_len, length max_tokens
    std::vector<double> row_for_context(int context_len) const;

    const std::vector<double>& grid() const { return grid_; }

    bool same_shape(const CostTable& other) const;

private:
    ModelRole role_;
    int batch_size_;
    int bucket_width_;
    int bucket_count_;
    int max_tokens_;
    std::vector<double> grid_; // row-major bucket_count x max_tokens
};

// time in milliseconds of one call at (batch, context, tokens); must be > 0
using CostMeasurer = std::function<double(int batch, int context, int tokens)>;

// Measures every (k*L, n) grid point, aggregates repetitions by median, and
// applies monotone repair along n so jittery timings cannot yield decreasing
// cost curves.
CostTable build_table(const CostMeasurer& measure, ModelRole role, int batch_size,
                      int bucket_width, int bucket_count, int max_tokens,
                      int repetitions = 1);

// Cost of a k-token draft call relative to a single-token target call at the
// bucket covering context_len. Tables must agree on batch size and shape.
double normalized_draft_cost(const CostTable& draft, const CostTable& target,
                             int context_len, int tokens);

// Cost of a k-token target call relative to a single-token one at the same
// bucket; equals 1 at tokens == 1 and is non-decreasing in tokens.
double normalized_target_cost(const CostTable& target, int context_len, int tokens);

void save_table(const CostTable& table, const std::filesystem::path& path);
CostTable load_table(const std::filesystem::path& path);

} // namespace cast
