#include "cast/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace cast {

std::string to_string(ModelRole role) {
    return role == ModelRole::target ? "target" : "draft";
}

ModelRole model_role_from_string(const std::string& s) {
    if (s == "target") return ModelRole::target;
    if (s == "draft") return ModelRole::draft;
    throw std::invalid_argument("cost table: unknown role '" + s + "'");
}

namespace {

void check_shape_params(int batch_size, int bucket_width, int bucket_count, int max_tokens) {
    if (batch_size < 1) throw std::invalid_argument("cost table: batch_size must be positive");
    if (bucket_width < 1) throw std::invalid_argument("cost table: bucket_width must be positive");
    if (bucket_count < 1) throw std::invalid_argument("cost table: bucket_count must be positive");
    if (max_tokens < 1) throw std::invalid_argument("cost table: max_tokens must be positive");
}

// running maximum along each row; keeps cells positive and rows non-decreasing
void monotone_repair(std::vector<double>& grid, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        double running = 0.0;
        for (int c = 0; c < cols; ++c) {
            double& cell = grid[static_cast<std::size_t>(r) * cols + c];
            running = std::max(running, cell);
            cell = running;
        }
    }
}

} // namespace

CostTable::CostTable(ModelRole role, int batch_size, int bucket_width, int bucket_count,
                     int max_tokens, std::vector<double> grid_row_major)
    : role_(role),
      batch_size_(batch_size),
      bucket_width_(bucket_width),
      bucket_count_(bucket_count),
      max_tokens_(max_tokens),
      grid_(std::move(grid_row_major)) {
    check_shape_params(batch_size_, bucket_width_, bucket_count_, max_tokens_);
    const std::size_t expected =
        static_cast<std::size_t>(bucket_count_) * static_cast<std::size_t>(max_tokens_);
    if (grid_.size() != expected) {
        throw std::invalid_argument("cost table: grid has " + std::to_string(grid_.size()) +
                                    " cells, expected " + std::to_string(expected));
    }
    for (std::size_t i = 0; i < grid_.size(); ++i) {
        if (!std::isfinite(grid_[i]) || grid_[i] <= 0.0) {
            throw std::invalid_argument("cost table: non-positive cell at bucket " +
                                        std::to_string(i / max_tokens_ + 1) + ", tokens " +
                                        std::to_string(i % max_tokens_ + 1));
        }
    }
    monotone_repair(grid_, bucket_count_, max_tokens_);
}

int CostTable::select_bucket(int context_len) const {
    const int c = std::max(context_len, 0);
    return std::min(c / bucket_width_, bucket_count_ - 1) + 1;
}

double CostTable::cost(int bucket, int tokens) const {
    if (bucket < 1 || bucket > bucket_count_) {
        throw std::invalid_argument("cost table: bucket " + std::to_string(bucket) +
                                    " out of range [1, " + std::to_string(bucket_count_) + "]");
    }
    if (tokens < 1 || tokens > max_tokens_) {
        throw std::invalid_argument("cost table: token count " + std::to_string(tokens) +
                                    " out of range [1, " + std::to_string(max_tokens_) + "]");
    }
    return grid_[static_cast<std::size_t>(bucket - 1) * max_tokens_ + (tokens - 1)];
}

std::vector<double> CostTable::row_for_context(int context_len) const {
    const int bucket = select_bucket(context_len);
    const auto begin = grid_.begin() + static_cast<std::ptrdiff_t>(bucket - 1) * max_tokens_;
    return std::vector<double>(begin, begin + max_tokens_);
}

bool CostTable::same_shape(const CostTable& other) const {
    return batch_size_ == other.batch_size_ && bucket_width_ == other.bucket_width_ &&
           bucket_count_ == other.bucket_count_ && max_tokens_ == other.max_tokens_;
}

CostTable build_table(const CostMeasurer& measure, ModelRole role, int batch_size,
                      int bucket_width, int bucket_count, int max_tokens, int repetitions) {
    check_shape_params(batch_size, bucket_width, bucket_count, max_tokens);
    if (repetitions < 1) {
        throw std::invalid_argument("cost table: repetitions must be >= 1");
    }
    std::vector<double> grid(static_cast<std::size_t>(bucket_count) * max_tokens);
    std::vector<double> samples(static_cast<std::size_t>(repetitions));
    for (int k = 1; k <= bucket_count; ++k) {
        const int context = k * bucket_width;
        for (int n = 1; n <= max_tokens; ++n) {
            for (int rep = 0; rep < repetitions; ++rep) {
                const double t = measure(batch_size, context, n);
                if (!std::isfinite(t) || t <= 0.0) {
                    throw std::runtime_error("cost table calibration: non-positive measurement at "
                                             "context " + std::to_string(context) + ", tokens " +
                                             std::to_string(n));
                }
                samples[static_cast<std::size_t>(rep)] = t;
            }
            std::sort(samples.begin(), samples.end());
            const double median = (repetitions % 2 == 1)
                ? samples[static_cast<std::size_t>(repetitions / 2)]
                : 0.5 * (samples[static_cast<std::size_t>(repetitions / 2 - 1)] +
                         samples[static_cast<std::size_t>(repetitions / 2)]);
            grid[static_cast<std::size_t>(k - 1) * max_tokens + (n - 1)] = median;
        }
    }
    return CostTable(role, batch_size, bucket_width, bucket_count, max_tokens, std::move(grid));
}

double normalized_draft_cost(const CostTable& draft, const CostTable& target,
                             int context_len, int tokens) {
    if (draft.role() != ModelRole::draft || target.role() != ModelRole::target) {
        throw std::invalid_argument("normalized_draft_cost: tables passed with swapped roles");
    }
    if (!draft.same_shape(target)) {
        throw std::invalid_argument("normalized_draft_cost: draft and target tables disagree on "
                                    "batch size or grid shape");
    }
    const int bucket = draft.select_bucket(context_len);
    return draft.cost(bucket, tokens) / target.cost(bucket, 1);
}

double normalized_target_cost(const CostTable& target, int context_len, int tokens) {
    const int bucket = target.select_bucket(context_len);
    return target.cost(bucket, tokens) / target.cost(bucket, 1);
}

void save_table(const CostTable& table, const std::filesystem::path& path) {
    nlohmann::json j;
    j["role"] = to_string(table.role());
    j["batch_size"] = table.batch_size();
    j["bucket_width"] = table.bucket_width();
    j["bucket_count"] = table.bucket_count();
    j["max_tokens"] = table.max_tokens();
    j["grid"] = table.grid();
    j["unit"] = "ms";
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cost table: cannot open '" + path.string() + "' for writing");
    }
    out << j.dump(2) << "\n";
}

CostTable load_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cost table: cannot open '" + path.string() + "'");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("cost table: malformed JSON in '" + path.string() + "': " +
                                 e.what());
    }
    for (const char* field :
         {"role", "batch_size", "bucket_width", "bucket_count", "max_tokens", "grid", "unit"}) {
        if (!j.contains(field)) {
            throw std::runtime_error("cost table: missing field '" + std::string(field) + "' in '" +
                                     path.string() + "'");
        }
    }
    if (j.at("unit").get<std::string>() != "ms") {
        throw std::runtime_error("cost table: field 'unit' must be \"ms\"");
    }
    try {
        return CostTable(model_role_from_string(j.at("role").get<std::string>()),
                         j.at("batch_size").get<int>(), j.at("bucket_width").get<int>(),
                         j.at("bucket_count").get<int>(), j.at("max_tokens").get<int>(),
                         j.at("grid").get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("cost table: bad field type in '" + path.string() + "': " +
                                 e.what());
    }
}

} // namespace cast
