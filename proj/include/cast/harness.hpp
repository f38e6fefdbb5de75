#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cast/cost_model.hpp"
#include "cast/lm.hpp"
#include "cast/tree_builder.hpp"
#include "cast/verifier.hpp"

namespace cast {

enum class Method { vanilla, chain_spd, fixed_tree, eagle2_style, cast };
std::string to_string(Method method);
Method method_from_string(const std::string& s);

enum class ClockMode { simulated, wall };
std::string to_string(ClockMode mode);
ClockMode clock_mode_from_string(const std::string& s);

struct ModelSpec {
    std::string kind = "table"; // "table" | "smoothed"
    int vocab = 32;
    int order = 1;
    std::uint64_t seed = 1;
    double temperature = 1.0;
    double beta = 0.5; // smoothed kind only

    static ModelSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct PromptSpec {
    std::string kind = "synthetic"; // "synthetic" | "file"
    int count = 1;
    int length = 16;
    std::uint64_t seed = 0;
    std::string path;

    static PromptSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

// Analytic timing backend: f(B, c, n) = base + coef * (B*n)^exponent +
// context_coef * c, in milliseconds. Strictly increasing in n when coef > 0.
struct AnalyticCostSpec {
    double base = 1.0;
    double coef = 0.05;
    double exponent = 1.0;
    double context_coef = 0.0;

    double operator()(int batch, int context, int tokens) const;
    static AnalyticCostSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct CostTableSpec {
    bool analytic = true;
    AnalyticCostSpec draft_backend{0.1, 0.005, 1.0, 0.0};
    AnalyticCostSpec target_backend{1.0, 0.05, 1.0, 0.0};
    std::string draft_path;  // used when analytic == false
    std::string target_path;
    int bucket_width = 64;
    int bucket_count = 8;
    int max_tokens = 96;
    int repetitions = 1;

    static CostTableSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct RunConfig {
    ModelSpec target_model;
    ModelSpec draft_model{"smoothed"};
    BuilderConfig builder;
    int batch_size = 1;
    int temperature = 1; // 0 = greedy, 1 = sampling
    Method method = Method::cast;
    PromptSpec prompts;
    int max_new_tokens = 64;
    ClockMode clock = ClockMode::simulated;
    CostTableSpec cost_tables;
    double overhead_ms = 0.0;
    int chain_draft_len = 0; // 0 → builder.max_depth
    std::uint64_t seed = 1;

    void validate() const;
    static RunConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    static RunConfig load(const std::filesystem::path& path);
};

struct CycleRecord {
    int batch_index = 0;
    int cycle = 0;
    int context_len = 0; // padded committed length at cycle start
    double draft_ms = 0.0;
    double target_ms = 0.0;
    double overhead_ms = 0.0;
    int verified_count = 0; // tokens sent to the target model
    std::vector<int> accept_lengths;             // per sample
    std::vector<double> cumulative_probability;  // per sample, over verified nodes
    ExpansionTrace trace;                        // tree methods only

    double total_ms() const { return draft_ms + target_ms + overhead_ms; }
};

struct BatchSummary {
    int batch_index = 0;
    double method_ms = 0.0;
    double vanilla_ms = 0.0;
    double speedup = 0.0;
};

struct DecodeReport {
    nlohmann::json config;
    std::vector<CycleRecord> cycles;
    std::vector<BatchSummary> batches;
    long total_committed = 0;
    double method_ms = 0.0;
    double vanilla_ms = 0.0;
    double speedup = 1.0;
    double mean_accept_length = 0.0;
    double mean_committed_per_cycle = 0.0;

    nlohmann::json to_json() const;
    void write_cycles_csv(std::ostream& out) const;
};

// Everything one decode session needs; pointers stay owned by the caller.
struct SessionInit {
    const ModelInterface* draft_model = nullptr;
    const ModelInterface* target_model = nullptr;
    const CostTable* draft_costs = nullptr;
    const CostTable* target_costs = nullptr;
    BuilderConfig builder;
    Method method = Method::cast;
    int temperature = 1;
    ClockMode clock = ClockMode::simulated;
    double overhead_ms = 0.0;
    int chain_draft_len = 0;
};

// One batch decoding session. Cycles commit at least one token per sample
// (accepted drafts plus the bonus or correction token); the gain bank and
// rng persist across cycles and reset with the session.
class DecodeSession {
public:
    DecodeSession(const SessionInit& init, std::vector<std::vector<int>> prompts,
                  std::uint64_t seed);

    CycleRecord step();
    bool done(int max_new_tokens) const;
    int committed_count(int sample) const;
    const std::vector<std::vector<int>>& sequences() const { return sequences_; }
    std::vector<int> committed_tokens(int sample) const;

private:
    CycleRecord step_vanilla();
    CycleRecord step_chain();
    CycleRecord step_tree();
    int padded_length() const;

    SessionInit init_;
    BuilderConfig effective_builder_;
    std::optional<TreeBuilder> builder_;
    std::vector<std::vector<int>> sequences_;
    std::vector<int> prompt_lengths_;
    Rng rng_;
    int cycle_count_ = 0;
};

std::vector<std::vector<int>> make_prompts(const PromptSpec& spec, int vocab);

// Builds both tables from the analytic backend, or loads them from disk. The
// loaded tables must match the requested batch size.
std::pair<CostTable, CostTable> resolve_cost_tables(const CostTableSpec& spec, int batch_size);

struct ModelPair {
    std::shared_ptr<const ModelInterface> target;
    std::shared_ptr<const ModelInterface> draft;
};
ModelPair build_models(const ModelSpec& target_spec, const ModelSpec& draft_spec);

// Target-only decoding cost of max_new_tokens steps starting from a padded
// context of initial_len, under the simulated clock.
double simulated_vanilla_ms(const CostTable& target_costs, int initial_len, int max_new_tokens);

DecodeReport run(const RunConfig& cfg);

struct CompareRow {
    std::string label;
    DecodeReport report;
};
struct CompareReport {
    std::vector<CompareRow> rows;
    nlohmann::json to_json() const;
    void write_csv(std::ostream& out) const;
};

// Runs every labelled config on the shared workload. Configs must agree on
// prompts, models, seed, batch size, temperature, and token budget.
CompareReport compare(const std::vector<std::pair<std::string, RunConfig>>& configs);

// Convenience set for component studies: the full method, each single
// component disabled, and the fixed-tree baseline.
std::vector<std::pair<std::string, RunConfig>> ablation_variants(const RunConfig& base);

struct Correlation {
    double r = 0.0;
    bool degenerate = false; // one of the series had zero variance
};
Correlation pearson(std::span<const double> xs, std::span<const double> ys);

// Per-cycle, per-sample (cumulative probability, accept length) pairs.
void write_accept_trace_csv(const DecodeReport& report, std::ostream& out);
Correlation accept_trace_correlation(const DecodeReport& report);

struct SweepRow {
    int max_verify = 0;
    double mean_accept_length = 0.0;
    double speedup = 0.0;
};
std::vector<SweepRow> sweep_max_verify(const RunConfig& base, std::span<const int> verify_caps);
void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out);

} // namespace cast
