#include "cast/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <stdexcept>

namespace cast {

using nlohmann::json;

std::string to_string(Method method) {
    switch (method) {
        case Method::vanilla: return "vanilla";
        case Method::chain_spd: return "chain-spd";
        case Method::fixed_tree: return "fixed-tree";
        case Method::eagle2_style: return "eagle2-style";
        case Method::cast: return "cast";
    }
    return "unknown";
}

Method method_from_string(const std::string& s) {
    if (s == "vanilla") return Method::vanilla;
    if (s == "chain-spd") return Method::chain_spd;
    if (s == "fixed-tree") return Method::fixed_tree;
    if (s == "eagle2-style") return Method::eagle2_style;
    if (s == "cast") return Method::cast;
    throw std::invalid_argument("unknown method '" + s + "'");
}

std::string to_string(ClockMode mode) {
    return mode == ClockMode::simulated ? "sim" : "wall";
}

ClockMode clock_mode_from_string(const std::string& s) {
    if (s == "sim" || s == "simulated") return ClockMode::simulated;
    if (s == "wall") return ClockMode::wall;
    throw std::invalid_argument("unknown clock mode '" + s + "'");
}

namespace {

const json& require_field(const json& j, const char* key, const char* where) {
    if (!j.contains(key)) {
        throw std::invalid_argument(std::string(where) + ": missing field '" + key + "'");
    }
    return j.at(key);
}

template <typename T>
T field_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

} // namespace

ModelSpec ModelSpec::from_json(const json& j) {
    ModelSpec spec;
    spec.kind = field_or<std::string>(j, "kind", "table");
    spec.vocab = field_or<int>(j, "vocab", spec.vocab);
    spec.order = field_or<int>(j, "order", spec.order);
    spec.seed = field_or<std::uint64_t>(j, "seed", spec.seed);
    spec.temperature = field_or<double>(j, "temperature", spec.temperature);
    spec.beta = field_or<double>(j, "beta", spec.beta);
    return spec;
}

json ModelSpec::to_json() const {
    return json{{"kind", kind},   {"vocab", vocab},
                {"order", order}, {"seed", seed},
                {"temperature", temperature}, {"beta", beta}};
}

PromptSpec PromptSpec::from_json(const json& j) {
    PromptSpec spec;
    spec.kind = field_or<std::string>(j, "kind", "synthetic");
    spec.count = field_or<int>(j, "count", spec.count);
    spec.length = field_or<int>(j, "length", spec.length);
    spec.seed = field_or<std::uint64_t>(j, "seed", spec.seed);
    spec.path = field_or<std::string>(j, "path", "");
    return spec;
}

json PromptSpec::to_json() const {
    return json{{"kind", kind}, {"count", count}, {"length", length}, {"seed", seed},
                {"path", path}};
}

double AnalyticCostSpec::operator()(int batch, int context, int tokens) const {
    return base + coef * std::pow(static_cast<double>(batch) * tokens, exponent) +
           context_coef * context;
}

AnalyticCostSpec AnalyticCostSpec::from_json(const json& j) {
    AnalyticCostSpec spec;
    spec.base = field_or<double>(j, "base", spec.base);
    spec.coef = field_or<double>(j, "coef", spec.coef);
    spec.exponent = field_or<double>(j, "exponent", spec.exponent);
    spec.context_coef = field_or<double>(j, "context_coef", spec.context_coef);
    return spec;
}

json AnalyticCostSpec::to_json() const {
    return json{{"base", base}, {"coef", coef}, {"exponent", exponent},
                {"context_coef", context_coef}};
}

CostTableSpec CostTableSpec::from_json(const json& j) {
    CostTableSpec spec;
    if (j.contains("draft_path") || j.contains("target_path")) {
        spec.analytic = false;
        spec.draft_path = require_field(j, "draft_path", "cost_tables").get<std::string>();
        spec.target_path = require_field(j, "target_path", "cost_tables").get<std::string>();
    } else {
        spec.analytic = true;
        if (j.contains("draft_backend")) {
            spec.draft_backend = AnalyticCostSpec::from_json(j.at("draft_backend"));
        }
        if (j.contains("target_backend")) {
            spec.target_backend = AnalyticCostSpec::from_json(j.at("target_backend"));
        }
    }
    spec.bucket_width = field_or<int>(j, "bucket_width", spec.bucket_width);
    spec.bucket_count = field_or<int>(j, "bucket_count", spec.bucket_count);
    spec.max_tokens = field_or<int>(j, "max_tokens", spec.max_tokens);
    spec.repetitions = field_or<int>(j, "repetitions", spec.repetitions);
    return spec;
}

json CostTableSpec::to_json() const {
    json j{{"bucket_width", bucket_width},
           {"bucket_count", bucket_count},
           {"max_tokens", max_tokens},
           {"repetitions", repetitions}};
    if (analytic) {
        j["draft_backend"] = draft_backend.to_json();
        j["target_backend"] = target_backend.to_json();
    } else {
        j["draft_path"] = draft_path;
        j["target_path"] = target_path;
    }
    return j;
}

namespace {

BuilderConfig builder_from_json(const json& j) {
    BuilderConfig cfg;
    cfg.top_k = field_or<int>(j, "top_k", cfg.top_k);
    cfg.max_depth = field_or<int>(j, "max_depth", cfg.max_depth);
    cfg.max_verify = field_or<int>(j, "max_verify", cfg.max_verify);
    cfg.breadth_threshold = field_or<double>(j, "breadth_threshold", cfg.breadth_threshold);
    cfg.depth_threshold = field_or<double>(j, "depth_threshold", cfg.depth_threshold);
    cfg.rerank_threshold = field_or<double>(j, "rerank_threshold", cfg.rerank_threshold);
    cfg.gain_buffer_capacity = field_or<int>(j, "gain_buffer_capacity", cfg.gain_buffer_capacity);
    cfg.enable_breadth_pruning = field_or<bool>(j, "enable_bp", cfg.enable_breadth_pruning);
    cfg.enable_depth_pruning = field_or<bool>(j, "enable_dp", cfg.enable_depth_pruning);
    cfg.enable_dynamic_rerank = field_or<bool>(j, "enable_dr", cfg.enable_dynamic_rerank);
    if (j.contains("anchor_rule")) {
        const std::string rule = j.at("anchor_rule").get<std::string>();
        if (rule == "all") {
            cfg.anchor_rule = SlopeAnchorRule::all_predecessors;
        } else if (rule == "marked") {
            cfg.anchor_rule = SlopeAnchorRule::marked_predecessors;
        } else {
            throw std::invalid_argument("builder: unknown anchor_rule '" + rule + "'");
        }
    }
    return cfg;
}

json builder_to_json(const BuilderConfig& cfg) {
    return json{{"top_k", cfg.top_k},
                {"max_depth", cfg.max_depth},
                {"max_verify", cfg.max_verify},
                {"breadth_threshold", cfg.breadth_threshold},
                {"depth_threshold", cfg.depth_threshold},
                {"rerank_threshold", cfg.rerank_threshold},
                {"gain_buffer_capacity", cfg.gain_buffer_capacity},
                {"enable_bp", cfg.enable_breadth_pruning},
                {"enable_dp", cfg.enable_depth_pruning},
                {"enable_dr", cfg.enable_dynamic_rerank},
                {"anchor_rule",
                 cfg.anchor_rule == SlopeAnchorRule::all_predecessors ? "all" : "marked"}};
}

} // namespace

void RunConfig::validate() const {
    builder.validate();
    if (batch_size < 1) throw std::invalid_argument("run config: batch_size must be >= 1");
    if (temperature != 0 && temperature != 1) {
        throw std::invalid_argument("run config: temperature must be 0 or 1");
    }
    if (max_new_tokens < 1) throw std::invalid_argument("run config: max_new_tokens must be >= 1");
    if (target_model.vocab < 2) throw std::invalid_argument("run config: vocab must be >= 2");
    if (target_model.kind != "table") {
        throw std::invalid_argument("run config: target model kind must be 'table'");
    }
    if (draft_model.kind != "table" && draft_model.kind != "smoothed") {
        throw std::invalid_argument("run config: draft model kind must be 'table' or 'smoothed'");
    }
    if (prompts.kind == "synthetic") {
        if (prompts.count < 1 || prompts.length < 1) {
            throw std::invalid_argument("run config: prompts need positive count and length");
        }
        if (prompts.count % batch_size != 0) {
            throw std::invalid_argument("run config: prompt count must be a multiple of batch_size");
        }
    } else if (prompts.kind != "file") {
        throw std::invalid_argument("run config: prompt kind must be 'synthetic' or 'file'");
    }
    if (builder.max_verify > cost_tables.max_tokens) {
        throw std::invalid_argument("run config: builder.max_verify exceeds cost table max_tokens");
    }
    if (chain_draft_len < 0) {
        throw std::invalid_argument("run config: chain_draft_len must be >= 0");
    }
    if (overhead_ms < 0.0) {
        throw std::invalid_argument("run config: overhead_ms must be >= 0");
    }
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig cfg;
    cfg.target_model = ModelSpec::from_json(require_field(j, "target_model", "run config"));
    if (j.contains("draft_model")) {
        cfg.draft_model = ModelSpec::from_json(j.at("draft_model"));
    }
    if (j.contains("builder")) {
        cfg.builder = builder_from_json(j.at("builder"));
    }
    cfg.batch_size = field_or<int>(j, "batch_size", cfg.batch_size);
    cfg.temperature = field_or<int>(j, "temperature", cfg.temperature);
    cfg.method = method_from_string(field_or<std::string>(j, "method", "cast"));
    if (j.contains("prompts")) {
        cfg.prompts = PromptSpec::from_json(j.at("prompts"));
    }
    cfg.max_new_tokens = field_or<int>(j, "max_new_tokens", cfg.max_new_tokens);
    cfg.clock = clock_mode_from_string(field_or<std::string>(j, "clock", "sim"));
    if (j.contains("cost_tables")) {
        cfg.cost_tables = CostTableSpec::from_json(j.at("cost_tables"));
    }
    cfg.overhead_ms = field_or<double>(j, "overhead_ms", cfg.overhead_ms);
    cfg.chain_draft_len = field_or<int>(j, "chain_draft_len", cfg.chain_draft_len);
    cfg.seed = field_or<std::uint64_t>(j, "seed", cfg.seed);
    cfg.validate();
    return cfg;
}

json RunConfig::to_json() const {
    return json{{"target_model", target_model.to_json()},
                {"draft_model", draft_model.to_json()},
                {"builder", builder_to_json(builder)},
                {"batch_size", batch_size},
                {"temperature", temperature},
                {"method", to_string(method)},
                {"prompts", prompts.to_json()},
                {"max_new_tokens", max_new_tokens},
                {"clock", to_string(clock)},
                {"cost_tables", cost_tables.to_json()},
                {"overhead_ms", overhead_ms},
                {"chain_draft_len", chain_draft_len},
                {"seed", seed}};
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("run config: cannot open '" + path.string() + "'");
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("run config: malformed JSON in '" + path.string() + "': " +
                                 e.what());
    }
    return from_json(j);
}

namespace {

json trace_to_json(const ExpansionTrace& trace) {
    json layers = json::array();
    for (const LayerStats& s : trace.layers) {
        layers.push_back(json{{"retained", s.retained},
                              {"utility", s.utility},
                              {"cost", s.cost},
                              {"pool_size", s.pool_size},
                              {"context_len", s.context_len}});
    }
    return json{{"shared_context_len", trace.shared_context_len},
                {"layers", layers},
                {"stop", to_string(trace.stop)},
                {"skipped_gain_records", trace.skipped_gain_records}};
}

} // namespace

json DecodeReport::to_json() const {
    json cycles_json = json::array();
    for (const CycleRecord& c : cycles) {
        cycles_json.push_back(json{{"batch", c.batch_index},
                                   {"cycle", c.cycle},
                                   {"context_len", c.context_len},
                                   {"draft_ms", c.draft_ms},
                                   {"target_ms", c.target_ms},
                                   {"overhead_ms", c.overhead_ms},
                                   {"verified_count", c.verified_count},
                                   {"accept_lengths", c.accept_lengths},
                                   {"cumulative_probability", c.cumulative_probability},
                                   {"trace", trace_to_json(c.trace)}});
    }
    json batches_json = json::array();
    for (const BatchSummary& b : batches) {
        batches_json.push_back(json{{"batch", b.batch_index},
                                    {"method_ms", b.method_ms},
                                    {"vanilla_ms", b.vanilla_ms},
                                    {"speedup", b.speedup}});
    }
    return json{{"config", config},
                {"summary",
                 json{{"total_committed", total_committed},
                      {"method_ms", method_ms},
                      {"vanilla_ms", vanilla_ms},
                      {"speedup", speedup},
                      {"mean_accept_length", mean_accept_length},
                      {"mean_committed_per_cycle", mean_committed_per_cycle},
                      {"cycles", cycles.size()}}},
                {"batches", batches_json},
                {"cycles", cycles_json}};
}

void DecodeReport::write_cycles_csv(std::ostream& out) const {
    out << "batch,cycle,context_len,draft_ms,target_ms,overhead_ms,verified_count,sample,"
           "accept_length,cumulative_probability\n";
    for (const CycleRecord& c : cycles) {
        for (std::size_t s = 0; s < c.accept_lengths.size(); ++s) {
            out << c.batch_index << ',' << c.cycle << ',' << c.context_len << ',' << c.draft_ms
                << ',' << c.target_ms << ',' << c.overhead_ms << ',' << c.verified_count << ','
                << s << ',' << c.accept_lengths[s] << ',' << c.cumulative_probability[s] << '\n';
        }
    }
}

DecodeSession::DecodeSession(const SessionInit& init, std::vector<std::vector<int>> prompts,
                             std::uint64_t seed)
    : init_(init), effective_builder_(init.builder), sequences_(std::move(prompts)), rng_(seed) {
    if (sequences_.empty()) {
        throw std::invalid_argument("decode session: empty prompt batch");
    }
    for (const auto& seq : sequences_) {
        if (seq.empty()) {
            throw std::invalid_argument("decode session: empty prompt");
        }
        prompt_lengths_.push_back(static_cast<int>(seq.size()));
    }
    if (init_.target_model == nullptr || init_.draft_model == nullptr ||
        init_.draft_costs == nullptr || init_.target_costs == nullptr) {
        throw std::invalid_argument("decode session: missing model or cost table");
    }
    switch (init_.method) {
        case Method::fixed_tree:
            effective_builder_.enable_breadth_pruning = false;
            effective_builder_.enable_depth_pruning = false;
            effective_builder_.enable_dynamic_rerank = false;
            effective_builder_.fixed_breadth_via_equivalence = false;
            break;
        case Method::eagle2_style:
            effective_builder_.enable_breadth_pruning = false;
            effective_builder_.enable_depth_pruning = false;
            effective_builder_.enable_dynamic_rerank = false;
            effective_builder_.fixed_breadth_via_equivalence = true;
            break;
        default:
            break;
    }
    if (init_.method == Method::cast || init_.method == Method::fixed_tree ||
        init_.method == Method::eagle2_style) {
        builder_.emplace(effective_builder_, *init_.draft_costs, *init_.target_costs);
    }
}

int DecodeSession::padded_length() const {
    int max_len = 0;
    for (const auto& seq : sequences_) {
        max_len = std::max(max_len, static_cast<int>(seq.size()));
    }
    return max_len;
}

bool DecodeSession::done(int max_new_tokens) const {
    for (std::size_t j = 0; j < sequences_.size(); ++j) {
        if (committed_count(static_cast<int>(j)) < max_new_tokens) {
            return false;
        }
    }
    return true;
}

int DecodeSession::committed_count(int sample) const {
    return static_cast<int>(sequences_[static_cast<std::size_t>(sample)].size()) -
           prompt_lengths_[static_cast<std::size_t>(sample)];
}

std::vector<int> DecodeSession::committed_tokens(int sample) const {
    const auto& seq = sequences_[static_cast<std::size_t>(sample)];
    return std::vector<int>(seq.begin() + prompt_lengths_[static_cast<std::size_t>(sample)],
                            seq.end());
}

CycleRecord DecodeSession::step() {
    CycleRecord record;
    switch (init_.method) {
        case Method::vanilla: record = step_vanilla(); break;
        case Method::chain_spd: record = step_chain(); break;
        default: record = step_tree(); break;
    }
    record.cycle = cycle_count_++;
    return record;
}

CycleRecord DecodeSession::step_vanilla() {
    CycleRecord record;
    record.context_len = padded_length();
    const auto start = std::chrono::steady_clock::now();
    for (auto& seq : sequences_) {
        const Distribution dist = init_.target_model->next_distribution(seq);
        const int token = init_.temperature == 0 ? dist.argmax() : dist.sample(rng_);
        seq.push_back(token);
        record.accept_lengths.push_back(0);
        record.cumulative_probability.push_back(0.0);
    }
    if (init_.clock == ClockMode::wall) {
        record.target_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                .count();
    } else {
        record.target_ms =
            init_.target_costs->cost(init_.target_costs->select_bucket(record.context_len), 1);
    }
    record.verified_count = 0;
    return record;
}

CycleRecord DecodeSession::step_chain() {
    CycleRecord record;
    const int context_len = padded_length();
    record.context_len = context_len;
    const int chain_len =
        init_.chain_draft_len > 0 ? init_.chain_draft_len : effective_builder_.max_depth;

    const auto draft_start = std::chrono::steady_clock::now();
    std::vector<std::vector<int>> tokens(sequences_.size());
    std::vector<std::vector<Distribution>> draft_dists(sequences_.size());
    for (std::size_t j = 0; j < sequences_.size(); ++j) {
        std::vector<int> working = sequences_[j];
        for (int i = 0; i < chain_len; ++i) {
            Distribution dist = init_.draft_model->next_distribution(working);
            const int token =
                init_.temperature == 0 ? dist.argmax() : dist.sample(rng_);
            tokens[j].push_back(token);
            working.push_back(token);
            draft_dists[j].push_back(std::move(dist));
        }
    }
    const auto draft_end = std::chrono::steady_clock::now();

    std::vector<std::vector<Distribution>> target_dists(sequences_.size());
    for (std::size_t j = 0; j < sequences_.size(); ++j) {
        std::vector<int> working = sequences_[j];
        target_dists[j].push_back(init_.target_model->next_distribution(working));
        for (int i = 0; i < chain_len; ++i) {
            working.push_back(tokens[j][static_cast<std::size_t>(i)]);
            target_dists[j].push_back(init_.target_model->next_distribution(working));
        }
    }
    const auto target_end = std::chrono::steady_clock::now();

    for (std::size_t j = 0; j < sequences_.size(); ++j) {
        const VerifyResult result =
            init_.temperature == 0
                ? greedy_verify_chain(tokens[j], target_dists[j])
                : verify_chain(tokens[j], draft_dists[j], target_dists[j], rng_);
        for (int token : result.committed()) {
            sequences_[j].push_back(token);
        }
        record.accept_lengths.push_back(result.accept_length);
        double path_prob = 1.0;
        double cum = 0.0;
        for (int i = 0; i < chain_len; ++i) {
            path_prob *= draft_dists[j][static_cast<std::size_t>(i)].prob(
                tokens[j][static_cast<std::size_t>(i)]);
            cum += path_prob;
        }
        record.cumulative_probability.push_back(cum);
    }

    record.verified_count = chain_len;
    if (init_.clock == ClockMode::wall) {
        record.draft_ms =
            std::chrono::duration<double, std::milli>(draft_end - draft_start).count();
        record.target_ms =
            std::chrono::duration<double, std::milli>(target_end - draft_end).count();
    } else {
        const CostTable& dc = *init_.draft_costs;
        for (int i = 0; i < chain_len; ++i) {
            record.draft_ms += dc.cost(dc.select_bucket(context_len + i), 1);
        }
        const CostTable& tc = *init_.target_costs;
        record.target_ms =
            tc.cost(tc.select_bucket(context_len), std::min(chain_len + 1, tc.max_tokens()));
    }
    record.overhead_ms = init_.overhead_ms;
    return record;
}

CycleRecord DecodeSession::step_tree() {
    CycleRecord record;
    const int context_len = padded_length();
    record.context_len = context_len;

    DraftSession session;
    session.draft_model = init_.draft_model;
    session.contexts = std::span<const std::vector<int>>(sequences_);
    session.shared_context_len = context_len;
    session.strategy = init_.temperature == 0 ? DraftStrategy::greedy_top_k
                                              : DraftStrategy::sample_without_replacement;

    const auto draft_start = std::chrono::steady_clock::now();
    const DraftBuild build = builder_->build_draft(session, rng_);
    const RerankResult rerank = builder_->rerank(build);
    const auto draft_end = std::chrono::steady_clock::now();

    record.trace = build.trace;
    record.verified_count = rerank.verify_count;

    const auto target_start = std::chrono::steady_clock::now();
    for (std::size_t j = 0; j < sequences_.size(); ++j) {
        const LinearizedDraft& lin = rerank.linearized[j];
        std::vector<Distribution> target_dists;
        target_dists.reserve(static_cast<std::size_t>(lin.size()) + 1);
        target_dists.push_back(init_.target_model->next_distribution(sequences_[j]));
        std::vector<Distribution> forward =
            init_.target_model->tree_forward(sequences_[j], lin);
        for (auto& dist : forward) {
            target_dists.push_back(std::move(dist));
        }

        VerifyResult result;
        if (init_.temperature == 0) {
            result = greedy_verify_tree(lin, target_dists);
        } else {
            std::vector<Distribution> proposals;
            proposals.reserve(static_cast<std::size_t>(lin.size()));
            for (int pos = 0; pos < lin.size(); ++pos) {
                proposals.push_back(
                    build.proposal(static_cast<int>(j), lin.sources[static_cast<std::size_t>(pos)]));
            }
            result = verify_tree(lin, proposals, target_dists, rng_);
        }
        for (int token : result.committed()) {
            sequences_[j].push_back(token);
        }
        record.accept_lengths.push_back(result.accept_length);

        double cum = 0.0;
        const DraftTree& tree = build.trees[j];
        for (NodeId id : rerank.selected[j]) {
            cum += tree.node(id).value;
        }
        record.cumulative_probability.push_back(cum);
    }
    const auto target_end = std::chrono::steady_clock::now();

    if (init_.clock == ClockMode::wall) {
        record.draft_ms =
            std::chrono::duration<double, std::milli>(draft_end - draft_start).count();
        record.target_ms =
            std::chrono::duration<double, std::milli>(target_end - target_start).count();
    } else {
        const CostTable& dc = *init_.draft_costs;
        for (const LayerStats& s : build.trace.layers) {
            record.draft_ms += dc.cost(dc.select_bucket(s.context_len), s.retained);
        }
        const CostTable& tc = *init_.target_costs;
        record.target_ms = tc.cost(tc.select_bucket(context_len),
                                   std::min(rerank.verify_count + 1, tc.max_tokens()));
    }
    record.overhead_ms = init_.overhead_ms;
    return record;
}

std::vector<std::vector<int>> make_prompts(const PromptSpec& spec, int vocab) {
    if (vocab < 2) {
        throw std::invalid_argument("make_prompts: vocab must be >= 2");
    }
    std::vector<std::vector<int>> prompts;
    if (spec.kind == "synthetic") {
        Rng rng(spec.seed);
        for (int i = 0; i < spec.count; ++i) {
            std::vector<int> prompt(static_cast<std::size_t>(spec.length));
            for (int& token : prompt) {
                // token 0 is reserved for padding
                token = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab - 1)));
            }
            prompts.push_back(std::move(prompt));
        }
        return prompts;
    }
    if (spec.kind == "file") {
        std::ifstream in(spec.path);
        if (!in) {
            throw std::runtime_error("make_prompts: cannot open '" + spec.path + "'");
        }
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            std::vector<int> prompt;
            prompt.reserve(line.size());
            for (unsigned char byte : line) {
                prompt.push_back(1 + static_cast<int>(byte % (vocab - 1)));
            }
            prompts.push_back(std::move(prompt));
        }
        if (prompts.empty()) {
            throw std::runtime_error("make_prompts: no prompts in '" + spec.path + "'");
        }
        return prompts;
    }
    throw std::invalid_argument("make_prompts: unknown prompt kind '" + spec.kind + "'");
}

std::pair<CostTable, CostTable> resolve_cost_tables(const CostTableSpec& spec, int batch_size) {
    if (spec.analytic) {
        const auto draft_fn = [&spec](int b, int c, int n) { return spec.draft_backend(b, c, n); };
        const auto target_fn = [&spec](int b, int c, int n) {
            return spec.target_backend(b, c, n);
        };
        return {build_table(draft_fn, ModelRole::draft, batch_size, spec.bucket_width,
                            spec.bucket_count, spec.max_tokens, spec.repetitions),
                build_table(target_fn, ModelRole::target, batch_size, spec.bucket_width,
                            spec.bucket_count, spec.max_tokens, spec.repetitions)};
    }
    CostTable draft = load_table(spec.draft_path);
    CostTable target = load_table(spec.target_path);
    if (draft.role() != ModelRole::draft || target.role() != ModelRole::target) {
        throw std::runtime_error("cost tables: file roles do not match their slots");
    }
    if (draft.batch_size() != batch_size || target.batch_size() != batch_size) {
        throw std::runtime_error("cost tables: table batch size does not match the run batch size");
    }
    if (!draft.same_shape(target)) {
        throw std::runtime_error("cost tables: draft and target grids disagree on shape");
    }
    return {std::move(draft), std::move(target)};
}

ModelPair build_models(const ModelSpec& target_spec, const ModelSpec& draft_spec) {
    if (target_spec.kind != "table") {
        throw std::invalid_argument("build_models: target kind must be 'table'");
    }
    ModelPair pair;
    pair.target = std::make_shared<TableModel>(target_spec.vocab, target_spec.order,
                                               target_spec.seed, target_spec.temperature);
    if (draft_spec.kind == "smoothed") {
        pair.draft = std::make_shared<SmoothedDraft>(pair.target, draft_spec.beta);
    } else if (draft_spec.kind == "table") {
        pair.draft = std::make_shared<TableModel>(target_spec.vocab, draft_spec.order,
                                                  draft_spec.seed, draft_spec.temperature);
    } else {
        throw std::invalid_argument("build_models: unknown draft kind '" + draft_spec.kind + "'");
    }
    return pair;
}

double simulated_vanilla_ms(const CostTable& target_costs, int initial_len, int max_new_tokens) {
    double total = 0.0;
    for (int t = 0; t < max_new_tokens; ++t) {
        total += target_costs.cost(target_costs.select_bucket(initial_len + t), 1);
    }
    return total;
}

DecodeReport run(const RunConfig& cfg) {
    cfg.validate();
    const ModelPair models = build_models(cfg.target_model, cfg.draft_model);
    const auto [draft_costs, target_costs] = resolve_cost_tables(cfg.cost_tables, cfg.batch_size);
    std::vector<std::vector<int>> prompts = make_prompts(cfg.prompts, cfg.target_model.vocab);
    if (static_cast<int>(prompts.size()) % cfg.batch_size != 0) {
        throw std::invalid_argument("run: prompt count must be a multiple of batch_size");
    }

    SessionInit init;
    init.draft_model = models.draft.get();
    init.target_model = models.target.get();
    init.draft_costs = &draft_costs;
    init.target_costs = &target_costs;
    init.builder = cfg.builder;
    init.method = cfg.method;
    init.temperature = cfg.temperature;
    init.clock = cfg.clock;
    init.overhead_ms = cfg.overhead_ms;
    init.chain_draft_len = cfg.chain_draft_len;

    DecodeReport report;
    report.config = cfg.to_json();

    const int batches = static_cast<int>(prompts.size()) / cfg.batch_size;
    long accept_sum = 0;
    long accept_entries = 0;
    for (int b = 0; b < batches; ++b) {
        std::vector<std::vector<int>> batch_prompts(
            prompts.begin() + static_cast<std::ptrdiff_t>(b) * cfg.batch_size,
            prompts.begin() + static_cast<std::ptrdiff_t>(b + 1) * cfg.batch_size);
        int initial_len = 0;
        for (const auto& p : batch_prompts) {
            initial_len = std::max(initial_len, static_cast<int>(p.size()));
        }

        DecodeSession session(init, std::move(batch_prompts), hash_combine(cfg.seed, b));
        BatchSummary summary;
        summary.batch_index = b;
        while (!session.done(cfg.max_new_tokens)) {
            CycleRecord record = session.step();
            record.batch_index = b;
            summary.method_ms += record.total_ms();
            for (int a : record.accept_lengths) {
                accept_sum += a;
                ++accept_entries;
            }
            report.cycles.push_back(std::move(record));
        }
        for (int j = 0; j < cfg.batch_size; ++j) {
            report.total_committed += std::min(session.committed_count(j), cfg.max_new_tokens);
        }

        if (cfg.clock == ClockMode::simulated) {
            summary.vanilla_ms = simulated_vanilla_ms(target_costs, initial_len,
                                                      cfg.max_new_tokens);
        } else if (cfg.method == Method::vanilla) {
            summary.vanilla_ms = summary.method_ms;
        } else {
            SessionInit vanilla_init = init;
            vanilla_init.method = Method::vanilla;
            std::vector<std::vector<int>> vanilla_prompts(
                prompts.begin() + static_cast<std::ptrdiff_t>(b) * cfg.batch_size,
                prompts.begin() + static_cast<std::ptrdiff_t>(b + 1) * cfg.batch_size);
            DecodeSession vanilla_session(vanilla_init, std::move(vanilla_prompts),
                                          hash_combine(cfg.seed, b));
            while (!vanilla_session.done(cfg.max_new_tokens)) {
                summary.vanilla_ms += vanilla_session.step().total_ms();
            }
        }
        summary.speedup = summary.method_ms > 0.0 ? summary.vanilla_ms / summary.method_ms : 0.0;
        report.method_ms += summary.method_ms;
        report.vanilla_ms += summary.vanilla_ms;
        report.batches.push_back(summary);
    }

    report.speedup = report.method_ms > 0.0 ? report.vanilla_ms / report.method_ms : 0.0;
    report.mean_accept_length =
        accept_entries > 0 ? static_cast<double>(accept_sum) / accept_entries : 0.0;
    report.mean_committed_per_cycle =
        accept_entries > 0
            ? static_cast<double>(accept_sum + accept_entries) / accept_entries
            : 0.0;
    return report;
}

json CompareReport::to_json() const {
    json rows_json = json::array();
    for (const CompareRow& row : rows) {
        rows_json.push_back(json{{"label", row.label},
                                 {"method", row.report.config.at("method")},
                                 {"speedup", row.report.speedup},
                                 {"mean_accept_length", row.report.mean_accept_length},
                                 {"method_ms", row.report.method_ms},
                                 {"vanilla_ms", row.report.vanilla_ms},
                                 {"batches", [&] {
                                      json b = json::array();
                                      for (const BatchSummary& s : row.report.batches) {
                                          b.push_back(json{{"batch", s.batch_index},
                                                           {"speedup", s.speedup}});
                                      }
                                      return b;
                                  }()}});
    }
    return json{{"rows", rows_json}};
}

void CompareReport::write_csv(std::ostream& out) const {
    out << "label,method,speedup,mean_accept_length,method_ms,vanilla_ms\n";
    for (const CompareRow& row : rows) {
        out << row.label << ',' << row.report.config.at("method").get<std::string>() << ','
            << row.report.speedup << ',' << row.report.mean_accept_length << ','
            << row.report.method_ms << ',' << row.report.vanilla_ms << '\n';
    }
}

CompareReport compare(const std::vector<std::pair<std::string, RunConfig>>& configs) {
    if (configs.empty()) {
        throw std::invalid_argument("compare: no configs given");
    }
    const RunConfig& first = configs.front().second;
    for (const auto& [label, cfg] : configs) {
        if (cfg.prompts.to_json() != first.prompts.to_json()) {
            throw std::invalid_argument("compare: config '" + label + "' has mismatched prompts");
        }
        if (cfg.target_model.to_json() != first.target_model.to_json() ||
            cfg.draft_model.to_json() != first.draft_model.to_json()) {
            throw std::invalid_argument("compare: config '" + label + "' has mismatched models");
        }
        if (cfg.seed != first.seed || cfg.batch_size != first.batch_size ||
            cfg.temperature != first.temperature ||
            cfg.max_new_tokens != first.max_new_tokens) {
            throw std::invalid_argument("compare: config '" + label +
                                        "' has a mismatched workload");
        }
    }
    CompareReport report;
    for (const auto& [label, cfg] : configs) {
        report.rows.push_back(CompareRow{label, run(cfg)});
    }
    return report;
}

std::vector<std::pair<std::string, RunConfig>> ablation_variants(const RunConfig& base) {
    RunConfig full = base;
    full.method = Method::cast;
    full.builder.enable_breadth_pruning = true;
    full.builder.enable_depth_pruning = true;
    full.builder.enable_dynamic_rerank = true;

    RunConfig no_dr = full;
    no_dr.builder.enable_dynamic_rerank = false;
    RunConfig no_dp = full;
    no_dp.builder.enable_depth_pruning = false;
    RunConfig no_bp = full;
    no_bp.builder.enable_breadth_pruning = false;
    RunConfig fixed = base;
    fixed.method = Method::fixed_tree;

    return {{"cast", full}, {"no-dr", no_dr}, {"no-dp", no_dp}, {"no-bp", no_bp},
            {"fixed-tree", fixed}};
}

Correlation pearson(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.empty()) {
        throw std::invalid_argument("pearson: series must be non-empty and equally long");
    }
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    Correlation result;
    if (sxx <= 0.0 || syy <= 0.0) {
        result.degenerate = true;
        return result;
    }
    result.r = sxy / std::sqrt(sxx * syy);
    return result;
}

void write_accept_trace_csv(const DecodeReport& report, std::ostream& out) {
    out << "batch,cycle,sample,cumulative_probability,accept_length\n";
    for (const CycleRecord& c : report.cycles) {
        for (std::size_t s = 0; s < c.accept_lengths.size(); ++s) {
            out << c.batch_index << ',' << c.cycle << ',' << s << ','
                << c.cumulative_probability[s] << ',' << c.accept_lengths[s] << '\n';
        }
    }
}

Correlation accept_trace_correlation(const DecodeReport& report) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (const CycleRecord& c : report.cycles) {
        for (std::size_t s = 0; s < c.accept_lengths.size(); ++s) {
            xs.push_back(c.cumulative_probability[s]);
            ys.push_back(static_cast<double>(c.accept_lengths[s]));
        }
    }
    if (xs.empty()) {
        throw std::invalid_argument("accept_trace_correlation: report has no cycles");
    }
    return pearson(xs, ys);
}

std::vector<SweepRow> sweep_max_verify(const RunConfig& base, std::span<const int> verify_caps) {
    std::vector<SweepRow> rows;
    for (int cap : verify_caps) {
        RunConfig cfg = base;
        cfg.builder.max_verify = cap;
        const DecodeReport report = run(cfg);
        rows.push_back(SweepRow{cap, report.mean_accept_length, report.speedup});
    }
    return rows;
}

void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out) {
    out << "max_verify,mean_accept_length,speedup\n";
    for (const SweepRow& row : rows) {
        out << row.max_verify << ',' << row.mean_accept_length << ',' << row.speedup << '\n';
    }
}

} // namespace cast
