#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "capsroute/errors.hpp"

namespace capsroute {

enum class RoutingVariant { dynamic, leaky, gcn_only, graph };
enum class Metric { wd, ed, cs };
enum class NormMode { general, classic, identity };
enum class WdMode { dirac, sorted };
enum class LossKind { margin, cross_entropy };

std::string to_string(RoutingVariant v);
std::string to_string(Metric m);
std::string to_string(NormMode n);
std::string to_string(WdMode w);
std::string to_string(LossKind l);

RoutingVariant routing_variant_from_name(const std::string& s);
Metric metric_from_name(const std::string& s);
NormMode norm_mode_from_name(const std::string& s);
WdMode wd_mode_from_name(const std::string& s);
LossKind loss_kind_from_name(const std::string& s);

struct RoutingConfig {
    RoutingVariant variant = RoutingVariant::graph;
    Metric metric = Metric::wd;
    NormMode norm = NormMode::general;
    bool attention = true;
    int iterations = 3;
    WdMode wd_mode = WdMode::dirac;

    bool uses_gcn() const { return variant == RoutingVariant::graph || variant == RoutingVariant::gcn_only; }
    bool uses_attention() const { return variant == RoutingVariant::graph && attention; }
};

struct ModelConfig {
    std::size_t D = 300;      // embedding width
    std::size_t K = 3;        // n-gram window
    std::size_t stride = 2;
    std::size_t B1 = 64;      // conv filters
    std::size_t B2 = 64;      // primary-capsule filters
    std::size_t N_caps = 50;  // compressed capsule count
    std::size_t d = 64;       // capsule dimension
    std::size_t L = 64;       // padded document length
    std::size_t C = 0;        // classes; filled from data when 0
    std::uint64_t seed = 1234;
    RoutingConfig routing;

    void validate() const;
};

struct TrainConfig {
    double lr = 5e-5;
    std::size_t batch = 32;
    std::size_t epochs = 10;
    std::size_t eval_every = 1;
    LossKind loss = LossKind::margin;
    std::string checkpoint_path;
    std::string metrics_out;

    void validate() const;
};

struct DataConfig {
    std::string train_path;
    std::string test_path;
    std::string format; // "csv" | "tsv" | "jsonl" | "" (infer from extension)
    std::size_t vocab_min_count = 1;
    std::size_t vocab_max_size = 30000;
};

/// Explicit ablation cells; empty means "use the axes or the default grid".
struct AblationCellConfig {
    RoutingVariant variant = RoutingVariant::graph;
    Metric metric = Metric::wd;
    NormMode norm = NormMode::general;
    bool attention = true;
};

struct AblationConfig {
    std::vector<AblationCellConfig> cells; // wins when non-empty
    std::vector<Metric> metrics;           // else cross product of these...
    std::vector<NormMode> norms;           // ...when both non-empty
    bool attention = true;

    bool has_axes() const { return !metrics.empty() && !norms.empty(); }
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    DataConfig data;
    AblationConfig ablation;
};

/// Parse a JSON config with sections model/train/data/routing/ablation.
/// Unknown keys anywhere are fatal (ConfigError naming the key).
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text, const std::string& origin);

/// Fully-resolved config as a single JSON line, for the command echo.
std::string run_config_to_json(const RunConfig& cfg);

} // namespace capsroute
