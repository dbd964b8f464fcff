#include "capsroute/config.hpp"

#include <fstream>
#include <sstream>

#include "capsroute/text.hpp"
#include "config_json.hpp"

namespace capsroute {

using nlohmann::json;

std::string to_string(RoutingVariant v) {
    switch (v) {
        case RoutingVariant::dynamic: return "dynamic";
        case RoutingVariant::leaky: return "leaky";
        case RoutingVariant::gcn_only: return "gcn_only";
        case RoutingVariant::graph: return "graph";
    }
    return "?";
}

std::string to_string(Metric m) {
    switch (m) {
        case Metric::wd: return "WD";
        case Metric::ed: return "ED";
        case Metric::cs: return "CS";
    }
    return "?";
}

std::string to_string(NormMode n) {
    switch (n) {
        case NormMode::general: return "general";
        case NormMode::classic: return "classic";
        case NormMode::identity: return "identity";
    }
    return "?";
}

std::string to_string(WdMode w) {
    return w == WdMode::dirac ? "dirac" : "sorted";
}

std::string to_string(LossKind l) {
    return l == LossKind::margin ? "margin" : "cross_entropy";
}

RoutingVariant routing_variant_from_name(const std::string& s) {
    if (s == "dynamic") return RoutingVariant::dynamic;
    if (s == "leaky") return RoutingVariant::leaky;
    if (s == "gcn_only") return RoutingVariant::gcn_only;
    if (s == "graph") return RoutingVariant::graph;
    throw ConfigError("unknown routing variant: " + s);
}

Metric metric_from_name(const std::string& s) {
    if (s == "WD" || s == "wd") return Metric::wd;
    if (s == "ED" || s == "ed") return Metric::ed;
    if (s == "CS" || s == "cs") return Metric::cs;
    throw ConfigError("unknown adjacency metric: " + s);
}

NormMode norm_mode_from_name(const std::string& s) {
    if (s == "general") return NormMode::general;
    if (s == "classic") return NormMode::classic;
    if (s == "identity") return NormMode::identity;
    throw ConfigError("unknown normalization mode: " + s);
}

WdMode wd_mode_from_name(const std::string& s) {
    if (s == "dirac") return WdMode::dirac;
    if (s == "sorted") return WdMode::sorted;
    throw ConfigError("unknown wd_mode: " + s);
}

LossKind loss_kind_from_name(const std::string& s) {
    if (s == "margin") return LossKind::margin;
    if (s == "cross_entropy") return LossKind::cross_entropy;
    throw ConfigError("unknown loss: " + s);
}

void ModelConfig::validate() const {
    if (D < 1 || K < 1 || stride < 1 || B1 < 1 || B2 < 1 || N_caps < 1 || d < 1 || L < 1) {
        throw ConfigError("model dimensions must all be positive");
    }
    if (L < K) {
        throw ConfigError("model.L (" + std::to_string(L) + ") must be at least the n-gram window K (" +
                          std::to_string(K) + ")");
    }
    if (C == 1) throw ConfigError("model needs at least 2 classes");
    if (routing.iterations < 1) throw ConfigError("routing.iterations must be at least 1");
}

void TrainConfig::validate() const {
    if (lr <= 0) throw ConfigError("train.lr must be positive");
    if (batch < 1) throw ConfigError("train.batch must be at least 1");
}

namespace cfgjson {

void reject_unknown(const json& obj, const std::string& section, std::initializer_list<const char*> known) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) ok = true;
        if (!ok) throw ConfigError("unknown config key: " + section + it.key());
    }
}

namespace {

template <class T>
void read_uint(const json& obj, const char* key, T& out, const std::string& section) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_number_unsigned() || v.get<std::uint64_t>() < 1) {
        throw ConfigError("config key " + section + std::string(key) + " must be a positive integer");
    }
    out = static_cast<T>(v.get<std::uint64_t>());
}

void read_string(const json& obj, const char* key, std::string& out) {
    if (obj.contains(key)) out = obj.at(key).get<std::string>();
}

} // namespace

json routing_to_json(const RoutingConfig& r) {
    return {{"variant", to_string(r.variant)}, {"metric", to_string(r.metric)},
            {"norm", to_string(r.norm)},       {"attention", r.attention},
            {"iterations", r.iterations},      {"wd_mode", to_string(r.wd_mode)}};
}

RoutingConfig routing_from_json(const json& j, const std::string& section) {
    RoutingConfig cfg;
    reject_unknown(j, section, {"variant", "metric", "norm", "attention", "iterations", "wd_mode"});
    if (j.contains("variant")) cfg.variant = routing_variant_from_name(j.at("variant").get<std::string>());
    if (j.contains("metric")) cfg.metric = metric_from_name(j.at("metric").get<std::string>());
    if (j.contains("norm")) cfg.norm = norm_mode_from_name(j.at("norm").get<std::string>());
    if (j.contains("attention")) cfg.attention = j.at("attention").get<bool>();
    if (j.contains("iterations")) cfg.iterations = j.at("iterations").get<int>();
    if (j.contains("wd_mode")) cfg.wd_mode = wd_mode_from_name(j.at("wd_mode").get<std::string>());
    return cfg;
}

json model_to_json(const ModelConfig& m) {
    return {{"D", m.D},           {"K", m.K}, {"stride", m.stride}, {"B1", m.B1},
            {"B2", m.B2},         {"N_caps", m.N_caps}, {"d", m.d}, {"L", m.L},
            {"classes", m.C},     {"seed", m.seed}};
}

void model_from_json(const json& j, ModelConfig& out, const std::string& section) {
    reject_unknown(j, section, {"D", "K", "stride", "B1", "B2", "N_caps", "d", "L", "classes", "seed"});
    read_uint(j, "D", out.D, section);
    read_uint(j, "K", out.K, section);
    read_uint(j, "stride", out.stride, section);
    read_uint(j, "B1", out.B1, section);
    read_uint(j, "B2", out.B2, section);
    read_uint(j, "N_caps", out.N_caps, section);
    read_uint(j, "d", out.d, section);
    read_uint(j, "L", out.L, section);
    read_uint(j, "classes", out.C, section);
    if (j.contains("seed")) out.seed = j.at("seed").get<std::uint64_t>();
}

json train_to_json(const TrainConfig& t) {
    return {{"lr", t.lr},
            {"batch", t.batch},
            {"epochs", t.epochs},
            {"eval_every", t.eval_every},
            {"loss", to_string(t.loss)},
            {"checkpoint", t.checkpoint_path},
            {"metrics_out", t.metrics_out}};
}

void train_from_json(const json& j, TrainConfig& out, const std::string& section) {
    reject_unknown(j, section, {"lr", "batch", "epochs", "eval_every", "loss", "checkpoint", "metrics_out"});
    if (j.contains("lr")) out.lr = j.at("lr").get<double>();
    read_uint(j, "batch", out.batch, section);
    if (j.contains("epochs")) out.epochs = j.at("epochs").get<std::size_t>();
    read_uint(j, "eval_every", out.eval_every, section);
    if (j.contains("loss")) out.loss = loss_kind_from_name(j.at("loss").get<std::string>());
    read_string(j, "checkpoint", out.checkpoint_path);
    read_string(j, "metrics_out", out.metrics_out);
}

} // namespace cfgjson

namespace {

AblationCellConfig parse_cell(const json& c) {
    AblationCellConfig cell;
    cfgjson::reject_unknown(c, "ablation.cells[].", {"variant", "metric", "norm", "attention"});
    if (c.contains("variant")) cell.variant = routing_variant_from_name(c.at("variant").get<std::string>());
    if (c.contains("metric")) cell.metric = metric_from_name(c.at("metric").get<std::string>());
    if (c.contains("norm")) cell.norm = norm_mode_from_name(c.at("norm").get<std::string>());
    if (c.contains("attention")) cell.attention = c.at("attention").get<bool>();
    return cell;
}

} // namespace

RunConfig parse_run_config(const std::string& json_text, const std::string& origin) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    if (!root.is_object()) throw ConfigError(origin + ": top level must be a JSON object");
    cfgjson::reject_unknown(root, "", {"model", "train", "data", "routing", "ablation"});

    RunConfig cfg;
    try {
        if (root.contains("model")) cfgjson::model_from_json(root.at("model"), cfg.model, "model.");
        if (root.contains("routing")) cfg.model.routing = cfgjson::routing_from_json(root.at("routing"), "routing.");
        if (root.contains("train")) cfgjson::train_from_json(root.at("train"), cfg.train, "train.");
        if (root.contains("data")) {
            const auto& d = root.at("data");
            cfgjson::reject_unknown(d, "data.", {"train", "test", "format", "vocab_min_count", "vocab_max_size"});
            if (d.contains("train")) cfg.data.train_path = d.at("train").get<std::string>();
            if (d.contains("test")) cfg.data.test_path = d.at("test").get<std::string>();
            if (d.contains("format")) cfg.data.format = d.at("format").get<std::string>();
            if (d.contains("vocab_min_count")) cfg.data.vocab_min_count = d.at("vocab_min_count").get<std::size_t>();
            if (d.contains("vocab_max_size")) cfg.data.vocab_max_size = d.at("vocab_max_size").get<std::size_t>();
            if (!cfg.data.format.empty()) data_format_from_name(cfg.data.format); // validate early
        }
        if (root.contains("ablation")) {
            const auto& a = root.at("ablation");
            cfgjson::reject_unknown(a, "ablation.", {"cells", "metrics", "norms", "attention"});
            if (a.contains("cells")) {
                for (const auto& c : a.at("cells")) cfg.ablation.cells.push_back(parse_cell(c));
            }
            if (a.contains("metrics")) {
                for (const auto& m : a.at("metrics"))
                    cfg.ablation.metrics.push_back(metric_from_name(m.get<std::string>()));
            }
            if (a.contains("norms")) {
                for (const auto& n : a.at("norms"))
                    cfg.ablation.norms.push_back(norm_mode_from_name(n.get<std::string>()));
            }
            if (a.contains("attention")) cfg.ablation.attention = a.at("attention").get<bool>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": " + e.what());
    }

    cfg.model.validate();
    cfg.train.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str(), path);
}

std::string run_config_to_json(const RunConfig& cfg) {
    json root;
    root["model"] = cfgjson::model_to_json(cfg.model);
    root["routing"] = cfgjson::routing_to_json(cfg.model.routing);
    root["train"] = cfgjson::train_to_json(cfg.train);
    root["data"] = {{"train", cfg.data.train_path},
                    {"test", cfg.data.test_path},
                    {"format", cfg.data.format},
                    {"vocab_min_count", cfg.data.vocab_min_count},
                    {"vocab_max_size", cfg.data.vocab_max_size}};
    json cells = json::array();
    for (const auto& c : cfg.ablation.cells) {
        cells.push_back({{"variant", to_string(c.variant)},
                         {"metric", to_string(c.metric)},
                         {"norm", to_string(c.norm)},
                         {"attention", c.attention}});
    }
    json metrics = json::array();
    for (auto m : cfg.ablation.metrics) metrics.push_back(to_string(m));
    json norms = json::array();
    for (auto n : cfg.ablation.norms) norms.push_back(to_string(n));
    root["ablation"] = {{"cells", cells}, {"metrics", metrics}, {"norms", norms}, {"attention", cfg.ablation.attention}};
    return root.dump();
}

} // namespace capsroute
