#pragma once

// Shared by config.cpp and checkpoint.cpp; keeps the JSON dependency out of
// the installed headers.

#include "capsroute/config.hpp"
#include "json.hpp"

namespace capsroute::cfgjson {

nlohmann::json routing_to_json(const RoutingConfig& r);
RoutingConfig routing_from_json(const nlohmann::json& j, const std::string& section);

nlohmann::json model_to_json(const ModelConfig& m); // without the routing block
void model_from_json(const nlohmann::json& j, ModelConfig& out, const std::string& section);

nlohmann::json train_to_json(const TrainConfig& t);
void train_from_json(const nlohmann::json& j, TrainConfig& out, const std::string& section);

void reject_unknown(const nlohmann::json& obj, const std::string& section,
                    std::initializer_list<const char*> known);

} // namespace capsroute::cfgjson
