#pragma once

#include <string>

#include <json.hpp>

#include "lcqp/types.hpp"

namespace lcqp {

// On-disk instance schema (all indices 0-based, all values decimal doubles):
//
//   {"n": int, "m": int,
//    "q": [[i, j, v], ...],          // symmetric: both triangles present
//    "a": [[i, j, v], ...],
//    "b": [..], "c": [..],
//    "x_star": [..],                 // optional
//    "trajectory": [[..], ..]}       // optional
//
// Serialization is deterministic: entries are emitted in row-major order and
// object keys are sorted, so equal instances produce equal bytes.

nlohmann::json instance_to_json(const LcqpInstance& inst);
LcqpInstance instance_from_json(const nlohmann::json& j);

void save_instance(const std::string& path, const LcqpInstance& inst);
LcqpInstance load_instance(const std::string& path);

nlohmann::json report_to_json(const SolveReport& report);

// Shared file helpers (throw SolveError::Code::io on failure).
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);
nlohmann::json load_json(const std::string& path);
void save_json(const std::string& path, const nlohmann::json& j);

}  // namespace lcqp
