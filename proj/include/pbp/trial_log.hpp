#pragma once

#include "pbp/world.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>

namespace pbp {

// JSON Lines trial log:
//   {"type":"header","version":1,"mode":...,"operator":...,"scene":{...},"config":{...}}
//   {"type":"tick","tick":0,"robot":{...},"cmd":{...},"reference":[x,y],...}   (one per tick)
//   {"type":"end","outcome":"success","ticks":N}
// Doubles are written with 17 significant digits, so a round trip is exact.

nlohmann::json to_json(const Vec2& v);
nlohmann::json to_json(const Scene& scene);
nlohmann::json to_json(const WorldConfig& config);
nlohmann::json to_json(const RobotState& robot);
nlohmann::json to_json(const Obstacle& ob);
nlohmann::json to_json(const TickRecord& rec);

Scene scene_from_json(const nlohmann::json& j);
WorldConfig config_from_json(const nlohmann::json& j);
TickRecord tick_from_json(const nlohmann::json& j);

std::string header_line(const TrialLog& log);
std::string tick_line(const TickRecord& rec);
std::string end_line(const TrialLog& log);

std::string serialize_log(const TrialLog& log);
void write_log(const TrialLog& log, const std::filesystem::path& path);

/// Throws LogFormatError.
TrialLog parse_log(std::istream& in);
TrialLog parse_log(const std::string& text);
TrialLog read_log(const std::filesystem::path& path);

}  // namespace pbp
