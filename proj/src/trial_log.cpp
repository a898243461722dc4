#include "pbp/trial_log.hpp"

#include "pbp/errors.hpp"

#include <fstream>
#include <sstream>

namespace pbp {

using nlohmann::json;

namespace {

Vec2 vec_from_json(const json& j) {
    if (!j.is_array() || j.size() != 2) {
        throw LogFormatError("expected a 2-vector");
    }
    return Vec2(j[0].get<double>(), j[1].get<double>());
}

RobotState robot_from_json(const json& j) {
    RobotState r;
    r.y = vec_from_json(j.at("y"));
    r.dy = vec_from_json(j.at("dy"));
    r.heading = j.at("heading").get<double>();
    r.radius = j.at("radius").get<double>();
    return r;
}

Obstacle obstacle_from_json(const json& j) {
    Obstacle ob;
    ob.pos = vec_from_json(j.at("pos"));
    ob.radius = j.at("radius").get<double>();
    ob.speed = j.at("speed").get<double>();
    ob.activated = j.at("activated").get<bool>();
    ob.activation_progress = j.at("activation_progress").get<double>();
    return ob;
}

}  // namespace

json to_json(const Vec2& v) {
    return json::array({v.x(), v.y()});
}

json to_json(const Scene& scene) {
    json goals = json::array();
    for (const Vec2& g : scene.goals) {
        goals.push_back(to_json(g));
    }
    json obstacles = json::array();
    for (const Obstacle& ob : scene.obstacles) {
        obstacles.push_back(to_json(ob));
    }
    return json{{"seed", scene.seed},
                {"task", to_string(scene.task)},
                {"goals", goals},
                {"target_index", scene.target_index},
                {"switch_schedule", scene.switch_schedule},
                {"target_sequence", scene.target_sequence},
                {"obstacles", obstacles},
                {"start", {{"position", to_json(scene.start.position)},
                           {"heading", scene.start.heading}}},
                {"success_radius", scene.success_radius}};
}

json to_json(const WorldConfig& c) {
    return json{{"dt", c.dt},
                {"robot_radius", c.robot_radius},
                {"obstacle_radius", c.obstacle_radius},
                {"obstacle_speed", c.obstacle_speed},
                {"success_radius", c.success_radius},
                {"safety_box", c.safety_box},
                {"min_goal_separation", c.min_goal_separation},
                {"hysteresis_margin", c.hysteresis_margin},
                {"max_ticks", c.max_ticks},
                {"tracker", {{"omega_n", c.tracker.omega_n},
                             {"v_max", c.tracker.v_max},
                             {"substeps", c.tracker.substeps}}},
                {"dmp", {{"tau", c.dmp.tau},
                         {"kp", c.dmp.kp},
                         {"kd", c.dmp.kd},
                         {"n_basis", c.dmp.n_basis},
                         {"phase_decay", c.dmp.phase_decay},
                         {"dt", c.dmp.dt},
                         {"v_max", c.dmp.v_max}}}};
}

json to_json(const RobotState& r) {
    return json{{"y", to_json(r.y)}, {"dy", to_json(r.dy)}, {"heading", r.heading},
                {"radius", r.radius}};
}

json to_json(const Obstacle& ob) {
    return json{{"pos", to_json(ob.pos)},
                {"radius", ob.radius},
                {"speed", ob.speed},
                {"activated", ob.activated},
                {"activation_progress", ob.activation_progress}};
}

json to_json(const TickRecord& rec) {
    json obstacles = json::array();
    for (const Obstacle& ob : rec.obstacles) {
        obstacles.push_back(json{{"pos", to_json(ob.pos)}, {"activated", ob.activated}});
    }
    return json{{"type", "tick"},
                {"tick", rec.tick},
                {"robot", to_json(rec.robot)},
                {"cmd", {{"u", to_json(rec.cmd.u)}, {"rot", rec.cmd.rot},
                         {"active", rec.cmd.active()}}},
                {"reference", to_json(rec.reference)},
                {"active_goal", rec.active_goal},
                {"target_index", rec.target_index},
                {"schedule_index", rec.schedule_index},
                {"progress", rec.progress},
                {"phase", rec.phase},
                {"colliding", rec.colliding},
                {"mode", rec.mode.to_string()},
                {"obstacles", obstacles}};
}

Scene scene_from_json(const json& j) {
    Scene s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.task = parse_task(j.at("task").get<std::string>());
    for (const json& g : j.at("goals")) {
        s.goals.push_back(vec_from_json(g));
    }
    s.target_index = j.at("target_index").get<std::size_t>();
    s.switch_schedule = j.at("switch_schedule").get<std::vector<double>>();
    s.target_sequence = j.at("target_sequence").get<std::vector<std::size_t>>();
    for (const json& ob : j.at("obstacles")) {
        s.obstacles.push_back(obstacle_from_json(ob));
    }
    s.start.position = vec_from_json(j.at("start").at("position"));
    s.start.heading = j.at("start").at("heading").get<double>();
    s.success_radius = j.at("success_radius").get<double>();
    return s;
}

WorldConfig config_from_json(const json& j) {
    WorldConfig c;
    c.dt = j.at("dt").get<double>();
    c.robot_radius = j.at("robot_radius").get<double>();
    c.obstacle_radius = j.at("obstacle_radius").get<double>();
    c.obstacle_speed = j.at("obstacle_speed").get<double>();
    c.success_radius = j.at("success_radius").get<double>();
    c.safety_box = j.at("safety_box").get<double>();
    c.min_goal_separation = j.at("min_goal_separation").get<double>();
    c.hysteresis_margin = j.at("hysteresis_margin").get<double>();
    c.max_ticks = j.at("max_ticks").get<std::size_t>();
    const json& t = j.at("tracker");
    c.tracker.omega_n = t.at("omega_n").get<double>();
    c.tracker.v_max = t.at("v_max").get<double>();
    c.tracker.substeps = t.at("substeps").get<int>();
    const json& d = j.at("dmp");
    c.dmp.tau = d.at("tau").get<double>();
    c.dmp.kp = d.at("kp").get<double>();
    c.dmp.kd = d.at("kd").get<double>();
    c.dmp.n_basis = d.at("n_basis").get<std::size_t>();
    c.dmp.phase_decay = d.at("phase_decay").get<double>();
    c.dmp.dt = d.at("dt").get<double>();
    c.dmp.v_max = d.at("v_max").get<double>();
    return c;
}

TickRecord tick_from_json(const json& j) {
    TickRecord rec;
    rec.tick = j.at("tick").get<std::size_t>();
    rec.robot = robot_from_json(j.at("robot"));
    rec.cmd.u = vec_from_json(j.at("cmd").at("u"));
    rec.cmd.rot = j.at("cmd").at("rot").get<double>();
    rec.reference = vec_from_json(j.at("reference"));
    rec.active_goal = j.at("active_goal").get<std::size_t>();
    rec.target_index = j.at("target_index").get<std::size_t>();
    rec.schedule_index = j.at("schedule_index").get<std::size_t>();
    rec.progress = j.at("progress").get<double>();
    rec.phase = j.at("phase").get<double>();
    rec.colliding = j.at("colliding").get<bool>();
    rec.mode = BlendMode::parse(j.at("mode").get<std::string>());
    for (const json& ob : j.at("obstacles")) {
        Obstacle o;
        o.pos = vec_from_json(ob.at("pos"));
        o.activated = ob.at("activated").get<bool>();
        rec.obstacles.push_back(o);
    }
    return rec;
}

std::string header_line(const TrialLog& log) {
    const json j{{"type", "header"},
                 {"version", log.version},
                 {"mode", log.mode.to_string()},
                 {"operator", log.operator_name},
                 {"scene", to_json(log.scene)},
                 {"config", to_json(log.config)}};
    return j.dump();
}

std::string tick_line(const TickRecord& rec) {
    return to_json(rec).dump();
}

std::string end_line(const TrialLog& log) {
    const json j{{"type", "end"}, {"outcome", to_string(log.outcome)},
                 {"ticks", log.ticks.size()}};
    return j.dump();
}

std::string serialize_log(const TrialLog& log) {
    std::string out = header_line(log);
    out += '\n';
    for (const TickRecord& rec : log.ticks) {
        out += tick_line(rec);
        out += '\n';
    }
    if (log.outcome != Outcome::Running) {
        out += end_line(log);
        out += '\n';
    }
    return out;
}

void write_log(const TrialLog& log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw LogFormatError("cannot open " + path.string() + " for writing");
    }
    out << serialize_log(log);
}

TrialLog parse_log(std::istream& in) {
    TrialLog log;
    bool have_header = false;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            const json j = json::parse(line);
            const std::string type = j.at("type").get<std::string>();
            if (type == "header") {
                log.version = j.at("version").get<int>();
                if (log.version != kLogVersion) {
                    throw LogFormatError("unsupported log version " + std::to_string(log.version));
                }
                log.mode = BlendMode::parse(j.at("mode").get<std::string>());
                log.operator_name = j.at("operator").get<std::string>();
                log.scene = scene_from_json(j.at("scene"));
                log.config = config_from_json(j.at("config"));
                have_header = true;
            } else if (type == "tick") {
                if (!have_header) {
                    throw LogFormatError("tick record before header");
                }
                TickRecord rec = tick_from_json(j);
                // Tick records carry only the moving parts of each obstacle.
                const auto& spawn = log.scene.obstacles;
                if (rec.obstacles.size() == spawn.size()) {
                    for (std::size_t i = 0; i < spawn.size(); ++i) {
                        rec.obstacles[i].radius = spawn[i].radius;
                        rec.obstacles[i].speed = spawn[i].speed;
                        rec.obstacles[i].activation_progress = spawn[i].activation_progress;
                    }
                }
                log.ticks.push_back(std::move(rec));
            } else if (type == "end") {
                log.outcome = parse_outcome(j.at("outcome").get<std::string>());
            } else {
                throw LogFormatError("unknown record type '" + type + "'");
            }
        } catch (const LogFormatError&) {
            throw;
        } catch (const std::exception& e) {
            throw LogFormatError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!have_header) {
        throw LogFormatError("log has no header record");
    }
    return log;
}

TrialLog parse_log(const std::string& text) {
    std::istringstream in(text);
    return parse_log(in);
}

TrialLog read_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw LogFormatError("cannot open " + path.string());
    }
    return parse_log(in);
}

}  // namespace pbp
