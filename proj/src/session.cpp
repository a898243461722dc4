#include "pbp/session.hpp"

#include "pbp/errors.hpp"
#include "pbp/trial_log.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace pbp {

using nlohmann::json;

namespace {

double number_field(const json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_number()) {
        throw MalformedCommand(std::string("field '") + key + "' must be a number");
    }
    const double v = it->get<double>();
    if (!std::isfinite(v)) {
        throw MalformedCommand(std::string("field '") + key + "' must be finite");
    }
    return v;
}

BlendMode mode_from_message(const json& j) {
    const auto it = j.find("mode");
    if (it == j.end() || !it->is_string()) {
        throw MalformedCommand("mode message needs a string 'mode'");
    }
    const std::string name = it->get<std::string>();
    if (name == "explicit") {
        const double alpha = j.contains("alpha") ? number_field(j, "alpha") : 0.5;
        if (!(alpha >= 0.0 && alpha <= 1.0)) {
            throw InvalidMode("alpha must lie in [0, 1]");
        }
        return BlendMode{BlendKind::ExplicitBlend, alpha};
    }
    return BlendMode::parse(name);
}

json point(const Vec2& v) {
    return json::array({v.x(), v.y()});
}

}  // namespace

ClientMessage parse_client_message(const json& j) {
    if (!j.is_object()) {
        throw MalformedCommand("message must be a JSON object");
    }
    const auto t = j.find("t");
    if (t == j.end() || !t->is_string()) {
        throw MalformedCommand("message needs a string 't'");
    }
    const std::string type = t->get<std::string>();
    if (type == "cmd") {
        const auto u = j.find("u");
        if (u == j.end() || !u->is_array() || u->size() != 2 || !(*u)[0].is_number() ||
            !(*u)[1].is_number()) {
            throw MalformedCommand("cmd needs 'u' as [forward, lateral]");
        }
        CmdMessage cmd;
        cmd.u = Vec2((*u)[0].get<double>(), (*u)[1].get<double>());
        cmd.rot = j.contains("rot") ? number_field(j, "rot") : 0.0;
        if (!all_finite(cmd.u)) {
            throw MalformedCommand("cmd 'u' must be finite");
        }
        return cmd;
    }
    if (type == "mode") {
        return ModeMessage{mode_from_message(j)};
    }
    if (type == "reset") {
        ResetMessage reset;
        const auto seed = j.find("seed");
        if (seed == j.end() || !seed->is_number_unsigned()) {
            throw MalformedCommand("reset needs a non-negative integer 'seed'");
        }
        reset.seed = seed->get<std::uint64_t>();
        if (j.contains("task")) {
            if (!j["task"].is_string()) {
                throw MalformedCommand("reset 'task' must be a string");
            }
            try {
                reset.task = parse_task(j["task"].get<std::string>());
            } catch (const ConfigInvalid& e) {
                throw MalformedCommand(e.what());
            }
        }
        return reset;
    }
    throw MalformedCommand("unknown message type '" + type + "'");
}

ClientMessage parse_client_message(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw MalformedCommand(std::string("invalid JSON: ") + e.what());
    }
    return parse_client_message(j);
}

json error_message(const std::string& kind, const std::string& message) {
    return {{"t", "error"}, {"kind", kind}, {"message", message}};
}

json Ack::to_json() const {
    return {{"t", "ack"}, {"of", what}, {"tick", tick}, {"clamped", clamped}};
}

// ---------------------------------------------------------------------------

void BroadcastChannel::Subscription::push(const Message& m) {
    {
        std::lock_guard lock(mutex_);
        if (closed_) {
            return;
        }
        if (queue_.size() >= capacity_) {
            queue_.pop_front();
            ++dropped_;
        }
        queue_.push_back(m);
    }
    cv_.notify_one();
}

void BroadcastChannel::Subscription::close() {
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
    }
    cv_.notify_all();
}

std::optional<BroadcastChannel::Message> BroadcastChannel::Subscription::pop(
    std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
    if (queue_.empty()) {
        return std::nullopt;
    }
    Message m = std::move(queue_.front());
    queue_.pop_front();
    return m;
}

std::vector<BroadcastChannel::Message> BroadcastChannel::Subscription::drain() {
    std::lock_guard lock(mutex_);
    std::vector<Message> out(queue_.begin(), queue_.end());
    queue_.clear();
    return out;
}

std::size_t BroadcastChannel::Subscription::dropped() const {
    std::lock_guard lock(mutex_);
    return dropped_;
}

bool BroadcastChannel::Subscription::closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
}

std::shared_ptr<BroadcastChannel::Subscription> BroadcastChannel::subscribe() {
    std::shared_ptr<Subscription> sub(new Subscription(capacity_));
    std::lock_guard lock(mutex_);
    if (closed_) {
        sub->close();
    } else {
        subs_.push_back(sub);
    }
    return sub;
}

void BroadcastChannel::unsubscribe(const std::shared_ptr<Subscription>& sub) {
    std::lock_guard lock(mutex_);
    std::erase(subs_, sub);
}

void BroadcastChannel::publish(Message m) {
    std::lock_guard lock(mutex_);
    for (const auto& s : subs_) {
        s->push(m);
    }
}

void BroadcastChannel::close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    for (const auto& s : subs_) {
        s->close();
    }
    subs_.clear();
}

// ---------------------------------------------------------------------------

json make_snapshot(const TrialRunner& runner, const SessionConfig& config) {
    const RobotState& robot = runner.robot();
    const Scene& scene = runner.scene();
    const TrialLog& log = runner.log();

    json j;
    j["t"] = "state";
    j["tick"] = runner.ticks();
    j["mode"] = runner.mode().to_string();
    j["robot"] = {{"pos", point(robot.y)},
                  {"vel", point(robot.dy)},
                  {"heading", robot.heading},
                  {"radius", robot.radius}};
    json goals = json::array();
    for (const Vec2& g : scene.goals) {
        goals.push_back(point(g));
    }
    j["goals"] = std::move(goals);
    j["target"] = runner.target_index();
    json obstacles = json::array();
    for (const Obstacle& ob : runner.obstacles()) {
        obstacles.push_back(
            {{"pos", point(ob.pos)}, {"radius", ob.radius}, {"activated", ob.activated}});
    }
    j["obstacles"] = std::move(obstacles);
    j["active_goal"] = runner.bank().active_index;
    j["colliding"] = !log.ticks.empty() && log.ticks.back().colliding;
    j["outcome"] = to_string(runner.outcome());

    if (runner.mode().kind != BlendKind::Teleop) {
        // Preview: the active primitive run forward on its own until it has
        // settled, thinned to a fixed number of points.
        const std::vector<Vec2> full = runner.bank().active().rollout(config.preview_horizon);
        json path = json::array();
        const std::size_t n = std::max<std::size_t>(config.preview_points, 2);
        for (std::size_t i = 0; i < n && !full.empty(); ++i) {
            const std::size_t k = i * (full.size() - 1) / (n - 1);
            path.push_back(point(full[k]));
        }
        j["dmp_path"] = std::move(path);
    }

    json metrics;
    if (log.ticks.empty()) {
        metrics = {{"intervention_ratio", 0.0}, {"collision_ratio", 0.0}, {"task_time", 0.0}};
    } else {
        metrics = {{"intervention_ratio", intervention_ratio(log)},
                   {"collision_ratio", collision_ratio(log)},
                   {"task_time", static_cast<double>(log.ticks.size()) * log.config.dt}};
    }
    j["metrics"] = std::move(metrics);
    return j;
}

Session::Session(std::string id, Scene scene, BlendMode mode, SessionConfig config)
    : id_(std::move(id)), config_(std::move(config)) {
    if (!(config_.hz > 0.0) || !(config_.u_max > 0.0) || config_.stale_ticks == 0) {
        throw ConfigInvalid("session needs hz > 0, u_max > 0 and stale_ticks > 0");
    }
    runner_ = std::make_unique<TrialRunner>(std::move(scene), mode, config_.world, "live");
}

Session::~Session() {
    stop();
}

void Session::start() {
    if (thread_.joinable()) {
        return;
    }
    {
        std::lock_guard lock(stop_mutex_);
        stop_requested_ = false;
    }
    thread_ = std::thread([this] { loop(); });
}

void Session::stop() {
    {
        std::lock_guard lock(stop_mutex_);
        stop_requested_ = true;
    }
    stop_cv_.notify_all();
    if (thread_.joinable()) {
        thread_.join();
    }
}

void Session::loop() {
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<clock::duration>(
        std::chrono::duration<double>(1.0 / config_.hz));
    auto deadline = clock::now() + period;
    std::unique_lock lock(stop_mutex_);
    while (!stop_requested_) {
        if (stop_cv_.wait_until(lock, deadline, [&] { return stop_requested_; })) {
            break;
        }
        lock.unlock();
        advance();
        lock.lock();
        deadline += period;
        const auto now = clock::now();
        if (now > deadline + period) {
            // Fell more than a tick behind; skip ahead rather than burst.
            deadline = now + period;
        }
    }
}

Ack Session::submit(const ClientMessage& msg) {
    std::lock_guard lock(mutex_);
    Ack ack;
    ack.tick = runner_->ticks();
    if (const auto* cmd = std::get_if<CmdMessage>(&msg)) {
        CmdMessage c = *cmd;
        const double norm = c.u.norm();
        if (norm > config_.u_max) {
            c.u *= config_.u_max / norm;
            ack.clamped = true;
        }
        if (std::fabs(c.rot) > config_.max_turn_rate) {
            c.rot = std::clamp(c.rot, -config_.max_turn_rate, config_.max_turn_rate);
            ack.clamped = true;
        }
        mailbox_ = Mailbox{c, runner_->ticks(), true};
        ack.what = "cmd";
    } else {
        requests_.push_back(msg);
        ack.what = std::holds_alternative<ModeMessage>(msg) ? "mode" : "reset";
    }
    return ack;
}

OperatorCommand Session::world_command(std::size_t tick) const {
    if (!mailbox_.has || tick - mailbox_.stamp >= config_.stale_ticks) {
        return {};
    }
    const CmdMessage& c = mailbox_.cmd;
    const bool pbp_like = runner_->mode().kind != BlendKind::Teleop;
    // Forward motion belongs to the primitive in the shared modes; the
    // operator may still back off.
    double forward = c.u.x();
    if (pbp_like) {
        forward = std::min(forward, 0.0) * config_.command_gain;
    } else {
        forward *= forward > 0.0 ? config_.teleop_forward_gain() : config_.command_gain;
    }
    const double lateral = c.u.y() * config_.command_gain;
    const double h = runner_->robot().heading;
    const double ch = std::cos(h);
    const double sh = std::sin(h);
    OperatorCommand out;
    out.u = Vec2(ch * forward - sh * lateral, sh * forward + ch * lateral);
    out.rot = c.rot;
    return out;
}

bool Session::advance() {
    std::string frame;
    std::string end_frame;
    std::vector<std::string> errors;
    bool live = true;
    {
        std::lock_guard lock(mutex_);
        while (!requests_.empty()) {
            const ClientMessage msg = std::move(requests_.front());
            requests_.pop_front();
            if (const auto* m = std::get_if<ModeMessage>(&msg)) {
                runner_->set_mode(m->mode);
            } else if (const auto* r = std::get_if<ResetMessage>(&msg)) {
                try {
                    const BlendMode mode = runner_->mode();
                    runner_ = std::make_unique<TrialRunner>(
                        generate_scene(r->seed, r->task, config_.world), mode, config_.world,
                        "live");
                    mailbox_ = Mailbox{};
                    end_published_ = false;
                    last_tick_time_.reset();
                } catch (const Error& e) {
                    errors.push_back(error_message(e.kind(), e.what()).dump());
                }
            }
        }
        if (!runner_->finished()) {
            const auto now = std::chrono::steady_clock::now();
            if (last_tick_time_) {
                intervals_.push_back(
                    std::chrono::duration<double, std::milli>(now - *last_tick_time_).count());
            }
            last_tick_time_ = now;
            runner_->tick(world_command(runner_->ticks()));
            frame = snapshot_locked().dump();
        }
        if (runner_->finished() && !end_published_) {
            end_frame = end_event_locked().dump();
            end_published_ = true;
        }
        live = !runner_->finished();
    }
    for (std::string& e : errors) {
        channel_.publish(std::make_shared<const std::string>(std::move(e)));
    }
    if (!frame.empty()) {
        channel_.publish(std::make_shared<const std::string>(std::move(frame)));
    }
    if (!end_frame.empty()) {
        channel_.publish(std::make_shared<const std::string>(std::move(end_frame)));
    }
    return live;
}

json Session::snapshot_locked() const {
    return make_snapshot(*runner_, config_);
}

json Session::end_event_locked() const {
    const TrialLog& log = runner_->log();
    json j{{"t", "end"}, {"outcome", to_string(log.outcome)}, {"tick", log.ticks.size()}};
    if (!log.ticks.empty()) {
        const TrialMetrics m = compute_metrics(log);
        j["metrics"] = {{"intervention_ratio", m.intervention_ratio},
                        {"collision_ratio", m.collision_ratio},
                        {"task_time", m.task_time}};
    } else {
        j["metrics"] = nullptr;
    }
    return j;
}

json Session::snapshot() const {
    std::lock_guard lock(mutex_);
    return snapshot_locked();
}

TrialLog Session::log() const {
    std::lock_guard lock(mutex_);
    return runner_->log();
}

std::size_t Session::tick() const {
    std::lock_guard lock(mutex_);
    return runner_->ticks();
}

std::vector<double> Session::tick_intervals() const {
    std::lock_guard lock(mutex_);
    return intervals_;
}

EndResult Session::finish() {
    stop();
    EndResult result;
    result.id = id_;
    std::string end_frame;
    {
        std::lock_guard lock(mutex_);
        const TrialLog& log = runner_->log();
        result.outcome = log.outcome;
        if (!log.ticks.empty()) {
            result.metrics = compute_metrics(log);
        }
        result.metrics.seed = log.scene.seed;
        result.metrics.mode = log.mode.to_string();
        result.metrics.task = to_string(log.scene.task);
        if (!end_published_) {
            end_frame = end_event_locked().dump();
            end_published_ = true;
        }
    }
    if (!end_frame.empty()) {
        channel_.publish(std::make_shared<const std::string>(std::move(end_frame)));
    }
    channel_.close();
    return result;
}

// ---------------------------------------------------------------------------

SessionManager::SessionManager(SessionConfig config, bool start_loops)
    : config_(std::move(config)), start_loops_(start_loops), salt_(std::random_device{}()) {
    salt_ = (salt_ << 32) ^ std::random_device{}();
}

SessionManager::~SessionManager() {
    std::map<std::string, std::shared_ptr<Session>> live;
    {
        std::lock_guard lock(mutex_);
        live.swap(live_);
    }
    for (auto& [id, s] : live) {
        s->stop();
    }
}

std::string SessionManager::next_id() {
    // splitmix finalizer over a counter: unique, and not guessable from the count.
    std::uint64_t z = salt_ + (++counter_) * 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(z));
    return buf;
}

SessionManager::Created SessionManager::create(Task task, const BlendMode& mode,
                                               std::uint64_t seed) {
    return create(generate_scene(seed, task, config_.world), mode);
}

SessionManager::Created SessionManager::create(Scene scene, const BlendMode& mode) {
    if (mode.kind == BlendKind::ExplicitBlend && !(mode.alpha >= 0.0 && mode.alpha <= 1.0)) {
        throw InvalidMode("alpha must lie in [0, 1]");
    }
    std::string id;
    {
        std::lock_guard lock(mutex_);
        id = next_id();
    }
    auto session = std::make_shared<Session>(id, std::move(scene), mode, config_);
    Created out{id, session->snapshot()};
    {
        std::lock_guard lock(mutex_);
        live_.emplace(id, session);
    }
    if (start_loops_) {
        session->start();
    }
    return out;
}

std::shared_ptr<Session> SessionManager::get(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = live_.find(id);
    if (it == live_.end()) {
        throw UnknownSession("no live session '" + id + "'");
    }
    return it->second;
}

Ack SessionManager::submit(const std::string& id, const ClientMessage& msg) {
    return get(id)->submit(msg);
}

EndResult SessionManager::end(const std::string& id) {
    std::shared_ptr<Session> session;
    {
        std::lock_guard lock(mutex_);
        const auto it = live_.find(id);
        if (it == live_.end()) {
            throw UnknownSession("no live session '" + id + "'");
        }
        session = it->second;
        live_.erase(it);
    }
    EndResult result = session->finish();
    TrialLog log = session->log();
    if (config_.log_dir) {
        std::filesystem::create_directories(*config_.log_dir);
        const std::filesystem::path path = *config_.log_dir / (id + ".jsonl");
        write_log(log, path);
        result.log_path = path;
    }
    std::lock_guard lock(mutex_);
    ended_.emplace(id, std::move(log));
    return result;
}

std::string SessionManager::log_text(const std::string& id) const {
    std::shared_ptr<Session> session;
    {
        std::lock_guard lock(mutex_);
        if (const auto it = ended_.find(id); it != ended_.end()) {
            return serialize_log(it->second);
        }
        const auto it = live_.find(id);
        if (it == live_.end()) {
            throw UnknownSession("no session '" + id + "'");
        }
        session = it->second;
    }
    return serialize_log(session->log());
}

}  // namespace pbp
