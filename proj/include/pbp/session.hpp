#pragma once

#include "pbp/metrics.hpp"
#include "pbp/world.hpp"

#include <json.hpp>

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

namespace pbp {

struct SessionConfig {
    double hz = 30.0;
    WorldConfig world;
    /// Bound on the norm of the wire command u (dimensionless key units).
    double u_max = 1.0;
    /// Reference displacement per tick for a unit lateral/backward command (m).
    double command_gain = 0.02;
    /// Heading rate bound (rad/s).
    double max_turn_rate = 3.0;
    /// A command older than this many ticks decays to zero.
    std::size_t stale_ticks = 10;
    std::size_t preview_points = 50;
    std::size_t preview_horizon = 600;
    /// Where end_session writes <id>.jsonl. Logs stay in memory when unset.
    std::optional<std::filesystem::path> log_dir;

    /// Forward gain in Teleop: one unit command moves the reference as far as
    /// the primitive's velocity bound allows per tick.
    double teleop_forward_gain() const { return world.dmp.v_max * world.dt; }
};

// ---------------------------------------------------------------------------
// Wire protocol (JSON text frames on /session/{id}).

struct CmdMessage {
    Vec2 u = Vec2::Zero();  // robot frame: [forward, lateral]
    double rot = 0.0;
};
struct ModeMessage {
    BlendMode mode;
};
struct ResetMessage {
    std::uint64_t seed = 0;
    Task task = Task::Reach;
};
using ClientMessage = std::variant<CmdMessage, ModeMessage, ResetMessage>;

/// Throws MalformedCommand for bad shapes, InvalidMode for bad modes.
ClientMessage parse_client_message(const nlohmann::json& j);
ClientMessage parse_client_message(const std::string& text);

/// {"t":"error","kind":..,"message":..}
nlohmann::json error_message(const std::string& kind, const std::string& message);

struct Ack {
    std::size_t tick = 0;
    bool clamped = false;
    std::string what;  // "cmd", "mode", "reset"
    nlohmann::json to_json() const;
};

// ---------------------------------------------------------------------------

/// Bounded per-subscriber queues. A full queue drops its oldest entry.
class BroadcastChannel {
public:
    using Message = std::shared_ptr<const std::string>;

    class Subscription {
    public:
        /// Waits up to `timeout` for the next message.
        std::optional<Message> pop(std::chrono::milliseconds timeout);
        /// Everything queued right now.
        std::vector<Message> drain();
        std::size_t dropped() const;
        bool closed() const;

    private:
        friend class BroadcastChannel;
        explicit Subscription(std::size_t capacity) : capacity_(capacity) {}
        void push(const Message& m);
        void close();

        mutable std::mutex mutex_;
        std::condition_variable cv_;
        std::deque<Message> queue_;
        std::size_t capacity_;
        std::size_t dropped_ = 0;
        bool closed_ = false;
    };

    explicit BroadcastChannel(std::size_t capacity = 8) : capacity_(capacity) {}

    std::shared_ptr<Subscription> subscribe();
    void unsubscribe(const std::shared_ptr<Subscription>& sub);
    void publish(Message m);
    void close();

private:
    std::mutex mutex_;
    std::vector<std::shared_ptr<Subscription>> subs_;
    std::size_t capacity_;
    bool closed_ = false;
};

struct EndResult {
    std::string id;
    Outcome outcome = Outcome::Running;
    TrialMetrics metrics;
    std::optional<std::filesystem::path> log_path;
};

/// One live trial with its own control loop. Commands land in a single-slot
/// mailbox that the loop samples each tick; mode and reset requests queue up
/// and apply at the start of the next tick.
class Session {
public:
    Session(std::string id, Scene scene, BlendMode mode, SessionConfig config);
    ~Session();

    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    const std::string& id() const { return id_; }

    /// Starts the fixed-rate loop thread. Without it, advance() steps by hand.
    void start();
    void stop();
    bool running() const { return thread_.joinable(); }

    Ack submit(const ClientMessage& msg);

    /// One loop iteration: applies queued requests, samples the mailbox and
    /// ticks the trial unless it has finished. Returns false once finished.
    bool advance();

    nlohmann::json snapshot() const;
    std::shared_ptr<BroadcastChannel::Subscription> subscribe() { return channel_.subscribe(); }
    void unsubscribe(const std::shared_ptr<BroadcastChannel::Subscription>& s) {
        channel_.unsubscribe(s);
    }

    TrialLog log() const;
    std::size_t tick() const;
    /// Wall-clock gaps between consecutive loop ticks (ms).
    std::vector<double> tick_intervals() const;

    /// Stops the loop and closes the broadcast channel.
    EndResult finish();

private:
    struct Mailbox {
        CmdMessage cmd;
        std::size_t stamp = 0;
        bool has = false;
    };

    OperatorCommand world_command(std::size_t tick) const;
    nlohmann::json snapshot_locked() const;
    nlohmann::json end_event_locked() const;
    void loop();

    std::string id_;
    SessionConfig config_;

    mutable std::mutex mutex_;
    std::unique_ptr<TrialRunner> runner_;
    Mailbox mailbox_;
    std::deque<ClientMessage> requests_;
    bool end_published_ = false;
    std::vector<double> intervals_;
    std::optional<std::chrono::steady_clock::time_point> last_tick_time_;

    BroadcastChannel channel_;
    std::thread thread_;
    std::mutex stop_mutex_;
    std::condition_variable stop_cv_;
    bool stop_requested_ = false;
};

/// Snapshot view shared by live sessions: the trial state after `runner`'s
/// latest tick plus a preview rollout of the active primitive.
nlohmann::json make_snapshot(const TrialRunner& runner, const SessionConfig& config);

class SessionManager {
public:
    explicit SessionManager(SessionConfig config = {}, bool start_loops = true);
    ~SessionManager();

    struct Created {
        std::string id;
        nlohmann::json snapshot;
    };

    /// Throws InvalidMode, ConfigInvalid, SceneGenerationFailure.
    Created create(Task task, const BlendMode& mode, std::uint64_t seed);
    /// Same, from an explicit scene (used for oversized goal banks).
    Created create(Scene scene, const BlendMode& mode);

    /// Throws UnknownSession for ended or unknown ids.
    std::shared_ptr<Session> get(const std::string& id) const;
    Ack submit(const std::string& id, const ClientMessage& msg);
    EndResult end(const std::string& id);
    /// JSONL of a live or ended session. Throws UnknownSession.
    std::string log_text(const std::string& id) const;

    const SessionConfig& config() const { return config_; }

private:
    std::string next_id();

    SessionConfig config_;
    bool start_loops_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> live_;
    std::map<std::string, TrialLog> ended_;
    std::uint64_t counter_ = 0;
    std::uint64_t salt_;
};

}  // namespace pbp
