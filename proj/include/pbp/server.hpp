#pragma once

#include "pbp/session.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace pbp {

struct ServerConfig {
    std::string address = "127.0.0.1";
    /// 0 binds an ephemeral port; see Server::port().
    unsigned short port = 8080;
    std::optional<std::filesystem::path> static_dir;
    int threads = 1;
};

/// HTTP + WebSocket front end for a SessionManager.
///
///   POST   /sessions            {"task","mode","seed","alpha"?} -> 201 {"id","snapshot"}
///   DELETE /sessions/{id}       -> 200 {"id","outcome","metrics","log"}
///   GET    /sessions/{id}/log   -> 200 JSON Lines
///   GET    /session/{id}        WebSocket upgrade; see session.hpp for messages
class Server {
public:
    Server(SessionManager& sessions, ServerConfig config);
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    unsigned short port() const;

    /// Serves on background threads until stop().
    void start();
    /// Serves on the calling thread (plus extra workers) until stop().
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace pbp
