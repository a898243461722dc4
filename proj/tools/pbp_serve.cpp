// Live shared-control server.

#include "pbp/errors.hpp"
#include "pbp/server.hpp"

#include <CLI11.hpp>

#include <pthread.h>
#include <csignal>
#include <cstdio>

int main(int argc, char** argv) {
    CLI::App app{"Shared-control session server"};
    pbp::ServerConfig server;
    pbp::SessionConfig session;
    std::string log_dir = "logs";
    std::string static_dir;
    app.add_option("--port", server.port, "TCP port")->capture_default_str();
    app.add_option("--address", server.address, "Bind address")->capture_default_str();
    app.add_option("--hz", session.hz, "Control loop rate")->capture_default_str();
    app.add_option("--log-dir", log_dir, "Where ended sessions write their logs")
        ->capture_default_str();
    app.add_option("--static", static_dir, "Directory served for plain GET requests");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    if (!(session.hz > 0.0)) {
        std::fprintf(stderr, "error: --hz must be positive\n");
        return 2;
    }
    session.log_dir = log_dir;
    if (!static_dir.empty()) {
        server.static_dir = static_dir;
    }

    try {
        pbp::SessionManager sessions(session);
        pbp::Server srv(sessions, server);
        std::fprintf(stderr, "listening on %s:%u at %.1f Hz\n", server.address.c_str(),
                     static_cast<unsigned>(srv.port()), session.hz);

        sigset_t set;
        sigemptyset(&set);
        sigaddset(&set, SIGINT);
        sigaddset(&set, SIGTERM);
        pthread_sigmask(SIG_BLOCK, &set, nullptr);
        srv.start();
        int sig = 0;
        sigwait(&set, &sig);
        std::fprintf(stderr, "shutting down\n");
        srv.stop();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
