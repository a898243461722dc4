#include "pbp/server.hpp"

#include "pbp/errors.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <deque>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace pbp {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

namespace {

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

constexpr std::size_t kMaxPendingFrames = 32;
constexpr auto kPumpInterval = std::chrono::milliseconds(5);

Response make_response(const Request& req, http::status status, std::string body,
                       const std::string& content_type = "application/json") {
    Response res{status, req.version()};
    res.set(http::field::server, "pbp");
    res.set(http::field::content_type, content_type);
    res.set(http::field::access_control_allow_origin, "*");
    res.keep_alive(req.keep_alive());
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
}

Response json_response(const Request& req, http::status status, const json& body) {
    return make_response(req, status, body.dump());
}

Response error_response(const Request& req, http::status status, const std::string& kind,
                        const std::string& message) {
    return json_response(req, status, {{"kind", kind}, {"message", message}});
}

http::status status_for(const Error& e) {
    if (e.kind() == "UnknownSession") {
        return http::status::not_found;
    }
    return http::status::bad_request;
}

json metrics_json(const TrialMetrics& m) {
    return {{"intervention_ratio", m.intervention_ratio},
            {"collision_ratio", m.collision_ratio},
            {"task_time", m.task_time}};
}

// Splits "/a/b/c" into {"a","b","c"}, ignoring a query string.
std::vector<std::string> path_parts(std::string_view target) {
    target = target.substr(0, target.find('?'));
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (pos < target.size()) {
        if (target[pos] == '/') {
            ++pos;
            continue;
        }
        const std::size_t end = std::min(target.find('/', pos), target.size());
        parts.emplace_back(target.substr(pos, end - pos));
        pos = end;
    }
    return parts;
}

std::string mime_type(const std::filesystem::path& p) {
    const std::string ext = p.extension().string();
    if (ext == ".html") return "text/html";
    if (ext == ".js") return "application/javascript";
    if (ext == ".css") return "text/css";
    if (ext == ".json") return "application/json";
    if (ext == ".svg") return "image/svg+xml";
    if (ext == ".png") return "image/png";
    return "application/octet-stream";
}

Response create_session(SessionManager& sessions, const Request& req) {
    json body;
    try {
        body = req.body().empty() ? json::object() : json::parse(req.body());
    } catch (const json::parse_error& e) {
        return error_response(req, http::status::bad_request, "MalformedCommand", e.what());
    }
    if (!body.is_object()) {
        return error_response(req, http::status::bad_request, "MalformedCommand",
                              "body must be a JSON object");
    }
    try {
        const Task task = parse_task(body.value("task", std::string("reach")));
        std::string mode_text = body.value("mode", std::string("alt"));
        if (mode_text == "explicit") {
            if (!body.contains("alpha") || !body["alpha"].is_number()) {
                throw InvalidMode("explicit mode needs a numeric 'alpha'");
            }
            mode_text += ":" + body["alpha"].dump();
        }
        const BlendMode mode = BlendMode::parse(mode_text);
        if (body.contains("seed") && !body["seed"].is_number_unsigned()) {
            throw ConfigInvalid("'seed' must be a non-negative integer");
        }
        const std::uint64_t seed = body.value("seed", std::uint64_t{0});
        const SessionManager::Created created = sessions.create(task, mode, seed);
        return json_response(req, http::status::created,
                             {{"id", created.id}, {"snapshot", created.snapshot}});
    } catch (const Error& e) {
        return error_response(req, http::status::bad_request, e.kind(), e.what());
    }
}

Response end_session(SessionManager& sessions, const Request& req, const std::string& id) {
    try {
        const EndResult r = sessions.end(id);
        json out{{"id", r.id}, {"outcome", to_string(r.outcome)}, {"metrics", metrics_json(r.metrics)}};
        out["log"] = r.log_path ? json(r.log_path->string()) : json(nullptr);
        return json_response(req, http::status::ok, out);
    } catch (const Error& e) {
        return error_response(req, status_for(e), e.kind(), e.what());
    }
}

// ---------------------------------------------------------------------------

class WsSession : public std::enable_shared_from_this<WsSession> {
public:
    WsSession(tcp::socket socket, std::shared_ptr<Session> session)
        : ws_(std::move(socket)),
          timer_(ws_.get_executor()),
          session_(std::move(session)),
          sub_(session_->subscribe()) {}

    ~WsSession() { session_->unsubscribe(sub_); }

    void run(Request req) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
    }

private:
    void on_accept(beast::error_code ec) {
        if (ec) {
            return;
        }
        // Start with the current state so a client renders immediately.
        enqueue(std::make_shared<const std::string>(session_->snapshot().dump()));
        do_read();
        pump();
    }

    void do_read() {
        ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
    }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec) {
            closing_ = true;
            timer_.cancel();
            return;
        }
        const std::string text = beast::buffers_to_string(buffer_.data());
        buffer_.consume(buffer_.size());
        json reply;
        try {
            reply = session_->submit(parse_client_message(text)).to_json();
        } catch (const Error& e) {
            reply = error_message(e.kind(), e.what());
        }
        enqueue(std::make_shared<const std::string>(reply.dump()), true);
        do_read();
    }

    void pump() {
        if (closing_) {
            return;
        }
        for (auto& frame : sub_->drain()) {
            const bool is_end = frame->find("\"t\":\"end\"") != std::string::npos;
            saw_end_ = saw_end_ || is_end;
            enqueue(std::move(frame), is_end);
        }
        if (sub_->closed() && saw_end_ && queue_.empty() && !writing_) {
            closing_ = true;
            ws_.async_close(websocket::close_code::normal,
                            [self = shared_from_this()](beast::error_code) {});
            return;
        }
        timer_.expires_after(kPumpInterval);
        timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
            if (!ec) {
                self->pump();
            }
        });
    }

    void enqueue(BroadcastChannel::Message frame, bool reliable = false) {
        if (!reliable && queue_.size() >= kMaxPendingFrames) {
            return;  // slow consumer: drop state frames, keep replies
        }
        queue_.push_back(std::move(frame));
        if (!writing_) {
            do_write();
        }
    }

    void do_write() {
        if (queue_.empty() || closing_) {
            writing_ = false;
            return;
        }
        writing_ = true;
        ws_.text(true);
        ws_.async_write(asio::buffer(*queue_.front()),
                        beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
    }

    void on_write(beast::error_code ec, std::size_t) {
        queue_.pop_front();
        if (ec) {
            writing_ = false;
            closing_ = true;
            timer_.cancel();
            return;
        }
        do_write();
    }

    websocket::stream<beast::tcp_stream> ws_;
    asio::steady_timer timer_;
    beast::flat_buffer buffer_;
    std::shared_ptr<Session> session_;
    std::shared_ptr<BroadcastChannel::Subscription> sub_;
    std::deque<BroadcastChannel::Message> queue_;
    bool writing_ = false;
    bool closing_ = false;
    bool saw_end_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
public:
    HttpSession(tcp::socket socket, SessionManager& sessions, const ServerConfig& config)
        : stream_(std::move(socket)), sessions_(sessions), config_(config) {}

    void run() { do_read(); }

private:
    void do_read() {
        req_ = {};
        stream_.expires_after(std::chrono::seconds(30));
        http::async_read(stream_, buffer_, req_,
                         beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
    }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec) {
            stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
            return;
        }
        const std::vector<std::string> parts = path_parts(std::string_view(req_.target().data(), req_.target().size()));
        if (websocket::is_upgrade(req_)) {
            if (parts.size() == 2 && parts[0] == "session") {
                try {
                    auto session = sessions_.get(parts[1]);
                    stream_.expires_never();
                    std::make_shared<WsSession>(stream_.release_socket(), std::move(session))
                        ->run(std::move(req_));
                    return;
                } catch (const Error& e) {
                    send(error_response(req_, status_for(e), e.kind(), e.what()));
                    return;
                }
            }
            send(error_response(req_, http::status::not_found, "NotFound", "no such endpoint"));
            return;
        }
        send(route(parts));
    }

    Response route(const std::vector<std::string>& parts) {
        const http::verb verb = req_.method();
        if (verb == http::verb::options) {
            Response res = make_response(req_, http::status::no_content, "");
            res.set(http::field::access_control_allow_methods, "GET, POST, DELETE, OPTIONS");
            res.set(http::field::access_control_allow_headers, "Content-Type");
            return res;
        }
        if (!parts.empty() && parts[0] == "sessions") {
            if (parts.size() == 1 && verb == http::verb::post) {
                return create_session(sessions_, req_);
            }
            if (parts.size() == 2 && verb == http::verb::delete_) {
                return end_session(sessions_, req_, parts[1]);
            }
            if (parts.size() == 3 && parts[2] == "log" && verb == http::verb::get) {
                try {
                    return make_response(req_, http::status::ok, sessions_.log_text(parts[1]),
                                         "application/x-ndjson");
                } catch (const Error& e) {
                    return error_response(req_, status_for(e), e.kind(), e.what());
                }
            }
            return error_response(req_, http::status::method_not_allowed, "MethodNotAllowed",
                                  "unsupported method for this path");
        }
        if (verb == http::verb::get && config_.static_dir) {
            return serve_static(parts);
        }
        return error_response(req_, http::status::not_found, "NotFound", "no such endpoint");
    }

    Response serve_static(const std::vector<std::string>& parts) {
        std::filesystem::path p = *config_.static_dir;
        for (const std::string& part : parts) {
            if (part == ".." || part == ".") {
                return error_response(req_, http::status::bad_request, "BadPath", "bad path");
            }
            p /= part;
        }
        if (std::filesystem::is_directory(p)) {
            p /= "index.html";
        }
        std::ifstream in(p, std::ios::binary);
        if (!in) {
            return error_response(req_, http::status::not_found, "NotFound", "no such file");
        }
        std::ostringstream body;
        body << in.rdbuf();
        return make_response(req_, http::status::ok, body.str(), mime_type(p));
    }

    void send(Response res) {
        auto sp = std::make_shared<Response>(std::move(res));
        const bool close = sp->need_eof();
        http::async_write(stream_, *sp,
                          [self = shared_from_this(), sp, close](beast::error_code ec, std::size_t) {
                              if (ec || close) {
                                  beast::error_code ignored;
                                  self->stream_.socket().shutdown(tcp::socket::shutdown_send,
                                                                  ignored);
                                  return;
                              }
                              self->do_read();
                          });
    }

    beast::tcp_stream stream_;
    beast::flat_buffer buffer_;
    Request req_;
    SessionManager& sessions_;
    const ServerConfig& config_;
};

}  // namespace

struct Server::Impl {
    Impl(SessionManager& s, ServerConfig c)
        : sessions(s), config(std::move(c)), ioc(std::max(1, config.threads)), acceptor(ioc) {
        const tcp::endpoint endpoint(asio::ip::make_address(config.address), config.port);
        acceptor.open(endpoint.protocol());
        acceptor.set_option(asio::socket_base::reuse_address(true));
        acceptor.bind(endpoint);
        acceptor.listen(asio::socket_base::max_listen_connections);
        do_accept();
    }

    void do_accept() {
        acceptor.async_accept(asio::make_strand(ioc), [this](beast::error_code ec, tcp::socket s) {
            if (ec) {
                return;
            }
            std::make_shared<HttpSession>(std::move(s), sessions, config)->run();
            do_accept();
        });
    }

    SessionManager& sessions;
    ServerConfig config;
    asio::io_context ioc;
    tcp::acceptor acceptor;
    std::vector<std::thread> workers;
};

Server::Server(SessionManager& sessions, ServerConfig config)
    : impl_(std::make_unique<Impl>(sessions, std::move(config))) {}

Server::~Server() {
    stop();
}

unsigned short Server::port() const {
    return impl_->acceptor.local_endpoint().port();
}

void Server::start() {
    for (int i = 0; i < std::max(1, impl_->config.threads); ++i) {
        impl_->workers.emplace_back([this] { impl_->ioc.run(); });
    }
}

void Server::run() {
    for (int i = 1; i < impl_->config.threads; ++i) {
        impl_->workers.emplace_back([this] { impl_->ioc.run(); });
    }
    impl_->ioc.run();
}

void Server::stop() {
    if (!impl_) {
        return;
    }
    impl_->ioc.stop();
    for (std::thread& t : impl_->workers) {
        if (t.joinable()) {
            t.join();
        }
    }
    impl_->workers.clear();
}

}  // namespace pbp
