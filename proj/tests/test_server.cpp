#include "pbp/server.hpp"
#include "pbp/trial_log.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <doctest.h>

#include <filesystem>
#include <string>

using namespace pbp;
using nlohmann::json;

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

struct Reply {
    unsigned status = 0;
    std::string content_type;
    std::string body;
};

Reply request(unsigned short port, http::verb verb, const std::string& target,
              const std::string& body = {}) {
    asio::io_context ioc;
    beast::tcp_stream stream(ioc);
    stream.connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), port));
    http::request<http::string_body> req{verb, target, 11};
    req.set(http::field::host, "localhost");
    req.keep_alive(false);
    if (!body.empty()) {
        req.set(http::field::content_type, "application/json");
        req.body() = body;
    }
    req.prepare_payload();
    http::write(stream, req);
    beast::flat_buffer buffer;
    http::response<http::string_body> res;
    http::read(stream, buffer, res);
    beast::error_code ec;
    stream.socket().shutdown(tcp::socket::shutdown_both, ec);
    return {res.result_int(), std::string(res[http::field::content_type]), res.body()};
}

class WsClient {
public:
    WsClient(unsigned short port, const std::string& target) : ws_(ioc_) {
        tcp::resolver resolver(ioc_);
        asio::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
        ws_.handshake("localhost", target);
    }

    void send(const json& j) { ws_.write(asio::buffer(j.dump())); }

    json read() {
        beast::flat_buffer buffer;
        ws_.read(buffer);
        return json::parse(beast::buffers_to_string(buffer.data()));
    }

    /// Reads until a frame with t == type arrives.
    json read_until(const std::string& type, int limit = 500) {
        for (int i = 0; i < limit; ++i) {
            json j = read();
            if (j.at("t") == type) {
                return j;
            }
        }
        FAIL("no '" << type << "' frame");
        return {};
    }

    websocket::stream<tcp::socket>& raw() { return ws_; }

private:
    asio::io_context ioc_;
    websocket::stream<tcp::socket> ws_;
};

}  // namespace

TEST_CASE("http and websocket front end") {
    const auto dir = std::filesystem::temp_directory_path() / "pbp_server_logs";
    std::filesystem::remove_all(dir);
    SessionConfig cfg;
    cfg.log_dir = dir;
    SessionManager sessions(cfg, true);
    ServerConfig scfg;
    scfg.port = 0;
    Server server(sessions, scfg);
    server.start();
    const unsigned short port = server.port();
    REQUIRE(port != 0);

    SUBCASE("create rejects bad input") {
        Reply r = request(port, http::verb::post, "/sessions", R"({"task":"reach","mode":"warp"})");
        CHECK(r.status == 400);
        CHECK(json::parse(r.body).at("kind") == "InvalidMode");
        r = request(port, http::verb::post, "/sessions", R"({"task":"fly"})");
        CHECK(r.status == 400);
        CHECK(json::parse(r.body).at("kind") == "ConfigInvalid");
        r = request(port, http::verb::post, "/sessions", "{oops");
        CHECK(r.status == 400);
        CHECK(json::parse(r.body).at("kind") == "MalformedCommand");
        r = request(port, http::verb::post, "/sessions", R"({"mode":"explicit","alpha":3})");
        CHECK(r.status == 400);
    }

    SUBCASE("unknown ids and paths") {
        CHECK(request(port, http::verb::delete_, "/sessions/0000").status == 404);
        CHECK(request(port, http::verb::get, "/sessions/0000/log").status == 404);
        CHECK(request(port, http::verb::get, "/nothing").status == 404);
        CHECK(request(port, http::verb::options, "/sessions").status == 204);
    }

    SUBCASE("a full session") {
        const Reply created =
            request(port, http::verb::post, "/sessions", R"({"task":"reach","mode":"alt","seed":42})");
        REQUIRE(created.status == 201);
        const json body = json::parse(created.body);
        const std::string id = body.at("id");
        CHECK(body.at("snapshot").at("t") == "state");
        CHECK(body.at("snapshot").at("goals") ==
              json::parse(request(port, http::verb::post, "/sessions",
                                  R"({"task":"reach","mode":"alt","seed":42})")
                              .body)
                  .at("snapshot")
                  .at("goals"));

        WsClient ws(port, "/session/" + id);
        const json first = ws.read();
        CHECK(first.at("t") == "state");

        ws.send({{"t", "cmd"}, {"u", {0.0, 5.0}}, {"rot", 0.0}});
        const json ack = ws.read_until("ack");
        CHECK(ack.at("of") == "cmd");
        CHECK(ack.at("clamped") == true);

        ws.send({{"t", "mode"}, {"mode", "explicit"}, {"alpha", 0.4}});
        CHECK(ws.read_until("ack").at("of") == "mode");
        const json state = ws.read_until("state");
        CHECK(state.at("tick").get<int>() > 0);

        ws.send({{"t", "mode"}, {"mode", "warp"}});
        const json err = ws.read_until("error");
        CHECK(err.at("kind") == "InvalidMode");
        ws.raw().text(true);
        ws.raw().write(asio::buffer(std::string("garbage")));
        CHECK(ws.read_until("error").at("kind") == "MalformedCommand");

        // Strictly increasing ticks across received state frames.
        int last = -1;
        for (int i = 0; i < 10; ++i) {
            const json s = ws.read_until("state");
            CHECK(s.at("tick").get<int>() > last);
            last = s.at("tick").get<int>();
        }

        const Reply live_log = request(port, http::verb::get, "/sessions/" + id + "/log");
        CHECK(live_log.status == 200);
        CHECK(live_log.content_type == "application/x-ndjson");

        const Reply ended = request(port, http::verb::delete_, "/sessions/" + id);
        REQUIRE(ended.status == 200);
        const json end = json::parse(ended.body);
        CHECK(end.at("id") == id);
        CHECK(end.at("metrics").contains("intervention_ratio"));
        const std::string path = end.at("log");
        CHECK(std::filesystem::exists(path));

        const json end_frame = ws.read_until("end");
        CHECK(end_frame.contains("outcome"));

        const Reply log = request(port, http::verb::get, "/sessions/" + id + "/log");
        CHECK(log.status == 200);
        const TrialLog parsed = parse_log(log.body);
        CHECK(parsed.scene.seed == 42);
        CHECK(serialize_log(replay_log(parsed)) == log.body);
        CHECK(request(port, http::verb::delete_, "/sessions/" + id).status == 404);
    }

    SUBCASE("websocket to an unknown session is refused") {
        CHECK_THROWS(WsClient(port, "/session/ffff"));
    }

    server.stop();
    std::filesystem::remove_all(dir);
}
