#pragma once

#include <memory>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "service.hpp"
#include "sketch.hpp"
#include "wire.hpp"

namespace meshforge
{
    inline int http_status(ErrorCode code)
    {
        switch (code)
        {
        case ErrorCode::NotFound: return 404;
        case ErrorCode::IllegalTransition: return 409;
        case ErrorCode::BackendUnavailable: return 503;
        case ErrorCode::MalformedDocument:
        case ErrorCode::InvalidStroke:
        case ErrorCode::UnsupportedVersion:
        case ErrorCode::InvalidDimensions:
        case ErrorCode::InvalidArgument:
        case ErrorCode::InvalidResolution:
        case ErrorCode::InvalidWeight: return 422;
        default: return 500;
        }
    }

    /// Owns an httplib::Server listening on a background thread.
    class BackgroundServer
    {
    public:
        explicit BackgroundServer(std::unique_ptr<httplib::Server> server) : server_(std::move(server)) {}

        ~BackgroundServer() { stop(); }

        BackgroundServer(const BackgroundServer&) = delete;
        BackgroundServer& operator=(const BackgroundServer&) = delete;

        /// Binds (port 0 picks a free one) and starts serving. Returns the port.
        int start(const std::string& host = "127.0.0.1", int port = 0)
        {
            if (port == 0)
                port_ = server_->bind_to_any_port(host);
            else
                port_ = server_->bind_to_port(host, port) ? port : -1;
            if (port_ < 0)
                throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
            host_ = host;
            thread_ = std::thread([this] { server_->listen_after_bind(); });
            server_->wait_until_ready();
            return port_;
        }

        /// Serves on the calling thread until stop() is called elsewhere.
        void run(const std::string& host, int port)
        {
            if (!server_->bind_to_port(host, port))
                throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
            host_ = host;
            port_ = port;
            server_->listen_after_bind();
        }

        void stop()
        {
            if (server_->is_running())
                server_->stop();
            if (thread_.joinable())
                thread_.join();
        }

        int port() const { return port_; }
        std::string url() const { return "http://" + host_ + ":" + std::to_string(port_); }
        httplib::Server& server() { return *server_; }

    private:
        std::unique_ptr<httplib::Server> server_;
        std::thread thread_;
        std::string host_ = "127.0.0.1";
        int port_ = -1;
    };

    namespace detail
    {
        inline void send_json(httplib::Response& res, int status, const nlohmann::json& body)
        {
            res.status = status;
            res.set_content(body.dump(), "application/json");
        }

        inline void send_error(httplib::Response& res, int status, const std::string& message)
        {
            send_json(res, status, wire::error_body(message));
        }

        /// Runs a handler, turning library errors into JSON error responses.
        template <class Fn>
        httplib::Server::Handler guarded(Fn fn)
        {
            return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
                try
                {
                    fn(req, res);
                }
                catch (const Error& e)
                {
                    send_error(res, http_status(e.code()), e.what());
                }
                catch (const std::exception& e)
                {
                    send_error(res, 500, e.what());
                }
            };
        }

        inline nlohmann::json parse_body(const httplib::Request& req)
        {
            try
            {
                auto j = nlohmann::json::parse(req.body);
                if (!j.is_object())
                    throw Error(ErrorCode::MalformedDocument, "request body must be a JSON object");
                return j;
            }
            catch (const nlohmann::json::exception& e)
            {
                throw Error(ErrorCode::MalformedDocument, e.what());
            }
        }

        inline GenerateRequest parse_generate(const nlohmann::json& j)
        {
            GenerateRequest g;
            if (!j.contains("prompt") || !j["prompt"].is_string())
                throw Error(ErrorCode::InvalidArgument, "'prompt' must be a string");
            g.prompt = j["prompt"].get<std::string>();
            if (j.contains("seed") && !j["seed"].is_null())
            {
                if (!j["seed"].is_number_unsigned())
                    throw Error(ErrorCode::InvalidArgument, "'seed' must be a non-negative integer");
                g.seed = j["seed"].get<std::uint64_t>();
            }
            if (j.contains("candidates") && !j["candidates"].is_null())
            {
                if (!j["candidates"].is_number_integer())
                    throw Error(ErrorCode::InvalidArgument, "'candidates' must be an integer");
                g.candidates = j["candidates"].get<int>();
            }
            return g;
        }
    }

    /// Session API over HTTP/1.1:
    ///   POST /v1/sessions                      -> 200 {session_id}
    ///   PUT  /v1/sessions/{id}/sketch          -> 204
    ///   POST /v1/sessions/{id}/generate        -> 202
    ///   GET  /v1/sessions/{id}                 -> 200 status
    ///   GET  /v1/sessions/{id}/candidates/{k}  -> 200 image/png
    ///   POST /v1/sessions/{id}/select          -> 202
    ///   GET  /v1/sessions/{id}/asset/manifest | mesh.obj | material.mtl
    /// Errors are {error} with 401/404/409/422/503.
    inline std::unique_ptr<httplib::Server> make_api_server(PipelineService& svc, std::string token = {})
    {
        using detail::guarded;
        auto server = std::make_unique<httplib::Server>();
        auto& s = *server;

        s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                               {"Access-Control-Allow-Headers", std::string("Content-Type, ") + wire::kTokenHeader},
                               {"Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS"}});

        s.set_pre_routing_handler([token](const httplib::Request& req, httplib::Response& res) {
            if (token.empty() || req.method == "OPTIONS" || req.get_header_value(wire::kTokenHeader) == token)
                return httplib::Server::HandlerResponse::Unhandled;
            detail::send_error(res, 401, "missing or wrong " + std::string(wire::kTokenHeader));
            return httplib::Server::HandlerResponse::Handled;
        });

        s.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
            if (res.body.empty())
                detail::send_error(res, res.status, "no route for " + req.method + " " + req.path);
        });

        s.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        const std::string sid = R"(/v1/sessions/([0-9a-f]+))";

        s.Post("/v1/sessions", guarded([&svc](const httplib::Request&, httplib::Response& res) {
                   detail::send_json(res, 200, {{"session_id", svc.create_session()}});
               }));

        s.Put(sid + "/sketch", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                  const std::string id = req.matches[1];
                  svc.require(id);
                  svc.put_sketch(id, parse_sketch(req.body));
                  res.status = 204;
              }));

        s.Post(sid + "/generate", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                   const std::string id = req.matches[1];
                   svc.require(id);
                   svc.generate(id, detail::parse_generate(detail::parse_body(req)));
                   detail::send_json(res, 202, svc.status(id));
               }));

        s.Get(sid, guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                  detail::send_json(res, 200, svc.status(req.matches[1]));
              }));

        s.Get(sid + R"(/candidates/(\d+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                  const std::string id = req.matches[1];
                  svc.require(id);
                  int k = -1;
                  try
                  {
                      k = std::stoi(req.matches[2]);
                  }
                  catch (const std::exception&)
                  {
                      throw Error(ErrorCode::NotFound, "candidate index out of range");
                  }
                  res.set_content(svc.candidate_png(id, k), "image/png");
              }));

        s.Post(sid + "/select", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                   const std::string id = req.matches[1];
                   svc.require(id);
                   const auto body = detail::parse_body(req);
                   if (!body.contains("index") || !body["index"].is_number_integer())
                       throw Error(ErrorCode::InvalidArgument, "'index' must be an integer");
                   const auto index = body["index"].get<long long>();
                   const int clamped = index < 0 || index > kMaxCandidates ? -1 : static_cast<int>(index);
                   svc.select(id, clamped);
                   detail::send_json(res, 202, svc.status(id));
               }));

        s.Get(sid + "/asset/manifest", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                  res.set_content(svc.asset(req.matches[1]).manifest, "application/json");
              }));

        s.Get(sid + "/asset/mesh.obj", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                  res.set_content(svc.asset(req.matches[1]).obj_text, "model/obj");
              }));

        s.Get(sid + "/asset/material.mtl", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                  res.set_content(svc.asset(req.matches[1]).mtl_text, "model/mtl");
              }));

        return server;
    }
}
