#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "asset.hpp"
#include "http_api.hpp"
#include "mesh.hpp"
#include "mock.hpp"
#include "wire.hpp"

namespace meshforge
{
    /// Knobs for serving the mock backends remotely, including fault injection.
    struct MockBackendOptions
    {
        std::chrono::milliseconds delay{0}; // before every response
        int image_count_delta = 0;          // returns count + delta images
        bool mesh_mode = false;             // reconstruct answers {mode:"mesh"}
        int reject_status = 0;              // non-zero: every call fails with it
        std::string token;                  // required when non-empty
        double thickness = kDefaultExtrudeThickness;
    };

    struct MockBackendCounters
    {
        std::atomic<int> images{0};
        std::atomic<int> reconstruct{0};
        std::atomic<int> matte{0};
    };

    /// httplib server answering /v1/images, /v1/reconstruct and /v1/matte
    /// with the deterministic mocks. `counters` (optional) counts requests.
    inline std::unique_ptr<httplib::Server> make_mock_backend_server(MockBackendOptions opts,
                                                                     std::shared_ptr<MockBackendCounters> counters = {})
    {
        if (!counters)
            counters = std::make_shared<MockBackendCounters>();
        auto server = std::make_unique<httplib::Server>();

        auto handle = [opts, counters](std::atomic<int> MockBackendCounters::*counter, auto body_fn) {
            return [opts, counters, counter, body_fn](const httplib::Request& req, httplib::Response& res) {
                ++((*counters).*counter);
                if (opts.delay.count() > 0)
                    std::this_thread::sleep_for(opts.delay);
                if (!opts.token.empty() && req.get_header_value(wire::kTokenHeader) != opts.token)
                    return detail::send_error(res, 401, "missing or wrong token");
                if (opts.reject_status != 0)
                    return detail::send_error(res, opts.reject_status, "rejected by configuration");
                try
                {
                    detail::send_json(res, 200, body_fn(detail::parse_body(req)));
                }
                catch (const Error& e)
                {
                    detail::send_error(res, 422, e.what());
                }
                catch (const std::exception& e)
                {
                    detail::send_error(res, 400, e.what());
                }
            };
        };

        server->Post(wire::kImagesPath, handle(&MockBackendCounters::images, [opts](const nlohmann::json& j) {
                         auto req = wire::decode_image_request(j);
                         auto images = mock_generate_images(req);
                         if (opts.image_count_delta < 0)
                             images.resize(std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(images.size())
                                                                           + opts.image_count_delta));
                         for (int i = 0; i < opts.image_count_delta && !images.empty(); ++i)
                             images.push_back(images.back());
                         return wire::encode_images_response(images);
                     }));

        server->Post(wire::kReconstructPath, handle(&MockBackendCounters::reconstruct, [opts](const nlohmann::json& j) {
                         const auto image = decode_png<Rgba8>(base64_decode(wire::detail::get<std::string>(j, "image_png")));
                         const int n = wire::detail::get<int>(j, "resolution");
                         auto field = mock_reconstruct(image, n, opts.thickness);
                         if (!opts.mesh_mode)
                             return wire::encode_fields_response(field);
                         auto mesh = compute_vertex_normals(weld_vertices(extract_mesh(field), 1e-7));
                         return wire::encode_mesh_response(export_obj(mesh, "mesh").obj_text);
                     }));

        server->Post(wire::kMattePath, handle(&MockBackendCounters::matte, [](const nlohmann::json& j) {
                         const auto image = decode_png<Rgb8>(base64_decode(wire::detail::get<std::string>(j, "image_png")));
                         return nlohmann::json{{"image_png", base64_encode(encode_png(remove_background(image)))}};
                     }));

        return server;
    }
}
