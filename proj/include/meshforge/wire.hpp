#pragma once

// JSON envelopes for the image, reconstruction and matting backends.
//
//   POST /v1/images       {prompt, negative_prompt, weights:{scribble,canny,ip2p},
//                          seed, count, scribble_png, canny_png}
//                      -> {images: [base64 PNG x count]}
//   POST /v1/reconstruct  {image_png, resolution}
//                      -> {mode:"fields", n, sdf, color, alpha, beta_x, beta_y, beta_z, gamma}
//                       | {mode:"mesh", obj}
//   POST /v1/matte        {image_png} -> {image_png}
//   errors: non-2xx with {error}
//
// Grids travel as base64 of raw little-endian float32, x-fastest.

#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "asset.hpp"
#include "codec.hpp"
#include "control.hpp"
#include "field.hpp"
#include "mesh.hpp"

namespace meshforge::wire
{
    constexpr const char* kImagesPath = "/v1/images";
    constexpr const char* kReconstructPath = "/v1/reconstruct";
    constexpr const char* kMattePath = "/v1/matte";
    constexpr const char* kTokenHeader = "X-MeshForge-Token";

    inline nlohmann::json encode_image_request(const ControlRequest& req)
    {
        nlohmann::json j;
        j["prompt"] = req.prompt;
        j["negative_prompt"] = req.negative_prompt ? nlohmann::json(*req.negative_prompt) : nlohmann::json(nullptr);
        j["weights"] = {{"scribble", req.weights.scribble}, {"canny", req.weights.canny}, {"ip2p", req.weights.ip2p}};
        j["seed"] = req.seed;
        j["count"] = req.candidate_count;
        j["scribble_png"] = base64_encode(encode_png(req.scribble));
        j["canny_png"] = base64_encode(encode_png(req.canny));
        return j;
    }

    namespace detail
    {
        template <class T>
        T get(const nlohmann::json& j, const char* key)
        {
            try
            {
                return j.at(key).get<T>();
            }
            catch (const nlohmann::json::exception& e)
            {
                throw Error(ErrorCode::BackendProtocolError, std::string("field '") + key + "': " + e.what());
            }
        }

        inline std::vector<float> grid(const nlohmann::json& j, const char* key, std::size_t expected)
        {
            auto values = unpack_f32_le(base64_decode(get<std::string>(j, key)));
            if (values.size() != expected)
                throw Error(ErrorCode::BackendProtocolError, std::string("grid '") + key + "' has "
                                                                 + std::to_string(values.size()) + " values, expected "
                                                                 + std::to_string(expected));
            return values;
        }
    }

    inline ControlRequest decode_image_request(const nlohmann::json& j)
    {
        ControlRequest req;
        req.prompt = detail::get<std::string>(j, "prompt");
        if (j.contains("negative_prompt") && !j["negative_prompt"].is_null())
            req.negative_prompt = detail::get<std::string>(j, "negative_prompt");
        const auto& w = j.at("weights");
        req.weights = {detail::get<double>(w, "scribble"), detail::get<double>(w, "canny"), detail::get<double>(w, "ip2p")};
        req.seed = detail::get<std::uint64_t>(j, "seed");
        req.candidate_count = detail::get<int>(j, "count");
        req.scribble = decode_png<std::uint8_t>(base64_decode(detail::get<std::string>(j, "scribble_png")));
        req.canny = decode_png<std::uint8_t>(base64_decode(detail::get<std::string>(j, "canny_png")));
        req.prompt_empty = req.prompt.empty();
        return req;
    }

    inline nlohmann::json encode_images_response(const std::vector<RgbaImage>& images)
    {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& img : images)
            arr.push_back(base64_encode(encode_png(img)));
        return {{"images", std::move(arr)}};
    }

    inline std::vector<RgbaImage> decode_images_response(const nlohmann::json& j, int expected_count)
    {
        const auto arr = detail::get<std::vector<std::string>>(j, "images");
        if (static_cast<int>(arr.size()) != expected_count)
            throw Error(ErrorCode::BackendProtocolError, "backend returned " + std::to_string(arr.size())
                                                             + " images, expected " + std::to_string(expected_count));
        std::vector<RgbaImage> out;
        for (const auto& b64 : arr)
            out.push_back(decode_png<Rgba8>(base64_decode(b64)));
        return out;
    }

    inline nlohmann::json encode_reconstruct_request(const RgbaImage& image, int resolution)
    {
        return {{"image_png", base64_encode(encode_png(image))}, {"resolution", resolution}};
    }

    using ReconstructPayload = std::variant<ReconstructionField, IndexedMesh>;

    inline nlohmann::json encode_fields_response(const ReconstructionField& f)
    {
        auto b64 = [](const std::vector<float>& v) { return base64_encode(pack_f32_le(v)); };
        return {{"mode", "fields"},  {"n", f.n},
                {"sdf", b64(f.sdf)}, {"color", b64(f.color)},
                {"alpha", b64(f.alpha)}, {"beta_x", b64(f.beta_x)},
                {"beta_y", b64(f.beta_y)}, {"beta_z", b64(f.beta_z)},
                {"gamma", b64(f.gamma)}};
    }

    inline nlohmann::json encode_mesh_response(const std::string& obj_text)
    {
        return {{"mode", "mesh"}, {"obj", base64_encode(obj_text)}};
    }

    inline ReconstructPayload decode_reconstruct_response(const nlohmann::json& j, int expected_n)
    {
        const auto mode = detail::get<std::string>(j, "mode");
        if (mode == "mesh")
        {
            try
            {
                return import_obj(base64_decode(detail::get<std::string>(j, "obj")));
            }
            catch (const Error& e)
            {
                throw Error(ErrorCode::BackendProtocolError, std::string("mesh payload: ") + e.what());
            }
        }
        if (mode != "fields")
            throw Error(ErrorCode::BackendProtocolError, "unknown reconstruct mode '" + mode + "'");

        const int n = detail::get<int>(j, "n");
        if (n != expected_n)
            throw Error(ErrorCode::BackendProtocolError, "backend returned resolution " + std::to_string(n));
        ReconstructionField f(n);
        f.sdf = detail::grid(j, "sdf", f.corner_count());
        f.color = detail::grid(j, "color", 3 * f.corner_count());
        f.alpha = detail::grid(j, "alpha", f.corner_count());
        f.beta_x = detail::grid(j, "beta_x", f.edge_count_per_axis());
        f.beta_y = detail::grid(j, "beta_y", f.edge_count_per_axis());
        f.beta_z = detail::grid(j, "beta_z", f.edge_count_per_axis());
        f.gamma = detail::grid(j, "gamma", f.cell_count());
        try
        {
            validate(f);
        }
        catch (const Error& e)
        {
            throw Error(ErrorCode::BackendProtocolError, e.what());
        }
        return f;
    }

    inline nlohmann::json error_body(const std::string& message)
    {
        return {{"error", message}};
    }
}
