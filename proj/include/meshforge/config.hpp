#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gateway.hpp"
#include "pipeline.hpp"

namespace meshforge
{
    constexpr const char* kEnvPrefix = "MESHFORGE_";

    inline BackendEndpoint default_endpoint(BackendKind kind)
    {
        BackendEndpoint e;
        e.kind = kind;
        return e;
    }

    struct ServiceConfig
    {
        std::string host = "127.0.0.1";
        int port = 8080;
        BackendEndpoint image = default_endpoint(BackendKind::Image);
        BackendEndpoint recon = default_endpoint(BackendKind::Reconstruct);
        std::optional<BackendEndpoint> matting;
        bool matting_fallback = true;
        double extrude_thickness = kDefaultExtrudeThickness;
        PipelineConfig pipeline;
        std::optional<std::filesystem::path> persist_dir;
        std::chrono::seconds session_ttl{3600};
        std::string token; // required on every request when non-empty
        int workers = 2;
        std::optional<std::uint64_t> seed; // used when a generate request has no seed
    };

    namespace detail
    {
        inline std::string trim(std::string_view s)
        {
            const auto b = s.find_first_not_of(" \t\r\n");
            if (b == std::string_view::npos)
                return {};
            const auto e = s.find_last_not_of(" \t\r\n");
            return std::string(s.substr(b, e - b + 1));
        }

        template <class T>
        T parse_value(const std::string& key, const std::string& value)
        {
            std::istringstream in(value);
            T out{};
            if (!(in >> out) || !(in >> std::ws).eof())
                throw Error(ErrorCode::InvalidArgument, "config key '" + key + "': cannot parse '" + value + "'");
            return out;
        }

        inline bool parse_bool(const std::string& key, const std::string& value)
        {
            if (value == "true" || value == "1" || value == "yes" || value == "on")
                return true;
            if (value == "false" || value == "0" || value == "no" || value == "off")
                return false;
            throw Error(ErrorCode::InvalidArgument, "config key '" + key + "': expected a boolean, got '" + value + "'");
        }

        inline std::vector<BackendEndpoint*> remote_endpoints(ServiceConfig& cfg)
        {
            std::vector<BackendEndpoint*> out{&cfg.image, &cfg.recon};
            if (cfg.matting)
                out.push_back(&*cfg.matting);
            return out;
        }
    }

    /// Every key understood by apply_setting, in file order of the sample config.
    inline const std::vector<std::string>& config_keys()
    {
        static const std::vector<std::string> keys{
            "host", "port", "image_backend", "recon_backend", "matting_backend", "matting_fallback",
            "timeout_ms", "retry_limit", "max_inflight", "backend_token", "resolution", "candidates",
            "seed", "budget_ms", "persist_dir", "session_ttl_s", "token", "workers", "raster_width",
            "raster_height", "canny_sigma", "canny_low", "canny_high", "weight_scribble", "weight_canny",
            "weight_ip2p", "negative_prompt", "background_tolerance", "extrude_thickness", "weld_eps"};
        return keys;
    }

    inline void apply_setting(ServiceConfig& cfg, const std::string& key, const std::string& value)
    {
        using detail::parse_value;
        auto& gen = cfg.pipeline.generation;
        if (key == "host")
            cfg.host = value;
        else if (key == "port")
            cfg.port = parse_value<int>(key, value);
        else if (key == "image_backend")
            cfg.image.url = value;
        else if (key == "recon_backend")
            cfg.recon.url = value;
        else if (key == "matting_backend")
        {
            if (value.empty() || value == "builtin")
                cfg.matting.reset();
            else
            {
                BackendEndpoint ep = cfg.image;
                ep.kind = BackendKind::Matting;
                ep.url = value;
                cfg.matting = ep;
            }
        }
        else if (key == "matting_fallback")
            cfg.matting_fallback = detail::parse_bool(key, value);
        else if (key == "timeout_ms")
        {
            const auto ms = std::chrono::milliseconds(parse_value<long long>(key, value));
            for (auto* ep : detail::remote_endpoints(cfg))
                ep->timeout = ms;
        }
        else if (key == "retry_limit")
        {
            const int n = parse_value<int>(key, value);
            for (auto* ep : detail::remote_endpoints(cfg))
                ep->retry_limit = n;
        }
        else if (key == "max_inflight")
        {
            const int n = parse_value<int>(key, value);
            for (auto* ep : detail::remote_endpoints(cfg))
                ep->max_inflight = n;
        }
        else if (key == "backend_token")
        {
            for (auto* ep : detail::remote_endpoints(cfg))
                ep->token = value;
        }
        else if (key == "resolution")
            cfg.pipeline.resolution = parse_value<int>(key, value);
        else if (key == "candidates")
            gen.candidate_count = parse_value<int>(key, value);
        else if (key == "seed")
            cfg.seed = parse_value<std::uint64_t>(key, value);
        else if (key == "budget_ms")
            cfg.pipeline.budget_ms = parse_value<double>(key, value);
        else if (key == "persist_dir")
        {
            if (value.empty())
                cfg.persist_dir.reset();
            else
                cfg.persist_dir = value;
        }
        else if (key == "session_ttl_s")
            cfg.session_ttl = std::chrono::seconds(parse_value<long long>(key, value));
        else if (key == "token")
            cfg.token = value;
        else if (key == "workers")
            cfg.workers = parse_value<int>(key, value);
        else if (key == "raster_width")
            gen.raster_width = parse_value<int>(key, value);
        else if (key == "raster_height")
            gen.raster_height = parse_value<int>(key, value);
        else if (key == "canny_sigma")
            gen.canny.sigma = parse_value<double>(key, value);
        else if (key == "canny_low")
            gen.canny.low = parse_value<double>(key, value);
        else if (key == "canny_high")
            gen.canny.high = parse_value<double>(key, value);
        else if (key == "weight_scribble")
            gen.weights.scribble = parse_value<double>(key, value);
        else if (key == "weight_canny")
            gen.weights.canny = parse_value<double>(key, value);
        else if (key == "weight_ip2p")
            gen.weights.ip2p = parse_value<double>(key, value);
        else if (key == "negative_prompt")
        {
            if (value.empty())
                gen.negative_prompt.reset();
            else
                gen.negative_prompt = value;
        }
        else if (key == "background_tolerance")
            gen.background_tolerance = parse_value<double>(key, value);
        else if (key == "extrude_thickness")
            cfg.extrude_thickness = parse_value<double>(key, value);
        else if (key == "weld_eps")
            cfg.pipeline.weld_eps = parse_value<double>(key, value);
        else
            throw Error(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
    }

    inline void validate(const ServiceConfig& cfg)
    {
        if (cfg.port < 0 || cfg.port > 65535)
            throw Error(ErrorCode::InvalidArgument, "port out of range");
        validate(cfg.image);
        validate(cfg.recon);
        if (cfg.matting)
            validate(*cfg.matting);
        if (cfg.pipeline.resolution < kMinResolution || cfg.pipeline.resolution > kMaxResolution)
            throw Error(ErrorCode::InvalidResolution, "resolution must be in [2, 256]");
        if (cfg.pipeline.generation.candidate_count < 1)
            throw Error(ErrorCode::InvalidArgument, "candidates must be >= 1");
        if (cfg.pipeline.generation.raster_width < 1 || cfg.pipeline.generation.raster_height < 1)
            throw Error(ErrorCode::InvalidDimensions, "raster size must be positive");
        validate(cfg.pipeline.generation.weights);
        if (!(cfg.pipeline.budget_ms > 0))
            throw Error(ErrorCode::InvalidArgument, "budget_ms must be positive");
        if (cfg.session_ttl.count() <= 0)
            throw Error(ErrorCode::InvalidArgument, "session_ttl_s must be positive");
        if (cfg.workers < 1)
            throw Error(ErrorCode::InvalidArgument, "workers must be >= 1");
    }

    /// `key = value` lines; '#' starts a comment line.
    inline void apply_config_text(ServiceConfig& cfg, std::string_view text)
    {
        std::istringstream in{std::string(text)};
        std::string line;
        int line_no = 0;
        while (std::getline(in, line))
        {
            ++line_no;
            const auto t = detail::trim(line);
            if (t.empty() || t[0] == '#')
                continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw Error(ErrorCode::InvalidArgument, "config line " + std::to_string(line_no) + ": expected key = value");
            apply_setting(cfg, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
        }
    }

    using EnvLookup = std::function<const char*(const char*)>;

    /// MESHFORGE_<KEY> overrides, key upper-cased.
    inline void apply_env(ServiceConfig& cfg, const EnvLookup& env = [](const char* n) { return std::getenv(n); })
    {
        for (const auto& key : config_keys())
        {
            std::string name = kEnvPrefix;
            for (char c : key)
                name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
            if (const char* v = env(name.c_str()))
                apply_setting(cfg, key, detail::trim(v));
        }
    }

    /// Defaults, then the file (if any), then the environment.
    inline ServiceConfig load_config(const std::optional<std::filesystem::path>& file,
                                     const EnvLookup& env = [](const char* n) { return std::getenv(n); })
    {
        ServiceConfig cfg;
        if (file)
        {
            std::ifstream in(*file);
            if (!in)
                throw Error(ErrorCode::IoError, "cannot read config " + file->string());
            std::ostringstream buf;
            buf << in.rdbuf();
            apply_config_text(cfg, buf.str());
        }
        apply_env(cfg, env);
        validate(cfg);
        return cfg;
    }

    inline Gateway make_gateway(const ServiceConfig& cfg)
    {
        Gateway gw;
        gw.image = make_image_backend(cfg.image);
        gw.recon = make_recon_backend(cfg.recon, cfg.extrude_thickness);
        if (cfg.matting && !cfg.matting->is_mock())
            gw.matting = std::make_shared<HttpMattingBackend>(*cfg.matting);
        gw.matting_fallback = cfg.matting_fallback;
        return gw;
    }
}
