// Session API server.
//
//   meshforge-server --config meshforge.conf --port 8080
//
// Settings come from the config file, then MESHFORGE_* variables, then flags.

#include <iostream>

#include <CLI11.hpp>

#include <meshforge/config.hpp>
#include <meshforge/http_api.hpp>
#include <meshforge/service.hpp>

#include "signals.hpp"

using namespace meshforge;

int main(int argc, char** argv)
{
    CLI::App app{"MeshForge session API server."};
    std::optional<std::string> config_path;
    std::optional<std::string> host;
    std::optional<int> port;
    app.add_option("--config", config_path, "key = value config file");
    app.add_option("--host", host, "listen address");
    app.add_option("--port", port, "listen port (0 picks a free one)");
    CLI11_PARSE(app, argc, argv);

    ServiceConfig cfg;
    try
    {
        cfg = load_config(config_path ? std::optional<std::filesystem::path>(*config_path) : std::nullopt);
        if (host)
            cfg.host = *host;
        if (port)
            cfg.port = *port;
        validate(cfg);
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    const auto signals = block_shutdown_signals();
    try
    {
        ServiceOptions opts;
        opts.workers = cfg.workers;
        opts.persist_dir = cfg.persist_dir;
        opts.session_ttl = cfg.session_ttl;
        opts.default_seed = cfg.seed;
        PipelineService service(make_gateway(cfg), cfg.pipeline, opts);
        BackgroundServer server(make_api_server(service, cfg.token));
        server.start(cfg.host, cfg.port);
        std::cout << "listening on " << server.url() << std::endl;
        wait_for_shutdown_signal(signals);
        server.stop();
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
