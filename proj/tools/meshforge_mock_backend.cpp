// Serves the deterministic mock image, reconstruction and matting backends
// over the backend wire protocol.

#include <iostream>

#include <CLI11.hpp>

#include <meshforge/backend_server.hpp>

#include "signals.hpp"

using namespace meshforge;

int main(int argc, char** argv)
{
    CLI::App app{"Mock inference backends over HTTP."};
    std::string host = "127.0.0.1";
    int port = 8090;
    long long delay_ms = 0;
    MockBackendOptions opts;
    app.add_option("--host", host, "listen address")->capture_default_str();
    app.add_option("--port", port, "listen port (0 picks a free one)")->capture_default_str();
    app.add_option("--delay-ms", delay_ms, "sleep before every response");
    app.add_flag("--mesh-mode", opts.mesh_mode, "reconstruct returns an OBJ instead of fields");
    app.add_option("--token", opts.token, "require this X-MeshForge-Token");
    app.add_option("--thickness", opts.thickness, "extrusion half-thickness")->capture_default_str();
    CLI11_PARSE(app, argc, argv);
    opts.delay = std::chrono::milliseconds(delay_ms);

    const auto signals = block_shutdown_signals();
    try
    {
        BackgroundServer server(make_mock_backend_server(opts));
        server.start(host, port);
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
