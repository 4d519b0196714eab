// Headless sketch -> mesh run.
//
//   meshforge --sketch circle.json --prompt "a red vase" --seed 7 --out out/
//
// Exit status: 0 Done, 1 Failed, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include <meshforge/config.hpp>
#include <meshforge/pipeline.hpp>
#include <meshforge/sketch.hpp>

namespace fs = std::filesystem;
using namespace meshforge;

namespace
{
    constexpr int kExitDone = 0;
    constexpr int kExitFailed = 1;
    constexpr int kExitUsage = 2;

    std::string read_file(const fs::path& p)
    {
        std::ifstream in(p, std::ios::binary);
        if (!in)
            throw Error(ErrorCode::IoError, "cannot read " + p.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        return buf.str();
    }

    void write_file(const fs::path& p, std::string_view bytes)
    {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out)
            throw Error(ErrorCode::IoError, "cannot write " + p.string());
    }

    std::string timing_line(const SessionRecord& s)
    {
        const auto& t = s.timings_ms;
        char buf[512];
        std::snprintf(buf, sizeof(buf),
                      "%s session=%s image_infer=%.1fms background_removal=%.1fms reconstruct=%.1fms "
                      "extract=%.1fms package=%.1fms total=%.1fms",
                      std::string(to_string(s.state)).c_str(), s.id.c_str(), t.image_infer, t.background_removal,
                      t.reconstruct, t.extract, t.package, t.total);
        std::string line = buf;
        if (s.budget_exceeded)
            line += " budget_exceeded";
        return line;
    }
}

int main(int argc, char** argv)
{
    CLI::App app{"Turn a sketch and a prompt into a textured mesh."};
    std::string sketch_path;
    std::string prompt;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> backend;
    std::optional<std::string> recon;
    std::optional<std::string> matting;
    std::optional<int> resolution;
    std::optional<int> candidates;
    std::string select = "auto";
    std::string out_dir = "meshforge-out";
    std::optional<std::string> config_path;

    app.add_option("--sketch", sketch_path, "sketch interchange document (JSON)")->required();
    app.add_option("--prompt", prompt, "text prompt (may be empty)")->required();
    app.add_option("--seed", seed, "generation seed (default: config seed, else 0)");
    app.add_option("--backend", backend, "image backend: mock or base URL");
    app.add_option("--recon", recon, "reconstruction backend: mock or base URL");
    app.add_option("--matting", matting, "matting backend URL (default: built-in)");
    app.add_option("--resolution", resolution, "extraction grid resolution N");
    app.add_option("--candidates", candidates, "number of candidate images");
    app.add_option("--select", select, "auto (candidate 0) or a candidate index")->capture_default_str();
    app.add_option("--out", out_dir, "output directory")->capture_default_str();
    app.add_option("--config", config_path, "key = value config file");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e)
    {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    ServiceConfig cfg;
    SketchCanvas sketch;
    int select_index = 0;
    try
    {
        cfg = load_config(config_path ? std::optional<fs::path>(*config_path) : std::nullopt);
        if (backend)
            cfg.image.url = *backend;
        if (recon)
            cfg.recon.url = *recon;
        if (matting)
            apply_setting(cfg, "matting_backend", *matting);
        if (resolution)
            cfg.pipeline.resolution = *resolution;
        if (candidates)
            cfg.pipeline.generation.candidate_count = *candidates;
        validate(cfg);

        if (select != "auto")
        {
            std::size_t used = 0;
            select_index = std::stoi(select, &used);
            if (used != select.size())
                throw Error(ErrorCode::InvalidArgument, "--select expects auto or an index");
        }
        if (select_index < 0 || select_index >= cfg.pipeline.generation.candidate_count)
            throw Error(ErrorCode::InvalidArgument, "--select index out of range");

        sketch = parse_sketch(read_file(sketch_path));
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try
    {
        const Gateway gw = make_gateway(cfg);
        SessionRecord s;
        s.id = new_session_id();
        transition(s, SessionState::Sketched);
        s.sketch = std::move(sketch);
        s.prompt = prompt;
        s.seed = seed.value_or(cfg.seed.value_or(0));
        s.candidate_count = cfg.pipeline.generation.candidate_count;

        run_generation(s, gw, cfg.pipeline);
        fs::create_directories(fs::path(out_dir) / "candidates");
        for (std::size_t i = 0; i < s.candidates.size(); ++i)
            write_file(fs::path(out_dir) / "candidates" / (std::to_string(i) + ".png"), encode_png(s.candidates[i].pixels));

        if (s.state == SessionState::AwaitingSelection)
            run_selection(s, select_index, gw, cfg.pipeline);

        if (s.state != SessionState::Done)
        {
            std::cerr << "failed in stage " << s.error->stage << ": " << s.error->message << "\n";
            std::cout << timing_line(s) << std::endl;
            return kExitFailed;
        }

        write_file(fs::path(out_dir) / "mesh.obj", s.asset->obj_text);
        write_file(fs::path(out_dir) / "material.mtl", s.asset->mtl_text);
        write_file(fs::path(out_dir) / "manifest.json", s.asset->manifest);
        std::cout << timing_line(s) << std::endl;
        return kExitDone;
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailed;
    }
}
