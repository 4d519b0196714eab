#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <meshforge/asset.hpp>
#include <meshforge/session.hpp>

#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace meshforge;

namespace
{
    struct RunResult
    {
        int exit_code = -1;
        std::string output;
    };

    RunResult run_cli(const std::string& args)
    {
        const std::string cmd = std::string(MESHFORGE_CLI_PATH) + " " + args + " 2>&1";
        RunResult r;
        FILE* pipe = popen(cmd.c_str(), "r");
        if (!pipe)
            return r;
        std::array<char, 4096> buf;
        while (const auto n = std::fread(buf.data(), 1, buf.size(), pipe))
            r.output.append(buf.data(), n);
        const int status = pclose(pipe);
        r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        return r;
    }

    std::string slurp(const fs::path& p)
    {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    }

    struct TempDir
    {
        fs::path path = fs::temp_directory_path() / ("meshforge-cli-" + new_session_id());
        TempDir() { fs::create_directories(path); }
        ~TempDir() { fs::remove_all(path); }
    };

    const std::string kSample = std::string(MESHFORGE_SAMPLES_DIR) + "/circle_sketch.json";
}

TEST(Cli, EndToEndWritesAllFiles)
{
    TempDir tmp;
    const auto out = tmp.path / "run";
    const auto r = run_cli("--sketch " + kSample + " --prompt 'a blue vase' --seed 4 --resolution 40 --out " + out.string());
    ASSERT_EQ(r.exit_code, 0) << r.output;
    EXPECT_EQ(r.output.rfind("Done session=", 0), 0u) << r.output;
    for (const char* field : {"image_infer=", "background_removal=", "reconstruct=", "extract=", "package=", "total="})
        EXPECT_NE(r.output.find(field), std::string::npos) << field;

    for (int i = 0; i < 4; ++i)
        EXPECT_TRUE(fs::exists(out / "candidates" / (std::to_string(i) + ".png")));
    const auto obj = slurp(out / "mesh.obj");
    const auto mtl = slurp(out / "material.mtl");
    const auto m = parse_manifest(slurp(out / "manifest.json"));
    EXPECT_EQ(m.sha256_obj, oracle::sha256(obj));
    EXPECT_EQ(m.sha256_mtl, oracle::sha256(mtl));
    EXPECT_EQ(m.prompt, "a blue vase");
    EXPECT_EQ(m.seed, 4u);
    EXPECT_TRUE(analyze_topology(import_obj(obj)).watertight);
}

TEST(Cli, SameSeedSameBytes)
{
    TempDir tmp;
    const std::string common = "--sketch " + kSample + " --prompt p --seed 9 --resolution 32 --select 1 --out ";
    ASSERT_EQ(run_cli(common + (tmp.path / "a").string()).exit_code, 0);
    ASSERT_EQ(run_cli(common + (tmp.path / "b").string()).exit_code, 0);
    const auto a = parse_manifest(slurp(tmp.path / "a" / "manifest.json"));
    const auto b = parse_manifest(slurp(tmp.path / "b" / "manifest.json"));
    EXPECT_EQ(a.sha256_obj, b.sha256_obj);
    EXPECT_EQ(a.sha256_mtl, b.sha256_mtl);
    EXPECT_EQ(a.vertices, b.vertices);
    EXPECT_EQ(a.triangles, b.triangles);
    EXPECT_EQ(slurp(tmp.path / "a" / "candidates" / "2.png"), slurp(tmp.path / "b" / "candidates" / "2.png"));
}

TEST(Cli, UsageErrorsExitTwo)
{
    EXPECT_EQ(run_cli("--prompt x").exit_code, 2);
    EXPECT_EQ(run_cli("--sketch " + kSample).exit_code, 2);
    EXPECT_EQ(run_cli("--sketch /nonexistent.json --prompt x").exit_code, 2);
    EXPECT_EQ(run_cli("--sketch " + kSample + " --prompt x --select 9").exit_code, 2);
    EXPECT_EQ(run_cli("--sketch " + kSample + " --prompt x --select first").exit_code, 2);
    EXPECT_EQ(run_cli("--sketch " + kSample + " --prompt x --resolution 1").exit_code, 2);
    const auto r = run_cli("--bogus");
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.output.find("--sketch"), std::string::npos);
}

TEST(Cli, PipelineFailureExitsOne)
{
    TempDir tmp;
    const auto blank = tmp.path / "blank.json";
    std::ofstream(blank) << R"({"version":1,"width_px":1024,"height_px":1024,"strokes":[]})";
    const auto r = run_cli("--sketch " + blank.string() + " --prompt x --out " + (tmp.path / "o").string());
    EXPECT_EQ(r.exit_code, 1) << r.output;
    EXPECT_NE(r.output.find("failed in stage background_removal"), std::string::npos) << r.output;
    EXPECT_NE(r.output.find("Failed session="), std::string::npos);

    const auto down = run_cli("--sketch " + kSample + " --prompt x --recon http://127.0.0.1:1 --out "
                              + (tmp.path / "d").string());
    EXPECT_EQ(down.exit_code, 1) << down.output;
    EXPECT_NE(down.output.find("failed in stage reconstruct"), std::string::npos) << down.output;
    EXPECT_TRUE(fs::exists(tmp.path / "d" / "candidates" / "0.png"));
}

TEST(Cli, SeedFallsBackToConfiguredSeed)
{
    TempDir tmp;
    ::setenv("MESHFORGE_SEED", "12", 1);
    const auto r = run_cli("--sketch " + kSample + " --prompt x --resolution 24 --out " + (tmp.path / "e").string());
    ::unsetenv("MESHFORGE_SEED");
    ASSERT_EQ(r.exit_code, 0) << r.output;
    EXPECT_EQ(parse_manifest(slurp(tmp.path / "e" / "manifest.json")).seed, 12u);

    ASSERT_EQ(run_cli("--sketch " + kSample + " --prompt x --resolution 24 --out " + (tmp.path / "d").string()).exit_code, 0);
    EXPECT_EQ(parse_manifest(slurp(tmp.path / "d" / "manifest.json")).seed, 0u);
}
