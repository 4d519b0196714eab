#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <future>
#include <random>
#include <set>

#include <meshforge/http_api.hpp>

#include "oracles.hpp"

using namespace meshforge;
using namespace std::chrono_literals;
using nlohmann::json;

namespace
{
    class UnavailableImages final : public ImageBackend
    {
    public:
        std::string id() const override { return "down"; }
        std::vector<CandidateImage> infer(const ControlRequest&) override { return {}; }
        bool available() const override { return false; }
    };

    /// Mock images that wait for a release signal first.
    class GatedImages final : public ImageBackend
    {
    public:
        explicit GatedImages(std::shared_future<void> gate) : gate_(std::move(gate)) {}
        std::string id() const override { return "gated"; }
        std::vector<CandidateImage> infer(const ControlRequest& req) override
        {
            gate_.wait();
            return MockImageBackend().infer(req);
        }

    private:
        std::shared_future<void> gate_;
    };

    PipelineConfig small_config()
    {
        PipelineConfig cfg;
        cfg.generation.raster_width = cfg.generation.raster_height = 96;
        cfg.generation.candidate_count = 2;
        cfg.resolution = 24;
        return cfg;
    }

    std::string circle_sketch_json(double r = 0.3)
    {
        SketchCanvas c;
        Stroke s;
        for (int i = 0; i <= 32; ++i)
        {
            const double t = 2.0 * 3.14159265358979 * i / 32;
            s.points.push_back({0.5 + r * std::cos(t), 0.5 + r * std::sin(t)});
        }
        s.width = 10.0;
        c.strokes.push_back(s);
        return serialize_sketch(c);
    }

    struct Api
    {
        PipelineService svc;
        BackgroundServer server;
        httplib::Client client;

        explicit Api(Gateway gw = make_mock_gateway(), ServiceOptions opts = {}, std::string token = {})
            : svc(std::move(gw), small_config(), std::move(opts)),
              server(make_api_server(svc, std::move(token))),
              client("127.0.0.1", server.start())
        {
            client.set_read_timeout(30, 0);
        }

        std::string create()
        {
            auto res = client.Post("/v1/sessions", "", "application/json");
            EXPECT_TRUE(res);
            EXPECT_EQ(res->status, 200);
            return json::parse(res->body).at("session_id").get<std::string>();
        }

        int put_sketch(const std::string& id, const std::string& body)
        {
            return client.Put("/v1/sessions/" + id + "/sketch", body, "application/json")->status;
        }

        int generate(const std::string& id, const json& body)
        {
            return client.Post("/v1/sessions/" + id + "/generate", body.dump(), "application/json")->status;
        }

        int select(const std::string& id, const json& body)
        {
            return client.Post("/v1/sessions/" + id + "/select", body.dump(), "application/json")->status;
        }

        json status(const std::string& id)
        {
            auto res = client.Get("/v1/sessions/" + id);
            EXPECT_EQ(res->status, 200);
            return json::parse(res->body);
        }

        json settle(const std::string& id)
        {
            EXPECT_TRUE(svc.wait_settled(id, 60s));
            return status(id);
        }
    };

    bool history_is_legal(const json& history)
    {
        std::vector<std::string> names;
        for (const auto& h : history)
            names.push_back(h.get<std::string>());
        if (names.empty() || names.front() != "Created")
            return false;
        const SessionState all[] = {SessionState::Created, SessionState::Sketched, SessionState::InferringImages,
                                    SessionState::AwaitingSelection, SessionState::Reconstructing,
                                    SessionState::Done, SessionState::Failed};
        auto parse = [&](const std::string& n) {
            for (auto s : all)
                if (to_string(s) == n)
                    return s;
            ADD_FAILURE() << "unknown state " << n;
            return SessionState::Created;
        };
        for (std::size_t i = 1; i < names.size(); ++i)
            if (!transition_allowed(parse(names[i - 1]), parse(names[i])))
                return false;
        return true;
    }
}

TEST(HttpApi, OmittedSeedUsesConfiguredDefault)
{
    ServiceOptions opts;
    opts.default_seed = 41;
    Api api(make_mock_gateway(), opts);
    const auto id = api.create();
    ASSERT_EQ(api.put_sketch(id, circle_sketch_json()), 204);
    ASSERT_EQ(api.generate(id, {{"prompt", "a ring"}}), 202);
    EXPECT_EQ(api.settle(id)["seed"], 41);
}

TEST(HttpApi, HappyPathAndDigests)
{
    Api api;
    const auto id = api.create();
    EXPECT_EQ(api.status(id)["state"], "Created");
    EXPECT_EQ(api.put_sketch(id, circle_sketch_json()), 204);
    EXPECT_EQ(api.generate(id, {{"prompt", "a ring"}, {"seed", 3}}), 202);

    auto st = api.settle(id);
    ASSERT_EQ(st["state"], "AwaitingSelection") << st.dump();
    EXPECT_EQ(st["candidates"].size(), 2u);
    EXPECT_EQ(st["seed"], 3);

    auto png = api.client.Get("/v1/sessions/" + id + "/candidates/1");
    ASSERT_EQ(png->status, 200);
    EXPECT_EQ(png->get_header_value("Content-Type"), "image/png");
    EXPECT_EQ(decode_png<Rgba8>(png->body).width(), 96);

    EXPECT_EQ(api.select(id, {{"index", 1}}), 202);
    st = api.settle(id);
    ASSERT_EQ(st["state"], "Done") << st.dump();
    EXPECT_EQ(st["selected"], 1);
    EXPECT_TRUE(history_is_legal(st["history"]));
    EXPECT_EQ(st["reference_timings_ms"]["image_infer"], 3830.0);
    EXPECT_EQ(st["reference_timings_ms"]["mesh"], 12390.0);
    EXPECT_EQ(st["budget_ms"], 20000.0);
    for (const char* k : {"image_infer", "background_removal", "reconstruct", "extract", "package", "total"})
        EXPECT_GT(st["timings_ms"][k].get<double>(), 0.0) << k;

    auto manifest = api.client.Get("/v1/sessions/" + id + "/asset/manifest");
    auto obj = api.client.Get("/v1/sessions/" + id + "/asset/mesh.obj");
    auto mtl = api.client.Get("/v1/sessions/" + id + "/asset/material.mtl");
    ASSERT_EQ(manifest->status, 200);
    ASSERT_EQ(obj->status, 200);
    ASSERT_EQ(mtl->status, 200);
    EXPECT_EQ(manifest->get_header_value("Content-Type"), "application/json");
    EXPECT_EQ(obj->get_header_value("Content-Type"), "model/obj");
    const auto m = parse_manifest(manifest->body);
    EXPECT_EQ(m.sha256_obj, oracle::sha256(obj->body));
    EXPECT_EQ(m.sha256_mtl, oracle::sha256(mtl->body));
    EXPECT_EQ(st["asset"]["sha256"]["obj"], m.sha256_obj);
    EXPECT_EQ(m.session_id, id);
    EXPECT_EQ(import_obj(obj->body).triangle_count(), m.triangles);
}

TEST(HttpApi, ErrorStatuses)
{
    Api api;
    EXPECT_EQ(api.client.Get("/v1/sessions/ffff")->status, 404);
    EXPECT_EQ(api.put_sketch("ffff", circle_sketch_json()), 404);
    EXPECT_EQ(api.generate("ffff", {{"prompt", "x"}}), 404);
    EXPECT_EQ(api.select("ffff", {{"index", 0}}), 404);
    const auto missing = api.client.Get("/v1/nothing");
    EXPECT_EQ(missing->status, 404);
    EXPECT_NO_THROW((void)json::parse(missing->body).at("error"));

    const auto id = api.create();
    EXPECT_EQ(api.generate(id, {{"prompt", "x"}}), 409);
    EXPECT_EQ(api.select(id, {{"index", 0}}), 409);
    EXPECT_EQ(api.client.Get("/v1/sessions/" + id + "/asset/mesh.obj")->status, 409);
    EXPECT_EQ(api.client.Get("/v1/sessions/" + id + "/candidates/0")->status, 404);

    EXPECT_EQ(api.put_sketch(id, "{not json"), 422);
    EXPECT_EQ(api.put_sketch(id, R"({"version":1,"width_px":64,"height_px":64,"strokes":[{"points":[[2,0],[0,0]],"width":1,"color":[0,0,0]}]})"),
              422);
    EXPECT_EQ(api.put_sketch(id, R"({"version":9,"width_px":64,"height_px":64,"strokes":[]})"), 422);
    EXPECT_EQ(api.status(id)["state"], "Created");

    ASSERT_EQ(api.put_sketch(id, circle_sketch_json()), 204);
    EXPECT_EQ(api.generate(id, {{"seed", 1}}), 422);
    EXPECT_EQ(api.generate(id, {{"prompt", "x"}, {"seed", -1}}), 422);
    EXPECT_EQ(api.generate(id, {{"prompt", "x"}, {"candidates", 0}}), 422);
    EXPECT_EQ(api.generate(id, {{"prompt", "x"}, {"candidates", 17}}), 422);
    EXPECT_EQ(api.client.Post("/v1/sessions/" + id + "/generate", "[]", "application/json")->status, 422);
    EXPECT_EQ(api.status(id)["state"], "Sketched");

    ASSERT_EQ(api.generate(id, {{"prompt", "x"}, {"seed", 1}}), 202);
    ASSERT_EQ(api.settle(id)["state"], "AwaitingSelection");
    EXPECT_EQ(api.select(id, {{"index", 2}}), 404);
    EXPECT_EQ(api.select(id, {{"index", -1}}), 404);
    EXPECT_EQ(api.select(id, {{"index", "zero"}}), 422);
    EXPECT_EQ(api.client.Get("/v1/sessions/" + id + "/candidates/2")->status, 404);
    EXPECT_EQ(api.generate(id, {{"prompt", "x"}}), 409);
}

TEST(HttpApi, BackendUnavailableIs503)
{
    auto gw = make_mock_gateway();
    gw.image = std::make_shared<UnavailableImages>();
    Api api(gw);
    const auto id = api.create();
    ASSERT_EQ(api.put_sketch(id, circle_sketch_json()), 204);
    EXPECT_EQ(api.generate(id, {{"prompt", "x"}}), 503);
    EXPECT_EQ(api.status(id)["state"], "Sketched");
    // the order of checks: unknown session before availability
    EXPECT_EQ(api.generate("abcd", {{"prompt", "x"}}), 404);
}

TEST(HttpApi, TokenAndCors)
{
    Api api(make_mock_gateway(), {}, "tok");
    auto denied = api.client.Post("/v1/sessions", "", "application/json");
    EXPECT_EQ(denied->status, 401);
    EXPECT_EQ(denied->get_header_value("Access-Control-Allow-Origin"), "*");

    auto pre = api.client.Options("/v1/sessions");
    EXPECT_EQ(pre->status, 204);
    EXPECT_NE(pre->get_header_value("Access-Control-Allow-Headers").find("X-MeshForge-Token"), std::string::npos);

    api.client.set_default_headers({{"X-MeshForge-Token", "tok"}});
    auto ok = api.client.Post("/v1/sessions", "", "application/json");
    EXPECT_EQ(ok->status, 200);
}

TEST(HttpApi, AssetImmutableAfterDone)
{
    Api api;
    const auto id = api.create();
    ASSERT_EQ(api.put_sketch(id, circle_sketch_json()), 204);
    ASSERT_EQ(api.generate(id, {{"prompt", "x"}, {"seed", 8}}), 202);
    api.settle(id);
    ASSERT_EQ(api.select(id, {{"index", 0}}), 202);
    ASSERT_EQ(api.settle(id)["state"], "Done");
    const auto before = api.client.Get("/v1/sessions/" + id + "/asset/mesh.obj")->body;
    EXPECT_EQ(api.put_sketch(id, circle_sketch_json(0.2)), 409);
    EXPECT_EQ(api.generate(id, {{"prompt", "y"}}), 409);
    EXPECT_EQ(api.select(id, {{"index", 1}}), 409);
    EXPECT_EQ(api.client.Get("/v1/sessions/" + id + "/asset/mesh.obj")->body, before);
}

TEST(HttpApi, ResketchClearsCandidates)
{
    Api api;
    const auto id = api.create();
    ASSERT_EQ(api.put_sketch(id, circle_sketch_json()), 204);
    ASSERT_EQ(api.generate(id, {{"prompt", "x"}}), 202);
    auto st = api.settle(id);
    ASSERT_EQ(st["state"], "AwaitingSelection");
    EXPECT_EQ(api.put_sketch(id, circle_sketch_json(0.2)), 204);
    st = api.status(id);
    EXPECT_EQ(st["state"], "Sketched");
    EXPECT_TRUE(st["candidates"].empty());
    EXPECT_EQ(api.client.Get("/v1/sessions/" + id + "/candidates/0")->status, 404);
}

TEST(HttpApi, EightConcurrentSessions)
{
    Api api(make_mock_gateway(), ServiceOptions{4, std::nullopt, 3600s, std::nullopt});
    std::vector<std::future<json>> runs;
    for (int i = 0; i < 8; ++i)
        runs.push_back(std::async(std::launch::async, [&api, i] {
            httplib::Client c("127.0.0.1", api.server.port());
            c.set_read_timeout(30, 0);
            const auto id = json::parse(c.Post("/v1/sessions", "", "application/json")->body)["session_id"].get<std::string>();
            c.Put("/v1/sessions/" + id + "/sketch", circle_sketch_json(), "application/json");
            c.Post("/v1/sessions/" + id + "/generate", json{{"prompt", "p"}, {"seed", 100 + i % 2}}.dump(), "application/json");
            api.svc.wait_settled(id, 60s);
            c.Post("/v1/sessions/" + id + "/select", json{{"index", 0}}.dump(), "application/json");
            api.svc.wait_settled(id, 60s);
            return json::parse(c.Get("/v1/sessions/" + id)->body);
        }));
    std::set<std::string> ids;
    std::map<int, std::string> hash_by_seed;
    for (auto& r : runs)
    {
        const auto st = r.get();
        ASSERT_EQ(st["state"], "Done") << st.dump();
        EXPECT_TRUE(history_is_legal(st["history"]));
        ids.insert(st["session_id"].get<std::string>());
        const int seed = st["seed"].get<int>();
        const auto h = st["asset"]["sha256"]["obj"].get<std::string>();
        if (hash_by_seed.count(seed))
        {
            EXPECT_EQ(hash_by_seed[seed], h);
        }
        hash_by_seed[seed] = h;
    }
    EXPECT_EQ(ids.size(), 8u);
    EXPECT_EQ(api.svc.session_count(), 8u);
}

TEST(Service, RandomOperationSequencesFollowTheStateMachine)
{
    PipelineService svc(make_mock_gateway(), small_config());
    std::mt19937_64 rng(2024);
    const auto sketch = parse_sketch(circle_sketch_json());
    for (int trial = 0; trial < 6; ++trial)
    {
        const auto id = svc.create_session();
        for (int step = 0; step < 12; ++step)
        {
            const auto before = svc.snapshot(id);
            const auto s = before.state;
            const int op = static_cast<int>(rng() % 4);
            ErrorCode expected = ErrorCode::IoError; // stands for success
            ErrorCode got = ErrorCode::IoError;
            try
            {
                switch (op)
                {
                case 0:
                    if (!transition_allowed(s, SessionState::Sketched))
                        expected = ErrorCode::IllegalTransition;
                    svc.put_sketch(id, sketch);
                    break;
                case 1:
                    if (s != SessionState::Sketched)
                        expected = ErrorCode::IllegalTransition;
                    svc.generate(id, {"p", rng() % 3, 2});
                    break;
                case 2:
                {
                    const int index = static_cast<int>(rng() % 3);
                    if (s != SessionState::AwaitingSelection)
                        expected = ErrorCode::IllegalTransition;
                    else if (index >= static_cast<int>(before.candidates.size()))
                        expected = ErrorCode::NotFound;
                    svc.select(id, index);
                    break;
                }
                default:
                    if (s != SessionState::Done)
                        expected = ErrorCode::IllegalTransition;
                    (void)svc.asset(id);
                }
            }
            catch (const Error& e)
            {
                got = e.code();
            }
            ASSERT_EQ(got, expected) << "op " << op << " from " << to_string(s);
            ASSERT_TRUE(svc.wait_settled(id, 60s));

            const auto after = svc.snapshot(id);
            if (got != ErrorCode::IoError)
            {
                EXPECT_EQ(after.history, before.history);
            }
            const bool has_candidates = !after.candidates.empty();
            const bool expects_candidates = after.state == SessionState::AwaitingSelection
                                         || after.state == SessionState::Done;
            if (after.state != SessionState::Failed)
            {
                EXPECT_EQ(has_candidates, expects_candidates) << to_string(after.state);
            }
            EXPECT_EQ(after.asset.has_value(), after.state == SessionState::Done);
            EXPECT_TRUE(history_is_legal(status_json(after)["history"]));
        }
    }
}

TEST(Service, PersistenceWritesSessionFiles)
{
    const auto dir = std::filesystem::temp_directory_path() / ("meshforge-persist-" + new_session_id());
    {
        PipelineService svc(make_mock_gateway(), small_config(), ServiceOptions{1, dir, 3600s, std::nullopt});
        const auto id = svc.create_session();
        EXPECT_TRUE(std::filesystem::exists(dir / id / "session.json"));
        svc.put_sketch(id, parse_sketch(circle_sketch_json()));
        svc.generate(id, {"p", 4, 2});
        ASSERT_TRUE(svc.wait_settled(id, 60s));
        EXPECT_TRUE(std::filesystem::exists(dir / id / "candidates" / "1.png"));
        svc.select(id, 1);
        ASSERT_TRUE(svc.wait_settled(id, 60s));
        const auto bundle = svc.asset(id);
        auto slurp = [](const std::filesystem::path& p) {
            std::ifstream in(p, std::ios::binary);
            return std::string(std::istreambuf_iterator<char>(in), {});
        };
        EXPECT_EQ(slurp(dir / id / "mesh.obj"), bundle.obj_text);
        EXPECT_EQ(slurp(dir / id / "material.mtl"), bundle.mtl_text);
        EXPECT_EQ(slurp(dir / id / "manifest.json"), bundle.manifest);
        EXPECT_EQ(parse_sketch(slurp(dir / id / "sketch.json")), parse_sketch(circle_sketch_json()));
        EXPECT_EQ(json::parse(slurp(dir / id / "session.json"))["state"], "Done");
    }
    std::filesystem::remove_all(dir);
}

TEST(Service, IdleSessionsExpire)
{
    std::promise<void> release;
    auto gw = make_mock_gateway();
    gw.image = std::make_shared<GatedImages>(release.get_future().share());
    PipelineService svc(gw, small_config(), ServiceOptions{1, std::nullopt, 1s, std::nullopt});
    const auto idle = svc.create_session();
    const auto busy = svc.create_session();
    svc.put_sketch(busy, parse_sketch(circle_sketch_json()));
    svc.generate(busy, {"p", 1, 1});

    EXPECT_EQ(svc.evict_idle(std::chrono::steady_clock::now()), 0u);
    EXPECT_EQ(svc.evict_idle(std::chrono::steady_clock::now() + 5s), 1u);
    EXPECT_THROW(svc.require(idle), Error);
    EXPECT_NO_THROW(svc.require(busy));

    release.set_value();
    ASSERT_TRUE(svc.wait_settled(busy, 60s));
    EXPECT_EQ(svc.evict_idle(std::chrono::steady_clock::now() + 5s), 1u);
    EXPECT_EQ(svc.session_count(), 0u);
}

TEST(WorkerPool, RunsEveryJobBeforeDestruction)
{
    std::atomic<int> done{0};
    {
        WorkerPool pool(3);
        for (int i = 0; i < 50; ++i)
            pool.submit([&] { ++done; });
    }
    EXPECT_EQ(done.load(), 50);
}
