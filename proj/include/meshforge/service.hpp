#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "codec.hpp"
#include "gateway.hpp"
#include "pipeline.hpp"
#include "session.hpp"

namespace meshforge
{
    constexpr int kMaxCandidates = 16;

    /// Fixed-size FIFO worker pool. Destruction drains queued jobs.
    class WorkerPool
    {
    public:
        explicit WorkerPool(int threads)
        {
            for (int i = 0; i < std::max(1, threads); ++i)
                threads_.emplace_back([this] { run(); });
        }

        ~WorkerPool()
        {
            {
                std::lock_guard lock(mutex_);
                stopping_ = true;
            }
            cv_.notify_all();
            for (auto& t : threads_)
                t.join();
        }

        WorkerPool(const WorkerPool&) = delete;
        WorkerPool& operator=(const WorkerPool&) = delete;

        void submit(std::function<void()> job)
        {
            {
                std::lock_guard lock(mutex_);
                jobs_.push_back(std::move(job));
            }
            cv_.notify_one();
        }

    private:
        void run()
        {
            for (;;)
            {
                std::function<void()> job;
                {
                    std::unique_lock lock(mutex_);
                    cv_.wait(lock, [&] { return stopping_ || !jobs_.empty(); });
                    if (jobs_.empty())
                        return;
                    job = std::move(jobs_.front());
                    jobs_.pop_front();
                }
                job();
            }
        }

        std::mutex mutex_;
        std::condition_variable cv_;
        std::deque<std::function<void()>> jobs_;
        bool stopping_ = false;
        std::vector<std::thread> threads_;
    };

    struct GenerateRequest
    {
        std::string prompt;
        std::optional<std::uint64_t> seed; // random when absent
        std::optional<int> candidates;     // service default when absent
    };

    struct ServiceOptions
    {
        int workers = 2;
        std::optional<std::filesystem::path> persist_dir;
        std::chrono::seconds session_ttl{3600};
        std::optional<std::uint64_t> default_seed;
    };

    /// Status document served by GET /v1/sessions/{id}.
    inline nlohmann::json status_json(const SessionRecord& s, double budget_ms = kDefaultBudgetMs)
    {
        using nlohmann::json;
        json history = json::array();
        for (auto st : s.history)
            history.push_back(std::string(to_string(st)));

        json candidates = json::array();
        for (std::size_t i = 0; i < s.candidates.size(); ++i)
        {
            const auto& c = s.candidates[i];
            const auto& b = c.foreground_bbox;
            candidates.push_back({{"index", i},
                                  {"seed", c.seed},
                                  {"backend_id", c.backend_id},
                                  {"width", c.pixels.width()},
                                  {"height", c.pixels.height()},
                                  {"foreground_bbox", {b.x0, b.y0, b.x1, b.y1}}});
        }

        json j = {{"session_id", s.id},
                  {"state", std::string(to_string(s.state))},
                  {"history", history},
                  {"prompt", s.prompt ? json(*s.prompt) : json(nullptr)},
                  {"seed", s.seed},
                  {"candidate_count", s.candidate_count},
                  {"candidates", candidates},
                  {"selected", s.selected ? json(*s.selected) : json(nullptr)},
                  {"timings_ms", to_json(s.timings_ms)},
                  {"reference_timings_ms", {{"image_infer", kReferenceImageInferMs}, {"mesh", kReferenceMeshMs}}},
                  {"budget_ms", budget_ms},
                  {"budget_exceeded", s.budget_exceeded},
                  {"backend_ids", s.backend_ids},
                  {"error", s.error ? json{{"stage", s.error->stage}, {"message", s.error->message}} : json(nullptr)},
                  {"asset", nullptr},
                  {"created_at", iso8601(s.created_at)},
                  {"updated_at", iso8601(s.updated_at)}};
        if (s.asset)
        {
            const auto m = parse_manifest(s.asset->manifest);
            j["asset"] = {{"vertices", m.vertices},
                          {"triangles", m.triangles},
                          {"sha256", {{"obj", m.sha256_obj}, {"mtl", m.sha256_mtl}}}};
        }
        return j;
    }

    /// Session store plus asynchronous pipeline execution. Every operation on
    /// one session is serialized by that session's mutex; backend and
    /// geometry work runs on the worker pool without holding it.
    class PipelineService
    {
    public:
        PipelineService(Gateway gw, PipelineConfig cfg, ServiceOptions opts = {})
            : gw_(std::move(gw)), cfg_(std::move(cfg)), opts_(std::move(opts)), pool_(std::in_place, opts_.workers)
        {
            if (!gw_.image || !gw_.recon)
                throw Error(ErrorCode::InvalidArgument, "gateway needs image and reconstruction backends");
        }

        ~PipelineService() { pool_.reset(); }

        const PipelineConfig& config() const { return cfg_; }

        std::string create_session()
        {
            evict_idle();
            auto slot = std::make_shared<Slot>();
            slot->rec.id = new_session_id();
            {
                std::lock_guard lock(slot->m);
                persist(slot->rec);
            }
            std::lock_guard lock(map_mutex_);
            sessions_[slot->rec.id] = slot;
            return slot->rec.id;
        }

        /// Throws NotFound for unknown ids.
        void require(const std::string& id) { find(id); }

        void put_sketch(const std::string& id, SketchCanvas canvas)
        {
            auto slot = find(id);
            validate(canvas);
            std::lock_guard lock(slot->m);
            auto& s = slot->rec;
            transition(s, SessionState::Sketched);
            s.sketch = std::move(canvas);
            s.candidates.clear();
            s.selected.reset();
            s.asset.reset();
            s.error.reset();
            s.timings_ms = {};
            s.backend_ids.clear();
            s.budget_exceeded = false;
            persist(s);
        }

        void generate(const std::string& id, GenerateRequest req)
        {
            auto slot = find(id);
            const int count = req.candidates.value_or(cfg_.generation.candidate_count);
            if (count < 1 || count > kMaxCandidates)
                throw Error(ErrorCode::InvalidArgument, "candidates must be in [1, 16]");

            std::unique_lock lock(slot->m);
            auto& s = slot->rec;
            if (s.state != SessionState::Sketched)
                throw Error(ErrorCode::IllegalTransition, "generate requires a Sketched session, state is "
                                                              + std::string(to_string(s.state)));
            if (!gw_.image->available())
                throw Error(ErrorCode::BackendUnavailable, "image backend unavailable");

            s.prompt = std::move(req.prompt);
            s.seed = req.seed ? *req.seed : opts_.default_seed ? *opts_.default_seed : random_seed();
            s.candidate_count = count;
            transition(s, SessionState::InferringImages);
            persist(s);

            pool_->submit([this, slot, sketch = *s.sketch, prompt = *s.prompt, seed = s.seed, count] {
                std::optional<InferenceOutcome> out;
                std::optional<StageFailure> failure;
                try
                {
                    out = run_inference(sketch, prompt, seed, count, gw_, cfg_);
                }
                catch (const StageFailure& f)
                {
                    failure = f;
                }
                catch (const std::exception& e)
                {
                    failure = StageFailure("image_infer", Error(ErrorCode::IoError, e.what()));
                }
                std::lock_guard lock(slot->m);
                if (out)
                    commit_inference(slot->rec, std::move(*out));
                else
                    record_failure(slot->rec, *failure);
                persist(slot->rec);
                slot->cv.notify_all();
            });
        }

        void select(const std::string& id, int index)
        {
            auto slot = find(id);
            std::unique_lock lock(slot->m);
            auto& s = slot->rec;
            if (s.state != SessionState::AwaitingSelection)
                throw Error(ErrorCode::IllegalTransition, "select requires AwaitingSelection, state is "
                                                              + std::string(to_string(s.state)));
            if (index < 0 || index >= static_cast<int>(s.candidates.size()))
                throw Error(ErrorCode::NotFound, "candidate " + std::to_string(index) + " does not exist");
            if (!gw_.recon->available())
                throw Error(ErrorCode::BackendUnavailable, "reconstruction backend unavailable");

            auto job = begin_selection(s, index);
            persist(s);

            pool_->submit([this, slot, job = std::move(job)]() mutable {
                std::optional<PackagingOutcome> out;
                std::optional<StageFailure> failure;
                try
                {
                    out = execute_reconstruction(std::move(job), gw_, cfg_);
                }
                catch (const StageFailure& f)
                {
                    failure = f;
                }
                catch (const std::exception& e)
                {
                    failure = StageFailure("reconstruct", Error(ErrorCode::IoError, e.what()));
                }
                std::lock_guard lock(slot->m);
                if (out)
                    commit_reconstruction(slot->rec, std::move(*out), gw_.recon->id());
                else
                    record_failure(slot->rec, *failure);
                persist(slot->rec);
                slot->cv.notify_all();
            });
        }

        SessionRecord snapshot(const std::string& id)
        {
            auto slot = find(id);
            std::lock_guard lock(slot->m);
            return slot->rec;
        }

        nlohmann::json status(const std::string& id)
        {
            auto slot = find(id);
            std::lock_guard lock(slot->m);
            return status_json(slot->rec, cfg_.budget_ms);
        }

        std::string candidate_png(const std::string& id, int k)
        {
            auto slot = find(id);
            RgbaImage pixels;
            {
                std::lock_guard lock(slot->m);
                const auto& c = slot->rec.candidates;
                if (k < 0 || k >= static_cast<int>(c.size()))
                    throw Error(ErrorCode::NotFound, "candidate " + std::to_string(k) + " does not exist");
                pixels = c[k].pixels;
            }
            return encode_png(pixels);
        }

        AssetBundle asset(const std::string& id)
        {
            auto slot = find(id);
            std::lock_guard lock(slot->m);
            if (!slot->rec.asset)
                throw Error(ErrorCode::IllegalTransition, "asset not ready, state is "
                                                              + std::string(to_string(slot->rec.state)));
            return *slot->rec.asset;
        }

        /// Blocks until the session is not in flight. False on timeout.
        bool wait_settled(const std::string& id, std::chrono::milliseconds timeout)
        {
            auto slot = find(id);
            std::unique_lock lock(slot->m);
            return slot->cv.wait_for(lock, timeout, [&] { return !is_in_flight(slot->rec.state); });
        }

        /// Drops sessions idle longer than the TTL and not in flight.
        std::size_t evict_idle(std::chrono::steady_clock::time_point now = std::chrono::steady_clock::now())
        {
            std::lock_guard lock(map_mutex_);
            std::size_t evicted = 0;
            for (auto it = sessions_.begin(); it != sessions_.end();)
            {
                auto& slot = *it->second;
                std::lock_guard slot_lock(slot.m);
                if (now - slot.last_access > opts_.session_ttl && !is_in_flight(slot.rec.state))
                {
                    it = sessions_.erase(it);
                    ++evicted;
                }
                else
                {
                    ++it;
                }
            }
            return evicted;
        }

        std::size_t session_count()
        {
            std::lock_guard lock(map_mutex_);
            return sessions_.size();
        }

    private:
        struct Slot
        {
            std::mutex m;
            std::condition_variable cv;
            SessionRecord rec;
            std::chrono::steady_clock::time_point last_access = std::chrono::steady_clock::now();
        };

        std::shared_ptr<Slot> find(const std::string& id)
        {
            std::shared_ptr<Slot> slot;
            {
                std::lock_guard lock(map_mutex_);
                const auto it = sessions_.find(id);
                if (it == sessions_.end())
                    throw Error(ErrorCode::NotFound, "unknown session '" + id + "'");
                slot = it->second;
            }
            std::lock_guard lock(slot->m);
            slot->last_access = std::chrono::steady_clock::now();
            return slot;
        }

        static std::uint64_t random_seed()
        {
            static thread_local std::mt19937_64 rng{std::random_device{}()};
            return rng();
        }

        static void write_file(const std::filesystem::path& p, std::string_view bytes)
        {
            std::ofstream out(p, std::ios::binary | std::ios::trunc);
            out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
            if (!out)
                throw Error(ErrorCode::IoError, "cannot write " + p.string());
        }

        /// Write-through of the session document and, once produced,
        /// candidates and asset files. Called with the session lock held.
        void persist(const SessionRecord& s) const
        {
            if (!opts_.persist_dir)
                return;
            try
            {
                namespace fs = std::filesystem;
                const fs::path dir = *opts_.persist_dir / s.id;
                fs::create_directories(dir);
                write_file(dir / "session.json", status_json(s, cfg_.budget_ms).dump(2) + "\n");
                if (s.sketch)
                    write_file(dir / "sketch.json", serialize_sketch(*s.sketch));
                if (s.state == SessionState::AwaitingSelection)
                {
                    fs::create_directories(dir / "candidates");
                    for (std::size_t i = 0; i < s.candidates.size(); ++i)
                        write_file(dir / "candidates" / (std::to_string(i) + ".png"), encode_png(s.candidates[i].pixels));
                }
                if (s.asset && s.state == SessionState::Done)
                {
                    write_file(dir / "mesh.obj", s.asset->obj_text);
                    write_file(dir / "material.mtl", s.asset->mtl_text);
                    write_file(dir / "manifest.json", s.asset->manifest);
                }
            }
            catch (const std::exception& e)
            {
                std::cerr << "meshforge: persisting session " << s.id << " failed: " << e.what() << "\n";
            }
        }

        Gateway gw_;
        PipelineConfig cfg_;
        ServiceOptions opts_;
        std::mutex map_mutex_;
        std::map<std::string, std::shared_ptr<Slot>> sessions_;
        std::optional<WorkerPool> pool_;
    };
}
