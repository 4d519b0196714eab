#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "asset.hpp"
#include "control.hpp"
#include "gateway.hpp"
#include "mesh.hpp"
#include "session.hpp"

namespace meshforge
{
    /// Reference stage timings on the original GPU workstation; documentation
    /// only, never asserted.
    constexpr double kReferenceImageInferMs = 3830.0;
    constexpr double kReferenceMeshMs = 12390.0;
    constexpr double kDefaultBudgetMs = 20000.0;

    struct PipelineConfig
    {
        GenerationConfig generation;
        int resolution = kDefaultResolution;
        double iso = 0.0;
        double weld_eps = 1e-7;
        double target_extent = 1.0;
        double budget_ms = kDefaultBudgetMs;
        std::string asset_name = "mesh";
    };

    namespace detail
    {
        class Stopwatch
        {
        public:
            double elapsed_ms() const
            {
                return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
            }

        private:
            std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
        };

        template <class Fn>
        auto in_stage(const char* stage, Fn&& fn)
        {
            try
            {
                return fn();
            }
            catch (const StageFailure&)
            {
                throw;
            }
            catch (const Error& e)
            {
                throw StageFailure(stage, e);
            }
            catch (const std::exception& e)
            {
                throw StageFailure(stage, Error(ErrorCode::IoError, e.what()));
            }
        }
    }

    struct InferenceOutcome
    {
        std::vector<CandidateImage> candidates; // matted
        double image_infer_ms = 0.0;
        double background_removal_ms = 0.0;
        double wall_ms = 0.0;
        std::string image_backend_id;
        std::string matting_id;
    };

    /// control request -> candidate images -> matting. Throws StageFailure.
    inline InferenceOutcome run_inference(const SketchCanvas& sketch, const std::string& prompt, std::uint64_t seed,
                                          int candidate_count, const Gateway& gw, const PipelineConfig& cfg)
    {
        detail::Stopwatch wall;
        InferenceOutcome out;

        detail::Stopwatch infer_clock;
        GenerationConfig gen = cfg.generation;
        gen.seed = seed;
        gen.candidate_count = candidate_count;
        const auto raw = detail::in_stage("image_infer", [&] {
            const auto req = build_control_request(sketch, prompt, gen);
            return infer_candidates(req, *gw.image);
        });
        out.image_infer_ms = infer_clock.elapsed_ms();
        out.image_backend_id = gw.image->id();

        detail::Stopwatch matte_clock;
        out.candidates = detail::in_stage("background_removal", [&] {
            std::vector<CandidateImage> matted;
            for (const auto& c : raw)
                matted.push_back(matte_candidate(c, gw, gen.background_tolerance));
            return matted;
        });
        out.background_removal_ms = matte_clock.elapsed_ms();
        out.matting_id = gw.matting ? gw.matting->id() : "builtin-floodfill";
        out.wall_ms = wall.elapsed_ms();
        return out;
    }

    struct ReconstructionOutcome
    {
        IndexedMesh mesh;
        double reconstruct_ms = 0.0;
        double extract_ms = 0.0;
        double wall_ms = 0.0;
        std::string recon_backend_id;
    };

    /// reconstruct -> (extract if fields) -> weld -> normals -> normalize.
    inline ReconstructionOutcome run_reconstruction(const CandidateImage& image, const Gateway& gw,
                                                    const PipelineConfig& cfg)
    {
        detail::Stopwatch wall;
        ReconstructionOutcome out;

        detail::Stopwatch recon_clock;
        auto result = detail::in_stage("reconstruct", [&] { return reconstruct(image, *gw.recon, cfg.resolution); });
        out.reconstruct_ms = recon_clock.elapsed_ms();
        out.recon_backend_id = gw.recon->id();

        detail::Stopwatch extract_clock;
        out.mesh = detail::in_stage("extract", [&] {
            IndexedMesh mesh = result.is_mesh() ? std::get<IndexedMesh>(std::move(result.payload))
                                                : extract_mesh(std::get<ReconstructionField>(result.payload), cfg.iso);
            if (mesh.empty())
                throw Error(ErrorCode::EmptyMesh, "reconstruction produced no surface");
            mesh = weld_vertices(mesh, cfg.weld_eps);
            mesh = compute_vertex_normals(mesh);
            return normalize_bounds(mesh, cfg.target_extent);
        });
        out.extract_ms = extract_clock.elapsed_ms();
        out.wall_ms = wall.elapsed_ms();
        return out;
    }

    struct PackagingOutcome
    {
        AssetBundle bundle;
        StageTimings timings;
        bool budget_exceeded = false;
    };

    /// Serializes the finished mesh and completes timings and manifest.
    /// `summary` carries identity, backends and the stage timings so far;
    /// `phase_wall_ms` is the wall time already spent in the active phases.
    inline PackagingOutcome run_packaging(const IndexedMesh& mesh, SessionSummary summary, const PipelineConfig& cfg,
                                          double phase_wall_ms)
    {
        detail::Stopwatch clock;
        auto doc = detail::in_stage("package", [&] { return export_obj(mesh, cfg.asset_name); });
        summary.vertices = mesh.vertex_count();
        summary.triangles = mesh.triangle_count();
        summary.sha256_obj = sha256_hex(doc.obj_text);
        summary.sha256_mtl = sha256_hex(doc.mtl_text);

        PackagingOutcome out;
        out.timings = summary.timings_ms;
        out.timings.package = clock.elapsed_ms();
        out.timings.total = phase_wall_ms + out.timings.package;
        out.budget_exceeded = out.timings.total > cfg.budget_ms;
        summary.timings_ms = out.timings;
        summary.budget_exceeded = out.budget_exceeded;

        out.bundle.obj_text = std::move(doc.obj_text);
        out.bundle.mtl_text = std::move(doc.mtl_text);
        out.bundle.manifest = write_manifest(summary);
        return out;
    }

    inline void record_failure(SessionRecord& s, const StageFailure& f)
    {
        s.error = StageError{f.stage(), f.what()};
        transition(s, SessionState::Failed);
    }

    inline void commit_inference(SessionRecord& s, InferenceOutcome out)
    {
        s.timings_ms = {};
        s.timings_ms.image_infer = out.image_infer_ms;
        s.timings_ms.background_removal = out.background_removal_ms;
        s.timings_ms.total = out.wall_ms;
        s.backend_ids["image"] = out.image_backend_id;
        s.backend_ids["matting"] = out.matting_id;
        s.candidates = std::move(out.candidates);
        transition(s, SessionState::AwaitingSelection);
    }

    /// Everything the reconstruction half needs, copied out of the session.
    struct ReconstructionJob
    {
        CandidateImage image;
        SessionSummary summary;
    };

    inline ReconstructionJob begin_selection(SessionRecord& s, int index)
    {
        if (s.state != SessionState::AwaitingSelection)
            throw Error(ErrorCode::IllegalTransition, "no candidates awaiting selection");
        if (index < 0 || index >= static_cast<int>(s.candidates.size()))
            throw Error(ErrorCode::NotFound, "candidate index out of range");
        transition(s, SessionState::Reconstructing);
        s.selected = index;

        ReconstructionJob job;
        job.image = s.candidates[index];
        job.summary.session_id = s.id;
        job.summary.prompt = s.prompt.value_or("");
        job.summary.seed = s.seed;
        job.summary.backend_ids = s.backend_ids;
        job.summary.timings_ms = s.timings_ms;
        return job;
    }

    /// Runs reconstruction and packaging for a job; no session access.
    inline PackagingOutcome execute_reconstruction(ReconstructionJob job, const Gateway& gw, const PipelineConfig& cfg)
    {
        auto out = run_reconstruction(job.image, gw, cfg);
        job.summary.timings_ms.reconstruct = out.reconstruct_ms;
        job.summary.timings_ms.extract = out.extract_ms;
        job.summary.backend_ids["reconstruct"] = out.recon_backend_id;
        const double phase_wall = job.summary.timings_ms.total + out.wall_ms;
        return run_packaging(out.mesh, std::move(job.summary), cfg, phase_wall);
    }

    inline void commit_reconstruction(SessionRecord& s, PackagingOutcome out, const std::string& recon_backend_id)
    {
        s.timings_ms = out.timings;
        s.budget_exceeded = out.budget_exceeded;
        s.backend_ids["reconstruct"] = recon_backend_id;
        s.asset = std::move(out.bundle);
        transition(s, SessionState::Done);
    }

    /// Inference half of the pipeline on a session in Sketched state. Ends in
    /// AwaitingSelection or Failed.
    inline void run_generation(SessionRecord& s, const Gateway& gw, const PipelineConfig& cfg)
    {
        if (!s.sketch)
            throw Error(ErrorCode::IllegalTransition, "session has no sketch");
        transition(s, SessionState::InferringImages);
        try
        {
            commit_inference(s, run_inference(*s.sketch, s.prompt.value_or(""), s.seed, s.candidate_count, gw, cfg));
        }
        catch (const StageFailure& f)
        {
            record_failure(s, f);
        }
    }

    /// Reconstruction half on a session in AwaitingSelection. Ends in Done
    /// or Failed; candidates survive a failure.
    inline void run_selection(SessionRecord& s, int index, const Gateway& gw, const PipelineConfig& cfg)
    {
        auto job = begin_selection(s, index);
        try
        {
            commit_reconstruction(s, execute_reconstruction(std::move(job), gw, cfg), gw.recon->id());
        }
        catch (const StageFailure& f)
        {
            record_failure(s, f);
        }
    }

    /// Whole pipeline, synchronously, for headless runs.
    inline void run_pipeline(SessionRecord& s, const Gateway& gw, const PipelineConfig& cfg, int select_index = 0)
    {
        run_generation(s, gw, cfg);
        if (s.state == SessionState::AwaitingSelection)
            run_selection(s, select_index, gw, cfg);
    }
}
