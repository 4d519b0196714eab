#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "asset.hpp"
#include "control.hpp"
#include "sketch.hpp"

namespace meshforge
{
    enum class SessionState
    {
        Created,
        Sketched,
        InferringImages,
        AwaitingSelection,
        Reconstructing,
        Done,
        Failed
    };

    constexpr std::string_view to_string(SessionState s)
    {
        switch (s)
        {
        case SessionState::Created: return "Created";
        case SessionState::Sketched: return "Sketched";
        case SessionState::InferringImages: return "InferringImages";
        case SessionState::AwaitingSelection: return "AwaitingSelection";
        case SessionState::Reconstructing: return "Reconstructing";
        case SessionState::Done: return "Done";
        case SessionState::Failed: return "Failed";
        }
        return "Unknown";
    }

    constexpr bool is_in_flight(SessionState s)
    {
        return s == SessionState::InferringImages || s == SessionState::Reconstructing;
    }

    /// The declared transition graph. Failed is terminal.
    constexpr bool transition_allowed(SessionState from, SessionState to)
    {
        using S = SessionState;
        switch (to)
        {
        case S::Sketched:
            return from == S::Created || from == S::Sketched || from == S::AwaitingSelection;
        case S::InferringImages:
            return from == S::Sketched;
        case S::AwaitingSelection:
            return from == S::InferringImages;
        case S::Reconstructing:
            return from == S::AwaitingSelection;
        case S::Done:
            return from == S::Reconstructing;
        case S::Failed:
            return is_in_flight(from);
        case S::Created:
            return false;
        }
        return false;
    }

    struct StageError
    {
        std::string stage;
        std::string message;
    };

    /// Failure inside one named pipeline stage.
    class StageFailure : public Error
    {
    public:
        StageFailure(std::string stage, const Error& cause)
            : Error(cause.code(), cause.what()), stage_(std::move(stage))
        {
        }

        const std::string& stage() const noexcept { return stage_; }

    private:
        std::string stage_;
    };

    using Clock = std::chrono::system_clock;

    struct SessionRecord
    {
        std::string id;
        SessionState state = SessionState::Created;
        std::vector<SessionState> history{SessionState::Created};
        std::optional<SketchCanvas> sketch;
        std::optional<std::string> prompt;
        std::uint64_t seed = 0;
        int candidate_count = 0;
        std::vector<CandidateImage> candidates;
        std::optional<int> selected;
        std::optional<AssetBundle> asset;
        StageTimings timings_ms;
        std::map<std::string, std::string> backend_ids;
        std::optional<StageError> error;
        bool budget_exceeded = false;
        Clock::time_point created_at = Clock::now();
        Clock::time_point updated_at = created_at;
    };

    inline void transition(SessionRecord& s, SessionState to)
    {
        if (!transition_allowed(s.state, to))
            throw Error(ErrorCode::IllegalTransition, std::string(to_string(s.state)) + " -> " + std::string(to_string(to)));
        s.state = to;
        s.history.push_back(to);
        s.updated_at = Clock::now();
    }

    inline std::string new_session_id()
    {
        static thread_local std::mt19937_64 rng{std::random_device{}()};
        static constexpr char hex[] = "0123456789abcdef";
        std::string id;
        for (int word = 0; word < 2; ++word)
        {
            const auto v = rng();
            for (int i = 0; i < 16; ++i)
                id.push_back(hex[(v >> (4 * i)) & 0xF]);
        }
        return id;
    }

    inline std::string iso8601(Clock::time_point t)
    {
        const std::time_t tt = Clock::to_time_t(t);
        std::tm tm{};
        gmtime_r(&tt, &tm);
        char buf[32];
        std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
        return buf;
    }
}
