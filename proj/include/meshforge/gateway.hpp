#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "control.hpp"
#include "mock.hpp"
#include "wire.hpp"

namespace meshforge
{
    constexpr const char* kMockDesignator = "mock";
    constexpr auto kRetryBackoff = std::chrono::milliseconds(250);
    constexpr int kMaxRetryLimit = 5;

    enum class BackendKind
    {
        Image,
        Reconstruct,
        Matting
    };

    struct BackendEndpoint
    {
        BackendKind kind = BackendKind::Image;
        std::string url = kMockDesignator;
        std::chrono::milliseconds timeout{30000};
        int retry_limit = 1;
        int max_inflight = 4;
        std::string token; // sent as X-MeshForge-Token when non-empty

        bool is_mock() const { return url == kMockDesignator; }
    };

    inline void validate(const BackendEndpoint& ep)
    {
        if (ep.timeout.count() <= 0)
            throw Error(ErrorCode::InvalidArgument, "endpoint timeout must be positive");
        if (ep.retry_limit < 0 || ep.retry_limit > kMaxRetryLimit)
            throw Error(ErrorCode::InvalidArgument, "retry_limit must be in [0, 5]");
        if (ep.max_inflight < 1)
            throw Error(ErrorCode::InvalidArgument, "max_inflight must be >= 1");
    }

    class ImageBackend
    {
    public:
        virtual ~ImageBackend() = default;
        virtual std::string id() const = 0;
        /// Raw (unmatted) candidates, exactly req.candidate_count of them.
        virtual std::vector<CandidateImage> infer(const ControlRequest& req) = 0;
        virtual bool available() const { return true; }
    };

    struct ReconstructResult
    {
        wire::ReconstructPayload payload;
        bool is_mesh() const { return std::holds_alternative<IndexedMesh>(payload); }
    };

    class ReconBackend
    {
    public:
        virtual ~ReconBackend() = default;
        virtual std::string id() const = 0;
        virtual ReconstructResult reconstruct(const CandidateImage& image, int n) = 0;
        virtual bool available() const { return true; }
    };

    class MattingBackend
    {
    public:
        virtual ~MattingBackend() = default;
        virtual std::string id() const = 0;
        virtual RgbaImage matte(const RgbImage& image) = 0;
    };

    class MockImageBackend final : public ImageBackend
    {
    public:
        std::string id() const override { return kMockImageBackendId; }

        std::vector<CandidateImage> infer(const ControlRequest& req) override
        {
            auto images = mock_generate_images(req);
            std::vector<CandidateImage> out;
            for (std::size_t i = 0; i < images.size(); ++i)
                out.push_back(make_candidate(std::move(images[i]), req.seed + i, id()));
            return out;
        }
    };

    class MockReconBackend final : public ReconBackend
    {
    public:
        explicit MockReconBackend(double thickness = kDefaultExtrudeThickness) : thickness_(thickness) {}

        std::string id() const override { return kMockReconBackendId; }

        ReconstructResult reconstruct(const CandidateImage& image, int n) override
        {
            return {mock_reconstruct(image.pixels, n, thickness_)};
        }

    private:
        double thickness_;
    };

    /// Caps concurrent calls against one endpoint.
    class InflightLimiter
    {
    public:
        explicit InflightLimiter(int limit) : available_(limit) {}

        void acquire()
        {
            std::unique_lock lock(mutex_);
            cv_.wait(lock, [&] { return available_ > 0; });
            --available_;
        }

        void release()
        {
            {
                std::lock_guard lock(mutex_);
                ++available_;
            }
            cv_.notify_one();
        }

    private:
        std::mutex mutex_;
        std::condition_variable cv_;
        int available_;
    };

    /// JSON-over-HTTP POST with timeouts, bounded retries on transport
    /// failures and an in-flight cap. Non-2xx responses are never retried.
    class HttpJsonClient
    {
    public:
        explicit HttpJsonClient(BackendEndpoint ep)
            : ep_(std::move(ep)), limiter_(ep_.max_inflight)
        {
            validate(ep_);
        }

        const BackendEndpoint& endpoint() const { return ep_; }

        nlohmann::json post(const std::string& path, const nlohmann::json& body)
        {
            limiter_.acquire();
            struct Release
            {
                InflightLimiter& l;
                ~Release() { l.release(); }
            } release{limiter_};

            const std::string payload = body.dump();
            const auto secs = ep_.timeout.count() / 1000;
            const auto usecs = (ep_.timeout.count() % 1000) * 1000;

            std::string last_error;
            for (int attempt = 0; attempt <= ep_.retry_limit; ++attempt)
            {
                if (attempt > 0)
                    std::this_thread::sleep_for(kRetryBackoff);

                httplib::Client client(ep_.url);
                client.set_connection_timeout(secs, usecs);
                client.set_read_timeout(secs, usecs);
                client.set_write_timeout(secs, usecs);
                httplib::Headers headers;
                if (!ep_.token.empty())
                    headers.emplace(wire::kTokenHeader, ep_.token);

                auto res = client.Post(path, headers, payload, "application/json");
                if (!res)
                {
                    last_error = httplib::to_string(res.error());
                    continue;
                }
                last_transport_failure_.store(0);

                if (res->status < 200 || res->status >= 300)
                {
                    std::string message = "HTTP " + std::to_string(res->status);
                    try
                    {
                        message += ": " + nlohmann::json::parse(res->body).at("error").get<std::string>();
                    }
                    catch (const std::exception&)
                    {
                    }
                    throw Error(ErrorCode::BackendRejected, message);
                }
                try
                {
                    return nlohmann::json::parse(res->body);
                }
                catch (const nlohmann::json::exception& e)
                {
                    throw Error(ErrorCode::BackendProtocolError, std::string("response is not JSON: ") + e.what());
                }
            }

            last_transport_failure_.store(now_ms());
            throw Error(ErrorCode::BackendTimeout, ep_.url + path + " failed after "
                                                       + std::to_string(ep_.retry_limit + 1) + " attempt(s): " + last_error);
        }

        /// False for a short window after a call exhausted its retries.
        bool available() const
        {
            const auto failed_at = last_transport_failure_.load();
            return failed_at == 0 || now_ms() - failed_at > kUnavailableWindowMs;
        }

    private:
        static constexpr long long kUnavailableWindowMs = 5000;

        static long long now_ms()
        {
            return std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now().time_since_epoch()).count();
        }

        BackendEndpoint ep_;
        InflightLimiter limiter_;
        std::atomic<long long> last_transport_failure_{0};
    };

    class HttpImageBackend final : public ImageBackend
    {
    public:
        explicit HttpImageBackend(BackendEndpoint ep) : client_(std::move(ep)) {}

        std::string id() const override { return "http:" + client_.endpoint().url; }

        std::vector<CandidateImage> infer(const ControlRequest& req) override
        {
            const auto body = client_.post(wire::kImagesPath, wire::encode_image_request(req));
            auto images = wire::decode_images_response(body, req.candidate_count);
            std::vector<CandidateImage> out;
            for (std::size_t i = 0; i < images.size(); ++i)
            {
                try
                {
                    out.push_back(make_candidate(std::move(images[i]), req.seed + i, id()));
                }
                catch (const Error& e)
                {
                    throw Error(ErrorCode::BackendProtocolError, e.what());
                }
            }
            return out;
        }

        bool available() const override { return client_.available(); }

    private:
        HttpJsonClient client_;
    };

    class HttpReconBackend final : public ReconBackend
    {
    public:
        explicit HttpReconBackend(BackendEndpoint ep) : client_(std::move(ep)) {}

        std::string id() const override { return "http:" + client_.endpoint().url; }

        ReconstructResult reconstruct(const CandidateImage& image, int n) override
        {
            const auto body = client_.post(wire::kReconstructPath, wire::encode_reconstruct_request(image.pixels, n));
            return {wire::decode_reconstruct_response(body, n)};
        }

        bool available() const override { return client_.available(); }

    private:
        HttpJsonClient client_;
    };

    class HttpMattingBackend final : public MattingBackend
    {
    public:
        explicit HttpMattingBackend(BackendEndpoint ep) : client_(std::move(ep)) {}

        std::string id() const override { return "http:" + client_.endpoint().url; }

        RgbaImage matte(const RgbImage& image) override
        {
            const auto body = client_.post(wire::kMattePath, {{"image_png", base64_encode(encode_png(image))}});
            auto out = decode_png<Rgba8>(base64_decode(wire::detail::get<std::string>(body, "image_png")));
            if (out.width() != image.width() || out.height() != image.height())
                throw Error(ErrorCode::BackendProtocolError, "matte size differs from input");
            for (auto& p : out.pixels())
                p[3] = p[3] >= 128 ? 255 : 0;
            return out;
        }

    private:
        HttpJsonClient client_;
    };

    /// The backend set a pipeline talks to.
    struct Gateway
    {
        std::shared_ptr<ImageBackend> image;
        std::shared_ptr<ReconBackend> recon;
        std::shared_ptr<MattingBackend> matting; // null: built-in flood-fill matting
        bool matting_fallback = true;
    };

    inline std::shared_ptr<ImageBackend> make_image_backend(const BackendEndpoint& ep)
    {
        if (ep.is_mock())
            return std::make_shared<MockImageBackend>();
        return std::make_shared<HttpImageBackend>(ep);
    }

    inline std::shared_ptr<ReconBackend> make_recon_backend(const BackendEndpoint& ep,
                                                            double thickness = kDefaultExtrudeThickness)
    {
        if (ep.is_mock())
            return std::make_shared<MockReconBackend>(thickness);
        return std::make_shared<HttpReconBackend>(ep);
    }

    inline Gateway make_mock_gateway()
    {
        return {std::make_shared<MockImageBackend>(), std::make_shared<MockReconBackend>(), nullptr, true};
    }

    inline std::vector<CandidateImage> infer_candidates(const ControlRequest& req, ImageBackend& backend)
    {
        if (req.candidate_count < 1)
            throw Error(ErrorCode::InvalidArgument, "candidate_count must be >= 1");
        auto out = backend.infer(req);
        if (static_cast<int>(out.size()) != req.candidate_count)
            throw Error(ErrorCode::BackendProtocolError, "backend returned the wrong number of candidates");
        return out;
    }

    inline ReconstructResult reconstruct(const CandidateImage& image, ReconBackend& backend, int n = kDefaultResolution)
    {
        if (n < kMinResolution || n > kMaxResolution)
            throw Error(ErrorCode::InvalidResolution, "resolution must be in [2, 256]");
        if (std::none_of(image.pixels.pixels().begin(), image.pixels.pixels().end(),
                         [](const Rgba8& p) { return p[3] > 0; }))
            throw Error(ErrorCode::EmptyForeground, "candidate has no foreground");
        return backend.reconstruct(image, n);
    }

    /// Matting with the configured backend, or the built-in flood fill.
    /// An unreachable external backend falls back to the built-in method
    /// unless fallback is disabled.
    inline CandidateImage matte_candidate(const CandidateImage& raw, const Gateway& gw, double tolerance)
    {
        const RgbImage rgb = drop_alpha(raw.pixels);
        RgbaImage matted;
        if (gw.matting)
        {
            try
            {
                matted = gw.matting->matte(rgb);
            }
            catch (const Error& e)
            {
                if (e.code() != ErrorCode::BackendTimeout)
                    throw;
                if (!gw.matting_fallback)
                    throw Error(ErrorCode::MattingBackendUnavailable, e.what());
                matted = remove_background(rgb, tolerance);
            }
        }
        else
        {
            matted = remove_background(rgb, tolerance);
        }
        return make_candidate(std::move(matted), raw.seed, raw.backend_id);
    }
}
