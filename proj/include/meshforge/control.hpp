#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "image.hpp"
#include "sketch.hpp"

namespace meshforge
{
    /// Conditioning weights for the three control models.
    struct ControlWeights
    {
        double scribble = 0.55;
        double canny = 0.05;
        double ip2p = 0.5;

        friend bool operator==(const ControlWeights&, const ControlWeights&) = default;
    };

    struct CannyParams
    {
        double sigma = 1.4;
        double low = 50.0;
        double high = 150.0;
    };

    struct GenerationConfig
    {
        int raster_width = 512;
        int raster_height = 512;
        CannyParams canny;
        ControlWeights weights;
        std::optional<std::string> negative_prompt;
        std::uint64_t seed = 0;
        int candidate_count = 4;
        double background_tolerance = 12.0; // per channel, 0-255 scale
    };

    struct ControlRequest
    {
        std::string prompt;
        std::optional<std::string> negative_prompt;
        GrayImage scribble;
        GrayImage canny;
        ControlWeights weights;
        std::uint64_t seed = 0;
        int candidate_count = 1;
        bool prompt_empty = false;

        friend bool operator==(const ControlRequest&, const ControlRequest&) = default;
    };

    struct CandidateImage
    {
        RgbaImage pixels;
        std::uint64_t seed = 0;
        std::string backend_id;
        PixelRect foreground_bbox;
    };

    namespace detail
    {
        inline std::vector<double> gaussian_kernel(double sigma)
        {
            const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
            std::vector<double> k(2 * radius + 1);
            double sum = 0.0;
            for (int i = -radius; i <= radius; ++i)
            {
                k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
                sum += k[i + radius];
            }
            for (double& v : k)
                v /= sum;
            return k;
        }

        /// Separable blur with replicated borders.
        inline Raster<double> gaussian_blur(const GrayImage& img, double sigma)
        {
            const auto k = gaussian_kernel(sigma);
            const int radius = static_cast<int>(k.size() / 2);
            const int w = img.width();
            const int h = img.height();

            Raster<double> tmp(w, h);
            for (int y = 0; y < h; ++y)
            {
                for (int x = 0; x < w; ++x)
                {
                    double acc = 0.0;
                    for (int i = -radius; i <= radius; ++i)
                        acc += k[i + radius] * img(std::clamp(x + i, 0, w - 1), y);
                    tmp(x, y) = acc;
                }
            }
            Raster<double> out(w, h);
            for (int y = 0; y < h; ++y)
            {
                for (int x = 0; x < w; ++x)
                {
                    double acc = 0.0;
                    for (int i = -radius; i <= radius; ++i)
                        acc += k[i + radius] * tmp(x, std::clamp(y + i, 0, h - 1));
                    out(x, y) = acc;
                }
            }
            return out;
        }
    }

    struct GradientField
    {
        Raster<double> gx;
        Raster<double> gy;
        Raster<double> magnitude; // rescaled so the image maximum is 255
    };

    /// Sobel gradients of the blurred image. Magnitudes are divided by 4 (an
    /// unblurred 0->255 step reads 255) and then rescaled so the strongest
    /// response is exactly 255; constant images stay all zero.
    inline GradientField sobel_gradients(const Raster<double>& src)
    {
        const int w = src.width();
        const int h = src.height();
        GradientField g{Raster<double>(w, h), Raster<double>(w, h), Raster<double>(w, h)};
        auto at = [&](int x, int y) { return src(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1)); };

        double peak = 0.0;
        for (int y = 0; y < h; ++y)
        {
            for (int x = 0; x < w; ++x)
            {
                const double gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
                const double gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
                g.gx(x, y) = gx;
                g.gy(x, y) = gy;
                g.magnitude(x, y) = std::hypot(gx, gy) / 4.0;
                peak = std::max(peak, g.magnitude(x, y));
            }
        }
        // flat image: nothing to rescale
        if (peak > 1e-9)
        {
            for (double& m : g.magnitude.pixels())
                m *= 255.0 / peak;
        }
        else
        {
            std::fill(g.magnitude.pixels().begin(), g.magnitude.pixels().end(), 0.0);
        }
        return g;
    }

    /// Neighbor offset along the gradient direction quantized to 0/45/90/135 degrees.
    inline std::pair<int, int> quantized_direction(double gx, double gy)
    {
        double angle = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
        if (angle < 0.0)
            angle += 180.0;
        if (angle < 22.5 || angle >= 157.5)
            return {1, 0};
        if (angle < 67.5)
            return {1, 1};
        if (angle < 112.5)
            return {0, 1};
        return {-1, 1};
    }

    /// Non-maximum suppressed magnitudes. On two-pixel plateaus (a step edge
    /// falling between pixels) only the pixel behind the crest survives.
    inline Raster<double> non_maximum_suppression(const GradientField& g)
    {
        const int w = g.magnitude.width();
        const int h = g.magnitude.height();
        Raster<double> out(w, h, 0.0);
        auto mag = [&](int x, int y) { return g.magnitude.contains(x, y) ? g.magnitude(x, y) : 0.0; };

        for (int y = 0; y < h; ++y)
        {
            for (int x = 0; x < w; ++x)
            {
                const double m = g.magnitude(x, y);
                if (m <= 0.0)
                    continue;
                const auto [dx, dy] = quantized_direction(g.gx(x, y), g.gy(x, y));
                if (m >= mag(x + dx, y + dy) && m > mag(x - dx, y - dy))
                    out(x, y) = m;
            }
        }
        return out;
    }

    inline GrayImage canny_edges(const GrayImage& image, double sigma, double low, double high)
    {
        if (!(sigma > 0.0) || !std::isfinite(sigma))
            throw Error(ErrorCode::InvalidSigma, "sigma must be positive");
        if (!(low > 0.0) || !(low < high))
            throw Error(ErrorCode::InvalidThresholds, "require 0 < low < high");
        if (image.empty())
            throw Error(ErrorCode::InvalidDimensions, "empty image");

        const auto blurred = detail::gaussian_blur(image, sigma);
        const auto grad = sobel_gradients(blurred);
        const auto thin = non_maximum_suppression(grad);

        const int w = image.width();
        const int h = image.height();
        GrayImage edges(w, h, 0);
        std::vector<std::pair<int, int>> stack;
        for (int y = 0; y < h; ++y)
        {
            for (int x = 0; x < w; ++x)
            {
                if (thin(x, y) >= high)
                {
                    edges(x, y) = 255;
                    stack.emplace_back(x, y);
                }
            }
        }
        // hysteresis: grow strong edges through 8-connected weak pixels
        while (!stack.empty())
        {
            const auto [x, y] = stack.back();
            stack.pop_back();
            for (int dy = -1; dy <= 1; ++dy)
            {
                for (int dx = -1; dx <= 1; ++dx)
                {
                    const int nx = x + dx;
                    const int ny = y + dy;
                    if (!edges.contains(nx, ny) || edges(nx, ny) != 0)
                        continue;
                    if (thin(nx, ny) >= low)
                    {
                        edges(nx, ny) = 255;
                        stack.emplace_back(nx, ny);
                    }
                }
            }
        }
        return edges;
    }

    inline GrayImage canny_edges(const GrayImage& image, const CannyParams& p)
    {
        return canny_edges(image, p.sigma, p.low, p.high);
    }

    inline void validate(const ControlWeights& w)
    {
        for (double v : {w.scribble, w.canny, w.ip2p})
        {
            if (!(v >= 0.0 && v <= 1.0))
                throw Error(ErrorCode::InvalidWeight, "conditioning weight outside [0,1]");
        }
    }

    inline ControlRequest build_control_request(const SketchCanvas& canvas, const std::string& prompt,
                                                const GenerationConfig& cfg)
    {
        validate(cfg.weights);
        if (cfg.candidate_count < 1)
            throw Error(ErrorCode::InvalidArgument, "candidate_count must be >= 1");

        ControlRequest req;
        req.prompt = prompt;
        req.negative_prompt = cfg.negative_prompt;
        req.scribble = rasterize_scribble(canvas, cfg.raster_width, cfg.raster_height);
        req.canny = canny_edges(req.scribble, cfg.canny);
        req.weights = cfg.weights;
        req.seed = cfg.seed;
        req.candidate_count = cfg.candidate_count;
        req.prompt_empty = prompt.empty();
        return req;
    }

    /// Chebyshev distance between two colors, 0-255 scale.
    inline int color_distance(const Rgb8& a, const Rgb8& b)
    {
        int d = 0;
        for (int c = 0; c < 3; ++c)
            d = std::max(d, std::abs(static_cast<int>(a[c]) - static_cast<int>(b[c])));
        return d;
    }

    inline Rgb8 border_median_color(const RgbImage& img)
    {
        std::array<std::vector<std::uint8_t>, 3> channels;
        auto push = [&](int x, int y) {
            for (int c = 0; c < 3; ++c)
                channels[c].push_back(img(x, y)[c]);
        };
        for (int x = 0; x < img.width(); ++x)
        {
            push(x, 0);
            if (img.height() > 1)
                push(x, img.height() - 1);
        }
        for (int y = 1; y + 1 < img.height(); ++y)
        {
            push(0, y);
            if (img.width() > 1)
                push(img.width() - 1, y);
        }
        Rgb8 median{};
        for (int c = 0; c < 3; ++c)
        {
            auto& v = channels[c];
            std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
            median[c] = v[v.size() / 2];
        }
        return median;
    }

    /// Built-in matting: background is whatever the border flood reaches
    /// within `tolerance` of the border-median color.
    inline RgbaImage remove_background(const RgbImage& image, double tolerance = 12.0)
    {
        if (image.empty())
            throw Error(ErrorCode::InvalidDimensions, "empty image");

        const Rgb8 bg = border_median_color(image);
        const Mask flooded = flood_from_border(image, [&](const Rgb8& p) {
            return color_distance(p, bg) <= tolerance;
        });

        RgbaImage out(image.width(), image.height());
        bool any = false;
        for (std::size_t i = 0; i < image.size(); ++i)
        {
            const auto& p = image.pixels()[i];
            const bool fg = flooded.pixels()[i] == 0;
            any = any || fg;
            out.pixels()[i] = {p[0], p[1], p[2], static_cast<std::uint8_t>(fg ? 255 : 0)};
        }
        if (!any)
            throw Error(ErrorCode::NoForeground, "every pixel matched the background");
        return out;
    }

    inline CandidateImage make_candidate(RgbaImage pixels, std::uint64_t seed, std::string backend_id)
    {
        CandidateImage c;
        c.foreground_bbox = bounding_box(pixels, [](const Rgba8& p) { return p[3] > 0; });
        if (c.foreground_bbox.empty())
            throw Error(ErrorCode::NoForeground, "candidate has no foreground");
        c.pixels = std::move(pixels);
        c.seed = seed;
        c.backend_id = std::move(backend_id);
        return c;
    }
}
