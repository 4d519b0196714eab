#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "codec.hpp"
#include "control.hpp"
#include "distance.hpp"
#include "field.hpp"
#include "image.hpp"

namespace meshforge
{
    constexpr const char* kMockImageBackendId = "mock-image-v1";
    constexpr const char* kMockReconBackendId = "mock-recon-v1";
    constexpr double kDefaultExtrudeThickness = 0.3;

    namespace detail
    {
        inline Rgb8 hsv_to_rgb8(double hue_deg, double s, double v)
        {
            const double c = v * s;
            const double hp = std::fmod(hue_deg, 360.0) / 60.0;
            const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
            double r = 0, g = 0, b = 0;
            if (hp < 1) { r = c; g = x; }
            else if (hp < 2) { r = x; g = c; }
            else if (hp < 3) { g = c; b = x; }
            else if (hp < 4) { g = x; b = c; }
            else if (hp < 5) { r = x; b = c; }
            else { r = c; b = x; }
            const double m = v - c;
            auto to8 = [](double u) { return static_cast<std::uint8_t>(std::lround(std::clamp(u, 0.0, 1.0) * 255.0)); };
            return {to8(r + m), to8(g + m), to8(b + m)};
        }
    }

    /// Stable 64-bit hash of (prompt, seed) driving mock image style.
    inline std::uint64_t candidate_hash(const std::string& prompt, std::uint64_t seed)
    {
        return Fnv1a64().update(prompt).update(seed).digest();
    }

    /// Deterministic stand-in for the diffusion backend: the scribble's
    /// strokes plus every region they enclose form the object, painted with a
    /// radial shading field whose hue and highlight come from
    /// candidate_hash(prompt, seed + i). Background is pure white.
    inline std::vector<RgbaImage> mock_generate_images(const ControlRequest& req)
    {
        const GrayImage& scribble = req.scribble;
        const int w = scribble.width();
        const int h = scribble.height();
        const Mask outside = flood_from_border(scribble, [](std::uint8_t v) { return v != 0; });
        const PixelRect box = bounding_box(outside, [](std::uint8_t v) { return v == 0; });

        std::vector<RgbaImage> out;
        for (int i = 0; i < req.candidate_count; ++i)
        {
            const std::uint64_t hash = candidate_hash(req.prompt, req.seed + static_cast<std::uint64_t>(i));
            const double hue = static_cast<double>(hash % 3600) / 10.0;
            const double off_x = (static_cast<double>((hash >> 16) & 0xFF) / 255.0 - 0.5) * 0.4;
            const double off_y = (static_cast<double>((hash >> 24) & 0xFF) / 255.0 - 0.5) * 0.4;
            const double saturation = 0.45 + 0.4 * static_cast<double>((hash >> 32) & 0xFF) / 255.0;

            const double cx = 0.5 * (box.x0 + box.x1) + off_x * box.width();
            const double cy = 0.5 * (box.y0 + box.y1) + off_y * box.height();
            const double radius = std::max(1.0, 0.5 * std::hypot(box.width(), box.height()));
            const Rgb8 ink = detail::hsv_to_rgb8(hue, 0.8, 0.2);

            RgbaImage img(w, h, Rgba8{255, 255, 255, 255});
            for (int y = 0; y < h; ++y)
            {
                for (int x = 0; x < w; ++x)
                {
                    if (outside(x, y))
                        continue;
                    Rgb8 c = ink;
                    if (scribble(x, y) != 0)
                    {
                        const double r = std::hypot(x + 0.5 - cx, y + 0.5 - cy) / radius;
                        const double shade = 1.0 - 0.6 * std::clamp(r, 0.0, 1.0);
                        c = detail::hsv_to_rgb8(hue, saturation, 0.3 + 0.6 * shade);
                    }
                    img(x, y) = {c[0], c[1], c[2], 255};
                }
            }
            out.push_back(std::move(img));
        }
        return out;
    }

    /// Signed distance of an extruded silhouette intersected with the slab
    /// |z| <= thickness. The mask covers [-1,1]^2 along its longer side
    /// (image row 0 at y = +1). Colors come from `albedo` at interior
    /// corners when given, mid-gray elsewhere. Flexicube weights are neutral.
    inline ReconstructionField silhouette_extrude(const Mask& mask, int n, double thickness,
                                                  const RgbaImage* albedo = nullptr)
    {
        if (n < kMinResolution || n > kMaxResolution)
            throw Error(ErrorCode::InvalidResolution, "resolution must be in [2, 256]");
        if (!(thickness > 0.0 && thickness <= 1.0))
            throw Error(ErrorCode::InvalidArgument, "thickness must be in (0, 1]");
        if (std::none_of(mask.pixels().begin(), mask.pixels().end(), [](std::uint8_t v) { return v != 0; }))
            throw Error(ErrorCode::EmptyForeground, "mask has no foreground");

        const int w = mask.width();
        const int h = mask.height();
        const int m = std::max(w, h);

        Mask background(w, h);
        for (std::size_t i = 0; i < mask.size(); ++i)
            background.pixels()[i] = mask.pixels()[i] ? 0 : 1;
        const auto outside = edt_2d(mask);
        const auto inside = edt_2d(background);

        // Pixel-center signed distance, shifted half a pixel so the zero
        // crossing sits on the boundary between foreground and background.
        const double far = 2.0 * (w + h);
        Raster<double> signed_px(w, h);
        for (std::size_t i = 0; i < mask.size(); ++i)
        {
            if (mask.pixels()[i])
                signed_px.pixels()[i] = -(std::min(inside.pixels()[i], far) - 0.5);
            else
                signed_px.pixels()[i] = outside.pixels()[i] - 0.5;
        }

        const double world_per_px = 2.0 / m;
        auto to_pixel = [&](double x, double y) {
            const double u = (x + 1.0) * 0.5 * m - 0.5 * (m - w) - 0.5;
            const double v = (1.0 - y) * 0.5 * m - 0.5 * (m - h) - 0.5;
            return std::pair<double, double>{u, v};
        };
        auto sample = [&](double u, double v) {
            u = std::clamp(u, 0.0, static_cast<double>(w - 1));
            v = std::clamp(v, 0.0, static_cast<double>(h - 1));
            const int u0 = std::min(static_cast<int>(u), std::max(0, w - 2));
            const int v0 = std::min(static_cast<int>(v), std::max(0, h - 2));
            const int u1 = std::min(u0 + 1, w - 1);
            const int v1 = std::min(v0 + 1, h - 1);
            const double fu = u - u0;
            const double fv = v - v0;
            return (1 - fu) * (1 - fv) * signed_px(u0, v0) + fu * (1 - fv) * signed_px(u1, v0)
                 + (1 - fu) * fv * signed_px(u0, v1) + fu * fv * signed_px(u1, v1);
        };

        ReconstructionField f(n);
        // the 2D term does not depend on z
        std::vector<double> plane(static_cast<std::size_t>(n + 1) * (n + 1));
        for (int j = 0; j <= n; ++j)
            for (int i = 0; i <= n; ++i)
            {
                const auto [u, v] = to_pixel(f.coord(i), f.coord(j));
                plane[static_cast<std::size_t>(j) * (n + 1) + i] = sample(u, v) * world_per_px;
            }

        for (int k = 0; k <= n; ++k)
        {
            const double slab = std::abs(f.coord(k)) - thickness;
            for (int j = 0; j <= n; ++j)
            {
                for (int i = 0; i <= n; ++i)
                {
                    const std::size_t idx = f.corner_index(i, j, k);
                    const double d = std::max(plane[static_cast<std::size_t>(j) * (n + 1) + i], slab);
                    f.sdf[idx] = static_cast<float>(d);

                    Rgb c{0.5, 0.5, 0.5};
                    if (albedo && d < 0.0)
                    {
                        const auto [u, v] = to_pixel(f.coord(i), f.coord(j));
                        const int px = std::clamp(static_cast<int>(std::lround(u)), 0, albedo->width() - 1);
                        const int py = std::clamp(static_cast<int>(std::lround(v)), 0, albedo->height() - 1);
                        const auto& p = (*albedo)(px, py);
                        c = {p[0] / 255.0, p[1] / 255.0, p[2] / 255.0};
                    }
                    for (int ch = 0; ch < 3; ++ch)
                        f.color[3 * idx + ch] = static_cast<float>(c[ch]);
                }
            }
        }
        return f;
    }

    inline ReconstructionField mock_reconstruct(const RgbaImage& image, int n, double thickness = kDefaultExtrudeThickness)
    {
        return silhouette_extrude(alpha_mask(image), n, thickness, &image);
    }
}
