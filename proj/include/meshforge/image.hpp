#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "common.hpp"

namespace meshforge
{
    /// Row-major 2D raster, row 0 at the top.
    template <class Pixel>
    class Raster
    {
    public:
        using pixel_type = Pixel;

        Raster() = default;

        Raster(int width, int height, Pixel fill = Pixel{})
            : width_(width), height_(height)
        {
            if (width < 0 || height < 0)
            {
                throw Error(ErrorCode::InvalidDimensions, "negative raster size");
            }
            data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
        }

        int width() const noexcept { return width_; }
        int height() const noexcept { return height_; }
        std::size_t size() const noexcept { return data_.size(); }
        bool empty() const noexcept { return data_.empty(); }

        bool contains(int x, int y) const noexcept
        {
            return x >= 0 && y >= 0 && x < width_ && y < height_;
        }

        Pixel& operator()(int x, int y) { return data_[index(x, y)]; }
        const Pixel& operator()(int x, int y) const { return data_[index(x, y)]; }

        std::size_t index(int x, int y) const noexcept
        {
            return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
        }

        std::vector<Pixel>& pixels() noexcept { return data_; }
        const std::vector<Pixel>& pixels() const noexcept { return data_; }

        friend bool operator==(const Raster&, const Raster&) = default;

    private:
        int width_ = 0;
        int height_ = 0;
        std::vector<Pixel> data_;
    };

    using Rgb8 = std::array<std::uint8_t, 3>;
    using Rgba8 = std::array<std::uint8_t, 4>;

    using GrayImage = Raster<std::uint8_t>;
    using RgbImage = Raster<Rgb8>;
    using RgbaImage = Raster<Rgba8>;
    /// 0 = background, 1 = foreground.
    using Mask = Raster<std::uint8_t>;

    struct PixelRect
    {
        int x0 = 0;
        int y0 = 0;
        int x1 = 0; // exclusive
        int y1 = 0; // exclusive

        int width() const noexcept { return x1 - x0; }
        int height() const noexcept { return y1 - y0; }
        bool empty() const noexcept { return x1 <= x0 || y1 <= y0; }

        friend bool operator==(const PixelRect&, const PixelRect&) = default;
    };

    /// Tight bounding box of pixels satisfying pred; empty rect when none do.
    template <class Pixel, class Pred>
    PixelRect bounding_box(const Raster<Pixel>& img, Pred pred)
    {
        PixelRect r{img.width(), img.height(), 0, 0};
        bool any = false;
        for (int y = 0; y < img.height(); ++y)
        {
            for (int x = 0; x < img.width(); ++x)
            {
                if (!pred(img(x, y)))
                    continue;
                any = true;
                r.x0 = std::min(r.x0, x);
                r.y0 = std::min(r.y0, y);
                r.x1 = std::max(r.x1, x + 1);
                r.y1 = std::max(r.y1, y + 1);
            }
        }
        return any ? r : PixelRect{};
    }

    /// 4-connected flood fill seeded from every border pixel that satisfies
    /// passable; returns 1 on flooded pixels.
    template <class Pixel, class Pred>
    Mask flood_from_border(const Raster<Pixel>& img, Pred passable)
    {
        Mask flooded(img.width(), img.height(), 0);
        std::vector<std::pair<int, int>> stack;
        auto seed = [&](int x, int y) {
            if (!flooded(x, y) && passable(img(x, y)))
            {
                flooded(x, y) = 1;
                stack.emplace_back(x, y);
            }
        };
        for (int x = 0; x < img.width(); ++x)
        {
            seed(x, 0);
            seed(x, img.height() - 1);
        }
        for (int y = 0; y < img.height(); ++y)
        {
            seed(0, y);
            seed(img.width() - 1, y);
        }
        while (!stack.empty())
        {
            const auto [x, y] = stack.back();
            stack.pop_back();
            if (x > 0) seed(x - 1, y);
            if (x + 1 < img.width()) seed(x + 1, y);
            if (y > 0) seed(x, y - 1);
            if (y + 1 < img.height()) seed(x, y + 1);
        }
        return flooded;
    }

    inline RgbImage to_rgb(const GrayImage& gray)
    {
        RgbImage out(gray.width(), gray.height());
        for (std::size_t i = 0; i < gray.size(); ++i)
        {
            const auto v = gray.pixels()[i];
            out.pixels()[i] = {v, v, v};
        }
        return out;
    }

    inline RgbImage drop_alpha(const RgbaImage& rgba)
    {
        RgbImage out(rgba.width(), rgba.height());
        for (std::size_t i = 0; i < rgba.size(); ++i)
        {
            const auto& p = rgba.pixels()[i];
            out.pixels()[i] = {p[0], p[1], p[2]};
        }
        return out;
    }

    inline Mask alpha_mask(const RgbaImage& rgba)
    {
        Mask out(rgba.width(), rgba.height());
        for (std::size_t i = 0; i < rgba.size(); ++i)
            out.pixels()[i] = rgba.pixels()[i][3] > 0 ? 1 : 0;
        return out;
    }
}
