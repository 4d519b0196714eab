#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "image.hpp"

namespace meshforge
{
    constexpr int kSketchFormatVersion = 1;
    constexpr int kMinCanvasSize = 64;
    constexpr int kDefaultCanvasSize = 1024;

    struct Stroke
    {
        std::vector<Vec2> points; // normalized canvas coordinates, origin top-left
        double width = 3.0;       // pixels at the canvas reference resolution
        Rgb color{0.0, 0.0, 0.0};

        friend bool operator==(const Stroke&, const Stroke&) = default;
    };

    struct SketchCanvas
    {
        int width_px = kDefaultCanvasSize;
        int height_px = kDefaultCanvasSize;
        std::vector<Stroke> strokes; // drawn in order over a white background

        friend bool operator==(const SketchCanvas&, const SketchCanvas&) = default;
    };

    inline void validate(const Stroke& s)
    {
        if (s.points.size() < 2)
            throw Error(ErrorCode::InvalidStroke, "stroke needs at least 2 points");
        if (!(s.width > 0.0) || !std::isfinite(s.width))
            throw Error(ErrorCode::InvalidStroke, "stroke width must be positive");
        for (const auto& p : s.points)
        {
            if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0))
                throw Error(ErrorCode::InvalidStroke, "point outside [0,1]^2");
        }
        for (double c : s.color)
        {
            if (!(c >= 0.0 && c <= 1.0))
                throw Error(ErrorCode::InvalidStroke, "color component outside [0,1]");
        }
    }

    inline void validate(const SketchCanvas& c)
    {
        if (c.width_px < kMinCanvasSize || c.height_px < kMinCanvasSize)
            throw Error(ErrorCode::InvalidDimensions, "canvas must be at least 64x64");
        for (const auto& s : c.strokes)
            validate(s);
    }

    inline nlohmann::json sketch_to_json(const SketchCanvas& canvas)
    {
        nlohmann::json strokes = nlohmann::json::array();
        for (const auto& s : canvas.strokes)
        {
            nlohmann::json pts = nlohmann::json::array();
            for (const auto& p : s.points)
                pts.push_back({p.x, p.y});
            strokes.push_back({{"points", std::move(pts)},
                               {"width", s.width},
                               {"color", {s.color[0], s.color[1], s.color[2]}}});
        }
        return {{"version", kSketchFormatVersion},
                {"width_px", canvas.width_px},
                {"height_px", canvas.height_px},
                {"strokes", std::move(strokes)}};
    }

    inline std::string serialize_sketch(const SketchCanvas& canvas)
    {
        return sketch_to_json(canvas).dump();
    }

    namespace detail
    {
        inline double json_number(const nlohmann::json& j, const char* what)
        {
            if (!j.is_number())
                throw Error(ErrorCode::MalformedDocument, std::string(what) + " must be a number");
            return j.get<double>();
        }

        inline int json_int(const nlohmann::json& obj, const char* key)
        {
            auto it = obj.find(key);
            if (it == obj.end() || !it->is_number_integer())
                throw Error(ErrorCode::MalformedDocument, std::string(key) + " must be an integer");
            return it->get<int>();
        }
    }

    inline SketchCanvas sketch_from_json(const nlohmann::json& doc)
    {
        if (!doc.is_object())
            throw Error(ErrorCode::MalformedDocument, "sketch document must be an object");

        auto version = doc.find("version");
        if (version == doc.end() || !version->is_number_integer())
            throw Error(ErrorCode::MalformedDocument, "missing integer version");
        if (version->get<long long>() != kSketchFormatVersion)
            throw Error(ErrorCode::UnsupportedVersion, "sketch version " + version->dump());

        SketchCanvas canvas;
        canvas.width_px = detail::json_int(doc, "width_px");
        canvas.height_px = detail::json_int(doc, "height_px");

        auto strokes = doc.find("strokes");
        if (strokes == doc.end() || !strokes->is_array())
            throw Error(ErrorCode::MalformedDocument, "strokes must be an array");

        for (const auto& js : *strokes)
        {
            if (!js.is_object())
                throw Error(ErrorCode::MalformedDocument, "stroke must be an object");
            Stroke s;

            auto pts = js.find("points");
            if (pts == js.end() || !pts->is_array())
                throw Error(ErrorCode::MalformedDocument, "stroke points must be an array");
            for (const auto& jp : *pts)
            {
                if (!jp.is_array() || jp.size() != 2)
                    throw Error(ErrorCode::MalformedDocument, "point must be [x, y]");
                s.points.push_back({detail::json_number(jp[0], "x"), detail::json_number(jp[1], "y")});
            }

            auto width = js.find("width");
            if (width == js.end())
                throw Error(ErrorCode::MalformedDocument, "stroke width missing");
            s.width = detail::json_number(*width, "width");

            auto color = js.find("color");
            if (color == js.end() || !color->is_array() || color->size() != 3)
                throw Error(ErrorCode::MalformedDocument, "stroke color must be [r, g, b]");
            for (int i = 0; i < 3; ++i)
                s.color[i] = detail::json_number((*color)[i], "color");

            canvas.strokes.push_back(std::move(s));
        }

        validate(canvas);
        return canvas;
    }

    inline SketchCanvas parse_sketch(std::string_view document)
    {
        nlohmann::json doc;
        try
        {
            doc = nlohmann::json::parse(document);
        }
        catch (const nlohmann::json::parse_error& e)
        {
            throw Error(ErrorCode::MalformedDocument, e.what());
        }
        return sketch_from_json(doc);
    }

    namespace detail
    {
        inline double segment_distance_sq(double px, double py, double ax, double ay, double bx, double by)
        {
            const double dx = bx - ax;
            const double dy = by - ay;
            const double len_sq = dx * dx + dy * dy;
            double t = 0.0;
            if (len_sq > 0.0)
                t = std::clamp(((px - ax) * dx + (py - ay) * dy) / len_sq, 0.0, 1.0);
            const double qx = ax + t * dx - px;
            const double qy = ay + t * dy - py;
            return qx * qx + qy * qy;
        }
    }

    /// Smallest swept-disk radius in output pixels; keeps downscaled strokes
    /// 8-connected instead of letting them vanish between pixel centers.
    constexpr double kMinStrokeRadiusPx = 0.71;

    /// Binary scribble raster: strokes are black swept disks on white.
    /// A pixel is covered when its center lies strictly within the stroke radius.
    inline GrayImage rasterize_scribble(const SketchCanvas& canvas, int out_w, int out_h)
    {
        if (out_w < kMinCanvasSize || out_h < kMinCanvasSize)
            throw Error(ErrorCode::InvalidDimensions, "output raster must be at least 64x64");

        GrayImage img(out_w, out_h, 255);
        const double scale = static_cast<double>(out_w) / canvas.width_px;

        for (const auto& stroke : canvas.strokes)
        {
            const double r = std::max(0.5 * stroke.width * scale, kMinStrokeRadiusPx);
            const double r_sq = r * r;
            for (std::size_t i = 0; i + 1 < stroke.points.size(); ++i)
            {
                const double ax = stroke.points[i].x * out_w;
                const double ay = stroke.points[i].y * out_h;
                const double bx = stroke.points[i + 1].x * out_w;
                const double by = stroke.points[i + 1].y * out_h;

                const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - r)));
                const int x1 = std::min(out_w - 1, static_cast<int>(std::ceil(std::max(ax, bx) + r)));
                const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - r)));
                const int y1 = std::min(out_h - 1, static_cast<int>(std::ceil(std::max(ay, by) + r)));

                for (int y = y0; y <= y1; ++y)
                {
                    for (int x = x0; x <= x1; ++x)
                    {
                        if (detail::segment_distance_sq(x + 0.5, y + 0.5, ax, ay, bx, by) < r_sq)
                            img(x, y) = 0;
                    }
                }
            }
        }
        return img;
    }
}
