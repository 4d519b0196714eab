#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "codec.hpp"
#include "mesh.hpp"

namespace meshforge
{
    constexpr int kManifestVersion = 1;
    constexpr const char* kDefaultMaterialName = "default";
    constexpr const char* kMaterialFileName = "material.mtl";

    struct ObjDocument
    {
        std::string obj_text;
        std::string mtl_text;
    };

    namespace detail
    {
        /// Fixed 6-decimal formatting; values that round to zero print unsigned.
        inline void append_fixed(std::string& out, double v)
        {
            if (std::abs(v) < 5e-7)
                v = 0.0;
            char buf[64];
            const int n = std::snprintf(buf, sizeof(buf), "%.6f", v);
            out.append(buf, static_cast<std::size_t>(n));
        }
    }

    /// Wavefront OBJ with the `v x y z r g b` vertex-color extension, one
    /// material, `\n` line endings, 1-based `f v//vn` faces.
    inline ObjDocument export_obj(const IndexedMesh& mesh, std::string_view name,
                                  std::string_view mtl_file = kMaterialFileName)
    {
        if (mesh.triangles.empty())
            throw Error(ErrorCode::EmptyMesh, "mesh has no triangles");
        if (!mesh.has_normals())
            throw Error(ErrorCode::InvalidArgument, "normals must be computed before export");

        ObjDocument doc;
        std::string& o = doc.obj_text;
        o += "# meshforge obj v1\n";
        o += "mtllib ";
        o += mtl_file;
        o += "\no ";
        o += name;
        o += '\n';

        for (std::size_t v = 0; v < mesh.vertex_count(); ++v)
        {
            const Vec3& p = mesh.positions[v];
            const Rgb c = mesh.colors.empty() ? Rgb{1.0, 1.0, 1.0} : mesh.colors[v];
            o += "v";
            for (double x : {p.x, p.y, p.z, c[0], c[1], c[2]})
            {
                o += ' ';
                detail::append_fixed(o, x);
            }
            o += '\n';
        }
        for (const auto& n : mesh.normals)
        {
            o += "vn";
            for (double x : {n.x, n.y, n.z})
            {
                o += ' ';
                detail::append_fixed(o, x);
            }
            o += '\n';
        }
        o += "usemtl ";
        o += kDefaultMaterialName;
        o += '\n';
        for (const auto& t : mesh.triangles)
        {
            o += 'f';
            for (auto idx : t)
            {
                const std::string i = std::to_string(idx + 1);
                o += ' ';
                o += i;
                o += "//";
                o += i;
            }
            o += '\n';
        }

        doc.mtl_text = std::string("# meshforge mtl v1\n")
                     + "newmtl " + kDefaultMaterialName + "\n"
                     + "Ka 1.000000 1.000000 1.000000\n"
                     + "Kd 1.000000 1.000000 1.000000\n"
                     + "Ks 0.000000 0.000000 0.000000\n"
                     + "d 1.000000\n"
                     + "illum 1\n";
        return doc;
    }

    namespace detail
    {
        inline std::vector<std::string_view> split_ws(std::string_view line)
        {
            std::vector<std::string_view> out;
            std::size_t i = 0;
            while (i < line.size())
            {
                while (i < line.size() && (line[i] == ' ' || line[i] == '\t'))
                    ++i;
                const std::size_t start = i;
                while (i < line.size() && line[i] != ' ' && line[i] != '\t')
                    ++i;
                if (i > start)
                    out.push_back(line.substr(start, i - start));
            }
            return out;
        }

        inline double parse_double(std::string_view tok, std::size_t line_no)
        {
            double v = 0.0;
            const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || !std::isfinite(v))
                throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": bad number '" + std::string(tok) + "'");
            return v;
        }

        inline long parse_index(std::string_view tok, std::size_t line_no)
        {
            long v = 0;
            const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || v == 0)
                throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": bad index '" + std::string(tok) + "'");
            return v;
        }

        /// Resolves 1-based (or negative, relative) OBJ indices.
        inline std::size_t resolve_index(long idx, std::size_t count, std::size_t line_no)
        {
            const long resolved = idx > 0 ? idx - 1 : static_cast<long>(count) + idx;
            if (resolved < 0 || static_cast<std::size_t>(resolved) >= count)
                throw Error(ErrorCode::IndexOutOfRange, "line " + std::to_string(line_no) + ": index " + std::to_string(idx)
                                                            + " with " + std::to_string(count) + " elements");
            return static_cast<std::size_t>(resolved);
        }
    }

    /// Parses v (3 or 6 floats), vn and f records; other records are ignored.
    /// Faces with more than three corners are fan-triangulated from the first.
    inline IndexedMesh import_obj(std::string_view text)
    {
        IndexedMesh mesh;
        std::vector<Vec3> file_normals;
        std::vector<std::optional<std::size_t>> vertex_normal;

        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos <= text.size())
        {
            std::size_t end = text.find('\n', pos);
            if (end == std::string_view::npos)
                end = text.size();
            std::string_view line = text.substr(pos, end - pos);
            pos = end + 1;
            ++line_no;

            if (!line.empty() && line.back() == '\r')
                line.remove_suffix(1);
            if (const auto hash = line.find('#'); hash != std::string_view::npos)
                line = line.substr(0, hash);
            const auto tok = detail::split_ws(line);
            if (tok.empty())
                continue;

            if (tok[0] == "v")
            {
                if (tok.size() != 4 && tok.size() != 7)
                    throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": v expects 3 or 6 values");
                mesh.positions.push_back({detail::parse_double(tok[1], line_no), detail::parse_double(tok[2], line_no),
                                          detail::parse_double(tok[3], line_no)});
                if (tok.size() == 7)
                    mesh.colors.push_back({detail::parse_double(tok[4], line_no), detail::parse_double(tok[5], line_no),
                                           detail::parse_double(tok[6], line_no)});
                else
                    mesh.colors.push_back({1.0, 1.0, 1.0});
                vertex_normal.emplace_back();
            }
            else if (tok[0] == "vn")
            {
                if (tok.size() != 4)
                    throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": vn expects 3 values");
                file_normals.push_back({detail::parse_double(tok[1], line_no), detail::parse_double(tok[2], line_no),
                                        detail::parse_double(tok[3], line_no)});
            }
            else if (tok[0] == "f")
            {
                if (tok.size() < 4)
                    throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": face needs 3+ vertices");
                std::vector<std::uint32_t> corners;
                for (std::size_t c = 1; c < tok.size(); ++c)
                {
                    const std::string_view ref = tok[c];
                    const auto slash = ref.find('/');
                    const auto v = detail::resolve_index(detail::parse_index(ref.substr(0, slash), line_no),
                                                         mesh.positions.size(), line_no);
                    if (slash != std::string_view::npos)
                    {
                        const auto slash2 = ref.find('/', slash + 1);
                        if (slash2 != std::string_view::npos && slash2 + 1 < ref.size())
                        {
                            const auto vn = detail::resolve_index(detail::parse_index(ref.substr(slash2 + 1), line_no),
                                                                  file_normals.size(), line_no);
                            vertex_normal[v] = vn;
                        }
                    }
                    corners.push_back(static_cast<std::uint32_t>(v));
                }
                for (std::size_t c = 1; c + 1 < corners.size(); ++c)
                    mesh.triangles.push_back({corners[0], corners[c], corners[c + 1]});
            }
        }

        bool all_normals = !mesh.positions.empty();
        for (const auto& vn : vertex_normal)
            all_normals = all_normals && vn.has_value();
        if (all_normals)
        {
            mesh.normals.reserve(mesh.positions.size());
            for (const auto& vn : vertex_normal)
                mesh.normals.push_back(file_normals[*vn]);
        }
        return mesh;
    }

    struct StageTimings
    {
        double image_infer = 0.0;
        double background_removal = 0.0;
        double reconstruct = 0.0;
        double extract = 0.0;
        double package = 0.0;
        double total = 0.0;

        friend bool operator==(const StageTimings&, const StageTimings&) = default;
    };

    inline nlohmann::json to_json(const StageTimings& t)
    {
        return {{"image_infer", t.image_infer},
                {"background_removal", t.background_removal},
                {"reconstruct", t.reconstruct},
                {"extract", t.extract},
                {"package", t.package},
                {"total", t.total}};
    }

    inline StageTimings timings_from_json(const nlohmann::json& j)
    {
        StageTimings t;
        t.image_infer = j.at("image_infer").get<double>();
        t.background_removal = j.at("background_removal").get<double>();
        t.reconstruct = j.at("reconstruct").get<double>();
        t.extract = j.at("extract").get<double>();
        t.package = j.at("package").get<double>();
        t.total = j.at("total").get<double>();
        return t;
    }

    /// Everything the manifest records about a finished session.
    struct SessionSummary
    {
        std::string session_id;
        std::string prompt;
        std::uint64_t seed = 0;
        std::map<std::string, std::string> backend_ids;
        std::size_t vertices = 0;
        std::size_t triangles = 0;
        StageTimings timings_ms;
        std::string sha256_obj;
        std::string sha256_mtl;
        bool budget_exceeded = false;

        friend bool operator==(const SessionSummary&, const SessionSummary&) = default;
    };

    inline nlohmann::json manifest_json(const SessionSummary& s)
    {
        nlohmann::json j = {{"version", kManifestVersion},
                            {"session_id", s.session_id},
                            {"prompt", s.prompt},
                            {"seed", s.seed},
                            {"backend_ids", s.backend_ids},
                            {"counts", {{"vertices", s.vertices}, {"triangles", s.triangles}}},
                            {"timings_ms", to_json(s.timings_ms)},
                            {"sha256", {{"obj", s.sha256_obj}, {"mtl", s.sha256_mtl}}}};
        if (s.budget_exceeded)
            j["budget_exceeded"] = true;
        return j;
    }

    inline std::string write_manifest(const SessionSummary& s)
    {
        return manifest_json(s).dump(2) + "\n";
    }

    inline SessionSummary parse_manifest(std::string_view text)
    {
        nlohmann::json j;
        try
        {
            j = nlohmann::json::parse(text);
            if (j.at("version").get<int>() != kManifestVersion)
                throw Error(ErrorCode::UnsupportedVersion, "manifest version " + j.at("version").dump());
            SessionSummary s;
            s.session_id = j.at("session_id").get<std::string>();
            s.prompt = j.at("prompt").get<std::string>();
            s.seed = j.at("seed").get<std::uint64_t>();
            s.backend_ids = j.at("backend_ids").get<std::map<std::string, std::string>>();
            s.vertices = j.at("counts").at("vertices").get<std::size_t>();
            s.triangles = j.at("counts").at("triangles").get<std::size_t>();
            s.timings_ms = timings_from_json(j.at("timings_ms"));
            s.sha256_obj = j.at("sha256").at("obj").get<std::string>();
            s.sha256_mtl = j.at("sha256").at("mtl").get<std::string>();
            s.budget_exceeded = j.value("budget_exceeded", false);
            return s;
        }
        catch (const nlohmann::json::exception& e)
        {
            throw Error(ErrorCode::MalformedDocument, e.what());
        }
    }

    struct AssetBundle
    {
        std::string obj_text;
        std::string mtl_text;
        std::string manifest;
        std::optional<std::string> preview_png;
    };

    /// Serializes `mesh` and fills the counts and digests of `summary`.
    inline AssetBundle package_asset(const IndexedMesh& mesh, SessionSummary& summary, std::string_view name = "mesh")
    {
        auto doc = export_obj(mesh, name);
        summary.vertices = mesh.vertex_count();
        summary.triangles = mesh.triangle_count();
        summary.sha256_obj = sha256_hex(doc.obj_text);
        summary.sha256_mtl = sha256_hex(doc.mtl_text);
        AssetBundle bundle;
        bundle.obj_text = std::move(doc.obj_text);
        bundle.mtl_text = std::move(doc.mtl_text);
        bundle.manifest = write_manifest(summary);
        return bundle;
    }
}
