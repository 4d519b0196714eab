#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <unordered_map>
#include <vector>

#include "common.hpp"
#include "field.hpp"

namespace meshforge
{
    using Triangle = std::array<std::uint32_t, 3>;

    /// Structure-of-arrays triangle mesh. `normals` is either empty (unset)
    /// or parallel to `positions`.
    struct IndexedMesh
    {
        std::vector<Vec3> positions;
        std::vector<Vec3> normals;
        std::vector<Rgb> colors;
        std::vector<Triangle> triangles;

        std::size_t vertex_count() const noexcept { return positions.size(); }
        std::size_t triangle_count() const noexcept { return triangles.size(); }
        bool empty() const noexcept { return triangles.empty(); }
        bool has_normals() const noexcept { return !normals.empty(); }

        friend bool operator==(const IndexedMesh&, const IndexedMesh&) = default;
    };

    struct TopologyReport
    {
        std::size_t vertices = 0;
        std::size_t edges = 0;
        std::size_t faces = 0;
        long long euler_characteristic = 0;
        std::size_t connected_components = 0;
        bool watertight = false;
        bool manifold = false;
    };

    /// Sign offset applied to sdf values that sit exactly on the iso level.
    constexpr double kIsoPerturbation = 1e-12;

    namespace detail
    {
        inline double shifted(const ReconstructionField& f, std::size_t corner, double iso)
        {
            const double s = static_cast<double>(f.sdf[corner]) - iso;
            return s == 0.0 ? kIsoPerturbation : s;
        }

        // For an edge along `axis`, the (di, dj, dk) offsets of its four incident
        // cells relative to the edge's start corner, in counter-clockwise order
        // when viewed looking down the positive axis direction.
        constexpr std::array<std::array<std::array<int, 3>, 4>, 3> kEdgeRing = {{
            {{{0, -1, -1}, {0, 0, -1}, {0, 0, 0}, {0, -1, 0}}},
            {{{-1, 0, -1}, {-1, 0, 0}, {0, 0, 0}, {0, 0, -1}}},
            {{{-1, -1, 0}, {0, -1, 0}, {0, 0, 0}, {-1, 0, 0}}},
        }};
    }

    /// Root of the alpha-weighted edge interpolation, t in [0,1] from the start
    /// corner. Written with the alpha ratio so a uniform rescale of alpha
    /// cancels exactly.
    inline double weighted_crossing(double s0, double s1, double alpha0, double alpha1)
    {
        const double ratio = alpha1 / alpha0;
        return s0 / (s0 - s1 * ratio);
    }

    /// Dual marching cubes with Flexicubes-style weights.
    ///
    /// Each sign-changing lattice edge gets a crossing point from the
    /// alpha-weighted interpolation of its endpoint values; each cell touched
    /// by a crossing gets one vertex at the beta-weighted mean of its crossings;
    /// each sign-changing edge then emits the quad of its (up to four)
    /// incident cell vertices, split along the shorter diagonal and wound so
    /// faces point from negative toward positive values. Vertices are
    /// numbered by cell in x-fastest scan order. Gamma is not used.
    inline IndexedMesh extract_mesh(const ReconstructionField& field, double iso = 0.0)
    {
        const int n = field.n;
        const double h = field.spacing();
        IndexedMesh mesh;

        // Crossing points per edge, accumulated into cell sums.
        std::vector<Vec3> cell_sum(field.cell_count());
        std::vector<double> cell_weight(field.cell_count(), 0.0);

        for (int axis = 0; axis < 3; ++axis)
        {
            const int ni = axis == 0 ? n : n + 1;
            const int nj = axis == 1 ? n : n + 1;
            const int nk = axis == 2 ? n : n + 1;
            const int ax = axis == 0;
            const int ay = axis == 1;
            const int az = axis == 2;
            const auto& beta = field.beta(axis);

            for (int k = 0; k < nk; ++k)
            {
                for (int j = 0; j < nj; ++j)
                {
                    for (int i = 0; i < ni; ++i)
                    {
                        const std::size_t c0 = field.corner_index(i, j, k);
                        const std::size_t c1 = field.corner_index(i + ax, j + ay, k + az);
                        const double s0 = detail::shifted(field, c0, iso);
                        const double s1 = detail::shifted(field, c1, iso);
                        if ((s0 < 0.0) == (s1 < 0.0))
                            continue;

                        const double t = weighted_crossing(s0, s1, field.alpha[c0], field.alpha[c1]);
                        Vec3 p = field.corner_position(i, j, k);
                        p[axis] += t * h;

                        const double b = beta[field.edge_index(axis, i, j, k)];
                        for (const auto& off : detail::kEdgeRing[axis])
                        {
                            const int ci = i + off[0];
                            const int cj = j + off[1];
                            const int ck = k + off[2];
                            if (ci < 0 || cj < 0 || ck < 0 || ci >= n || cj >= n || ck >= n)
                                continue;
                            const std::size_t cell = field.cell_index(ci, cj, ck);
                            cell_sum[cell] += p * b;
                            cell_weight[cell] += b;
                        }
                    }
                }
            }
        }

        constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
        std::vector<std::uint32_t> cell_vertex(field.cell_count(), kNone);
        for (int k = 0; k < n; ++k)
        {
            for (int j = 0; j < n; ++j)
            {
                for (int i = 0; i < n; ++i)
                {
                    const std::size_t cell = field.cell_index(i, j, k);
                    if (cell_weight[cell] <= 0.0)
                        continue;
                    const Vec3 p = cell_sum[cell] * (1.0 / cell_weight[cell]);
                    cell_vertex[cell] = static_cast<std::uint32_t>(mesh.positions.size());
                    mesh.positions.push_back(p);
                    mesh.colors.push_back(sample_color(field, p));
                }
            }
        }

        auto dist_sq = [&](std::uint32_t a, std::uint32_t b) {
            const Vec3 d = mesh.positions[a] - mesh.positions[b];
            return dot(d, d);
        };

        for (int axis = 0; axis < 3; ++axis)
        {
            const int ni = axis == 0 ? n : n + 1;
            const int nj = axis == 1 ? n : n + 1;
            const int nk = axis == 2 ? n : n + 1;
            const int ax = axis == 0;
            const int ay = axis == 1;
            const int az = axis == 2;

            for (int k = 0; k < nk; ++k)
            {
                for (int j = 0; j < nj; ++j)
                {
                    for (int i = 0; i < ni; ++i)
                    {
                        const double s0 = detail::shifted(field, field.corner_index(i, j, k), iso);
                        const double s1 = detail::shifted(field, field.corner_index(i + ax, j + ay, k + az), iso);
                        if ((s0 < 0.0) == (s1 < 0.0))
                            continue;

                        // ring of incident cells; ccw about +axis yields +axis normals
                        std::array<std::uint32_t, 4> ring;
                        std::array<std::size_t, 4> ring_cell;
                        int present = 0;
                        for (int r = 0; r < 4; ++r)
                        {
                            const auto& off = detail::kEdgeRing[axis][r];
                            const int ci = i + off[0];
                            const int cj = j + off[1];
                            const int ck = k + off[2];
                            if (ci < 0 || cj < 0 || ck < 0 || ci >= n || cj >= n || ck >= n)
                            {
                                ring[r] = kNone;
                                continue;
                            }
                            ring_cell[r] = field.cell_index(ci, cj, ck);
                            ring[r] = cell_vertex[ring_cell[r]];
                            ++present;
                        }
                        const bool flip = s0 > 0.0; // negative side must be at the edge start

                        if (present == 4)
                        {
                            std::array<std::uint32_t, 4> q = ring;
                            std::array<std::size_t, 4> qc = ring_cell;
                            if (flip)
                            {
                                std::swap(q[1], q[3]);
                                std::swap(qc[1], qc[3]);
                            }
                            const double d02 = dist_sq(q[0], q[2]);
                            const double d13 = dist_sq(q[1], q[3]);
                            bool use02 = d02 < d13;
                            if (d02 == d13)
                            {
                                const auto smallest = std::min_element(qc.begin(), qc.end()) - qc.begin();
                                use02 = smallest % 2 == 0;
                            }
                            if (use02)
                            {
                                mesh.triangles.push_back({q[0], q[1], q[2]});
                                mesh.triangles.push_back({q[0], q[2], q[3]});
                            }
                            else
                            {
                                mesh.triangles.push_back({q[1], q[2], q[3]});
                                mesh.triangles.push_back({q[1], q[3], q[0]});
                            }
                        }
                        else if (present == 3)
                        {
                            // boundary edge: keep the surviving fan, preserving cyclic order
                            std::array<std::uint32_t, 3> tri;
                            int m = 0;
                            for (int r = 0; r < 4; ++r)
                            {
                                if (ring[r] != kNone)
                                    tri[m++] = ring[r];
                            }
                            if (flip)
                                std::swap(tri[1], tri[2]);
                            mesh.triangles.push_back({tri[0], tri[1], tri[2]});
                        }
                    }
                }
            }
        }
        return mesh;
    }

    /// Merges vertices within `eps` (max metric) of an earlier representative,
    /// found through a hash grid with cell size eps. eps = 0 merges exact
    /// duplicates only. Triangles that collapse are dropped.
    inline IndexedMesh weld_vertices(const IndexedMesh& mesh, double eps)
    {
        if (eps < 0.0)
            throw Error(ErrorCode::InvalidArgument, "eps must be non-negative");

        struct KeyHash
        {
            std::size_t operator()(const std::array<std::int64_t, 3>& k) const noexcept
            {
                std::size_t h = 1469598103934665603ULL;
                for (auto v : k)
                    h = (h ^ static_cast<std::size_t>(v)) * 1099511628211ULL;
                return h;
            }
        };

        IndexedMesh out;
        std::vector<std::uint32_t> remap(mesh.vertex_count());
        std::unordered_map<std::array<std::int64_t, 3>, std::vector<std::uint32_t>, KeyHash> grid;

        auto key_of = [&](const Vec3& p) -> std::array<std::int64_t, 3> {
            if (eps == 0.0)
            {
                std::array<std::int64_t, 3> k;
                for (int a = 0; a < 3; ++a)
                {
                    const double v = p[a] == 0.0 ? 0.0 : p[a]; // fold -0 into +0
                    std::memcpy(&k[a], &v, sizeof(double));
                }
                return k;
            }
            return {static_cast<std::int64_t>(std::floor(p.x / eps)),
                    static_cast<std::int64_t>(std::floor(p.y / eps)),
                    static_cast<std::int64_t>(std::floor(p.z / eps))};
        };

        for (std::uint32_t v = 0; v < mesh.vertex_count(); ++v)
        {
            const Vec3& p = mesh.positions[v];
            const auto key = key_of(p);
            std::uint32_t found = std::numeric_limits<std::uint32_t>::max();

            if (eps == 0.0)
            {
                auto it = grid.find(key);
                if (it != grid.end())
                    found = it->second.front();
            }
            else
            {
                // earliest representative within eps among the 27 neighbouring buckets
                for (int dz = -1; dz <= 1; ++dz)
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx)
                        {
                            auto it = grid.find({key[0] + dx, key[1] + dy, key[2] + dz});
                            if (it == grid.end())
                                continue;
                            for (std::uint32_t rep : it->second)
                            {
                                if (max_abs(out.positions[rep] - p) <= eps && rep < found)
                                    found = rep;
                            }
                        }
            }

            if (found == std::numeric_limits<std::uint32_t>::max())
            {
                found = static_cast<std::uint32_t>(out.positions.size());
                out.positions.push_back(p);
                if (mesh.has_normals())
                    out.normals.push_back(mesh.normals[v]);
                if (!mesh.colors.empty())
                    out.colors.push_back(mesh.colors[v]);
                grid[key].push_back(found);
            }
            remap[v] = found;
        }

        for (const auto& t : mesh.triangles)
        {
            const Triangle r{remap[t[0]], remap[t[1]], remap[t[2]]};
            if (r[0] == r[1] || r[1] == r[2] || r[0] == r[2])
                continue;
            out.triangles.push_back(r);
        }
        return out;
    }

    /// Area-weighted vertex normals. Vertices whose weighted sum vanishes get
    /// +z; their number is reported through `fallbacks` when given.
    inline IndexedMesh compute_vertex_normals(const IndexedMesh& mesh, std::size_t* fallbacks = nullptr)
    {
        IndexedMesh out = mesh;
        std::vector<Vec3> acc(mesh.vertex_count());
        for (const auto& t : mesh.triangles)
        {
            // |cross| is twice the area, so the raw cross product is area-weighted
            const Vec3 fn = cross(mesh.positions[t[1]] - mesh.positions[t[0]],
                                  mesh.positions[t[2]] - mesh.positions[t[0]]);
            for (auto v : t)
                acc[v] += fn;
        }

        std::size_t fallback_count = 0;
        out.normals.resize(mesh.vertex_count());
        for (std::size_t v = 0; v < acc.size(); ++v)
        {
            const double len = norm(acc[v]);
            if (len > 0.0 && std::isfinite(len))
            {
                out.normals[v] = acc[v] * (1.0 / len);
            }
            else
            {
                out.normals[v] = {0.0, 0.0, 1.0};
                ++fallback_count;
            }
        }
        if (fallbacks)
            *fallbacks = fallback_count;
        return out;
    }

    struct Bounds
    {
        Vec3 min;
        Vec3 max;

        Vec3 extent() const { return max - min; }
        Vec3 center() const { return (min + max) * 0.5; }
    };

    inline Bounds compute_bounds(const IndexedMesh& mesh)
    {
        Bounds b{{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                  std::numeric_limits<double>::infinity()},
                 {-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                  -std::numeric_limits<double>::infinity()}};
        for (const auto& p : mesh.positions)
        {
            for (int a = 0; a < 3; ++a)
            {
                b.min[a] = std::min(b.min[a], p[a]);
                b.max[a] = std::max(b.max[a], p[a]);
            }
        }
        return b;
    }

    /// Uniform scale and translation: bounding box centered at the origin,
    /// largest side equal to target_extent. A single-point mesh is only translated.
    inline IndexedMesh normalize_bounds(const IndexedMesh& mesh, double target_extent)
    {
        if (mesh.positions.empty())
            throw Error(ErrorCode::EmptyMesh, "cannot normalize an empty mesh");
        if (!(target_extent > 0.0))
            throw Error(ErrorCode::InvalidArgument, "target extent must be positive");

        const Bounds b = compute_bounds(mesh);
        const Vec3 e = b.extent();
        const double largest = std::max({e.x, e.y, e.z});
        const double scale = largest > 0.0 ? target_extent / largest : 1.0;
        const Vec3 c = b.center();

        IndexedMesh out = mesh;
        for (auto& p : out.positions)
            p = (p - c) * scale;
        return out;
    }

    namespace detail
    {
        class UnionFind
        {
        public:
            explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

            std::size_t find(std::size_t x)
            {
                while (parent_[x] != x)
                {
                    parent_[x] = parent_[parent_[x]];
                    x = parent_[x];
                }
                return x;
            }

            void unite(std::size_t a, std::size_t b) { parent_[find(a)] = find(b); }

        private:
            std::vector<std::size_t> parent_;
        };
    }

    inline TopologyReport analyze_topology(const IndexedMesh& mesh)
    {
        TopologyReport rep;
        rep.vertices = mesh.vertex_count();
        rep.faces = mesh.triangle_count();

        // undirected edge -> incident triangle list
        std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> edge_faces;
        edge_faces.reserve(3 * mesh.triangle_count());
        auto edge_key = [](std::uint32_t a, std::uint32_t b) {
            if (a > b)
                std::swap(a, b);
            return (static_cast<std::uint64_t>(a) << 32) | b;
        };
        for (std::uint32_t f = 0; f < mesh.triangle_count(); ++f)
        {
            const auto& t = mesh.triangles[f];
            for (int e = 0; e < 3; ++e)
                edge_faces[edge_key(t[e], t[(e + 1) % 3])].push_back(f);
        }
        rep.edges = edge_faces.size();
        rep.euler_characteristic = static_cast<long long>(rep.vertices) - static_cast<long long>(rep.edges)
                                 + static_cast<long long>(rep.faces);

        bool watertight = !mesh.triangles.empty();
        bool edge_ok = true;
        for (const auto& [key, faces] : edge_faces)
        {
            if (faces.size() != 2)
                watertight = false;
            if (faces.size() > 2)
                edge_ok = false;
        }

        detail::UnionFind components(mesh.vertex_count());
        std::vector<bool> referenced(mesh.vertex_count(), false);
        std::vector<std::vector<std::uint32_t>> vertex_faces(mesh.vertex_count());
        for (std::uint32_t f = 0; f < mesh.triangle_count(); ++f)
        {
            const auto& t = mesh.triangles[f];
            for (auto v : t)
            {
                referenced[v] = true;
                vertex_faces[v].push_back(f);
            }
            components.unite(t[0], t[1]);
            components.unite(t[1], t[2]);
        }
        std::size_t count = 0;
        for (std::size_t v = 0; v < mesh.vertex_count(); ++v)
        {
            if (referenced[v] && components.find(v) == v)
                ++count;
        }
        rep.connected_components = count;

        // vertex link: the faces around each vertex must form one edge-connected fan
        bool link_ok = edge_ok;
        for (std::size_t v = 0; v < mesh.vertex_count() && link_ok; ++v)
        {
            const auto& faces = vertex_faces[v];
            if (faces.size() <= 1)
                continue;
            detail::UnionFind fan(faces.size());
            for (std::size_t a = 0; a < faces.size(); ++a)
            {
                const auto& ta = mesh.triangles[faces[a]];
                for (int e = 0; e < 3; ++e)
                {
                    const auto u = ta[e];
                    const auto w = ta[(e + 1) % 3];
                    if (u != v && w != v)
                        continue;
                    const auto other = u == v ? w : u;
                    for (auto g : edge_faces[edge_key(static_cast<std::uint32_t>(v), other)])
                    {
                        const auto pos = std::find(faces.begin(), faces.end(), g) - faces.begin();
                        fan.unite(a, static_cast<std::size_t>(pos));
                    }
                }
            }
            for (std::size_t a = 1; a < faces.size(); ++a)
            {
                if (fan.find(a) != fan.find(0))
                {
                    link_ok = false;
                    break;
                }
            }
        }

        rep.watertight = watertight && edge_ok;
        rep.manifold = link_ok;
        return rep;
    }
}
