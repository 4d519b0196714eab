#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include <meshforge/mesh.hpp>

#include "oracles.hpp"

using namespace meshforge;

namespace
{
    IndexedMesh sphere_mesh(int n = 48, double r = 0.35)
    {
        return extract_mesh(oracle::sphere_field(n, r));
    }

    Vec3 face_normal(const IndexedMesh& m, const Triangle& t)
    {
        return cross(m.positions[t[1]] - m.positions[t[0]], m.positions[t[2]] - m.positions[t[0]]);
    }
}

TEST(ExtractMesh, AllPositiveIsEmpty)
{
    ReconstructionField f(8);
    sample_sdf(f, [](const Vec3&) { return 1.0; });
    const auto m = extract_mesh(f);
    EXPECT_EQ(m.vertex_count(), 0u);
    EXPECT_EQ(m.triangle_count(), 0u);
}

TEST(ExtractMesh, SphereIsClosedManifold)
{
    const auto m = sphere_mesh();
    const auto topo = analyze_topology(m);
    EXPECT_TRUE(topo.watertight);
    EXPECT_TRUE(topo.manifold);
    EXPECT_EQ(topo.euler_characteristic, 2);
    EXPECT_EQ(topo.connected_components, 1u);
    EXPECT_LE(oracle::radial_error(m, 0.35).max, 2.0 * std::sqrt(3.0) / 48.0);
}

TEST(ExtractMesh, TwoDisjointSpheres)
{
    ReconstructionField f(64);
    sample_sdf(f, [](const Vec3& p) {
        return std::min(norm(p - Vec3{0.5, 0, 0}), norm(p - Vec3{-0.5, 0, 0})) - 0.2;
    });
    const auto topo = analyze_topology(extract_mesh(f));
    EXPECT_EQ(topo.connected_components, 2u);
    EXPECT_EQ(topo.euler_characteristic, 4);
    EXPECT_TRUE(topo.watertight);
}

TEST(ExtractMesh, TorusHasGenusOne)
{
    ReconstructionField f(56);
    sample_sdf(f, [](const Vec3& p) { return std::hypot(std::hypot(p.x, p.y) - 0.5, p.z) - 0.2; });
    const auto topo = analyze_topology(extract_mesh(f));
    EXPECT_TRUE(topo.watertight);
    EXPECT_TRUE(topo.manifold);
    EXPECT_EQ(topo.euler_characteristic, 0);
}

TEST(ExtractMesh, WindingPointsOutward)
{
    const auto m = sphere_mesh();
    std::size_t outward = 0;
    for (const auto& t : m.triangles)
    {
        const Vec3 c = (m.positions[t[0]] + m.positions[t[1]] + m.positions[t[2]]) * (1.0 / 3.0);
        outward += dot(face_normal(m, t), c) > 0.0;
    }
    EXPECT_GE(static_cast<double>(outward) / m.triangle_count(), 0.999);
}

TEST(ExtractMesh, AffineCrossingsAreExactRoots)
{
    // field varies along x only, so every vertex sits on the root of the
    // linear interpolant between the stored corner values
    ReconstructionField f(10);
    sample_sdf(f, [](const Vec3& p) { return p.x - 0.3; });
    const auto m = extract_mesh(f);
    ASSERT_FALSE(m.empty());
    int i0 = 0;
    while (f.sdf[f.corner_index(i0 + 1, 0, 0)] < 0.0f)
        ++i0;
    const double s0 = f.sdf[f.corner_index(i0, 0, 0)];
    const double s1 = f.sdf[f.corner_index(i0 + 1, 0, 0)];
    const double root = f.coord(i0) + s0 / (s0 - s1) * f.spacing();
    EXPECT_NEAR(root, 0.3, 1e-6);
    for (const auto& p : m.positions)
        EXPECT_NEAR(p.x, root, 1e-12);

    for (double a : {-0.7, -1e-3, -5.0})
        for (double b : {0.2, 3.0, 1e-4})
            EXPECT_NEAR(weighted_crossing(a, b, 1.0, 1.0), a / (a - b), 1e-15);
}

TEST(ExtractMesh, DualVerticesInsideTheirCells)
{
    ReconstructionField f(20);
    sample_sdf(f, [](const Vec3& p) { return std::sin(3 * p.x) + std::cos(2 * p.y) * p.z - 0.1; });
    const auto m = extract_mesh(f);
    ASSERT_FALSE(m.empty());
    const double h = f.spacing();
    for (const auto& p : m.positions)
    {
        // some cell [c, c+h]^3 on the lattice contains p
        for (int a = 0; a < 3; ++a)
        {
            const double g = (p[a] + 1.0) / h;
            EXPECT_GE(g, -1e-9);
            EXPECT_LE(g, f.n + 1e-9);
        }
    }
    // tighter: reconstruct each vertex's cell from x-fastest numbering
    std::size_t v = 0;
    for (int k = 0; k < f.n; ++k)
        for (int j = 0; j < f.n; ++j)
            for (int i = 0; i < f.n; ++i)
            {
                bool crossed = false;
                float lo = 1e30f, hi = -1e30f;
                for (int c = 0; c < 8; ++c)
                {
                    const float s = f.sdf[f.corner_index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1))];
                    lo = std::min(lo, s);
                    hi = std::max(hi, s);
                }
                crossed = lo < 0 && hi >= 0;
                if (!crossed)
                    continue;
                ASSERT_LT(v, m.vertex_count());
                const auto& p = m.positions[v++];
                EXPECT_GE(p.x, f.coord(i) - 1e-12);
                EXPECT_LE(p.x, f.coord(i + 1) + 1e-12);
                EXPECT_GE(p.y, f.coord(j) - 1e-12);
                EXPECT_LE(p.y, f.coord(j + 1) + 1e-12);
                EXPECT_GE(p.z, f.coord(k) - 1e-12);
                EXPECT_LE(p.z, f.coord(k + 1) + 1e-12);
            }
    EXPECT_EQ(v, m.vertex_count());
}

TEST(ExtractMesh, RefinementReducesError)
{
    const double e32 = oracle::radial_error(sphere_mesh(32), 0.35).max;
    const double e64 = oracle::radial_error(sphere_mesh(64), 0.35).max;
    EXPECT_LT(e64, e32);
}

TEST(ExtractMesh, AlphaScaleInvariance)
{
    auto f = oracle::sphere_field(32, 0.35);
    const auto base = extract_mesh(f);
    for (float& a : f.alpha)
        a *= 7.3f;
    EXPECT_TRUE(extract_mesh(f) == base);
}

TEST(ExtractMesh, AlphaWeightsMoveCrossings)
{
    ReconstructionField f(4);
    sample_sdf(f, [](const Vec3& p) { return p.x - 0.1; });
    const auto plain = extract_mesh(f);
    for (std::size_t i = 0; i < f.alpha.size(); ++i)
        f.alpha[i] = 1.0f + 0.5f * static_cast<float>(i % 3);
    const auto weighted = extract_mesh(f);
    ASSERT_EQ(plain.vertex_count(), weighted.vertex_count());
    EXPECT_FALSE(plain.positions == weighted.positions);
}

TEST(ExtractMesh, VertexColorsAreTrilinear)
{
    auto f = oracle::sphere_field(16, 0.5);
    for (int k = 0; k <= f.n; ++k)
        for (int j = 0; j <= f.n; ++j)
            for (int i = 0; i <= f.n; ++i)
            {
                const auto idx = f.corner_index(i, j, k);
                const auto p = f.corner_position(i, j, k);
                f.color[3 * idx] = static_cast<float>(0.5 + 0.25 * p.x);
                f.color[3 * idx + 1] = static_cast<float>(0.5 + 0.25 * p.y);
                f.color[3 * idx + 2] = static_cast<float>(0.5 + 0.25 * p.z);
            }
    const auto m = extract_mesh(f);
    for (std::size_t v = 0; v < m.vertex_count(); ++v)
        for (int a = 0; a < 3; ++a)
            EXPECT_NEAR(m.colors[v][a], 0.5 + 0.25 * m.positions[v][a], 1e-6);
}

TEST(ExtractMesh, BoundaryCrossingsLeaveOpenSurface)
{
    ReconstructionField f(8);
    sample_sdf(f, [](const Vec3& p) { return p.z - 0.05; });
    const auto m = extract_mesh(f);
    const auto topo = analyze_topology(m);
    EXPECT_FALSE(topo.watertight);
    EXPECT_EQ(topo.connected_components, 1u);
    EXPECT_EQ(m.vertex_count(), 64u);
}

TEST(ExtractMesh, ExactIsoValuesArePerturbed)
{
    ReconstructionField f(6);
    sample_sdf(f, [](const Vec3& p) { return std::abs(p.y) < 1e-12 ? 0.0 : p.y; });
    const auto m = extract_mesh(f);
    EXPECT_FALSE(m.empty());
    for (const auto& p : m.positions)
        EXPECT_TRUE(std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z));
}

TEST(WeldVertices, ZeroEpsRemovesOnlyExactDuplicates)
{
    const auto m = sphere_mesh(16);
    EXPECT_TRUE(weld_vertices(m, 0.0) == m);

    IndexedMesh d;
    d.positions = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
    d.colors.assign(6, {1, 1, 1});
    d.triangles = {{0, 1, 2}, {3, 5, 4}};
    const auto w = weld_vertices(d, 0.0);
    EXPECT_EQ(w.vertex_count(), 4u);
    EXPECT_EQ(w.triangle_count(), 2u);
}

TEST(WeldVertices, NearDuplicatesMerged)
{
    IndexedMesh d;
    d.positions = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1 + 1e-9, 0, 0}, {0, 1 - 1e-9, 0}, {1, 1, 0}};
    d.colors.assign(6, {1, 1, 1});
    d.triangles = {{0, 1, 2}, {3, 5, 4}};
    const auto w = weld_vertices(d, 1e-6);
    EXPECT_EQ(w.vertex_count(), d.vertex_count() - 2);
    EXPECT_EQ(w.triangle_count(), 2u);
    EXPECT_EQ(analyze_topology(w).edges, 5u);
}

TEST(WeldVertices, DropsCollapsedTriangles)
{
    IndexedMesh d;
    d.positions = {{0, 0, 0}, {1e-8, 0, 0}, {0, 1, 0}};
    d.colors.assign(3, {1, 1, 1});
    d.triangles = {{0, 1, 2}};
    const auto w = weld_vertices(d, 1e-6);
    EXPECT_EQ(w.triangle_count(), 0u);
}

TEST(WeldVertices, Idempotent)
{
    std::mt19937_64 rng(3);
    for (double eps : {1e-3, 0.05, 0.2})
    {
        const auto soup = oracle::random_soup(300, 200, rng());
        const auto once = weld_vertices(soup, eps);
        EXPECT_TRUE(weld_vertices(once, eps) == once) << eps;
    }
}

TEST(VertexNormals, SingleTriangle)
{
    IndexedMesh m;
    m.positions = {{0, 0, 0}, {2, 0, 0}, {0, 0, -3}};
    m.colors.assign(3, {1, 1, 1});
    m.triangles = {{0, 1, 2}};
    const auto out = compute_vertex_normals(m);
    for (const auto& n : out.normals)
    {
        EXPECT_NEAR(n.x, 0.0, 1e-12);
        EXPECT_NEAR(n.y, 1.0, 1e-12);
        EXPECT_NEAR(n.z, 0.0, 1e-12);
    }
}

TEST(VertexNormals, SphereNormalsAreRadial)
{
    const auto m = compute_vertex_normals(weld_vertices(sphere_mesh(), 1e-7));
    std::size_t good = 0;
    const double limit = std::cos(5.0 * std::numbers::pi / 180.0);
    for (std::size_t v = 0; v < m.vertex_count(); ++v)
    {
        EXPECT_NEAR(norm(m.normals[v]), 1.0, 1e-6);
        const Vec3 radial = m.positions[v] * (1.0 / norm(m.positions[v]));
        good += dot(radial, m.normals[v]) >= limit;
    }
    EXPECT_GE(static_cast<double>(good) / m.vertex_count(), 0.99);
}

TEST(VertexNormals, FlippingWindingNegates)
{
    auto m = sphere_mesh(20);
    const auto a = compute_vertex_normals(m);
    for (auto& t : m.triangles)
        std::swap(t[1], t[2]);
    const auto b = compute_vertex_normals(m);
    for (std::size_t v = 0; v < a.vertex_count(); ++v)
    {
        EXPECT_NEAR(a.normals[v].x, -b.normals[v].x, 1e-12);
        EXPECT_NEAR(a.normals[v].y, -b.normals[v].y, 1e-12);
        EXPECT_NEAR(a.normals[v].z, -b.normals[v].z, 1e-12);
    }
}

TEST(VertexNormals, IsolatedVertexFallsBack)
{
    IndexedMesh m;
    m.positions = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 5, 5}};
    m.colors.assign(4, {1, 1, 1});
    m.triangles = {{0, 1, 2}};
    std::size_t fallbacks = 0;
    const auto out = compute_vertex_normals(m, &fallbacks);
    EXPECT_EQ(fallbacks, 1u);
    EXPECT_NEAR(norm(out.normals[3]), 1.0, 1e-12);
}

TEST(NormalizeBounds, FixedPoint)
{
    IndexedMesh m;
    m.positions = {{-0.5, -0.25, 0}, {0.5, 0.25, 0.1}, {0, 0, -0.1}};
    m.colors.assign(3, {1, 1, 1});
    m.triangles = {{0, 1, 2}};
    const auto out = normalize_bounds(m, 1.0);
    for (std::size_t v = 0; v < 3; ++v)
        for (int a = 0; a < 3; ++a)
            EXPECT_NEAR(out.positions[v][a], m.positions[v][a], 1e-9);
}

TEST(NormalizeBounds, UnitCubeToTwo)
{
    IndexedMesh m;
    for (int c = 0; c < 8; ++c)
        m.positions.push_back({double(c & 1), double((c >> 1) & 1), double((c >> 2) & 1)});
    m.colors.assign(8, {1, 1, 1});
    m.triangles = {{0, 1, 2}, {5, 6, 7}};
    const auto b = compute_bounds(normalize_bounds(m, 2.0));
    for (int a = 0; a < 3; ++a)
    {
        EXPECT_NEAR(b.min[a], -1.0, 1e-12);
        EXPECT_NEAR(b.max[a], 1.0, 1e-12);
    }
}

TEST(NormalizeBounds, PlanarScalesByLargestAxis)
{
    IndexedMesh m;
    m.positions = {{0, 0, 2}, {4, 0, 2}, {0, 1, 2}, {4, 1, 2}};
    m.colors.assign(4, {1, 1, 1});
    m.triangles = {{0, 1, 2}, {1, 3, 2}};
    const auto b = compute_bounds(normalize_bounds(m, 1.0));
    EXPECT_NEAR(b.min.x, -0.5, 1e-12);
    EXPECT_NEAR(b.max.x, 0.5, 1e-12);
    EXPECT_NEAR(b.min.y, -0.125, 1e-12);
    EXPECT_NEAR(b.max.y, 0.125, 1e-12);
    EXPECT_NEAR(b.min.z, 0.0, 1e-12);
    EXPECT_NEAR(b.max.z, 0.0, 1e-12);
}

TEST(NormalizeBounds, EmptyMesh)
{
    try
    {
        normalize_bounds(IndexedMesh{}, 1.0);
        FAIL();
    }
    catch (const Error& e)
    {
        EXPECT_EQ(e.code(), ErrorCode::EmptyMesh);
    }
}

TEST(Topology, SingleTriangle)
{
    const auto t = analyze_topology(oracle::right_triangle());
    EXPECT_EQ(t.vertices, 3u);
    EXPECT_EQ(t.edges, 3u);
    EXPECT_EQ(t.faces, 1u);
    EXPECT_EQ(t.euler_characteristic, 1);
    EXPECT_FALSE(t.watertight);
    EXPECT_EQ(t.connected_components, 1u);
}

TEST(Topology, TwoDisjointTriangles)
{
    IndexedMesh m;
    m.positions = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 0, 0}, {6, 0, 0}, {5, 1, 0}};
    m.colors.assign(6, {1, 1, 1});
    m.triangles = {{0, 1, 2}, {3, 4, 5}};
    EXPECT_EQ(analyze_topology(m).connected_components, 2u);
}

TEST(Topology, Tetrahedron)
{
    IndexedMesh m;
    m.positions = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    m.colors.assign(4, {1, 1, 1});
    m.triangles = {{0, 2, 1}, {0, 1, 3}, {1, 2, 3}, {0, 3, 2}};
    const auto t = analyze_topology(m);
    EXPECT_TRUE(t.watertight);
    EXPECT_TRUE(t.manifold);
    EXPECT_EQ(t.euler_characteristic, 2);
}

TEST(Topology, BowtieVertexIsNotManifold)
{
    // two triangles touching at a single vertex
    IndexedMesh m;
    m.positions = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {-1, 0, 0}, {0, -1, 0}};
    m.colors.assign(5, {1, 1, 1});
    m.triangles = {{0, 1, 2}, {0, 3, 4}};
    EXPECT_FALSE(analyze_topology(m).manifold);
}

TEST(Topology, ThreeFacesOnOneEdge)
{
    IndexedMesh m;
    m.positions = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}};
    m.colors.assign(5, {1, 1, 1});
    m.triangles = {{0, 1, 2}, {1, 0, 3}, {0, 1, 4}};
    const auto t = analyze_topology(m);
    EXPECT_FALSE(t.manifold);
    EXPECT_FALSE(t.watertight);
}
