#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "common.hpp"

namespace meshforge
{
    constexpr int kDefaultResolution = 80;
    constexpr int kMinResolution = 2;
    constexpr int kMaxResolution = 256;

    /// Cubical grids over [-1,1]^3 with N cells per axis. Corner grids hold
    /// (N+1)^3 values, x-fastest. Edge weights beta are stored per axis:
    /// beta_x has N*(N+1)*(N+1) entries indexed with the x coordinate running
    /// over cells, and likewise for y and z.
    struct ReconstructionField
    {
        int n = 0;
        std::vector<float> sdf;
        std::vector<float> color; // 3 floats per corner
        std::vector<float> alpha;
        std::vector<float> beta_x;
        std::vector<float> beta_y;
        std::vector<float> beta_z;
        std::vector<float> gamma; // N^3

        ReconstructionField() = default;

        explicit ReconstructionField(int resolution)
            : n(resolution)
        {
            if (resolution < kMinResolution || resolution > kMaxResolution)
                throw Error(ErrorCode::InvalidResolution, "resolution must be in [2, 256]");
            const std::size_t corners = corner_count();
            const std::size_t edges = edge_count_per_axis();
            sdf.assign(corners, 0.0f);
            color.assign(3 * corners, 0.5f);
            alpha.assign(corners, 1.0f);
            beta_x.assign(edges, 1.0f);
            beta_y.assign(edges, 1.0f);
            beta_z.assign(edges, 1.0f);
            gamma.assign(static_cast<std::size_t>(n) * n * n, 0.5f);
        }

        std::size_t corner_count() const noexcept
        {
            const std::size_t m = static_cast<std::size_t>(n) + 1;
            return m * m * m;
        }

        std::size_t edge_count_per_axis() const noexcept
        {
            const std::size_t m = static_cast<std::size_t>(n) + 1;
            return static_cast<std::size_t>(n) * m * m;
        }

        std::size_t cell_count() const noexcept
        {
            return static_cast<std::size_t>(n) * n * n;
        }

        double spacing() const noexcept { return 2.0 / n; }

        double coord(int i) const noexcept { return -1.0 + 2.0 * i / n; }

        Vec3 corner_position(int i, int j, int k) const noexcept
        {
            return {coord(i), coord(j), coord(k)};
        }

        std::size_t corner_index(int i, int j, int k) const noexcept
        {
            const std::size_t m = static_cast<std::size_t>(n) + 1;
            return (static_cast<std::size_t>(k) * m + j) * m + i;
        }

        std::size_t cell_index(int i, int j, int k) const noexcept
        {
            const std::size_t m = static_cast<std::size_t>(n);
            return (static_cast<std::size_t>(k) * m + j) * m + i;
        }

        /// Index of the edge starting at corner (i,j,k) along `axis`.
        std::size_t edge_index(int axis, int i, int j, int k) const noexcept
        {
            const std::size_t m = static_cast<std::size_t>(n) + 1;
            const std::size_t c = static_cast<std::size_t>(n);
            switch (axis)
            {
            case 0: return (static_cast<std::size_t>(k) * m + j) * c + i;
            case 1: return (static_cast<std::size_t>(k) * c + j) * m + i;
            default: return (static_cast<std::size_t>(k) * m + j) * m + i;
            }
        }

        const std::vector<float>& beta(int axis) const noexcept
        {
            return axis == 0 ? beta_x : (axis == 1 ? beta_y : beta_z);
        }

        std::vector<float>& beta(int axis) noexcept
        {
            return axis == 0 ? beta_x : (axis == 1 ? beta_y : beta_z);
        }

        friend bool operator==(const ReconstructionField&, const ReconstructionField&) = default;
    };

    /// Throws InvalidArgument if sizes, finiteness or positivity constraints fail.
    inline void validate(const ReconstructionField& f)
    {
        if (f.n < kMinResolution || f.n > kMaxResolution)
            throw Error(ErrorCode::InvalidResolution, "resolution must be in [2, 256]");

        auto check = [](const std::vector<float>& v, std::size_t expected, const char* name, bool positive) {
            if (v.size() != expected)
                throw Error(ErrorCode::InvalidArgument, std::string(name) + " has wrong size");
            for (float x : v)
            {
                if (!std::isfinite(x) || (positive && !(x > 0.0f)))
                    throw Error(ErrorCode::InvalidArgument, std::string(name) + " has an invalid value");
            }
        };
        check(f.sdf, f.corner_count(), "sdf", false);
        check(f.color, 3 * f.corner_count(), "color", false);
        check(f.alpha, f.corner_count(), "alpha", true);
        check(f.beta_x, f.edge_count_per_axis(), "beta_x", true);
        check(f.beta_y, f.edge_count_per_axis(), "beta_y", true);
        check(f.beta_z, f.edge_count_per_axis(), "beta_z", true);
        check(f.gamma, f.cell_count(), "gamma", false);
        for (float c : f.color)
        {
            if (c < 0.0f || c > 1.0f)
                throw Error(ErrorCode::InvalidArgument, "color outside [0,1]");
        }
        for (float g : f.gamma)
        {
            if (g < 0.0f || g > 1.0f)
                throw Error(ErrorCode::InvalidArgument, "gamma outside [0,1]");
        }
    }

    /// Fills the sdf grid from a callable evaluated at every lattice corner.
    template <class SdfFn>
    void sample_sdf(ReconstructionField& f, SdfFn&& fn)
    {
        for (int k = 0; k <= f.n; ++k)
            for (int j = 0; j <= f.n; ++j)
                for (int i = 0; i <= f.n; ++i)
                    f.sdf[f.corner_index(i, j, k)] = static_cast<float>(fn(f.corner_position(i, j, k)));
    }

    /// Trilinear interpolation of the corner color grid; p is clamped to the domain.
    inline Rgb sample_color(const ReconstructionField& f, const Vec3& p)
    {
        double u[3];
        int base[3];
        for (int a = 0; a < 3; ++a)
        {
            const double g = std::clamp((p[a] + 1.0) * 0.5 * f.n, 0.0, static_cast<double>(f.n));
            base[a] = std::min(static_cast<int>(std::floor(g)), f.n - 1);
            u[a] = g - base[a];
        }
        Rgb out{0.0, 0.0, 0.0};
        for (int corner = 0; corner < 8; ++corner)
        {
            const int dx = corner & 1;
            const int dy = (corner >> 1) & 1;
            const int dz = (corner >> 2) & 1;
            const double w = (dx ? u[0] : 1.0 - u[0]) * (dy ? u[1] : 1.0 - u[1]) * (dz ? u[2] : 1.0 - u[2]);
            const std::size_t idx = f.corner_index(base[0] + dx, base[1] + dy, base[2] + dz);
            for (int c = 0; c < 3; ++c)
                out[c] += w * f.color[3 * idx + c];
        }
        return out;
    }
}
