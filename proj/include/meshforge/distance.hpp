#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "image.hpp"

namespace meshforge
{
    namespace detail
    {
        // Finite stand-in for "no site" so envelope intersections stay finite.
        constexpr double kEdtFar = 1e20;

        /// 1D squared distance transform of a sampled function (lower envelope of parabolas).
        inline void edt_1d(const std::vector<double>& f, std::vector<double>& d,
                           std::vector<int>& v, std::vector<double>& z)
        {
            const int n = static_cast<int>(f.size());
            d.resize(n);
            v.resize(n);
            z.resize(n + 1);

            int k = 0;
            v[0] = 0;
            z[0] = -std::numeric_limits<double>::infinity();
            z[1] = std::numeric_limits<double>::infinity();
            for (int q = 1; q < n; ++q)
            {
                double s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * q - 2.0 * v[k]);
                while (s <= z[k])
                {
                    --k;
                    s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * q - 2.0 * v[k]);
                }
                ++k;
                v[k] = q;
                z[k] = s;
                z[k + 1] = std::numeric_limits<double>::infinity();
            }

            k = 0;
            for (int q = 0; q < n; ++q)
            {
                while (z[k + 1] < q)
                    ++k;
                const double dq = q - v[k];
                d[q] = dq * dq + f[v[k]];
            }
        }
    }

    /// Exact squared Euclidean distance (pixel units) from every pixel to the
    /// nearest nonzero mask pixel. +infinity where the mask has no foreground.
    inline Raster<double> edt_2d_squared(const Mask& mask)
    {
        const int w = mask.width();
        const int h = mask.height();
        Raster<double> out(w, h);
        if (mask.empty())
            return out;

        std::vector<double> f;
        std::vector<double> d;
        std::vector<int> v;
        std::vector<double> z;

        // columns
        f.resize(h);
        for (int x = 0; x < w; ++x)
        {
            for (int y = 0; y < h; ++y)
                f[y] = mask(x, y) ? 0.0 : detail::kEdtFar;
            detail::edt_1d(f, d, v, z);
            for (int y = 0; y < h; ++y)
                out(x, y) = d[y];
        }
        // rows
        f.resize(w);
        for (int y = 0; y < h; ++y)
        {
            for (int x = 0; x < w; ++x)
                f[x] = out(x, y);
            detail::edt_1d(f, d, v, z);
            for (int x = 0; x < w; ++x)
                out(x, y) = d[x] >= detail::kEdtFar ? std::numeric_limits<double>::infinity() : d[x];
        }
        return out;
    }

    inline Raster<double> edt_2d(const Mask& mask)
    {
        auto out = edt_2d_squared(mask);
        for (double& v : out.pixels())
            v = std::sqrt(v);
        return out;
    }
}
