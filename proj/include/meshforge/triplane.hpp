#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "common.hpp"
#include "field.hpp"

namespace meshforge
{
    enum class Plane
    {
        XY = 0,
        XZ = 1,
        YZ = 2
    };

    /// Three axis-aligned R x R feature planes with C channels each. Node
    /// (u, v) of a plane sits at (-1 + 2u/(R-1), -1 + 2v/(R-1)).
    class Triplane
    {
    public:
        Triplane() = default;

        Triplane(int resolution, int channels)
            : resolution_(resolution), channels_(channels)
        {
            if (resolution < 2 || channels < 1)
                throw Error(ErrorCode::InvalidArgument, "triplane needs R >= 2 and C >= 1");
            for (auto& p : planes_)
                p.assign(static_cast<std::size_t>(resolution) * resolution * channels, 0.0);
        }

        int resolution() const noexcept { return resolution_; }
        int channels() const noexcept { return channels_; }

        double& at(Plane p, int u, int v, int c) { return planes_[static_cast<int>(p)][offset(u, v, c)]; }
        double at(Plane p, int u, int v, int c) const { return planes_[static_cast<int>(p)][offset(u, v, c)]; }

        std::vector<double>& data(Plane p) { return planes_[static_cast<int>(p)]; }
        const std::vector<double>& data(Plane p) const { return planes_[static_cast<int>(p)]; }

        double node_coord(int u) const noexcept { return -1.0 + 2.0 * u / (resolution_ - 1); }

        friend bool operator==(const Triplane&, const Triplane&) = default;

    private:
        std::size_t offset(int u, int v, int c) const noexcept
        {
            return (static_cast<std::size_t>(v) * resolution_ + u) * channels_ + c;
        }

        int resolution_ = 0;
        int channels_ = 0;
        std::array<std::vector<double>, 3> planes_;
    };

    namespace detail
    {
        inline void check_domain(const Vec3& p)
        {
            for (int a = 0; a < 3; ++a)
            {
                if (!(p[a] >= -1.0 && p[a] <= 1.0))
                    throw Error(ErrorCode::OutOfDomain, "point outside [-1,1]^3");
            }
        }

        struct BilinearCell
        {
            int u0, v0;
            double fu, fv;
            double scale; // d(grid)/d(world)
        };

        inline BilinearCell locate(int resolution, double a, double b)
        {
            const double scale = 0.5 * (resolution - 1);
            const double gu = (a + 1.0) * scale;
            const double gv = (b + 1.0) * scale;
            BilinearCell c;
            c.u0 = std::clamp(static_cast<int>(std::floor(gu)), 0, resolution - 2);
            c.v0 = std::clamp(static_cast<int>(std::floor(gv)), 0, resolution - 2);
            c.fu = gu - c.u0;
            c.fv = gv - c.v0;
            c.scale = scale;
            return c;
        }

        constexpr std::array<std::array<int, 2>, 3> kPlaneAxes = {{{0, 1}, {0, 2}, {1, 2}}};
    }

    /// Sum of the bilinear samples of the three planes at the projections of p.
    inline std::vector<double> sample_triplane(const Triplane& tp, const Vec3& p)
    {
        detail::check_domain(p);
        std::vector<double> out(tp.channels(), 0.0);
        for (int plane = 0; plane < 3; ++plane)
        {
            const auto [a, b] = detail::kPlaneAxes[plane];
            const auto cell = detail::locate(tp.resolution(), p[a], p[b]);
            const Plane pl = static_cast<Plane>(plane);
            const double w00 = (1 - cell.fu) * (1 - cell.fv);
            const double w10 = cell.fu * (1 - cell.fv);
            const double w01 = (1 - cell.fu) * cell.fv;
            const double w11 = cell.fu * cell.fv;
            for (int c = 0; c < tp.channels(); ++c)
            {
                out[c] += w00 * tp.at(pl, cell.u0, cell.v0, c) + w10 * tp.at(pl, cell.u0 + 1, cell.v0, c)
                        + w01 * tp.at(pl, cell.u0, cell.v0 + 1, c) + w11 * tp.at(pl, cell.u0 + 1, cell.v0 + 1, c);
            }
        }
        return out;
    }

    /// Analytic gradient of sample_triplane: result[c] = d feature_c / d(x, y, z),
    /// exact inside a bilinear cell.
    inline std::vector<Vec3> sample_triplane_gradient(const Triplane& tp, const Vec3& p)
    {
        detail::check_domain(p);
        std::vector<Vec3> out(tp.channels());
        for (int plane = 0; plane < 3; ++plane)
        {
            const auto [a, b] = detail::kPlaneAxes[plane];
            const auto cell = detail::locate(tp.resolution(), p[a], p[b]);
            const Plane pl = static_cast<Plane>(plane);
            for (int c = 0; c < tp.channels(); ++c)
            {
                const double f00 = tp.at(pl, cell.u0, cell.v0, c);
                const double f10 = tp.at(pl, cell.u0 + 1, cell.v0, c);
                const double f01 = tp.at(pl, cell.u0, cell.v0 + 1, c);
                const double f11 = tp.at(pl, cell.u0 + 1, cell.v0 + 1, c);
                out[c][a] += cell.scale * ((f10 - f00) * (1 - cell.fv) + (f11 - f01) * cell.fv);
                out[c][b] += cell.scale * ((f01 - f00) * (1 - cell.fu) + (f11 - f10) * cell.fu);
            }
        }
        return out;
    }

    /// Two affine layers with max(0, .) between them.
    struct Mlp
    {
        int in = 0;
        int hidden = 0;
        int out = 0;
        std::vector<double> w1; // hidden x in, row-major
        std::vector<double> b1;
        std::vector<double> w2; // out x hidden
        std::vector<double> b2;

        Mlp() = default;

        Mlp(int in_dim, int hidden_dim, int out_dim)
            : in(in_dim), hidden(hidden_dim), out(out_dim),
              w1(static_cast<std::size_t>(hidden_dim) * in_dim, 0.0), b1(hidden_dim, 0.0),
              w2(static_cast<std::size_t>(out_dim) * hidden_dim, 0.0), b2(out_dim, 0.0)
        {
        }

        std::vector<double> forward(const std::vector<double>& x) const
        {
            std::vector<double> h(hidden);
            for (int r = 0; r < hidden; ++r)
            {
                double acc = b1[r];
                for (int c = 0; c < in; ++c)
                    acc += w1[static_cast<std::size_t>(r) * in + c] * x[c];
                h[r] = std::max(0.0, acc);
            }
            std::vector<double> y(out);
            for (int r = 0; r < out; ++r)
            {
                double acc = b2[r];
                for (int c = 0; c < hidden; ++c)
                    acc += w2[static_cast<std::size_t>(r) * hidden + c] * h[c];
                y[r] = acc;
            }
            return y;
        }

        friend bool operator==(const Mlp&, const Mlp&) = default;
    };

    /// Softplus shifted by a small floor so it never underflows to zero.
    inline double positive_map(double x)
    {
        const double sp = x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
        return sp + 1e-6;
    }

    inline double unit_map(double x)
    {
        return 1.0 / (1.0 + std::exp(-x));
    }

    /// Flex head layout: [0..3] alpha, [4..6] beta for the x/y/z edge
    /// directions, [7] gamma.
    struct FlexParams
    {
        std::array<double, 4> alpha{};
        std::array<double, 3> beta{};
        double gamma = 0.5;

        double mean_alpha() const { return 0.25 * (alpha[0] + alpha[1] + alpha[2] + alpha[3]); }
    };

    struct DecodedPoint
    {
        double sdf = 0.0;
        Rgb rgb{};
        FlexParams flex;
    };

    struct DecoderHeads
    {
        Mlp sdf_head;   // C -> 1
        Mlp color_head; // C -> 3
        Mlp flex_head;  // C -> 8

        DecoderHeads() = default;

        DecoderHeads(int channels, int hidden)
            : sdf_head(channels, hidden, 1), color_head(channels, hidden, 3), flex_head(channels, hidden, 8)
        {
        }

        friend bool operator==(const DecoderHeads&, const DecoderHeads&) = default;
    };

    inline void validate(const Triplane& tp, const DecoderHeads& heads)
    {
        if (heads.sdf_head.out != 1 || heads.color_head.out != 3 || heads.flex_head.out != 8)
            throw Error(ErrorCode::InvalidArgument, "decoder heads must output 1 / 3 / 8 values");
        for (const Mlp* m : {&heads.sdf_head, &heads.color_head, &heads.flex_head})
        {
            if (m->in != tp.channels())
                throw Error(ErrorCode::InvalidArgument, "decoder input width must match triplane channels");
        }
    }

    inline DecodedPoint decode_features(const DecoderHeads& heads, const std::vector<double>& feature)
    {
        DecodedPoint d;
        d.sdf = heads.sdf_head.forward(feature)[0];
        const auto rgb = heads.color_head.forward(feature);
        for (int c = 0; c < 3; ++c)
            d.rgb[c] = unit_map(rgb[c]);
        const auto flex = heads.flex_head.forward(feature);
        for (int i = 0; i < 4; ++i)
            d.flex.alpha[i] = positive_map(flex[i]);
        for (int i = 0; i < 3; ++i)
            d.flex.beta[i] = positive_map(flex[4 + i]);
        d.flex.gamma = unit_map(flex[7]);
        return d;
    }

    inline DecodedPoint decode_point(const Triplane& tp, const DecoderHeads& heads, const Vec3& p)
    {
        validate(tp, heads);
        return decode_features(heads, sample_triplane(tp, p));
    }

    /// Evaluates the decoders on the (N+1)^3 lattice. Alpha per corner is the
    /// mean of the four alpha outputs; beta per edge averages the endpoints'
    /// output for that edge direction; gamma per cell averages its 8 corners.
    inline ReconstructionField bake_field(const Triplane& tp, const DecoderHeads& heads, int n = kDefaultResolution)
    {
        if (n < kMinResolution || n > kMaxResolution)
            throw Error(ErrorCode::InvalidResolution, "resolution must be in [2, 256]");
        validate(tp, heads);

        ReconstructionField f(n);
        std::vector<std::array<float, 3>> corner_beta(f.corner_count());
        std::vector<float> corner_gamma(f.corner_count());

        for (int k = 0; k <= n; ++k)
        {
            for (int j = 0; j <= n; ++j)
            {
                for (int i = 0; i <= n; ++i)
                {
                    const std::size_t idx = f.corner_index(i, j, k);
                    const auto d = decode_features(heads, sample_triplane(tp, f.corner_position(i, j, k)));
                    f.sdf[idx] = static_cast<float>(d.sdf);
                    for (int c = 0; c < 3; ++c)
                        f.color[3 * idx + c] = static_cast<float>(d.rgb[c]);
                    f.alpha[idx] = static_cast<float>(d.flex.mean_alpha());
                    for (int a = 0; a < 3; ++a)
                        corner_beta[idx][a] = static_cast<float>(d.flex.beta[a]);
                    corner_gamma[idx] = static_cast<float>(d.flex.gamma);
                }
            }
        }

        for (int axis = 0; axis < 3; ++axis)
        {
            auto& beta = f.beta(axis);
            const int ax = axis == 0, ay = axis == 1, az = axis == 2;
            for (int k = 0; k + az <= n; ++k)
                for (int j = 0; j + ay <= n; ++j)
                    for (int i = 0; i + ax <= n; ++i)
                    {
                        const float b0 = corner_beta[f.corner_index(i, j, k)][axis];
                        const float b1 = corner_beta[f.corner_index(i + ax, j + ay, k + az)][axis];
                        beta[f.edge_index(axis, i, j, k)] = 0.5f * (b0 + b1);
                    }
        }

        for (int k = 0; k < n; ++k)
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i)
                {
                    float acc = 0.0f;
                    for (int c = 0; c < 8; ++c)
                        acc += corner_gamma[f.corner_index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1))];
                    f.gamma[f.cell_index(i, j, k)] = acc / 8.0f;
                }
        return f;
    }

    struct ReconModel
    {
        Triplane triplane;
        DecoderHeads heads;

        friend bool operator==(const ReconModel&, const ReconModel&) = default;
    };

    /// Gaussian-initialized model for demos and tests; deterministic in seed.
    inline ReconModel random_model(int resolution, int channels, int hidden, std::uint64_t seed)
    {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> feature(0.0, 0.5);
        ReconModel m{Triplane(resolution, channels), DecoderHeads(channels, hidden)};
        for (int p = 0; p < 3; ++p)
            for (double& v : m.triplane.data(static_cast<Plane>(p)))
                v = feature(rng);
        for (Mlp* mlp : {&m.heads.sdf_head, &m.heads.color_head, &m.heads.flex_head})
        {
            std::normal_distribution<double> w1(0.0, 1.0 / std::sqrt(mlp->in));
            std::normal_distribution<double> w2(0.0, 1.0 / std::sqrt(mlp->hidden));
            for (double& v : mlp->w1)
                v = w1(rng);
            for (double& v : mlp->w2)
                v = w2(rng);
        }
        return m;
    }

    // Weights file: "MFRC" magic, u32 version, u32 R, u32 C, three planes of
    // R*R*C f32, then per head (sdf, color, flex): u32 in, hidden, out and
    // f32 w1, b1, w2, b2. All integers and floats little-endian.
    constexpr std::string_view kWeightsMagic = "MFRC";
    constexpr std::uint32_t kWeightsVersion = 1;

    namespace detail
    {
        inline void put_u32(std::string& out, std::uint32_t v)
        {
            for (int b = 0; b < 4; ++b)
                out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
        }

        inline void put_f32(std::string& out, double v)
        {
            const float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32(out, bits);
        }

        class Reader
        {
        public:
            explicit Reader(std::string_view bytes) : bytes_(bytes) {}

            std::uint32_t u32()
            {
                if (pos_ + 4 > bytes_.size())
                    throw Error(ErrorCode::MalformedDocument, "weights file truncated");
                std::uint32_t v = 0;
                for (int b = 0; b < 4; ++b)
                    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
                pos_ += 4;
                return v;
            }

            double f32()
            {
                const std::uint32_t bits = u32();
                float f;
                std::memcpy(&f, &bits, 4);
                if (!std::isfinite(f))
                    throw Error(ErrorCode::MalformedDocument, "non-finite weight");
                return f;
            }

            std::string_view take(std::size_t n)
            {
                if (pos_ + n > bytes_.size())
                    throw Error(ErrorCode::MalformedDocument, "weights file truncated");
                auto s = bytes_.substr(pos_, n);
                pos_ += n;
                return s;
            }

            bool done() const { return pos_ == bytes_.size(); }

        private:
            std::string_view bytes_;
            std::size_t pos_ = 0;
        };
    }

    inline std::string serialize_weights(const ReconModel& m)
    {
        std::string out(kWeightsMagic);
        detail::put_u32(out, kWeightsVersion);
        detail::put_u32(out, static_cast<std::uint32_t>(m.triplane.resolution()));
        detail::put_u32(out, static_cast<std::uint32_t>(m.triplane.channels()));
        for (int p = 0; p < 3; ++p)
            for (double v : m.triplane.data(static_cast<Plane>(p)))
                detail::put_f32(out, v);
        for (const Mlp* mlp : {&m.heads.sdf_head, &m.heads.color_head, &m.heads.flex_head})
        {
            detail::put_u32(out, static_cast<std::uint32_t>(mlp->in));
            detail::put_u32(out, static_cast<std::uint32_t>(mlp->hidden));
            detail::put_u32(out, static_cast<std::uint32_t>(mlp->out));
            for (const auto* v : {&mlp->w1, &mlp->b1, &mlp->w2, &mlp->b2})
                for (double x : *v)
                    detail::put_f32(out, x);
        }
        return out;
    }

    inline ReconModel parse_weights(std::string_view bytes)
    {
        detail::Reader r(bytes);
        if (r.take(4) != kWeightsMagic)
            throw Error(ErrorCode::MalformedDocument, "bad weights magic");
        if (const auto v = r.u32(); v != kWeightsVersion)
            throw Error(ErrorCode::UnsupportedVersion, "weights version " + std::to_string(v));
        const auto res = r.u32();
        const auto ch = r.u32();
        if (res < 2 || res > 4096 || ch < 1 || ch > 4096)
            throw Error(ErrorCode::MalformedDocument, "implausible triplane shape");

        ReconModel m;
        m.triplane = Triplane(static_cast<int>(res), static_cast<int>(ch));
        for (int p = 0; p < 3; ++p)
            for (double& v : m.triplane.data(static_cast<Plane>(p)))
                v = r.f32();
        for (Mlp* mlp : {&m.heads.sdf_head, &m.heads.color_head, &m.heads.flex_head})
        {
            const auto in = r.u32();
            const auto hidden = r.u32();
            const auto out = r.u32();
            if (in != ch || hidden < 1 || hidden > 4096 || out > 8)
                throw Error(ErrorCode::MalformedDocument, "implausible head shape");
            *mlp = Mlp(static_cast<int>(in), static_cast<int>(hidden), static_cast<int>(out));
            for (auto* v : {&mlp->w1, &mlp->b1, &mlp->w2, &mlp->b2})
                for (double& x : *v)
                    x = r.f32();
        }
        if (!r.done())
            throw Error(ErrorCode::MalformedDocument, "trailing bytes in weights file");
        validate(m.triplane, m.heads);
        return m;
    }
}
