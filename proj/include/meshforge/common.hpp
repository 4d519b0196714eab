#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace meshforge
{
    enum class ErrorCode
    {
        MalformedDocument,
        InvalidStroke,
        UnsupportedVersion,
        InvalidDimensions,
        InvalidThresholds,
        InvalidSigma,
        InvalidWeight,
        NoForeground,
        MattingBackendUnavailable,
        BackendTimeout,
        BackendProtocolError,
        BackendRejected,
        BackendUnavailable,
        EmptyForeground,
        OutOfDomain,
        InvalidResolution,
        InvalidArgument,
        EmptyMesh,
        ParseError,
        IndexOutOfRange,
        IllegalTransition,
        NotFound,
        IoError,
    };

    constexpr std::string_view to_string(ErrorCode code)
    {
        switch (code)
        {
        case ErrorCode::MalformedDocument: return "MalformedDocument";
        case ErrorCode::InvalidStroke: return "InvalidStroke";
        case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
        case ErrorCode::InvalidDimensions: return "InvalidDimensions";
        case ErrorCode::InvalidThresholds: return "InvalidThresholds";
        case ErrorCode::InvalidSigma: return "InvalidSigma";
        case ErrorCode::InvalidWeight: return "InvalidWeight";
        case ErrorCode::NoForeground: return "NoForeground";
        case ErrorCode::MattingBackendUnavailable: return "MattingBackendUnavailable";
        case ErrorCode::BackendTimeout: return "BackendTimeout";
        case ErrorCode::BackendProtocolError: return "BackendProtocolError";
        case ErrorCode::BackendRejected: return "BackendRejected";
        case ErrorCode::BackendUnavailable: return "BackendUnavailable";
        case ErrorCode::EmptyForeground: return "EmptyForeground";
        case ErrorCode::OutOfDomain: return "OutOfDomain";
        case ErrorCode::InvalidResolution: return "InvalidResolution";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::EmptyMesh: return "EmptyMesh";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::IllegalTransition: return "IllegalTransition";
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::IoError: return "IoError";
        }
        return "Unknown";
    }

    /// Every failure raised by the library carries a machine-readable code.
    class Error : public std::runtime_error
    {
    public:
        Error(ErrorCode code, const std::string& message)
            : std::runtime_error(std::string(to_string(code)) + ": " + message)
            , code_(code)
        {
        }

        ErrorCode code() const noexcept { return code_; }

    private:
        ErrorCode code_;
    };

    struct Vec2
    {
        double x = 0.0;
        double y = 0.0;

        friend bool operator==(const Vec2&, const Vec2&) = default;
    };

    struct Vec3
    {
        double x = 0.0;
        double y = 0.0;
        double z = 0.0;

        double& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }
        double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }

        Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
        Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
        Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

        friend Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
        friend Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
        friend Vec3 operator*(Vec3 a, double s) { return a *= s; }
        friend Vec3 operator*(double s, Vec3 a) { return a *= s; }
        friend Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
        friend bool operator==(const Vec3&, const Vec3&) = default;
    };

    inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

    inline Vec3 cross(const Vec3& a, const Vec3& b)
    {
        return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
    }

    inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

    inline double max_abs(const Vec3& a)
    {
        return std::max({std::abs(a.x), std::abs(a.y), std::abs(a.z)});
    }

    using Rgb = std::array<double, 3>;
}
