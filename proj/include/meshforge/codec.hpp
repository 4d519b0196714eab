#pragma once

// Byte-level encodings shared by the wire contract and the asset manifest:
// PNG (libpng simplified API), base64 and SHA-256 (OpenSSL), FNV-1a.

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>
#include <openssl/sha.h>
#include <png.h>

#include "image.hpp"

namespace meshforge
{
    namespace detail
    {
        template <class Pixel>
        constexpr png_uint_32 png_format_of()
        {
            if constexpr (sizeof(Pixel) == 1)
                return PNG_FORMAT_GRAY;
            else if constexpr (sizeof(Pixel) == 3)
                return PNG_FORMAT_RGB;
            else
                return PNG_FORMAT_RGBA;
        }
    }

    template <class Pixel>
    std::string encode_png(const Raster<Pixel>& img)
    {
        if (img.empty())
            throw Error(ErrorCode::InvalidDimensions, "cannot encode an empty image");

        png_image image;
        std::memset(&image, 0, sizeof(image));
        image.version = PNG_IMAGE_VERSION;
        image.width = static_cast<png_uint_32>(img.width());
        image.height = static_cast<png_uint_32>(img.height());
        image.format = detail::png_format_of<Pixel>();

        png_alloc_size_t size = 0;
        if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels().data(), 0, nullptr))
            throw Error(ErrorCode::IoError, std::string("png sizing failed: ") + image.message);

        std::string out(size, '\0');
        if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels().data(), 0, nullptr))
            throw Error(ErrorCode::IoError, std::string("png write failed: ") + image.message);
        out.resize(size);
        return out;
    }

    /// Decodes any PNG into the requested pixel layout (libpng converts).
    template <class Pixel>
    Raster<Pixel> decode_png(std::string_view bytes)
    {
        png_image image;
        std::memset(&image, 0, sizeof(image));
        image.version = PNG_IMAGE_VERSION;
        if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
            throw Error(ErrorCode::BackendProtocolError, std::string("invalid png: ") + image.message);

        image.format = detail::png_format_of<Pixel>();
        Raster<Pixel> out(static_cast<int>(image.width), static_cast<int>(image.height));
        if (!png_image_finish_read(&image, nullptr, out.pixels().data(), 0, nullptr))
        {
            png_image_free(&image);
            throw Error(ErrorCode::BackendProtocolError, std::string("png decode failed: ") + image.message);
        }
        return out;
    }

    inline std::string base64_encode(std::string_view bytes)
    {
        std::string out(4 * ((bytes.size() + 2) / 3), '\0');
        const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                      reinterpret_cast<const unsigned char*>(bytes.data()),
                                      static_cast<int>(bytes.size()));
        out.resize(static_cast<std::size_t>(n));
        return out;
    }

    inline std::string base64_decode(std::string_view text)
    {
        if (text.size() % 4 != 0)
            throw Error(ErrorCode::BackendProtocolError, "base64 length not a multiple of 4");
        if (text.empty())
            return {};

        std::string out(3 * (text.size() / 4), '\0');
        const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                      reinterpret_cast<const unsigned char*>(text.data()),
                                      static_cast<int>(text.size()));
        if (n < 0)
            throw Error(ErrorCode::BackendProtocolError, "invalid base64");

        // EVP_DecodeBlock counts padding as zero bytes
        std::size_t pad = 0;
        if (text.back() == '=')
            ++pad;
        if (text.size() >= 2 && text[text.size() - 2] == '=')
            ++pad;
        out.resize(static_cast<std::size_t>(n) - pad);
        return out;
    }

    inline std::string sha256_hex(std::string_view bytes)
    {
        unsigned char digest[SHA256_DIGEST_LENGTH];
        unsigned int len = 0;
        EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);

        static constexpr char hex[] = "0123456789abcdef";
        std::string out;
        out.reserve(2 * len);
        for (unsigned int i = 0; i < len; ++i)
        {
            out.push_back(hex[digest[i] >> 4]);
            out.push_back(hex[digest[i] & 0xF]);
        }
        return out;
    }

    /// FNV-1a 64-bit; stable across platforms and runs.
    class Fnv1a64
    {
    public:
        Fnv1a64& update(std::string_view bytes)
        {
            for (unsigned char c : bytes)
            {
                state_ ^= c;
                state_ *= 0x100000001b3ULL;
            }
            return *this;
        }

        Fnv1a64& update(std::uint64_t v)
        {
            char le[8];
            for (int i = 0; i < 8; ++i)
                le[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
            return update(std::string_view(le, 8));
        }

        std::uint64_t digest() const noexcept { return state_; }

    private:
        std::uint64_t state_ = 0xcbf29ce484222325ULL;
    };

    /// Raw little-endian float32 packing used by the reconstruction wire format.
    inline std::string pack_f32_le(std::span<const float> values)
    {
        std::string out(values.size() * 4, '\0');
        for (std::size_t i = 0; i < values.size(); ++i)
        {
            std::uint32_t bits;
            std::memcpy(&bits, &values[i], 4);
            for (int b = 0; b < 4; ++b)
                out[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
        }
        return out;
    }

    inline std::vector<float> unpack_f32_le(std::string_view bytes)
    {
        if (bytes.size() % 4 != 0)
            throw Error(ErrorCode::BackendProtocolError, "float32 payload length not a multiple of 4");
        std::vector<float> out(bytes.size() / 4);
        for (std::size_t i = 0; i < out.size(); ++i)
        {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b)
                bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + b])) << (8 * b);
            std::memcpy(&out[i], &bits, 4);
        }
        return out;
    }
}
