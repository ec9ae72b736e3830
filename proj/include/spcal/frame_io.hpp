#pragma once

// Frame file formats.
//
//   PGM:       binary P5, 16-bit big-endian samples, maxval 65535.
//   Container: 8-byte magic "PCFRAMS1", then four little-endian uint32
//              (frame count, width, height, reserved = 0), then the frames
//              back to back as little-endian uint16 in row-major order.

#include <array>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "spcal/error.hpp"
#include "spcal/image.hpp"

namespace spcal {

inline constexpr char container_magic[9] = "PCFRAMS1";

namespace detail {

inline void put_u32_le(std::ostream& os, std::uint32_t v)
{
    const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b.data(), 4);
}

inline std::uint32_t get_u32_le(const unsigned char* p)
{
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void check_stream(const std::ios& s, const char* what)
{
    if (!s) throw Error(ErrorKind::io, what);
}

} // namespace detail

inline void write_pgm(std::ostream& os, const Frame& frame, const std::string& comment = {})
{
    os << "P5\n";
    if (!comment.empty()) os << "# " << comment << "\n";
    os << frame.width << " " << frame.height << "\n65535\n";
    std::vector<char> buf(frame.size() * 2);
    for (std::size_t k = 0; k < frame.size(); ++k) {
        buf[2 * k] = static_cast<char>(frame.values[k] >> 8);
        buf[2 * k + 1] = static_cast<char>(frame.values[k] & 0xff);
    }
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    detail::check_stream(os, "failed to write PGM");
}

inline void write_pgm(const std::string& path, const Frame& frame, const std::string& comment = {})
{
    std::ofstream os(path, std::ios::binary);
    detail::check_stream(os, ("cannot open " + path).c_str());
    write_pgm(os, frame, comment);
}

inline Frame read_pgm(std::istream& is)
{
    auto token = [&is]() {
        std::string t;
        for (;;) {
            int c = is.peek();
            if (c == '#') {
                std::string skip;
                std::getline(is, skip);
            } else if (std::isspace(c)) {
                is.get();
            } else {
                break;
            }
        }
        is >> t;
        return t;
    };
    if (token() != "P5") throw Error(ErrorKind::io, "not a binary PGM (P5)");
    std::size_t w = 0, h = 0;
    unsigned maxval = 0;
    try {
        w = std::stoul(token());
        h = std::stoul(token());
        maxval = static_cast<unsigned>(std::stoul(token()));
    } catch (const std::exception&) {
        throw Error(ErrorKind::io, "malformed PGM header");
    }
    is.get();  // single whitespace before the raster
    Frame frame(w, h);
    if (maxval < 256) {
        std::vector<unsigned char> buf(frame.size());
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        detail::check_stream(is, "truncated PGM raster");
        for (std::size_t k = 0; k < frame.size(); ++k) frame.values[k] = buf[k];
    } else {
        std::vector<unsigned char> buf(frame.size() * 2);
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        detail::check_stream(is, "truncated PGM raster");
        for (std::size_t k = 0; k < frame.size(); ++k)
            frame.values[k] = static_cast<std::uint16_t>((buf[2 * k] << 8) | buf[2 * k + 1]);
    }
    return frame;
}

inline Frame read_pgm(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    detail::check_stream(is, ("cannot open " + path).c_str());
    return read_pgm(is);
}

/// Streams frames into a container whose frame count is fixed up front.
class FrameContainerWriter {
public:
    FrameContainerWriter(std::ostream& os, std::uint32_t count, std::uint32_t width, std::uint32_t height)
        : os_(os), count_(count), width_(width), height_(height)
    {
        os_.write(container_magic, 8);
        detail::put_u32_le(os_, count);
        detail::put_u32_le(os_, width);
        detail::put_u32_le(os_, height);
        detail::put_u32_le(os_, 0);
        detail::check_stream(os_, "failed to write container header");
    }

    void write(const Frame& frame)
    {
        detail::require(frame.same_shape(width_, height_), ErrorKind::dimension_mismatch,
                        "frame shape differs from container header");
        detail::require(written_ < count_, ErrorKind::io, "more frames than declared in the header");
        buf_.resize(frame.size() * 2);
        for (std::size_t k = 0; k < frame.size(); ++k) {
            buf_[2 * k] = static_cast<char>(frame.values[k] & 0xff);
            buf_[2 * k + 1] = static_cast<char>(frame.values[k] >> 8);
        }
        os_.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
        detail::check_stream(os_, "failed to write frame");
        ++written_;
    }

    std::uint32_t written() const noexcept { return written_; }
    bool complete() const noexcept { return written_ == count_; }

private:
    std::ostream& os_;
    std::uint32_t count_, width_, height_;
    std::uint32_t written_ = 0;
    std::vector<char> buf_;
};

/// Sequential reader over a frame container.
class FrameContainerReader {
public:
    explicit FrameContainerReader(std::istream& is) : is_(is)
    {
        std::array<unsigned char, 24> header{};
        is_.read(reinterpret_cast<char*>(header.data()), header.size());
        detail::check_stream(is_, "truncated container header");
        if (std::memcmp(header.data(), container_magic, 8) != 0) throw Error(ErrorKind::io, "bad container magic");
        count_ = detail::get_u32_le(header.data() + 8);
        width_ = detail::get_u32_le(header.data() + 12);
        height_ = detail::get_u32_le(header.data() + 16);
    }

    std::uint32_t count() const noexcept { return count_; }
    std::uint32_t width() const noexcept { return width_; }
    std::uint32_t height() const noexcept { return height_; }
    std::uint32_t position() const noexcept { return read_; }
    bool done() const noexcept { return read_ >= count_; }

    Frame next()
    {
        detail::require(!done(), ErrorKind::io, "read past the last frame");
        Frame frame(width_, height_);
        buf_.resize(frame.size() * 2);
        is_.read(reinterpret_cast<char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
        detail::check_stream(is_, "truncated frame data");
        for (std::size_t k = 0; k < frame.size(); ++k)
            frame.values[k] = static_cast<std::uint16_t>(buf_[2 * k] | (buf_[2 * k + 1] << 8));
        ++read_;
        return frame;
    }

private:
    std::istream& is_;
    std::uint32_t count_ = 0, width_ = 0, height_ = 0;
    std::uint32_t read_ = 0;
    std::vector<unsigned char> buf_;
};

inline void write_container(const std::string& path, const std::vector<Frame>& frames)
{
    detail::require(!frames.empty(), ErrorKind::empty_input, "no frames to write");
    std::ofstream os(path, std::ios::binary);
    detail::check_stream(os, ("cannot open " + path).c_str());
    FrameContainerWriter writer(os, static_cast<std::uint32_t>(frames.size()),
                                static_cast<std::uint32_t>(frames.front().width),
                                static_cast<std::uint32_t>(frames.front().height));
    for (const auto& f : frames) writer.write(f);
}

inline std::vector<Frame> read_container(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    detail::check_stream(is, ("cannot open " + path).c_str());
    FrameContainerReader reader(is);
    std::vector<Frame> frames;
    frames.reserve(reader.count());
    while (!reader.done()) frames.push_back(reader.next());
    return frames;
}

} // namespace spcal
