#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "spcal/frame_io.hpp"

using namespace spcal;

namespace {

Frame ramp(std::size_t w, std::size_t h, std::uint16_t offset)
{
    Frame f(w, h);
    for (std::size_t k = 0; k < f.size(); ++k) f.values[k] = static_cast<std::uint16_t>(k * 257 + offset);
    return f;
}

std::string bytes_of(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

} // namespace

TEST(Pgm, RoundTrip16Bit)
{
    const auto f = ramp(7, 3, 65000);
    std::stringstream ss;
    write_pgm(ss, f, "test frame");
    EXPECT_EQ(read_pgm(ss), f);
}

TEST(Pgm, HeaderAndBigEndianSamples)
{
    Frame f(2, 1);
    f.values = {0x0102, 0xfffe};
    std::stringstream ss;
    write_pgm(ss, f);
    const std::string s = ss.str();
    ASSERT_EQ(s.rfind("P5\n2 1\n65535\n", 0), 0u) << s;
    const std::string tail = s.substr(s.size() - 4);
    EXPECT_EQ(static_cast<unsigned char>(tail[0]), 0x01);
    EXPECT_EQ(static_cast<unsigned char>(tail[1]), 0x02);
    EXPECT_EQ(static_cast<unsigned char>(tail[2]), 0xff);
    EXPECT_EQ(static_cast<unsigned char>(tail[3]), 0xfe);
}

TEST(Pgm, ReadsCommentsAnd8Bit)
{
    std::stringstream ss;
    ss << "P5\n# made by hand\n3 1\n# another\n255\n";
    ss.write("\x01\x02\xff", 3);
    const auto f = read_pgm(ss);
    EXPECT_EQ(f.width, 3u);
    EXPECT_EQ(f.values, (std::vector<std::uint16_t>{1, 2, 255}));
}

TEST(Pgm, RejectsGarbage)
{
    std::stringstream a("P2\n1 1\n255\n0");
    EXPECT_THROW(read_pgm(a), Error);
    std::stringstream b("P5\n4 4\n65535\n\x01");
    EXPECT_THROW(read_pgm(b), Error);
}

TEST(Container, HeaderLayout)
{
    std::stringstream ss;
    FrameContainerWriter w(ss, 2, 3, 1);
    w.write(ramp(3, 1, 1));
    w.write(ramp(3, 1, 2));
    EXPECT_TRUE(w.complete());
    const std::string s = ss.str();
    ASSERT_EQ(s.size(), 8u + 16u + 2u * 3u * 2u);
    EXPECT_EQ(s.substr(0, 8), "PCFRAMS1");
    EXPECT_EQ(static_cast<unsigned char>(s[8]), 2);
    EXPECT_EQ(static_cast<unsigned char>(s[12]), 3);
    EXPECT_EQ(static_cast<unsigned char>(s[16]), 1);
    EXPECT_EQ(s.substr(20, 4), std::string(4, '\0'));
}

TEST(Container, StreamRoundTrip)
{
    std::stringstream ss;
    std::vector<Frame> frames{ramp(5, 4, 0), ramp(5, 4, 9), ramp(5, 4, 60000)};
    FrameContainerWriter w(ss, 3, 5, 4);
    for (const auto& f : frames) w.write(f);
    FrameContainerReader r(ss);
    EXPECT_EQ(r.count(), 3u);
    std::vector<Frame> back;
    while (!r.done()) back.push_back(r.next());
    EXPECT_EQ(back, frames);
    EXPECT_THROW(r.next(), Error);
}

TEST(Container, FileRoundTripIsByteStable)
{
    const auto dir = std::filesystem::temp_directory_path() / "spcal_frame_io_test";
    std::filesystem::create_directories(dir);
    const std::string a = (dir / "a.pcf").string(), b = (dir / "b.pcf").string();
    const std::vector<Frame> frames{ramp(4, 4, 3), ramp(4, 4, 4)};
    write_container(a, frames);
    write_container(b, read_container(a));
    EXPECT_EQ(read_container(a), frames);
    EXPECT_EQ(bytes_of(a), bytes_of(b));
    std::filesystem::remove_all(dir);
}

TEST(Container, Errors)
{
    std::stringstream bad_magic("NOTMAGIC" + std::string(16, '\0'));
    EXPECT_THROW(FrameContainerReader{bad_magic}, Error);

    std::stringstream ss;
    FrameContainerWriter w(ss, 1, 2, 2);
    EXPECT_THROW(w.write(ramp(3, 2, 0)), Error);
    w.write(ramp(2, 2, 0));
    EXPECT_THROW(w.write(ramp(2, 2, 0)), Error);

    std::stringstream truncated(ss.str().substr(0, 26));
    FrameContainerReader r(truncated);
    EXPECT_THROW(r.next(), Error);

    try {
        read_container("/nonexistent/dir/x.pcf");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::io);
    }
}
