#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace timbre {

struct AudioBuffer {
    std::vector<double> samples;  // mono, nominal range [-1, 1]
    double sample_rate = 16000.0;

    std::size_t size() const { return samples.size(); }
    double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

inline double rms(const AudioBuffer& buf) {
    if (buf.samples.empty()) return 0.0;
    double acc = 0.0;
    for (double s : buf.samples) acc += s * s;
    return std::sqrt(acc / static_cast<double>(buf.samples.size()));
}

inline double peak(const AudioBuffer& buf) {
    double p = 0.0;
    for (double s : buf.samples) p = std::max(p, std::abs(s));
    return p;
}

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
    os.write(b, 4);
}
inline void put_u16(std::ostream& os, std::uint16_t v) {
    char b[2] = {char(v & 0xff), char((v >> 8) & 0xff)};
    os.write(b, 2);
}
inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}
inline std::uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return std::uint16_t(b[0]) | (std::uint16_t(b[1]) << 8);
}
}  // namespace detail

// 16-bit PCM mono.
inline void write_wav(const std::string& path, const AudioBuffer& buf) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    const std::uint32_t n = static_cast<std::uint32_t>(buf.samples.size());
    const std::uint32_t data_bytes = n * 2;
    os.write("RIFF", 4);
    detail::put_u32(os, 36 + data_bytes);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    detail::put_u32(os, 16);
    detail::put_u16(os, 1);  // PCM
    detail::put_u16(os, 1);  // mono
    const auto sr = static_cast<std::uint32_t>(buf.sample_rate);
    detail::put_u32(os, sr);
    detail::put_u32(os, sr * 2);
    detail::put_u16(os, 2);
    detail::put_u16(os, 16);
    os.write("data", 4);
    detail::put_u32(os, data_bytes);
    for (double s : buf.samples) {
        double c = std::max(-1.0, std::min(1.0, s));
        auto v = static_cast<std::int16_t>(std::lrint(c * 32767.0));
        detail::put_u16(os, static_cast<std::uint16_t>(v));
    }
}

inline AudioBuffer read_wav(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    char tag[5] = {0};
    is.read(tag, 4);
    if (std::string(tag, 4) != "RIFF") throw std::runtime_error("not a RIFF file: " + path);
    detail::get_u32(is);
    is.read(tag, 4);
    if (std::string(tag, 4) != "WAVE") throw std::runtime_error("not a WAVE file: " + path);

    AudioBuffer buf;
    std::uint16_t channels = 1, bits = 16;
    while (is.read(tag, 4)) {
        std::uint32_t chunk = detail::get_u32(is);
        std::string id(tag, 4);
        if (id == "fmt ") {
            std::uint16_t fmt = detail::get_u16(is);
            channels = detail::get_u16(is);
            buf.sample_rate = detail::get_u32(is);
            detail::get_u32(is);
            detail::get_u16(is);
            bits = detail::get_u16(is);
            if (fmt != 1 || bits != 16) throw std::runtime_error("only 16-bit PCM supported: " + path);
            if (chunk > 16) is.seekg(chunk - 16, std::ios::cur);
        } else if (id == "data") {
            std::uint32_t frames = chunk / (2u * channels);
            buf.samples.resize(frames);
            for (std::uint32_t i = 0; i < frames; ++i) {
                double acc = 0.0;
                for (std::uint16_t c = 0; c < channels; ++c)
                    acc += static_cast<std::int16_t>(detail::get_u16(is)) / 32767.0;
                buf.samples[i] = acc / channels;
            }
            return buf;
        } else {
            is.seekg(chunk + (chunk & 1), std::ios::cur);
        }
    }
    throw std::runtime_error("no data chunk: " + path);
}

}  // namespace timbre
