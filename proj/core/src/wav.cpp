#include "streamdiar/features.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace streamdiar {

namespace {

[[noreturn]] void wav_error(const std::string& path, const std::string& what) {
    throw std::runtime_error("wav: " + path + ": " + what);
}

std::uint32_t read_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(static_cast<std::uint32_t>(p[0]) |
                                      (static_cast<std::uint32_t>(p[1]) << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

} // namespace

AudioBuffer read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) wav_error(path, "cannot open file");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 12) wav_error(path, "truncated header");
    if (std::memcmp(bytes.data(), "RIFF", 4) != 0) wav_error(path, "missing RIFF tag");
    if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) wav_error(path, "missing WAVE tag");

    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::uint32_t data_len = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
        const std::uint32_t len = read_u32(bytes.data() + pos + 4);
        pos += 8;
        if (pos + len > bytes.size()) wav_error(path, "chunk extends past end of file");
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) wav_error(path, "fmt chunk too short");
            format = read_u16(bytes.data() + pos);
            channels = read_u16(bytes.data() + pos + 2);
            rate = read_u32(bytes.data() + pos + 4);
            bits = read_u16(bytes.data() + pos + 14);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = bytes.data() + pos;
            data_len = len;
        }
        pos += len + (len & 1); // chunks are 2-byte aligned
    }

    if (!have_fmt) wav_error(path, "missing fmt chunk");
    if (data == nullptr) wav_error(path, "missing data chunk");
    if (format != 1) wav_error(path, "audio format " + std::to_string(format) + " (need 16-bit PCM)");
    if (channels != 1) wav_error(path, std::to_string(channels) + " channels (need mono)");
    if (bits != 16) wav_error(path, std::to_string(bits) + " bits per sample (need 16)");
    if (rate != 8000) wav_error(path, std::to_string(rate) + " Hz sample rate (need 8000)");
    if (data_len % 2 != 0) wav_error(path, "odd data chunk length");

    AudioBuffer audio;
    audio.sample_rate = static_cast<int>(rate);
    audio.samples.resize(data_len / 2);
    for (std::size_t i = 0; i < audio.samples.size(); ++i) {
        const std::int16_t s = static_cast<std::int16_t>(read_u16(data + 2 * i));
        audio.samples[i] = static_cast<float>(s) / 32768.0f;
    }
    return audio;
}

void write_wav(const std::string& path, const AudioBuffer& audio) {
    if (audio.sample_rate != 8000)
        throw std::invalid_argument("wav: only 8000 Hz output is supported");
    const std::uint32_t data_len = static_cast<std::uint32_t>(audio.samples.size() * 2);

    std::vector<unsigned char> out;
    out.reserve(44 + data_len);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    put_u32(out, 36 + data_len);
    out.insert(out.end(), {'W', 'A', 'V', 'E'});
    out.insert(out.end(), {'f', 'm', 't', ' '});
    put_u32(out, 16);
    put_u16(out, 1);  // PCM
    put_u16(out, 1);  // mono
    put_u32(out, 8000);
    put_u32(out, 8000 * 2); // byte rate
    put_u16(out, 2);  // block align
    put_u16(out, 16); // bits per sample
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    put_u32(out, data_len);
    for (float s : audio.samples) {
        const float clamped = std::clamp(s, -1.0f, 1.0f);
        const auto q = static_cast<std::int16_t>(std::lround(clamped * 32767.0f));
        put_u16(out, static_cast<std::uint16_t>(q));
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("wav: cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("wav: write failed: " + path);
}

} // namespace streamdiar
