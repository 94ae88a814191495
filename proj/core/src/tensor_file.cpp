#include "streamdiar/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace streamdiar {

static_assert(std::endian::native == std::endian::little,
              "tensor container assumes a little-endian host");

namespace {
constexpr char kMagic[8] = {'S', 'D', 'T', 'N', 'S', 'R', '0', '1'};

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("tensor file: truncated");
    return v;
}
} // namespace

bool NamedTensors::contains(const std::string& name) const {
    for (const auto& [n, m] : items)
        if (n == name) return true;
    return false;
}

const MatrixF& NamedTensors::get(const std::string& name) const {
    for (const auto& [n, m] : items)
        if (n == name) return m;
    throw std::runtime_error("tensor file: missing tensor '" + name + "'");
}

MatrixF& NamedTensors::get(const std::string& name) {
    for (auto& [n, m] : items)
        if (n == name) return m;
    throw std::runtime_error("tensor file: missing tensor '" + name + "'");
}

void NamedTensors::put(const std::string& name, MatrixF value) {
    for (auto& [n, m] : items) {
        if (n == name) {
            m = std::move(value);
            return;
        }
    }
    items.emplace_back(name, std::move(value));
}

void NamedTensors::put_scalar(const std::string& name, float value) {
    put(name, MatrixF(1, 1, {value}));
}

float NamedTensors::get_scalar(const std::string& name) const {
    const MatrixF& m = get(name);
    if (m.size() != 1) throw std::runtime_error("tensor file: '" + name + "' not scalar");
    return m.at(0, 0);
}

void save_tensors(const std::string& path, const NamedTensors& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("tensor file: cannot open for write: " + path);
    os.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.items.size()));
    for (const auto& [name, m] : tensors.items) {
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint32_t>(os, 2);
        write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
        write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
        os.write(reinterpret_cast<const char*>(m.data()),
                 static_cast<std::streamsize>(sizeof(float) * m.size()));
    }
    if (!os) throw std::runtime_error("tensor file: write failed: " + path);
}

NamedTensors load_tensors(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("tensor file: cannot open: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("tensor file: bad magic in " + path);
    const auto count = read_pod<std::uint32_t>(is);
    NamedTensors out;
    out.items.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<std::uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto rank = read_pod<std::uint32_t>(is);
        if (rank != 2) throw std::runtime_error("tensor file: unsupported rank");
        const auto rows = read_pod<std::uint64_t>(is);
        const auto cols = read_pod<std::uint64_t>(is);
        std::vector<float> data(rows * cols);
        is.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(sizeof(float) * data.size()));
        if (!is) throw std::runtime_error("tensor file: truncated tensor data");
        out.items.emplace_back(std::move(name),
                               MatrixF(static_cast<index_t>(rows),
                                       static_cast<index_t>(cols), std::move(data)));
    }
    return out;
}

std::uint64_t file_digest(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("digest: cannot open: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (is) {
        is.read(buf, sizeof(buf));
        const std::streamsize got = is.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

} // namespace streamdiar
