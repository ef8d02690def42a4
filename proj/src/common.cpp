#include "jumpcut/common.hpp"

#include <stdlib.h>
#include <zlib.h>

#include <cmath>
#include <fstream>
#include <sstream>

namespace jcut {

namespace {
// Pin BLAS to one thread before its lazy init so reductions stay bit-deterministic.
struct BlasThreadPin {
    BlasThreadPin() { setenv("OPENBLAS_NUM_THREADS", "1", 0); }
};
const BlasThreadPin blas_thread_pin;
}  // namespace

double Rng::normal(uint64_t stream, uint64_t counter) const {
    double u1 = uniform(stream, 2 * counter);
    double u2 = uniform(stream, 2 * counter + 1);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

uint32_t crc32_bytes(const void* data, size_t size) {
    uLong c = crc32(0L, Z_NULL, 0);
    const Bytef* p = static_cast<const Bytef*>(data);
    while (size > 0) {
        uInt chunk = size > (1u << 30) ? (1u << 30) : static_cast<uInt>(size);
        c = crc32(c, p, chunk);
        p += chunk;
        size -= chunk;
    }
    return static_cast<uint32_t>(c);
}

uint32_t crc32_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file for checksum: " + path);
    uLong c = crc32(0L, Z_NULL, 0);
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        std::streamsize got = in.gcount();
        if (got > 0) c = crc32(c, reinterpret_cast<const Bytef*>(buf), static_cast<uInt>(got));
    }
    return static_cast<uint32_t>(c);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write file: " + path);
    out << text;
    if (!out) throw IoError("write failed: " + path);
}

std::vector<float> read_f32le_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open file: " + path);
    std::streamsize size = in.tellg();
    if (size % 4 != 0) throw IoError("f32le file size not a multiple of 4: " + path);
    in.seekg(0);
    std::vector<float> out(static_cast<size_t>(size) / 4);
    in.read(reinterpret_cast<char*>(out.data()), size);
    if (!in) throw IoError("short read: " + path);
    return out;
}

void write_f32le_file(const std::string& path, const float* data, size_t count) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write file: " + path);
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace jcut
