#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "caedet/tensor.hpp"

namespace caedet {

static_assert(std::endian::native == std::endian::little,
              "checkpoint containers assume a little-endian host");

/// Little-endian binary writer for checkpoint containers. Checkpoints
/// must round-trip bit-exactly, so doubles are written as raw IEEE bytes.
class BinaryWriter {
public:
    explicit BinaryWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open for writing: " + path);
    }

    void u8(uint8_t v) { raw(&v, 1); }
    void u32(uint32_t v) { raw(&v, 4); }
    void u64(uint64_t v) { raw(&v, 8); }
    void i32(int32_t v) { raw(&v, 4); }
    void i64(int64_t v) { raw(&v, 8); }
    void f64(double v) { raw(&v, 8); }

    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        raw(s.data(), s.size());
    }

    void magic(const char tag[8]) { raw(tag, 8); }

    void f64_array(const std::vector<double>& v) {
        u64(v.size());
        raw(v.data(), v.size() * sizeof(double));
    }

    void tensor(const Tensor& t) {
        u32(static_cast<uint32_t>(t.shape.size()));
        for (int d : t.shape) i32(d);
        f64_array(t.data);
    }

    void close() { out_.close(); }

private:
    void raw(const void* p, size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out_) throw std::runtime_error("checkpoint write failed");
    }
    std::ofstream out_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw std::runtime_error("cannot open for reading: " + path);
    }

    uint8_t u8() { uint8_t v; raw(&v, 1); return v; }
    uint32_t u32() { uint32_t v; raw(&v, 4); return v; }
    uint64_t u64() { uint64_t v; raw(&v, 8); return v; }
    int32_t i32() { int32_t v; raw(&v, 4); return v; }
    int64_t i64() { int64_t v; raw(&v, 8); return v; }
    double f64() { double v; raw(&v, 8); return v; }

    std::string str() {
        uint32_t n = u32();
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }

    void expect_magic(const char tag[8]) {
        char got[8];
        raw(got, 8);
        if (std::memcmp(got, tag, 8) != 0)
            throw std::runtime_error(std::string("bad checkpoint magic, expected ") + std::string(tag, 8));
    }

    std::vector<double> f64_array() {
        uint64_t n = u64();
        std::vector<double> v(n);
        raw(v.data(), n * sizeof(double));
        return v;
    }

    Tensor tensor() {
        uint32_t rank = u32();
        std::vector<int> shape(rank);
        for (uint32_t i = 0; i < rank; ++i) shape[i] = i32();
        std::vector<double> d = f64_array();
        if (rank == 0 && d.empty()) return Tensor{};  // empty placeholder slot
        return Tensor(std::move(shape), std::move(d));
    }

private:
    void raw(void* p, size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(in_.gcount()) != n)
            throw std::runtime_error("checkpoint truncated");
    }
    std::ifstream in_;
};

}  // namespace caedet
