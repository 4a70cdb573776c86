#pragma once

#include "endoseg/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

namespace endoseg::detail {

class LeWriter {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    template <typename T>
    void uint(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }

    std::vector<std::uint8_t>& buffer() { return out_; }

private:
    std::vector<std::uint8_t> out_;
};

class LeReader {
public:
    LeReader(std::span<const std::uint8_t> in, std::string what) : in_(in), what_(std::move(what)) {}

    void bytes(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, in_.data() + pos_, n);
        pos_ += n;
    }
    template <typename T>
    T uint() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(T{in_[pos_ + i]} << (8 * i));
        pos_ += sizeof(T);
        return v;
    }
    float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }

    std::size_t remaining() const { return in_.size() - pos_; }

    void need(std::size_t n) const {
        if (remaining() < n) {
            throw DataError(what_ + ": truncated (need " + std::to_string(n) + " more bytes at offset " +
                            std::to_string(pos_) + ", have " + std::to_string(remaining()) + ")");
        }
    }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
    std::string what_;
};

}  // namespace endoseg::detail
