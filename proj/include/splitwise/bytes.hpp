#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace splitwise {

// Appends fixed-width integers and IEEE-754 floats in an explicit byte order.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16_le(std::uint16_t v) { put_le(v, 2); }
  void u32_le(std::uint32_t v) { put_le(v, 4); }
  void u16_be(std::uint16_t v) { put_be(v, 2); }
  void u32_be(std::uint32_t v) { put_be(v, 4); }
  void u64_be(std::uint64_t v) { put_be(v, 8); }
  void f32_le(float v) { u32_le(std::bit_cast<std::uint32_t>(v)); }
  void f32_le(std::span<const float> values) {
    if constexpr (std::endian::native == std::endian::little) {
      const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
      buf_.insert(buf_.end(), p, p + values.size_bytes());
    } else {
      for (float v : values) f32_le(v);
    }
  }
  void bytes(std::span<const std::uint8_t> data) { buf_.insert(buf_.end(), data.begin(), data.end()); }
  void text(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  std::vector<std::uint8_t>& buffer() { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  void put_le(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_be(std::uint64_t v, int width) {
    for (int i = width - 1; i >= 0; --i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

struct ByteOverrun : std::out_of_range {
  ByteOverrun() : std::out_of_range("read past end of buffer") {}
};

// Bounds-checked cursor over a byte span; overruns throw ByteOverrun.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

  std::uint8_t u8() { return static_cast<std::uint8_t>(get_le(1)); }
  std::uint16_t u16_le() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t u32_le() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint16_t u16_be() { return static_cast<std::uint16_t>(get_be(2)); }
  std::uint32_t u32_be() { return static_cast<std::uint32_t>(get_be(4)); }
  std::uint64_t u64_be() { return get_be(8); }
  float f32_le() { return std::bit_cast<float>(u32_le()); }
  void f32_le(std::span<float> out) {
    need(out.size_bytes());
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), data_.data() + pos_, out.size_bytes());
      pos_ += out.size_bytes();
    } else {
      for (float& v : out) v = f32_le();
    }
  }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::string text(std::size_t n) {
    auto b = bytes(n);
    return std::string(b.begin(), b.end());
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw ByteOverrun();
  }
  std::uint64_t get_le(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  std::uint64_t get_be(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v = (v << 8) | data_[pos_ + i];
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace splitwise
