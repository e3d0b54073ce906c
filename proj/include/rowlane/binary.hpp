#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "rowlane/error.hpp"

namespace rowlane::binary {

static_assert(std::numeric_limits<float>::is_iec559, "IEEE-754 float required");

namespace detail {

// Unsigned integer with the width of T; floats travel as their bit pattern.
template <typename T>
struct raw_bits {
  using type = std::make_unsigned_t<T>;
};
template <>
struct raw_bits<float> {
  using type = std::uint32_t;
};

}  // namespace detail

/// Appends little-endian encoded values to a byte buffer.
class Writer {
 public:
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

  template <typename T>
  void scalar(T value) {
    static_assert(std::is_integral_v<T> || std::is_same_v<T, float>);
    using U = typename detail::raw_bits<T>::type;
    auto raw = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out_.push_back(static_cast<std::uint8_t>(raw & 0xffu));
      if constexpr (sizeof(U) > 1) raw = static_cast<U>(raw >> 8);
    }
  }

  void floats(std::span<const float> values) {
    if constexpr (std::endian::native == std::endian::little) {
      const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
      out_.insert(out_.end(), p, p + values.size_bytes());
    } else {
      for (float v : values) scalar(v);
    }
  }

  std::vector<std::uint8_t> take() && { return std::move(out_); }
  std::size_t size() const noexcept { return out_.size(); }

 private:
  std::vector<std::uint8_t> out_;
};

/// Bounds-checked little-endian reader; throws FormatError on truncation.
class Reader {
 public:
  Reader(std::span<const std::uint8_t> data, std::string context)
      : data_(data), context_(std::move(context)) {}

  std::string bytes(std::size_t n) {
    require(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  template <typename T>
  T scalar() {
    static_assert(std::is_integral_v<T> || std::is_same_v<T, float>);
    using U = typename detail::raw_bits<T>::type;
    require(sizeof(U));
    U raw = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      raw = static_cast<U>(raw | (static_cast<U>(data_[pos_ + i]) << (8 * i)));
    }
    pos_ += sizeof(U);
    return std::bit_cast<T>(raw);
  }

  void floats(std::span<float> out) {
    require(out.size_bytes());
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), data_.data() + pos_, out.size_bytes());
      pos_ += out.size_bytes();
    } else {
      for (float& v : out) v = scalar<float>();
    }
  }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  [[noreturn]] void fail(const std::string& what) const { throw FormatError(context_ + ": " + what); }

 private:
  void require(std::size_t n) const {
    if (remaining() < n) {
      fail("truncated payload (need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
           ", have " + std::to_string(remaining()) + ")");
    }
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::string context_;
};

}  // namespace rowlane::binary
