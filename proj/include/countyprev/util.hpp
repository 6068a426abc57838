/*
 * Copyright (C) 2026 countyprev contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef COUNTYPREV_UTIL_HPP
#define COUNTYPREV_UTIL_HPP

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace countyprev {

/// Raised when an input file cannot be parsed; message carries file and line.
class ParseError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when cross-table references or uniqueness constraints fail.
class IntegrityError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when a model cannot be assembled from the given data and config.
class ModelConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised on non-finite values where the caller required finite ones.
class NumericError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// 64-bit FNV-1a over a byte string.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

/// Shortest decimal string that round-trips the double exactly.
inline std::string format_double(double x) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

}  // namespace countyprev

#endif  // COUNTYPREV_UTIL_HPP
