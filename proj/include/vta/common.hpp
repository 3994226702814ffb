/*
 * Licensed to the Apache Software Foundation (ASF) under one
 * or more contributor license agreements.  See the NOTICE file
 * distributed with this work for additional information
 * regarding copyright ownership.  The ASF licenses this file
 * to you under the Apache License, Version 2.0 (the
 * "License"); you may not use this file except in compliance
 * with the License.  You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing,
 * software distributed under the License is distributed on an
 * "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
 * KIND, either express or implied.  See the License for the
 * specific language governing permissions and limitations
 * under the License.
 */

/*!
 * \file common.hpp
 * \brief Error types, bit helpers and the deterministic RNG shared by all modules.
 */
#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

namespace vta {

/*! \brief Base class of every error raised by the library. */
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/*! \brief A field value does not fit its declared bit width. */
class EncodeError : public Error {
 public:
  EncodeError(std::string field, const std::string& what)
      : Error(what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

/*! \brief Assembly or file-format parse failure; carries a 1-based line number when known. */
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/*! \brief A value violates an invariant that its encoding alone cannot express. */
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/*! \brief Simulation failure: out-of-bounds access or a deadlocked pipeline. */
class SimError : public Error {
 public:
  using Error::Error;
};

class DeadlockError : public SimError {
 public:
  using SimError::SimError;
};

/*! \brief A schedule does not fit the hardware or an operator cannot be lowered. */
class ScheduleError : public Error {
 public:
  using Error::Error;
};

class CacheError : public Error {
 public:
  using Error::Error;
};

/*! \brief Broken internal invariant; reaching one is a library bug. */
class InternalError : public Error {
 public:
  using Error::Error;
};

#define VTA_CHECK(cond, msg)                        \
  do {                                              \
    if (!(cond)) throw ::vta::InternalError(msg);   \
  } while (0)

namespace bits {

inline constexpr bool is_pow2(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

inline constexpr std::uint64_t mask(int width) {
  return width >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << width) - 1);
}

inline constexpr bool fits_unsigned(std::uint64_t v, int width) { return v <= mask(width); }

inline constexpr bool fits_signed(std::int64_t v, int width) {
  const std::int64_t lo = -(std::int64_t{1} << (width - 1));
  const std::int64_t hi = (std::int64_t{1} << (width - 1)) - 1;
  return v >= lo && v <= hi;
}

/*! \brief Two's-complement wrap of v to a signed width-bit integer. */
inline constexpr std::int32_t wrap(std::int64_t v, int width) {
  if (width >= 64) return static_cast<std::int32_t>(v);
  const std::uint64_t m = mask(width);
  std::uint64_t u = static_cast<std::uint64_t>(v) & m;
  if (u & (std::uint64_t{1} << (width - 1))) u |= ~m;
  return static_cast<std::int32_t>(static_cast<std::int64_t>(u));
}

inline constexpr std::int64_t signed_min(int width) { return -(std::int64_t{1} << (width - 1)); }
inline constexpr std::int64_t signed_max(int width) { return (std::int64_t{1} << (width - 1)) - 1; }

inline constexpr std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

}  // namespace bits

/*!
 * \brief Seeded generator used for every random decision in the library.
 *
 * std::uniform_int_distribution is implementation-defined, so bounded draws
 * are done by hand to keep logs identical across standard libraries.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /*! \return uniform integer in [0, n). */
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  /*! \return uniform integer in [lo, hi]. */
  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  /*! \return uniform real in [0, 1). */
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  template <typename Vec>
  void shuffle(Vec& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/*! \brief splitmix64 step; derives independent child seeds from a parent seed. */
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace vta
