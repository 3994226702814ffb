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
 * \file tensor.hpp
 * \brief Dense host tensors and the VTAT container format.
 */
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include "common.hpp"

namespace vta {

enum class DType : std::uint8_t { kI8 = 0, kI32 = 1 };

inline int dtype_bits(DType t) { return t == DType::kI8 ? 8 : 32; }
inline const char* dtype_name(DType t) { return t == DType::kI8 ? "i8" : "i32"; }

/*!
 * \brief Row-major integer tensor. Feature maps are NCHW, weights OIHW.
 *
 * Elements are held as int32 regardless of dtype; the dtype bounds the
 * admissible range.
 */
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::int64_t> dims, DType dtype)
      : dims_(std::move(dims)), dtype_(dtype), data_(static_cast<std::size_t>(count(dims_)), 0) {}
  Tensor(std::vector<std::int64_t> dims, DType dtype, std::vector<std::int32_t> data)
      : dims_(std::move(dims)), dtype_(dtype), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != count(dims_))
      throw ShapeError("tensor data has " + std::to_string(data_.size()) + " elements, dims need " +
                       std::to_string(count(dims_)));
    check_range();
  }

  static std::int64_t count(const std::vector<std::int64_t>& dims) {
    std::int64_t n = 1;
    for (auto d : dims) {
      if (d < 0) throw ShapeError("negative tensor extent");
      n *= d;
    }
    return n;
  }

  const std::vector<std::int64_t>& dims() const { return dims_; }
  std::int64_t dim(std::size_t k) const { return dims_.at(k); }
  std::size_t rank() const { return dims_.size(); }
  DType dtype() const { return dtype_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  std::int32_t& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  std::int32_t operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  /*! Rank-4 accessor. */
  std::int32_t& at(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
    return data_[static_cast<std::size_t>(((a * dims_[1] + b) * dims_[2] + c) * dims_[3] + d)];
  }
  std::int32_t at(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) const {
    return data_[static_cast<std::size_t>(((a * dims_[1] + b) * dims_[2] + c) * dims_[3] + d)];
  }

  const std::vector<std::int32_t>& data() const { return data_; }
  std::vector<std::int32_t>& data() { return data_; }

  std::int64_t min_value() const { return dtype_ == DType::kI8 ? -128 : INT32_MIN; }
  std::int64_t max_value() const { return dtype_ == DType::kI8 ? 127 : INT32_MAX; }

  void check_range() const {
    if (dtype_ == DType::kI32) return;
    for (auto v : data_)
      if (v < -128 || v > 127) throw ShapeError("value " + std::to_string(v) + " out of i8 range");
  }

  /*! \return a copy with the same values and dtype i32. */
  Tensor widened() const { return Tensor(dims_, DType::kI32, data_); }

  /*! \return the same elements under new dims with equal element count. */
  Tensor reshaped(std::vector<std::int64_t> dims) const {
    if (count(dims) != size()) throw ShapeError("reshape changes element count");
    Tensor t = *this;
    t.dims_ = std::move(dims);
    return t;
  }

  bool operator==(const Tensor& o) const { return dims_ == o.dims_ && dtype_ == o.dtype_ && data_ == o.data_; }

  static Tensor random(std::vector<std::int64_t> dims, DType dtype, Rng& rng, std::int64_t lo, std::int64_t hi) {
    Tensor t(std::move(dims), dtype);
    for (auto& v : t.data_) v = static_cast<std::int32_t>(rng.range(lo, hi));
    t.check_range();
    return t;
  }

 private:
  std::vector<std::int64_t> dims_;
  DType dtype_ = DType::kI8;
  std::vector<std::int32_t> data_;
};

inline std::string shape_string(const std::vector<std::int64_t>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "," : "") + std::to_string(dims[i]);
  return s + "]";
}

inline constexpr std::uint32_t kTensorVersion = 1;

/*! \brief VTAT container: magic, u32 version, u8 dtype, u8 rank, u32 dims, raw LE elements. */
inline std::vector<std::uint8_t> serialize_tensor(const Tensor& t) {
  if (t.rank() > 255) throw ShapeError("rank too large for the tensor container");
  std::vector<std::uint8_t> out{'V', 'T', 'A', 'T'};
  auto u32 = [&](std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  };
  u32(kTensorVersion);
  out.push_back(static_cast<std::uint8_t>(t.dtype()));
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.dims()) {
    if (d > UINT32_MAX) throw ShapeError("extent too large for the tensor container");
    u32(static_cast<std::uint32_t>(d));
  }
  const int width = dtype_bits(t.dtype()) / 8;
  out.reserve(out.size() + static_cast<std::size_t>(t.size()) * width);
  for (auto v : t.data()) {
    const auto u = static_cast<std::uint32_t>(v);
    for (int b = 0; b < width; ++b) out.push_back(static_cast<std::uint8_t>(u >> (8 * b)));
  }
  return out;
}

inline Tensor deserialize_tensor(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 10 || std::memcmp(bytes.data(), "VTAT", 4) != 0) throw ParseError("bad magic");
  auto u32 = [&](std::size_t at) {
    return std::uint32_t{bytes[at]} | (std::uint32_t{bytes[at + 1]} << 8) | (std::uint32_t{bytes[at + 2]} << 16) |
           (std::uint32_t{bytes[at + 3]} << 24);
  };
  if (u32(4) != kTensorVersion) throw ParseError("unsupported tensor version " + std::to_string(u32(4)));
  const std::uint8_t code = bytes[8];
  if (code > 1) throw ParseError("unknown dtype code " + std::to_string(code));
  const DType dtype = static_cast<DType>(code);
  const std::size_t rank = bytes[9];
  std::size_t pos = 10;
  if (bytes.size() < pos + 4 * rank) throw ParseError("truncated tensor header");
  std::vector<std::int64_t> dims;
  for (std::size_t k = 0; k < rank; ++k, pos += 4) dims.push_back(u32(pos));
  const int width = dtype_bits(dtype) / 8;
  const auto n = Tensor::count(dims);
  if (bytes.size() != pos + static_cast<std::size_t>(n) * width) throw ParseError("tensor payload size mismatch");
  std::vector<std::int32_t> data(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k, pos += width) {
    if (width == 1) {
      data[k] = static_cast<std::int8_t>(bytes[pos]);
    } else {
      data[k] = static_cast<std::int32_t>(u32(pos));
    }
  }
  return Tensor(std::move(dims), dtype, std::move(data));
}

/*! \brief A raw byte image viewed as an i8 vector, for DRAM snapshots. */
inline Tensor bytes_to_tensor(const std::vector<std::uint8_t>& bytes) {
  std::vector<std::int32_t> data(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) data[i] = static_cast<std::int8_t>(bytes[i]);
  return Tensor({static_cast<std::int64_t>(bytes.size())}, DType::kI8, std::move(data));
}

inline std::vector<std::uint8_t> tensor_to_bytes(const Tensor& t) {
  if (t.dtype() != DType::kI8) throw ShapeError("byte images must be i8 tensors");
  std::vector<std::uint8_t> out(static_cast<std::size_t>(t.size()));
  for (std::int64_t i = 0; i < t.size(); ++i) out[i] = static_cast<std::uint8_t>(t[i]);
  return out;
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace vta
