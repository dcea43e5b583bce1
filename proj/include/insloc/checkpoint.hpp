/*
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

// Binary weight files:
//   "CLOC1"
//   repeated until EOF:
//     u64 name length, UTF-8 name bytes
//     u64 rank, rank x u64 extents
//     numel x f64 values
// All integers and reals are little-endian.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "insloc/tensor.hpp"

namespace insloc {

struct NamedTensor {
  std::string name;
  Tensor value;

  bool operator==(const NamedTensor&) const = default;
};

std::string encode_checkpoint(std::span<const NamedTensor> entries);
std::vector<NamedTensor> decode_checkpoint(std::string_view bytes);

/// Writes via a temporary file and rename so readers never see partial files.
void save_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> entries);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

/// Writes `contents` to `path` through a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace insloc
