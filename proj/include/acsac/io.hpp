#pragma once
// Binary artifact formats (datasets, checkpoints) and atomic file helpers.
// Both formats are little-endian with a 4-byte magic, a u32 version, a
// length-prefixed JSON header, and raw f32 payload blocks; both round-trip
// bit-exactly.
#include "acsac/dataset.hpp"
#include "acsac/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace acsac {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Writes to a temp file in the target directory and renames into place.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

std::string encode_dataset(const Dataset& ds);
Dataset decode_dataset(const std::string& bytes);
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Checkpoint: arbitrary JSON header plus named parameter blocks in
// declaration order. Loading verifies names and shapes and fills values.
std::string encode_checkpoint(const std::string& header_json,
                              const std::vector<const Param<float>*>& blocks);
// Header JSON alone, without touching the payload; lets a reader discover the
// embedded config before it can construct the parameter blocks.
std::string checkpoint_header_json(const std::string& bytes);
std::string load_checkpoint_into(const std::string& bytes,
                                 const std::vector<Param<float>*>& blocks);
void save_checkpoint(const std::string& path, const std::string& header_json,
                     const std::vector<const Param<float>*>& blocks);
std::string load_checkpoint(const std::string& path,
                            const std::vector<Param<float>*>& blocks);

}  // namespace acsac
