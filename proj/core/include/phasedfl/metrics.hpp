#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "phasedfl/mask.hpp"
#include "phasedfl/nn.hpp"

namespace phasedfl {

/// One metrics row per communication round.
struct RoundRecord {
  int round = 0;
  int phase = 0;
  int participants = 0;
  double accuracy = 0.0;
  double sparsity = 0.0;
  std::size_t nonzero = 0;
  std::size_t total = 0;
  double speedup = 1.0;
  std::size_t compressed_bytes = 0;
  double wall_seconds = 0.0;
};

struct SizeReport {
  std::size_t dense_compressed_bytes = 0;
  std::size_t sparse_compressed_bytes = 0;
  double space_saving = 0.0;  // 1 - sparse/dense
};

/// FLOP-reduction proxy: total / nonzero parameter count.
double speedup(std::size_t total, std::size_t nonzero);

/// 1 - sparse_bytes / dense_bytes.
double space_saving(std::size_t dense_bytes, std::size_t sparse_bytes);

SizeReport make_size_report(std::size_t dense_bytes, std::size_t sparse_bytes);

/// Deterministic binary model layout. Header: u32 version, u32 record count.
/// Per parameter tensor: u32 name length, name bytes, u32 rank, u32 dims,
/// u8 encoding tag (0 dense, 1 sparse). Dense payload: raw little-endian f64.
/// Sparse payload (picked when the zero fraction exceeds 0.5): u32 nonzero
/// count, ascending u32 flat indices, then f64 values. All integers
/// little-endian.
std::vector<std::uint8_t> serialize_model(const ModelParams& params,
                                          const PruneMask* mask = nullptr);

ModelParams deserialize_model(std::span<const std::uint8_t> bytes);

/// DEFLATE at fixed level 6; decompression recovers the input exactly.
std::vector<std::uint8_t> deflate_bytes(std::span<const std::uint8_t> raw);
std::vector<std::uint8_t> inflate_bytes(std::span<const std::uint8_t> compressed);

/// Byte count of the input after the lossless codec.
std::size_t compressed_size(std::span<const std::uint8_t> raw);

enum class EmitFormat { Csv, JsonLines };

/// Writes records to path; CSV columns in fixed order (round, phase,
/// participants, accuracy, sparsity, nonzero, total, speedup,
/// compressed_bytes, wall_seconds), UTF-8, LF endings.
void emit(std::span<const RoundRecord> records, EmitFormat format,
          const std::filesystem::path& path);

}  // namespace phasedfl
