#include "phasedfl/metrics.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include "phasedfl/errors.hpp"
#include "phasedfl/sparsify.hpp"

#include "json.hpp"

namespace phasedfl {

double speedup(std::size_t total, std::size_t nonzero) {
  if (nonzero == 0) {
    throw ValidationError("speed-up undefined: model has no nonzero parameters");
  }
  if (nonzero > total) {
    throw ValidationError("nonzero count " + std::to_string(nonzero) + " exceeds total " +
                          std::to_string(total));
  }
  return static_cast<double>(total) / static_cast<double>(nonzero);
}

double space_saving(std::size_t dense_bytes, std::size_t sparse_bytes) {
  if (dense_bytes == 0) throw ValidationError("space-saving undefined: dense size is 0");
  return 1.0 - static_cast<double>(sparse_bytes) / static_cast<double>(dense_bytes);
}

SizeReport make_size_report(std::size_t dense_bytes, std::size_t sparse_bytes) {
  return {dense_bytes, sparse_bytes, space_saving(dense_bytes, sparse_bytes)};
}

// ---------------------------------------------------------------------------
// model serialization
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint8_t kDenseTag = 0;
constexpr std::uint8_t kSparseTag = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

struct Reader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;

  std::uint32_t u32() {
    if (pos + 4 > bytes.size()) throw IngestError("model bytes: truncated at offset " + std::to_string(pos));
    std::uint32_t v = static_cast<std::uint32_t>(bytes[pos]) |
                      (static_cast<std::uint32_t>(bytes[pos + 1]) << 8) |
                      (static_cast<std::uint32_t>(bytes[pos + 2]) << 16) |
                      (static_cast<std::uint32_t>(bytes[pos + 3]) << 24);
    pos += 4;
    return v;
  }

  std::uint8_t u8() {
    if (pos + 1 > bytes.size()) throw IngestError("model bytes: truncated at offset " + std::to_string(pos));
    return bytes[pos++];
  }

  double f64() {
    if (pos + 8 > bytes.size()) throw IngestError("model bytes: truncated at offset " + std::to_string(pos));
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[pos + static_cast<std::size_t>(i)]) << (8 * i);
    pos += 8;
    return std::bit_cast<double>(bits);
  }

  std::string str(std::size_t len) {
    if (pos + len > bytes.size()) throw IngestError("model bytes: truncated at offset " + std::to_string(pos));
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), len);
    pos += len;
    return s;
  }
};

void serialize_tensor(std::vector<std::uint8_t>& out, const std::string& name, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
  for (int d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));

  std::size_t zeros = t.size() - nonzero_count(t);
  bool sparse = t.size() > 0 && static_cast<double>(zeros) / static_cast<double>(t.size()) > 0.5;
  out.push_back(sparse ? kSparseTag : kDenseTag);
  if (sparse) {
    put_u32(out, static_cast<std::uint32_t>(t.size() - zeros));
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] != 0.0) put_u32(out, static_cast<std::uint32_t>(i));
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] != 0.0) put_f64(out, t[i]);
    }
  } else {
    for (double v : t.values) put_f64(out, v);
  }
}

Tensor deserialize_tensor(Reader& r) {
  std::uint32_t rank = r.u32();
  std::vector<int> shape;
  shape.reserve(rank);
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int>(r.u32()));
  Tensor t = Tensor::zeros(shape);

  std::uint8_t tag = r.u8();
  if (tag == kDenseTag) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = r.f64();
  } else if (tag == kSparseTag) {
    std::uint32_t nnz = r.u32();
    if (nnz > t.size()) throw IngestError("model bytes: nonzero count exceeds tensor size");
    std::vector<std::uint32_t> idx(nnz);
    for (auto& v : idx) v = r.u32();
    for (std::uint32_t i = 0; i < nnz; ++i) {
      if (idx[i] >= t.size()) throw IngestError("model bytes: sparse index out of range");
      t[idx[i]] = r.f64();
    }
  } else {
    throw IngestError("model bytes: unknown encoding tag " + std::to_string(tag));
  }
  return t;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const ModelParams& params, const PruneMask* mask) {
  const ModelParams* source = &params;
  ModelParams masked;
  if (mask != nullptr) {
    masked = apply_mask(params, *mask);
    source = &masked;
  }

  std::vector<std::uint8_t> out;
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(source->tensor_count()));
  for (std::size_t i = 0; i < source->tensor_count(); ++i) {
    serialize_tensor(out, source->tensor_name(i), source->tensor_at(i));
  }
  return out;
}

ModelParams deserialize_model(std::span<const std::uint8_t> bytes) {
  Reader r{bytes};
  std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw IngestError("model bytes: unsupported format version " + std::to_string(version));
  }
  std::uint32_t count = r.u32();
  if (count % 2 != 0) throw IngestError("model bytes: odd tensor record count");

  ModelParams params;
  for (std::uint32_t i = 0; i < count; i += 2) {
    std::string wname = r.str(r.u32());
    Tensor weights = deserialize_tensor(r);
    std::string bname = r.str(r.u32());
    Tensor bias = deserialize_tensor(r);

    auto strip = [](const std::string& s, const char* suffix) {
      std::string suf(suffix);
      if (s.size() < suf.size() || s.compare(s.size() - suf.size(), suf.size(), suf) != 0) {
        throw IngestError("model bytes: unexpected tensor name '" + s + "'");
      }
      return s.substr(0, s.size() - suf.size());
    };
    std::string layer = strip(wname, ".weights");
    if (strip(bname, ".bias") != layer) {
      throw IngestError("model bytes: bias '" + bname + "' does not pair with '" + wname + "'");
    }
    params.layers.push_back({layer, std::move(weights), std::move(bias)});
  }
  if (r.pos != bytes.size()) {
    throw IngestError("model bytes: " + std::to_string(bytes.size() - r.pos) + " trailing bytes");
  }
  return params;
}

// ---------------------------------------------------------------------------
// lossless codec
// ---------------------------------------------------------------------------

namespace {
constexpr int kDeflateLevel = 6;
}

std::vector<std::uint8_t> deflate_bytes(std::span<const std::uint8_t> raw) {
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> out(bound);
  int rc = compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                     kDeflateLevel);
  if (rc != Z_OK) throw Error("deflate failed with zlib status " + std::to_string(rc));
  out.resize(bound);
  return out;
}

std::vector<std::uint8_t> inflate_bytes(std::span<const std::uint8_t> compressed) {
  z_stream strm{};
  if (inflateInit(&strm) != Z_OK) throw Error("inflate init failed");

  std::vector<std::uint8_t> out;
  std::uint8_t chunk[16384];
  strm.next_in = const_cast<Bytef*>(compressed.data());
  strm.avail_in = static_cast<uInt>(compressed.size());
  int rc = Z_OK;
  do {
    strm.next_out = chunk;
    strm.avail_out = sizeof chunk;
    rc = inflate(&strm, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&strm);
      throw Error("inflate failed with zlib status " + std::to_string(rc));
    }
    out.insert(out.end(), chunk, chunk + (sizeof chunk - strm.avail_out));
  } while (rc != Z_STREAM_END);
  inflateEnd(&strm);
  return out;
}

std::size_t compressed_size(std::span<const std::uint8_t> raw) {
  return deflate_bytes(raw).size();
}

// ---------------------------------------------------------------------------
// record emission
// ---------------------------------------------------------------------------

void emit(std::span<const RoundRecord> records, EmitFormat format,
          const std::filesystem::path& path) {
  if (records.empty()) throw ValidationError("emit: no records");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");

  if (format == EmitFormat::Csv) {
    out << "round,phase,participants,accuracy,sparsity,nonzero,total,speedup,"
           "compressed_bytes,wall_seconds\n";
    char line[256];
    for (const RoundRecord& r : records) {
      std::snprintf(line, sizeof line, "%d,%d,%d,%.6f,%.6f,%zu,%zu,%.6f,%zu,%.3f\n", r.round,
                    r.phase, r.participants, r.accuracy, r.sparsity, r.nonzero, r.total,
                    r.speedup, r.compressed_bytes, r.wall_seconds);
      out << line;
    }
  } else {
    for (const RoundRecord& r : records) {
      nlohmann::ordered_json j{
          {"round", r.round},
          {"phase", r.phase},
          {"participants", r.participants},
          {"accuracy", r.accuracy},
          {"sparsity", r.sparsity},
          {"nonzero", r.nonzero},
          {"total", r.total},
          {"speedup", r.speedup},
          {"compressed_bytes", r.compressed_bytes},
          {"wall_seconds", r.wall_seconds},
      };
      out << j.dump() << "\n";
    }
  }
  out.flush();
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

}  // namespace phasedfl
