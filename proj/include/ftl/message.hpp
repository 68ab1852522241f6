#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ftl/layers.hpp"

namespace ftl {

inline constexpr char kMessageMagic[4] = {'F', 'T', 'L', 'M'};
inline constexpr std::uint16_t kMessageSchemaVersion = 1;

/// Shape-tagged flat array of doubles.
struct Tensor {
  std::vector<std::uint32_t> shape;
  std::vector<double> values;

  /// Product of the shape entries.
  std::size_t element_count() const;
  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

enum class Direction : std::uint8_t { kBroadcast = 0, kUpload = 1 };

/// Common-space samples of one class of one client, as a tensor of shape
/// n × d × d. This is the only per-client feature data that crosses the
/// client boundary; raw covariances and BiMap weights never do.
struct DomainBlock {
  std::uint32_t client_id = 0;
  std::uint32_t label = 0;
  Tensor samples;

  friend bool operator==(const DomainBlock&, const DomainBlock&) = default;
};

/// One server→client or client→server transfer within a round.
struct RoundMessage {
  Direction direction = Direction::kBroadcast;
  std::uint64_t round = 0;
  std::uint32_t client_id = 0;       // sender for uploads; 0 for broadcasts
  std::vector<Tensor> shared;        // shared classifier: weight, then bias
  std::vector<DomainBlock> domain;   // present iff the domain flag is set

  bool has_domain_payload() const noexcept { return !domain.empty(); }

  /// Throws FormatError unless every tensor's payload matches its shape.
  void validate() const;

  friend bool operator==(const RoundMessage&, const RoundMessage&) = default;
};

// Wire format, all integers and floats little-endian:
//   "FTLM" | u16 version | u8 direction | u8 flags (bit 0: domain payload)
//   u64 round | u32 client id | u32 tensor count | tensors...
//   [flags & 1] u32 block count | (u32 client id | u32 label | tensor)...
// tensor := u32 rank | u32 dims[rank] | f64 values[prod(dims)]
void write_message(const RoundMessage& msg, std::ostream& os);
RoundMessage read_message(std::istream& is);
std::string serialize(const RoundMessage& msg);
RoundMessage deserialize(const std::string& bytes);

void save_message(const RoundMessage& msg, const std::filesystem::path& path);
RoundMessage load_message(const std::filesystem::path& path);

/// [weight (n_out × n_in), bias (n_out)].
std::vector<Tensor> shared_tensors(const DenseLayer& layer);
/// Overwrites `layer` from shared_tensors output; shapes must match.
void assign_shared(const std::vector<Tensor>& tensors, DenseLayer& layer);

Tensor pack_samples(const std::vector<SpdMatrix>& samples, std::size_t dim);
std::vector<SpdMatrix> unpack_samples(const Tensor& tensor);

}  // namespace ftl
