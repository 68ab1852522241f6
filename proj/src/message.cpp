#include "ftl/message.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ftl/binary_io.hpp"
#include "ftl/error.hpp"

namespace ftl {
namespace {

constexpr std::uint8_t kDomainFlag = 0x01;
// Guards allocations against corrupt headers.
constexpr std::uint32_t kMaxRank = 8;
constexpr std::size_t kMaxElements = std::size_t{1} << 32;

void validate_tensor(const Tensor& t, const std::string& what) {
  if (t.shape.empty()) throw FormatError(what + ": rank 0 tensor");
  if (t.values.size() != t.element_count()) {
    throw FormatError(what + ": payload has " + std::to_string(t.values.size()) +
                      " values but shape declares " + std::to_string(t.element_count()));
  }
}

void write_tensor(std::ostream& os, const Tensor& t) {
  binary::write_le(os, static_cast<std::uint32_t>(t.shape.size()));
  for (auto d : t.shape) binary::write_le(os, d);
  for (double v : t.values) binary::write_f64(os, v);
}

template <class T>
void read_or_throw(std::istream& is, T& value, const char* what) {
  const auto offset = static_cast<long long>(is.tellg());
  if (!binary::read_le(is, value)) {
    throw FormatError(std::string("round message truncated reading ") + what +
                      " at byte offset " + std::to_string(offset));
  }
}

Tensor read_tensor(std::istream& is) {
  Tensor t;
  std::uint32_t rank = 0;
  read_or_throw(is, rank, "tensor rank");
  if (rank == 0 || rank > kMaxRank) {
    throw FormatError("round message: tensor rank " + std::to_string(rank) + " out of range");
  }
  t.shape.resize(rank);
  std::size_t count = 1;
  for (auto& d : t.shape) {
    read_or_throw(is, d, "tensor dimension");
    count *= d;
    if (count > kMaxElements) throw FormatError("round message: tensor too large");
  }
  t.values.resize(count);
  for (double& v : t.values) {
    if (!binary::read_f64(is, v)) throw FormatError("round message truncated in tensor payload");
  }
  return t;
}

}  // namespace

std::size_t Tensor::element_count() const {
  std::size_t n = shape.empty() ? 0 : 1;
  for (auto d : shape) n *= d;
  return n;
}

void RoundMessage::validate() const {
  if (direction != Direction::kBroadcast && direction != Direction::kUpload) {
    throw FormatError("round message: unknown direction");
  }
  for (std::size_t i = 0; i < shared.size(); ++i)
    validate_tensor(shared[i], "shared tensor " + std::to_string(i));
  for (const auto& block : domain) {
    validate_tensor(block.samples, "domain block for client " + std::to_string(block.client_id));
    if (block.samples.shape.size() != 3 || block.samples.shape[1] != block.samples.shape[2]) {
      throw FormatError("domain block must have shape n x d x d");
    }
  }
}

void write_message(const RoundMessage& msg, std::ostream& os) {
  msg.validate();
  os.write(kMessageMagic, sizeof(kMessageMagic));
  binary::write_le(os, kMessageSchemaVersion);
  binary::write_le(os, static_cast<std::uint8_t>(msg.direction));
  binary::write_le(os, static_cast<std::uint8_t>(msg.has_domain_payload() ? kDomainFlag : 0));
  binary::write_le(os, msg.round);
  binary::write_le(os, msg.client_id);
  binary::write_le(os, static_cast<std::uint32_t>(msg.shared.size()));
  for (const auto& t : msg.shared) write_tensor(os, t);
  if (msg.has_domain_payload()) {
    binary::write_le(os, static_cast<std::uint32_t>(msg.domain.size()));
    for (const auto& block : msg.domain) {
      binary::write_le(os, block.client_id);
      binary::write_le(os, block.label);
      write_tensor(os, block.samples);
    }
  }
  if (!os) throw std::runtime_error("write_message: write failed");
}

RoundMessage read_message(std::istream& is) {
  char magic[4];
  if (!is.read(magic, sizeof(magic)) || !std::equal(magic, magic + 4, kMessageMagic)) {
    throw FormatError("round message: bad magic (expected FTLM)");
  }
  std::uint16_t version = 0;
  read_or_throw(is, version, "schema version");
  if (version != kMessageSchemaVersion) {
    throw FormatError("round message: unsupported schema version " + std::to_string(version));
  }
  std::uint8_t direction = 0;
  std::uint8_t flags = 0;
  read_or_throw(is, direction, "direction");
  read_or_throw(is, flags, "flags");
  if (direction > 1) throw FormatError("round message: unknown direction " + std::to_string(direction));
  if ((flags & ~kDomainFlag) != 0) throw FormatError("round message: unknown flag bits");

  RoundMessage msg;
  msg.direction = static_cast<Direction>(direction);
  read_or_throw(is, msg.round, "round");
  read_or_throw(is, msg.client_id, "client id");
  std::uint32_t tensors = 0;
  read_or_throw(is, tensors, "tensor count");
  for (std::uint32_t i = 0; i < tensors; ++i) msg.shared.push_back(read_tensor(is));
  if (flags & kDomainFlag) {
    std::uint32_t blocks = 0;
    read_or_throw(is, blocks, "domain block count");
    if (blocks == 0) throw FormatError("round message: domain flag set with no blocks");
    for (std::uint32_t i = 0; i < blocks; ++i) {
      DomainBlock block;
      read_or_throw(is, block.client_id, "domain client id");
      read_or_throw(is, block.label, "domain label");
      block.samples = read_tensor(is);
      msg.domain.push_back(std::move(block));
    }
  }
  msg.validate();
  return msg;
}

std::string serialize(const RoundMessage& msg) {
  std::ostringstream os(std::ios::binary);
  write_message(msg, os);
  return os.str();
}

RoundMessage deserialize(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  RoundMessage msg = read_message(is);
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("round message: trailing bytes");
  return msg;
}

void save_message(const RoundMessage& msg, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_message(msg, os);
}

RoundMessage load_message(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_message(is);
}

std::vector<Tensor> shared_tensors(const DenseLayer& layer) {
  const auto w = layer.weight.data();
  return {
      Tensor{{static_cast<std::uint32_t>(layer.out_dim()), static_cast<std::uint32_t>(layer.in_dim())},
             std::vector<double>(w.begin(), w.end())},
      Tensor{{static_cast<std::uint32_t>(layer.bias.size())}, layer.bias},
  };
}

void assign_shared(const std::vector<Tensor>& tensors, DenseLayer& layer) {
  const auto expected = shared_tensors(layer);
  if (tensors.size() != expected.size() || !tensors[0].same_shape(expected[0]) ||
      !tensors[1].same_shape(expected[1])) {
    throw std::invalid_argument("assign_shared: payload shapes do not match the shared classifier");
  }
  std::copy(tensors[0].values.begin(), tensors[0].values.end(), layer.weight.data().begin());
  layer.bias = tensors[1].values;
}

Tensor pack_samples(const std::vector<SpdMatrix>& samples, std::size_t dim) {
  Tensor t{{static_cast<std::uint32_t>(samples.size()), static_cast<std::uint32_t>(dim),
            static_cast<std::uint32_t>(dim)},
           {}};
  t.values.reserve(samples.size() * dim * dim);
  for (const auto& s : samples) {
    if (s.dim() != dim) throw std::invalid_argument("pack_samples: dimension mismatch");
    const auto d = s.matrix().data();
    t.values.insert(t.values.end(), d.begin(), d.end());
  }
  return t;
}

std::vector<SpdMatrix> unpack_samples(const Tensor& tensor) {
  if (tensor.shape.size() != 3 || tensor.shape[1] != tensor.shape[2]) {
    throw FormatError("unpack_samples: expected an n x d x d tensor");
  }
  const std::size_t n = tensor.shape[0];
  const std::size_t d = tensor.shape[1];
  std::vector<SpdMatrix> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto first = tensor.values.begin() + static_cast<std::ptrdiff_t>(i * d * d);
    out.emplace_back(Matrix(d, d, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(d * d))));
  }
  return out;
}

}  // namespace ftl
