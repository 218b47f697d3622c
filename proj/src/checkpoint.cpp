#include "neptune/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "neptune/errors.hpp"

namespace neptune {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

std::uint32_t crc32(const void* data, std::size_t len) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(data);
  while (len > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(len, 1u << 30));
    c = ::crc32(c, p, chunk);
    p += chunk;
    len -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

namespace {

constexpr char kMagic[4] = {'N', 'P', 'T', 'N'};

class Writer {
 public:
  template <class T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void reals(std::span<const Real> v) { bytes(v.data(), v.size() * sizeof(Real)); }
  std::string take() { return std::move(out_); }
  const std::string& str() const { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  template <class T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  void reals(std::span<Real> v) {
    std::memcpy(v.data(), take(v.size() * sizeof(Real)), v.size() * sizeof(Real));
  }
  std::string_view str(std::size_t n) { return {take(n), n}; }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  const char* take(std::size_t n) {
    if (n > remaining()) throw CheckpointTruncatedError("checkpoint is truncated");
    const char* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::string_view in_;
  std::size_t pos_ = 0;
};

void write_bn(Writer& w, const BatchNormState& bn) {
  w.reals(bn.scale.span());
  w.reals(bn.shift.span());
  w.reals(bn.running_mean.span());
  w.reals(bn.running_var.span());
}

void read_bn(Reader& r, BatchNormState& bn) {
  r.reals(bn.scale.span());
  r.reals(bn.shift.span());
  r.reals(bn.running_mean.span());
  r.reals(bn.running_var.span());
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  const ModelParams& p = c.params;
  p.validate();
  Writer w;
  w.bytes(kMagic, 4);
  w.put<std::uint16_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.entity_dim()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.relation_dim()));
  w.put<std::uint64_t>(p.num_entities());
  w.put<std::uint64_t>(p.num_relations());
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.config.activation));
  w.put<double>(p.bn_input.momentum);
  w.put<double>(p.bn_input.epsilon);
  w.put<std::uint64_t>(c.entity_fingerprint);
  w.put<std::uint64_t>(c.relation_fingerprint);
  const std::string cfg = to_key_values(c.config);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.size()));
  w.bytes(cfg.data(), cfg.size());

  w.reals(p.entity_emb.span());
  w.reals(p.relation_emb.span());
  w.reals(p.core.span());
  write_bn(w, p.bn_input);
  write_bn(w, p.bn_hidden);

  const auto groups = trainable_groups(p);
  w.put<std::uint64_t>(c.adam.step);
  for (std::size_t g = 0; g < kParamGroups; ++g) {
    require_dim("checkpoint adam first moment", groups[g].size(), c.adam.first[g].size());
    w.reals(c.adam.first[g]);
  }
  for (std::size_t g = 0; g < kParamGroups; ++g) {
    require_dim("checkpoint adam second moment", groups[g].size(), c.adam.second[g].size());
    w.reals(c.adam.second[g]);
  }
  w.put<std::uint32_t>(crc32(w.str().data(), w.str().size()));
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointFormatError("not a checkpoint file (bad magic bytes)");
  }
  Reader r(std::string_view(bytes).substr(4));
  const auto version = r.get<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("unsupported checkpoint version " + std::to_string(version) +
                                 " (expected " + std::to_string(kCheckpointVersion) + ")");
  }

  const std::size_t d = r.get<std::uint32_t>();
  const std::size_t k = r.get<std::uint32_t>();
  const auto ne = r.get<std::uint64_t>();
  const auto nr = r.get<std::uint64_t>();
  const auto act = r.get<std::uint8_t>();
  const auto momentum = r.get<double>();
  const auto epsilon = r.get<double>();
  if (d == 0 || k == 0 || ne == 0 || nr == 0 || act > 2 || d > 65536 || k > 65536 ||
      ne > (1ULL << 32) || nr > (1ULL << 32)) {
    throw CheckpointFormatError("checkpoint header holds invalid dimensions");
  }
  Checkpoint c;
  c.entity_fingerprint = r.get<std::uint64_t>();
  c.relation_fingerprint = r.get<std::uint64_t>();
  const auto cfg_len = r.get<std::uint32_t>();
  // Size check before any large allocation.
  const std::uint64_t params = ne * d + nr * k + d * k * d + 8 * d;
  const std::uint64_t trainable = ne * d + nr * k + d * k * d + 4 * d;
  const std::uint64_t expected = cfg_len + 8 * (params + 2 * trainable) + 8 + 4;
  if (expected > r.remaining()) throw CheckpointTruncatedError("checkpoint is truncated");
  if (expected < r.remaining()) {
    throw CheckpointFormatError("checkpoint has " + std::to_string(r.remaining() - expected) +
                                " trailing bytes");
  }
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  if (crc32(bytes.data(), bytes.size() - 4) != stored_crc) {
    throw CheckpointFormatError("checkpoint checksum mismatch");
  }

  try {
    c.config = parse_key_values(r.str(cfg_len));
  } catch (const ContractViolation& e) {
    throw CheckpointFormatError(std::string("checkpoint config block: ") + e.what());
  }
  c.config.activation = static_cast<Activation>(act);

  ModelParams& p = c.params;
  p.entity_emb = Matrix(ne, d);
  p.relation_emb = Matrix(nr, k);
  p.core = Tensor3(d, k, d);
  p.bn_input = BatchNormState(d);
  p.bn_hidden = BatchNormState(d);
  for (auto* bn : {&p.bn_input, &p.bn_hidden}) {
    bn->momentum = momentum;
    bn->epsilon = epsilon;
  }
  r.reals(p.entity_emb.span());
  r.reals(p.relation_emb.span());
  r.reals(p.core.span());
  read_bn(r, p.bn_input);
  read_bn(r, p.bn_hidden);

  c.adam = AdamState::zeros_like(p);
  c.adam.step = r.get<std::uint64_t>();
  for (auto& m : c.adam.first) r.reals(m);
  for (auto& v : c.adam.second) r.reals(v);
  if (r.remaining() != 4) {
    throw CheckpointFormatError("checkpoint has " + std::to_string(r.remaining() - 4) +
                                " unexpected trailing bytes");
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const std::string bytes = serialize_checkpoint(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

Checkpoint make_checkpoint(const ModelParams& p, const AdamState& s, const TrainConfig& cfg,
                           const KnowledgeGraph* g) {
  Checkpoint c{p, s, cfg, 0, 0};
  if (g) {
    c.entity_fingerprint = g->entities().fingerprint();
    c.relation_fingerprint = g->relations().fingerprint();
  }
  return c;
}

void check_compatible(const Checkpoint& c, const KnowledgeGraph& g) {
  if (c.params.num_entities() != g.num_entities() ||
      c.params.num_relations() != g.num_relations()) {
    throw CheckpointMismatchError(
        "checkpoint has |E|=" + std::to_string(c.params.num_entities()) +
        " |R|=" + std::to_string(c.params.num_relations()) + " but the dataset has |E|=" +
        std::to_string(g.num_entities()) + " |R|=" + std::to_string(g.num_relations()));
  }
  if ((c.entity_fingerprint && c.entity_fingerprint != g.entities().fingerprint()) ||
      (c.relation_fingerprint && c.relation_fingerprint != g.relations().fingerprint())) {
    throw CheckpointMismatchError("checkpoint vocabulary does not match the dataset");
  }
}

}  // namespace neptune
