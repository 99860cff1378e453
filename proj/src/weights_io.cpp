#include "topoforge/weights_io.hpp"

#include <algorithm>
#include <cstring>

#include "topoforge/codec.hpp"
#include "topoforge/error.hpp"

namespace topoforge::nn {

namespace {

constexpr std::size_t kFooter = 32;

void put_triple(ByteWriter& w, const Triple& t) {
  for (int v : t) w.u32(static_cast<std::uint32_t>(v));
}

Triple get_triple(ByteReader& r) {
  Triple t{};
  for (int& v : t) v = static_cast<int>(r.u32());
  return t;
}

void put_blob(ByteWriter& w, const Tensor& t) {
  w.u64(t.size());
  for (double v : t.storage()) w.f32(static_cast<float>(v));
}

Tensor get_blob(ByteReader& r, std::vector<std::size_t> shape) {
  const std::uint64_t n = r.u64();
  if (n != shape_size(shape)) fail(ErrorCode::FormatError, "parameter blob size does not match its layer");
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = r.f32();
  return t;
}

}  // namespace

std::vector<std::uint8_t> serialize_weights(const Sequential& net, const std::string& metadata) {
  ByteWriter w;
  w.text("TWGT");
  w.u32(kWeightsVersion);
  w.u32(static_cast<std::uint32_t>(net.layers().size()));
  for (const Layer& l : net.layers()) {
    const LayerSpec& s = l.spec;
    w.u8(static_cast<std::uint8_t>(s.kind));
    w.u8(static_cast<std::uint8_t>(s.rank));
    w.u32(static_cast<std::uint32_t>(s.in_channels));
    w.u32(static_cast<std::uint32_t>(s.out_channels));
    put_triple(w, s.kernel);
    put_triple(w, s.stride);
    put_triple(w, s.padding);
    w.u8(l.frozen ? 1 : 0);
    if (s.has_parameters()) {
      put_blob(w, l.weight);
      put_blob(w, l.bias);
    }
  }
  w.u64(metadata.size());
  w.text(metadata);
  const Sha256Digest digest = sha256(w.bytes());
  w.raw(digest);
  return std::move(w.bytes());
}

WeightFile deserialize_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 + kFooter) fail(ErrorCode::FormatError, "weight file is truncated");
  const auto payload = bytes.first(bytes.size() - kFooter);
  const Sha256Digest digest = sha256(payload);
  if (!std::equal(digest.begin(), digest.end(), bytes.end() - kFooter)) {
    fail(ErrorCode::ChecksumMismatch, "weight file checksum does not match its payload");
  }
  ByteReader r(payload);
  if (r.text(4) != "TWGT") fail(ErrorCode::FormatError, "not a TWGT weight file");
  const std::uint32_t version = r.u32();
  if (version != kWeightsVersion) fail(ErrorCode::FormatError, "unsupported weight version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  std::vector<Layer> layers;
  layers.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Layer l;
    const std::uint8_t kind = r.u8();
    if (kind > static_cast<std::uint8_t>(LayerKind::ReLU)) fail(ErrorCode::FormatError, "unknown layer kind");
    l.spec.kind = static_cast<LayerKind>(kind);
    l.spec.rank = r.u8();
    l.spec.in_channels = static_cast<int>(r.u32());
    l.spec.out_channels = static_cast<int>(r.u32());
    l.spec.kernel = get_triple(r);
    l.spec.stride = get_triple(r);
    l.spec.padding = get_triple(r);
    l.frozen = r.u8() != 0;
    try {
      l.spec.validate();
    } catch (const Error& e) {
      fail(ErrorCode::FormatError, std::string("invalid layer spec: ") + e.what());
    }
    if (l.spec.has_parameters()) {
      l.weight = get_blob(r, l.spec.weight_shape());
      l.bias = get_blob(r, {static_cast<std::size_t>(l.spec.out_channels)});
    }
    layers.push_back(std::move(l));
  }
  WeightFile out{Sequential(std::move(layers)), {}};
  const std::uint64_t meta = r.u64();
  out.metadata = r.text(meta);
  if (r.remaining() != 0) fail(ErrorCode::FormatError, "trailing bytes after the metadata block");
  return out;
}

void save_weights(const std::string& path, const Sequential& net, const std::string& metadata) {
  write_file(path, serialize_weights(net, metadata));
}

WeightFile load_weights(const std::string& path) { return deserialize_weights(read_file(path)); }

void round_to_f32(Sequential& net) {
  for (Layer& l : net.layers()) {
    for (double& v : l.weight.storage()) v = static_cast<float>(v);
    for (double& v : l.bias.storage()) v = static_cast<float>(v);
  }
}

std::string parameter_hash(const Sequential& net, std::size_t first, std::size_t last) {
  last = std::min(last, net.layers().size());
  ByteWriter w;
  for (std::size_t i = first; i < last; ++i) {
    const Layer& l = net.layers()[i];
    for (double v : l.weight.storage()) w.f32(static_cast<float>(v));
    for (double v : l.bias.storage()) w.f32(static_cast<float>(v));
  }
  return sha256_hex(std::span<const std::uint8_t>(w.bytes()));
}

}  // namespace topoforge::nn
