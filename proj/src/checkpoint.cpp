#include "neuroverb/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace neuroverb {

namespace {

constexpr char kMagic[8] = {'N', 'V', 'R', 'B', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    uint(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<unsigned char>& buffer() { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  Reader(const unsigned char* data, std::size_t size) : p_(data), end_(data + size) {}

  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end_ - p_) < n) throw IntegrityError("checkpoint: unexpected end of data");
  }
  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(p_[i]) << (8 * i));
    p_ += sizeof(U);
    return v;
  }
  std::uint8_t u8() { return uint<std::uint8_t>(); }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string str() {
    const auto n = uint<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(p_), n);
    p_ += n;
    return s;
  }
  const unsigned char* take(std::size_t n) {
    need(n);
    const auto* q = p_;
    p_ += n;
    return q;
  }
  std::size_t remaining() const { return static_cast<std::size_t>(end_ - p_); }

 private:
  const unsigned char* p_;
  const unsigned char* end_;
};

std::size_t dtype_bytes(DType d) { return d == DType::f32 ? 4 : 8; }

std::uint32_t crc_of(const unsigned char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in pieces.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::vector<const TensorRecord*> all;
  for (const auto& r : ck.params) all.push_back(&r);
  if (ck.optimizer.present) {
    for (const auto& r : ck.optimizer.m) all.push_back(&r);
    for (const auto& r : ck.optimizer.v) all.push_back(&r);
  }

  Writer blob;
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.uint(Checkpoint::kVersion);
  w.str(format_model_config(ck.config));
  w.str(ck.phase);
  w.uint(ck.epoch);
  w.f64(ck.best_val);
  w.u8(ck.optimizer.present ? 1 : 0);
  if (ck.optimizer.present) {
    w.f64(ck.optimizer.config.lr);
    w.f64(ck.optimizer.config.beta1);
    w.f64(ck.optimizer.config.beta2);
    w.f64(ck.optimizer.config.eps);
    w.uint(ck.optimizer.step);
  }
  w.uint(static_cast<std::uint32_t>(all.size()));
  for (const auto* r : all) {
    if (r->values.size() != ad::numel(r->shape)) {
      throw StateError("save_checkpoint: tensor '" + r->name + "' size does not match its shape");
    }
    w.str(r->name);
    w.u8(static_cast<std::uint8_t>(r->dtype));
    w.uint(static_cast<std::uint32_t>(r->shape.size()));
    for (auto d : r->shape) w.uint(static_cast<std::uint64_t>(d));
    w.uint(static_cast<std::uint64_t>(blob.buffer().size()));
    for (double v : r->values) {
      if (r->dtype == DType::f32) {
        blob.f32(static_cast<float>(v));
      } else {
        blob.f64(v);
      }
    }
  }
  w.uint(static_cast<std::uint64_t>(blob.buffer().size()));
  w.bytes(blob.buffer().data(), blob.buffer().size());
  w.uint(crc_of(w.buffer().data(), w.buffer().size()));

  // Write to a sibling file first so a failed write never clobbers a good checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw WriteError("cannot open checkpoint for writing: " + tmp.string());
    out.write(reinterpret_cast<const char*>(w.buffer().data()),
              static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw WriteError("failed writing checkpoint: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw WriteError("cannot move checkpoint into place: " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open checkpoint: " + path.string());
  const std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (data.size() < sizeof(kMagic) + 4 || std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IntegrityError("not a checkpoint file: " + path.string());
  }
  Reader head(data.data() + sizeof(kMagic), 4);
  const auto version = head.uint<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) + ", expected " +
                       std::to_string(Checkpoint::kVersion));
  }
  if (data.size() < sizeof(kMagic) + 8) throw IntegrityError("checkpoint truncated: " + path.string());
  const std::size_t body = data.size() - 4;
  Reader tail(data.data() + body, 4);
  if (tail.uint<std::uint32_t>() != crc_of(data.data(), body)) {
    throw IntegrityError("checkpoint checksum mismatch (corrupt or truncated): " + path.string());
  }

  Reader r(data.data() + sizeof(kMagic) + 4, body - sizeof(kMagic) - 4);
  Checkpoint ck;
  try {
    ck.config = parse_model_config(r.str());
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("checkpoint holds an invalid model config: ") + e.what());
  }
  ck.phase = r.str();
  ck.epoch = r.uint<std::uint64_t>();
  ck.best_val = r.f64();
  ck.optimizer.present = r.u8() != 0;
  if (ck.optimizer.present) {
    ck.optimizer.config.lr = r.f64();
    ck.optimizer.config.beta1 = r.f64();
    ck.optimizer.config.beta2 = r.f64();
    ck.optimizer.config.eps = r.f64();
    ck.optimizer.step = r.uint<std::uint64_t>();
  }
  const auto count = r.uint<std::uint32_t>();
  struct Entry {
    TensorRecord rec;
    std::uint64_t offset;
  };
  std::vector<Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.rec.name = r.str();
    const auto dt = r.u8();
    if (dt > 1) throw IntegrityError("checkpoint tensor '" + e.rec.name + "' has an unknown dtype");
    e.rec.dtype = static_cast<DType>(dt);
    const auto rank = r.uint<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) e.rec.shape.push_back(static_cast<std::size_t>(r.uint<std::uint64_t>()));
    e.offset = r.uint<std::uint64_t>();
    entries.push_back(std::move(e));
  }
  const auto blob_size = r.uint<std::uint64_t>();
  if (blob_size != r.remaining()) throw IntegrityError("checkpoint data section has the wrong size");
  const unsigned char* blob = r.take(static_cast<std::size_t>(blob_size));
  for (auto& e : entries) {
    const std::size_t n = ad::numel(e.rec.shape), width = dtype_bytes(e.rec.dtype);
    if (e.offset > blob_size || n * width > blob_size - e.offset) {
      throw IntegrityError("checkpoint tensor '" + e.rec.name + "' lies outside the data section");
    }
    Reader tr(blob + e.offset, n * width);
    e.rec.values.resize(n);
    for (std::size_t k = 0; k < n; ++k)
      e.rec.values[k] = e.rec.dtype == DType::f32 ? static_cast<double>(tr.f32()) : tr.f64();
  }

  std::size_t idx = 0;
  const std::size_t n_params = ck.optimizer.present ? count / 3 : count;
  if (ck.optimizer.present && count % 3 != 0) throw IntegrityError("checkpoint optimizer table is incomplete");
  for (; idx < n_params; ++idx) ck.params.push_back(std::move(entries[idx].rec));
  if (ck.optimizer.present) {
    for (std::size_t i = 0; i < n_params; ++i) ck.optimizer.m.push_back(std::move(entries[idx++].rec));
    for (std::size_t i = 0; i < n_params; ++i) ck.optimizer.v.push_back(std::move(entries[idx++].rec));
  }
  return ck;
}

}  // namespace neuroverb
