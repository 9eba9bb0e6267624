#include "neuroverb/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>

#include "neuroverb/errors.hpp"

namespace neuroverb {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct WavFormat {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t block_align = 0;
  std::uint16_t bits = 0;
};

float decode_sample(const unsigned char* p, const WavFormat& fmt) {
  if (fmt.format == kFormatFloat) {
    const std::uint32_t bits = read_u32(p);
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  if (fmt.bits == 16) {
    const auto v = static_cast<std::int16_t>(read_u16(p));
    return static_cast<float>(v) / 32768.0f;
  }
  // 24-bit: sign-extend from the top byte.
  std::int32_t v = static_cast<std::int32_t>(p[0]) | (static_cast<std::int32_t>(p[1]) << 8) |
                   (static_cast<std::int32_t>(static_cast<std::int8_t>(p[2])) << 16);
  return static_cast<float>(v) / 8388608.0f;
}

}  // namespace

void AudioClip::validate() const {
  if (samples.empty()) throw InvalidArgument("audio clip is empty");
  if (sample_rate <= 0) throw InvalidArgument("sample rate must be positive");
  for (float s : samples) {
    if (!std::isfinite(s)) throw InvalidArgument("audio clip contains non-finite samples");
  }
}

AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open WAV file: " + path.string());
  const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                       std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw ParseError("not a RIFF/WAVE file: " + path.string());
  }

  WavFormat fmt;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* chunk = buf.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > buf.size()) {
      // Some writers leave a bogus size on a trailing data chunk; accept what is present.
      if (std::memcmp(chunk, "data", 4) != 0) {
        throw ParseError("truncated chunk in WAV file: " + path.string());
      }
    }
    const std::size_t avail = std::min<std::size_t>(size, buf.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw ParseError("fmt chunk too short: " + path.string());
      const unsigned char* f = buf.data() + body;
      fmt.format = read_u16(f);
      fmt.channels = read_u16(f + 2);
      fmt.sample_rate = read_u32(f + 4);
      fmt.block_align = read_u16(f + 12);
      fmt.bits = read_u16(f + 14);
      if (fmt.format == kFormatExtensible) {
        if (avail < 26) throw ParseError("extensible fmt chunk too short: " + path.string());
        fmt.format = read_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = buf.data() + body;
      data_size = avail;
    }
    pos = body + size + (size & 1u);
  }

  if (!have_fmt) throw ParseError("missing fmt chunk: " + path.string());
  if (data == nullptr) throw ParseError("missing data chunk: " + path.string());
  const bool supported = (fmt.format == kFormatPcm && (fmt.bits == 16 || fmt.bits == 24)) ||
                         (fmt.format == kFormatFloat && fmt.bits == 32);
  if (!supported) {
    throw UnsupportedFormatError("unsupported WAV encoding (format " + std::to_string(fmt.format) +
                                 ", " + std::to_string(fmt.bits) + " bits): " + path.string());
  }
  if (fmt.channels == 0 || fmt.sample_rate == 0) {
    throw ParseError("invalid channel count or sample rate: " + path.string());
  }
  const std::size_t bytes = fmt.bits / 8;
  const std::size_t frame_bytes = bytes * fmt.channels;
  if (fmt.block_align != frame_bytes) throw ParseError("inconsistent block alignment: " + path.string());

  AudioClip clip;
  clip.sample_rate = static_cast<int>(fmt.sample_rate);
  const std::size_t frames = data_size / frame_bytes;
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const unsigned char* p = data + i * frame_bytes;
    if (fmt.channels == 1) {
      clip.samples[i] = decode_sample(p, fmt);
      continue;
    }
    double acc = 0.0;
    for (std::size_t c = 0; c < fmt.channels; ++c) acc += decode_sample(p + c * bytes, fmt);
    clip.samples[i] = static_cast<float>(acc / fmt.channels);
  }
  return clip;
}

std::size_t save_wav(const AudioClip& clip, const std::filesystem::path& path, BitDepth depth) {
  clip.validate();
  const std::uint16_t bits = depth == BitDepth::pcm16 ? 16 : depth == BitDepth::pcm24 ? 24 : 32;
  const std::uint16_t format = depth == BitDepth::float32 ? kFormatFloat : kFormatPcm;
  const std::uint32_t bytes = bits / 8;
  const auto data_size = static_cast<std::uint32_t>(clip.samples.size() * bytes);

  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  put_u32(out, 36 + data_size);
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 16);
  put_u16(out, format);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * bytes);
  put_u16(out, static_cast<std::uint16_t>(bytes));
  put_u16(out, bits);
  out += "data";
  put_u32(out, data_size);

  std::size_t clipped = 0;
  for (float s : clip.samples) {
    if (depth == BitDepth::float32) {
      std::uint32_t raw;
      std::memcpy(&raw, &s, sizeof raw);
      put_u32(out, raw);
      continue;
    }
    if (s > 1.0f || s < -1.0f) ++clipped;
    const double x = std::clamp(static_cast<double>(s), -1.0, 1.0);
    if (depth == BitDepth::pcm16) {
      const auto q = static_cast<std::int32_t>(std::clamp(std::lround(x * 32768.0), -32768L, 32767L));
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    } else {
      const auto q =
          static_cast<std::int32_t>(std::clamp(std::lround(x * 8388608.0), -8388608L, 8388607L));
      const auto u = static_cast<std::uint32_t>(q);
      out.push_back(static_cast<char>(u & 0xFF));
      out.push_back(static_cast<char>((u >> 8) & 0xFF));
      out.push_back(static_cast<char>((u >> 16) & 0xFF));
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw WriteError("cannot open for writing: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw WriteError("write failed: " + path.string());
  return clipped;
}

AudioClip normalize_amplitude(const AudioClip& clip) {
  float peak = 0.0f;
  for (float s : clip.samples) peak = std::max(peak, std::abs(s));
  if (peak == 0.0f) throw DegenerateInputError("cannot normalize an all-zero clip");
  AudioClip out = clip;
  for (float& s : out.samples) s /= peak;
  return out;
}

AudioClip apply_fadeout(const AudioClip& clip, double duration_s) {
  if (duration_s < 0.0) throw InvalidArgument("fade-out duration must be non-negative");
  const auto n = static_cast<std::size_t>(std::llround(duration_s * clip.sample_rate));
  if (n > clip.samples.size()) {
    throw InvalidArgument("fade-out of " + std::to_string(n) + " samples exceeds clip length " +
                          std::to_string(clip.samples.size()));
  }
  AudioClip out = clip;
  const std::size_t start = out.samples.size() - n;
  for (std::size_t k = 0; k < n; ++k) {
    const double ramp = 1.0 - static_cast<double>(k + 1) / static_cast<double>(n);
    out.samples[start + k] = static_cast<float>(out.samples[start + k] * ramp);
  }
  return out;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open manifest: " + path.string());
  const auto base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      throw ParseError("manifest line " + std::to_string(lineno) +
                       ": expected dry<TAB>wet<TAB>id");
    }
    auto resolve = [&base](const std::string& p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp : base / fp;
    };
    entries.push_back({resolve(fields[0]), resolve(fields[1]), fields[2]});
  }
  return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw WriteError("cannot write manifest: " + path.string());
  for (const auto& e : entries) {
    out << e.dry.string() << '\t' << e.wet.string() << '\t' << e.id << '\n';
  }
  if (!out) throw WriteError("write failed: " + path.string());
}

const char* to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::validation:
      return "validation";
    case Split::test:
      return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "validation" || name == "val") return Split::validation;
  if (name == "test") return Split::test;
  throw InvalidArgument("unknown split '" + name + "'");
}

PairedDataset::PairedDataset(std::vector<ClipPair> pairs, std::vector<Split> splits)
    : pairs_(std::move(pairs)), splits_(std::move(splits)) {
  if (pairs_.size() != splits_.size()) throw InvalidArgument("one split label per pair required");
  std::set<std::string> ids;
  for (const auto& p : pairs_) {
    if (!ids.insert(p.id).second) throw InvalidArgument("duplicate pair id '" + p.id + "'");
    if (p.dry.size() != p.wet.size() || p.dry.sample_rate != p.wet.sample_rate) {
      throw InvalidArgument("pair '" + p.id + "': dry and wet differ in length or sample rate");
    }
  }
}

std::vector<std::size_t> PairedDataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits_.size(); ++i) {
    if (splits_[i] == split) out.push_back(i);
  }
  return out;
}

std::vector<const ClipPair*> PairedDataset::subset(Split split) const {
  std::vector<const ClipPair*> out;
  for (std::size_t i : indices(split)) out.push_back(&pairs_[i]);
  return out;
}

std::vector<Split> assign_splits(std::size_t n, double val_frac, double test_frac,
                                 std::uint64_t seed) {
  if (!(val_frac > 0.0 && val_frac < 1.0) || !(test_frac > 0.0 && test_frac < 1.0) ||
      val_frac + test_frac >= 1.0) {
    throw InvalidArgument("split fractions must lie in (0,1) and sum to less than 1");
  }
  if (n < 3) throw InvalidArgument("at least 3 pairs are needed to form three splits");
  const auto count = [n](double frac) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(frac * n)));
  };
  const std::size_t n_val = count(val_frac);
  const std::size_t n_test = count(test_frac);
  if (n_val + n_test >= n) {
    throw InvalidArgument("split leaves no training pairs for n = " + std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Split> splits(n, Split::train);
  for (std::size_t i = 0; i < n_val; ++i) splits[order[i]] = Split::validation;
  for (std::size_t i = n_val; i < n_val + n_test; ++i) splits[order[i]] = Split::test;
  return splits;
}

PairedDataset split_dataset(std::vector<ClipPair> pairs, double val_frac, double test_frac,
                            std::uint64_t seed) {
  auto splits = assign_splits(pairs.size(), val_frac, test_frac, seed);
  return PairedDataset(std::move(pairs), std::move(splits));
}

PairedDataset load_dataset(const std::filesystem::path& manifest, const DatasetOptions& options) {
  const auto entries = read_manifest(manifest);
  std::vector<ClipPair> pairs;
  pairs.reserve(entries.size());
  for (const auto& e : entries) {
    ClipPair pair{load_wav(e.dry), load_wav(e.wet), e.id};
    for (const AudioClip* c : {&pair.dry, &pair.wet}) {
      c->validate();
      if (options.required_sample_rate != 0 && c->sample_rate != options.required_sample_rate) {
        throw InvalidArgument("pair '" + e.id + "': sample rate " + std::to_string(c->sample_rate) +
                              " Hz, expected " + std::to_string(options.required_sample_rate) +
                              " Hz (resample offline)");
      }
    }
    if (options.normalize) {
      pair.dry = normalize_amplitude(pair.dry);
      pair.wet = normalize_amplitude(pair.wet);
    }
    if (options.fadeout_s > 0.0) pair.wet = apply_fadeout(pair.wet, options.fadeout_s);
    pairs.push_back(std::move(pair));
  }
  return split_dataset(std::move(pairs), options.val_frac, options.test_frac, options.seed);
}

}  // namespace neuroverb
