#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>

#include "neuroverb/audio_io.hpp"
#include "neuroverb/errors.hpp"
#include "support.hpp"

using namespace neuroverb;
using Catch::Matchers::WithinAbs;
using testing::TempDir;

namespace {

// Hand-rolled PCM16 writer so the reader is not only tested against our own writer.
void write_raw_pcm16(const std::filesystem::path& path, const std::vector<std::int16_t>& interleaved,
                     std::uint16_t channels, std::uint32_t rate) {
  auto u16 = [](std::string& s, std::uint16_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>(v >> 8));
  };
  auto u32 = [&](std::string& s, std::uint32_t v) {
    u16(s, static_cast<std::uint16_t>(v & 0xffff));
    u16(s, static_cast<std::uint16_t>(v >> 16));
  };
  const auto data_bytes = static_cast<std::uint32_t>(interleaved.size() * 2);
  std::string s = "RIFF";
  u32(s, 36 + data_bytes);
  s += "WAVEfmt ";
  u32(s, 16);
  u16(s, 1);
  u16(s, channels);
  u32(s, rate);
  u32(s, rate * channels * 2);
  u16(s, static_cast<std::uint16_t>(channels * 2));
  u16(s, 16);
  s += "data";
  u32(s, data_bytes);
  for (auto v : interleaved) u16(s, static_cast<std::uint16_t>(v));
  std::ofstream(path, std::ios::binary).write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::vector<ClipPair> dummy_pairs(std::size_t n) {
  std::vector<ClipPair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    AudioClip c{{0.1f, 0.2f}, 16000};
    pairs.push_back({c, c, "p" + std::to_string(i)});
  }
  return pairs;
}

}  // namespace

TEST_CASE("pcm16 decoding scales by 1/32768", "[audio_io]") {
  TempDir dir("wav16");
  write_raw_pcm16(dir / "a.wav", {32767, 0, -32768}, 1, 16000);
  const auto clip = load_wav(dir / "a.wav");
  REQUIRE(clip.size() == 3);
  CHECK(clip.sample_rate == 16000);
  CHECK(clip.samples[0] == 32767.0f / 32768.0f);
  CHECK(clip.samples[1] == 0.0f);
  CHECK(clip.samples[2] == -1.0f);
}

TEST_CASE("stereo input is averaged to mono", "[audio_io]") {
  TempDir dir("stereo");
  write_raw_pcm16(dir / "s.wav", {16384, 0, -16384, 16384}, 2, 16000);
  const auto clip = load_wav(dir / "s.wav");
  REQUIRE(clip.size() == 2);
  CHECK(clip.samples[0] == 0.25f);
  CHECK(clip.samples[1] == 0.0f);
}

TEST_CASE("wav round trips", "[audio_io]") {
  TempDir dir("roundtrip");
  const AudioClip clip{testing::random_signal(100, 3, 0.99), 16000};

  SECTION("pcm16 within one quantization step") {
    save_wav(clip, dir / "a.wav", BitDepth::pcm16);
    const auto back = load_wav(dir / "a.wav");
    REQUIRE(back.size() == clip.size());
    CHECK(testing::max_abs_diff(back.samples, clip.samples) < 1.0 / 32768.0);
  }
  SECTION("pcm24 within one quantization step") {
    save_wav(clip, dir / "a.wav", BitDepth::pcm24);
    const auto back = load_wav(dir / "a.wav");
    CHECK(testing::max_abs_diff(back.samples, clip.samples) < 1.0 / 8388608.0);
  }
  SECTION("float32 is bit-exact") {
    save_wav(clip, dir / "a.wav", BitDepth::float32);
    const auto back = load_wav(dir / "a.wav");
    CHECK(back.samples == clip.samples);
  }
}

TEST_CASE("save_wav data size and clamping", "[audio_io]") {
  TempDir dir("save");
  SECTION("16000 samples of silence are 32000 data bytes") {
    save_wav(AudioClip{std::vector<float>(16000, 0.0f), 16000}, dir / "z.wav");
    CHECK(std::filesystem::file_size(dir / "z.wav") == 44 + 32000);
    CHECK(load_wav(dir / "z.wav").size() == 16000);
  }
  SECTION("out-of-range samples are clamped and counted") {
    const auto clipped = save_wav(AudioClip{{1.5f, 0.25f, -2.0f}, 16000}, dir / "c.wav", BitDepth::pcm16);
    CHECK(clipped == 2);
    const auto back = load_wav(dir / "c.wav");
    CHECK(back.samples[0] == 32767.0f / 32768.0f);
    CHECK(back.samples[2] == -1.0f);
    CHECK(save_wav(AudioClip{{1.5f}, 16000}, dir / "f.wav", BitDepth::float32) == 0);
  }
  SECTION("unwritable path") {
    CHECK_THROWS_AS(save_wav(AudioClip{{0.0f}, 16000}, dir / "missing" / "x.wav"), WriteError);
  }
}

TEST_CASE("malformed wav files", "[audio_io]") {
  TempDir dir("bad");
  std::ofstream(dir / "junk.wav") << "this is not audio";
  CHECK_THROWS_AS(load_wav(dir / "junk.wav"), ParseError);
  CHECK_THROWS_AS(load_wav(dir / "nope.wav"), ParseError);

  // 8-bit PCM is valid RIFF but unsupported.
  write_raw_pcm16(dir / "u8.wav", {0, 0}, 1, 16000);
  std::fstream f(dir / "u8.wav", std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(34);
  const char eight[2] = {8, 0};
  f.write(eight, 2);
  f.seekp(32);
  const char align[2] = {1, 0};
  f.write(align, 2);
  f.close();
  CHECK_THROWS_AS(load_wav(dir / "u8.wav"), UnsupportedFormatError);
}

TEST_CASE("normalize_amplitude", "[audio_io]") {
  CHECK(normalize_amplitude(AudioClip{{0.5f, -0.25f}, 16000}).samples == std::vector<float>{1.0f, -0.5f});
  CHECK(normalize_amplitude(AudioClip{{-0.1f}, 16000}).samples == std::vector<float>{-1.0f});
  CHECK_THROWS_AS(normalize_amplitude(AudioClip{{0.0f, 0.0f}, 16000}), DegenerateInputError);

  const AudioClip clip{testing::random_signal(500, 9), 16000};
  const auto out = normalize_amplitude(clip);
  auto argmax = [](const std::vector<float>& v) {
    return std::max_element(v.begin(), v.end(), [](float a, float b) { return std::abs(a) < std::abs(b); }) -
           v.begin();
  };
  CHECK(argmax(out.samples) == argmax(clip.samples));
  CHECK(std::abs(out.samples[static_cast<std::size_t>(argmax(out.samples))]) == 1.0f);
}

TEST_CASE("apply_fadeout", "[audio_io]") {
  // Rate 8 Hz makes 0.5 s equal to 4 samples.
  const AudioClip ones{std::vector<float>(8, 1.0f), 8};
  CHECK(apply_fadeout(ones, 0.5).samples == std::vector<float>{1, 1, 1, 1, 0.75f, 0.5f, 0.25f, 0});
  CHECK(apply_fadeout(ones, 0.0).samples == ones.samples);
  CHECK_THROWS_AS(apply_fadeout(ones, 2.0), InvalidArgument);

  const AudioClip clip{testing::random_signal(16000, 4), 16000};
  const auto out = apply_fadeout(clip, 0.5);
  CHECK(std::equal(clip.samples.begin(), clip.samples.begin() + 8000, out.samples.begin()));
  CHECK(out.samples.back() == 0.0f);
}

TEST_CASE("split assignment", "[audio_io]") {
  SECTION("624 pairs hold out 31 and 31") {
    const auto s = assign_splits(624, 0.05, 0.05, 1);
    CHECK(std::count(s.begin(), s.end(), Split::validation) == 31);
    CHECK(std::count(s.begin(), s.end(), Split::test) == 31);
    CHECK(std::count(s.begin(), s.end(), Split::train) == 562);
  }
  SECTION("three pairs give one of each") {
    const auto s = assign_splits(3, 0.05, 0.05, 1);
    CHECK(std::count(s.begin(), s.end(), Split::train) == 1);
    CHECK(std::count(s.begin(), s.end(), Split::validation) == 1);
    CHECK(std::count(s.begin(), s.end(), Split::test) == 1);
  }
  SECTION("deterministic per seed") {
    CHECK(assign_splits(100, 0.05, 0.05, 42) == assign_splits(100, 0.05, 0.05, 42));
    CHECK(assign_splits(100, 0.05, 0.05, 42) != assign_splits(100, 0.05, 0.05, 43));
  }
  SECTION("too few pairs") {
    CHECK_THROWS_AS(assign_splits(2, 0.05, 0.05, 0), InvalidArgument);
    CHECK_THROWS_AS(split_dataset(dummy_pairs(2)), InvalidArgument);
  }
  SECTION("dataset subsets") {
    const auto ds = split_dataset(dummy_pairs(20), 0.1, 0.1, 5);
    std::set<std::string> ids;
    for (auto split : {Split::train, Split::validation, Split::test})
      for (const auto* p : ds.subset(split)) ids.insert(p->id);
    CHECK(ids.size() == 20);
    CHECK(ds.subset(Split::validation).size() == 2);
  }
}

TEST_CASE("manifest and dataset loading", "[audio_io]") {
  TempDir dir("manifest");
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < 4; ++i) {
    const auto id = "n" + std::to_string(i);
    const AudioClip dry{testing::random_signal(1600, 10 + i, 0.4), 16000};
    save_wav(dry, dir / (id + "_dry.wav"), BitDepth::float32);
    save_wav(dry, dir / (id + "_wet.wav"), BitDepth::float32);
    entries.push_back({id + "_dry.wav", id + "_wet.wav", id});
  }
  write_manifest(entries, dir / "m.tsv");

  const auto back = read_manifest(dir / "m.tsv");
  REQUIRE(back.size() == 4);
  CHECK(back[2].id == "n2");
  CHECK(back[2].dry == dir / "n2_dry.wav");

  DatasetOptions opt;
  opt.normalize = true;
  opt.fadeout_s = 0.05;
  const auto ds = load_dataset(dir / "m.tsv", opt);
  CHECK(ds.size() == 4);
  for (const auto& p : ds.pairs()) {
    float peak = 0.0f;
    for (float v : p.dry.samples) peak = std::max(peak, std::abs(v));
    CHECK(peak == 1.0f);
    CHECK(p.wet.samples.back() == 0.0f);
    CHECK(p.dry.samples.back() != 0.0f);
  }

  opt.required_sample_rate = 44100;
  CHECK_THROWS_AS(load_dataset(dir / "m.tsv", opt), InvalidArgument);

  std::ofstream(dir / "bad.tsv") << "only_one_field.wav\n";
  CHECK_THROWS_AS(read_manifest(dir / "bad.tsv"), ParseError);
}
