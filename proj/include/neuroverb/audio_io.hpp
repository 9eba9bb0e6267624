#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace neuroverb {

// Mono audio at a fixed sample rate. Samples are nominally in [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = 16000;

  std::size_t size() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }

  // Throws InvalidArgument unless the clip is non-empty, finite and has a
  // positive sample rate.
  void validate() const;
};

enum class BitDepth { pcm16, pcm24, float32 };

// Reads PCM16, PCM24 or float32 RIFF/WAVE files (plain or
// WAVE_FORMAT_EXTENSIBLE). Multichannel input is averaged to mono.
AudioClip load_wav(const std::filesystem::path& path);

// Writes a mono WAV file. Integer depths clamp to [-1, 1]; the return value
// is the number of samples that had to be clamped.
std::size_t save_wav(const AudioClip& clip, const std::filesystem::path& path,
                     BitDepth depth = BitDepth::pcm16);

// Scales the clip so that its peak absolute value is exactly 1.
AudioClip normalize_amplitude(const AudioClip& clip);

// Multiplies the last `duration_s` seconds by the ramp r[k] = 1 - (k+1)/N,
// so the final sample is exactly zero.
AudioClip apply_fadeout(const AudioClip& clip, double duration_s = 0.5);

struct ManifestEntry {
  std::filesystem::path dry;
  std::filesystem::path wet;
  std::string id;
};

// Manifest files hold one `dry_path<TAB>wet_path<TAB>id` line per pair.
// Relative paths are resolved against the manifest's directory. Blank lines
// and lines starting with '#' are skipped.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);

enum class Split { train, validation, test };

const char* to_string(Split split);
Split parse_split(const std::string& name);

struct ClipPair {
  AudioClip dry;
  AudioClip wet;
  std::string id;
};

// Immutable dry/wet corpus with a split label per pair.
class PairedDataset {
 public:
  PairedDataset(std::vector<ClipPair> pairs, std::vector<Split> splits);

  const std::vector<ClipPair>& pairs() const { return pairs_; }
  const std::vector<Split>& splits() const { return splits_; }
  std::size_t size() const { return pairs_.size(); }

  std::vector<std::size_t> indices(Split split) const;
  std::vector<const ClipPair*> subset(Split split) const;

 private:
  std::vector<ClipPair> pairs_;
  std::vector<Split> splits_;
};

// Deterministic split assignment for n items: the held-out counts are
// round(frac * n) with a minimum of one each; the rest is training data.
std::vector<Split> assign_splits(std::size_t n, double val_frac, double test_frac,
                                 std::uint64_t seed);

PairedDataset split_dataset(std::vector<ClipPair> pairs, double val_frac = 0.05,
                            double test_frac = 0.05, std::uint64_t seed = 0);

struct DatasetOptions {
  // Clips at any other rate are rejected; 0 accepts any rate.
  int required_sample_rate = 16000;
  bool normalize = false;
  // Fade-out applied to the wet clips only.
  double fadeout_s = 0.0;
  double val_frac = 0.05;
  double test_frac = 0.05;
  std::uint64_t seed = 0;
};

PairedDataset load_dataset(const std::filesystem::path& manifest, const DatasetOptions& options);

}  // namespace neuroverb
