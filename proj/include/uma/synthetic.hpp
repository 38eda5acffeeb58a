#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uma/mot_io.hpp"

namespace uma {

/// One synthetic identity. Box centre at frame t (1-based):
///   c(t) = fold(c0 + v * (t - 1)) + A * (sin(2*pi*(t-1)/P + phase), cos(...))
/// where fold reflects the linear part at the image borders.
struct SyntheticTarget {
  long id = 1;
  double cx = 0, cy = 0;
  double w = 16, h = 24;
  double vx = 0, vy = 0;
  double jitter_amplitude = 0;
  double jitter_period = 40;
  double jitter_phase = 0;
  std::array<std::uint8_t, 3> color{200, 60, 60};
  std::uint64_t texture_seed = 1;
};

/// Target `id` is hidden for frames [start, start + duration).
struct OcclusionEvent {
  long id = 1;
  int start = 1;
  int duration = 1;
};

struct DetectionNoise {
  double jitter_sigma = 0;  // centre jitter, px
  double drop_prob = 0;
  double fp_rate = 0;  // expected false positives per frame
};

struct SyntheticSpec {
  std::string name = "synth";
  int width = 320;
  int height = 240;
  int frames = 200;
  double frame_rate = 30;
  std::uint64_t seed = 1;
  int identities = 20;

  // Ranges used when targets are drawn at random.
  double min_width = 14, max_width = 20;
  double min_height = 22, max_height = 30;
  double max_speed = 1.5;
  double jitter_amplitude = 1.5;
  double jitter_period = 40;

  int background_noise = 24;  // uniform per-channel noise amplitude
  std::vector<OcclusionEvent> occlusions;
  DetectionNoise detection;

  /// Explicit targets. When empty, `identities` targets are drawn from `seed`.
  std::vector<SyntheticTarget> targets;

  /// Throws ParseError naming the offending field.
  void validate() const;

  static SyntheticSpec from_json(const std::string& text);
  static SyntheticSpec from_file(const std::filesystem::path& path);
  std::string to_json() const;
};

/// Targets actually rendered: the explicit list or the seeded random draw.
std::vector<SyntheticTarget> resolve_targets(const SyntheticSpec& spec);

/// Unclipped box of `target` at `frame`.
BBox target_box(const SyntheticTarget& target, int frame, int width, int height);

/// Renders frames and emits gt and det rows. Deterministic per spec.
SequenceData gen_synthetic_sequence(const SyntheticSpec& spec);

}  // namespace uma
