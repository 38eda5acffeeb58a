#include "uma/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "uma/errors.hpp"

namespace uma {

using nlohmann::json;

namespace {

[[noreturn]] void bad_field(const std::string& field, const std::string& what) {
  throw ParseError("synthetic spec: field '" + field + "' " + what);
}

template <typename T>
void read_field(const json& obj, const char* key, const std::string& prefix, T& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->template get<T>();
  } catch (const json::exception&) {
    bad_field(prefix + key, "has the wrong type");
  }
}

void check_keys(const json& obj, const std::string& prefix, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) bad_field(prefix.empty() ? "<root>" : prefix.substr(0, prefix.size() - 1), "must be an object");
  for (const auto& [key, value] : obj.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!known) bad_field(prefix + key, "is not a recognised key");
  }
}

void read_range(const json& obj, const char* key, double& lo, double& hi) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number() || !(*it)[1].is_number()) {
    bad_field(key, "must be a [min, max] pair");
  }
  lo = (*it)[0].get<double>();
  hi = (*it)[1].get<double>();
}

std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = v - c;
  auto to8 = [&](double u) { return static_cast<std::uint8_t>(std::lround(std::clamp(u + m, 0.0, 1.0) * 255.0)); };
  return {to8(r), to8(g), to8(b)};
}

double fold(double p, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0) return 0.5 * (lo + hi);
  double m = std::fmod(p - lo, 2 * span);
  if (m < 0) m += 2 * span;
  return lo + (m <= span ? m : 2 * span - m);
}

/// Deterministic texture derived from a target's texture seed.
struct Look {
  int pattern = 0;
  int period = 3;
  double split = 0.5;
  std::array<std::uint8_t, 3> base{}, second{}, lower{};

  Look(const SyntheticTarget& t) : base(t.color) {
    std::mt19937_64 rng(t.texture_seed);
    pattern = static_cast<int>(rng() % 4);
    period = 2 + static_cast<int>(rng() % 4);
    split = 0.4 + 0.2 * std::uniform_real_distribution<double>(0, 1)(rng);
    for (int c = 0; c < 3; ++c) {
      second[c] = static_cast<std::uint8_t>(255 - base[c] / 2 - rng() % 64);
      lower[c] = static_cast<std::uint8_t>(rng() % 256);
    }
  }

  std::array<std::uint8_t, 3> at(long u, long v, double height) const {
    if (static_cast<double>(v) >= split * height) return lower;
    bool alt = false;
    switch (pattern) {
      case 0: alt = (v / period) % 2 == 1; break;
      case 1: alt = (u / period) % 2 == 1; break;
      case 2: alt = ((u / period) + (v / period)) % 2 == 1; break;
      default: alt = ((u + v) / period) % 2 == 1; break;
    }
    return alt ? second : base;
  }
};

bool occluded(const std::vector<OcclusionEvent>& events, long id, int frame) {
  return std::any_of(events.begin(), events.end(), [&](const OcclusionEvent& e) {
    return e.id == id && frame >= e.start && frame < e.start + e.duration;
  });
}

std::optional<BBox> clip_to_image(const BBox& box, int width, int height) {
  const double x0 = std::max(box.x, 0.0), y0 = std::max(box.y, 0.0);
  const double x1 = std::min(box.right(), static_cast<double>(width));
  const double y1 = std::min(box.bottom(), static_cast<double>(height));
  if (x1 <= x0 || y1 <= y0) return std::nullopt;
  BBox clipped{x0, y0, x1 - x0, y1 - y0};
  if (clipped.area() < 0.25 * box.area()) return std::nullopt;
  return clipped;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (width <= 0) bad_field("width", "must be positive");
  if (height <= 0) bad_field("height", "must be positive");
  if (frames <= 0) bad_field("frames", "must be positive");
  if (!(frame_rate > 0)) bad_field("frame_rate", "must be positive");
  if (targets.empty() && identities <= 0) bad_field("identities", "must be positive");
  if (!(min_width > 0) || max_width < min_width) bad_field("target_width", "must satisfy 0 < min <= max");
  if (!(min_height > 0) || max_height < min_height) bad_field("target_height", "must satisfy 0 < min <= max");
  if (max_speed < 0) bad_field("max_speed", "must be non-negative");
  if (jitter_amplitude < 0) bad_field("jitter_amplitude", "must be non-negative");
  if (!(jitter_period > 0)) bad_field("jitter_period", "must be positive");
  if (background_noise < 0 || background_noise > 127) bad_field("background_noise", "must be in [0, 127]");
  if (detection.jitter_sigma < 0) bad_field("detection.jitter_sigma", "must be non-negative");
  if (!(detection.drop_prob >= 0 && detection.drop_prob <= 1)) bad_field("detection.drop_prob", "must be in [0, 1]");
  if (!(detection.fp_rate >= 0)) bad_field("detection.fp_rate", "must be non-negative");
  std::set<long> ids;
  for (const auto& t : targets) {
    if (t.id < 1) bad_field("targets.id", "must be >= 1");
    if (!ids.insert(t.id).second) bad_field("targets.id", "is duplicated (" + std::to_string(t.id) + ")");
    if (!(t.w > 0) || !(t.h > 0)) bad_field("targets.w/h", "must be positive");
    if (!(t.jitter_period > 0)) bad_field("targets.jitter_period", "must be positive");
  }
  if (targets.empty()) {
    for (long i = 1; i <= identities; ++i) ids.insert(i);
  }
  for (const auto& e : occlusions) {
    if (!ids.count(e.id)) bad_field("occlusions.id", "refers to unknown identity " + std::to_string(e.id));
    if (e.duration < 1) bad_field("occlusions.duration", "must be >= 1");
    if (e.start < 1 || e.start + e.duration - 1 > frames) {
      bad_field("occlusions.start", "interval must lie within frames 1.." + std::to_string(frames));
    }
  }
}

SyntheticSpec SyntheticSpec::from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("synthetic spec: invalid JSON: ") + e.what());
  }
  check_keys(root, "",
             {"name", "width", "height", "frames", "frame_rate", "seed", "identities", "target_width", "target_height",
              "max_speed", "jitter_amplitude", "jitter_period", "background_noise", "occlusions", "detection",
              "targets"});
  SyntheticSpec spec;
  read_field(root, "name", "", spec.name);
  read_field(root, "width", "", spec.width);
  read_field(root, "height", "", spec.height);
  read_field(root, "frames", "", spec.frames);
  read_field(root, "frame_rate", "", spec.frame_rate);
  read_field(root, "seed", "", spec.seed);
  read_field(root, "identities", "", spec.identities);
  read_range(root, "target_width", spec.min_width, spec.max_width);
  read_range(root, "target_height", spec.min_height, spec.max_height);
  read_field(root, "max_speed", "", spec.max_speed);
  read_field(root, "jitter_amplitude", "", spec.jitter_amplitude);
  read_field(root, "jitter_period", "", spec.jitter_period);
  read_field(root, "background_noise", "", spec.background_noise);
  if (auto it = root.find("detection"); it != root.end()) {
    check_keys(*it, "detection.", {"jitter_sigma", "drop_prob", "fp_rate"});
    read_field(*it, "jitter_sigma", "detection.", spec.detection.jitter_sigma);
    read_field(*it, "drop_prob", "detection.", spec.detection.drop_prob);
    read_field(*it, "fp_rate", "detection.", spec.detection.fp_rate);
  }
  if (auto it = root.find("occlusions"); it != root.end()) {
    if (!it->is_array()) bad_field("occlusions", "must be an array");
    for (const auto& o : *it) {
      check_keys(o, "occlusions.", {"id", "start", "duration"});
      OcclusionEvent e;
      read_field(o, "id", "occlusions.", e.id);
      read_field(o, "start", "occlusions.", e.start);
      read_field(o, "duration", "occlusions.", e.duration);
      spec.occlusions.push_back(e);
    }
  }
  if (auto it = root.find("targets"); it != root.end()) {
    if (!it->is_array()) bad_field("targets", "must be an array");
    for (const auto& o : *it) {
      check_keys(o, "targets.",
                 {"id", "cx", "cy", "w", "h", "vx", "vy", "jitter_amplitude", "jitter_period", "jitter_phase", "color",
                  "texture_seed"});
      SyntheticTarget t;
      t.id = static_cast<long>(spec.targets.size() + 1);
      read_field(o, "id", "targets.", t.id);
      read_field(o, "cx", "targets.", t.cx);
      read_field(o, "cy", "targets.", t.cy);
      read_field(o, "w", "targets.", t.w);
      read_field(o, "h", "targets.", t.h);
      read_field(o, "vx", "targets.", t.vx);
      read_field(o, "vy", "targets.", t.vy);
      read_field(o, "jitter_amplitude", "targets.", t.jitter_amplitude);
      read_field(o, "jitter_period", "targets.", t.jitter_period);
      read_field(o, "jitter_phase", "targets.", t.jitter_phase);
      read_field(o, "color", "targets.", t.color);
      read_field(o, "texture_seed", "targets.", t.texture_seed);
      spec.targets.push_back(t);
    }
    spec.identities = static_cast<int>(spec.targets.size());
  }
  spec.validate();
  return spec;
}

SyntheticSpec SyntheticSpec::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

std::string SyntheticSpec::to_json() const {
  json root = {{"name", name},
               {"width", width},
               {"height", height},
               {"frames", frames},
               {"frame_rate", frame_rate},
               {"seed", seed},
               {"identities", identities},
               {"target_width", {min_width, max_width}},
               {"target_height", {min_height, max_height}},
               {"max_speed", max_speed},
               {"jitter_amplitude", jitter_amplitude},
               {"jitter_period", jitter_period},
               {"background_noise", background_noise},
               {"detection",
                {{"jitter_sigma", detection.jitter_sigma},
                 {"drop_prob", detection.drop_prob},
                 {"fp_rate", detection.fp_rate}}}};
  root["occlusions"] = json::array();
  for (const auto& e : occlusions) root["occlusions"].push_back({{"id", e.id}, {"start", e.start}, {"duration", e.duration}});
  if (!targets.empty()) {
    root["targets"] = json::array();
    for (const auto& t : targets) {
      root["targets"].push_back({{"id", t.id},
                                 {"cx", t.cx},
                                 {"cy", t.cy},
                                 {"w", t.w},
                                 {"h", t.h},
                                 {"vx", t.vx},
                                 {"vy", t.vy},
                                 {"jitter_amplitude", t.jitter_amplitude},
                                 {"jitter_period", t.jitter_period},
                                 {"jitter_phase", t.jitter_phase},
                                 {"color", t.color},
                                 {"texture_seed", t.texture_seed}});
    }
  }
  return root.dump(2) + "\n";
}

std::vector<SyntheticTarget> resolve_targets(const SyntheticSpec& spec) {
  if (!spec.targets.empty()) return spec.targets;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  std::vector<SyntheticTarget> out;
  const double hue_offset = unit(rng);
  for (int i = 0; i < spec.identities; ++i) {
    SyntheticTarget t;
    t.id = i + 1;
    t.w = uniform(spec.min_width, spec.max_width);
    t.h = uniform(spec.min_height, spec.max_height);
    t.cx = uniform(0.5 * t.w, spec.width - 0.5 * t.w);
    t.cy = uniform(0.5 * t.h, spec.height - 0.5 * t.h);
    const double speed = uniform(0.0, spec.max_speed);
    const double angle = uniform(0.0, 2 * std::numbers::pi);
    t.vx = speed * std::cos(angle);
    t.vy = speed * std::sin(angle);
    t.jitter_amplitude = spec.jitter_amplitude * uniform(0.5, 1.0);
    t.jitter_period = spec.jitter_period * uniform(0.75, 1.25);
    t.jitter_phase = uniform(0.0, 2 * std::numbers::pi);
    const double hue = hue_offset + static_cast<double>(i) / spec.identities;
    t.color = hsv_to_rgb(hue, uniform(0.5, 1.0), uniform(0.6, 1.0));
    t.texture_seed = rng();
    out.push_back(t);
  }
  return out;
}

BBox target_box(const SyntheticTarget& t, int frame, int width, int height) {
  const double k = static_cast<double>(frame - 1);
  const double theta = 2 * std::numbers::pi * k / t.jitter_period + t.jitter_phase;
  const double cx = fold(t.cx + t.vx * k, 0.5 * t.w, width - 0.5 * t.w) + t.jitter_amplitude * std::sin(theta);
  const double cy = fold(t.cy + t.vy * k, 0.5 * t.h, height - 0.5 * t.h) + t.jitter_amplitude * std::cos(theta);
  return BBox::from_center(cx, cy, t.w, t.h);
}

SequenceData gen_synthetic_sequence(const SyntheticSpec& spec) {
  spec.validate();
  const auto targets = resolve_targets(spec);
  std::vector<Look> looks(targets.begin(), targets.end());

  SequenceData seq;
  seq.meta.name = spec.name;
  seq.meta.width = spec.width;
  seq.meta.height = spec.height;
  seq.meta.length = spec.frames;
  seq.meta.frame_rate = spec.frame_rate;

  // Independent streams so that detection noise settings do not perturb imagery.
  std::mt19937_64 pixel_rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 det_rng(spec.seed ^ 0xc2b2ae3d27d4eb4fULL);
  std::uniform_int_distribution<int> noise(-spec.background_noise, spec.background_noise);
  std::normal_distribution<double> jitter(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::poisson_distribution<int> fp_count(spec.detection.fp_rate > 0 ? spec.detection.fp_rate : 1.0);

  const auto W = static_cast<std::size_t>(spec.width), H = static_cast<std::size_t>(spec.height);
  for (int frame = 1; frame <= spec.frames; ++frame) {
    Image image(W, H);
    std::fill(image.rgb.begin(), image.rgb.end(), std::uint8_t{110});

    for (std::size_t i = 0; i < targets.size(); ++i) {
      const auto& t = targets[i];
      if (occluded(spec.occlusions, t.id, frame)) continue;
      const BBox box = target_box(t, frame, spec.width, spec.height);
      const auto clipped = clip_to_image(box, spec.width, spec.height);
      if (!clipped) continue;

      const long x0 = std::max(0L, static_cast<long>(std::ceil(box.x - 0.5)));
      const long x1 = std::min(static_cast<long>(W) - 1, static_cast<long>(std::ceil(box.right() - 0.5)) - 1);
      const long y0 = std::max(0L, static_cast<long>(std::ceil(box.y - 0.5)));
      const long y1 = std::min(static_cast<long>(H) - 1, static_cast<long>(std::ceil(box.bottom() - 0.5)) - 1);
      for (long py = y0; py <= y1; ++py) {
        for (long px = x0; px <= x1; ++px) {
          const auto u = static_cast<long>(std::floor(px + 0.5 - box.x));
          const auto v = static_cast<long>(std::floor(py + 0.5 - box.y));
          const auto col = looks[i].at(u, v, t.h);
          std::uint8_t* p = image.pixel(static_cast<std::size_t>(px), static_cast<std::size_t>(py));
          p[0] = col[0];
          p[1] = col[1];
          p[2] = col[2];
        }
      }

      DetectionRow gt;
      gt.frame = frame;
      gt.id = t.id;
      gt.bbox = *clipped;
      gt.confidence = 1.0;
      seq.gt.push_back(gt);

      const bool dropped = unit(det_rng) < spec.detection.drop_prob;
      const double jx = spec.detection.jitter_sigma * jitter(det_rng);
      const double jy = spec.detection.jitter_sigma * jitter(det_rng);
      if (dropped) continue;
      BBox noisy = *clipped;
      noisy.x += jx;
      noisy.y += jy;
      const auto det_box = spec.detection.jitter_sigma > 0 ? clip_to_image(noisy, spec.width, spec.height) : clipped;
      if (!det_box) continue;
      DetectionRow det = gt;
      det.id = -1;
      det.bbox = *det_box;
      seq.det.push_back(det);
    }

    if (spec.detection.fp_rate > 0) {
      const int n_fp = fp_count(det_rng);
      for (int k = 0; k < n_fp; ++k) {
        const double w = spec.min_width + (spec.max_width - spec.min_width) * unit(det_rng);
        const double h = spec.min_height + (spec.max_height - spec.min_height) * unit(det_rng);
        const double x = (spec.width - w) * unit(det_rng);
        const double y = (spec.height - h) * unit(det_rng);
        DetectionRow fp;
        fp.frame = frame;
        fp.id = -1;
        fp.bbox = {x, y, w, h};
        fp.confidence = 0.5 + 0.5 * unit(det_rng);
        seq.det.push_back(fp);
      }
    }

    if (spec.background_noise > 0) {
      for (auto& byte : image.rgb) byte = static_cast<std::uint8_t>(std::clamp(byte + noise(pixel_rng), 0, 255));
    }
    seq.frames.push_back(std::move(image));
  }
  return seq;
}

}  // namespace uma
