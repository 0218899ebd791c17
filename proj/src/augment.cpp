#include "vogue/augment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "vogue/error.hpp"

namespace vogue {

void validate(const AugmentSpec& s) {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0 && p <= 1)) throw ConfigError(std::string("augment.") + name + " must lie in [0,1]");
  };
  prob(s.p_hflip, "p_hflip");
  prob(s.p_vflip, "p_vflip");
  prob(s.p_rotate, "p_rotate");
  for (std::size_t i = 0; i < s.rotations.size(); ++i) {
    const int r = s.rotations[i];
    if (r != 90 && r != 180 && r != 270) throw ConfigError("augment.rotations accepts only 90, 180, 270");
    if (std::find(s.rotations.begin(), s.rotations.begin() + static_cast<std::ptrdiff_t>(i), r) !=
        s.rotations.begin() + static_cast<std::ptrdiff_t>(i)) {
      throw ConfigError("augment.rotations lists " + std::to_string(r) + " twice");
    }
  }
  if (!(s.jitter >= 0) || !std::isfinite(s.jitter)) throw ConfigError("augment.jitter must be >= 0");
  if (!(s.sigma >= 0) || !std::isfinite(s.sigma)) throw ConfigError("augment.sigma must be >= 0");
}

AugmentSpec identity_spec() {
  AugmentSpec s;
  s.p_hflip = s.p_vflip = s.p_rotate = 0;
  s.jitter = s.sigma = 0;
  return s;
}

namespace {

bool allowed(std::span<const Transform> safe, Transform t) {
  return std::find(safe.begin(), safe.end(), t) != safe.end();
}

Transform rotation_kind(int degrees) {
  return degrees == 90 ? Transform::rot90 : degrees == 180 ? Transform::rot180 : Transform::rot270;
}

}  // namespace

Image apply_geometric(const Image& src, Transform t) {
  if (t == Transform::color_jitter || t == Transform::gaussian_noise) return src;
  const bool quarter = t == Transform::rot90 || t == Transform::rot270;
  if (quarter && src.height != src.width) throw ContractError("augment: quarter rotations need a square image");
  Image out(src.height, src.width, src.channels);
  const std::size_t H = src.height, W = src.width;
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      std::size_t sy = y, sx = x;
      switch (t) {
        case Transform::hflip: sx = W - 1 - x; break;
        case Transform::vflip: sy = H - 1 - y; break;
        case Transform::rot90: sy = H - 1 - x; sx = y; break;
        case Transform::rot180: sy = H - 1 - y; sx = W - 1 - x; break;
        case Transform::rot270: sy = x; sx = W - 1 - y; break;
        default: break;
      }
      for (std::size_t c = 0; c < src.channels; ++c) out.at(y, x, c) = src.at(sy, sx, c);
    }
  return out;
}

Image perturb(const Image& image, const AugmentSpec& spec, std::span<const Transform> safe, RngStream& rng,
              AugmentTrace* trace, double jitter_bound) {
  validate(spec);
  if (allowed(safe, Transform::color_jitter) && spec.jitter > 0 && spec.jitter >= jitter_bound) {
    throw ContractError("augment: jitter " + std::to_string(spec.jitter) + " must stay below the instance bound " +
                        std::to_string(jitter_bound));
  }
  for (double v : image.pixels)
    if (!(v >= 0 && v <= 1)) throw ContractError("augment: input pixel outside [0,1]");

  Image out = image;
  auto record = [&](Transform t) {
    if (trace) trace->applied.push_back(t);
  };
  if (trace) *trace = AugmentTrace{};

  const bool hflip = rng.uniform01() < spec.p_hflip;
  if (hflip && allowed(safe, Transform::hflip)) {
    out = apply_geometric(out, Transform::hflip);
    record(Transform::hflip);
  }
  const bool vflip = rng.uniform01() < spec.p_vflip;
  if (vflip && allowed(safe, Transform::vflip)) {
    out = apply_geometric(out, Transform::vflip);
    record(Transform::vflip);
  }
  const bool rotate = rng.uniform01() < spec.p_rotate;
  const double pick = rng.uniform01();
  std::vector<Transform> rotations;
  for (int r : spec.rotations)
    if (allowed(safe, rotation_kind(r))) rotations.push_back(rotation_kind(r));
  if (rotate && !rotations.empty()) {
    const auto i = std::min(rotations.size() - 1, static_cast<std::size_t>(pick * static_cast<double>(rotations.size())));
    out = apply_geometric(out, rotations[i]);
    record(rotations[i]);
  }

  Color shift{};
  for (auto& s : shift) s = rng.uniform(-1.0, 1.0) * spec.jitter;
  if (spec.jitter > 0 && allowed(safe, Transform::color_jitter)) {
    for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] += shift[i % out.channels % 3];
    record(Transform::color_jitter);
    if (trace) trace->jitter_shift = shift;
  }

  // One normal per pixel-channel, drawn from a substream so the count never
  // shifts later draws.
  if (spec.sigma > 0 && allowed(safe, Transform::gaussian_noise)) {
    RngStream noise = rng.derive("noise");
    for (auto& v : out.pixels) v += spec.sigma * noise.standard_normal();
    record(Transform::gaussian_noise);
  }
  for (auto& v : out.pixels) v = std::clamp(v, 0.0, 1.0);
  return out;
}

Image perturb(const TaskInstance& instance, const AugmentSpec& spec, RngStream& rng, AugmentTrace* trace) {
  return perturb(instance.image, spec, instance.safe_transforms, rng, trace, instance.jitter_bound);
}

namespace {

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, std::string_view key) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw ConfigError("augment spec: bad number '" + std::string(s) + "' for " + std::string(key));
  }
  return v;
}

}  // namespace

std::string describe(const AugmentSpec& s) {
  std::string rot;
  for (int r : s.rotations) {
    if (!rot.empty()) rot += ',';
    rot += std::to_string(r);
  }
  return "hflip=" + fmt(s.p_hflip) + ";vflip=" + fmt(s.p_vflip) + ";rotate=" + fmt(s.p_rotate) +
         ";rotations=" + rot + ";jitter=" + fmt(s.jitter) + ";sigma=" + fmt(s.sigma) +
         ";order=" + std::string(kAugmentOrder);
}

AugmentSpec parse_augment_spec(std::string_view text) {
  AugmentSpec s;
  s.rotations.clear();
  std::size_t seen = 0;
  while (!text.empty()) {
    const auto semi = text.find(';');
    const std::string_view field = text.substr(0, semi);
    text = semi == std::string_view::npos ? std::string_view{} : text.substr(semi + 1);
    const auto eq = field.find('=');
    if (eq == std::string_view::npos) throw ConfigError("augment spec: field without '=': " + std::string(field));
    const auto key = field.substr(0, eq), value = field.substr(eq + 1);
    ++seen;
    if (key == "hflip") s.p_hflip = parse_double(value, key);
    else if (key == "vflip") s.p_vflip = parse_double(value, key);
    else if (key == "rotate") s.p_rotate = parse_double(value, key);
    else if (key == "jitter") s.jitter = parse_double(value, key);
    else if (key == "sigma") s.sigma = parse_double(value, key);
    else if (key == "rotations") {
      std::string_view rest = value;
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        s.rotations.push_back(static_cast<int>(parse_double(rest.substr(0, comma), key)));
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      }
    } else if (key == "order") {
      if (value != kAugmentOrder) throw ConfigError("augment spec: unsupported order '" + std::string(value) + "'");
    } else {
      throw ConfigError("augment spec: unknown field '" + std::string(key) + "'");
    }
  }
  if (seen != 7) throw ConfigError("augment spec: expected 7 fields, got " + std::to_string(seen));
  validate(s);
  return s;
}

}  // namespace vogue
