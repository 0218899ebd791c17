#include "vogue/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vogue/error.hpp"

namespace vogue {

namespace {

constexpr std::array kFamilies{Family::shape_count, Family::majority_color, Family::cell_parity, Family::bandit};
constexpr std::array kTransforms{Transform::hflip,  Transform::vflip,        Transform::rot90,
                                 Transform::rot180, Transform::rot270,       Transform::color_jitter,
                                 Transform::gaussian_noise};

}  // namespace

std::string_view family_name(Family f) {
  switch (f) {
    case Family::shape_count: return "shape-count";
    case Family::majority_color: return "majority-color";
    case Family::cell_parity: return "cell-parity";
    case Family::bandit: return "bandit";
  }
  return "?";
}

Family parse_family(std::string_view name) {
  for (auto f : kFamilies)
    if (family_name(f) == name) return f;
  throw ContractError("unknown task family '" + std::string(name) +
                      "' (valid: shape-count, majority-color, cell-parity, bandit)");
}

std::span<const Family> all_families() { return kFamilies; }

std::string_view transform_name(Transform t) {
  switch (t) {
    case Transform::hflip: return "hflip";
    case Transform::vflip: return "vflip";
    case Transform::rot90: return "rot90";
    case Transform::rot180: return "rot180";
    case Transform::rot270: return "rot270";
    case Transform::color_jitter: return "color-jitter";
    case Transform::gaussian_noise: return "gaussian-noise";
  }
  return "?";
}

Transform parse_transform(std::string_view name) {
  for (auto t : kTransforms)
    if (transform_name(t) == name) return t;
  throw ContractError("unknown transform '" + std::string(name) + "'");
}

std::span<const Transform> all_transforms() { return kTransforms; }

Color reference_color(std::size_t color_class) {
  switch (color_class) {
    case 0: return {kChannelHigh, kChannelLow, kChannelLow};
    case 1: return {kChannelLow, kChannelHigh, kChannelLow};
    case 2: return {kChannelLow, kChannelLow, kChannelHigh};
    case 3: return {kChannelHigh, kChannelHigh, kChannelLow};
  }
  throw ContractError("color class " + std::to_string(color_class) + " out of range");
}

double chebyshev(const Color& a, const Color& b) {
  double m = 0;
  for (std::size_t i = 0; i < 3; ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

namespace {

std::array<Color, kNumColors + 1> reference_palette() {
  std::array<Color, kNumColors + 1> p{};
  for (std::size_t c = 0; c < kNumColors; ++c) p[c] = reference_color(c);
  p[kNumColors] = kBackground;
  return p;
}

double min_separation(const std::array<Color, kNumColors + 1>& p) {
  double m = INFINITY;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = i + 1; j < p.size(); ++j) m = std::min(m, chebyshev(p[i], p[j]));
  return m;
}

// Near-copy of `target`: its first low channel raised by the ambiguous separation.
Color near_color(const Color& target) {
  Color c = target;
  for (auto& ch : c) {
    if (ch == kChannelLow) {
      ch += kAmbiguousSeparation;
      break;
    }
  }
  return c;
}

std::vector<std::size_t> random_cells(std::size_t count, std::size_t total, RngStream& rng) {
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.uniform_index(total - i)]);
  idx.resize(count);
  return idx;
}

void place(Scene& s, std::size_t cell, std::size_t color_class, RngStream& rng) {
  s.cells[cell] = Cell{true, rng.bernoulli(0.5) ? ShapeKind::disc : ShapeKind::rect, color_class};
}

std::size_t count_color(const Scene& s, std::size_t color_class) {
  return static_cast<std::size_t>(std::count_if(s.cells.begin(), s.cells.end(), [&](const Cell& c) {
    return c.occupied && c.color_class == color_class;
  }));
}

}  // namespace

Tokens answer_for(Family family, const Scene& scene, const Tokens& question) {
  switch (family) {
    case Family::shape_count: {
      if (question.size() < 3 || question[2] < tok::RED || question[2] > tok::YELLOW) {
        throw ContractError("shape-count question lacks a color token");
      }
      const std::size_t n = count_color(scene, question[2] - tok::RED);
      if (n > 9) throw ContractError("shape-count answer exceeds one digit");
      return {digit_token(n)};
    }
    case Family::majority_color: {
      std::size_t best = 0, best_n = 0;
      bool tie = false;
      for (std::size_t c = 0; c < kNumColors; ++c) {
        const std::size_t n = count_color(scene, c);
        if (n > best_n) {
          best = c;
          best_n = n;
          tie = false;
        } else if (n == best_n) {
          tie = true;
        }
      }
      if (tie || best_n == 0) throw ContractError("majority-color scene has no unique majority");
      return {color_token(best)};
    }
    case Family::cell_parity: {
      const auto n = std::count_if(scene.cells.begin(), scene.cells.end(), [](const Cell& c) { return c.occupied; });
      return {n % 2 == 0 ? tok::EVEN : tok::ODD};
    }
    case Family::bandit: return {digit_token(1)};
  }
  throw ContractError("unknown family");
}

TaskInstance generate_task(Family family, std::size_t difficulty, RngStream& rng, const EnvOptions& options) {
  if (difficulty < 1 || difficulty > kMaxDifficulty) {
    throw ContractError("difficulty " + std::to_string(difficulty) + " outside [1, " +
                        std::to_string(kMaxDifficulty) + "]");
  }
  if (options.grid == 0 || options.image_size % options.grid != 0) {
    throw ContractError("image_size must be a positive multiple of grid");
  }
  if (!(options.ambiguous_fraction >= 0 && options.ambiguous_fraction <= 1)) {
    throw ContractError("ambiguous_fraction must lie in [0,1]");
  }
  const std::size_t cells = options.grid * options.grid;
  TaskInstance t;
  t.family = family;
  t.difficulty = difficulty;
  t.scene.grid = options.grid;
  t.scene.cells.assign(cells, Cell{});
  t.scene.palette = reference_palette();

  switch (family) {
    case Family::shape_count: {
      const std::size_t target = rng.uniform_index(kNumColors);
      const std::size_t k = rng.uniform_index(std::min<std::size_t>(9, 2 * difficulty + 1) + 1);
      const std::size_t room = std::min(cells - k, 2 * difficulty);
      t.ambiguous = rng.bernoulli(options.ambiguous_fraction);
      std::size_t n_dis = rng.uniform_index(room + 1);
      std::size_t near_class = kNumColors;
      if (t.ambiguous) {
        near_class = (target + 1 + rng.uniform_index(kNumColors - 1)) % kNumColors;
        t.scene.palette[near_class] = near_color(reference_color(target));
        n_dis = std::max<std::size_t>(n_dis, std::min<std::size_t>(1, room));
      }
      const auto where = random_cells(k + n_dis, cells, rng);
      for (std::size_t i = 0; i < k; ++i) place(t.scene, where[i], target, rng);
      for (std::size_t i = 0; i < n_dis; ++i) {
        std::size_t cls = (target + 1 + rng.uniform_index(kNumColors - 1)) % kNumColors;
        if (t.ambiguous && i == 0) cls = near_class;
        place(t.scene, where[k + i], cls, rng);
      }
      t.question = {tok::BOS, tok::Q_COUNT, color_token(target)};
      break;
    }
    case Family::majority_color: {
      const std::size_t major = rng.uniform_index(kNumColors);
      const std::size_t m = 2 + rng.uniform_index(std::min<std::size_t>(4, difficulty + 1));
      std::array<std::size_t, kNumColors> counts{};
      counts[major] = m;
      const std::size_t others = std::min<std::size_t>(kNumColors - 1, difficulty);
      for (std::size_t j = 0; j < others; ++j) counts[(major + 1 + j) % kNumColors] = rng.uniform_index(m);
      auto total = [&] { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); };
      while (total() > cells) {
        // Shrink the largest minority class; the majority keeps its lead.
        std::size_t worst = kNumColors;
        for (std::size_t c = 0; c < kNumColors; ++c)
          if (c != major && (worst == kNumColors || counts[c] > counts[worst])) worst = c;
        counts[worst] -= 1;
      }
      const auto where = random_cells(total(), cells, rng);
      std::size_t w = 0;
      for (std::size_t c = 0; c < kNumColors; ++c)
        for (std::size_t i = 0; i < counts[c]; ++i) place(t.scene, where[w++], c, rng);
      t.question = {tok::BOS, tok::Q_MAJORITY};
      break;
    }
    case Family::cell_parity: {
      const std::size_t n = rng.uniform_index(std::min(cells, 4 * difficulty) + 1);
      const auto where = random_cells(n, cells, rng);
      for (auto cell : where) place(t.scene, cell, rng.uniform_index(kNumColors), rng);
      t.question = {tok::BOS, tok::Q_PARITY};
      break;
    }
    case Family::bandit: t.question = {tok::BOS, tok::Q_BANDIT}; break;
  }
  t.image = render(t.scene, options.image_size);
  t.answer = answer_for(family, t.scene, t.question);
  t.safe_transforms.assign(kTransforms.begin(), kTransforms.end());
  t.jitter_bound = min_separation(t.scene.palette) / 2;
  return t;
}

Image render(const Scene& scene, std::size_t image_size) {
  if (scene.grid == 0 || image_size % scene.grid != 0) throw ContractError("render: image_size must be a multiple of grid");
  Image img(image_size, image_size, 3);
  const std::size_t cs = image_size / scene.grid;
  const double half = static_cast<double>(cs) / 2, radius = 0.4 * static_cast<double>(cs);
  for (std::size_t y = 0; y < image_size; ++y)
    for (std::size_t x = 0; x < image_size; ++x) {
      const Cell& cell = scene.cells[(y / cs) * scene.grid + x / cs];
      Color c = scene.palette[kNumColors];
      if (cell.occupied) {
        bool inside = true;
        if (cell.kind == ShapeKind::disc) {
          const double dy = static_cast<double>(y % cs) + 0.5 - half;
          const double dx = static_cast<double>(x % cs) + 0.5 - half;
          inside = std::sqrt(dx * dx + dy * dy) <= radius;
        }
        if (inside) c = scene.palette[cell.color_class];
      }
      for (std::size_t ch = 0; ch < 3; ++ch) img.at(y, x, ch) = c[ch];
    }
  return img;
}

namespace {

std::size_t nearest_entry(const Image& img, std::size_t y, std::size_t x, const std::array<Color, kNumColors + 1>& p) {
  const Color px{img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2)};
  std::size_t best = 0;
  double best_d = INFINITY;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = chebyshev(px, p[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace

Scene parse_image(const Image& image, const Scene& reference) {
  Scene s;
  s.grid = reference.grid;
  s.palette = reference.palette;
  s.cells.assign(s.grid * s.grid, Cell{});
  const std::size_t cs = image.height / s.grid;
  for (std::size_t r = 0; r < s.grid; ++r)
    for (std::size_t c = 0; c < s.grid; ++c) {
      const std::size_t center = nearest_entry(image, r * cs + cs / 2, c * cs + cs / 2, s.palette);
      if (center == kNumColors) continue;
      const std::size_t corner = nearest_entry(image, r * cs, c * cs, s.palette);
      s.cells[r * s.grid + c] = Cell{true, corner == kNumColors ? ShapeKind::disc : ShapeKind::rect, center};
    }
  return s;
}

Scene transform_scene(const Scene& scene, Transform t) {
  Scene out = scene;
  const std::size_t g = scene.grid;
  for (std::size_t r = 0; r < g; ++r)
    for (std::size_t c = 0; c < g; ++c) {
      // Source cell for destination (r, c); matches the pixel maps in augment.
      std::size_t sr = r, sc = c;
      switch (t) {
        case Transform::hflip: sc = g - 1 - c; break;
        case Transform::vflip: sr = g - 1 - r; break;
        case Transform::rot90: sr = g - 1 - c; sc = r; break;
        case Transform::rot180: sr = g - 1 - r; sc = g - 1 - c; break;
        case Transform::rot270: sr = c; sc = g - 1 - r; break;
        case Transform::color_jitter:
        case Transform::gaussian_noise: break;
      }
      out.cells[r * g + c] = scene.cells[sr * g + sc];
    }
  return out;
}

std::optional<Tokens> decode_answer(const Tokens& response) {
  for (std::size_t i = 0; i < response.size(); ++i) {
    if (response[i] != tok::ANS_OPEN) continue;
    std::size_t j = i + 1;
    while (j < response.size() && is_content_token(response[j])) ++j;
    if (j > i + 1 && j < response.size() && response[j] == tok::ANS_CLOSE) {
      return Tokens(response.begin() + static_cast<std::ptrdiff_t>(i + 1),
                    response.begin() + static_cast<std::ptrdiff_t>(j));
    }
  }
  return std::nullopt;
}

bool format_ok(const Tokens& r) {
  std::size_t i = 0;
  if (i >= r.size() || r[i++] != tok::THINK_OPEN) return false;
  while (i < r.size() && is_content_token(r[i])) ++i;
  if (i >= r.size() || r[i++] != tok::THINK_CLOSE) return false;
  if (i >= r.size() || r[i++] != tok::ANS_OPEN) return false;
  const std::size_t start = i;
  while (i < r.size() && is_content_token(r[i])) ++i;
  if (i == start) return false;
  if (i >= r.size() || r[i++] != tok::ANS_CLOSE) return false;
  if (i >= r.size() || r[i++] != tok::EOS) return false;
  return i == r.size();
}

RewardBreakdown verify(const Tokens& response, const TaskInstance& instance) {
  for (auto t : response)
    if (t >= kVocabSize) return make_reward(0, 0);
  const auto answer = decode_answer(response);
  return make_reward(format_ok(response) ? 1 : 0, answer && *answer == instance.answer ? 1 : 0);
}

std::vector<TokenId> answer_space(Family family) {
  switch (family) {
    case Family::shape_count: {
      std::vector<TokenId> v;
      for (std::size_t d = 0; d < 10; ++d) v.push_back(digit_token(d));
      return v;
    }
    case Family::majority_color: return {tok::RED, tok::GREEN, tok::BLUE, tok::YELLOW};
    case Family::cell_parity: return {tok::EVEN, tok::ODD};
    case Family::bandit: return {digit_token(0), digit_token(1)};
  }
  return {};
}

}  // namespace vogue
