#pragma once

// Synthetic visual tasks on a grid of colored shapes. A Scene is the ground
// truth; the image is rendered from it and answers are computed from it, so
// relabeling a parsed image is an exact check that a transform kept the answer.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vogue/image.hpp"
#include "vogue/rng.hpp"
#include "vogue/vocab.hpp"

namespace vogue {

enum class Family { shape_count, majority_color, cell_parity, bandit };

std::string_view family_name(Family f);
Family parse_family(std::string_view name);
std::span<const Family> all_families();

enum class Transform { hflip, vflip, rot90, rot180, rot270, color_jitter, gaussian_noise };

std::string_view transform_name(Transform t);
Transform parse_transform(std::string_view name);
std::span<const Transform> all_transforms();

enum class ShapeKind { rect, disc };

using Color = std::array<double, 3>;

inline constexpr double kChannelLow = 0.15;
inline constexpr double kChannelHigh = 0.85;
inline constexpr double kAmbiguousSeparation = 0.2;
inline constexpr Color kBackground{kChannelLow, kChannelLow, kChannelLow};

// Reference rendering of red, green, blue, yellow.
Color reference_color(std::size_t color_class);
double chebyshev(const Color& a, const Color& b);

struct Cell {
  bool occupied = false;
  ShapeKind kind = ShapeKind::rect;
  std::size_t color_class = 0;

  bool operator==(const Cell&) const = default;
};

struct Scene {
  std::size_t grid = 4;
  std::vector<Cell> cells;  // row-major grid x grid
  // How each color class is drawn in this scene; index kNumColors is the background.
  std::array<Color, kNumColors + 1> palette{};

  bool operator==(const Scene&) const = default;
};

struct EnvOptions {
  std::size_t image_size = 16;
  std::size_t grid = 4;
  double ambiguous_fraction = 0.0;
};

struct TaskInstance {
  Family family = Family::shape_count;
  std::size_t difficulty = 1;
  Scene scene;
  Image image;
  Tokens question;
  Tokens answer;
  std::vector<Transform> safe_transforms;
  bool ambiguous = false;
  // Largest global color shift that cannot move a pixel to another palette entry.
  double jitter_bound = 0.0;
};

inline constexpr std::size_t kMaxDifficulty = 4;

TaskInstance generate_task(Family family, std::size_t difficulty, RngStream& rng, const EnvOptions& options = {});

Image render(const Scene& scene, std::size_t image_size);
// Reads cell contents back from pixels: nearest palette entry at the cell
// center gives the color, the cell corner tells a disc from a rectangle.
Scene parse_image(const Image& image, const Scene& reference);
Tokens answer_for(Family family, const Scene& scene, const Tokens& question);

// The scene after a geometric transform (cells move, palette unchanged).
Scene transform_scene(const Scene& scene, Transform t);

RewardBreakdown verify(const Tokens& response, const TaskInstance& instance);
std::optional<Tokens> decode_answer(const Tokens& response);
bool format_ok(const Tokens& response);

// Answer vocabulary of a family, used by the warmup stage and the evaluation oracles.
std::vector<TokenId> answer_space(Family family);

}  // namespace vogue
