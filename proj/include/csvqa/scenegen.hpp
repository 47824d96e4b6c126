#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "csvqa/image.hpp"

namespace csvqa {

inline constexpr int kImageChannels = 3;
inline constexpr int kImageHeight = 32;
inline constexpr int kImageWidth = 32;
inline constexpr int kQuestionLength = 24;
inline constexpr int kAnswerClasses = 10;
inline constexpr int kColorCount = 6;

// Answer vocabulary: [yes, no, 0, 1, 2, 3, 4, circle, square, triangle].
inline constexpr int kAnswerYes = 0;
inline constexpr int kAnswerNo = 1;
inline constexpr int kAnswerCount0 = 2;  // class for count == c is kAnswerCount0 + c

std::string answer_to_string(int answer_class);

enum class ObjShape : std::uint8_t { circle = 0, square = 1, triangle = 2 };
enum class ObjColor : std::uint8_t { red = 0, green = 1, blue = 2, yellow = 3, magenta = 4, cyan = 5 };

// Fixed palette; index by ObjColor.
std::array<float, 3> color_rgb(ObjColor color);

struct SceneObject {
  ObjShape shape;
  ObjColor color;
  int x = 0;  // center, pixels
  int y = 0;
  int size = 3;  // radius / half-width, in [3, 6]
};

struct Scene {
  std::vector<SceneObject> objects;  // 1..4, pairwise non-overlapping
  std::uint64_t seed = 0;
};

enum class QuestionKind : std::uint8_t { existence = 0, count = 1, relation = 2 };
enum class Relation : std::uint8_t { left_of = 0, right_of = 1, above = 2, below = 3 };

std::string to_string(QuestionKind kind);

// Symbolic question. shape_pred in [0,2] names a shape, 3 means "any";
// color_pred in [0,5] names a color, 6 means "any". The relation fields are
// meaningful only when kind == relation; "above" means smaller y (row 0 is
// the top of the image). Encoding layout (24 floats, one-hot segments unless
// noted):
//   [0..2]   kind
//   [3..6]   shape predicate (circle, square, triangle, any)
//   [7..13]  color predicate (6 colors, any)
//   [14..17] relation (left-of, right-of, above, below); zero unless relation
//   [18..20] reference shape; zero unless relation
//   [21..23] reference color index as 3 bits, most significant first
struct Question {
  QuestionKind kind = QuestionKind::existence;
  int shape_pred = 3;
  int color_pred = 6;
  Relation relation = Relation::left_of;
  ObjShape ref_shape = ObjShape::circle;
  ObjColor ref_color = ObjColor::red;
};

std::array<float, kQuestionLength> encode_question(const Question& q);
Question decode_question(std::span<const float> encoding);

// Rejection-samples 1..max_objects placements with pairwise center distance
// >= size_i + size_j + 2 and at most one object per (shape, color); bounded
// at 1000 attempts. Deterministic per seed.
Scene generate_scene(std::uint64_t seed, int max_objects = 4);

// White background, opaque integer rasterization in list order.
Image render(const Scene& scene);

struct GeneratedQuestion {
  Question question;
  int answer = 0;
  // Relation was requested but not askable (fewer than two objects, or no
  // pair cleared the coordinate margin); fell back to existence/count.
  bool relation_fallback = false;
};

// Samples the kind uniformly, then a valid predicate. Relation questions pick
// two distinct objects (every object is uniquely named by its shape+color)
// and re-sample until the compared coordinates differ by at least 3 pixels,
// so ground truth never hinges on sub-feature-map gaps.
GeneratedQuestion generate_question(const Scene& scene, std::uint64_t seed);

// Ground-truth oracle; pure function of scene geometry, shared with
// generate_question. Spatial comparisons are strict (ties answer "no").
int recompute_answer(const Scene& scene, const Question& question);

struct QaItem {
  Image image;
  Question question;
  int answer = 0;
  Scene scene;
  bool relation_fallback = false;
};

enum class Split { train, eval };

struct Dataset {
  std::vector<QaItem> items;
  std::array<int, kAnswerClasses> class_histogram{};
};

// Item i derives its seeds from (seed, split, i, attempt) via the splittable
// generator, so train/eval draws are disjoint streams. An item whose answer
// class already holds >= 45% of the items generated so far (after the first
// 100) is rejected and regenerated.
Dataset build_dataset(int n_items, std::uint64_t seed, Split split, int max_objects = 4);

}  // namespace csvqa
