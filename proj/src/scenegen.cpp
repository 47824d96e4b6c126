#include "csvqa/scenegen.hpp"

#include <algorithm>
#include <cmath>

#include "csvqa/rng.hpp"

namespace csvqa {

namespace {
constexpr int kMinObjectSize = 3;
constexpr int kMaxObjectSize = 6;
constexpr int kRelationMargin = 3;  // min |coordinate difference| for asked relations
constexpr int kShapeAny = 3;
constexpr int kColorAny = 6;
}  // namespace

std::string answer_to_string(int answer_class) {
  static const char* names[kAnswerClasses] = {"yes", "no", "0", "1", "2",
                                              "3",   "4",  "circle", "square", "triangle"};
  require(answer_class >= 0 && answer_class < kAnswerClasses, Error::Kind::invalid_argument,
          "answer class out of range");
  return names[answer_class];
}

std::array<float, 3> color_rgb(ObjColor color) {
  switch (color) {
    case ObjColor::red: return {1.0f, 0.0f, 0.0f};
    case ObjColor::green: return {0.0f, 1.0f, 0.0f};
    case ObjColor::blue: return {0.0f, 0.0f, 1.0f};
    case ObjColor::yellow: return {1.0f, 1.0f, 0.0f};
    case ObjColor::magenta: return {1.0f, 0.0f, 1.0f};
    case ObjColor::cyan: return {0.0f, 1.0f, 1.0f};
  }
  throw_error(Error::Kind::invalid_argument, "bad color");
}

std::string to_string(QuestionKind kind) {
  switch (kind) {
    case QuestionKind::existence: return "existence";
    case QuestionKind::count: return "count";
    case QuestionKind::relation: return "relation";
  }
  return "?";
}

std::array<float, kQuestionLength> encode_question(const Question& q) {
  std::array<float, kQuestionLength> v{};
  v[static_cast<int>(q.kind)] = 1.0f;
  v[3 + q.shape_pred] = 1.0f;
  v[7 + q.color_pred] = 1.0f;
  if (q.kind == QuestionKind::relation) {
    v[14 + static_cast<int>(q.relation)] = 1.0f;
    v[18 + static_cast<int>(q.ref_shape)] = 1.0f;
    const int c = static_cast<int>(q.ref_color);
    v[21] = static_cast<float>((c >> 2) & 1);
    v[22] = static_cast<float>((c >> 1) & 1);
    v[23] = static_cast<float>(c & 1);
  }
  return v;
}

namespace {

int one_hot_index(std::span<const float> v, int begin, int len, const char* segment) {
  int active = -1;
  for (int i = 0; i < len; ++i) {
    const float x = v[begin + i];
    require(x == 0.0f || x == 1.0f, Error::Kind::malformed_question,
            std::string("question encoding: non-binary value in ") + segment);
    if (x == 1.0f) {
      require(active < 0, Error::Kind::malformed_question,
              std::string("question encoding: multiple active bits in ") + segment);
      active = i;
    }
  }
  require(active >= 0, Error::Kind::malformed_question,
          std::string("question encoding: no active bit in ") + segment);
  return active;
}

void require_zero(std::span<const float> v, int begin, int len, const char* segment) {
  for (int i = 0; i < len; ++i)
    require(v[begin + i] == 0.0f, Error::Kind::malformed_question,
            std::string("question encoding: ") + segment + " must be zero for this kind");
}

}  // namespace

Question decode_question(std::span<const float> encoding) {
  require(encoding.size() == kQuestionLength, Error::Kind::malformed_question,
          "question encoding must have length 24");
  Question q;
  q.kind = static_cast<QuestionKind>(one_hot_index(encoding, 0, 3, "kind"));
  q.shape_pred = one_hot_index(encoding, 3, 4, "shape predicate");
  q.color_pred = one_hot_index(encoding, 7, 7, "color predicate");
  if (q.kind == QuestionKind::relation) {
    q.relation = static_cast<Relation>(one_hot_index(encoding, 14, 4, "relation"));
    q.ref_shape = static_cast<ObjShape>(one_hot_index(encoding, 18, 3, "reference shape"));
    int c = 0;
    for (int i = 0; i < 3; ++i) {
      const float x = encoding[21 + i];
      require(x == 0.0f || x == 1.0f, Error::Kind::malformed_question,
              "question encoding: non-binary reference color bit");
      c = (c << 1) | (x == 1.0f ? 1 : 0);
    }
    require(c < kColorCount, Error::Kind::malformed_question,
            "question encoding: reference color index out of range");
    q.ref_color = static_cast<ObjColor>(c);
  } else {
    require_zero(encoding, 14, 10, "relation segments");
  }
  return q;
}

Scene generate_scene(std::uint64_t seed, int max_objects) {
  require(max_objects >= 1 && max_objects <= 4, Error::Kind::invalid_argument,
          "generate_scene: max_objects must lie in [1,4]");
  Rng rng = Rng(seed).split("scene");
  const int n_objects = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(max_objects)));

  Scene scene;
  scene.seed = seed;
  int attempts = 0;
  while (static_cast<int>(scene.objects.size()) < n_objects) {
    require(attempts < 1000, Error::Kind::generation_failure,
            "generate_scene: failed to place objects within 1000 attempts");
    ++attempts;

    SceneObject obj;
    obj.shape = static_cast<ObjShape>(rng.next_below(3));
    obj.color = static_cast<ObjColor>(rng.next_below(kColorCount));
    obj.size = kMinObjectSize +
               static_cast<int>(rng.next_below(kMaxObjectSize - kMinObjectSize + 1));
    obj.x = obj.size + static_cast<int>(rng.next_below(
                           static_cast<std::uint64_t>(kImageWidth - 2 * obj.size)));
    obj.y = obj.size + static_cast<int>(rng.next_below(
                           static_cast<std::uint64_t>(kImageHeight - 2 * obj.size)));

    bool ok = true;
    for (const auto& other : scene.objects) {
      if (other.shape == obj.shape && other.color == obj.color) {
        ok = false;
        break;
      }
      const int dx = other.x - obj.x;
      const int dy = other.y - obj.y;
      const int min_dist = other.size + obj.size + 2;
      if (dx * dx + dy * dy < min_dist * min_dist) {
        ok = false;
        break;
      }
    }
    if (ok) scene.objects.push_back(obj);
  }
  return scene;
}

namespace {

bool inside_object(const SceneObject& obj, int px, int py) {
  const int dx = px - obj.x;
  const int dy = py - obj.y;
  switch (obj.shape) {
    case ObjShape::circle:
      return dx * dx + dy * dy <= obj.size * obj.size;
    case ObjShape::square:
      return std::abs(dx) <= obj.size && std::abs(dy) <= obj.size;
    case ObjShape::triangle: {
      // Upward isoceles: apex at (x, y-s), base row y+s of width 2s+1.
      const int row = py - (obj.y - obj.size);
      if (row < 0 || row > 2 * obj.size) return false;
      return 2 * std::abs(dx) <= row;
    }
  }
  return false;
}

}  // namespace

Image render(const Scene& scene) {
  Image img(kImageChannels, kImageHeight, kImageWidth, 1.0);
  for (const auto& obj : scene.objects) {
    const auto rgb = color_rgb(obj.color);
    const int y0 = std::max(0, obj.y - obj.size);
    const int y1 = std::min(kImageHeight - 1, obj.y + obj.size);
    const int x0 = std::max(0, obj.x - obj.size);
    const int x1 = std::min(kImageWidth - 1, obj.x + obj.size);
    for (int py = y0; py <= y1; ++py)
      for (int px = x0; px <= x1; ++px)
        if (inside_object(obj, px, py))
          for (int c = 0; c < kImageChannels; ++c) img.at(c, py, px) = rgb[c];
  }
  return img;
}

namespace {

bool matches(const SceneObject& obj, int shape_pred, int color_pred) {
  if (shape_pred != kShapeAny && static_cast<int>(obj.shape) != shape_pred) return false;
  if (color_pred != kColorAny && static_cast<int>(obj.color) != color_pred) return false;
  return true;
}

int count_matches(const Scene& scene, int shape_pred, int color_pred) {
  int count = 0;
  for (const auto& obj : scene.objects)
    if (matches(obj, shape_pred, color_pred)) ++count;
  return count;
}

// Predicate sampling, shared by existence and count questions. Half the time
// the predicate is derived from an object actually present (then widened to
// "any" with probability 1/2 per field) so positive answers stay common.
void sample_predicate(const Scene& scene, Rng& rng, Question& q) {
  if (rng.next_below(2) == 0) {
    const auto& obj = scene.objects[rng.next_below(scene.objects.size())];
    q.shape_pred = rng.next_below(2) == 0 ? kShapeAny : static_cast<int>(obj.shape);
    q.color_pred = rng.next_below(2) == 0 ? kColorAny : static_cast<int>(obj.color);
  } else {
    q.shape_pred = static_cast<int>(rng.next_below(4));
    q.color_pred = static_cast<int>(rng.next_below(7));
  }
}

int relation_coordinate_gap(const SceneObject& subject, const SceneObject& ref, Relation rel) {
  const bool horizontal = rel == Relation::left_of || rel == Relation::right_of;
  return horizontal ? std::abs(subject.x - ref.x) : std::abs(subject.y - ref.y);
}

}  // namespace

GeneratedQuestion generate_question(const Scene& scene, std::uint64_t seed) {
  require(!scene.objects.empty(), Error::Kind::invalid_argument,
          "generate_question: scene has no objects");
  Rng rng = Rng(seed).split("question");
  GeneratedQuestion out;
  Question q;
  auto kind = static_cast<QuestionKind>(rng.next_below(3));

  if (kind == QuestionKind::relation) {
    bool placed = false;
    if (scene.objects.size() >= 2) {
      for (int attempt = 0; attempt < 20 && !placed; ++attempt) {
        const std::size_t ia = rng.next_below(scene.objects.size());
        std::size_t ib = rng.next_below(scene.objects.size() - 1);
        if (ib >= ia) ++ib;
        const auto rel = static_cast<Relation>(rng.next_below(4));
        const auto& subject = scene.objects[ia];
        const auto& ref = scene.objects[ib];
        if (relation_coordinate_gap(subject, ref, rel) < kRelationMargin) continue;
        q.kind = QuestionKind::relation;
        q.shape_pred = static_cast<int>(subject.shape);
        q.color_pred = static_cast<int>(subject.color);
        q.relation = rel;
        q.ref_shape = ref.shape;
        q.ref_color = ref.color;
        placed = true;
      }
    }
    if (!placed) {
      out.relation_fallback = true;
      kind = static_cast<QuestionKind>(rng.next_below(2));
    }
  }

  if (kind != QuestionKind::relation || out.relation_fallback) {
    q = Question{};
    q.kind = kind;
    sample_predicate(scene, rng, q);
  }

  out.question = q;
  out.answer = recompute_answer(scene, q);
  return out;
}

int recompute_answer(const Scene& scene, const Question& q) {
  require(q.shape_pred >= 0 && q.shape_pred <= kShapeAny && q.color_pred >= 0 &&
              q.color_pred <= kColorAny,
          Error::Kind::malformed_question, "recompute_answer: predicate out of range");
  switch (q.kind) {
    case QuestionKind::existence:
      return count_matches(scene, q.shape_pred, q.color_pred) > 0 ? kAnswerYes : kAnswerNo;
    case QuestionKind::count: {
      const int c = std::min(count_matches(scene, q.shape_pred, q.color_pred), 4);
      return kAnswerCount0 + c;
    }
    case QuestionKind::relation: {
      const SceneObject* subject = nullptr;
      const SceneObject* ref = nullptr;
      int subject_matches = 0, ref_matches = 0;
      for (const auto& obj : scene.objects) {
        if (matches(obj, q.shape_pred, q.color_pred)) {
          subject = &obj;
          ++subject_matches;
        }
        if (obj.shape == q.ref_shape && obj.color == q.ref_color) {
          ref = &obj;
          ++ref_matches;
        }
      }
      require(subject_matches == 1 && ref_matches == 1, Error::Kind::malformed_question,
              "relation question does not uniquely identify both objects in this scene");
      switch (q.relation) {
        case Relation::left_of: return subject->x < ref->x ? kAnswerYes : kAnswerNo;
        case Relation::right_of: return subject->x > ref->x ? kAnswerYes : kAnswerNo;
        case Relation::above: return subject->y < ref->y ? kAnswerYes : kAnswerNo;
        case Relation::below: return subject->y > ref->y ? kAnswerYes : kAnswerNo;
      }
      break;
    }
  }
  throw_error(Error::Kind::malformed_question, "recompute_answer: bad question kind");
}

Dataset build_dataset(int n_items, std::uint64_t seed, Split split, int max_objects) {
  require(n_items >= 1, Error::Kind::invalid_argument, "build_dataset: n_items must be >= 1");
  const Rng root = Rng(seed).split(split == Split::train ? "split-train" : "split-eval");

  Dataset ds;
  ds.items.reserve(static_cast<std::size_t>(n_items));
  for (int i = 0; i < n_items; ++i) {
    for (int attempt = 0;; ++attempt) {
      require(attempt < 200, Error::Kind::generation_failure,
              "build_dataset: balance rule rejected 200 consecutive drafts for item " +
                  std::to_string(i));
      const Rng item_rng =
          root.split(static_cast<std::uint64_t>(i)).split(static_cast<std::uint64_t>(attempt));
      const std::uint64_t scene_seed = item_rng.split("scene").key();
      const std::uint64_t question_seed = item_rng.split("question").key();

      Scene scene = generate_scene(scene_seed, max_objects);
      GeneratedQuestion gq = generate_question(scene, question_seed);

      const int accepted = static_cast<int>(ds.items.size());
      if (accepted >= 100 &&
          100 * ds.class_histogram[static_cast<std::size_t>(gq.answer)] >= 45 * accepted) {
        continue;  // class already saturated; redraw with the next attempt stream
      }

      QaItem item;
      item.image = render(scene);
      item.question = gq.question;
      item.answer = gq.answer;
      item.scene = std::move(scene);
      item.relation_fallback = gq.relation_fallback;
      ds.class_histogram[static_cast<std::size_t>(gq.answer)] += 1;
      ds.items.push_back(std::move(item));
      break;
    }
  }
  return ds;
}

}  // namespace csvqa
