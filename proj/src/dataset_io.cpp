#include "csvqa/dataset_io.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

namespace csvqa {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'V', 'Q'};
constexpr std::uint16_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
    require(out_.good(), Error::Kind::io, "cannot write dataset: " + path);
  }
  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v & 0xff));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void check(const std::string& path) {
    require(out_.good(), Error::Kind::io, "dataset write failed: " + path);
  }

 private:
  std::ofstream out_;
};

class DataReader {
 public:
  explicit DataReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    require(in_.good(), Error::Kind::io, "cannot open dataset: " + path);
  }
  std::uint8_t u8() {
    int c = in_.get();
    require(c != std::char_traits<char>::eof(), Error::Kind::io, "truncated dataset: " + path_);
    return static_cast<std::uint8_t>(c);
  }
  std::uint16_t u16() {
    const std::uint16_t lo = u8();
    return static_cast<std::uint16_t>(lo | (u8() << 8));
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }

 private:
  std::ifstream in_;
  std::string path_;
};

}  // namespace

void write_dataset(const std::string& path, const Dataset& ds) {
  Writer w(path);
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u16(kVersion);
  w.u32(static_cast<std::uint32_t>(ds.items.size()));
  w.u16(kImageChannels);
  w.u16(kImageHeight);
  w.u16(kImageWidth);
  w.u16(kQuestionLength);
  for (const auto& item : ds.items) {
    require(item.image.channels == kImageChannels && item.image.height == kImageHeight &&
                item.image.width == kImageWidth,
            Error::Kind::invalid_dimensions, "write_dataset: unexpected image shape");
    for (double v : item.image.data) w.f32(static_cast<float>(v));
    for (float v : encode_question(item.question)) w.f32(v);
    w.u8(static_cast<std::uint8_t>(item.answer));
    w.u8(static_cast<std::uint8_t>(item.scene.objects.size()));
    for (const auto& obj : item.scene.objects) {
      w.u8(static_cast<std::uint8_t>(obj.shape));
      w.u8(static_cast<std::uint8_t>(obj.color));
      w.u16(static_cast<std::uint16_t>(obj.x));
      w.u16(static_cast<std::uint16_t>(obj.y));
      w.u8(static_cast<std::uint8_t>(obj.size));
    }
  }
  w.check(path);
}

Dataset read_dataset(const std::string& path) {
  DataReader r(path);
  for (char expected : kMagic)
    require(r.u8() == static_cast<std::uint8_t>(expected), Error::Kind::io,
            "bad dataset magic: " + path);
  require(r.u16() == kVersion, Error::Kind::io, "unsupported dataset version: " + path);
  const std::uint32_t count = r.u32();
  const int c = r.u16(), h = r.u16(), w = r.u16(), qlen = r.u16();
  require(c == kImageChannels && h == kImageHeight && w == kImageWidth && qlen == kQuestionLength,
          Error::Kind::io, "dataset geometry mismatch: " + path);

  Dataset ds;
  ds.items.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    QaItem item;
    item.image = Image(c, h, w);
    for (auto& v : item.image.data) v = r.f32();
    std::array<float, kQuestionLength> enc;
    for (auto& v : enc) v = r.f32();
    item.question = decode_question(enc);
    item.answer = r.u8();
    require(item.answer < kAnswerClasses, Error::Kind::io, "dataset answer out of range: " + path);
    const int n_objects = r.u8();
    item.scene.objects.resize(static_cast<std::size_t>(n_objects));
    for (auto& obj : item.scene.objects) {
      obj.shape = static_cast<ObjShape>(r.u8());
      obj.color = static_cast<ObjColor>(r.u8());
      obj.x = r.u16();
      obj.y = r.u16();
      obj.size = r.u8();
    }
    ds.class_histogram[static_cast<std::size_t>(item.answer)] += 1;
    ds.items.push_back(std::move(item));
  }
  return ds;
}

}  // namespace csvqa
