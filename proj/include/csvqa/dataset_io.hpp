#pragma once

#include <string>

#include "csvqa/scenegen.hpp"

namespace csvqa {

// "CSVQ" dataset file, little-endian throughout: magic, version u16, item
// count u32, image dims (u16 c, u16 h, u16 w), question length u16, then per
// item: image floats (f32), question floats (f32), answer class u8, scene
// record (object count u8; per object: shape u8, color u8, x u16, y u16,
// size u8). Identical datasets serialize to identical bytes.
void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

}  // namespace csvqa
