#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "csvqa/tensor.hpp"

namespace csvqa {

// Named parameter collection. std::map so iteration (updates, checkpoint
// layout) is always in sorted-name order.
using ParamMap = std::map<std::string, Tensor>;

enum class OptimKind { sgd_momentum, adam };
enum class InitScheme { he_uniform, xavier_uniform };

struct OptimizerState {
  OptimKind kind = OptimKind::adam;
  double learning_rate = 1e-3;
  double momentum = 0.9;  // sgd-momentum
  double beta1 = 0.9;     // adam
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step_count = 0;
  std::map<std::string, std::vector<float>> slot_m;  // momentum / first moment
  std::map<std::string, std::vector<float>> slot_v;  // second moment (adam only)
};

// Standard updates over every parameter in sorted order; throws if a
// parameter has no accumulated gradient.
void sgd_step(ParamMap& params, OptimizerState& state);
void adam_step(ParamMap& params, OptimizerState& state);

void zero_all_grads(ParamMap& params);

// Seeded uniform init. Fan derivation: rank 2 weight [in,out] has
// fan_in = in, fan_out = out; rank 4 kernel [c_out,c_in,k,k] has
// fan_in = c_in*k*k, fan_out = c_out*k*k; rank 1 uses its length for both.
// Bounds: he +-sqrt(6/fan_in), xavier +-sqrt(6/(fan_in+fan_out)).
Tensor init_params(std::vector<int> shape, InitScheme scheme, std::uint64_t seed);

// "CKPT" checkpoint file: magic, version u16, tensor count u32, then per
// tensor: name (u16 length + bytes), rank u8, dims u32 each, f32
// little-endian payload. Tensor order is sorted by name.
void save_checkpoint(const std::string& path, const ParamMap& params);
ParamMap load_checkpoint(const std::string& path);

}  // namespace csvqa
