#include "csvqa/optim.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>

#include "csvqa/rng.hpp"

namespace csvqa {

namespace {

std::vector<float>& slot_for(std::map<std::string, std::vector<float>>& slots,
                             const std::string& name, std::size_t size) {
  auto [it, inserted] = slots.try_emplace(name);
  if (inserted) it->second.assign(size, 0.0f);
  require(it->second.size() == size, Error::Kind::invalid_dimensions,
          "optimizer slot shape mismatch for '" + name + "'");
  return it->second;
}

std::span<const float> grad_of(const std::string& name, Tensor& t) {
  require(t.has_grad(), Error::Kind::invalid_argument,
          "optimizer: parameter '" + name + "' has no gradient");
  return t.grad();
}

}  // namespace

void sgd_step(ParamMap& params, OptimizerState& state) {
  ++state.step_count;
  for (auto& [name, tensor] : params) {
    const auto g = grad_of(name, tensor);
    auto& vel = slot_for(state.slot_m, name, tensor.size());
    auto data = tensor.mutable_data();
    const float lr = static_cast<float>(state.learning_rate);
    const float mu = static_cast<float>(state.momentum);
    for (std::size_t i = 0; i < data.size(); ++i) {
      vel[i] = mu * vel[i] + g[i];
      data[i] -= lr * vel[i];
    }
  }
}

void adam_step(ParamMap& params, OptimizerState& state) {
  ++state.step_count;
  const double b1 = state.beta1, b2 = state.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  for (auto& [name, tensor] : params) {
    const auto g = grad_of(name, tensor);
    auto& m = slot_for(state.slot_m, name, tensor.size());
    auto& v = slot_for(state.slot_v, name, tensor.size());
    auto data = tensor.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double gi = g[i];
      m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * gi);
      v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * gi * gi);
      const double mhat = m[i] / corr1;
      const double vhat = v[i] / corr2;
      data[i] -= static_cast<float>(state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon));
    }
  }
}

void zero_all_grads(ParamMap& params) {
  for (auto& [name, tensor] : params) tensor.zero_grad();
}

Tensor init_params(std::vector<int> shape, InitScheme scheme, std::uint64_t seed) {
  require(!shape.empty(), Error::Kind::invalid_dimensions, "init_params: empty shape");
  double fan_in = 0.0, fan_out = 0.0;
  if (shape.size() == 1) {
    fan_in = fan_out = shape[0];
  } else if (shape.size() == 2) {
    fan_in = shape[0];
    fan_out = shape[1];
  } else {
    double receptive = 1.0;
    for (std::size_t i = 2; i < shape.size(); ++i) receptive *= shape[i];
    fan_in = shape[1] * receptive;
    fan_out = shape[0] * receptive;
  }
  const double bound = scheme == InitScheme::he_uniform
                           ? std::sqrt(6.0 / fan_in)
                           : std::sqrt(6.0 / (fan_in + fan_out));
  Rng rng = Rng(seed).split("param-init");
  std::vector<float> data(shape_product(shape));
  for (auto& v : data) v = static_cast<float>((2.0 * rng.next_double() - 1.0) * bound);
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

namespace {

void put_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  std::ifstream in;
  std::string path;

  explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
    require(in.good(), Error::Kind::io, "cannot open checkpoint: " + p);
  }
  void bytes(char* dst, std::size_t count) {
    in.read(dst, static_cast<std::streamsize>(count));
    require(static_cast<std::size_t>(in.gcount()) == count, Error::Kind::io,
            "truncated checkpoint: " + path);
  }
  std::uint16_t u16() {
    unsigned char b[2];
    bytes(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::uint8_t u8() {
    unsigned char b;
    bytes(reinterpret_cast<char*>(&b), 1);
    return b;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const ParamMap& params) {
  std::string buf;
  buf += "CKPT";
  put_u16(buf, 1);
  put_u32(buf, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    require(name.size() <= 0xffff, Error::Kind::invalid_argument, "tensor name too long");
    put_u16(buf, static_cast<std::uint16_t>(name.size()));
    buf += name;
    const auto& shape = tensor.shape();
    require(shape.size() <= 0xff, Error::Kind::invalid_dimensions, "tensor rank too large");
    buf.push_back(static_cast<char>(shape.size()));
    for (int d : shape) put_u32(buf, static_cast<std::uint32_t>(d));
    for (float v : tensor.data()) put_u32(buf, std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), Error::Kind::io, "cannot write checkpoint: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  require(out.good(), Error::Kind::io, "checkpoint write failed: " + path);
}

ParamMap load_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  require(std::string(magic, 4) == "CKPT", Error::Kind::io, "bad checkpoint magic: " + path);
  const std::uint16_t version = r.u16();
  require(version == 1, Error::Kind::io,
          "unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  ParamMap params;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint16_t name_len = r.u16();
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len);
    const std::uint8_t rank = r.u8();
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(r.u32());
    std::vector<float> data(shape_product(shape));
    for (auto& v : data) v = std::bit_cast<float>(r.u32());
    params.emplace(std::move(name), Tensor::from_data(std::move(shape), std::move(data), true));
  }
  return params;
}

}  // namespace csvqa
