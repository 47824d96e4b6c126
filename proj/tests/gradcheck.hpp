#pragma once

// Test-side gradient oracle: central finite differences over every element
// of every leaf, compared against reverse-mode gradients. h = 1e-3; the
// comparison is |fd - an| <= tol * max(1, |fd|, |an|), i.e. relative above
// unit magnitude with an absolute floor (f32 forward noise makes a pure
// relative test meaningless for near-zero gradients).

#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "csvqa/ops.hpp"
#include "csvqa/rng.hpp"
#include "csvqa/tensor.hpp"

namespace gradcheck {

inline csvqa::Tensor random_leaf(std::vector<int> shape, csvqa::Rng& rng, double lo = -1.0,
                                 double hi = 1.0) {
  std::vector<float> data(csvqa::shape_product(shape));
  for (auto& v : data) v = static_cast<float>(lo + (hi - lo) * rng.next_double());
  return csvqa::Tensor::from_data(std::move(shape), std::move(data), true);
}

// Reduces an arbitrary output to a scalar with fixed random weights; a plain
// mean would shrink per-element gradients by 1/size and drown them in
// finite-difference noise.
inline csvqa::Tensor weighted_sum(const csvqa::Tensor& out, std::uint64_t seed) {
  csvqa::Rng rng(seed);
  std::vector<float> w(out.size());
  for (auto& v : w) v = static_cast<float>(0.5 + rng.next_double());
  csvqa::Tensor weights = csvqa::Tensor::from_data(out.shape(), std::move(w));
  return csvqa::scale(csvqa::mean(csvqa::mul(out, weights)), static_cast<double>(out.size()));
}

struct Result {
  double max_error = 0.0;
  std::size_t checked = 0;
};

// make_loss must rebuild the graph from the (possibly perturbed) leaves.
inline Result check(const std::vector<csvqa::Tensor>& leaves,
                    const std::function<csvqa::Tensor()>& make_loss, double h = 1e-3) {
  csvqa::Tensor loss = make_loss();
  csvqa::backward(loss);

  std::vector<std::vector<float>> analytic;
  for (const auto& leaf : leaves) {
    REQUIRE(leaf.has_grad());
    analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
  }

  Result res;
  for (std::size_t p = 0; p < leaves.size(); ++p) {
    csvqa::Tensor leaf = leaves[p];
    auto data = leaf.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const float saved = data[i];
      double plus, minus;
      {
        csvqa::NoGradGuard guard;
        data[i] = saved + static_cast<float>(h);
        plus = make_loss().item();
        data[i] = saved - static_cast<float>(h);
        minus = make_loss().item();
        data[i] = saved;
      }
      const double fd = (plus - minus) / (2.0 * h);
      const double an = analytic[p][i];
      const double err = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
      res.max_error = std::max(res.max_error, err);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace gradcheck
