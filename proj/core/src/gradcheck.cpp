#include "kinship/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "kinship/error.hpp"
#include "kinship/rng.hpp"

namespace kinship {

namespace {

double evaluate(const std::function<Tensor(Tape&)>& f) {
  Tape tape(Tape::Mode::Inference);
  const Tensor y = f(tape);
  if (y.size() != 1) throw ContractError("gradient check needs a scalar function, got shape " + to_string(y.shape()));
  const double v = y.item();
  if (!std::isfinite(v)) throw EvaluationError("function value is not finite: " + std::to_string(v));
  return v;
}

std::vector<std::size_t> coordinates(std::size_t n, const GradCheckOptions& options, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (options.max_coordinates == 0 || options.max_coordinates >= n) return idx;
  rng.shuffle(idx.begin(), idx.end());
  idx.resize(options.max_coordinates);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

double finite_diff_check(const std::function<Tensor(Tape&)>& f, std::span<Tensor> leaves,
                         const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ParameterError("finite-difference step must be positive");

  std::vector<bool> previous_flags;
  for (Tensor& leaf : leaves) {
    previous_flags.push_back(leaf.requires_grad());
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }

  {
    Tape tape;
    const Tensor y = f(tape);
    if (y.size() != 1) throw ContractError("gradient check needs a scalar function, got shape " + to_string(y.shape()));
    if (!std::isfinite(y.item())) throw EvaluationError("function value is not finite: " + std::to_string(y.item()));
    tape.backward(y);
  }

  Rng rng(options.seed);
  double worst = 0.0;
  const double h = options.step;
  for (Tensor& leaf : leaves) {
    const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
    auto values = leaf.mutable_values();
    for (std::size_t i : coordinates(values.size(), options, rng)) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = evaluate(f);
      values[i] = saved - h;
      const double down = evaluate(f);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }

  for (std::size_t i = 0; i < leaves.size(); ++i) leaves[i].set_requires_grad(previous_flags[i]);
  return worst;
}

double finite_diff_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& x,
                         const GradCheckOptions& options) {
  Tensor leaf = x.detached();
  std::vector<Tensor> leaves{leaf};
  return finite_diff_check([&](Tape& tape) { return f(tape, leaf); }, leaves, options);
}

}  // namespace kinship
