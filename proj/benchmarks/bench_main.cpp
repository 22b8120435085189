#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "kinship/metrics.hpp"
#include "kinship/ops.hpp"
#include "kinship/pvt.hpp"
#include "kinship/rng.hpp"
#include "kinship/siamese.hpp"
#include "kinship/train.hpp"

using namespace kinship;

namespace {

Tensor random_tensor(Rng& rng, Shape shape) {
  std::vector<double> v(element_count(shape));
  for (auto& x : v) x = rng.normal();
  return Tensor::from(std::move(shape), std::move(v));
}

PredictionSet random_predictions(Rng& rng, std::size_t n, const std::string& name) {
  PredictionSet p;
  p.name = name;
  for (std::size_t i = 0; i < n; ++i) p.entries.emplace_back("a" + std::to_string(i) + "-b" + std::to_string(i), rng.uniform());
  return p;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_tensor(rng, {n, n}), b = random_tensor(rng, {n, n});
  Tape tape(Tape::Mode::Inference);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(tape, a, b));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_PvtNanoForward(benchmark::State& state) {
  const PVTModel model(pvt_nano());
  Rng rng(2);
  const Tensor image = random_tensor(rng, {32, 32, 1});
  for (auto _ : state) {
    Tape tape(Tape::Mode::Inference);
    benchmark::DoNotOptimize(model.forward(tape, image));
  }
}
BENCHMARK(BM_PvtNanoForward)->Unit(benchmark::kMillisecond);

// One optimizer step on a batch of 8 pairs: forward, backward and update.
void BM_TrainStep(benchmark::State& state) {
  SiameseModel model(SiameseConfig{});
  SgdMomentum optimizer(model.parameters(), 1e-3, 0.9);
  Rng rng(3);
  std::vector<std::pair<Tensor, Tensor>> batch;
  for (int i = 0; i < 8; ++i) batch.emplace_back(random_tensor(rng, {32, 32, 1}), random_tensor(rng, {32, 32, 1}));
  for (auto _ : state) {
    model.parameters().zero_grad();
    Tape tape;
    Tensor total;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Tensor loss = cross_entropy_loss(tape, model.logits(tape, batch[i].first, batch[i].second), i % 2);
      total = total.defined() ? add(tape, total, loss) : loss;
    }
    tape.backward(total);
    optimizer.step();
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_RocAuc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  std::vector<double> scores(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = static_cast<double>(rng.index(1000)) / 1000.0;
    labels[i] = static_cast<int>(i % 2);
  }
  for (auto _ : state) benchmark::DoNotOptimize(roc_auc(scores, labels));
}
BENCHMARK(BM_RocAuc)->Arg(5310)->Arg(100000);

void BM_CorrMatrix(benchmark::State& state) {
  Rng rng(5);
  std::vector<PredictionSet> sets;
  for (int k = 0; k < state.range(0); ++k) sets.push_back(random_predictions(rng, 5310, "m" + std::to_string(k)));
  for (auto _ : state) benchmark::DoNotOptimize(corr_matrix(sets));
}
BENCHMARK(BM_CorrMatrix)->Arg(4)->Arg(11);

}  // namespace

BENCHMARK_MAIN();
