#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "kinship/metrics.hpp"
#include "kinship/parameters.hpp"
#include "kinship/siamese.hpp"

namespace kinship {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double negative_ratio = 1.0;
  // Independent image draws per relation (and per matching negative) each epoch.
  std::size_t pairs_per_relation = 1;
  // Rescales the batch gradient to this global L2 norm when it is larger; 0 disables.
  double grad_clip = 0.0;
  // L2 penalty coefficient; adds weight_decay * p to every gradient.
  double weight_decay = 0.0;
  // "constant", or "cosine": lr * (1 + cos(pi * (epoch - 1) / epochs)) / 2.
  std::string lr_schedule = "constant";
  // From this epoch on, the uniform mean of end-of-epoch weights is tracked,
  // scored as the holdout AUC, and left in the model at the end; 0 disables.
  std::size_t average_from = 0;
  std::uint64_t seed = 0;
};

/// A pair to score; `label` is -1 when unknown.
struct ImagePair {
  std::string pair_id;
  std::string image_a;
  std::string image_b;
  Tensor a;
  Tensor b;
  int label = -1;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean cross-entropy over the epoch's pairs
  double holdout_auc = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  std::vector<EpochRecord> history;
};

/// SGD with heavy-ball momentum: v = momentum * v + grad + wd * p; p -= lr * v.
class SgdMomentum {
 public:
  SgdMomentum(const ParameterSet& parameters, double learning_rate, double momentum);
  void step();
  // Global L2 norm of the current gradients.
  double grad_norm() const;
  // Multiplies every gradient by `factor`.
  void scale_grad(double factor);
  void set_learning_rate(double learning_rate);
  void set_weight_decay(double weight_decay);

 private:
  std::vector<Tensor> parameters_;
  std::vector<std::vector<double>> velocity_;
  double learning_rate_;
  double momentum_;
  double weight_decay_ = 0.0;
};

/// Minibatch training on cross-entropy. Each epoch concatenates
/// `pairs_per_relation` draws of sample_pairs, seeded from seed and the
/// epoch, then shuffles them into batches. Holdout AUC is recorded per epoch when `holdout` is
/// non-empty and has both classes. A non-finite batch loss throws
/// EvaluationError naming the epoch and batch.
TrainResult train(SiameseModel& model, std::span<const RelationshipRecord> relations, const PersonImages& images,
                  const TrainConfig& config, std::span<const ImagePair> holdout = {},
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Scores pairs with the kin probability. Each distinct image id is
/// embedded once; embedding fans out over `threads` workers (0 = hardware
/// concurrency). Output order follows `pairs`.
PredictionSet predict(const SiameseModel& model, std::span<const ImagePair> pairs, std::string name = "predictions",
                      std::size_t threads = 0);

// Header "epoch,loss,holdout_auc"; an unmeasured AUC is written as "nan".
void write_history_csv(std::ostream& out, std::span<const EpochRecord> history);

}  // namespace kinship
