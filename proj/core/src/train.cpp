#include "kinship/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <cstdio>
#include <thread>
#include <unordered_map>

#include "kinship/error.hpp"
#include "kinship/ops.hpp"
#include "kinship/rng.hpp"

namespace kinship {

SgdMomentum::SgdMomentum(const ParameterSet& parameters, double learning_rate, double momentum)
    : parameters_(parameters.tensors()), learning_rate_(learning_rate), momentum_(momentum) {
  if (!(learning_rate >= 0.0)) throw ParameterError("learning rate must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("momentum must lie in [0, 1)");
  for (const Tensor& p : parameters_) velocity_.emplace_back(p.size(), 0.0);
}

void SgdMomentum::step() {
  for (std::size_t i = 0; i < parameters_.size(); ++i) {
    auto values = parameters_[i].mutable_values();
    const auto grad = parameters_[i].grad();
    auto& v = velocity_[i];
    for (std::size_t k = 0; k < values.size(); ++k) {
      v[k] = momentum_ * v[k] + grad[k] + weight_decay_ * values[k];
      values[k] -= learning_rate_ * v[k];
    }
  }
}

void SgdMomentum::set_learning_rate(double learning_rate) {
  if (!(learning_rate >= 0.0)) throw ParameterError("learning rate must be non-negative");
  learning_rate_ = learning_rate;
}

void SgdMomentum::set_weight_decay(double weight_decay) {
  if (!(weight_decay >= 0.0)) throw ParameterError("weight_decay must be non-negative");
  weight_decay_ = weight_decay;
}

double SgdMomentum::grad_norm() const {
  double total = 0.0;
  for (const Tensor& p : parameters_) {
    for (double g : p.grad()) total += g * g;
  }
  return std::sqrt(total);
}

void SgdMomentum::scale_grad(double factor) {
  for (Tensor& p : parameters_) {
    for (double& g : p.mutable_grad()) g *= factor;
  }
}

namespace {

bool has_both_classes(std::span<const ImagePair> pairs) {
  bool pos = false, neg = false;
  for (const auto& p : pairs) {
    pos = pos || p.label == 1;
    neg = neg || p.label == 0;
  }
  return pos && neg;
}

}  // namespace

TrainResult train(SiameseModel& model, std::span<const RelationshipRecord> relations, const PersonImages& images,
                  const TrainConfig& config, std::span<const ImagePair> holdout,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  if (config.batch_size == 0) throw ParameterError("batch_size must be positive");
  if (config.pairs_per_relation == 0) throw ParameterError("pairs_per_relation must be positive");
  if (!(config.grad_clip >= 0.0)) throw ParameterError("grad_clip must be non-negative");
  if (config.lr_schedule != "constant" && config.lr_schedule != "cosine") {
    throw ParameterError("lr_schedule must be constant or cosine, got '" + config.lr_schedule + "'");
  }
  if (config.average_from > config.epochs) throw ParameterError("average_from exceeds epochs");
  SgdMomentum optimizer(model.parameters(), config.learning_rate, config.momentum);
  optimizer.set_weight_decay(config.weight_decay);
  const bool evaluate = has_both_classes(holdout);
  LabelSet holdout_labels;
  if (evaluate) {
    for (const auto& p : holdout) holdout_labels.add(p.pair_id, p.label);
  }

  std::vector<std::vector<double>> average;
  std::size_t averaged = 0;
  // Exchanges live weights with the running mean; applying it twice is a no-op.
  auto swap_average = [&] {
    const auto& entries = model.parameters().entries();
    for (std::size_t k = 0; k < entries.size(); ++k) {
      Tensor live = entries[k].second;
      const auto values = live.mutable_values();
      std::swap_ranges(values.begin(), values.end(), average[k].begin());
    }
  };

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.lr_schedule == "cosine") {
      const double progress = static_cast<double>(epoch - 1) / static_cast<double>(config.epochs);
      optimizer.set_learning_rate(config.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
    }
    std::vector<PairSample> pairs;
    for (std::size_t draw = 0; draw < config.pairs_per_relation; ++draw) {
      const std::uint64_t seed = config.seed + epoch * config.pairs_per_relation + draw;
      auto more = sample_pairs(relations, images, config.negative_ratio, seed);
      pairs.insert(pairs.end(), more.begin(), more.end());
    }
    if (config.pairs_per_relation > 1) Rng(config.seed ^ epoch).shuffle(pairs.begin(), pairs.end());
    double epoch_loss = 0.0;
    const std::size_t batches = (pairs.size() + config.batch_size - 1) / config.batch_size;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(pairs.size(), begin + config.batch_size);
      model.parameters().zero_grad();
      Tape tape;
      Tensor total;
      for (std::size_t i = begin; i < end; ++i) {
        const Tensor loss = cross_entropy_loss(tape, model.logits(tape, pairs[i].a, pairs[i].b), pairs[i].label);
        total = total.defined() ? add(tape, total, loss) : loss;
      }
      const Tensor batch_loss = scale(tape, total, 1.0 / static_cast<double>(end - begin));
      const double value = batch_loss.item();
      if (!std::isfinite(value)) {
        throw EvaluationError("non-finite loss " + std::to_string(value) + " at epoch " + std::to_string(epoch) +
                              ", batch " + std::to_string(b + 1) + " (first pair " + pairs[begin].image_a + " / " +
                              pairs[begin].image_b + ")");
      }
      tape.backward(batch_loss);
      if (config.grad_clip > 0.0) {
        const double norm = optimizer.grad_norm();
        if (norm > config.grad_clip) optimizer.scale_grad(config.grad_clip / norm);
      }
      optimizer.step();
      epoch_loss += value * static_cast<double>(end - begin);
    }

    const bool averaging = config.average_from > 0 && epoch >= config.average_from;
    if (averaging) {
      const auto& entries = model.parameters().entries();
      if (average.empty()) {
        for (const auto& entry : entries) average.emplace_back(entry.second.size(), 0.0);
      }
      ++averaged;
      for (std::size_t k = 0; k < entries.size(); ++k) {
        const auto values = entries[k].second.values();
        for (std::size_t i = 0; i < values.size(); ++i) {
          average[k][i] += (values[i] - average[k][i]) / static_cast<double>(averaged);
        }
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.loss = epoch_loss / static_cast<double>(pairs.size());
    if (averaging) swap_average();
    if (evaluate) record.holdout_auc = roc_auc(predict(model, holdout, "holdout"), holdout_labels);
    if (averaging && epoch < config.epochs) swap_average();
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  return result;
}

PredictionSet predict(const SiameseModel& model, std::span<const ImagePair> pairs, std::string name,
                      std::size_t threads) {
  std::vector<std::string> ids;
  std::vector<Tensor> images;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& p : pairs) {
    const std::pair<const std::string*, const Tensor*> sides[] = {{&p.image_a, &p.a}, {&p.image_b, &p.b}};
    for (const auto& [id, image] : sides) {
      if (slot.emplace(*id, ids.size()).second) {
        ids.push_back(*id);
        images.push_back(*image);
      }
    }
  }

  std::vector<Tensor> features(images.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(1, images.size()));
  auto work = [&](std::size_t worker) {
    for (std::size_t i = worker; i < images.size(); i += threads) {
      Tape tape(Tape::Mode::Inference);
      features[i] = model.features(tape, images[i]);
    }
  };
  if (threads <= 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t);
  }

  PredictionSet out;
  out.name = std::move(name);
  out.entries.reserve(pairs.size());
  for (const auto& p : pairs) {
    const double score =
        model.kin_probability_from_features(features[slot.at(p.image_a)], features[slot.at(p.image_b)]);
    out.entries.emplace_back(p.pair_id, score);
  }
  return out;
}

void write_history_csv(std::ostream& out, std::span<const EpochRecord> history) {
  out << "epoch,loss,holdout_auc\n";
  char buf[128];
  for (const auto& r : history) {
    if (std::isnan(r.holdout_auc)) {
      std::snprintf(buf, sizeof(buf), "%zu,%.6f,nan\n", r.epoch, r.loss);
    } else {
      std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f\n", r.epoch, r.loss, r.holdout_auc);
    }
    out << buf;
  }
}

}  // namespace kinship
