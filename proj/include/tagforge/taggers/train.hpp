#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "tagforge/corpus.hpp"
#include "tagforge/error.hpp"
#include "tagforge/log.hpp"
#include "tagforge/numgrad.hpp"
#include "tagforge/rng.hpp"
#include "tagforge/taggers/batch.hpp"

namespace tagforge::taggers {

enum class OptimizerKind { Sgd, AdamW };

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::AdamW;
  double lr = 1e-3;
  double momentum = 0.9;
  numgrad::AdamWConfig adamw;
  // 0 keeps lr constant; otherwise linear warmup then linear decay to 0 at
  // total_steps (0 = epochs * batches per epoch).
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 0;
  // Multiplies the base rate once per finished epoch; 1 disables it.
  double epoch_decay = 1.0;
};

struct TrainOptions {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  OptimizerSpec optimizer;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double lr = 0.0;
};

struct TrainRun {
  std::uint64_t seed = 0;
  double initial_train_loss = 0.0;  // eval-mode losses before the first update
  double initial_valid_loss = 0.0;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // argmin of valid loss, earliest on ties
};

/// 1-based index of the smallest value, earliest on ties; 0 when empty.
/// NaN entries never win.
inline std::size_t select_checkpoint(const std::vector<double>& valid_losses) {
  std::size_t best = 0;
  for (std::size_t i = 0; i < valid_losses.size(); ++i) {
    if (std::isnan(valid_losses[i])) continue;
    if (best == 0 || valid_losses[i] < valid_losses[best - 1]) best = i + 1;
  }
  return best;
}

inline std::vector<std::vector<std::size_t>> chunk(const std::vector<std::size_t>& order, std::size_t size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < order.size(); s += size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), s + size)));
  }
  return out;
}

inline std::vector<const corpus::Sentence*> pick(const corpus::Corpus& c, const std::vector<std::size_t>& idx) {
  std::vector<const corpus::Sentence*> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(&c[i]);
  return out;
}

/// Mean batch loss over `data` in corpus order with training behaviour
/// (dropout) off; batches are weighted by their sentence count.
template <typename Model>
double evaluate_loss(Model& model, const corpus::Corpus& data, std::size_t batch_size) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].size() > 0) order.push_back(i);
  }
  if (order.empty()) throw Error(ErrorKind::EmptyCorpus, "cannot evaluate a loss on an empty corpus");
  Pcg32 unused(0, 0);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& idx : chunk(order, std::max<std::size_t>(1, batch_size))) {
    numgrad::Tape tape(false);
    auto batch = model.make_batch(pick(data, idx), true);
    total += model.loss(tape, batch, false, unused).value().item() * static_cast<double>(idx.size());
    count += idx.size();
  }
  return total / static_cast<double>(count);
}

/// Called after each epoch with the record and the model at that point.
template <typename Model>
using EpochHook = std::function<void(const EpochRecord&, const Model&)>;

/// Mini-batch training in a seeded shuffled order. Each epoch records the
/// mean training batch loss (dropout on), the validation loss (dropout off)
/// and the learning rate of its last step. A non-finite loss or gradient
/// restores the parameters of the last completed epoch and raises a
/// training error; checkpoints already handed to `on_epoch` stay valid.
template <typename Model>
TrainRun train_tagger(Model& model, const corpus::Corpus& train, const corpus::Corpus& valid,
                      const TrainOptions& options, const EpochHook<Model>& on_epoch = {}) {
  if (options.epochs < 1) throw Error(ErrorKind::Config, "epochs must be at least 1");
  if (options.batch_size < 1) throw Error(ErrorKind::Config, "batch_size must be at least 1");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train[i].size() > 0) order.push_back(i);
  }
  if (order.empty()) throw Error(ErrorKind::EmptyCorpus, "training corpus is empty");
  if (valid.empty()) throw Error(ErrorKind::EmptyCorpus, "validation corpus is empty");

  const OptimizerSpec& spec = options.optimizer;
  const std::size_t per_epoch = (order.size() + options.batch_size - 1) / options.batch_size;
  std::optional<numgrad::WarmupSchedule> schedule;
  if (spec.warmup_steps > 0) {
    std::size_t total = spec.total_steps > 0 ? spec.total_steps : options.epochs * per_epoch;
    std::size_t warmup = spec.warmup_steps;
    if (warmup > total) {
      log::warn("warmup of ", warmup, " steps exceeds the ", total, " training steps; clamped to ", total);
      warmup = total;
    }
    schedule = numgrad::WarmupSchedule(spec.lr, warmup, total);
  }

  auto params = model.parameters();
  numgrad::AdamWState adam;
  adam.config = spec.adamw;
  numgrad::SgdMomentumState sgd;
  sgd.momentum = spec.momentum;
  Pcg32 shuffle_rng(options.seed, 0x5u);
  Pcg32 dropout_rng(options.seed, 0xd0u);

  auto snapshot = [&] {
    std::vector<Tensor> s;
    for (auto* p : params) s.push_back(p->value);
    return s;
  };
  auto good = snapshot();

  TrainRun run;
  run.seed = options.seed;
  run.initial_train_loss = evaluate_loss(model, train, options.batch_size);
  run.initial_valid_loss = evaluate_loss(model, valid, options.batch_size);

  std::size_t step = 0;
  double decay = 1.0;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0, lr = 0.0;
    std::size_t batches = 0;
    for (const auto& idx : chunk(order, options.batch_size)) {
      ++step;
      if (schedule && step > schedule->total_steps) {
        // Only reachable with an explicit total_steps below the run length.
        lr = 0.0;
      } else {
        lr = (schedule ? numgrad::warmup_lr(*schedule, step) : spec.lr) * decay;
      }
      for (auto* p : params) p->zero_grad();
      auto batch = model.make_batch(pick(train, idx), true);
      double value = 0.0;
      try {
        numgrad::Tape tape;
        Var loss = model.loss(tape, batch, true, dropout_rng);
        value = loss.value().item();
        if (!std::isfinite(value)) throw Error(ErrorKind::Training, "non-finite loss");
        tape.backward(loss);
        if (spec.kind == OptimizerKind::AdamW) {
          numgrad::adamw_step(params, adam, lr);
        } else {
          numgrad::sgd_momentum_step(params, sgd, lr);
        }
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Training && e.kind() != ErrorKind::Optimizer) throw;
        for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = good[k];
        throw Error(ErrorKind::Training, std::string(e.what()) + " in epoch " + std::to_string(epoch) + ", step " +
                                             std::to_string(step) + "; parameters restored to epoch " +
                                             std::to_string(epoch - 1));
      }
      loss_sum += value;
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.valid_loss = evaluate_loss(model, valid, options.batch_size);
    rec.lr = lr;
    if (!std::isfinite(rec.valid_loss)) {
      for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = good[k];
      throw Error(ErrorKind::Training, "non-finite validation loss in epoch " + std::to_string(epoch) +
                                           "; parameters restored to epoch " + std::to_string(epoch - 1));
    }
    run.epochs.push_back(rec);
    good = snapshot();
    if (on_epoch) on_epoch(rec, model);
    decay *= spec.epoch_decay;
  }
  std::vector<double> vl;
  for (const auto& r : run.epochs) vl.push_back(r.valid_loss);
  run.best_epoch = select_checkpoint(vl);
  return run;
}

/// Word-level tags per sentence (argmax, dropout off). Empty sentences yield
/// an empty tag list and a warning.
template <typename Model>
std::vector<std::vector<std::string>> predict(Model& model, const corpus::Corpus& sentences, std::size_t batch_size = 64) {
  std::vector<std::vector<std::string>> out(sentences.size());
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (sentences[i].size() == 0) {
      log::warn("skipping empty sentence ", sentences[i].id);
      continue;
    }
    order.push_back(i);
  }
  Pcg32 unused(0, 0);
  for (const auto& idx : chunk(order, std::max<std::size_t>(1, batch_size))) {
    numgrad::Tape tape(false);
    auto batch = model.make_batch(pick(sentences, idx), false);
    auto tags = model.decode(batch, model.logits(tape, batch, false, unused).value());
    for (std::size_t k = 0; k < idx.size(); ++k) out[idx[k]] = std::move(tags[k]);
  }
  return out;
}

}  // namespace tagforge::taggers
