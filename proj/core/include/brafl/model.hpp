#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "brafl/core.hpp"
#include "brafl/dataset.hpp"
#include "brafl/rng.hpp"

namespace brafl {

/// Multinomial logistic classifier. Flattened as W (classes x features,
/// row-major) followed by b (classes).
class LogisticModel {
 public:
  LogisticModel(std::size_t num_classes, std::size_t num_features);
  LogisticModel(std::size_t num_classes, std::size_t num_features, const ParamVector& params);

  static std::size_t param_count(std::size_t num_classes, std::size_t num_features) {
    return num_classes * num_features + num_classes;
  }

  std::size_t num_classes() const noexcept { return classes_; }
  std::size_t num_features() const noexcept { return features_; }

  ParamVector to_params() const { return ParamVector(params_); }
  std::span<const double> raw() const noexcept { return params_; }
  std::span<double> raw() noexcept { return params_; }

  double weight(std::size_t c, std::size_t j) const { return params_[c * features_ + j]; }
  double bias(std::size_t c) const { return params_[classes_ * features_ + c]; }

  /// Writes the class scores W x + b into `logits`.
  void logits(std::span<const double> x, std::span<double> logits) const;
  /// argmax of the scores; ties go to the lowest class id.
  ClassId predict(std::span<const double> x) const;

 private:
  std::size_t classes_;
  std::size_t features_;
  std::vector<double> params_;
};

struct LossAndGrad {
  double loss = 0.0;
  ParamVector grad;
};

/// Mean softmax cross-entropy plus (weight_decay/2) ||W||^2 (bias not decayed),
/// with its analytic gradient.
LossAndGrad model_loss_and_grad(const LogisticModel& model, const Dataset& batch,
                                double weight_decay);

/// Same over the rows listed in `rows`.
LossAndGrad model_loss_and_grad(const LogisticModel& model, const Dataset& data,
                                std::span<const std::size_t> rows, double weight_decay);

struct TrainingHyperparams {
  double learning_rate = 0.01;
  /// Capped at the partition size; the last partial batch is kept.
  std::size_t batch_size = 128;
  std::size_t local_epochs = 10;
  double momentum = 0.9;
  double weight_decay = 1e-4;

  void validate() const;
};

/// Local SGD with Nesterov momentum starting from `global_params`. Batches are
/// reshuffled every epoch from `rng`.
ClientUpdate local_train(const ParamVector& global_params, const Dataset& partition,
                         const TrainingHyperparams& hp, Rng& rng, std::size_t client_id = 0);

/// Fraction of rows whose predicted class equals the label.
double evaluate_acc(const ParamVector& params, const Dataset& testset);

/// Fraction of triggered rows predicted as target_class.
double evaluate_asr(const ParamVector& params, const Dataset& triggered_testset,
                    ClassId target_class);

}  // namespace brafl
