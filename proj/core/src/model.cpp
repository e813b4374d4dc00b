#include "brafl/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace brafl {

LogisticModel::LogisticModel(std::size_t num_classes, std::size_t num_features)
    : classes_(num_classes),
      features_(num_features),
      params_(param_count(num_classes, num_features), 0.0) {
  if (num_classes < 2 || num_features == 0) throw Error("model: need >= 2 classes and >= 1 feature");
}

LogisticModel::LogisticModel(std::size_t num_classes, std::size_t num_features,
                             const ParamVector& params)
    : LogisticModel(num_classes, num_features) {
  if (params.dim() != params_.size()) {
    throw Error("model: expected " + std::to_string(params_.size()) + " parameters, got " +
                std::to_string(params.dim()));
  }
  params_ = params.vec();
}

void LogisticModel::logits(std::span<const double> x, std::span<double> out) const {
  const double* b = params_.data() + classes_ * features_;
  for (std::size_t c = 0; c < classes_; ++c) {
    const double* w = params_.data() + c * features_;
    double acc = b[c];
    for (std::size_t j = 0; j < features_; ++j) acc += w[j] * x[j];
    out[c] = acc;
  }
}

ClassId LogisticModel::predict(std::span<const double> x) const {
  std::vector<double> z(classes_);
  logits(x, z);
  std::size_t best = 0;
  for (std::size_t c = 1; c < classes_; ++c) {
    if (z[c] > z[best]) best = c;
  }
  return static_cast<ClassId>(best);
}

LossAndGrad model_loss_and_grad(const LogisticModel& model, const Dataset& data,
                                std::span<const std::size_t> rows, double weight_decay) {
  if (rows.empty()) throw Error("model_loss_and_grad: empty batch");
  if (data.num_features != model.num_features() || data.num_classes != model.num_classes()) {
    throw Error("model_loss_and_grad: batch shape does not match the model");
  }
  const std::size_t classes = model.num_classes();
  const std::size_t features = model.num_features();
  std::vector<double> grad(LogisticModel::param_count(classes, features), 0.0);
  std::vector<double> z(classes);
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  double loss = 0.0;

  for (std::size_t i : rows) {
    const auto x = data.row(i);
    const ClassId y = data.labels[i];
    model.logits(x, z);
    const double zmax = *std::max_element(z.begin(), z.end());
    double norm = 0.0;
    for (double& v : z) {
      v = std::exp(v - zmax);
      norm += v;
    }
    loss += -(std::log(z[y] / norm));
    for (std::size_t c = 0; c < classes; ++c) {
      const double coeff = (z[c] / norm - (c == y ? 1.0 : 0.0)) * inv_n;
      double* gw = grad.data() + c * features;
      for (std::size_t j = 0; j < features; ++j) gw[j] += coeff * x[j];
      grad[classes * features + c] += coeff;
    }
  }
  loss *= inv_n;

  const auto w = model.raw();
  double wsq = 0.0;
  for (std::size_t p = 0; p < classes * features; ++p) {
    wsq += w[p] * w[p];
    grad[p] += weight_decay * w[p];
  }
  loss += 0.5 * weight_decay * wsq;
  return LossAndGrad{loss, ParamVector(std::move(grad))};
}

LossAndGrad model_loss_and_grad(const LogisticModel& model, const Dataset& batch,
                                double weight_decay) {
  std::vector<std::size_t> rows(batch.size());
  std::iota(rows.begin(), rows.end(), 0);
  return model_loss_and_grad(model, batch, rows, weight_decay);
}

void TrainingHyperparams::validate() const {
  if (!(learning_rate >= 0.0)) throw Error("training: learning_rate must be nonnegative");
  if (batch_size == 0) throw Error("training: batch_size must be positive");
  if (local_epochs == 0) throw Error("training: local_epochs must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("training: momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw Error("training: weight_decay must be nonnegative");
}

ClientUpdate local_train(const ParamVector& global_params, const Dataset& partition,
                         const TrainingHyperparams& hp, Rng& rng, std::size_t client_id) {
  hp.validate();
  if (partition.size() == 0) throw Error("local_train: empty partition");
  LogisticModel model(partition.num_classes, partition.num_features, global_params);

  const std::size_t n = partition.size();
  const std::size_t batch = std::min(hp.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> velocity(model.raw().size(), 0.0);

  for (std::size_t epoch = 0; epoch < hp.local_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      const auto lg = model_loss_and_grad(model, partition, rows, hp.weight_decay);
      auto w = model.raw();
      const auto g = lg.grad.values();
      for (std::size_t p = 0; p < w.size(); ++p) {
        velocity[p] = hp.momentum * velocity[p] + g[p];
        w[p] -= hp.learning_rate * (g[p] + hp.momentum * velocity[p]);
      }
    }
  }
  return ClientUpdate{client_id, model.to_params(), n};
}

double evaluate_acc(const ParamVector& params, const Dataset& testset) {
  if (testset.size() == 0) throw Error("evaluate_acc: empty testset");
  const LogisticModel model(testset.num_classes, testset.num_features, params);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < testset.size(); ++i) {
    if (model.predict(testset.row(i)) == testset.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(testset.size());
}

double evaluate_asr(const ParamVector& params, const Dataset& triggered_testset,
                    ClassId target_class) {
  if (triggered_testset.size() == 0) throw Error("evaluate_asr: empty triggered testset");
  const LogisticModel model(triggered_testset.num_classes, triggered_testset.num_features, params);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < triggered_testset.size(); ++i) {
    if (model.predict(triggered_testset.row(i)) == target_class) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(triggered_testset.size());
}

}  // namespace brafl
