#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "esgrad/rng.hpp"
#include "esgrad/schedules.hpp"
#include "esgrad/system.hpp"

namespace esgrad {

struct BlobDataset {
  Matrix inputs;            // rows are points
  std::vector<int> labels;  // 0 or 1
};

// Two classes, unit-variance Gaussians centred at -1 and +1 in every input
// coordinate; labels alternate.
[[nodiscard]] inline BlobDataset make_blobs(Eigen::Index points, Eigen::Index dim, const RngKey& key) {
  BlobDataset data{Matrix(points, dim), std::vector<int>(static_cast<std::size_t>(points))};
  const Vector noise = normal_vector(key, points * dim);
  for (Eigen::Index i = 0; i < points; ++i) {
    const int label = static_cast<int>(i % 2);
    data.labels[static_cast<std::size_t>(i)] = label;
    data.inputs.row(i) = (2.0 * label - 1.0) + noise.segment(i * dim, dim).array().transpose();
  }
  return data;
}

/// Fully connected ReLU classifier with weights stored flat. Layer k holds
/// W_k (out x in, row-major) followed by its bias.
class FlatMlp {
 public:
  explicit FlatMlp(std::vector<Eigen::Index> widths) : widths_(std::move(widths)) {
    if (widths_.size() < 3) throw std::invalid_argument("mlp needs at least one hidden layer");
    for (std::size_t k = 0; k + 1 < widths_.size(); ++k) {
      offsets_.push_back(size_);
      size_ += widths_[k + 1] * widths_[k] + widths_[k + 1];
    }
  }

  [[nodiscard]] Eigen::Index size() const { return size_; }
  [[nodiscard]] const std::vector<Eigen::Index>& widths() const { return widths_; }

  [[nodiscard]] Vector init(const RngKey& key) const {
    Vector w = Vector::Zero(size_);
    for (std::size_t k = 0; k + 1 < widths_.size(); ++k) {
      const Eigen::Index n = widths_[k + 1] * widths_[k];
      const double scale = std::sqrt(2.0 / static_cast<double>(widths_[k]));
      w.segment(offsets_[k], n) = scale * normal_vector(key.fold_in(k), n);
    }
    return w;
  }

  // Mean cross-entropy over `rows` of the dataset; fills `grad` when non-null.
  double loss(const Eigen::Ref<const Vector>& w, const BlobDataset& data, Eigen::Index first,
              Eigen::Index count, Vector* grad) const {
    const std::size_t layers = widths_.size() - 1;
    std::vector<Matrix> acts;
    acts.reserve(layers + 1);
    acts.push_back(data.inputs.middleRows(first, count));
    for (std::size_t k = 0; k < layers; ++k) {
      Matrix z = acts.back() * weight(w, k).transpose();
      z.rowwise() += bias(w, k).transpose();
      if (k + 1 < layers) z = z.cwiseMax(0.0);
      acts.push_back(std::move(z));
    }
    Matrix& logits = acts.back();
    double total = 0.0;
    Matrix delta(count, logits.cols());
    for (Eigen::Index i = 0; i < count; ++i) {
      const double top = logits.row(i).maxCoeff();
      const RowVector e = (logits.row(i).array() - top).exp().matrix();
      const double z = e.sum();
      const int label = data.labels[static_cast<std::size_t>(first + i)];
      total += std::log(z) + top - logits(i, label);
      delta.row(i) = e / z;
      delta(i, label) -= 1.0;
    }
    const double inv = 1.0 / static_cast<double>(count);
    if (grad) {
      grad->setZero(size_);
      delta *= inv;
      for (std::size_t k = layers; k-- > 0;) {
        const Eigen::Index out = widths_[k + 1], in = widths_[k];
        Eigen::Map<RowMatrix>(grad->data() + offsets_[k], out, in) = delta.transpose() * acts[k];
        grad->segment(offsets_[k] + out * in, out) = delta.colwise().sum().transpose();
        if (k > 0) {
          delta = (delta * weight(w, k)).eval();
          delta.array() *= (acts[k].array() > 0.0).cast<double>();
        }
      }
    }
    return total * inv;
  }

 private:
  [[nodiscard]] Eigen::Map<const RowMatrix> weight(const Eigen::Ref<const Vector>& w, std::size_t k) const {
    return {w.data() + offsets_[k], widths_[k + 1], widths_[k]};
  }
  [[nodiscard]] Eigen::Map<const Vector> bias(const Eigen::Ref<const Vector>& w, std::size_t k) const {
    return {w.data() + offsets_[k] + widths_[k + 1] * widths_[k], widths_[k + 1]};
  }

  std::vector<Eigen::Index> widths_;
  std::vector<Eigen::Index> offsets_;
  Eigen::Index size_ = 0;
};

struct MlpLrOptions {
  Step horizon = 200;
  double decay_steps = 5000.0;  // Q
  double momentum = 0.9;
  Eigen::Index train_points = 1000;
  Eigen::Index batch_size = 100;
  Eigen::Index eval_points = 1000;
  // Score every step on one frozen held-out batch instead of the step's
  // training minibatch (needed for telescoping sums).
  bool fixed_eval_batch = false;
};

/// Meta-learning the inverse-power learning-rate schedule
/// alpha_t = theta0 / (1 + t/Q)^theta1 of SGD with momentum training an MLP
/// on synthetic blobs. State layout: [weights; momentum buffer].
[[nodiscard]] inline UnrolledSystem make_lr_schedule_mlp(const std::vector<Eigen::Index>& layers,
                                                         const RngKey& dataset_key,
                                                         const MlpLrOptions& opts = {}) {
  auto net = std::make_shared<const FlatMlp>(layers);
  if (layers.back() != 2) throw std::invalid_argument("mlp_lr: output width must be 2 (two classes)");
  if (opts.train_points % opts.batch_size != 0)
    throw std::invalid_argument("mlp_lr: batch size must divide the training set");
  auto train = std::make_shared<const BlobDataset>(
      make_blobs(opts.train_points, layers.front(), dataset_key.fold_in(0)));
  auto held_out = std::make_shared<const BlobDataset>(
      make_blobs(opts.eval_points, layers.front(), dataset_key.fold_in(1)));
  const Eigen::Index nw = net->size();
  const Eigen::Index batches = opts.train_points / opts.batch_size;

  UnrolledSystem sys;
  sys.name = "mlp_lr";
  sys.state_dim = 2 * nw;
  sys.param_dim = 2;
  sys.horizon = opts.horizon;
  sys.initial_state = Vector::Zero(2 * nw);
  sys.initial_state.head(nw) = net->init(dataset_key.fold_in(2));
  sys.initial_params = (Vector(2) << 0.01, 0.5).finished();

  sys.step = [net, train, nw, batches, opts](const Vector& s, Step t, const Vector& theta) -> Vector {
    const Eigen::Index first = (t % batches) * opts.batch_size;
    Vector grad;
    net->loss(s.head(nw), *train, first, opts.batch_size, &grad);
    const double lr = inverse_power_lr({theta[0], theta[1], opts.decay_steps}, static_cast<double>(t));
    Vector next(2 * nw);
    next.tail(nw) = opts.momentum * s.tail(nw) + grad;
    next.head(nw) = s.head(nw) - lr * next.tail(nw);
    return next;
  };
  sys.step_loss = [net, train, held_out, nw, batches, opts](const Vector& s, Step t, const Vector&) {
    if (opts.fixed_eval_batch) return net->loss(s.head(nw), *held_out, 0, opts.eval_points, nullptr);
    const Eigen::Index first = (t % batches) * opts.batch_size;
    return net->loss(s.head(nw), *train, first, opts.batch_size, nullptr);
  };
  return sys;
}

}  // namespace esgrad
