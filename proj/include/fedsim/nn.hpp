// Minimal feed-forward network with analytic gradients over a flat parameter
// vector. The flat layout with named segments is what lets the aggregation
// protocols treat "the model" as plain arithmetic: FedPer swaps the "head"
// segment per client, SCAFFOLD keeps control variates with the same layout.

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedsim/rng.hpp"

namespace fedsim {

enum class LayerKind { Dense, Relu, Dropout, SoftmaxOutput };

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  int in_dim = 0;
  int out_dim = 0;
  double dropout_rate = 0.0;

  static LayerSpec dense(int in, int out) { return {LayerKind::Dense, in, out, 0.0}; }
  static LayerSpec relu(int dim) { return {LayerKind::Relu, dim, dim, 0.0}; }
  static LayerSpec dropout(int dim, double rate) { return {LayerKind::Dropout, dim, dim, rate}; }
  static LayerSpec softmax_output(int dim) { return {LayerKind::SoftmaxOutput, dim, dim, 0.0}; }
};

struct Segment {
  std::string tag;
  std::size_t offset = 0;
  std::size_t length = 0;
};

// Flat parameter array plus a shared, immutable segment layout. One segment
// per dense layer (weights then biases); the last dense layer is tagged
// "head", earlier ones "dense0", "dense1", ...
class ParamVector {
 public:
  ParamVector() = default;
  ParamVector(std::vector<double> values, std::shared_ptr<const std::vector<Segment>> layout);

  std::size_t size() const { return values_.size(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  const std::vector<Segment>& segments() const;
  const std::shared_ptr<const std::vector<Segment>>& layout() const { return layout_; }

  // Read/write view of one named segment; throws on unknown tag.
  std::span<double> segment(std::string_view tag);
  std::span<const double> segment(std::string_view tag) const;
  void replace_segment(std::string_view tag, std::span<const double> new_values);

  bool same_layout(const ParamVector& other) const;

 private:
  std::vector<double> values_;
  std::shared_ptr<const std::vector<Segment>> layout_;
};

struct Batch {
  std::vector<double> features;  // batch_size x feature_dim, row-major
  std::vector<int> labels;       // class indices in [0, K)
  int batch_size = 0;
  int feature_dim = 0;
};

enum class Mode { Train, Eval };

struct ForwardResult {
  double loss = 0.0;
  ParamVector grad;
  std::vector<int> predictions;
};

// Validated layer stack. The layer list may end with an explicit
// softmax-output marker or with a plain dense layer; either way the loss is
// mean softmax cross-entropy over the final logits.
class Model {
 public:
  explicit Model(std::vector<LayerSpec> layers);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  int input_dim() const { return input_dim_; }
  int num_classes() const { return num_classes_; }
  std::size_t param_count() const;
  const std::shared_ptr<const std::vector<Segment>>& layout() const { return layout_; }

  // Glorot-uniform weights, zero biases; bit-identical for a given seed.
  ParamVector init_params(std::uint64_t seed) const;

  // Mean softmax cross-entropy, its gradient (same layout as params), and the
  // argmax predictions. Train mode draws inverted-dropout masks from
  // dropout_rng; eval mode is a pure deterministic pass.
  ForwardResult loss_and_grad(const ParamVector& params, const Batch& batch, Mode mode,
                              RngStream* dropout_rng = nullptr) const;

  // Eval-mode argmax predictions only (no gradient work).
  std::vector<int> predict(const ParamVector& params, std::span<const double> features,
                           int batch_size) const;

 private:
  std::vector<LayerSpec> layers_;
  std::shared_ptr<const std::vector<Segment>> layout_;
  int input_dim_ = 0;
  int num_classes_ = 0;
};

// result = params - lr * (grad + extra); extra defaults to zero. Carries the
// FedProx proximal addend and the SCAFFOLD control correction when present.
ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double lr,
                     const ParamVector* extra = nullptr);

}  // namespace fedsim
