#include "fedsim/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedsim {

namespace {

bool has_params(const LayerSpec& l) { return l.kind == LayerKind::Dense; }

std::size_t dense_param_count(const LayerSpec& l) {
  return static_cast<std::size_t>(l.in_dim) * l.out_dim + l.out_dim;
}

void validate_layers(const std::vector<LayerSpec>& layers) {
  if (layers.empty()) throw std::invalid_argument("model: empty layer list");
  int prev_out = -1;
  int dense_count = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    if (l.in_dim <= 0 || l.out_dim <= 0)
      throw std::invalid_argument("model: layer dimensions must be positive");
    if (l.kind != LayerKind::Dense && l.in_dim != l.out_dim)
      throw std::invalid_argument("model: non-dense layers must preserve dimension");
    if (l.kind == LayerKind::Dropout && (l.dropout_rate < 0.0 || l.dropout_rate >= 1.0))
      throw std::invalid_argument("model: dropout rate must lie in [0, 1)");
    if (l.kind == LayerKind::SoftmaxOutput && i + 1 != layers.size())
      throw std::invalid_argument("model: softmax output must be the final layer");
    if (prev_out >= 0 && l.in_dim != prev_out)
      throw std::invalid_argument("model: dimension mismatch between consecutive layers");
    prev_out = l.out_dim;
    if (l.kind == LayerKind::Dense) ++dense_count;
  }
  if (dense_count == 0) throw std::invalid_argument("model: at least one dense layer required");
}

std::shared_ptr<const std::vector<Segment>> build_layout(const std::vector<LayerSpec>& layers) {
  int dense_total = 0;
  for (const auto& l : layers)
    if (has_params(l)) ++dense_total;

  auto segments = std::make_shared<std::vector<Segment>>();
  std::size_t offset = 0;
  int dense_seen = 0;
  for (const auto& l : layers) {
    if (!has_params(l)) continue;
    const bool last_dense = (dense_seen + 1 == dense_total);
    Segment seg;
    seg.tag = last_dense ? "head" : "dense" + std::to_string(dense_seen);
    seg.offset = offset;
    seg.length = dense_param_count(l);
    offset += seg.length;
    segments->push_back(std::move(seg));
    ++dense_seen;
  }
  return segments;
}

void check_finite(std::span<const double> xs, const char* what) {
  for (double x : xs)
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite value");
}

}  // namespace

ParamVector::ParamVector(std::vector<double> values,
                         std::shared_ptr<const std::vector<Segment>> layout)
    : values_(std::move(values)), layout_(std::move(layout)) {
  if (!layout_) throw std::invalid_argument("ParamVector: null layout");
  std::size_t total = 0;
  for (const auto& s : *layout_) {
    if (s.offset != total) throw std::invalid_argument("ParamVector: segments not contiguous");
    total += s.length;
  }
  if (total != values_.size())
    throw std::invalid_argument("ParamVector: segments do not cover the value array");
}

const std::vector<Segment>& ParamVector::segments() const {
  static const std::vector<Segment> empty;
  return layout_ ? *layout_ : empty;
}

std::span<double> ParamVector::segment(std::string_view tag) {
  for (const auto& s : segments())
    if (s.tag == tag) return {values_.data() + s.offset, s.length};
  throw std::invalid_argument("ParamVector: unknown segment tag '" + std::string(tag) + "'");
}

std::span<const double> ParamVector::segment(std::string_view tag) const {
  for (const auto& s : segments())
    if (s.tag == tag) return {values_.data() + s.offset, s.length};
  throw std::invalid_argument("ParamVector: unknown segment tag '" + std::string(tag) + "'");
}

void ParamVector::replace_segment(std::string_view tag, std::span<const double> new_values) {
  std::span<double> dst = segment(tag);
  if (dst.size() != new_values.size())
    throw std::invalid_argument("ParamVector: replacement size mismatch for '" +
                                std::string(tag) + "'");
  std::copy(new_values.begin(), new_values.end(), dst.begin());
}

bool ParamVector::same_layout(const ParamVector& other) const {
  if (layout_ == other.layout_) return true;
  const auto& a = segments();
  const auto& b = other.segments();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].tag != b[i].tag || a[i].offset != b[i].offset || a[i].length != b[i].length)
      return false;
  return true;
}

Model::Model(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
  validate_layers(layers_);
  layout_ = build_layout(layers_);
  input_dim_ = layers_.front().in_dim;
  num_classes_ = layers_.back().out_dim;
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const auto& s : *layout_) n += s.length;
  return n;
}

ParamVector Model::init_params(std::uint64_t seed) const {
  std::vector<double> values(param_count(), 0.0);
  RngStream rng(derive_seed(seed, "init"));
  std::size_t offset = 0;
  for (const auto& l : layers_) {
    if (!has_params(l)) continue;
    const std::size_t weights = static_cast<std::size_t>(l.in_dim) * l.out_dim;
    const double bound = std::sqrt(6.0 / (l.in_dim + l.out_dim));
    for (std::size_t i = 0; i < weights; ++i) values[offset + i] = rng.uniform(-bound, bound);
    // biases stay zero
    offset += dense_param_count(l);
  }
  return ParamVector(std::move(values), layout_);
}

ForwardResult Model::loss_and_grad(const ParamVector& params, const Batch& batch, Mode mode,
                                   RngStream* dropout_rng) const {
  if (batch.batch_size < 1) throw std::invalid_argument("loss_and_grad: empty batch");
  if (batch.feature_dim != input_dim_)
    throw std::invalid_argument("loss_and_grad: feature dimension mismatch");
  if (batch.features.size() != static_cast<std::size_t>(batch.batch_size) * batch.feature_dim ||
      batch.labels.size() != static_cast<std::size_t>(batch.batch_size))
    throw std::invalid_argument("loss_and_grad: inconsistent batch sizes");
  if (params.size() != param_count())
    throw std::invalid_argument("loss_and_grad: parameter count mismatch");
  check_finite(batch.features, "loss_and_grad features");
  const int B = batch.batch_size;
  const int K = num_classes_;
  for (int y : batch.labels)
    if (y < 0 || y >= K) throw std::invalid_argument("loss_and_grad: label out of range");

  const bool train = (mode == Mode::Train);
  const std::size_t L = layers_.size();

  // inputs[i] is the activation entering layer i; inputs[L] the final logits.
  std::vector<std::vector<double>> inputs(L + 1);
  std::vector<std::vector<double>> masks(L);  // dropout masks, train mode only
  inputs[0] = batch.features;

  std::size_t offset = 0;
  for (std::size_t li = 0; li < L; ++li) {
    const LayerSpec& l = layers_[li];
    const std::vector<double>& in = inputs[li];
    std::vector<double>& out = inputs[li + 1];
    switch (l.kind) {
      case LayerKind::Dense: {
        out.assign(static_cast<std::size_t>(B) * l.out_dim, 0.0);
        const double* w = params.values().data() + offset;
        const double* b = w + static_cast<std::size_t>(l.in_dim) * l.out_dim;
        for (int s = 0; s < B; ++s) {
          const double* x = in.data() + static_cast<std::size_t>(s) * l.in_dim;
          double* z = out.data() + static_cast<std::size_t>(s) * l.out_dim;
          for (int o = 0; o < l.out_dim; ++o) {
            const double* wr = w + static_cast<std::size_t>(o) * l.in_dim;
            double acc = b[o];
            for (int i = 0; i < l.in_dim; ++i) acc += wr[i] * x[i];
            z[o] = acc;
          }
        }
        offset += dense_param_count(l);
        break;
      }
      case LayerKind::Relu: {
        out.resize(in.size());
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
        break;
      }
      case LayerKind::Dropout: {
        out.resize(in.size());
        if (train && l.dropout_rate > 0.0) {
          if (!dropout_rng)
            throw std::invalid_argument("loss_and_grad: train-mode dropout needs an rng stream");
          const double keep = 1.0 - l.dropout_rate;
          const double scale = 1.0 / keep;
          std::vector<double>& m = masks[li];
          m.resize(in.size());
          for (std::size_t i = 0; i < in.size(); ++i)
            m[i] = dropout_rng->next_double() < keep ? scale : 0.0;
          for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * m[i];
        } else {
          out = in;  // inverted dropout: eval is the identity
        }
        break;
      }
      case LayerKind::SoftmaxOutput: {
        out = in;
        break;
      }
    }
  }

  // Softmax cross-entropy on the final logits.
  const std::vector<double>& logits = inputs[L];
  std::vector<double> delta(static_cast<std::size_t>(B) * K);
  std::vector<int> predictions(B);
  double loss = 0.0;
  for (int s = 0; s < B; ++s) {
    const double* z = logits.data() + static_cast<std::size_t>(s) * K;
    double zmax = z[0];
    int arg = 0;
    for (int c = 1; c < K; ++c)
      if (z[c] > zmax) {
        zmax = z[c];
        arg = c;
      }
    predictions[s] = arg;
    double sum = 0.0;
    for (int c = 0; c < K; ++c) sum += std::exp(z[c] - zmax);
    const double log_sum = zmax + std::log(sum);
    loss += log_sum - z[batch.labels[s]];
    double* d = delta.data() + static_cast<std::size_t>(s) * K;
    for (int c = 0; c < K; ++c) d[c] = std::exp(z[c] - log_sum) / B;
    d[batch.labels[s]] -= 1.0 / B;
  }
  loss /= B;

  // Backward pass.
  std::vector<double> grad_values(param_count(), 0.0);
  std::size_t tail = param_count();
  for (std::size_t li = L; li-- > 0;) {
    const LayerSpec& l = layers_[li];
    const std::vector<double>& in = inputs[li];
    switch (l.kind) {
      case LayerKind::Dense: {
        tail -= dense_param_count(l);
        double* dw = grad_values.data() + tail;
        double* db = dw + static_cast<std::size_t>(l.in_dim) * l.out_dim;
        const double* w = params.values().data() + tail;
        for (int s = 0; s < B; ++s) {
          const double* d = delta.data() + static_cast<std::size_t>(s) * l.out_dim;
          const double* x = in.data() + static_cast<std::size_t>(s) * l.in_dim;
          for (int o = 0; o < l.out_dim; ++o) {
            const double c = d[o];
            db[o] += c;
            double* dwr = dw + static_cast<std::size_t>(o) * l.in_dim;
            for (int i = 0; i < l.in_dim; ++i) dwr[i] += c * x[i];
          }
        }
        if (li > 0) {  // no upstream delta needed for the first layer
          std::vector<double> next(static_cast<std::size_t>(B) * l.in_dim, 0.0);
          for (int s = 0; s < B; ++s) {
            const double* d = delta.data() + static_cast<std::size_t>(s) * l.out_dim;
            double* nd = next.data() + static_cast<std::size_t>(s) * l.in_dim;
            for (int o = 0; o < l.out_dim; ++o) {
              const double c = d[o];
              const double* wr = w + static_cast<std::size_t>(o) * l.in_dim;
              for (int i = 0; i < l.in_dim; ++i) nd[i] += c * wr[i];
            }
          }
          delta = std::move(next);
        }
        break;
      }
      case LayerKind::Relu: {
        for (std::size_t i = 0; i < delta.size(); ++i)
          if (in[i] <= 0.0) delta[i] = 0.0;
        break;
      }
      case LayerKind::Dropout: {
        if (train && l.dropout_rate > 0.0) {
          const std::vector<double>& m = masks[li];
          for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= m[i];
        }
        break;
      }
      case LayerKind::SoftmaxOutput:
        break;
    }
  }

  ForwardResult result;
  result.loss = loss;
  result.grad = ParamVector(std::move(grad_values), layout_);
  result.predictions = std::move(predictions);
  return result;
}

std::vector<int> Model::predict(const ParamVector& params, std::span<const double> features,
                                int batch_size) const {
  if (batch_size < 1) throw std::invalid_argument("predict: empty batch");
  if (features.size() != static_cast<std::size_t>(batch_size) * input_dim_)
    throw std::invalid_argument("predict: feature size mismatch");
  check_finite(features, "predict features");

  std::vector<double> cur(features.begin(), features.end());
  std::vector<double> next;
  std::size_t offset = 0;
  for (const auto& l : layers_) {
    switch (l.kind) {
      case LayerKind::Dense: {
        next.assign(static_cast<std::size_t>(batch_size) * l.out_dim, 0.0);
        const double* w = params.values().data() + offset;
        const double* b = w + static_cast<std::size_t>(l.in_dim) * l.out_dim;
        for (int s = 0; s < batch_size; ++s) {
          const double* x = cur.data() + static_cast<std::size_t>(s) * l.in_dim;
          double* z = next.data() + static_cast<std::size_t>(s) * l.out_dim;
          for (int o = 0; o < l.out_dim; ++o) {
            const double* wr = w + static_cast<std::size_t>(o) * l.in_dim;
            double acc = b[o];
            for (int i = 0; i < l.in_dim; ++i) acc += wr[i] * x[i];
            z[o] = acc;
          }
        }
        cur.swap(next);
        offset += dense_param_count(l);
        break;
      }
      case LayerKind::Relu:
        for (double& x : cur) x = x > 0.0 ? x : 0.0;
        break;
      case LayerKind::Dropout:
      case LayerKind::SoftmaxOutput:
        break;  // identity at eval; argmax unaffected by softmax
    }
  }

  std::vector<int> predictions(batch_size);
  const int K = num_classes_;
  for (int s = 0; s < batch_size; ++s) {
    const double* z = cur.data() + static_cast<std::size_t>(s) * K;
    int arg = 0;
    for (int c = 1; c < K; ++c)
      if (z[c] > z[arg]) arg = c;
    predictions[s] = arg;
  }
  return predictions;
}

ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double lr,
                     const ParamVector* extra) {
  if (!params.same_layout(grad) || (extra && !params.same_layout(*extra)))
    throw std::invalid_argument("sgd_step: parameter layout mismatch");
  std::vector<double> out(params.size());
  const auto& p = params.values();
  const auto& g = grad.values();
  if (extra) {
    const auto& e = extra->values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = p[i] - lr * (g[i] + e[i]);
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = p[i] - lr * g[i];
  }
  return ParamVector(std::move(out), params.layout());
}

}  // namespace fedsim
