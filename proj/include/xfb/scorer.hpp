#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "xfb/detail/base64.hpp"
#include "xfb/errors.hpp"
#include "xfb/metrics.hpp"
#include "xfb/rng.hpp"
#include "xfb/signals.hpp"
#include "xfb/stages.hpp"
#include "xfb/synthgen.hpp"

// The trainable epoch classifier: a two-hidden-layer perceptron over 5
// band-power features, trained by momentum gradient descent on cross-entropy
// with validation-best checkpoint selection. Pre-training and fine-tuning run
// the identical loop and differ only in the initial weights; nothing is
// frozen. Training math is double precision; checkpoints quantize to float32
// (the persisted format), and validation scoring uses the quantized weights
// so best_val_mf1 always describes exactly the returned checkpoint.

namespace xfb {

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 64;
  int max_epochs = 50;
  std::uint64_t seed = 0;
  int hidden1 = 32;
  int hidden2 = 32;
  double weight_decay = 0.0;
};

struct InputSpec {
  GenMode mode = GenMode::Features;
  std::uint32_t feature_dim = 5;  // Features mode
  std::uint32_t rate_hz = 0;      // Signal mode: rate the model featurizes at

  bool operator==(const InputSpec&) const = default;
};

struct TrainMeta {
  std::string source_dataset;
  std::string source_channel;
  std::uint64_t seed = 0;
  int epochs_trained = 0;
  double best_val_mf1 = 0.0;

  bool operator==(const TrainMeta&) const = default;
};

// Row-major (rows x cols) float32 weights plus a length-rows bias.
struct LayerWeights {
  int rows = 0;
  int cols = 0;
  std::vector<float> w;
  std::vector<float> b;

  bool operator==(const LayerWeights&) const = default;
};

struct ModelCheckpoint {
  InputSpec input_spec;
  std::array<double, 5> norm_mean{};
  std::array<double, 5> norm_sd{};
  std::vector<LayerWeights> layers;  // exactly 3: in->h1, h1->h2, h2->out
  TrainMeta train_meta;

  bool operator==(const ModelCheckpoint&) const = default;
};

struct EpochSet {
  std::vector<std::array<double, 5>> features;
  std::vector<Stage> labels;

  std::size_t size() const { return features.size(); }
};

// Extracts the model-facing feature vectors of the given subjects. Features
// mode passes payloads through; Signal mode resamples each epoch to the
// model's rate when it differs and computes band powers.
inline EpochSet featurize(const Cohort& cohort,
                          const std::vector<std::string>& subject_ids,
                          const InputSpec& spec) {
  if (spec.mode != cohort.gen_params.mode)
    throw IncompatibleInputSpec("featurize: cohort mode differs from model input");
  if (spec.mode == GenMode::Features && spec.feature_dim != 5)
    throw IncompatibleInputSpec("featurize: only 5-feature inputs supported");
  if (spec.mode == GenMode::Signal && spec.rate_hz < kMinFeatureRate)
    throw IncompatibleInputSpec("featurize: model rate below featurizer minimum");

  EpochSet set;
  for (const auto& id : subject_ids) {
    auto it = std::ranges::find_if(
        cohort.subjects, [&](const auto& s) { return s.subject_id == id; });
    if (it == cohort.subjects.end())
      throw InvalidParams(fmt::format("featurize: unknown subject '{}'", id));
    for (std::size_t e = 0; e < it->epochs.size(); ++e) {
      const auto& payload = it->epochs[e];
      std::array<double, 5> f{};
      if (spec.mode == GenMode::Features) {
        for (int j = 0; j < 5; ++j) f[j] = payload[j];
      } else {
        Epoch raw{std::vector<double>(payload.begin(), payload.end()),
                  cohort.descriptor.sampling_rate_hz};
        f = bandpower_features(raw.rate_hz == spec.rate_hz
                                   ? raw
                                   : fourier_resample(raw, spec.rate_hz));
      }
      set.features.push_back(f);
      set.labels.push_back(it->labels[e]);
    }
  }
  return set;
}

namespace detail {

// Double-precision parameter block; also reused as the gradient and the
// momentum-velocity container since they share shapes.
struct NetParams {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;

  static NetParams zeros(int in, int h1, int h2, int out) {
    NetParams p;
    p.w1 = Eigen::MatrixXd::Zero(h1, in);
    p.w2 = Eigen::MatrixXd::Zero(h2, h1);
    p.w3 = Eigen::MatrixXd::Zero(out, h2);
    p.b1 = Eigen::VectorXd::Zero(h1);
    p.b2 = Eigen::VectorXd::Zero(h2);
    p.b3 = Eigen::VectorXd::Zero(out);
    return p;
  }

  static NetParams gaussian_init(int in, int h1, int h2, int out,
                                 std::uint64_t seed, double sd = 0.1) {
    NetParams p = zeros(in, h1, h2, out);
    Rng rng(seed);
    auto fill = [&](Eigen::MatrixXd& m) {
      // row-major traversal so the draw order matches the serialized layout
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = sd * rng.gaussian();
    };
    fill(p.w1);
    fill(p.w2);
    fill(p.w3);
    return p;
  }
};

// Softmax probabilities per column, numerically stabilized.
inline Eigen::MatrixXd softmax_cols(Eigen::MatrixXd z) {
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    z.col(c).array() -= z.col(c).maxCoeff();
    z.col(c) = z.col(c).array().exp();
    z.col(c) /= z.col(c).sum();
  }
  return z;
}

struct ForwardCache {
  Eigen::MatrixXd h1, h2, probs;
};

inline ForwardCache forward(const NetParams& p, const Eigen::MatrixXd& x) {
  ForwardCache c;
  c.h1 = ((p.w1 * x).colwise() + p.b1).array().tanh();
  c.h2 = ((p.w2 * c.h1).colwise() + p.b2).array().tanh();
  c.probs = softmax_cols((p.w3 * c.h2).colwise() + p.b3);
  return c;
}

// Mean cross-entropy over the batch and its analytic gradients.
inline double loss_and_gradients(const NetParams& p, const Eigen::MatrixXd& x,
                                 const std::vector<int>& y, NetParams& grad) {
  const auto batch = static_cast<double>(x.cols());
  const ForwardCache c = forward(p, x);

  double loss = 0.0;
  Eigen::MatrixXd dz = c.probs;
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    loss -= std::log(c.probs(y[static_cast<std::size_t>(i)], i));
    dz(y[static_cast<std::size_t>(i)], i) -= 1.0;
  }
  loss /= batch;
  dz /= batch;

  grad.w3 = dz * c.h2.transpose();
  grad.b3 = dz.rowwise().sum();
  Eigen::MatrixXd dh2 =
      (p.w3.transpose() * dz).cwiseProduct((1.0 - c.h2.array().square()).matrix());
  grad.w2 = dh2 * c.h1.transpose();
  grad.b2 = dh2.rowwise().sum();
  Eigen::MatrixXd dh1 =
      (p.w2.transpose() * dh2).cwiseProduct((1.0 - c.h1.array().square()).matrix());
  grad.w1 = dh1 * x.transpose();
  grad.b1 = dh1.rowwise().sum();
  return loss;
}

inline LayerWeights quantize(const Eigen::MatrixXd& w, const Eigen::VectorXd& b) {
  LayerWeights lw;
  lw.rows = static_cast<int>(w.rows());
  lw.cols = static_cast<int>(w.cols());
  lw.w.reserve(static_cast<std::size_t>(lw.rows * lw.cols));
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      lw.w.push_back(static_cast<float>(w(r, c)));
  lw.b.reserve(static_cast<std::size_t>(lw.rows));
  for (Eigen::Index r = 0; r < b.size(); ++r)
    lw.b.push_back(static_cast<float>(b(r)));
  return lw;
}

inline void dequantize(const LayerWeights& lw, Eigen::MatrixXd& w,
                       Eigen::VectorXd& b) {
  w.resize(lw.rows, lw.cols);
  for (int r = 0; r < lw.rows; ++r)
    for (int c = 0; c < lw.cols; ++c)
      w(r, c) = lw.w[static_cast<std::size_t>(r) * lw.cols + c];
  b.resize(lw.rows);
  for (int r = 0; r < lw.rows; ++r) b(r) = lw.b[r];
}

inline NetParams from_checkpoint(const ModelCheckpoint& ckpt) {
  if (ckpt.layers.size() != 3)
    throw FormatError("checkpoint: expected exactly 3 layers");
  NetParams p;
  dequantize(ckpt.layers[0], p.w1, p.b1);
  dequantize(ckpt.layers[1], p.w2, p.b2);
  dequantize(ckpt.layers[2], p.w3, p.b3);
  return p;
}

inline std::vector<LayerWeights> to_layers(const NetParams& p) {
  return {quantize(p.w1, p.b1), quantize(p.w2, p.b2), quantize(p.w3, p.b3)};
}

// Normalized feature matrix (5 x n), columns are epochs.
inline Eigen::MatrixXd feature_matrix(const EpochSet& set,
                                      const std::array<double, 5>& mean,
                                      const std::array<double, 5>& sd) {
  Eigen::MatrixXd x(5, static_cast<Eigen::Index>(set.size()));
  for (std::size_t i = 0; i < set.size(); ++i)
    for (int j = 0; j < 5; ++j)
      x(j, static_cast<Eigen::Index>(i)) = (set.features[i][j] - mean[j]) / sd[j];
  return x;
}

inline std::vector<Stage> predict_matrix(const NetParams& p,
                                         const Eigen::MatrixXd& x) {
  const ForwardCache c = forward(p, x);
  std::vector<Stage> out;
  out.reserve(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    int best = 0;
    for (int k = 1; k < kNumStages; ++k) {
      if (c.probs(k, i) > c.probs(best, i)) best = k;  // ties keep low ordinal
    }
    out.push_back(static_cast<Stage>(best));
  }
  return out;
}

inline double val_mf1_quantized(const NetParams& p, const Eigen::MatrixXd& x,
                                const std::vector<Stage>& labels) {
  // score through the float32 image so selection sees the persisted weights
  NetParams q;
  dequantize(quantize(p.w1, p.b1), q.w1, q.b1);
  dequantize(quantize(p.w2, p.b2), q.w2, q.b2);
  dequantize(quantize(p.w3, p.b3), q.w3, q.b3);
  return metric_set(confusion(labels, predict_matrix(q, x))).mf1;
}

inline void validate(const TrainConfig& cfg) {
  if (cfg.learning_rate <= 0 || cfg.momentum < 0 || cfg.momentum >= 1 ||
      cfg.batch_size < 1 || cfg.max_epochs < 0 || cfg.hidden1 < 1 ||
      cfg.hidden2 < 1 || cfg.weight_decay < 0)
    throw InvalidParams("train config out of range");
}

// Shared pretrain/finetune loop; they differ only in the initial parameters.
inline ModelCheckpoint train_loop(NetParams params, const EpochSet& train,
                                  const EpochSet& val, const TrainConfig& cfg,
                                  const InputSpec& spec, TrainMeta meta) {
  if (train.size() == 0 || val.size() == 0)
    throw EmptySet("train: empty train or validation set");

  // per-feature normalization from this run's training set (population sd)
  std::array<double, 5> mean{}, sd{};
  for (const auto& f : train.features)
    for (int j = 0; j < 5; ++j) mean[j] += f[j];
  for (int j = 0; j < 5; ++j) mean[j] /= static_cast<double>(train.size());
  for (const auto& f : train.features)
    for (int j = 0; j < 5; ++j) sd[j] += (f[j] - mean[j]) * (f[j] - mean[j]);
  for (int j = 0; j < 5; ++j) {
    sd[j] = std::sqrt(sd[j] / static_cast<double>(train.size()));
    if (sd[j] < 1e-12) sd[j] = 1.0;  // constant feature, leave it centered
  }

  const Eigen::MatrixXd xtrain = feature_matrix(train, mean, sd);
  const Eigen::MatrixXd xval = feature_matrix(val, mean, sd);

  const int h1 = static_cast<int>(params.w1.rows());
  const int h2 = static_cast<int>(params.w2.rows());
  NetParams velocity = NetParams::zeros(5, h1, h2, kNumStages);
  NetParams grad = NetParams::zeros(5, h1, h2, kNumStages);

  auto snapshot = [&](int epoch, double mf1) {
    ModelCheckpoint ckpt;
    ckpt.input_spec = spec;
    ckpt.norm_mean = mean;
    ckpt.norm_sd = sd;
    ckpt.layers = to_layers(params);
    ckpt.train_meta = meta;
    ckpt.train_meta.epochs_trained = epoch;
    ckpt.train_meta.best_val_mf1 = mf1;
    return ckpt;
  };

  // epoch 0 = the initial weights; later epochs must beat it strictly
  double best_mf1 = val_mf1_quantized(params, xval, val.labels);
  ModelCheckpoint best = snapshot(0, best_mf1);

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto bsz = static_cast<Eigen::Index>(stop - start);
      Eigen::MatrixXd xb(5, bsz);
      std::vector<int> yb(static_cast<std::size_t>(bsz));
      for (std::size_t i = start; i < stop; ++i) {
        xb.col(static_cast<Eigen::Index>(i - start)) =
            xtrain.col(static_cast<Eigen::Index>(order[i]));
        yb[i - start] = static_cast<int>(train.labels[order[i]]);
      }
      const double loss = loss_and_gradients(params, xb, yb, grad);
      if (!std::isfinite(loss)) throw NonFiniteLoss("train: loss diverged");

      auto step = [&](Eigen::MatrixXd& w, Eigen::MatrixXd& v,
                      const Eigen::MatrixXd& g) {
        if (cfg.weight_decay > 0)
          v = cfg.momentum * v - cfg.learning_rate * (g + cfg.weight_decay * w);
        else
          v = cfg.momentum * v - cfg.learning_rate * g;
        w += v;
      };
      auto step_b = [&](Eigen::VectorXd& b, Eigen::VectorXd& v,
                        const Eigen::VectorXd& g) {
        v = cfg.momentum * v - cfg.learning_rate * g;
        b += v;
      };
      step(params.w1, velocity.w1, grad.w1);
      step(params.w2, velocity.w2, grad.w2);
      step(params.w3, velocity.w3, grad.w3);
      step_b(params.b1, velocity.b1, grad.b1);
      step_b(params.b2, velocity.b2, grad.b2);
      step_b(params.b3, velocity.b3, grad.b3);
    }
    const double mf1 = val_mf1_quantized(params, xval, val.labels);
    if (mf1 > best_mf1) {
      best_mf1 = mf1;
      best = snapshot(epoch, mf1);
    }
  }
  return best;
}

}  // namespace detail

inline ModelCheckpoint pretrain(const EpochSet& train, const EpochSet& val,
                                const TrainConfig& cfg, const InputSpec& spec,
                                TrainMeta meta = {}) {
  detail::validate(cfg);
  if (train.size() == 0 || val.size() == 0)
    throw EmptySet("pretrain: empty train or validation set");
  meta.seed = cfg.seed;
  auto params = detail::NetParams::gaussian_init(
      5, cfg.hidden1, cfg.hidden2, kNumStages, hash64(cfg.seed, "init"));
  return detail::train_loop(std::move(params), train, val, cfg, spec,
                            std::move(meta));
}

inline ModelCheckpoint finetune(const ModelCheckpoint& init,
                                const EpochSet& train, const EpochSet& val,
                                const TrainConfig& cfg, TrainMeta meta = {}) {
  detail::validate(cfg);
  if (train.size() == 0 || val.size() == 0)
    throw EmptySet("finetune: empty train or validation set");
  if (init.layers.size() != 3 || init.layers[0].cols != 5)
    throw IncompatibleInputSpec("finetune: checkpoint shape unsupported");
  meta.seed = cfg.seed;
  return detail::train_loop(detail::from_checkpoint(init), train, val, cfg,
                            init.input_spec, std::move(meta));
}

inline std::vector<Stage> predict(const ModelCheckpoint& model,
                                  const std::vector<std::array<double, 5>>& features) {
  const auto params = detail::from_checkpoint(model);
  Eigen::MatrixXd x(5, static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i)
    for (int j = 0; j < 5; ++j)
      x(j, static_cast<Eigen::Index>(i)) =
          (features[i][j] - model.norm_mean[j]) / model.norm_sd[j];
  return detail::predict_matrix(params, x);
}

inline std::vector<Stage> predict(const ModelCheckpoint& model,
                                  const EpochSet& set) {
  return predict(model, set.features);
}

inline nlohmann::ordered_json checkpoint_to_json(const ModelCheckpoint& ckpt) {
  nlohmann::ordered_json spec;
  spec["mode"] = to_string(ckpt.input_spec.mode);
  if (ckpt.input_spec.mode == GenMode::Features)
    spec["feature_dim"] = ckpt.input_spec.feature_dim;
  else
    spec["rate_hz"] = ckpt.input_spec.rate_hz;

  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["input_spec"] = spec;
  j["normalization"] = {
      {"mean", std::vector<double>(ckpt.norm_mean.begin(), ckpt.norm_mean.end())},
      {"sd", std::vector<double>(ckpt.norm_sd.begin(), ckpt.norm_sd.end())}};
  j["train_meta"] = {{"source_dataset", ckpt.train_meta.source_dataset},
                     {"source_channel", ckpt.train_meta.source_channel},
                     {"seed", ckpt.train_meta.seed},
                     {"epochs_trained", ckpt.train_meta.epochs_trained},
                     {"best_val_mf1", ckpt.train_meta.best_val_mf1}};
  auto layers = nlohmann::ordered_json::array();
  for (const auto& lw : ckpt.layers) {
    layers.push_back({{"rows", lw.rows},
                      {"cols", lw.cols},
                      {"weights", detail::floats_to_base64(lw.w)},
                      {"bias", detail::floats_to_base64(lw.b)}});
  }
  j["layers"] = layers;
  return j;
}

inline ModelCheckpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    ModelCheckpoint ckpt;
    const auto& spec = j.at("input_spec");
    auto mode = parse_gen_mode(spec.at("mode").get<std::string>());
    if (!mode) throw FormatError("checkpoint: unknown input mode");
    ckpt.input_spec.mode = *mode;
    if (*mode == GenMode::Features)
      ckpt.input_spec.feature_dim = spec.at("feature_dim").get<std::uint32_t>();
    else
      ckpt.input_spec.rate_hz = spec.at("rate_hz").get<std::uint32_t>();

    const auto mean = j.at("normalization").at("mean").get<std::vector<double>>();
    const auto sd = j.at("normalization").at("sd").get<std::vector<double>>();
    if (mean.size() != 5 || sd.size() != 5)
      throw FormatError("checkpoint: normalization must have 5 entries");
    std::ranges::copy(mean, ckpt.norm_mean.begin());
    std::ranges::copy(sd, ckpt.norm_sd.begin());

    const auto& tm = j.at("train_meta");
    ckpt.train_meta.source_dataset = tm.at("source_dataset").get<std::string>();
    ckpt.train_meta.source_channel = tm.at("source_channel").get<std::string>();
    ckpt.train_meta.seed = tm.at("seed").get<std::uint64_t>();
    ckpt.train_meta.epochs_trained = tm.at("epochs_trained").get<int>();
    ckpt.train_meta.best_val_mf1 = tm.at("best_val_mf1").get<double>();

    for (const auto& layer : j.at("layers")) {
      LayerWeights lw;
      lw.rows = layer.at("rows").get<int>();
      lw.cols = layer.at("cols").get<int>();
      lw.w = detail::base64_to_floats(layer.at("weights").get<std::string>());
      lw.b = detail::base64_to_floats(layer.at("bias").get<std::string>());
      if (lw.w.size() != static_cast<std::size_t>(lw.rows) * lw.cols ||
          lw.b.size() != static_cast<std::size_t>(lw.rows))
        throw FormatError("checkpoint: layer blob size mismatch");
      ckpt.layers.push_back(std::move(lw));
    }
    if (ckpt.layers.size() != 3)
      throw FormatError("checkpoint: expected 3 layers");
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("checkpoint: {}", e.what()));
  }
}

inline void write_checkpoint(const ModelCheckpoint& ckpt,
                             const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError(fmt::format("write_checkpoint: cannot write {}",
                                     path.string()));
  os << checkpoint_to_json(ckpt).dump(2) << '\n';
  if (!os) throw IoError("write_checkpoint: write failure");
}

inline ModelCheckpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError(fmt::format("read_checkpoint: cannot open {}",
                                     path.string()));
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("read_checkpoint: {}", e.what()));
  }
  return checkpoint_from_json(j);
}

}  // namespace xfb
