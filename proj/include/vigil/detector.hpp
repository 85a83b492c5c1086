#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "vigil/capsule.hpp"
#include "vigil/ecg.hpp"
#include "vigil/error.hpp"
#include "vigil/io.hpp"
#include "vigil/nn.hpp"
#include "vigil/rng.hpp"

namespace vigil {

struct DetectorConfig {
  int units = 40;
  int recurrent_layers = 3;
  double dropout = 0.25;
  double l2 = 0.28;  // applied to the dense head
  double learning_rate = 0.002;
  int batch_size = 48;
  int max_epochs = 100;
  int early_stop_patience = 10;
  double decision_threshold = 0.5;
  double holdout_fraction = 0.2;  // stratified split before cross-validation

  void validate() const {
    if (units <= 0 || recurrent_layers <= 0 || batch_size <= 0 || max_epochs <= 0) {
      throw ConfigError("detector: counts must be positive");
    }
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("detector: dropout must be in [0,1)");
    if (early_stop_patience < 0) throw ConfigError("detector: patience must be non-negative");
  }
};

// Per-feature zero-mean/unit-variance transform, fit on training rows only.
// Zero-variance features are dropped and recorded in the keep mask.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> keep;

  int in_dim() const { return static_cast<int>(mean.size()); }
  int out_dim() const {
    return static_cast<int>(std::count(keep.begin(), keep.end(), true));
  }

  void fit(const Matrix& rows) {
    if (rows.rows == 0) throw Error("standardizer: empty fit set");
    const int d = rows.cols;
    mean.assign(d, 0.0);
    stddev.assign(d, 0.0);
    keep.assign(d, true);
    for (int r = 0; r < rows.rows; ++r) {
      for (int c = 0; c < d; ++c) mean[c] += rows(r, c);
    }
    for (int c = 0; c < d; ++c) mean[c] /= rows.rows;
    for (int r = 0; r < rows.rows; ++r) {
      for (int c = 0; c < d; ++c) {
        double e = rows(r, c) - mean[c];
        stddev[c] += e * e;
      }
    }
    for (int c = 0; c < d; ++c) {
      stddev[c] = std::sqrt(stddev[c] / rows.rows);  // population
      if (stddev[c] <= 0.0) keep[c] = false;
    }
  }

  Matrix apply(const Matrix& rows) const {
    if (rows.cols != in_dim()) throw Error("standardizer: dimension mismatch");
    Matrix out(rows.rows, out_dim());
    for (int r = 0; r < rows.rows; ++r) {
      int oc = 0;
      for (int c = 0; c < rows.cols; ++c) {
        if (!keep[c]) continue;
        out(r, oc++) = (rows(r, c) - mean[c]) / stddev[c];
      }
    }
    return out;
  }

  void save(const std::filesystem::path& path) const {
    std::string out = "format_version=1\n";
    out += "features=" + std::to_string(mean.size()) + "\n";
    for (std::size_t c = 0; c < mean.size(); ++c) {
      out += std::to_string(c) + " " + (keep[c] ? "1" : "0") + " " + format_double(mean[c], 17) +
             " " + format_double(stddev[c], 17) + "\n";
    }
    write_file_atomic(path, out);
  }

  static Standardizer load(const std::filesystem::path& path) {
    auto lines = read_lines(path);
    if (lines.size() < 2 || lines[0] != "format_version=1") {
      throw IoError(path.string() + ": unsupported standardizer file");
    }
    long d = parse_long(lines[1].substr(lines[1].find('=') + 1), path.string());
    Standardizer s;
    s.mean.resize(d);
    s.stddev.resize(d);
    s.keep.resize(d);
    for (long c = 0; c < d; ++c) {
      std::istringstream row(lines.at(2 + c));
      long idx;
      int k;
      row >> idx >> k >> s.mean[c] >> s.stddev[c];
      if (!row || idx != c) throw IoError(path.string() + ": bad standardizer row");
      s.keep[c] = k != 0;
    }
    return s;
  }
};

struct Prediction {
  double probability = 0.0;
  int theta = 0;  // 1 iff probability >= decision_threshold
  double timestamp = 0.0;
  bool valid = true;
};

struct CvReport {
  std::vector<double> fold_accuracy;
  std::vector<double> fold_f1;
  double mean_accuracy = 0.0;
  double mean_f1 = 0.0;
  // confusion[row = true class][col = predicted class] on the hold-out set
  std::array<std::array<int, 2>, 2> confusion{{{0, 0}, {0, 0}}};
};

struct DetectorModel {
  RnnClassifier net;
  Standardizer standardizer;
  std::string config_label;  // capsule configuration used for featurization
  double decision_threshold = 0.5;
  int epochs_run = 0;

  Prediction classify(const Matrix& raw_sequence, double timestamp = 0.0) const {
    Matrix z = standardizer.apply(raw_sequence);
    double p = net.predict(z);
    return {p, p >= decision_threshold ? 1 : 0, timestamp, true};
  }
};

namespace detail {

struct Metrics {
  double accuracy = 0.0;
  double f1 = 0.0;  // drowsy = positive class
};

inline Metrics classification_metrics(std::span<const int> truth, std::span<const int> pred) {
  int tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 1 && pred[i] == 1) ++tp;
    if (truth[i] == 0 && pred[i] == 0) ++tn;
    if (truth[i] == 0 && pred[i] == 1) ++fp;
    if (truth[i] == 1 && pred[i] == 0) ++fn;
  }
  Metrics m;
  m.accuracy = truth.empty() ? 0.0 : double(tp + tn) / double(truth.size());
  double denom = 2.0 * tp + fp + fn;
  m.f1 = denom > 0.0 ? 2.0 * tp / denom : 0.0;
  return m;
}

// Stratified index split: proportion `frac` of each class into the second part.
inline std::pair<std::vector<int>, std::vector<int>> stratified_split(
    std::span<const int> labels, double frac, Rng& rng) {
  std::vector<int> idx0, idx1;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
    (labels[i] == 1 ? idx1 : idx0).push_back(i);
  }
  rng.shuffle(idx0);
  rng.shuffle(idx1);
  std::vector<int> first, second;
  for (auto* cls : {&idx0, &idx1}) {
    std::size_t take = static_cast<std::size_t>(std::lround(frac * double(cls->size())));
    for (std::size_t i = 0; i < cls->size(); ++i) {
      (i < take ? second : first).push_back((*cls)[i]);
    }
  }
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  return {first, second};
}

// Stratified k-fold assignment; throws when some fold would miss a class.
inline std::vector<int> stratified_folds(std::span<const int> labels, int k, Rng& rng) {
  std::vector<int> fold(labels.size(), -1);
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
      if (labels[i] == cls) idx.push_back(i);
    }
    if (static_cast<int>(idx.size()) < k) throw Error("cross_validate: cannot stratify");
    rng.shuffle(idx);
    for (std::size_t i = 0; i < idx.size(); ++i) fold[idx[i]] = static_cast<int>(i % k);
  }
  return fold;
}

inline Matrix stack_rows(const std::vector<CapsuleSequence>& dataset, std::span<const int> idx) {
  if (idx.empty()) return {};
  const int cols = dataset.front().rows.cols;
  int total = 0;
  for (int i : idx) total += dataset[i].rows.rows;
  Matrix out(total, cols);
  int r = 0;
  for (int i : idx) {
    for (int sr = 0; sr < dataset[i].rows.rows; ++sr, ++r) {
      for (int c = 0; c < cols; ++c) out(r, c) = dataset[i].rows(sr, c);
    }
  }
  return out;
}

}  // namespace detail

// Trains the recurrent classifier with early stopping on a stratified internal
// validation split; the best-validation-epoch weights are restored.
inline DetectorModel train_detector(const std::vector<CapsuleSequence>& dataset,
                                    const DetectorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (dataset.size() < 4) throw Error("train_detector: need at least 2 samples per class");
  std::vector<int> labels;
  for (const auto& s : dataset) labels.push_back(s.label);
  if (std::count(labels.begin(), labels.end(), 1) < 2 ||
      std::count(labels.begin(), labels.end(), 0) < 2) {
    throw Error("train_detector: need at least 2 samples per class");
  }

  Rng split_rng(derive_seed(seed, "train-val-split"));
  auto [train_idx, val_idx] = detail::stratified_split(labels, 0.2, split_rng);
  if (val_idx.empty()) val_idx.push_back(train_idx.back());

  DetectorModel model;
  model.config_label = dataset.front().config.label();
  model.decision_threshold = cfg.decision_threshold;
  model.standardizer.fit(detail::stack_rows(dataset, train_idx));

  auto standardized = [&](int i) { return model.standardizer.apply(dataset[i].rows); };
  std::vector<Matrix> train_seqs, val_seqs;
  std::vector<double> train_targets;
  std::vector<int> val_labels;
  for (int i : train_idx) {
    train_seqs.push_back(standardized(i));
    train_targets.push_back(dataset[i].label);
  }
  for (int i : val_idx) {
    val_seqs.push_back(standardized(i));
    val_labels.push_back(dataset[i].label);
  }

  Rng init_rng(derive_seed(seed, "init"));
  model.net = make_rnn_classifier(model.standardizer.out_dim(), cfg.units, cfg.recurrent_layers,
                                  cfg.dropout, cfg.l2, init_rng);
  Adam adam(cfg.learning_rate);
  Rng order_rng(derive_seed(seed, "batch-order"));
  Rng dropout_rng(derive_seed(seed, "dropout"));

  auto validation_f1 = [&]() {
    std::vector<int> pred;
    for (const auto& seq : val_seqs) {
      pred.push_back(model.net.predict(seq) >= cfg.decision_threshold ? 1 : 0);
    }
    return detail::classification_metrics(val_labels, pred).f1;
  };

  RnnClassifier best = model.net;
  double best_f1 = -1.0;
  int epochs_since_best = 0;
  std::vector<int> order(train_seqs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    order_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<Matrix> batch;
      std::vector<double> targets;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(train_seqs[order[i]]);
        targets.push_back(train_targets[order[i]]);
      }
      backward_and_step(model.net, batch, targets, adam,
                        cfg.dropout > 0.0 ? &dropout_rng : nullptr);
    }
    model.epochs_run = epoch + 1;
    double f1 = validation_f1();
    if (f1 > best_f1) {
      best_f1 = f1;
      best = model.net;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
    }
    if (epochs_since_best >= cfg.early_stop_patience) break;
  }
  model.net = best;
  return model;
}

// Stratified hold-out split, k-fold cross-validation on the remainder with a
// per-fold standardizer, then a final model for the hold-out confusion matrix.
inline CvReport cross_validate(const std::vector<CapsuleSequence>& dataset,
                               const DetectorConfig& cfg, int k, std::uint64_t seed) {
  cfg.validate();
  if (static_cast<int>(dataset.size()) < k) throw Error("cross_validate: dataset smaller than k");
  std::vector<int> labels;
  for (const auto& s : dataset) labels.push_back(s.label);

  Rng split_rng(derive_seed(seed, "holdout-split"));
  auto [cv_idx, holdout_idx] = detail::stratified_split(labels, cfg.holdout_fraction, split_rng);

  std::vector<int> cv_labels;
  for (int i : cv_idx) cv_labels.push_back(labels[i]);
  Rng fold_rng(derive_seed(seed, "folds"));
  std::vector<int> fold = detail::stratified_folds(cv_labels, k, fold_rng);

  CvReport report;
  for (int f = 0; f < k; ++f) {
    std::vector<CapsuleSequence> fold_train;
    std::vector<CapsuleSequence> fold_val;
    for (std::size_t i = 0; i < cv_idx.size(); ++i) {
      (fold[i] == f ? fold_val : fold_train).push_back(dataset[cv_idx[i]]);
    }
    DetectorModel m = train_detector(fold_train, cfg, derive_seed(seed, "fold", f));
    std::vector<int> truth, pred;
    for (const auto& s : fold_val) {
      truth.push_back(s.label);
      pred.push_back(m.classify(s.rows).theta);
    }
    auto metrics = detail::classification_metrics(truth, pred);
    report.fold_accuracy.push_back(metrics.accuracy);
    report.fold_f1.push_back(metrics.f1);
  }
  for (double a : report.fold_accuracy) report.mean_accuracy += a;
  for (double f1 : report.fold_f1) report.mean_f1 += f1;
  report.mean_accuracy /= k;
  report.mean_f1 /= k;

  std::vector<CapsuleSequence> cv_set;
  for (int i : cv_idx) cv_set.push_back(dataset[i]);
  DetectorModel final_model = train_detector(cv_set, cfg, derive_seed(seed, "final"));
  for (int i : holdout_idx) {
    int pred = final_model.classify(dataset[i].rows).theta;
    report.confusion[labels[i]][pred] += 1;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Sliding full-signal prediction

// Windows of length L strided by L*(1-M'); each window is sliced by the
// deployed capsule configuration, featurized, standardized and classified.
// When featurization fails the prediction is marked invalid and the previous
// theta is retained.
template <class Callback>
inline void sliding_predict_each(const EcgRecording& rec, const CapsuleConfig& cfg,
                                 const DetectorModel& model, double window_overlap,
                                 long window_samples, Callback&& emit) {
  if (window_overlap < 0.0 || window_overlap >= 1.0) {
    throw ConfigError("sliding_predict: window overlap must be in [0,1)");
  }
  const long n = static_cast<long>(rec.samples.size());
  const long L = window_samples;
  if (n < L) return;  // empty stream
  EcgRecording filtered = bandpass_filter(rec);
  RrSeries rr = detect_r_peaks(filtered);
  const long stride = std::max<long>(1, std::llround(double(L) * (1.0 - window_overlap)));
  int prev_theta = 0;
  for (long start = 0; start + L <= n; start += stride) {
    Window w{WindowKind::nsrw, start, L};
    double timestamp = double(start + L) / rec.sample_rate_hz;
    Matrix rows(cfg.capsule_count, HrvFeatureVector::kCount);
    bool ok = true;
    auto ranges = slice_capsules(w, cfg);
    for (std::size_t i = 0; i < ranges.size() && ok; ++i) {
      auto features = detail::capsule_features(rr, ranges[i].first, ranges[i].second,
                                               rec.sample_rate_hz);
      if (!features) {
        ok = false;
        break;
      }
      auto arr = features->as_array();
      for (int c = 0; c < HrvFeatureVector::kCount; ++c) rows(static_cast<int>(i), c) = arr[c];
    }
    Prediction p;
    if (ok) {
      p = model.classify(rows, timestamp);
      prev_theta = p.theta;
    } else {
      p = {0.0, prev_theta, timestamp, false};
    }
    emit(p);
  }
}

inline std::vector<Prediction> sliding_predict(const EcgRecording& rec, const CapsuleConfig& cfg,
                                               const DetectorModel& model, double window_overlap,
                                               long window_samples = kDefaultWindowSamples) {
  std::vector<Prediction> out;
  sliding_predict_each(rec, cfg, model, window_overlap, window_samples,
                       [&](const Prediction& p) { out.push_back(p); });
  return out;
}

// ---------------------------------------------------------------------------
// Last-writer-wins snapshot shared between the detector producer and the
// environment. The reader never waits for a prediction to be computed.

class ThetaBox {
 public:
  void publish(const Prediction& p) {
    std::lock_guard<std::mutex> lock(mu_);
    last_ = p;
  }

  Prediction read() const {
    std::lock_guard<std::mutex> lock(mu_);
    return last_;
  }

 private:
  mutable std::mutex mu_;
  Prediction last_{0.0, 0, 0.0, false};
};

// Runs sliding prediction over a recording in its own thread, publishing each
// prediction as it is produced.
class DetectorThread {
 public:
  DetectorThread(const EcgRecording& rec, const CapsuleConfig& cfg, const DetectorModel& model,
                 double window_overlap, ThetaBox& box, long window_samples = kDefaultWindowSamples)
      : thread_([=, &box, rec = rec, cfg = cfg, model = model]() {
          sliding_predict_each(rec, cfg, model, window_overlap, window_samples,
                               [&](const Prediction& p) { box.publish(p); });
        }) {}

  ~DetectorThread() { join(); }

  void join() {
    if (thread_.joinable()) thread_.join();
  }

 private:
  std::thread thread_;
};

// Model bundle: weight file + standardizer statistics + capsule label.
inline void save_detector(const std::filesystem::path& dir, DetectorModel& model) {
  std::filesystem::create_directories(dir);
  save_tensors(dir / "weights.txt", tensor_refs(model.net));
  model.standardizer.save(dir / "standardizer.txt");
  std::string meta = "config_label=" + model.config_label + "\n";
  meta += "decision_threshold=" + format_double(model.decision_threshold, 17) + "\n";
  meta += "units=" + std::to_string(model.net.cells.empty()
                                        ? 0
                                        : model.net.cells.front().hidden_dim()) + "\n";
  meta += "layers=" + std::to_string(model.net.cells.size()) + "\n";
  meta += "dropout=" + format_double(model.net.dropout, 17) + "\n";
  meta += "head_l2=" + format_double(model.net.head.l2, 17) + "\n";
  write_file_atomic(dir / "model.txt", meta);
}

inline DetectorModel load_detector(const std::filesystem::path& dir) {
  DetectorModel model;
  auto meta = read_kv(dir / "model.txt");
  model.config_label = meta.at("config_label");
  model.decision_threshold = parse_double(meta.at("decision_threshold"), "model.txt");
  model.standardizer = Standardizer::load(dir / "standardizer.txt");
  int units = static_cast<int>(parse_long(meta.at("units"), "model.txt"));
  int layers = static_cast<int>(parse_long(meta.at("layers"), "model.txt"));
  Rng zero(0);
  model.net = make_rnn_classifier(model.standardizer.out_dim(), units, layers,
                                  parse_double(meta.at("dropout"), "model.txt"),
                                  parse_double(meta.at("head_l2"), "model.txt"), zero);
  load_tensors(dir / "weights.txt", tensor_refs(model.net));
  return model;
}

}  // namespace vigil
