#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "crushsim/quantify.hpp"

namespace crush {

// Per-tick classifier features: the six Pi features plus a dimensionless
// neighbourhood density.
inline constexpr std::size_t kFeatureCount = 7;
using FeatureRow = std::array<double, kFeatureCount>;
extern const std::array<const char*, kFeatureCount> kFeatureNames;

struct Normalization {
  std::vector<double> mean;
  std::vector<double> stddev;

  void apply(std::span<double> window) const;
};

struct FeatureWindow {
  std::size_t agent_id = 0;
  std::uint64_t end_tick = 0;
  std::vector<double> values;  // window x features, row-major
};

struct LabelledSample {
  FeatureWindow window;
  bool label = false;
  std::uint64_t source_run = 0;
  std::uint64_t source_tick = 0;
};

// Per-agent time series recorded from a full-force run.
struct AgentSeries {
  std::uint64_t first_tick = 0;
  std::vector<FeatureRow> features;  // consecutive ticks from first_tick
  std::vector<double> normal_force;  // aligned with features
};

struct TrainingRun {
  std::string mode;
  std::uint64_t run_id = 0;
  double dt = 0.05;
  std::map<std::size_t, AgentSeries> agents;
};

// True when force >= threshold held for every recorded tick of the last
// `sustain` seconds ending at `end_tick`. Throws InsufficientHistory when
// the record does not cover that span.
bool label_from_force(const ExposureRecord& exposure, std::uint64_t end_tick,
                      double threshold, double sustain, double dt);
bool label_from_force(std::span<const double> force_history, double threshold,
                      double sustain, double dt);

struct DatasetStats {
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double positive_fraction() const {
    const auto n = positives + negatives;
    return n == 0 ? 0.0 : static_cast<double>(positives) / static_cast<double>(n);
  }
};

// One sample per agent every `stride` ticks once a full window exists.
// Throws ModeError unless the run was full-force.
std::vector<LabelledSample> extract_dataset(const TrainingRun& run,
                                            std::size_t window, std::size_t stride,
                                            double label_force, double label_sustain,
                                            DatasetStats* stats = nullptr);

struct Hyperparameters {
  std::size_t hidden = 16;
  std::size_t epochs = 30;
  double learning_rate = 0.05;
  std::uint64_t seed = 7;
};

// Two-layer logistic network over a flattened feature window.
class Classifier {
 public:
  Classifier() = default;
  Classifier(std::size_t window, std::size_t features, std::size_t hidden);

  std::size_t window() const { return window_; }
  std::size_t features() const { return features_; }
  std::size_t inputs() const { return window_ * features_; }
  std::size_t hidden() const { return hidden_; }

  // Normalizes the raw window then evaluates. Throws ShapeError on a size
  // mismatch.
  double forward(std::span<const double> raw_window) const;
  // Evaluates an already-normalized input.
  double forward_normalized(std::span<const double> x) const;

  // Parameters, row-major: w1 is hidden x inputs, w2 is 1 x hidden.
  std::vector<double> w1, b1, w2;
  double b2 = 0.0;
  Normalization norm;

  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  double learning_rate = 0.0;
  std::vector<double> loss_curve;

  // All parameters flattened as w1, b1, w2, b2.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);

 private:
  std::size_t window_ = 0;
  std::size_t features_ = 0;
  std::size_t hidden_ = 0;
};

// Weighted binary cross-entropy over normalized inputs and its gradient with
// respect to `Classifier::parameters()`.
double loss_and_gradient(const Classifier& model,
                         std::span<const std::vector<double>> inputs,
                         std::span<const int> labels, std::span<const double> weights,
                         std::vector<double>* gradient);

Normalization fit_normalization(std::span<const LabelledSample> samples,
                                std::size_t features);

// Plain SGD with inverse-class-frequency weights. Throws DegenerateDataset
// for a single-class dataset and DivergenceError on a non-finite loss.
Classifier train(std::span<const LabelledSample> dataset, std::size_t window,
                 std::size_t features, const Hyperparameters& hyper);

struct BinaryMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double auc = 0.0;
  std::size_t samples = 0;
  std::size_t positives = 0;
};

// Rank-based AUC with mid-ranks for ties.
double roc_auc(std::span<const double> scores, std::span<const int> labels);
BinaryMetrics evaluate(const Classifier& model, std::span<const LabelledSample> samples,
                       double threshold = 0.5);

struct QualifyOutcome {
  bool confirmed = false;
  double mean_probability = 0.0;
  double fraction_above = 0.0;
};

// Confirmed iff the fraction of probabilities >= p_crit is >= quorum.
// Throws InsufficientData for an empty input.
QualifyOutcome qualify_locale(std::span<const double> probabilities, double p_crit,
                              double quorum);

void save_model(const Classifier& model, std::ostream& out);
void save_model(const Classifier& model, const std::filesystem::path& path);
Classifier load_model(std::istream& in);
Classifier load_model(const std::filesystem::path& path);

}  // namespace crush
