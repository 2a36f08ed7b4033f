#include "crushsim/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "crushsim/error.hpp"

namespace crush {

const std::array<const char*, kFeatureCount> kFeatureNames{
    "speed_ratio", "alignment", "density_star", "mass_ratio",
    "threat",      "competitiveness", "neighborhood_density"};

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

constexpr double kOutputFloor = 1e-15;

}  // namespace

void Normalization::apply(std::span<double> window) const {
  const std::size_t f = mean.size();
  if (f == 0) return;
  for (std::size_t k = 0; k < window.size(); ++k) {
    const std::size_t c = k % f;
    window[k] = (window[k] - mean[c]) / stddev[c];
  }
}

bool label_from_force(std::span<const double> force_history, double threshold, double sustain,
                      double dt) {
  const std::size_t need = std::max<std::uint64_t>(1, ticks_for(sustain, dt));
  if (force_history.size() < need)
    throw InsufficientHistory("label_from_force: history shorter than the sustain period");
  return std::all_of(force_history.end() - static_cast<std::ptrdiff_t>(need), force_history.end(),
                     [&](double f) { return f >= threshold; });
}

bool label_from_force(const ExposureRecord& exposure, std::uint64_t end_tick, double threshold,
                      double sustain, double dt) {
  const std::size_t need = std::max<std::uint64_t>(1, ticks_for(sustain, dt));
  const auto it = std::lower_bound(exposure.ticks.begin(), exposure.ticks.end(), end_tick);
  if (it == exposure.ticks.end() || *it != end_tick)
    throw InsufficientHistory("label_from_force: no record at the sample tick");
  const std::size_t end = static_cast<std::size_t>(it - exposure.ticks.begin()) + 1;
  if (end < need) throw InsufficientHistory("label_from_force: history shorter than the sustain period");
  const std::size_t begin = end - need;
  if (exposure.ticks[end - 1] - exposure.ticks[begin] != need - 1)
    throw InsufficientHistory("label_from_force: history has gaps inside the sustain period");
  return label_from_force(std::span<const double>(exposure.force).subspan(begin, need), threshold,
                          sustain, dt);
}

std::vector<LabelledSample> extract_dataset(const TrainingRun& run, std::size_t window,
                                            std::size_t stride, double label_force,
                                            double label_sustain, DatasetStats* stats) {
  if (run.mode != "full-force")
    throw ModeError("training data must come from a full-force run (got '" + run.mode + "')");
  if (window == 0 || stride == 0) throw ShapeError("extract_dataset: window and stride must be >= 1");
  const std::size_t need = std::max<std::uint64_t>(1, ticks_for(label_sustain, run.dt));
  std::vector<LabelledSample> out;
  DatasetStats local;
  for (const auto& [id, series] : run.agents) {
    const std::size_t len = series.features.size();
    for (std::size_t e = window - 1; e < len; e += stride) {
      LabelledSample s;
      s.window.agent_id = id;
      s.window.end_tick = series.first_tick + e;
      s.window.values.reserve(window * kFeatureCount);
      for (std::size_t r = e + 1 - window; r <= e; ++r)
        s.window.values.insert(s.window.values.end(), series.features[r].begin(),
                               series.features[r].end());
      s.label = e + 1 >= need &&
                label_from_force(std::span<const double>(series.normal_force).first(e + 1),
                                 label_force, label_sustain, run.dt);
      s.source_run = run.run_id;
      s.source_tick = s.window.end_tick;
      (s.label ? local.positives : local.negatives) += 1;
      out.push_back(std::move(s));
    }
  }
  if (stats) *stats = local;
  return out;
}

Classifier::Classifier(std::size_t window, std::size_t features, std::size_t hidden)
    : w1(hidden * window * features, 0.0),
      b1(hidden, 0.0),
      w2(hidden, 0.0),
      window_(window),
      features_(features),
      hidden_(hidden) {}

double Classifier::forward_normalized(std::span<const double> x) const {
  if (x.size() != inputs())
    throw ShapeError(fmt::format("classifier expects {} inputs, got {}", inputs(), x.size()));
  double z = b2;
  for (std::size_t k = 0; k < hidden_; ++k) {
    const double* row = &w1[k * inputs()];
    double a = b1[k];
    for (std::size_t i = 0; i < x.size(); ++i) a += row[i] * x[i];
    z += w2[k] * logistic(a);
  }
  return std::clamp(logistic(z), kOutputFloor, 1.0 - kOutputFloor);
}

double Classifier::forward(std::span<const double> raw_window) const {
  if (raw_window.size() != inputs())
    throw ShapeError(fmt::format("classifier expects a window of {} values, got {}", inputs(),
                                 raw_window.size()));
  std::vector<double> x(raw_window.begin(), raw_window.end());
  norm.apply(x);
  return forward_normalized(x);
}

std::vector<double> Classifier::parameters() const {
  std::vector<double> p;
  p.reserve(w1.size() + b1.size() + w2.size() + 1);
  p.insert(p.end(), w1.begin(), w1.end());
  p.insert(p.end(), b1.begin(), b1.end());
  p.insert(p.end(), w2.begin(), w2.end());
  p.push_back(b2);
  return p;
}

void Classifier::set_parameters(std::span<const double> flat) {
  if (flat.size() != w1.size() + b1.size() + w2.size() + 1)
    throw ShapeError("set_parameters: wrong parameter count");
  auto it = flat.begin();
  std::copy_n(it, w1.size(), w1.begin());
  it += static_cast<std::ptrdiff_t>(w1.size());
  std::copy_n(it, b1.size(), b1.begin());
  it += static_cast<std::ptrdiff_t>(b1.size());
  std::copy_n(it, w2.size(), w2.begin());
  it += static_cast<std::ptrdiff_t>(w2.size());
  b2 = *it;
}

namespace {

// Accumulates weight * d(loss)/d(params) for one sample into `grad` (same
// layout as Classifier::parameters) and returns the unweighted loss.
double backprop(const Classifier& m, std::span<const double> x, int label, double weight,
                std::vector<double>& hidden, std::vector<double>* grad) {
  const std::size_t n = m.inputs(), h = m.hidden();
  double z = m.b2;
  for (std::size_t k = 0; k < h; ++k) {
    const double* row = &m.w1[k * n];
    double a = m.b1[k];
    for (std::size_t i = 0; i < n; ++i) a += row[i] * x[i];
    hidden[k] = logistic(a);
    z += m.w2[k] * hidden[k];
  }
  const double y = static_cast<double>(label);
  const double loss = softplus(z) - y * z;
  if (grad) {
    auto& g = *grad;
    const double dz = weight * (logistic(z) - y);
    const std::size_t off_b1 = h * n, off_w2 = off_b1 + h, off_b2 = off_w2 + h;
    g[off_b2] += dz;
    for (std::size_t k = 0; k < h; ++k) {
      g[off_w2 + k] += dz * hidden[k];
      const double delta = dz * m.w2[k] * hidden[k] * (1.0 - hidden[k]);
      g[off_b1 + k] += delta;
      double* row = &g[k * n];
      for (std::size_t i = 0; i < n; ++i) row[i] += delta * x[i];
    }
  }
  return loss;
}

}  // namespace

double loss_and_gradient(const Classifier& model, std::span<const std::vector<double>> inputs,
                         std::span<const int> labels, std::span<const double> weights,
                         std::vector<double>* gradient) {
  if (inputs.size() != labels.size() || inputs.size() != weights.size())
    throw ShapeError("loss_and_gradient: inputs, labels and weights differ in length");
  std::vector<double> hidden(model.hidden());
  if (gradient) gradient->assign(model.parameters().size(), 0.0);
  double total = 0.0, weight_sum = 0.0;
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    total += weights[s] * backprop(model, inputs[s], labels[s], weights[s], hidden, gradient);
    weight_sum += weights[s];
  }
  if (weight_sum <= 0.0) return 0.0;
  if (gradient)
    for (double& g : *gradient) g /= weight_sum;
  return total / weight_sum;
}

Normalization fit_normalization(std::span<const LabelledSample> samples, std::size_t features) {
  Normalization n;
  n.mean.assign(features, 0.0);
  n.stddev.assign(features, 1.0);
  std::vector<double> sum(features, 0.0), sq(features, 0.0);
  std::size_t rows = 0;
  for (const auto& s : samples) {
    const auto& v = s.window.values;
    for (std::size_t k = 0; k < v.size(); ++k) sum[k % features] += v[k];
    rows += v.size() / features;
  }
  if (rows == 0) return n;
  for (std::size_t f = 0; f < features; ++f) n.mean[f] = sum[f] / static_cast<double>(rows);
  for (const auto& s : samples) {
    const auto& v = s.window.values;
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double d = v[k] - n.mean[k % features];
      sq[k % features] += d * d;
    }
  }
  for (std::size_t f = 0; f < features; ++f) {
    const double sd = std::sqrt(sq[f] / static_cast<double>(rows));
    n.stddev[f] = sd > 1e-12 ? sd : 1.0;
  }
  return n;
}

Classifier train(std::span<const LabelledSample> dataset, std::size_t window,
                 std::size_t features, const Hyperparameters& hyper) {
  std::size_t positives = 0;
  for (const auto& s : dataset) {
    if (s.window.values.size() != window * features)
      throw ShapeError("train: sample window has the wrong size");
    positives += s.label ? 1 : 0;
  }
  if (positives == 0 || positives == dataset.size())
    throw DegenerateDataset("train: dataset contains a single class");

  Classifier model(window, features, hyper.hidden);
  model.norm = fit_normalization(dataset, features);
  model.seed = hyper.seed;
  model.epochs = hyper.epochs;
  model.learning_rate = hyper.learning_rate;

  std::mt19937_64 rng(hyper.seed);
  auto uniform = [&](double a) {
    return (2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0) * a;
  };
  const double a1 = 1.0 / std::sqrt(static_cast<double>(model.inputs()));
  const double a2 = 1.0 / std::sqrt(static_cast<double>(hyper.hidden));
  for (double& w : model.w1) w = uniform(a1);
  for (double& w : model.w2) w = uniform(a2);

  const double n = static_cast<double>(dataset.size());
  const double w_pos = n / (2.0 * static_cast<double>(positives));
  const double w_neg = n / (2.0 * static_cast<double>(dataset.size() - positives));

  std::vector<std::vector<double>> inputs;
  std::vector<int> labels;
  std::vector<double> weights;
  inputs.reserve(dataset.size());
  for (const auto& s : dataset) {
    inputs.push_back(s.window.values);
    model.norm.apply(inputs.back());
    labels.push_back(s.label ? 1 : 0);
    weights.push_back(s.label ? w_pos : w_neg);
  }

  auto full_loss = [&] {
    const double loss = loss_and_gradient(model, inputs, labels, weights, nullptr);
    if (!std::isfinite(loss)) throw DivergenceError("train: loss became non-finite");
    return loss;
  };
  model.loss_curve.push_back(full_loss());

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> hidden(model.hidden());
  std::vector<double> grad(model.parameters().size());
  const std::size_t n_in = model.inputs(), h = model.hidden();
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    for (std::size_t idx : order) {
      // Single-sample step, applied to the parameters in place.
      const auto& x = inputs[idx];
      double z = model.b2;
      for (std::size_t k = 0; k < h; ++k) {
        const double* row = &model.w1[k * n_in];
        double a = model.b1[k];
        for (std::size_t q = 0; q < n_in; ++q) a += row[q] * x[q];
        hidden[k] = logistic(a);
        z += model.w2[k] * hidden[k];
      }
      const double step = hyper.learning_rate * weights[idx] * (logistic(z) - labels[idx]);
      for (std::size_t k = 0; k < h; ++k) {
        const double delta = step * model.w2[k] * hidden[k] * (1.0 - hidden[k]);
        model.w2[k] -= step * hidden[k];
        model.b1[k] -= delta;
        double* row = &model.w1[k * n_in];
        for (std::size_t q = 0; q < n_in; ++q) row[q] -= delta * x[q];
      }
      model.b2 -= step;
    }
    model.loss_curve.push_back(full_loss());
  }
  return model;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("roc_auc: size mismatch");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]]) {
        pos_rank_sum += mid_rank;
        ++pos;
      }
    i = j;
  }
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) return std::numeric_limits<double>::quiet_NaN();
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

BinaryMetrics evaluate(const Classifier& model, std::span<const LabelledSample> samples,
                       double threshold) {
  BinaryMetrics m;
  std::vector<double> scores;
  std::vector<int> labels;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (const auto& s : samples) {
    const double p = model.forward(s.window.values);
    scores.push_back(p);
    labels.push_back(s.label ? 1 : 0);
    const bool predicted = p >= threshold;
    if (predicted && s.label) ++tp;
    else if (predicted) ++fp;
    else if (s.label) ++fn;
    else ++tn;
  }
  m.samples = samples.size();
  m.positives = tp + fn;
  if (m.samples > 0) m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(m.samples);
  m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.auc = roc_auc(scores, labels);
  return m;
}

QualifyOutcome qualify_locale(std::span<const double> probabilities, double p_crit,
                              double quorum) {
  if (probabilities.empty()) throw InsufficientData("qualify_locale: no complete windows");
  QualifyOutcome out;
  std::size_t above = 0;
  double sum = 0.0;
  for (double p : probabilities) {
    sum += p;
    above += p >= p_crit ? 1 : 0;
  }
  const double n = static_cast<double>(probabilities.size());
  out.mean_probability = sum / n;
  out.fraction_above = static_cast<double>(above) / n;
  // Compare counts so the boundary case (fraction == quorum) is inclusive.
  out.confirmed = static_cast<double>(above) >= quorum * n - 1e-9;
  return out;
}

namespace {

void write_row(std::ostream& out, std::span<const double> values) {
  for (std::size_t k = 0; k < values.size(); ++k) out << (k ? " " : "") << fmt::format("{}", values[k]);
  out << '\n';
}

std::vector<double> read_values(std::istream& in, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) {
    std::string tok;
    if (!(in >> tok)) throw ParseError("model file: unexpected end of data");
    try {
      x = std::stod(tok);
    } catch (const std::exception&) {
      throw ParseError("model file: bad number '" + tok + "'");
    }
  }
  return v;
}

void expect(std::istream& in, const std::string& key) {
  std::string tok;
  if (!(in >> tok) || tok != key) throw ParseError("model file: expected '" + key + "', got '" + tok + "'");
}

template <typename T>
T read_scalar(std::istream& in, const std::string& key) {
  expect(in, key);
  T value{};
  if (!(in >> value)) throw ParseError("model file: bad value for '" + key + "'");
  return value;
}

}  // namespace

void save_model(const Classifier& m, std::ostream& out) {
  out << "crushnet 1\n";
  out << "window " << m.window() << '\n';
  out << "features " << m.features() << '\n';
  out << "hidden " << m.hidden() << '\n';
  out << "feature_names";
  for (std::size_t f = 0; f < m.features(); ++f)
    out << ' ' << (f < kFeatureNames.size() ? kFeatureNames[f] : "x");
  out << '\n';
  out << "seed " << m.seed << '\n';
  out << "epochs " << m.epochs << '\n';
  out << "learning_rate " << fmt::format("{}", m.learning_rate) << '\n';
  out << "norm_mean ";
  write_row(out, m.norm.mean);
  out << "norm_std ";
  write_row(out, m.norm.stddev);
  out << "w1 " << m.hidden() << ' ' << m.inputs() << '\n';
  for (std::size_t k = 0; k < m.hidden(); ++k)
    write_row(out, std::span<const double>(m.w1).subspan(k * m.inputs(), m.inputs()));
  out << "b1 " << m.hidden() << '\n';
  write_row(out, m.b1);
  out << "w2 " << m.hidden() << '\n';
  write_row(out, m.w2);
  out << "b2 " << fmt::format("{}", m.b2) << '\n';
  out << "loss_curve " << m.loss_curve.size() << '\n';
  write_row(out, m.loss_curve);
  out << "end\n";
}

void save_model(const Classifier& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write model file " + path.string());
  save_model(model, out);
}

Classifier load_model(std::istream& in) {
  expect(in, "crushnet");
  int version = 0;
  if (!(in >> version) || version != 1)
    throw ParseError("model file: unsupported format version " + std::to_string(version));
  const auto window = read_scalar<std::size_t>(in, "window");
  const auto features = read_scalar<std::size_t>(in, "features");
  const auto hidden = read_scalar<std::size_t>(in, "hidden");
  expect(in, "feature_names");
  for (std::size_t f = 0; f < features; ++f) {
    std::string name;
    in >> name;
  }
  Classifier m(window, features, hidden);
  m.seed = read_scalar<std::uint64_t>(in, "seed");
  m.epochs = read_scalar<std::size_t>(in, "epochs");
  expect(in, "learning_rate");
  m.learning_rate = read_values(in, 1)[0];
  expect(in, "norm_mean");
  m.norm.mean = read_values(in, features);
  expect(in, "norm_std");
  m.norm.stddev = read_values(in, features);
  expect(in, "w1");
  const auto rows = read_values(in, 2);
  if (rows[0] != static_cast<double>(hidden) || rows[1] != static_cast<double>(m.inputs()))
    throw ParseError("model file: w1 shape does not match the header");
  m.w1 = read_values(in, hidden * m.inputs());
  if (read_scalar<std::size_t>(in, "b1") != hidden) throw ParseError("model file: b1 size mismatch");
  m.b1 = read_values(in, hidden);
  if (read_scalar<std::size_t>(in, "w2") != hidden) throw ParseError("model file: w2 size mismatch");
  m.w2 = read_values(in, hidden);
  expect(in, "b2");
  m.b2 = read_values(in, 1)[0];
  const auto curve = read_scalar<std::size_t>(in, "loss_curve");
  m.loss_curve = read_values(in, curve);
  expect(in, "end");
  return m;
}

Classifier load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model file " + path.string());
  try {
    return load_model(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace crush
