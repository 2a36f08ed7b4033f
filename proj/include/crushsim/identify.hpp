#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "crushsim/agent.hpp"
#include "crushsim/config.hpp"

namespace crush {

// Dimensionless reduction of an agent's physical and decision variables.
// Repeating variables: desired speed, mean mass, agent diameter.
struct PiFeatures {
  double speed_ratio = 0.0;  // |v| / v0
  double alignment = 0.0;    // cos(velocity, desired direction); 0 when still
  double density_star = 0.0; // locale density * (2r)^2
  double mass_ratio = 0.0;   // m / mean mass
  double threat = 0.0;
  double competitiveness = 0.0;
};

PiFeatures pi_features(const AgentState& agent, Vec2 desired_dir,
                       double locale_density, double mean_mass);

struct OrderParameter {
  double phi = 0.0;
  bool stagnant = false;  // every agent below v_eps
};

// Magnitude of the mean unit velocity. Agents slower than `v_eps` add a zero
// vector but still count in the denominator.
OrderParameter order_parameter(std::span<const Vec2> velocities, double v_eps);

// Plug-in estimate, in nats, for already-discrete series.
double mutual_information(std::span<const int> xs, std::span<const int> ys);

// Equal-width binning over the observed range followed by the plug-in
// estimate. Throws InsufficientData for fewer than two samples.
double mutual_information(std::span<const double> xs, std::span<const double> ys,
                          std::size_t bins);

std::vector<int> equal_width_bins(std::span<const double> values, std::size_t bins);

// Deterministic k-subset: members ranked by a hash of (seed, id), lowest k
// kept, result ascending.
std::vector<std::size_t> sample_subset(std::span<const std::size_t> members,
                                       std::size_t k, std::uint64_t seed);

enum class PhaseState { Ordered, Disordered };

struct TransitionVerdict {
  PhaseState state = PhaseState::Ordered;
  double confidence = 0.0;
  double mi_value = 0.0;
  double phi_mean = 0.0;
};

// Per-tick sample fed to a locale's detector.
struct SubsetSample {
  double phi = 0.0;
  bool stagnant = false;
  std::vector<double> speed_ratio;  // one entry per subset agent
  std::vector<double> alignment;
};

// Windowed order-parameter history plus the tracked subset for one locale.
class OrderSignal {
 public:
  explicit OrderSignal(std::size_t window = 40) : window_(window) {}

  // Keeps the tracked subset a subset of `members` with size
  // min(k, |members|). A full resample happens when membership has changed
  // by more than half since the last one; otherwise departed ids are dropped
  // and the subset is topped up in hash order.
  void update_subset(std::span<const std::size_t> members, std::size_t k,
                     std::uint64_t seed);

  void push(SubsetSample sample);

  std::size_t window() const { return window_; }
  std::size_t size() const { return samples_.size(); }
  bool full() const { return samples_.size() >= window_; }
  const std::deque<SubsetSample>& samples() const { return samples_; }
  const std::vector<std::size_t>& subset() const { return subset_; }
  std::uint64_t resamples() const { return resamples_; }

 private:
  std::size_t window_;
  std::deque<SubsetSample> samples_;
  std::vector<std::size_t> subset_;
  std::vector<std::size_t> sampled_from_;
  std::uint64_t resamples_ = 0;
};

// Ordered -> Disordered when the window-mean phi falls below phi_crit and
// either the latest tick is stagnant or the MI between the pooled
// speed-ratio and alignment samples exceeds mi_crit. Disordered -> Ordered
// needs every phi in a full window above phi_crit + hysteresis. Returns
// nullopt until the window is at least half full.
std::optional<TransitionVerdict> detect_transition(const OrderSignal& signal,
                                                   const DetectorConfig& config,
                                                   PhaseState prior);

// Detector state for one locale.
struct LocaleDetector {
  OrderSignal signal;
  PhaseState state = PhaseState::Ordered;

  explicit LocaleDetector(std::size_t window) : signal(window) {}

  // Pushes a sample and evaluates. Every evaluation past warm-up runs the
  // MI estimator once.
  std::optional<TransitionVerdict> observe(SubsetSample sample,
                                           const DetectorConfig& config);
};

}  // namespace crush
