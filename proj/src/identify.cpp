#include "crushsim/identify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crushsim/error.hpp"
#include "crushsim/random.hpp"

namespace crush {

PiFeatures pi_features(const AgentState& agent, Vec2 desired_dir, double locale_density,
                       double mean_mass) {
  PiFeatures f;
  const double speed = agent.velocity.norm();
  f.speed_ratio = agent.desired_speed > 0.0 ? speed / agent.desired_speed : 0.0;
  f.alignment = speed > 0.0 ? std::clamp(dot(agent.velocity, desired_dir) / speed, -1.0, 1.0) : 0.0;
  const double diameter = 2.0 * agent.radius;
  f.density_star = locale_density * diameter * diameter;
  f.mass_ratio = agent.mass / mean_mass;
  f.threat = agent.perceived_threat;
  f.competitiveness = agent.competitiveness;
  return f;
}

OrderParameter order_parameter(std::span<const Vec2> velocities, double v_eps) {
  OrderParameter out;
  if (velocities.empty()) {
    out.stagnant = true;
    return out;
  }
  Vec2 sum;
  std::size_t moving = 0;
  for (const Vec2& v : velocities) {
    const double s = v.norm();
    if (s <= v_eps) continue;
    sum += v / s;
    ++moving;
  }
  out.stagnant = moving == 0;
  out.phi = out.stagnant ? 0.0
                         : std::min(1.0, sum.norm() / static_cast<double>(velocities.size()));
  return out;
}

namespace {

double plug_in_mi(std::span<const int> xs, int nx, std::span<const int> ys, int ny) {
  const double n = static_cast<double>(xs.size());
  std::vector<double> joint(static_cast<std::size_t>(nx) * ny, 0.0);
  std::vector<double> px(nx, 0.0), py(ny, 0.0);
  for (std::size_t k = 0; k < xs.size(); ++k) {
    joint[static_cast<std::size_t>(xs[k]) * ny + ys[k]] += 1.0;
    px[xs[k]] += 1.0;
    py[ys[k]] += 1.0;
  }
  double mi = 0.0;
  for (int a = 0; a < nx; ++a)
    for (int b = 0; b < ny; ++b) {
      const double c = joint[static_cast<std::size_t>(a) * ny + b];
      if (c == 0.0) continue;
      mi += (c / n) * std::log(c * n / (px[a] * py[b]));
    }
  return std::max(0.0, mi);
}

// Maps arbitrary symbols onto 0..k-1 in sorted order.
std::vector<int> dense_codes(std::span<const int> values, int& count) {
  std::vector<int> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<int> codes(values.size());
  for (std::size_t k = 0; k < values.size(); ++k)
    codes[k] = static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), values[k]) - sorted.begin());
  count = static_cast<int>(sorted.size());
  return codes;
}

}  // namespace

double mutual_information(std::span<const int> xs, std::span<const int> ys) {
  if (xs.size() != ys.size()) throw ShapeError("mutual_information: series lengths differ");
  if (xs.size() < 2) throw InsufficientData("mutual_information: need at least two samples");
  int nx = 0, ny = 0;
  const auto cx = dense_codes(xs, nx);
  const auto cy = dense_codes(ys, ny);
  return plug_in_mi(cx, nx, cy, ny);
}

std::vector<int> equal_width_bins(std::span<const double> values, std::size_t bins) {
  std::vector<int> out(values.size(), 0);
  if (values.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return out;
  const double scale = static_cast<double>(bins) / (hi - lo);
  const int last = static_cast<int>(bins) - 1;
  for (std::size_t k = 0; k < values.size(); ++k)
    out[k] = std::min(last, static_cast<int>((values[k] - lo) * scale));
  return out;
}

double mutual_information(std::span<const double> xs, std::span<const double> ys,
                          std::size_t bins) {
  if (xs.size() != ys.size()) throw ShapeError("mutual_information: series lengths differ");
  if (xs.size() < 2) throw InsufficientData("mutual_information: need at least two samples");
  if (bins < 2) throw ShapeError("mutual_information: need at least two bins");
  const auto bx = equal_width_bins(xs, bins);
  const auto by = equal_width_bins(ys, bins);
  const int nb = static_cast<int>(bins);
  return plug_in_mi(bx, nb, by, nb);
}

namespace {

std::uint64_t subset_rank(std::uint64_t seed, std::size_t id) {
  return hash_words({seed, static_cast<std::uint64_t>(Stream::Subset), id});
}

}  // namespace

std::vector<std::size_t> sample_subset(std::span<const std::size_t> members, std::size_t k,
                                       std::uint64_t seed) {
  std::vector<std::pair<std::uint64_t, std::size_t>> ranked;
  ranked.reserve(members.size());
  for (std::size_t id : members) ranked.emplace_back(subset_rank(seed, id), id);
  const std::size_t take = std::min(k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take), ranked.end());
  std::vector<std::size_t> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(ranked[i].second);
  std::sort(out.begin(), out.end());
  return out;
}

void OrderSignal::update_subset(std::span<const std::size_t> members, std::size_t k,
                                std::uint64_t seed) {
  const std::size_t want = k == 0 ? members.size() : std::min(k, members.size());
  std::vector<std::size_t> current(members.begin(), members.end());
  std::sort(current.begin(), current.end());

  std::size_t common = 0;
  {
    std::vector<std::size_t> both;
    std::set_intersection(current.begin(), current.end(), sampled_from_.begin(),
                          sampled_from_.end(), std::back_inserter(both));
    common = both.size();
  }
  const std::size_t base = std::max(current.size(), sampled_from_.size());
  const double change = base == 0 ? 0.0 : 1.0 - static_cast<double>(common) / static_cast<double>(base);
  const std::uint64_t draw_seed = hash_words({seed, resamples_});

  if (sampled_from_.empty() || change > 0.5) {
    ++resamples_;
    subset_ = sample_subset(current, want, hash_words({seed, resamples_}));
    sampled_from_ = std::move(current);
    return;
  }

  std::vector<std::size_t> kept;
  std::set_intersection(subset_.begin(), subset_.end(), current.begin(), current.end(),
                        std::back_inserter(kept));
  if (kept.size() > want) kept = sample_subset(kept, want, draw_seed);
  if (kept.size() < want) {
    std::vector<std::size_t> candidates;
    std::set_difference(current.begin(), current.end(), kept.begin(), kept.end(),
                        std::back_inserter(candidates));
    const auto extra = sample_subset(candidates, want - kept.size(), draw_seed);
    kept.insert(kept.end(), extra.begin(), extra.end());
    std::sort(kept.begin(), kept.end());
  }
  subset_ = std::move(kept);
}

void OrderSignal::push(SubsetSample sample) {
  samples_.push_back(std::move(sample));
  while (samples_.size() > window_) samples_.pop_front();
}

std::optional<TransitionVerdict> detect_transition(const OrderSignal& signal,
                                                   const DetectorConfig& config,
                                                   PhaseState prior) {
  const auto& samples = signal.samples();
  if (samples.empty() || 2 * samples.size() < signal.window()) return std::nullopt;

  double phi_sum = 0.0;
  std::vector<double> xs, ys;
  for (const auto& s : samples) {
    phi_sum += s.phi;
    xs.insert(xs.end(), s.speed_ratio.begin(), s.speed_ratio.end());
    ys.insert(ys.end(), s.alignment.begin(), s.alignment.end());
  }
  TransitionVerdict v;
  v.phi_mean = phi_sum / static_cast<double>(samples.size());
  v.mi_value = xs.size() >= 2 ? mutual_information(xs, ys, config.bins) : 0.0;
  const bool stagnant = samples.back().stagnant;

  if (prior == PhaseState::Ordered) {
    const bool disordered =
        v.phi_mean < config.phi_crit && (stagnant || v.mi_value > config.mi_crit);
    v.state = disordered ? PhaseState::Disordered : PhaseState::Ordered;
  } else {
    const double release = config.phi_crit + config.hysteresis;
    const bool released = signal.full() && std::all_of(samples.begin(), samples.end(),
                                                       [&](const SubsetSample& s) { return s.phi > release; });
    v.state = released ? PhaseState::Ordered : PhaseState::Disordered;
  }

  if (stagnant && v.state == PhaseState::Disordered) {
    v.confidence = 1.0;
  } else {
    const double gap = v.phi_mean - config.phi_crit;
    const double scale = gap < 0.0 ? config.phi_crit : 1.0 - config.phi_crit;
    v.confidence = 0.5 + 0.5 * std::min(1.0, std::abs(gap) / scale);
  }
  return v;
}

std::optional<TransitionVerdict> LocaleDetector::observe(SubsetSample sample,
                                                         const DetectorConfig& config) {
  signal.push(std::move(sample));
  auto verdict = detect_transition(signal, config, state);
  if (verdict) state = verdict->state;
  return verdict;
}

}  // namespace crush
