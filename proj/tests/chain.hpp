#pragma once

// A row of discs pressed against a wall by a push on the last one. Relaxed
// with the contact engine until static, then compared against the
// equilibrium of the same springs solved directly.

#include <cmath>
#include <vector>

#include "crushsim/quantify.hpp"

namespace chain {

struct Result {
  std::vector<double> simulated;  // normal per contact, wall contact first
  std::vector<double> oracle;
};

// Gaussian elimination on a small dense system.
inline std::vector<double> solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    std::swap(a[c], a[p]);
    std::swap(b[c], b[p]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t r = n; r-- > 0;) {
    double s = b[r];
    for (std::size_t k = r + 1; k < n; ++k) s -= a[r][k] * x[k];
    x[r] = s / a[r][r];
  }
  return x;
}

inline Result run(std::size_t n, double push, const crush::ContactForceParams& params = {}) {
  using namespace crush;
  const double r = 0.25, k = params.body_stiffness, mass = 80.0;
  std::vector<Segment> walls{{{0, -5}, {0, 5}}};
  std::vector<AgentState> agents(n);
  for (std::size_t i = 0; i < n; ++i) {
    agents[i].id = i;
    agents[i].radius = r;
    agents[i].mass = mass;
    agents[i].position = {r + 2 * r * static_cast<double>(i), 1.0};
  }
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;

  const double dt = 1e-3, damping = 2.0 * std::sqrt(k * mass);
  ResolvedForces f;
  ContactSearch search;
  for (int step = 0; step < 40000; ++step) {
    auto grid = partition_locales(agents, 2.0);
    search = contact_pairs(agents, all, grid, walls);
    f = resolve_forces(search.contacts, agents, params);
    for (std::size_t i = 0; i < n; ++i) {
      Vec2 total = f.force[i] - agents[i].velocity * damping;
      if (i + 1 == n) total.x -= push;
      agents[i].velocity += total * (dt / mass);
      agents[i].position += agents[i].velocity * dt;
    }
  }

  Result out;
  // wall contact, then (0,1), (1,2), ...
  for (const auto& c : search.contacts)
    if (c.kind == ContactKind::AgentWall) out.simulated.push_back(f.contact_normal[&c - search.contacts.data()]);
  for (std::size_t i = 0; i + 1 < n; ++i)
    for (const auto& c : search.contacts)
      if (c.kind == ContactKind::AgentAgent && c.first == i && c.second == i + 1)
        out.simulated.push_back(f.contact_normal[&c - search.contacts.data()]);

  // Springs: wall-0, 0-1, ..., (n-2)-(n-1). Unknowns are displacements u_i
  // toward the wall; stiffness matrix of a fixed-free chain.
  std::vector<std::vector<double>> K(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    K[i][i] += k;  // spring on the wall side of i
    if (i > 0) {
      K[i][i - 1] -= k;
      K[i - 1][i] -= k;
      K[i - 1][i - 1] += k;
    }
  }
  std::vector<double> load(n, 0.0);
  load[n - 1] = push;
  const auto u = solve(K, load);
  out.oracle.push_back(k * u[0]);
  for (std::size_t i = 0; i + 1 < n; ++i) out.oracle.push_back(k * (u[i + 1] - u[i]));
  return out;
}

}  // namespace chain
