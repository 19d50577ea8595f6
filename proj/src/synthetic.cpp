#include <cmath>
#include <numbers>
#include <random>

#include "peddict/dataset_io.hpp"

namespace peddict {

namespace {

struct FamilyName {
  BehaviorFamily family;
  std::string_view name;
};

constexpr FamilyName kFamilies[] = {
    {BehaviorFamily::standing, "standing"},
    {BehaviorFamily::straight_walk, "straight_walk"},
    {BehaviorFamily::leader_follower, "leader_follower"},
    {BehaviorFamily::side_by_side, "side_by_side"},
    {BehaviorFamily::opposite_pass, "opposite_pass"},
    {BehaviorFamily::congregate, "congregate"},
};

bool people_allowed(BehaviorFamily f, int n) {
  switch (f) {
    case BehaviorFamily::standing: return n >= 1 && n <= 3;
    case BehaviorFamily::straight_walk: return n == 1;
    case BehaviorFamily::leader_follower:
    case BehaviorFamily::side_by_side:
    case BehaviorFamily::opposite_pass: return n == 2;
    case BehaviorFamily::congregate: return n == 2 || n == 3;
  }
  return false;
}

}  // namespace

std::string to_string(BehaviorFamily f) {
  for (const auto& e : kFamilies)
    if (e.family == f) return std::string(e.name);
  return "unknown";
}

BehaviorFamily parse_family(std::string_view name) {
  for (const auto& e : kFamilies)
    if (e.name == name) return e.family;
  throw ConfigError("unknown behavior family '" + std::string(name) + "'");
}

int default_people(BehaviorFamily f) {
  switch (f) {
    case BehaviorFamily::standing:
    case BehaviorFamily::straight_walk: return 1;
    case BehaviorFamily::congregate: return 3;
    default: return 2;
  }
}

void validate(const SyntheticSpec& spec) {
  if (spec.count < 1) throw ConfigError("synthetic count must be >= 1");
  if (!(spec.noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  if (spec.length < 2) throw ConfigError("synthetic group length must be >= 2 frames");
  if (!people_allowed(spec.family, spec.n_people))
    throw ConfigError("family " + to_string(spec.family) + " does not support n_people=" +
                      std::to_string(spec.n_people));
}

TrajectoryTable generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  validate(spec);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> place(-spec.spread / 2.0, spec.spread / 2.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);

  const Point2 u{std::cos(spec.direction), std::sin(spec.direction)};
  const Point2 perp{-u.y, u.x};
  const int n = spec.n_people;
  const int len = spec.length;
  const double travel = spec.speed * (len - 1);

  TrajectoryTable table;
  table.scene_id = spec.scene_id;
  table.records.reserve(static_cast<std::size_t>(spec.count) * n * len);

  for (int g = 0; g < spec.count; ++g) {
    const Point2 center{place(rng), place(rng)};
    const double phi0 = phase(rng);
    // Walkers start half a path behind the center so the group stays in the box.
    const Point2 start = center - (travel / 2.0) * u;
    const std::int64_t frame0 = spec.first_frame + static_cast<std::int64_t>(g) * len;
    const std::int64_t id0 = spec.first_ped_id + static_cast<std::int64_t>(g) * n;

    for (int t = 0; t < len; ++t) {
      for (int k = 0; k < n; ++k) {
        Point2 p;
        const double along = spec.speed * t;
        const double lateral = (k - (n - 1) / 2.0) * spec.gap;
        switch (spec.family) {
          case BehaviorFamily::standing:
            p = center + lateral * perp;
            break;
          case BehaviorFamily::straight_walk:
            p = start + along * u;
            break;
          case BehaviorFamily::leader_follower:
            // k == 1 leads by exactly `gap` along the heading.
            p = start + (along + k * spec.gap) * u;
            break;
          case BehaviorFamily::side_by_side:
            p = start + along * u + lateral * perp;
            break;
          case BehaviorFamily::opposite_pass:
            p = k == 0 ? start + along * u + (spec.gap / 2.0) * perp
                       : start + (travel - along) * u - (spec.gap / 2.0) * perp;
            break;
          case BehaviorFamily::congregate: {
            const double a = phi0 + 2.0 * std::numbers::pi * k / n;
            const double sway = 0.05 * spec.gap;
            p = center + (spec.gap / 2.0) * Point2{std::cos(a), std::sin(a)} +
                sway * Point2{std::sin(0.7 * t + k), std::cos(0.5 * t + k)};
            break;
          }
        }
        if (spec.noise_sigma > 0.0) {
          p.x += spec.noise_sigma * noise(rng);
          p.y += spec.noise_sigma * noise(rng);
        }
        table.records.push_back({frame0 + t, id0 + k, p.x, p.y});
      }
    }
  }
  sort_and_check(table);
  return table;
}

}  // namespace peddict
