#pragma once

// Query-specific anchored radial observations over a point cloud, and a non-neural occupancy
// heuristic that treats estimated radial depths as visibility limits.

#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <vector>

#include "aro/anchors.hpp"
#include "aro/geom.hpp"
#include "aro/io.hpp"
#include "aro/parallel.hpp"
#include "aro/spatial.hpp"

namespace aro {

enum class ObservationStatus : std::uint8_t {
  InCone = 0,    // tier 1: inside the cone
  Fallback = 1,  // tier 2: padding chosen by smallest angular deviation
  Padding = 2,   // cloud has fewer than k points; offset is zero
};

struct RadialObservation {
  std::size_t anchor_id = 0;
  std::vector<Vec3> observed;              // p - a_i, ranked, length k
  std::vector<ObservationStatus> status;   // parallel to `observed`
  Vec3 r;                                  // x - a_i
  double r_norm = 0;                       // |r|
  bool degenerate_axis = false;            // x coincided with the anchor; plain k-nearest

  std::size_t in_cone_count() const {
    return static_cast<std::size_t>(std::count(status.begin(), status.end(), ObservationStatus::InCone));
  }
};

struct AroFeatureSet {
  Vec3 query;
  std::vector<RadialObservation> observations;  // one per anchor, in anchor order
};

inline RadialObservation observe_from_anchor(const SpatialIndex& index, std::size_t anchor_id,
                                             Vec3 anchor, Vec3 x, double half_angle, std::size_t k) {
  RadialObservation obs;
  obs.anchor_id = anchor_id;
  obs.r = x - anchor;
  obs.r_norm = length(obs.r);
  obs.degenerate_axis = obs.r_norm == 0;
  const ConeQuery q{anchor, obs.degenerate_axis ? Vec3{} : obs.r, half_angle, k};
  const auto hits = index.cone_top_k(q);
  obs.observed.reserve(k);
  obs.status.reserve(k);
  for (const auto& h : hits) {
    obs.observed.push_back(h.point - anchor);
    obs.status.push_back(h.in_cone ? ObservationStatus::InCone : ObservationStatus::Fallback);
  }
  while (obs.observed.size() < k) {
    obs.observed.push_back({});
    obs.status.push_back(ObservationStatus::Padding);
  }
  return obs;
}

/// ARO for one query: per anchor, the top-k cone points from a_i toward x, stored anchor-relative.
inline AroFeatureSet extract_aro(const SpatialIndex& index, const AnchorSet& anchors, Vec3 x,
                                 double half_angle = degrees_to_radians(kDefaultHalfAngleDeg),
                                 std::size_t k = kDefaultK) {
  if (!is_finite(x)) throw Error("extract_aro: non-finite query");
  if (anchors.size() == 0) throw Error("extract_aro: empty anchor set");
  AroFeatureSet out{x, {}};
  out.observations.reserve(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i)
    out.observations.push_back(observe_from_anchor(index, i, anchors.positions[i], x, half_angle, k));
  return out;
}

/// Depth of the first surface seen from the anchor toward x: projection onto the unit axis of the
/// in-cone observed point nearest the axis (smallest angle; the closer point wins a tie).
/// Empty if the cone held no points.
inline std::optional<double> estimate_radial_depth(const RadialObservation& obs) {
  if (obs.degenerate_axis || obs.r_norm == 0) return std::nullopt;
  const Vec3 axis = obs.r / obs.r_norm;
  std::optional<double> depth;
  double best_angle = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < obs.observed.size(); ++j) {
    if (obs.status[j] != ObservationStatus::InCone) continue;
    const double a = angle_between(axis, obs.observed[j]);
    if (a < best_angle) {
      best_angle = a;
      depth = dot(obs.observed[j], axis);
    }
  }
  return depth;
}

/// Inside iff no exterior anchor sees x before its estimated surface depth. Anchors whose cone
/// is empty abstain.
inline bool occupancy_from_depths(const AroFeatureSet& aro) {
  bool any_vote = false;
  for (const auto& obs : aro.observations) {
    const auto depth = estimate_radial_depth(obs);
    if (!depth) continue;
    any_vote = true;
    if (!(obs.r_norm > *depth)) return false;
  }
  if (!any_vote) throw Error("heuristic occupancy: no observations (every anchor abstained)");
  return true;
}

/// Caller asserts every anchor lies outside the shape.
inline bool heuristic_occupancy_exterior(const SpatialIndex& index, const AnchorSet& exterior_anchors,
                                         Vec3 x,
                                         double half_angle = degrees_to_radians(kDefaultHalfAngleDeg),
                                         std::size_t k = kDefaultK) {
  return occupancy_from_depths(extract_aro(index, exterior_anchors, x, half_angle, k));
}

// Binary ARO file, all little-endian:
//   char[4] "AROB", u32 version (1), u32 m, u32 k, u64 query_count
//   per query:  f64 x, y, z
//     per anchor (m):  f64 r.x, r.y, r.z, r_norm; u8 degenerate_axis
//       per entry (k): f64 dx, dy, dz; u8 status (0 in-cone, 1 fallback, 2 padding)
inline void write_aro_header(std::ostream& os, std::uint32_t m, std::uint32_t k, std::uint64_t count) {
  os.write("AROB", 4);
  write_le<std::uint32_t>(os, 1);
  write_le<std::uint32_t>(os, m);
  write_le<std::uint32_t>(os, k);
  write_le<std::uint64_t>(os, count);
}

inline void write_aro_record(std::ostream& os, const AroFeatureSet& f) {
  write_le(os, f.query.x);
  write_le(os, f.query.y);
  write_le(os, f.query.z);
  for (const auto& obs : f.observations) {
    write_le(os, obs.r.x);
    write_le(os, obs.r.y);
    write_le(os, obs.r.z);
    write_le(os, obs.r_norm);
    write_le<std::uint8_t>(os, obs.degenerate_axis ? 1 : 0);
    for (std::size_t j = 0; j < obs.observed.size(); ++j) {
      write_le(os, obs.observed[j].x);
      write_le(os, obs.observed[j].y);
      write_le(os, obs.observed[j].z);
      write_le<std::uint8_t>(os, static_cast<std::uint8_t>(obs.status[j]));
    }
  }
}

struct AroFile {
  std::uint32_t m = 0, k = 0;
  std::vector<AroFeatureSet> records;
};

inline AroFile read_aro_file(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::string_view(magic, 4) != "AROB") throw Error("aro file: bad magic");
  if (read_le<std::uint32_t>(is) != 1) throw Error("aro file: unsupported version");
  AroFile file;
  file.m = read_le<std::uint32_t>(is);
  file.k = read_le<std::uint32_t>(is);
  const auto count = read_le<std::uint64_t>(is);
  file.records.resize(count);
  for (auto& rec : file.records) {
    rec.query = {read_le<double>(is), read_le<double>(is), read_le<double>(is)};
    rec.observations.resize(file.m);
    for (std::size_t i = 0; i < file.m; ++i) {
      auto& obs = rec.observations[i];
      obs.anchor_id = i;
      obs.r = {read_le<double>(is), read_le<double>(is), read_le<double>(is)};
      obs.r_norm = read_le<double>(is);
      obs.degenerate_axis = read_le<std::uint8_t>(is) != 0;
      obs.observed.resize(file.k);
      obs.status.resize(file.k);
      for (std::size_t j = 0; j < file.k; ++j) {
        obs.observed[j] = {read_le<double>(is), read_le<double>(is), read_le<double>(is)};
        const auto s = read_le<std::uint8_t>(is);
        if (s > 2) throw Error("aro file: bad status byte");
        obs.status[j] = static_cast<ObservationStatus>(s);
      }
    }
  }
  return file;
}

/// Encodes every query in parallel; records are written in query order.
inline void encode_queries(std::ostream& os, const SpatialIndex& index, const AnchorSet& anchors,
                           const std::vector<Vec3>& queries, double half_angle, std::size_t k) {
  std::vector<AroFeatureSet> features(queries.size());
  parallel_for(queries.size(), [&](std::size_t i) {
    features[i] = extract_aro(index, anchors, queries[i], half_angle, k);
  });
  write_aro_header(os, static_cast<std::uint32_t>(anchors.size()), static_cast<std::uint32_t>(k),
                   queries.size());
  for (const auto& f : features) write_aro_record(os, f);
}

}  // namespace aro
