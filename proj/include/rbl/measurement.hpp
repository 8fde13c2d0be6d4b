#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "rbl/geometry.hpp"

namespace rbl {

using MaskMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

enum class Modality { Range, Doa, Rssi };

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view s);

// Anchor (base station) coordinates, one column per anchor.
class AnchorSet {
public:
  AnchorSet(Matrix positions, std::string id = "anchors");

  int dim() const { return static_cast<int>(positions_.rows()); }
  int size() const { return static_cast<int>(positions_.cols()); }
  const Matrix& positions() const { return positions_; }
  const std::string& id() const { return id_; }

private:
  Matrix positions_;
  std::string id_;
};

struct NoiseSpec {
  double sigma = 0.0;
  double nlos_prob = 0.0;
  double nlos_bias = 0.0;

  void validate() const;
};

// Log-distance path loss: p = p0 - 10 * eta * log10(d / d0).
struct RssiModelParams {
  double p0 = -40.0;
  double d0 = 1.0;
  double eta = 2.0;

  void validate() const;
};

struct ObservationSet {
  Modality modality = Modality::Range;
  Matrix values;     // M x K
  NoiseSpec noise;
  std::uint64_t seed = 0;
  std::string anchor_ref;
  MaskMatrix nlos;    // entry received the NLOS bias
  MaskMatrix clamped; // noisy range was negative and clamped to zero

  int anchor_count() const { return static_cast<int>(values.rows()); }
  int node_count() const { return static_cast<int>(values.cols()); }
};

// Noiseless measurement of a node at `s` seen from an anchor at `a`.
double bearing(const Vector& s, const Vector& a);
double rssi_at_distance(double dist, const RssiModelParams& model);

// Each (anchor m, node k) entry draws from its own stream seeded with
// derive_seed(seed, {m, k}): one normal for the Gaussian term, then one
// uniform for the NLOS Bernoulli. NLOS adds +bias to ranges and bearings and
// subtracts bias (extra attenuation) from RSSI.
ObservationSet gen_doa(const TransformedBody& body, const AnchorSet& anchors,
                       const NoiseSpec& noise, std::uint64_t seed);
ObservationSet gen_range(const TransformedBody& body, const AnchorSet& anchors,
                         const NoiseSpec& noise, std::uint64_t seed);
ObservationSet gen_rssi(const TransformedBody& body, const AnchorSet& anchors,
                        const RssiModelParams& model, const NoiseSpec& noise, std::uint64_t seed);

ObservationSet generate(Modality modality, const TransformedBody& body, const AnchorSet& anchors,
                        const NoiseSpec& noise, const RssiModelParams& model, std::uint64_t seed);

} // namespace rbl
