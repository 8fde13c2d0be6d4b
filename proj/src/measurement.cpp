#include "rbl/measurement.hpp"

#include <cmath>

#include "rbl/error.hpp"
#include "rbl/random.hpp"

namespace rbl {

std::string_view to_string(Modality m) {
  switch (m) {
  case Modality::Range: return "range";
  case Modality::Doa: return "doa";
  case Modality::Rssi: return "rssi";
  }
  return "unknown";
}

Modality modality_from_string(std::string_view s) {
  if (s == "range") return Modality::Range;
  if (s == "doa") return Modality::Doa;
  if (s == "rssi") return Modality::Rssi;
  throw InvalidParameter("unknown modality '" + std::string(s) + "'");
}

AnchorSet::AnchorSet(Matrix positions, std::string id)
    : positions_(std::move(positions)), id_(std::move(id)) {
  if (positions_.rows() != 2 && positions_.rows() != 3)
    throw InvalidParameter("anchor dimension must be 2 or 3");
  if (positions_.cols() < 1) throw InvalidParameter("need at least one anchor");
  if (!positions_.allFinite()) throw InvalidParameter("anchor coordinates must be finite");
  for (Eigen::Index i = 0; i < positions_.cols(); ++i)
    for (Eigen::Index j = i + 1; j < positions_.cols(); ++j)
      if (positions_.col(i) == positions_.col(j))
        throw InvalidParameter("anchors " + std::to_string(i) + " and " + std::to_string(j) +
                               " coincide");
}

void NoiseSpec::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidParameter("noise sigma must be >= 0");
  if (!(nlos_prob >= 0.0 && nlos_prob <= 1.0)) throw InvalidParameter("nlos_prob must lie in [0, 1]");
  if (!(nlos_bias >= 0.0) || !std::isfinite(nlos_bias))
    throw InvalidParameter("nlos_bias must be >= 0");
}

void RssiModelParams::validate() const {
  if (!(d0 > 0.0)) throw InvalidParameter("rssi reference distance d0 must be > 0");
  if (!(eta > 0.0)) throw InvalidParameter("rssi path-loss exponent must be > 0");
  if (!std::isfinite(p0)) throw InvalidParameter("rssi reference power must be finite");
}

double bearing(const Vector& s, const Vector& a) { return std::atan2(s(1) - a(1), s(0) - a(0)); }

double rssi_at_distance(double dist, const RssiModelParams& model) {
  return model.p0 - 10.0 * model.eta * std::log10(dist / model.d0);
}

namespace {

struct Draw {
  double gauss;
  bool nlos;
};

Draw draw_entry(std::uint64_t seed, int m, int k, const NoiseSpec& noise) {
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(k)}));
  const double g = rng.normal();
  const double u = rng.uniform();
  return {noise.sigma * g, u < noise.nlos_prob};
}

ObservationSet prepare(Modality modality, const TransformedBody& body, const AnchorSet& anchors,
                       const NoiseSpec& noise, std::uint64_t seed) {
  noise.validate();
  if (body.dim() != anchors.dim())
    throw DimensionMismatch("body is " + std::to_string(body.dim()) + "D but anchors are " +
                            std::to_string(anchors.dim()) + "D");
  if (!body.positions.allFinite()) throw InvalidParameter("body coordinates must be finite");
  ObservationSet obs;
  obs.modality = modality;
  obs.values = Matrix::Zero(anchors.size(), body.size());
  obs.noise = noise;
  obs.seed = seed;
  obs.anchor_ref = anchors.id();
  obs.nlos = MaskMatrix::Constant(anchors.size(), body.size(), false);
  obs.clamped = MaskMatrix::Constant(anchors.size(), body.size(), false);
  return obs;
}

} // namespace

ObservationSet gen_doa(const TransformedBody& body, const AnchorSet& anchors, const NoiseSpec& noise,
                       std::uint64_t seed) {
  if (body.dim() != 2) throw InvalidParameter("DoA observations are defined for 2D bodies only");
  ObservationSet obs = prepare(Modality::Doa, body, anchors, noise, seed);
  for (int m = 0; m < anchors.size(); ++m) {
    const Vector a = anchors.positions().col(m);
    for (int k = 0; k < body.size(); ++k) {
      const Vector s = body.positions.col(k);
      if ((s - a).norm() == 0.0)
        throw SingularityError("bearing undefined: anchor " + std::to_string(m) +
                                   " coincides with node " + std::to_string(k),
                               m, k);
      const Draw dr = draw_entry(seed, m, k, noise);
      double v = bearing(s, a) + dr.gauss;
      if (dr.nlos) v += noise.nlos_bias;
      obs.nlos(m, k) = dr.nlos;
      obs.values(m, k) = wrap_angle(v);
    }
  }
  return obs;
}

ObservationSet gen_range(const TransformedBody& body, const AnchorSet& anchors, const NoiseSpec& noise,
                         std::uint64_t seed) {
  ObservationSet obs = prepare(Modality::Range, body, anchors, noise, seed);
  for (int m = 0; m < anchors.size(); ++m) {
    for (int k = 0; k < body.size(); ++k) {
      const Draw dr = draw_entry(seed, m, k, noise);
      double v = (body.positions.col(k) - anchors.positions().col(m)).norm() + dr.gauss;
      if (dr.nlos) v += noise.nlos_bias;
      obs.nlos(m, k) = dr.nlos;
      if (v < 0.0) {
        v = 0.0;
        obs.clamped(m, k) = true;
      }
      obs.values(m, k) = v;
    }
  }
  return obs;
}

ObservationSet gen_rssi(const TransformedBody& body, const AnchorSet& anchors,
                        const RssiModelParams& model, const NoiseSpec& noise, std::uint64_t seed) {
  model.validate();
  ObservationSet obs = prepare(Modality::Rssi, body, anchors, noise, seed);
  for (int m = 0; m < anchors.size(); ++m) {
    for (int k = 0; k < body.size(); ++k) {
      const double dist = (body.positions.col(k) - anchors.positions().col(m)).norm();
      if (dist == 0.0)
        throw SingularityError("RSSI undefined at zero distance: anchor " + std::to_string(m) +
                                   ", node " + std::to_string(k),
                               m, k);
      const Draw dr = draw_entry(seed, m, k, noise);
      double v = rssi_at_distance(dist, model) + dr.gauss;
      if (dr.nlos) v -= noise.nlos_bias;
      obs.nlos(m, k) = dr.nlos;
      obs.values(m, k) = v;
    }
  }
  return obs;
}

ObservationSet generate(Modality modality, const TransformedBody& body, const AnchorSet& anchors,
                        const NoiseSpec& noise, const RssiModelParams& model, std::uint64_t seed) {
  switch (modality) {
  case Modality::Range: return gen_range(body, anchors, noise, seed);
  case Modality::Doa: return gen_doa(body, anchors, noise, seed);
  case Modality::Rssi: return gen_rssi(body, anchors, model, noise, seed);
  }
  throw InvalidParameter("unknown modality");
}

} // namespace rbl
