#include "rbl/serialization.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rbl/error.hpp"

namespace rbl {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

Matrix points_from_json(const Json& rows, const std::string& what) {
  if (!rows.is_array() || rows.empty()) throw InvalidParameter(what + " must be a non-empty array of points");
  const std::size_t d = rows.front().is_array() ? rows.front().size() : 0;
  if (d == 0) throw InvalidParameter(what + " points must be arrays of coordinates");
  Matrix m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].is_array() || rows[i].size() != d)
      throw InvalidParameter(what + " point " + std::to_string(i) + " has the wrong number of coordinates");
    for (std::size_t r = 0; r < d; ++r) {
      if (!rows[i][r].is_number()) throw InvalidParameter(what + " coordinates must be numbers");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = rows[i][r].get<double>();
    }
  }
  return m;
}

Json points_to_json(const Matrix& points) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    Json p = Json::array();
    for (Eigen::Index r = 0; r < points.rows(); ++r) p.push_back(points(r, i));
    rows.push_back(std::move(p));
  }
  return rows;
}

Json template_to_json(const RigidBodyTemplate& t) {
  return Json{{"dim", t.dim()}, {"nodes", points_to_json(t.nodes())}, {"label", t.label()}};
}

RigidBodyTemplate template_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("dim") || !j.contains("nodes"))
    throw InvalidParameter("template JSON needs \"dim\" and \"nodes\"");
  const int dim = j.at("dim").get<int>();
  Matrix nodes = points_from_json(j.at("nodes"), "template nodes");
  if (nodes.rows() != dim)
    throw DimensionMismatch("template declares dim " + std::to_string(dim) + " but nodes have " +
                            std::to_string(nodes.rows()) + " coordinates");
  return RigidBodyTemplate(std::move(nodes), j.value("label", std::string{}));
}

RigidBodyTemplate load_template(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open template file " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw InvalidParameter("template file " + path + " is not valid JSON: " + e.what());
  }
  return template_from_json(j);
}

void save_template(const RigidBodyTemplate& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write template file " + path);
  out << template_to_json(t).dump(2) << '\n';
  if (!out) throw IoError("failed writing template file " + path);
}

Json pose_to_json(const Pose& p) {
  Json t = Json::array();
  for (Eigen::Index i = 0; i < p.translation.size(); ++i) t.push_back(p.translation(i));
  return Json{{"angles", p.rotation.angles()}, {"translation", t}};
}

Pose pose_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("angles") || !j.contains("translation"))
    throw InvalidParameter("pose JSON needs \"angles\" and \"translation\"");
  const auto angles = j.at("angles").get<std::vector<double>>();
  const auto t = j.at("translation").get<std::vector<double>>();
  return Pose(RotationParam(angles), Eigen::Map<const Vector>(t.data(), static_cast<Eigen::Index>(t.size())));
}

Json observations_to_json(const ObservationSet& obs, const AnchorSet& anchors) {
  Json values = Json::array();
  Json nlos = Json::array();
  for (int m = 0; m < obs.anchor_count(); ++m) {
    Json row = Json::array(), flags = Json::array();
    for (int k = 0; k < obs.node_count(); ++k) {
      row.push_back(obs.values(m, k));
      flags.push_back(obs.nlos(m, k));
    }
    values.push_back(std::move(row));
    nlos.push_back(std::move(flags));
  }
  return Json{{"modality", std::string(to_string(obs.modality))},
              {"anchors", points_to_json(anchors.positions())},
              {"anchor_ref", obs.anchor_ref},
              {"values", std::move(values)},
              {"sigma", obs.noise.sigma},
              {"nlos_prob", obs.noise.nlos_prob},
              {"nlos_bias", obs.noise.nlos_bias},
              {"nlos", std::move(nlos)},
              {"seed", obs.seed}};
}

ObservationSet observations_from_json(const Json& j) {
  ObservationSet obs;
  obs.modality = modality_from_string(j.at("modality").get<std::string>());
  const auto& rows = j.at("values");
  const auto m_count = static_cast<Eigen::Index>(rows.size());
  const auto k_count = m_count > 0 ? static_cast<Eigen::Index>(rows.front().size()) : 0;
  obs.values.resize(m_count, k_count);
  obs.nlos = MaskMatrix::Constant(m_count, k_count, false);
  obs.clamped = MaskMatrix::Constant(m_count, k_count, false);
  for (Eigen::Index m = 0; m < m_count; ++m) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(m)].size()) != k_count)
      throw InvalidParameter("observation rows must all have the same length");
    for (Eigen::Index k = 0; k < k_count; ++k)
      obs.values(m, k) = rows[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)].get<double>();
  }
  if (j.contains("nlos"))
    for (Eigen::Index m = 0; m < m_count; ++m)
      for (Eigen::Index k = 0; k < k_count; ++k)
        obs.nlos(m, k) = j["nlos"][static_cast<std::size_t>(m)][static_cast<std::size_t>(k)].get<bool>();
  obs.noise.sigma = j.value("sigma", 0.0);
  obs.noise.nlos_prob = j.value("nlos_prob", 0.0);
  obs.noise.nlos_bias = j.value("nlos_bias", 0.0);
  obs.seed = j.value("seed", std::uint64_t{0});
  obs.anchor_ref = j.value("anchor_ref", std::string("anchors"));
  return obs;
}

std::string observations_to_csv(const ObservationSet& obs) {
  std::ostringstream os;
  os << "anchor_id,node_id,value,is_nlos\n";
  for (int m = 0; m < obs.anchor_count(); ++m)
    for (int k = 0; k < obs.node_count(); ++k)
      os << m << ',' << k << ',' << format_double(obs.values(m, k)) << ',' << (obs.nlos(m, k) ? 1 : 0) << '\n';
  return os.str();
}

Json result_to_json(const EstimationResult& r) {
  Json j{{"node_positions", points_to_json(r.node_positions)},
         {"objective", r.objective},
         {"objective_trace_length", r.objective_trace.size()},
         {"iterations", r.iterations},
         {"converged", r.converged},
         {"gradient_norm", r.gradient_norm},
         {"refined", r.refined},
         {"rotation_indeterminate", r.rotation_indeterminate},
         {"fallback", r.fallback}};
  j["pose"] = r.pose ? pose_to_json(*r.pose) : Json(nullptr);
  if (r.covariance_est) {
    Json cov = Json::array();
    for (Eigen::Index i = 0; i < r.covariance_est->rows(); ++i) {
      Json row = Json::array();
      for (Eigen::Index c = 0; c < r.covariance_est->cols(); ++c) row.push_back((*r.covariance_est)(i, c));
      cov.push_back(std::move(row));
    }
    j["covariance_est"] = std::move(cov);
  }
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

Json coupling_to_json(const std::vector<SoftConstraint>& constraints, const JointResult& jr) {
  Json out = Json::array();
  for (std::size_t i = 0; i < constraints.size() && i < jr.coupling.size(); ++i) {
    const auto& c = constraints[i];
    const auto& rep = jr.coupling[i];
    out.push_back(Json{{"kind", std::string(to_string(c.kind))},
                       {"bodies", {c.body_i, c.body_j}},
                       {"lower", c.lower},
                       {"upper", c.upper},
                       {"weight", c.weight},
                       {"value", rep.value},
                       {"violation", rep.violation},
                       {"penalty", rep.penalty}});
  }
  return out;
}

} // namespace rbl
