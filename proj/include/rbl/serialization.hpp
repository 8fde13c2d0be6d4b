#pragma once

#include <string>

#include <json.hpp>

#include "rbl/estimators.hpp"
#include "rbl/geometry.hpp"
#include "rbl/measurement.hpp"
#include "rbl/soft_connection.hpp"

namespace rbl {

using Json = nlohmann::json;

// Shortest decimal text that round-trips to the same double; "nan"/"inf"
// for non-finite values.
std::string format_double(double x);

// Rows are points: [[x1, y1], [x2, y2], ...] becomes a d x N matrix.
Matrix points_from_json(const Json& rows, const std::string& what);
Json points_to_json(const Matrix& points);

// {"dim": 2, "nodes": [[x1, y1], ...], "label": "..."}
Json template_to_json(const RigidBodyTemplate& t);
RigidBodyTemplate template_from_json(const Json& j);
RigidBodyTemplate load_template(const std::string& path);
void save_template(const RigidBodyTemplate& t, const std::string& path);

// {"angles": [...], "translation": [...]}
Json pose_to_json(const Pose& p);
Pose pose_from_json(const Json& j);

// {"modality", "anchors": [[...]], "values": [[...]], "sigma", "seed", ...}
// "values" is row-per-anchor (M rows of K entries).
Json observations_to_json(const ObservationSet& obs, const AnchorSet& anchors);
ObservationSet observations_from_json(const Json& j);
// Header: anchor_id,node_id,value,is_nlos
std::string observations_to_csv(const ObservationSet& obs);

Json result_to_json(const EstimationResult& r);
Json coupling_to_json(const std::vector<SoftConstraint>& constraints, const JointResult& jr);

} // namespace rbl
