#include "rbl/error.hpp"

#include <sstream>

namespace rbl {

namespace {
std::string join_violations(const std::vector<std::string>& v) {
  std::ostringstream os;
  os << "invalid configuration (" << v.size() << " violation"
     << (v.size() == 1 ? "" : "s") << ")";
  for (const auto& s : v) os << "\n  - " << s;
  return os.str();
}
} // namespace

ValidationError::ValidationError(std::vector<std::string> violations)
    : Error(join_violations(violations)), violations_(std::move(violations)) {}

Eigen::MatrixXd null_space_basis(const Eigen::MatrixXd& m, double rel_tol) {
  if (m.cols() == 0) return Eigen::MatrixXd(0, 0);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  const double tol = rel_tol * std::max(smax, 1e-300);
  int rank = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s(i) > tol) ++rank;
  const int n = static_cast<int>(m.cols());
  return svd.matrixV().rightCols(n - rank);
}

} // namespace rbl
