#include "rfr/rank_metrics.hpp"

#include <json.hpp>

namespace rfr {

std::string rank_report_json(const RankReport<double>& report) {
  nlohmann::ordered_json j;
  j["rank"] = report.algebraic_rank;
  j["trank"] = report.trank;
  j["erank"] = report.erank;
  j["rho"] = report.rho;
  j["eigenvalues"] = std::vector<double>(report.eigenvalues.data(),
                                         report.eigenvalues.data() + report.eigenvalues.size());
  return j.dump(2);
}

}  // namespace rfr
