#include "orseq/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace orseq {

GradCheckReport check_gradients(std::span<const ParamRef> params,
                                const std::function<double(bool)>& loss, double h, double floor) {
  for (const auto& p : params) p.grad->fill(0.0);
  loss(true);

  GradCheckReport report;
  for (const auto& p : params) {
    for (std::size_t i = 0; i < p.value->size(); ++i) {
      const double saved = (*p.value)[i];
      (*p.value)[i] = saved + h;
      const double up = loss(false);
      (*p.value)[i] = saved - h;
      const double down = loss(false);
      (*p.value)[i] = saved;

      const double numeric = (up - down) / (2.0 * h);
      const double analytic = (*p.grad)[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double err = std::abs(analytic - numeric) / denom;
      ++report.checked;
      if (err > report.max_rel_error || report.worst.empty()) {
        report.max_rel_error = std::max(report.max_rel_error, err);
        std::ostringstream os;
        os.precision(10);
        os << p.name << "[" << i << "]: analytic=" << analytic << " numeric=" << numeric;
        report.worst = os.str();
      }
    }
  }
  return report;
}

}  // namespace orseq
