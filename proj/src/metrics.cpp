#include "anc/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace anc {

std::optional<std::size_t> convergence_time(const ErrorTrace& trace, double rho,
                                            std::size_t steady_window, std::size_t start_block) {
  const std::size_t end = trace.block_mse.size();
  if (start_block >= end || end - start_block <= steady_window) {
    throw std::invalid_argument("convergence_time: segment shorter than the steady window");
  }
  double steady = 0.0;
  for (std::size_t i = end - steady_window; i < end; ++i) steady += trace.block_mse[i];
  steady /= static_cast<double>(steady_window);
  const double threshold = (1.0 + rho) * steady;
  for (std::size_t k = start_block; k < end; ++k) {
    if (trace.block_mse[k] <= threshold) return k;
  }
  return std::nullopt;
}

double anc_gain_db(const ErrorTrace& on, const ErrorTrace& off, std::size_t steady_window) {
  if (on.block_mse.size() != off.block_mse.size()) {
    throw std::invalid_argument("anc_gain_db: trace length mismatch");
  }
  if (on.block_mse.size() < steady_window || steady_window == 0) {
    throw std::invalid_argument("anc_gain_db: trace shorter than the steady window");
  }
  double s_on = 0.0, s_off = 0.0;
  for (std::size_t i = on.block_mse.size() - steady_window; i < on.block_mse.size(); ++i) {
    s_on += on.block_mse[i];
    s_off += off.block_mse[i];
  }
  if (s_on == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(s_off / s_on);
}

ErrorTrace average_traces(const std::vector<ErrorTrace>& traces) {
  if (traces.empty()) throw std::domain_error("average_traces: empty set");
  ErrorTrace out;
  out.block_size = traces.front().block_size;
  out.sample_rate = traces.front().sample_rate;
  out.block_mse.assign(traces.front().block_mse.size(), 0.0);
  for (const auto& t : traces) {
    if (t.block_mse.size() != out.block_mse.size()) {
      throw std::invalid_argument("average_traces: length mismatch");
    }
    for (std::size_t i = 0; i < out.block_mse.size(); ++i) out.block_mse[i] += t.block_mse[i];
  }
  for (auto& v : out.block_mse) v /= static_cast<double>(traces.size());
  return out;
}

}  // namespace anc
