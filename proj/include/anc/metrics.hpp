#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "anc/anc_core.hpp"

namespace anc {

// Earliest block k in [start_block, end) with e_k^2 <= (1+rho) * e_inf^2,
// where e_inf^2 is the mean of the last steady_window blocks of the segment.
// nullopt means "did not converge". Index is absolute.
std::optional<std::size_t> convergence_time(const ErrorTrace& trace, double rho,
                                            std::size_t steady_window, std::size_t start_block = 0);

// 10 log10(steady-state OFF / steady-state ON) over the last steady_window
// blocks; +inf when the ANC-ON steady state is exactly zero.
double anc_gain_db(const ErrorTrace& on, const ErrorTrace& off, std::size_t steady_window);

ErrorTrace average_traces(const std::vector<ErrorTrace>& traces);

}  // namespace anc
