#pragma once

#include <cstddef>

namespace reclaim {

// Regularized upper incomplete gamma Q(s, x) = Gamma(s, x) / Gamma(s).
// Series expansion for x < s + 1, modified Lentz continued fraction otherwise.
// Absolute tolerance 1e-12. For s = 1 this reduces to exp(-x), which is the
// closed form for the 3x2 contingency table (dof = 2, p = Q(1, x/2)).
double gamma_q(double s, double x);

// Two-sided 95% Student-t critical value t_{df, 0.975}. Tabulated for
// df in [1, 30]; the normal quantile 1.96 is used beyond that.
double t_critical_95(size_t df);

}  // namespace reclaim
