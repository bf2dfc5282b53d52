#pragma once

namespace tutor::stats {

/// Regularized incomplete beta I_x(a, b), evaluated by Lentz's continued fraction.
double incomplete_beta(double a, double b, double x);

/// Inverse of I_x(a, b) in x, by bisection to 1e-12.
double incomplete_beta_inverse(double a, double b, double p);

/// Standard normal CDF.
double normal_cdf(double z);

/// Student-t CDF with `dof` degrees of freedom.
double student_t_cdf(double t, double dof);

/// Quantile of the Student-t distribution.
double student_t_quantile(double p, double dof);

}  // namespace tutor::stats
