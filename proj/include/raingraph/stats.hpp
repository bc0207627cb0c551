#pragma once

#include <Eigen/Dense>
#include <vector>

namespace raingraph::stats {

double mean(const std::vector<double>& v);

// Population standard deviation (divisor n). Matches the normalization
// record written next to every panel.
double stddev(const std::vector<double>& v);

// q in [0,100]. Linear interpolation between the closest order statistics:
// rank h = (n-1)*q/100, result = v[floor(h)] + frac(h)*(v[floor(h)+1]-v[floor(h)]).
double percentile(std::vector<double> values, double q);

double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Regularized lower/upper incomplete gamma, series + continued-fraction.
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// P[X > x] for X ~ chi-square with df degrees of freedom.
double chi_square_sf(double x, int df);

struct OlsFit {
    Eigen::VectorXd beta;
    double rss = 0.0;
    bool full_rank = true;
};

// Least squares via column-pivoted QR; full_rank=false flags a collinear
// design (coefficients are then a minimum-norm-ish solution, rss still valid).
OlsFit ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

}  // namespace raingraph::stats
