#pragma once

#include <Eigen/Dense>

#include <string>
#include <string_view>

namespace countmix {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

enum class Family { Poisson, NB2 };

enum class Criterion { AIC, SBC, CAIC, ICOMP };

std::string_view to_string(Family f);
std::string_view to_string(Criterion c);

// Accepts "poisson"/"nb2" and "aic"/"sbc"/"bic"/"caic"/"icomp"
// (case-insensitive). Throws InputError on anything else.
Family parse_family(std::string_view s);
Criterion parse_criterion(std::string_view s);

}  // namespace countmix
