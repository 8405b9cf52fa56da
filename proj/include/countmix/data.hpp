#pragma once

#include "countmix/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace countmix {

/// Count outcome plus a design matrix whose column 0 is the intercept.
///
/// `y` holds non-negative integers stored as doubles so the likelihood code
/// can stay in one scalar type. `X` is n x (p+1); `names` labels the p
/// covariate columns (the intercept has no name).
struct Dataset {
  Vector y;
  Matrix X;
  std::vector<std::string> names;
  std::string outcome_name = "y";

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return X.cols() - 1; }
};

/// Covariate inclusion bits, one per non-intercept column. The intercept is
/// always kept, so an all-zero mask is the intercept-only model.
class CovariateMask {
 public:
  CovariateMask() = default;
  explicit CovariateMask(std::vector<bool> bits) : bits_(std::move(bits)) {}

  static CovariateMask all(std::size_t p) { return CovariateMask(std::vector<bool>(p, true)); }
  static CovariateMask none(std::size_t p) { return CovariateMask(std::vector<bool>(p, false)); }
  // 1-based covariate indices, e.g. {4, 7}.
  static CovariateMask from_indices(std::size_t p, const std::vector<int>& one_based);
  // "1,3,4" (1-based) or "none". Throws InputError when malformed.
  static CovariateMask parse(std::string_view text, std::size_t p);

  std::size_t size() const { return bits_.size(); }
  bool operator[](std::size_t j) const { return bits_[j]; }
  void set(std::size_t j, bool v) { bits_[j] = v; }
  std::size_t count() const;
  const std::vector<bool>& bits() const { return bits_; }

  std::vector<int> indices() const;  // 1-based
  // "1, 3, 4, 5, 7" style; "none" for the intercept-only mask.
  std::string label(std::string_view sep = ", ") const;
  std::string bitstring() const;

  friend bool operator==(const CovariateMask&, const CovariateMask&) = default;
  friend auto operator<=>(const CovariateMask& a, const CovariateMask& b) {
    return a.bitstring() <=> b.bitstring();
  }

 private:
  std::vector<bool> bits_;
};

struct ColumnStats {
  std::string name;
  double mean = 0;
  double sd = 0;
  double min = 0;
  double max = 0;
};

Dataset make_dataset(Vector y, const Matrix& covariates, std::vector<std::string> names,
                     std::string outcome_name = "y");

Dataset load_csv(const std::filesystem::path& path, const std::string& outcome_col,
                 const std::vector<std::string>& covariate_cols);

// Shortest round-trip formatting, so reloading reproduces y and X exactly.
void write_csv(const Dataset& d, const std::filesystem::path& path);
std::string to_csv(const Dataset& d);

Dataset apply_mask(const Dataset& d, const CovariateMask& m);
Dataset select_rows(const Dataset& d, const std::vector<Eigen::Index>& rows);

// Outcome first, then each covariate. sd uses the n-1 denominator; a single
// row reports sd = 0.
std::vector<ColumnStats> summary_stats(const Dataset& d);

// Centres and scales every covariate with non-zero spread; the intercept and
// constant columns are left alone.
Dataset standardize(const Dataset& d);

}  // namespace countmix
