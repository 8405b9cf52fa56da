#include "countmix/types.hpp"

#include "countmix/errors.hpp"

#include <algorithm>
#include <cctype>

namespace countmix {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string_view to_string(Family f) {
  return f == Family::Poisson ? "poisson" : "nb2";
}

std::string_view to_string(Criterion c) {
  switch (c) {
    case Criterion::AIC: return "AIC";
    case Criterion::SBC: return "SBC";
    case Criterion::CAIC: return "CAIC";
    case Criterion::ICOMP: return "ICOMP";
  }
  return "?";
}

Family parse_family(std::string_view s) {
  const auto v = lower(s);
  if (v == "poisson") return Family::Poisson;
  if (v == "nb2" || v == "nb-2" || v == "negbin") return Family::NB2;
  throw InputError("unknown family '" + std::string(s) + "'");
}

Criterion parse_criterion(std::string_view s) {
  const auto v = lower(s);
  if (v == "aic") return Criterion::AIC;
  if (v == "sbc" || v == "bic") return Criterion::SBC;
  if (v == "caic") return Criterion::CAIC;
  if (v == "icomp") return Criterion::ICOMP;
  throw InputError("unknown criterion '" + std::string(s) + "'");
}

}  // namespace countmix
