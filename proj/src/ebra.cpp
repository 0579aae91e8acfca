#include "edl/ebra.hpp"

#include <cmath>
#include <unordered_set>

#include "edl/error.hpp"

namespace edl {

CiwTable::CiwTable(std::vector<CiwEntry> entries) : entries_(std::move(entries)) {
  std::unordered_set<std::string> seen;
  for (const auto& e : entries_) {
    if (!seen.insert(e.class_name).second) {
      fail(ErrorKind::kConfig, "duplicate class in CIW table: " + e.class_name);
    }
    if (!std::isfinite(e.weight)) {
      fail(ErrorKind::kConfig, "non-finite CIW for class " + e.class_name);
    }
  }
}

CiwTable CiwTable::uniform(const std::vector<std::string>& class_names) {
  std::vector<CiwEntry> entries;
  entries.reserve(class_names.size());
  for (const auto& name : class_names) entries.push_back({name, 1.0});
  return CiwTable(std::move(entries));
}

bool CiwTable::contains(std::string_view class_name) const {
  for (const auto& e : entries_) {
    if (e.class_name == class_name) return true;
  }
  return false;
}

double CiwTable::weight_of(std::string_view class_name) const {
  for (const auto& e : entries_) {
    if (e.class_name == class_name) return e.weight;
  }
  fail(ErrorKind::kConfig,
       "CIW table has no entry for class " + std::string(class_name));
}

CiwTable CiwTable::select(const std::vector<std::string>& class_names) const {
  std::vector<CiwEntry> out;
  out.reserve(class_names.size());
  for (const auto& name : class_names) out.push_back({name, weight_of(name)});
  return CiwTable(std::move(out));
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double z = std::exp(x);
  return z / (1.0 + z);
}

BaseRateSet adjust_base_rates(const CiwTable& ciw, const BaseRatePair& a0) {
  BaseRateSet out;
  out.reserve(ciw.size());
  for (const auto& entry : ciw.entries()) {
    const double shift = sigmoid(entry.weight) - 0.5;
    const double pos = a0.pos() + shift;
    const double neg = a0.neg() - shift;
    if (!(pos > 0.0 && pos < 1.0 && neg > 0.0 && neg < 1.0)) {
      fail(ErrorKind::kConfig, "adjusted base rate for class " +
                                   entry.class_name +
                                   " leaves (0,1); CIW magnitude too large");
    }
    out.emplace_back(pos, neg);
  }
  return out;
}

BaseRateSet uniform_base_rates(std::size_t k, const BaseRatePair& a0) {
  return BaseRateSet(k, a0);
}

}  // namespace edl
