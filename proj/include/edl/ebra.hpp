#pragma once

// Expert base-rate assignment: shift each class's defective base rate by
// sigmoid(CIW_k) - 1/2, where CIW_k is an expert class-importance weight.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "edl/sl_core.hpp"

namespace edl {

struct CiwEntry {
  std::string class_name;
  double weight = 0.0;

  friend bool operator==(const CiwEntry&, const CiwEntry&) = default;
};

// Ordered (class name, weight) table. Names are unique, weights finite.
class CiwTable {
 public:
  CiwTable() = default;
  explicit CiwTable(std::vector<CiwEntry> entries);

  // Uniform weights of 1 over the given class names.
  static CiwTable uniform(const std::vector<std::string>& class_names);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<CiwEntry>& entries() const noexcept { return entries_; }
  const CiwEntry& operator[](std::size_t i) const { return entries_[i]; }

  // Throws kConfig if the name is missing.
  double weight_of(std::string_view class_name) const;
  bool contains(std::string_view class_name) const;

  // Table restricted to, and reordered by, the given class names.
  // Throws kConfig naming the first missing class.
  CiwTable select(const std::vector<std::string>& class_names) const;

  friend bool operator==(const CiwTable&, const CiwTable&) = default;

 private:
  std::vector<CiwEntry> entries_;
};

using BaseRateSet = std::vector<BaseRatePair>;

double sigmoid(double x) noexcept;

// a_k^+ = a0^+ + (sigmoid(CIW_k) - 1/2), a_k^- = a0^- - (sigmoid(CIW_k) - 1/2).
// Throws kConfig if any resulting component leaves the open interval (0,1).
BaseRateSet adjust_base_rates(const CiwTable& ciw,
                              const BaseRatePair& a0 = BaseRatePair());

// K copies of a0, i.e. training without expert base rates.
BaseRateSet uniform_base_rates(std::size_t k,
                               const BaseRatePair& a0 = BaseRatePair());

}  // namespace edl
