#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "mtmatch/simulation.hpp"

namespace mtmatch {

class StoreError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Directory holding results.csv (one summary row per finished cell) and
/// cells/<id>.json (the full report). A row is appended only after its JSON
/// file is in place, so an interrupted run loses at most the cell in flight.
class ResultsStore {
 public:
  // Creates the directory when missing; validates every existing row and
  // throws StoreError naming the first bad one.
  explicit ResultsStore(std::filesystem::path dir);

  bool contains(const std::string& id) const { return ids_.count(id) > 0; }
  std::vector<std::string> ids() const { return order_; }
  std::size_t size() const { return order_.size(); }
  const std::filesystem::path& dir() const { return dir_; }

  void append(const SimReport& report);
  std::vector<SimReport> load() const;

  static std::vector<std::string> header();

 private:
  std::filesystem::path dir_;
  std::vector<std::string> order_;
  std::set<std::string> ids_;
};

}  // namespace mtmatch
