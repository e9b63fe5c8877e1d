#pragma once

#include <atomic>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "gema/core_model.hpp"

namespace gema::test {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("gema-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline ClinicalEntity ent(std::string disease, std::optional<std::string> location = {},
                          std::optional<std::string> severity = {},
                          std::optional<std::string> uncertainty = {}) {
  ClinicalEntity e;
  e.disease = std::move(disease);
  e.location = std::move(location);
  e.severity = std::move(severity);
  e.uncertainty = std::move(uncertainty);
  return e;
}

inline EntitySet set_of(std::vector<ClinicalEntity> entities, Role role = Role::reference) {
  EntitySet s;
  s.entities = std::move(entities);
  s.source = role;
  return s;
}

// Random entity set over a small vocabulary so that collisions are frequent.
// Duplicate tuples are removed, as validation would.
inline EntitySet random_entity_set(std::mt19937_64& rng, std::size_t max_size,
                                   std::size_t vocabulary = 4, Role role = Role::reference) {
  std::uniform_int_distribution<std::size_t> size_dist(0, max_size);
  std::uniform_int_distribution<std::size_t> term(0, vocabulary - 1);
  std::bernoulli_distribution present(0.6);
  std::vector<RawEntity> raw;
  auto n = size_dist(rng);
  for (std::size_t i = 0; i < n; ++i) {
    RawEntity r;
    r.disease = "d" + std::to_string(term(rng));
    if (present(rng)) r.location = "l" + std::to_string(term(rng));
    if (present(rng)) r.severity = "s" + std::to_string(term(rng));
    if (present(rng)) r.uncertainty = "u" + std::to_string(term(rng));
    raw.push_back(r);
  }
  auto s = validate_entity_set(raw, role);
  s.structural_error_count = 0;
  return s;
}

}  // namespace gema::test
