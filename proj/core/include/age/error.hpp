#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace age {

// Base of every error raised by the library. `kind()` is the stable
// machine-readable tag written into CLI error records.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define AGE_DEFINE_ERROR(Name)                                      \
  class Name : public Error {                                       \
   public:                                                          \
    explicit Name(const std::string& what) : Error(#Name, what) {}  \
  };

AGE_DEFINE_ERROR(ShapeError)
AGE_DEFINE_ERROR(NotFound)
AGE_DEFINE_ERROR(EmptyCategory)
AGE_DEFINE_ERROR(EmptyDataset)
AGE_DEFINE_ERROR(ConstructionFailed)
AGE_DEFINE_ERROR(RangeError)
AGE_DEFINE_ERROR(InsufficientData)
AGE_DEFINE_ERROR(ConvergenceError)
AGE_DEFINE_ERROR(RankError)
AGE_DEFINE_ERROR(IoError)
AGE_DEFINE_ERROR(ConfigError)

#undef AGE_DEFINE_ERROR

class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, const std::string& what)
      : Error("DivergenceError", what), epoch_(epoch) {}

  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace age
