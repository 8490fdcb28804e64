#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace safebid {

// Base of every engine error. kind() is the stable machine-readable tag the
// CLI prints on failure.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define SAFEBID_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(#Name, what) {}   \
  };

// market_core
SAFEBID_DEFINE_ERROR(InfeasibleDemand)
SAFEBID_DEFINE_ERROR(DimensionMismatch)
SAFEBID_DEFINE_ERROR(InvalidInstance)

// safety_filter
SAFEBID_DEFINE_ERROR(NoFeasibleCompletion)
SAFEBID_DEFINE_ERROR(BadBigM)
SAFEBID_DEFINE_ERROR(InstanceTooLarge)
SAFEBID_DEFINE_ERROR(InvalidFilterConfig)

// ddpg
SAFEBID_DEFINE_ERROR(ShapeMismatch)
SAFEBID_DEFINE_ERROR(InsufficientSamples)
SAFEBID_DEFINE_ERROR(CheckpointError)

// qlearn_baseline
SAFEBID_DEFINE_ERROR(BadBinning)
SAFEBID_DEFINE_ERROR(IndexOutOfRange)

// sim_harness
SAFEBID_DEFINE_ERROR(BadBand)

// cli / config
SAFEBID_DEFINE_ERROR(ParseError)
SAFEBID_DEFINE_ERROR(ValidationError)

#undef SAFEBID_DEFINE_ERROR

}  // namespace safebid
