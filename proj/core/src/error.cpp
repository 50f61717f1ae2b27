#include "v2xfl/error.hpp"

#include <fmt/format.h>

namespace v2xfl {

InsufficientDataError::InsufficientDataError(std::size_t label, std::size_t available,
                                             std::size_t requested)
    : Error(fmt::format("class {} has {} samples, {} requested", label, available, requested)),
      label_(label) {}

NumericalDivergence::NumericalDivergence(std::size_t batch_index, const std::string& what)
    : Error(fmt::format("numerical divergence in batch {}: {}", batch_index, what)),
      batch_index_(batch_index) {}

ConfigError::ConfigError(std::size_t line, const std::string& what)
    : Error(line > 0 ? fmt::format("line {}: {}", line, what) : what), line_(line) {}

}  // namespace v2xfl
