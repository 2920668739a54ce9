#pragma once

#include <stdexcept>
#include <string>

namespace dimt {

/// Process exit codes used by the command line tool.
enum class ExitCode : int { ok = 0, usage = 1, data = 2, numerical = 3 };

/// Bad or missing input data: corpus files, checkpoints, configs.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite loss or gradient during optimisation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The rendered document does not fit on the configured page.
class RenderOverflow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dimt
