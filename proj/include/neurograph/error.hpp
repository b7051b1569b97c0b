#pragma once

#include <stdexcept>
#include <string>

namespace neurograph {

/// Contract or input violation raised by any library operation.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A pipeline stage failed; carries the stage name and the underlying cause.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause)
      : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)), cause_(cause) {}

  const std::string& stage() const noexcept { return stage_; }
  const std::string& cause() const noexcept { return cause_; }

 private:
  std::string stage_;
  std::string cause_;
};

}  // namespace neurograph
