#pragma once

#include <stdexcept>
#include <string>

namespace rw {

// Error taxonomy. The CLI maps these onto process exit codes.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
  public:
    using Error::Error;
};

class ConfigError : public Error {
  public:
    using Error::Error;
};

// An internal invariant of the streaming state was violated.
class StateCorruption : public Error {
  public:
    using Error::Error;
};

class NumericError : public Error {
  public:
    using Error::Error;
};

// Not enough future conditioning has arrived to run the next step.
class LookaheadUnderrun : public Error {
  public:
    LookaheadUnderrun(long long needed_frame, long long available)
        : Error("look-ahead underrun: need cond frame " + std::to_string(needed_frame) + ", have " +
                std::to_string(available)),
          needed_frame_(needed_frame),
          available_(available) {}

    long long needed_frame() const noexcept { return needed_frame_; }
    long long available() const noexcept { return available_; }

  private:
    long long needed_frame_;
    long long available_;
};

class TrainingDivergence : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

}  // namespace rw
