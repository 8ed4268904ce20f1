#pragma once

#include <stdexcept>
#include <string>

namespace merge {

// Input outside the representable fixed-point range.
class EncodingRangeError : public std::range_error {
 public:
  using std::range_error::range_error;
};

// Mismatched shapes, bad dimensions, malformed files.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Violations of the two-party protocol (triple reuse, closed channel, ...).
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Bad user-supplied data: lengths, token ids, degenerate loss inputs.
class DataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace merge
