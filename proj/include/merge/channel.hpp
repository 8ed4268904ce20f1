#pragma once

#include <array>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <vector>

#include "merge/ledger.hpp"
#include "merge/ring.hpp"

namespace merge {

enum class Party : int { Client = 0, Server = 1 };

inline int index(Party p) { return static_cast<int>(p); }
inline Party other(Party p) { return p == Party::Client ? Party::Server : Party::Client; }

// In-process duplex link between the two parties. Every message is charged
// (8 bytes per ring element, no framing) to the category on top of the tag
// stack. In lockstep mode a receive on an empty mailbox is a protocol error;
// in threaded mode it blocks.
class Channel {
 public:
  enum class Mode { Lockstep, Threaded };

  explicit Channel(CommLedger& ledger, Mode mode = Mode::Lockstep);
  Channel(const Channel&) = delete;
  Channel& operator=(const Channel&) = delete;

  void send(Party from, std::vector<RingElement> msg);
  std::vector<RingElement> recv(Party to);

  // Marks the end of one communication round for the current category.
  void end_round();
  // Counts one interactive protocol operation.
  void count_op();

  void push(Category c);
  void pop();
  Category current() const;

  CommLedger& ledger() { return ledger_; }
  std::uint64_t observed_bytes() const;
  std::uint64_t received_elements(Party p) const;
  bool idle() const;

 private:
  void flush_wall_locked(std::chrono::steady_clock::time_point now);

  CommLedger& ledger_;
  Mode mode_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::array<std::deque<std::vector<RingElement>>, 2> inbox_;  // indexed by receiver
  std::array<std::uint64_t, 2> received_{};
  std::uint64_t observed_bytes_ = 0;
  std::vector<Category> tags_;
  std::chrono::steady_clock::time_point tag_start_;
};

// Charges all traffic (and wall time) inside its lifetime to `c`.
class CategoryScope {
 public:
  CategoryScope(Channel& ch, Category c) : ch_(ch) { ch_.push(c); }
  ~CategoryScope() { ch_.pop(); }
  CategoryScope(const CategoryScope&) = delete;
  CategoryScope& operator=(const CategoryScope&) = delete;

 private:
  Channel& ch_;
};

}  // namespace merge
