#include "merge/channel.hpp"

namespace merge {

using Clock = std::chrono::steady_clock;

Channel::Channel(CommLedger& ledger, Mode mode)
    : ledger_(ledger), mode_(mode), tags_{Category::Other}, tag_start_(Clock::now()) {}

void Channel::send(Party from, std::vector<RingElement> msg) {
  const std::uint64_t bytes = 8 * msg.size();
  {
    std::lock_guard lk(mu_);
    inbox_[index(other(from))].push_back(std::move(msg));
    observed_bytes_ += bytes;
  }
  ledger_.charge(current(), bytes, 0, 0);
  cv_.notify_all();
}

std::vector<RingElement> Channel::recv(Party to) {
  std::unique_lock lk(mu_);
  auto& box = inbox_[index(to)];
  if (mode_ == Mode::Lockstep) {
    if (box.empty()) throw ProtocolError("recv on empty mailbox in lockstep mode");
  } else {
    cv_.wait(lk, [&] { return !box.empty(); });
  }
  auto msg = std::move(box.front());
  box.pop_front();
  received_[index(to)] += msg.size();
  return msg;
}

void Channel::end_round() { ledger_.charge(current(), 0, 1, 0); }

void Channel::count_op() { ledger_.charge(current(), 0, 0, 1); }

void Channel::flush_wall_locked(Clock::time_point now) {
  const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(now - tag_start_).count();
  ledger_.add_wall(tags_.back(), static_cast<std::uint64_t>(ns));
  tag_start_ = now;
}

void Channel::push(Category c) {
  std::lock_guard lk(mu_);
  flush_wall_locked(Clock::now());
  tags_.push_back(c);
}

void Channel::pop() {
  std::lock_guard lk(mu_);
  if (tags_.size() <= 1) throw ProtocolError("category stack underflow");
  flush_wall_locked(Clock::now());
  tags_.pop_back();
}

Category Channel::current() const {
  std::lock_guard lk(mu_);
  return tags_.back();
}

std::uint64_t Channel::observed_bytes() const {
  std::lock_guard lk(mu_);
  return observed_bytes_;
}

std::uint64_t Channel::received_elements(Party p) const {
  std::lock_guard lk(mu_);
  return received_[index(p)];
}

bool Channel::idle() const {
  std::lock_guard lk(mu_);
  return inbox_[0].empty() && inbox_[1].empty();
}

}  // namespace merge
