#include "merge/ledger.hpp"

#include <sstream>

#include "merge/errors.hpp"

namespace merge {

std::string_view category_name(Category c) {
  switch (c) {
    case Category::Embed: return "Embed";
    case Category::Linear: return "Linear";
    case Category::Softmax: return "Softmax";
    case Category::Sampling: return "Sampling";
    case Category::Other: return "Other";
  }
  return "?";
}

Category category_from_name(std::string_view name) {
  for (auto c : kCategories)
    if (category_name(c) == name) return c;
  throw DataError("unknown ledger category: " + std::string(name));
}

Counters& Counters::operator+=(const Counters& o) {
  bytes += o.bytes;
  rounds += o.rounds;
  op_count += o.op_count;
  wall_ns += o.wall_ns;
  return *this;
}

Counters LedgerSnapshot::total() const {
  Counters t;
  for (const auto& c : per_category) t += c;
  return t;
}

bool LedgerSnapshot::same_traffic(const LedgerSnapshot& o) const {
  for (std::size_t i = 0; i < per_category.size(); ++i) {
    const auto& a = per_category[i];
    const auto& b = o.per_category[i];
    if (a.bytes != b.bytes || a.rounds != b.rounds || a.op_count != b.op_count) return false;
  }
  return true;
}

std::string LedgerSnapshot::to_csv() const {
  std::ostringstream os;
  os << "category,bytes,rounds,op_count,wall_ns\n";
  for (auto c : kCategories) {
    const auto& v = (*this)[c];
    os << category_name(c) << ',' << v.bytes << ',' << v.rounds << ',' << v.op_count << ','
       << v.wall_ns << '\n';
  }
  return os.str();
}

void CommLedger::charge(Category c, std::uint64_t bytes, std::uint64_t rounds, std::uint64_t ops) {
  std::lock_guard lk(mu_);
  auto& v = s_[c];
  v.bytes += bytes;
  v.rounds += rounds;
  v.op_count += ops;
}

void CommLedger::add_wall(Category c, std::uint64_t ns) {
  std::lock_guard lk(mu_);
  s_[c].wall_ns += ns;
}

LedgerSnapshot CommLedger::snapshot() const {
  std::lock_guard lk(mu_);
  return s_;
}

Counters CommLedger::at(Category c) const {
  std::lock_guard lk(mu_);
  return s_[c];
}

Counters CommLedger::total() const { return snapshot().total(); }

void CommLedger::reset() {
  std::lock_guard lk(mu_);
  s_ = {};
}

}  // namespace merge
