#pragma once

#include <array>
#include <cstdint>
#include <mutex>
#include <string>
#include <string_view>

namespace merge {

// Cost buckets. Embed/Linear/Softmax follow the usual breakdown of encrypted
// generation time; Sampling holds logit openings, Other holds setup traffic.
enum class Category : std::uint8_t { Embed = 0, Linear, Softmax, Sampling, Other };

inline constexpr std::array<Category, 5> kCategories{Category::Embed, Category::Linear,
                                                     Category::Softmax, Category::Sampling,
                                                     Category::Other};

std::string_view category_name(Category c);
Category category_from_name(std::string_view name);

struct Counters {
  std::uint64_t bytes = 0;
  std::uint64_t rounds = 0;
  std::uint64_t op_count = 0;
  std::uint64_t wall_ns = 0;

  Counters& operator+=(const Counters& o);
  bool operator==(const Counters&) const = default;
};

struct LedgerSnapshot {
  std::array<Counters, kCategories.size()> per_category{};

  const Counters& operator[](Category c) const { return per_category[static_cast<int>(c)]; }
  Counters& operator[](Category c) { return per_category[static_cast<int>(c)]; }
  Counters total() const;
  // Byte/round/op counters only; wall time is not deterministic.
  bool same_traffic(const LedgerSnapshot& o) const;

  // Rows "category,bytes,rounds,op_count,wall_ns" with a header line.
  std::string to_csv() const;
};

// Monotone per-category counters. Updates are serialized so the two-party
// drivers may share one ledger across threads.
class CommLedger {
 public:
  CommLedger() = default;
  CommLedger(const CommLedger&) = delete;
  CommLedger& operator=(const CommLedger&) = delete;

  void charge(Category c, std::uint64_t bytes, std::uint64_t rounds, std::uint64_t ops);
  void add_wall(Category c, std::uint64_t ns);

  LedgerSnapshot snapshot() const;
  Counters at(Category c) const;
  Counters total() const;
  void reset();

 private:
  mutable std::mutex mu_;
  LedgerSnapshot s_;
};

}  // namespace merge
