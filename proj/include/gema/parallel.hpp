#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <optional>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

namespace gema {

// Outcome of one work item: a value or the exception it raised.
template <typename T>
struct Outcome {
  std::optional<T> value;
  std::exception_ptr error;

  bool ok() const { return value.has_value(); }
  const T& get() const {
    if (error) std::rethrow_exception(error);
    return *value;
  }
};

// Applies fn to every item on at most `workers` threads. Results keep input
// order regardless of completion order.
template <typename Item, typename Fn>
auto parallel_map(const std::vector<Item>& items, int workers, Fn fn)
    -> std::vector<Outcome<std::invoke_result_t<Fn&, const Item&>>> {
  using R = std::invoke_result_t<Fn&, const Item&>;
  std::vector<Outcome<R>> results(items.size());
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next.fetch_add(1); i < items.size(); i = next.fetch_add(1)) {
      try {
        results[i].value.emplace(fn(items[i]));
      } catch (...) {
        results[i].error = std::current_exception();
      }
    }
  };
  std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)),
                                        std::max<std::size_t>(items.size(), 1));
  if (n <= 1) {
    run();
    return results;
  }
  std::vector<std::jthread> pool;
  pool.reserve(n);
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(run);
  pool.clear();
  return results;
}

}  // namespace gema
