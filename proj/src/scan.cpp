#include "nvdd/scan.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "nvdd/io.hpp"
#include "nvdd/noise.hpp"

namespace nvdd::scan {

bool ScanResult::ok() const {
  for (const auto& e : errors)
    if (!e.empty()) return false;
  return true;
}

ScanResult scan(const std::string& param_name, const std::vector<double>& grid,
                const std::vector<std::string>& columns, const PointFn& fn,
                std::uint64_t master_seed, int threads) {
  if (grid.empty()) throw std::invalid_argument("scan grid must be nonempty");
  if (!fn) throw std::invalid_argument("scan needs a point function");

  ScanResult res;
  res.param = param_name;
  res.grid = grid;
  res.columns = columns;
  res.rows.assign(grid.size(), std::vector<double>(
                                   columns.size(),
                                   std::numeric_limits<double>::quiet_NaN()));
  res.errors.assign(grid.size(), "");

  int n_threads = threads > 0
                      ? threads
                      : (int)std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<int>(n_threads, (int)grid.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= grid.size()) return;
      const std::uint64_t seed = noise::derive_seed(master_seed, i);
      try {
        auto row = fn(grid[i], seed);
        if (row.size() != columns.size())
          throw std::runtime_error("point returned " +
                                   std::to_string(row.size()) + " values for " +
                                   std::to_string(columns.size()) + " columns");
        res.rows[i] = std::move(row);
      } catch (const std::exception& e) {
        res.errors[i] = e.what();
      }
    }
  };

  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return res;
}

std::string to_csv(const ScanResult& r) {
  std::ostringstream os;
  os << r.param;
  for (const auto& c : r.columns) os << ',' << c;
  os << '\n';
  for (std::size_t i = 0; i < r.grid.size(); ++i) {
    os << io::format_double(r.grid[i]);
    for (double v : r.rows[i]) os << ',' << io::format_double(v);
    os << '\n';
  }
  for (std::size_t i = 0; i < r.errors.size(); ++i)
    if (!r.errors[i].empty())
      os << "# point " << i << " (" << io::format_double(r.grid[i])
         << "): " << r.errors[i] << '\n';
  return os.str();
}

}  // namespace nvdd::scan
