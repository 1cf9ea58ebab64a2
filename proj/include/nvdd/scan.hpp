#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

// Embarrassingly parallel parameter sweeps with per-point seed streams.

namespace nvdd::scan {

struct ScanResult {
  std::string param;
  std::vector<double> grid;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;  // rows[i] matches columns
  std::vector<std::string> errors;        // errors[i] empty on success

  bool ok() const;
};

using PointFn =
    std::function<std::vector<double>(double value, std::uint64_t seed)>;

// Evaluates fn over the grid on a fixed worker pool. Point i always receives
// noise::derive_seed(master_seed, i) and its row lands at index i, so the
// result is bitwise independent of thread count and execution order. A
// throwing point leaves a NaN row and its message in errors[i]; the scan
// continues.
ScanResult scan(const std::string& param_name, const std::vector<double>& grid,
                const std::vector<std::string>& columns, const PointFn& fn,
                std::uint64_t master_seed = 0, int threads = 0);

// Header "param,columns..."; shortest round-trip decimals; failed points emit
// NaN rows and a trailing "# point i" comment per error.
std::string to_csv(const ScanResult& r);

}  // namespace nvdd::scan
