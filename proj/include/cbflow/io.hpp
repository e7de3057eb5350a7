#ifndef CBFLOW_IO_HPP
#define CBFLOW_IO_HPP

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbflow/cumulant.hpp"
#include "cbflow/sde_sim.hpp"

// CSV export (comma separated, header row, '.' decimal, shortest
// round-trip float formatting) and the compact binary dump:
// magic "CBFL", version u32, rows u64, cols u64, row-major f64,
// all little-endian.

namespace cbflow {

static_assert(std::endian::native == std::endian::little,
              "binary dump assumes a little-endian host");

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void write_csv_row(std::ostream& os, const std::vector<double>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i > 0) os << ',';
    os << format_double(row[i]);
  }
  os << '\n';
}

inline void write_path_csv(std::ostream& os, const PathRecord& path,
                           std::size_t stride = 1) {
  if (stride == 0) stride = 1;
  os << "t,X\n";
  const std::size_t n = path.values.size();
  for (std::size_t i = 0; i < n; i += stride)
    write_csv_row(os, {path.time(i), path.values[i]});
  if ((n - 1) % stride != 0)
    write_csv_row(os, {path.time(n - 1), path.values[n - 1]});
}

inline void write_flow_csv(std::ostream& os, const FlowRecord& flow,
                           std::size_t stride = 1) {
  if (stride == 0) stride = 1;
  os << "t";
  for (double q : flow.q_grid) os << ",X[q=" << format_double(q) << "]";
  os << '\n';
  const std::size_t n = flow.columns.front().values.size();
  const auto emit = [&](std::size_t i) {
    std::vector<double> row{flow.columns.front().time(i)};
    for (const auto& c : flow.columns) row.push_back(c.values[i]);
    write_csv_row(os, row);
  };
  for (std::size_t i = 0; i < n; i += stride) emit(i);
  if ((n - 1) % stride != 0) emit(n - 1);
}

inline void write_curve_csv(std::ostream& os, const CumulantCurve& curve,
                            std::size_t stride = 1) {
  if (stride == 0) stride = 1;
  os << "t,value\n";
  const std::size_t n = curve.times().size();
  for (std::size_t i = 0; i < n; i += stride)
    write_csv_row(os, {curve.times()[i], curve.values()[i]});
  if ((n - 1) % stride != 0)
    write_csv_row(os, {curve.times()[n - 1], curve.values()[n - 1]});
}

inline void write_grid_csv(std::ostream& os, const GridFunction& g) {
  os << "q,value\n";
  for (std::size_t i = 0; i < g.grid().size(); ++i)
    write_csv_row(os, {g.grid()[i], g.values()[i]});
}

struct BinaryMatrix {
  std::uint32_t version = 0;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::vector<double> data;  // row-major

  double at(std::uint64_t r, std::uint64_t c) const { return data[r * cols + c]; }
};

namespace detail {

template <class T>
void write_raw(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_raw(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("binary dump: truncated stream");
  return v;
}

}  // namespace detail

inline void write_flow_binary(std::ostream& os, const FlowRecord& flow) {
  const char magic[4] = {'C', 'B', 'F', 'L'};
  os.write(magic, 4);
  detail::write_raw<std::uint32_t>(os, 1);
  const std::uint64_t rows = flow.columns.front().values.size();
  const std::uint64_t cols = 1 + flow.columns.size();
  detail::write_raw<std::uint64_t>(os, rows);
  detail::write_raw<std::uint64_t>(os, cols);
  for (std::uint64_t i = 0; i < rows; ++i) {
    detail::write_raw<double>(os, flow.columns.front().time(i));
    for (const auto& c : flow.columns) detail::write_raw<double>(os, c.values[i]);
  }
}

inline void write_path_binary(std::ostream& os, const PathRecord& path) {
  FlowRecord f;
  f.q_grid = {0.0};
  f.dt = path.dt;
  f.columns = {path};
  write_flow_binary(os, f);
}

inline BinaryMatrix read_binary_matrix(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CBFL", 4) != 0)
    throw std::runtime_error("binary dump: bad magic");
  BinaryMatrix m;
  m.version = detail::read_raw<std::uint32_t>(is);
  m.rows = detail::read_raw<std::uint64_t>(is);
  m.cols = detail::read_raw<std::uint64_t>(is);
  m.data.resize(m.rows * m.cols);
  is.read(reinterpret_cast<char*>(m.data.data()),
          static_cast<std::streamsize>(m.data.size() * sizeof(double)));
  if (!is) throw std::runtime_error("binary dump: truncated stream");
  return m;
}

}  // namespace cbflow

#endif  // CBFLOW_IO_HPP
