#include "stablefield/grid.hpp"

#include <cstring>
#include <fstream>

#include "stablefield/csv.hpp"

namespace stablefield {

std::size_t GridSpec::size() const {
  std::size_t n = 1;
  for (auto c : counts) n *= static_cast<std::size_t>(c);
  return n;
}

void GridSpec::validate() const {
  const int d = dim();
  if (d < 1) throw std::invalid_argument("grid needs at least one axis");
  if (origin.size() != d || spacing.size() != d)
    throw DimensionMismatch("grid origin/spacing do not match axis count");
  for (auto c : counts)
    if (c < 0) throw std::invalid_argument("grid counts must be nonnegative");
  for (int i = 0; i < d; ++i)
    if (!(spacing[i] > 0.0))
      throw std::invalid_argument("grid spacing must be positive");
}

Eigen::VectorXd GridSpec::site(std::size_t flat) const {
  const int d = dim();
  Eigen::VectorXd s(d);
  for (int i = d - 1; i >= 0; --i) {
    const std::size_t n = static_cast<std::size_t>(counts[i]);
    s[i] = origin[i] + static_cast<double>(flat % n) * spacing[i];
    flat /= n;
  }
  return s;
}

std::vector<Eigen::VectorXd> GridSpec::sites() const {
  std::vector<Eigen::VectorXd> out;
  const std::size_t n = size();
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(site(i));
  return out;
}

namespace {

constexpr std::uint32_t kMagic = 0x444c4653u;  // "SFLD"
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T get(std::ifstream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw IoError("truncated grid file");
  return v;
}

}  // namespace

void write_grid_binary(const GridField& f, const std::string& path) {
  f.grid.validate();
  if (f.values.size() != static_cast<Eigen::Index>(f.grid.size()))
    throw DimensionMismatch("value count does not match the grid");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  put(out, kMagic);
  put(out, kVersion);
  put(out, static_cast<std::uint32_t>(f.grid.dim()));
  for (auto c : f.grid.counts) put(out, static_cast<std::uint64_t>(c));
  for (int i = 0; i < f.grid.dim(); ++i) put(out, f.grid.origin[i]);
  for (int i = 0; i < f.grid.dim(); ++i) put(out, f.grid.spacing[i]);
  put(out, f.seed);
  out.write(reinterpret_cast<const char*>(f.values.data()),
            static_cast<std::streamsize>(sizeof(double) * f.values.size()));
  if (!out) throw IoError("write to '" + path + "' failed");
}

GridField read_grid_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  if (get<std::uint32_t>(in) != kMagic)
    throw IoError("'" + path + "' is not a grid field file");
  if (get<std::uint32_t>(in) != kVersion)
    throw IoError("unsupported grid file version");
  const std::uint32_t d = get<std::uint32_t>(in);
  if (d == 0 || d > 16) throw IoError("implausible grid dimension");
  GridField f;
  f.grid.counts.resize(d);
  for (auto& c : f.grid.counts)
    c = static_cast<std::int64_t>(get<std::uint64_t>(in));
  f.grid.origin.resize(d);
  f.grid.spacing.resize(d);
  for (std::uint32_t i = 0; i < d; ++i) f.grid.origin[i] = get<double>(in);
  for (std::uint32_t i = 0; i < d; ++i) f.grid.spacing[i] = get<double>(in);
  f.seed = get<std::uint64_t>(in);
  f.grid.validate();
  f.values.resize(static_cast<Eigen::Index>(f.grid.size()));
  in.read(reinterpret_cast<char*>(f.values.data()),
          static_cast<std::streamsize>(sizeof(double) * f.values.size()));
  if (!in) throw IoError("truncated grid file");
  return f;
}

void write_grid_csv(const GridField& f, const std::string& path) {
  f.grid.validate();
  if (f.values.size() != static_cast<Eigen::Index>(f.grid.size()))
    throw DimensionMismatch("value count does not match the grid");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (int i = 0; i < f.grid.dim(); ++i) out << 'x' << (i + 1) << ',';
  out << "value\n";
  const std::size_t n = f.grid.size();
  for (std::size_t r = 0; r < n; ++r) {
    const Eigen::VectorXd s = f.grid.site(r);
    for (int i = 0; i < f.grid.dim(); ++i)
      out << format_number(s[i]) << ',';
    out << format_number(f.values[static_cast<Eigen::Index>(r)]) << '\n';
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace stablefield
