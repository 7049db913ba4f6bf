#include "sirinv/field_io.hpp"

#include "sirinv/errors.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sirinv {

static_assert(std::endian::native == std::endian::little, "FLD1 I/O assumes a little-endian host");

namespace {

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Minimal cursor over the header text; tracks byte offsets for error messages.
struct Cursor {
  const std::string& s;
  std::size_t pos = 0;

  void skip_spaces() {
    while (pos < s.size() && s[pos] == ' ') ++pos;
  }
  std::string_view token() {
    skip_spaces();
    const std::size_t start = pos;
    while (pos < s.size() && s[pos] != ' ' && s[pos] != '\n') ++pos;
    return std::string_view(s).substr(start, pos - start);
  }
  void expect_newline() {
    skip_spaces();
    if (pos >= s.size() || s[pos] != '\n') throw ParseError("expected end of header line", pos);
    ++pos;
  }
  long parse_int() {
    const std::size_t at = (skip_spaces(), pos);
    const auto tok = token();
    long v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size() || tok.empty())
      throw ParseError("expected integer", at);
    return v;
  }
  double parse_double() {
    const std::size_t at = (skip_spaces(), pos);
    const auto tok = token();
    double v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size() || tok.empty())
      throw ParseError("expected number", at);
    return v;
  }
};

}  // namespace

FieldFile parse_fld1(const std::string& bytes) {
  Cursor c{bytes};
  if (c.token() != "FLD1") throw ParseError("missing FLD1 magic", 0);
  const std::size_t ndim_at = c.pos;
  const long ndim = c.parse_int();
  if (ndim < 1 || ndim > 3) throw ParseError("ndim must be 1, 2 or 3", ndim_at);
  FieldFile out;
  out.axes.resize(static_cast<std::size_t>(ndim));
  std::size_t count = 1;
  for (auto& a : out.axes) {
    const std::size_t at = c.pos;
    const long n = c.parse_int();
    if (n < 1) throw ParseError("axis length must be positive", at);
    a.n = static_cast<int>(n);
    count *= static_cast<std::size_t>(n);
  }
  c.expect_newline();
  for (auto& a : out.axes) {
    const std::size_t at = c.pos;
    a.min = c.parse_double();
    a.max = c.parse_double();
    if (!(a.min < a.max)) throw ParseError("axis range must satisfy min < max", at);
  }
  c.expect_newline();

  const std::size_t payload = bytes.size() - c.pos;
  if (payload != count * sizeof(double))
    throw ParseError("payload holds " + std::to_string(payload / sizeof(double)) +
                         " values, header declares " + std::to_string(count),
                     c.pos);
  out.values.resize(static_cast<Index>(count));
  std::memcpy(out.values.data(), bytes.data() + c.pos, payload);
  for (std::size_t i = 0; i < count; ++i)
    if (!std::isfinite(out.values[static_cast<Index>(i)]))
      throw ParseError("non-finite value", c.pos + i * sizeof(double));
  return out;
}

FieldFile read_fld1(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_fld1(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

void write_fld1(const std::filesystem::path& path, const FieldFile& file) {
  std::size_t count = 1;
  for (const auto& a : file.axes) count *= static_cast<std::size_t>(a.n);
  if (count != static_cast<std::size_t>(file.values.size()))
    throw DimensionError("write_fld1: value count does not match axes");
  std::string header = "FLD1 " + std::to_string(file.axes.size());
  for (const auto& a : file.axes) header += " " + std::to_string(a.n);
  header += "\n";
  for (std::size_t i = 0; i < file.axes.size(); ++i)
    header += (i ? " " : "") + format_double(file.axes[i].min) + " " +
              format_double(file.axes[i].max);
  header += "\n";

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(file.values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
  if (!out) throw ConfigError("write failed: " + path.string());
}

FieldFile to_file(const ScalarField& f) {
  const GridSpec& g = f.grid();
  FieldFile file;
  file.axes = {g.x(), g.y()};
  if (g.has_time()) file.axes.push_back(g.t());
  file.values = f.values();
  return file;
}

ScalarField to_field(const FieldFile& file) {
  for (const auto& a : file.axes)
    if (a.n < 2) throw DimensionError("field axes need at least 2 points");
  if (file.axes.size() == 2) return ScalarField(GridSpec::spatial(file.axes[0], file.axes[1]), file.values);
  if (file.axes.size() == 3)
    return ScalarField(GridSpec::space_time(file.axes[0], file.axes[1], file.axes[2]), file.values);
  throw DimensionError("scalar fields have 2 or 3 axes");
}

void write_field(const std::filesystem::path& path, const ScalarField& f) {
  write_fld1(path, to_file(f));
}

ScalarField read_field(const std::filesystem::path& path) { return to_field(read_fld1(path)); }

std::string csv_matrix(const ScalarField& f) {
  const GridSpec& g = f.grid();
  if (g.has_time()) throw DimensionError("csv_matrix expects a spatial field");
  std::string out;
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) {
      if (i) out += ',';
      out += format_double(f(i, j));
    }
    out += '\n';
  }
  return out;
}

void write_csv_matrix(const std::filesystem::path& path, const ScalarField& f) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << csv_matrix(f);
  if (!out) throw ConfigError("write failed: " + path.string());
}

ScalarField read_csv_matrix(const std::filesystem::path& path, const GridSpec& grid) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  ScalarField f(grid);
  std::string line;
  std::size_t offset = 0;
  int j = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (j >= grid.ny()) throw ParseError("too many rows", offset);
    int i = 0;
    std::size_t start = 0;
    while (start <= line.size()) {
      const std::size_t end = std::min(line.find(',', start), line.size());
      if (i >= grid.nx()) throw ParseError("too many columns", offset + start);
      double v = 0;
      auto [p, ec] = std::from_chars(line.data() + start, line.data() + end, v);
      if (ec != std::errc() || p != line.data() + end) throw ParseError("bad number", offset + start);
      f(i++, j) = v;
      start = end + 1;
    }
    if (i != grid.nx()) throw ParseError("short row", offset);
    ++j;
    offset += line.size() + 1;
  }
  if (j != grid.ny()) throw ParseError("too few rows", offset);
  return f;
}

std::vector<std::filesystem::path> write_csv_slices(const std::filesystem::path& dir,
                                                    const std::string& stem,
                                                    const ScalarField& f) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  if (!f.grid().has_time()) {
    written.push_back(dir / (stem + ".csv"));
    write_csv_matrix(written.back(), f);
    return written;
  }
  for (int k = 0; k < f.grid().nt(); ++k) {
    written.push_back(dir / (stem + "_t" + std::to_string(k) + ".csv"));
    write_csv_matrix(written.back(), f.slice(k));
  }
  return written;
}

}  // namespace sirinv
