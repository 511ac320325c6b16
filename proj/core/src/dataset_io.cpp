#include "coxsgd/dataset_io.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

namespace coxsgd {

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  for (auto& field : out) {
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
  }
  return out;
}

double parse_double(std::string_view field, std::size_t line_no) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    std::ostringstream os;
    os << "dataset CSV line " << line_no << ": cannot parse number '" << field << "'";
    throw std::invalid_argument(os.str());
  }
  return value;
}

}  // namespace

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> header;
  std::string header_line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    header_line = line;
    header = split_commas(header_line);
    break;
  }
  if (header.size() < 2) throw std::invalid_argument("dataset CSV: missing header");
  const std::size_t p = header.size() - 2;
  if (header[p] != "time" || header[p + 1] != "event") {
    throw std::invalid_argument("dataset CSV: header must end with time,event");
  }
  for (std::size_t j = 0; j < p; ++j) {
    if (header[j] != "x" + std::to_string(j + 1)) {
      throw std::invalid_argument("dataset CSV: covariate columns must be named x1..xp");
    }
  }

  std::vector<double> xs, times;
  std::vector<std::uint8_t> events;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || line == "\r") continue;
    const auto fields = split_commas(line);
    if (fields.size() != p + 2) {
      std::ostringstream os;
      os << "dataset CSV line " << line_no << ": expected " << p + 2 << " fields, got " << fields.size();
      throw std::invalid_argument(os.str());
    }
    for (std::size_t j = 0; j < p; ++j) xs.push_back(parse_double(fields[j], line_no));
    times.push_back(parse_double(fields[p], line_no));
    const double e = parse_double(fields[p + 1], line_no);
    if (e != 0.0 && e != 1.0) {
      std::ostringstream os;
      os << "dataset CSV line " << line_no << ": event must be 0 or 1";
      throw std::invalid_argument(os.str());
    }
    events.push_back(e == 1.0 ? 1 : 0);
  }
  const auto n = static_cast<Index>(times.size());
  RowMatrix x(n, static_cast<Index>(p));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < static_cast<Index>(p); ++j) x(i, j) = xs[static_cast<std::size_t>(i * static_cast<Index>(p) + j)];
  return Dataset(std::move(x), std::move(times), std::move(events));
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  return read_dataset_csv(in);
}

void write_dataset_csv(std::ostream& out, const Dataset& data, std::string_view comment) {
  if (!comment.empty()) {
    std::istringstream lines{std::string(comment)};
    std::string l;
    while (std::getline(lines, l)) out << "# " << l << '\n';
  }
  for (Index j = 0; j < data.dim(); ++j) out << 'x' << j + 1 << ',';
  out << "time,event\n";
  out << std::setprecision(17);
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < data.dim(); ++j) out << data.covariates()(i, j) << ',';
    out << data.time(i) << ',' << (data.event(i) ? 1 : 0) << '\n';
  }
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data, std::string_view comment) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  write_dataset_csv(out, data, comment);
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string provenance_line(std::string_view resolved_config, std::uint64_t seed) {
  std::ostringstream os;
  os << "config_hash=" << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(resolved_config) << std::dec
     << " seed=" << seed;
  return os.str();
}

}  // namespace coxsgd
