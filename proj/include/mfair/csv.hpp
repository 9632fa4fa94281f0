#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mfair::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column. Throws InvalidInput if missing.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
  std::vector<double> numeric(const std::string& name) const;
};

// RFC-4180: comma separated, double-quote escaping, CRLF or LF line ends.
Table parse(std::istream& in);
Table read_file(const std::string& path);

std::string escape(const std::string& field);
void write(std::ostream& out, const Table& t);
void write_file(const std::string& path, const Table& t);

// Fixed, locale-independent number formatting (17 significant digits when needed).
std::string fmt(double v);

double to_double(const std::string& s, const std::string& context);

}  // namespace mfair::csv
