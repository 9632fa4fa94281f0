#include "mfair/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "mfair/errors.hpp"

namespace mfair::csv {

std::size_t Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw InvalidInput("missing column '" + name + "'");
}

bool Table::has_column(const std::string& name) const {
  for (const auto& h : header)
    if (h == name) return true;
  return false;
}

std::vector<double> Table::numeric(const std::string& name) const {
  std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    out.push_back(to_double(rows[r].at(c), name + " row " + std::to_string(r + 1)));
  return out;
}

double to_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && *b == ' ') ++b;
  if (b < e && *b == '+') ++b;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e || !std::isfinite(v))
    throw InvalidInput("non-numeric value '" + s + "' in " + context);
  return v;
}

Table parse(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> rec;
  std::string field;
  bool quoted = false, in_field = false, any = false;
  char c;
  auto end_field = [&] {
    rec.push_back(field);
    field.clear();
    in_field = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(rec));
    rec.clear();
    any = false;
  };
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    any = true;
    if (c == '"' && !in_field && field.empty()) {
      quoted = true;
      in_field = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get(c);
      end_record();
    } else if (c == '\n') {
      end_record();
    } else {
      field.push_back(c);
      in_field = true;
    }
  }
  if (quoted) throw InvalidInput("csv: unterminated quoted field");
  if (any) end_record();
  Table t;
  if (records.empty()) throw InvalidInput("csv: empty input");
  t.header = std::move(records.front());
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].size() == 1 && records[i][0].empty()) continue;
    if (records[i].size() != t.header.size())
      throw InvalidInput("csv: row " + std::to_string(i) + " has " + std::to_string(records[i].size()) +
                         " fields, expected " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(records[i]));
  }
  return t;
}

Table read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("cannot open '" + path + "'");
  return parse(f);
}

std::string escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write(std::ostream& out, const Table& t) {
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out << ',';
      out << escape(r[i]);
    }
    out << "\r\n";
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
}

void write_file(const std::string& path, const Table& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("cannot write '" + path + "'");
  write(f, t);
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace mfair::csv
