#include "slmm/dataset_io.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace slmm {

namespace {

char sniff_delimiter(const std::string& header) {
  for (char cand : {',', '\t', ';'})
    if (header.find(cand) != std::string::npos) return cand;
  return ' ';
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  if (delim == ' ') {
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
  }
  std::string tok;
  std::istringstream is(line);
  while (std::getline(is, tok, delim)) {
    // trim surrounding whitespace
    const auto b = tok.find_first_not_of(" \t\r");
    const auto e = tok.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string()
                                         : tok.substr(b, e - b + 1));
  }
  return out;
}

bool has_prefix(const std::string& s, const char* prefix) {
  return s.rfind(prefix, 0) == 0;
}

}  // namespace

Dataset load_dataset(std::istream& in, const ColumnRoles& roles) {
  std::string header;
  if (!std::getline(in, header)) throw DataError("empty input: no header row");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  const char delim = sniff_delimiter(header);
  const std::vector<std::string> names = split_line(header, delim);

  int id_col = -1, y_col = -1;
  std::vector<int> x_cols, s_cols;
  for (int j = 0; j < static_cast<int>(names.size()); ++j) {
    const std::string& name = names[j];
    if (name == "id") id_col = j;
    else if (name == "y") y_col = j;
    else if (!roles.fixed.empty() || !roles.random.empty()) {
      if (std::find(roles.fixed.begin(), roles.fixed.end(), name) !=
          roles.fixed.end())
        x_cols.push_back(j);
      else if (std::find(roles.random.begin(), roles.random.end(), name) !=
               roles.random.end())
        s_cols.push_back(j);
    } else if (has_prefix(name, "x_")) {
      x_cols.push_back(j);
    } else if (has_prefix(name, "s_")) {
      s_cols.push_back(j);
    }
  }
  if (id_col < 0 || y_col < 0)
    throw DataError("header must contain 'id' and 'y' columns");
  if (s_cols.empty())
    throw DataError("no random-effect candidate columns found");

  struct Rows {
    std::vector<Real> y;
    std::vector<Real> x;  // row-major, q-1 per row
    std::vector<Real> s;  // row-major, p per row
  };
  std::vector<std::string> order;
  std::map<std::string, Rows> groups;

  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split_line(line, delim);
    if (static_cast<int>(f.size()) < static_cast<int>(names.size()))
      throw DataError("line " + std::to_string(lineno) + ": expected " +
                      std::to_string(names.size()) + " fields, got " +
                      std::to_string(f.size()));
    auto num = [&](int col) {
      try {
        return std::stod(f[col]);
      } catch (const std::exception&) {
        throw DataError("line " + std::to_string(lineno) +
                        ": cannot parse '" + f[col] + "' in column '" +
                        names[col] + "'");
      }
    };
    const std::string& id = f[id_col];
    auto it = groups.find(id);
    if (it == groups.end()) {
      order.push_back(id);
      it = groups.emplace(id, Rows{}).first;
    }
    it->second.y.push_back(num(y_col));
    for (int c : x_cols) it->second.x.push_back(num(c));
    for (int c : s_cols) it->second.s.push_back(num(c));
  }

  Dataset data;
  data.reserve(order.size());
  const int qm1 = static_cast<int>(x_cols.size());
  const int p = static_cast<int>(s_cols.size());
  for (const std::string& id : order) {
    const Rows& rows = groups[id];
    const int n = static_cast<int>(rows.y.size());
    IndividualData ind;
    ind.id = id;
    ind.y = Eigen::Map<const Vector>(rows.y.data(), n);
    ind.X.resize(n, qm1 + 1);
    ind.X.col(0).setOnes();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < qm1; ++j) ind.X(i, j + 1) = rows.x[i * qm1 + j];
    ind.S.resize(n, p);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j) ind.S(i, j) = rows.s[i * p + j];
    data.push_back(std::move(ind));
  }
  return data;
}

Dataset load_dataset_file(const std::string& path, const ColumnRoles& roles) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open input file: " + path);
  return load_dataset(in, roles);
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  if (data.empty()) throw DataError("write_dataset_csv: empty dataset");
  const int q = data.front().q(), p = data.front().p();
  out << "id,y";
  for (int j = 1; j < q; ++j) out << ",x_" << j;
  for (int j = 1; j <= p; ++j) out << ",s_" << j;
  out << "\n";
  out.precision(17);
  for (const auto& ind : data)
    for (int i = 0; i < ind.n(); ++i) {
      out << ind.id << ',' << ind.y(i);
      for (int j = 1; j < q; ++j) out << ',' << ind.X(i, j);
      for (int j = 0; j < p; ++j) out << ',' << ind.S(i, j);
      out << "\n";
    }
}

}  // namespace slmm
