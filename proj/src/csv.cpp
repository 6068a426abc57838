/*
 * Copyright (C) 2026 countyprev contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "countyprev/csv.hpp"

#include <charconv>
#include <sstream>

#include "countyprev/util.hpp"

namespace countyprev::csv {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace

Table Table::read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open file: " + path.string());
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str(), path.string());
}

Table Table::from_string(const std::string& text, const std::string& name) {
  Table t;
  t.source_ = name;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto cells = split_line(line);
    if (!have_header) {
      t.columns_ = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.columns_.size()) {
      throw ParseError(name + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(t.columns_.size()) + " fields, got " + std::to_string(cells.size()));
    }
    t.rows_.push_back(std::move(cells));
    t.line_numbers_.push_back(line_no);
  }
  if (!have_header) {
    throw ParseError(name + ": missing header row");
  }
  return t;
}

int Table::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i] == name) return static_cast<int>(i);
  }
  return -1;
}

int Table::require_column(const std::string& name) const {
  const int idx = column_index(name);
  if (idx < 0) {
    throw ParseError(source_ + ": missing required column '" + name + "'");
  }
  return idx;
}

void Table::fail(std::size_t row, int col, const std::string& what) const {
  throw ParseError(source_ + ":" + std::to_string(line_of_row(row)) + ": column '" +
                   columns_[static_cast<std::size_t>(col)] + "': " + what);
}

double Table::get_double(std::size_t row, int col) const {
  const std::string& s = cell(row, col);
  double v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    fail(row, col, "not a number: '" + s + "'");
  }
  return v;
}

long long Table::get_int(std::size_t row, int col) const {
  const std::string& s = cell(row, col);
  long long v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    fail(row, col, "not an integer: '" + s + "'");
  }
  return v;
}

std::optional<double> Table::get_optional_double(std::size_t row, int col) const {
  if (empty_cell(row, col)) return std::nullopt;
  return get_double(row, col);
}

std::optional<long long> Table::get_optional_int(std::size_t row, int col) const {
  if (empty_cell(row, col)) return std::nullopt;
  return get_int(row, col);
}

Writer::Writer(const std::filesystem::path& path) : out_(path) {
  if (!out_) {
    throw ParseError("cannot open file for writing: " + path.string());
  }
}

void Writer::comment(const std::string& text) {
  out_ << "# " << text << "\n";
}

void Writer::header(const std::vector<std::string>& columns) {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) out_ << ',';
    out_ << columns[i];
  }
  out_ << "\n";
}

void Writer::sep() {
  if (row_open_) {
    out_ << ',';
  }
  row_open_ = true;
}

Writer& Writer::field(const std::string& s) {
  sep();
  out_ << s;
  return *this;
}

Writer& Writer::field(double v) {
  sep();
  out_ << format_double(v);
  return *this;
}

Writer& Writer::field(long long v) {
  sep();
  out_ << v;
  return *this;
}

Writer& Writer::blank() {
  sep();
  return *this;
}

void Writer::end_row() {
  out_ << "\n";
  row_open_ = false;
}

}  // namespace countyprev::csv
