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
#ifndef COUNTYPREV_CSV_HPP
#define COUNTYPREV_CSV_HPP

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace countyprev::csv {

/// In-memory CSV table. Cells are kept as raw strings; typed access converts
/// on demand and reports the source file and line on failure. Lines starting
/// with '#' are treated as comments (used for embedded run metadata).
class Table {
 public:
  static Table read_file(const std::filesystem::path& path);
  static Table from_string(const std::string& text, const std::string& name = "<string>");

  const std::vector<std::string>& columns() const { return columns_; }
  std::size_t row_count() const { return rows_.size(); }
  const std::string& source() const { return source_; }

  /// Column index, or -1 if absent.
  int column_index(const std::string& name) const;
  /// Column index; throws ParseError when the column is missing.
  int require_column(const std::string& name) const;

  const std::string& cell(std::size_t row, int col) const { return rows_[row][static_cast<std::size_t>(col)]; }
  bool empty_cell(std::size_t row, int col) const { return rows_[row][static_cast<std::size_t>(col)].empty(); }

  double get_double(std::size_t row, int col) const;
  long long get_int(std::size_t row, int col) const;
  std::optional<double> get_optional_double(std::size_t row, int col) const;
  std::optional<long long> get_optional_int(std::size_t row, int col) const;

  /// 1-based line number of a data row in the source file (for messages).
  std::size_t line_of_row(std::size_t row) const { return line_numbers_[row]; }

 private:
  std::string source_;
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<std::size_t> line_numbers_;

  [[noreturn]] void fail(std::size_t row, int col, const std::string& what) const;
};

/// Streaming CSV writer; floats are written with exact round-trip precision.
class Writer {
 public:
  explicit Writer(const std::filesystem::path& path);

  /// Emits a '#'-prefixed metadata line; call before the header.
  void comment(const std::string& text);
  void header(const std::vector<std::string>& columns);

  Writer& field(const std::string& s);
  Writer& field(double v);
  Writer& field(long long v);
  Writer& field(int v) { return field(static_cast<long long>(v)); }
  /// Empty cell.
  Writer& blank();
  void end_row();

 private:
  std::ofstream out_;
  bool row_open_ = false;

  void sep();
};

}  // namespace countyprev::csv

#endif  // COUNTYPREV_CSV_HPP
