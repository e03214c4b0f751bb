#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "drmww/errors.hpp"

namespace drmww {

enum class OutcomeKind { continuous, count };

struct Subject {
  std::string id;
  int z = 0;
  double y = 0.0;
  std::vector<double> w;
};

/**
 * Immutable observed sample: treatment, outcome and covariates per subject.
 *
 * Construction validates z in {0,1}, finite y and w, a common covariate
 * dimension, n >= 2 and (for count outcomes) nonnegative integer y. Arm
 * balance is not required here; estimators that need both arms check it.
 */
class Dataset {
 public:
  Dataset(std::vector<Subject> subjects, OutcomeKind kind)
      : subjects_(std::move(subjects)), kind_(kind) {
    if (subjects_.size() < 2)
      throw EstimabilityError("dataset needs at least 2 subjects, got " +
                              std::to_string(subjects_.size()));
    p_ = subjects_.front().w.size();
    for (std::size_t i = 0; i < subjects_.size(); ++i) {
      const auto& s = subjects_[i];
      if (s.z != 0 && s.z != 1)
        throw IngestError("subject " + std::to_string(i + 1) +
                              ": treatment must be 0 or 1",
                          i + 1);
      if (!std::isfinite(s.y))
        throw IngestError("subject " + std::to_string(i + 1) +
                              ": outcome is not finite",
                          i + 1);
      if (kind_ == OutcomeKind::count && (s.y < 0 || s.y != std::floor(s.y)))
        throw IngestError("subject " + std::to_string(i + 1) +
                              ": count outcome must be a nonnegative integer",
                          i + 1);
      if (s.w.size() != p_)
        throw IngestError("subject " + std::to_string(i + 1) +
                              ": covariate dimension mismatch",
                          i + 1);
      for (double v : s.w)
        if (!std::isfinite(v))
          throw IngestError("subject " + std::to_string(i + 1) +
                                ": covariate is not finite",
                            i + 1);
      n1_ += static_cast<std::size_t>(s.z);
    }
  }

  std::size_t size() const noexcept { return subjects_.size(); }
  std::size_t n_treated() const noexcept { return n1_; }
  std::size_t n_control() const noexcept { return subjects_.size() - n1_; }
  std::size_t covariate_dim() const noexcept { return p_; }
  OutcomeKind outcome_kind() const noexcept { return kind_; }
  bool has_both_arms() const noexcept {
    return n1_ > 0 && n1_ < subjects_.size();
  }

  const Subject& operator[](std::size_t i) const { return subjects_[i]; }
  const std::vector<Subject>& subjects() const noexcept { return subjects_; }

  /// Rows dropped at ingest because a required field was empty.
  std::size_t dropped_rows() const noexcept { return dropped_rows_; }
  void set_dropped_rows(std::size_t k) noexcept { dropped_rows_ = k; }

 private:
  std::vector<Subject> subjects_;
  OutcomeKind kind_;
  std::size_t p_ = 0;
  std::size_t n1_ = 0;
  std::size_t dropped_rows_ = 0;
};

inline void require_both_arms(const Dataset& data, const char* what) {
  if (!data.has_both_arms())
    throw EstimabilityError(std::string(what) +
                            ": needs at least one treated and one control "
                            "subject (n1=" +
                            std::to_string(data.n_treated()) +
                            ", n0=" + std::to_string(data.n_control()) + ")");
}

/// Simulation record with both potential outcomes and the random effect.
struct PotentialSubject {
  double y1 = 0.0;
  double y0 = 0.0;
  int z = 0;
  std::vector<double> w;
  double b = 0.0;
};

struct PotentialDataset {
  std::vector<PotentialSubject> subjects;

  /// Observed data: y = z * y1 + (1 - z) * y0.
  Dataset observe(OutcomeKind kind = OutcomeKind::continuous) const {
    std::vector<Subject> out;
    out.reserve(subjects.size());
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      const auto& s = subjects[i];
      out.push_back({std::to_string(i + 1), s.z, s.z == 1 ? s.y1 : s.y0, s.w});
    }
    return Dataset(std::move(out), kind);
  }
};

//---------------------------------------------------------------------------//
// Pair enumeration
//---------------------------------------------------------------------------//

struct PairIndex {
  std::size_t i;
  std::size_t j;
  friend bool operator==(const PairIndex&, const PairIndex&) = default;
};

inline std::size_t pair_count(std::size_t n) noexcept {
  return n < 2 ? 0 : n * (n - 1) / 2;
}

/// Calls `fn(PairIndex)` for every i < j in lexicographic order.
template <class Fn>
void for_each_pair(std::size_t n, Fn&& fn) {
  for (std::size_t i = 0; i + 1 < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) fn(PairIndex{i, j});
}

inline std::vector<PairIndex> enumerate_pairs(const Dataset& data) {
  std::vector<PairIndex> out;
  out.reserve(pair_count(data.size()));
  for_each_pair(data.size(), [&](PairIndex p) { out.push_back(p); });
  return out;
}

/// Ordered (treated, control) pairs: exactly n1 * n0 of them.
inline std::vector<PairIndex> discordant_pairs(const Dataset& data) {
  std::vector<std::size_t> treated, control;
  for (std::size_t k = 0; k < data.size(); ++k)
    (data[k].z == 1 ? treated : control).push_back(k);
  std::vector<PairIndex> out;
  out.reserve(treated.size() * control.size());
  for (auto t : treated)
    for (auto c : control) out.push_back({t, c});
  return out;
}

//---------------------------------------------------------------------------//
// CSV ingestion
//---------------------------------------------------------------------------//

struct CsvSchema {
  std::string z_col = "z";
  std::string y_col = "y";
  std::vector<std::string> w_cols;
  std::string id_col;  // optional; row number when empty
  OutcomeKind outcome_kind = OutcomeKind::continuous;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

/// Splits one CSV record. Double-quoted fields may contain commas and "".
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    char c = line[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          cur.push_back('"');
          ++k;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.emplace_back(trim(cur));
  return fields;
}

inline bool is_missing(std::string_view cell) {
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan";
}

inline bool parse_double(std::string_view cell, double& out) {
  auto first = cell.data();
  auto last = cell.data() + cell.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace detail

/**
 * Reads a header-first CSV into a Dataset.
 *
 * Rows with an empty/NA cell in any required column are dropped (listwise);
 * every other defect raises IngestError naming the 1-based data row.
 */
inline Dataset parse_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw IngestError("CSV is empty: header row required");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  auto header = detail::split_csv_line(line);

  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw IngestError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  std::size_t zc = column(schema.z_col);
  std::size_t yc = column(schema.y_col);
  std::vector<std::size_t> wc;
  for (const auto& name : schema.w_cols) wc.push_back(column(name));
  std::optional<std::size_t> idc;
  if (!schema.id_col.empty()) idc = column(schema.id_col);

  std::vector<Subject> subjects;
  std::size_t row = 0, dropped = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw IngestError("row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(cells.size()),
                        row);
    bool missing = detail::is_missing(cells[zc]) || detail::is_missing(cells[yc]);
    for (auto c : wc) missing = missing || detail::is_missing(cells[c]);
    if (missing) {
      ++dropped;
      continue;
    }
    Subject s;
    s.id = idc ? cells[*idc] : std::to_string(row);
    if (cells[zc] == "1")
      s.z = 1;
    else if (cells[zc] == "0")
      s.z = 0;
    else
      throw IngestError("row " + std::to_string(row) + ": column '" +
                            schema.z_col + "' must be 0 or 1, got '" +
                            cells[zc] + "'",
                        row);
    if (!detail::parse_double(cells[yc], s.y))
      throw IngestError("row " + std::to_string(row) + ": column '" +
                            schema.y_col + "' is not numeric ('" + cells[yc] +
                            "')",
                        row);
    s.w.resize(wc.size());
    for (std::size_t k = 0; k < wc.size(); ++k)
      if (!detail::parse_double(cells[wc[k]], s.w[k]))
        throw IngestError("row " + std::to_string(row) + ": column '" +
                              schema.w_cols[k] + "' is not numeric ('" +
                              cells[wc[k]] + "')",
                          row);
    if (schema.outcome_kind == OutcomeKind::count &&
        (s.y < 0 || s.y != std::floor(s.y)))
      throw IngestError("row " + std::to_string(row) +
                            ": count outcome must be a nonnegative integer",
                        row);
    subjects.push_back(std::move(s));
  }
  if (subjects.size() < 2)
    throw IngestError("need at least 2 complete rows, got " +
                      std::to_string(subjects.size()));
  Dataset data(std::move(subjects), schema.outcome_kind);
  data.set_dropped_rows(dropped);
  return data;
}

inline Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return parse_csv(in, schema);
}

}  // namespace drmww
