#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <system_error>

#include "esmaml/errors.hpp"

namespace esmaml {

/// Shortest decimal that round-trips to the same double. Uses '.' as the
/// decimal point regardless of locale. Negative zero prints as "0".
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (v == 0.0) return "0";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  if (res.ec != std::errc{}) throw Error("format_number: conversion failed");
  return std::string(buf, res.ptr);
}

/// Minimal CSV writer: LF line endings, no quoting (fields never contain
/// separators).
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path)
      : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
    if (!out_) throw Error("cannot open " + path + " for writing");
  }

  CsvWriter& header(std::initializer_list<std::string_view> cols) {
    bool first = true;
    for (auto c : cols) {
      if (!first) out_ << ',';
      out_ << c;
      first = false;
    }
    out_ << '\n';
    return *this;
  }

  CsvWriter& cell(double v) { return raw(format_number(v)); }
  CsvWriter& cell(std::size_t v) { return raw(std::to_string(v)); }
  CsvWriter& cell(int v) { return raw(std::to_string(v)); }
  CsvWriter& cell(unsigned long long v) { return raw(std::to_string(v)); }
  CsvWriter& cell(std::string_view v) { return raw(std::string(v)); }
  CsvWriter& cell(const char* v) { return raw(std::string(v)); }

  CsvWriter& end_row() {
    out_ << '\n';
    first_ = true;
    return *this;
  }

  void close() {
    out_.close();
    if (!out_) throw Error("failed writing " + path_);
  }

 private:
  CsvWriter& raw(const std::string& s) {
    if (!first_) out_ << ',';
    out_ << s;
    first_ = false;
    return *this;
  }

  std::ofstream out_;
  std::string path_;
  bool first_ = true;
};

}  // namespace esmaml
