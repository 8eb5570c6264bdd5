#pragma once

// Character and word error rates from a Wagner-Fischer alignment. Counts
// describe the edits that turn the reference into the hypothesis.

#include <string>
#include <string_view>
#include <vector>

namespace attnhtr {

struct EditCounts {
  int substitutions = 0;
  int insertions = 0;  // extra hypothesis symbols
  int deletions = 0;   // reference symbols missing from the hypothesis
  int reference_length = 0;

  int distance() const { return substitutions + insertions + deletions; }
  EditCounts& operator+=(const EditCounts& other);
  bool operator==(const EditCounts&) const = default;
};

// Unit-cost alignment. Backtrace preference at equal cost: diagonal
// (match or substitution), then deletion, then insertion.
// Throws EmptyReference.
EditCounts edit_counts(const std::u32string& reference, const std::u32string& hypothesis);
EditCounts edit_counts(const std::vector<std::string>& reference, const std::vector<std::string>& hypothesis);

// Plain Levenshtein distance; no restriction on empty inputs.
int edit_distance(const std::u32string& a, const std::u32string& b);

EditCounts char_counts(std::string_view reference, std::string_view hypothesis);
EditCounts word_counts(std::string_view reference, std::string_view hypothesis);

// 100 * (S + I + D) / N over codepoints / whitespace tokens.
double cer(std::string_view reference, std::string_view hypothesis);
double wer(std::string_view reference, std::string_view hypothesis);

struct SampleScore {
  std::string id;
  std::string reference;
  std::string hypothesis;
  EditCounts chars;
  EditCounts words;
  double cer = 0.0;
  double wer = 0.0;
};

// Aggregates are micro-averaged: summed edits over summed reference lengths.
struct MetricsReport {
  std::vector<SampleScore> per_sample;
  double aggregate_cer = 0.0;
  double aggregate_wer = 0.0;

  void add(std::string id, std::string reference, std::string hypothesis);
  void finalize();
  std::string to_json() const;

 private:
  EditCounts char_total_;
  EditCounts word_total_;
};

}  // namespace attnhtr
