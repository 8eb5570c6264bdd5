#include "attnhtr/metrics.hpp"

#include <algorithm>
#include <json.hpp>

#include "attnhtr/error.hpp"
#include "attnhtr/utf8.hpp"

namespace attnhtr {

EditCounts& EditCounts::operator+=(const EditCounts& other) {
  substitutions += other.substitutions;
  insertions += other.insertions;
  deletions += other.deletions;
  reference_length += other.reference_length;
  return *this;
}

namespace {

template <typename Seq>
EditCounts align(const Seq& ref, const Seq& hyp) {
  require(!ref.empty(), ErrorCode::EmptyReference, "reference must not be empty");
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  std::vector<int> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> int& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const int diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  EditCounts counts;
  counts.reference_length = static_cast<int>(n);
  std::size_t i = n;
  std::size_t j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const int cost = ref[i - 1] == hyp[j - 1] ? 0 : 1;
      if (at(i, j) == at(i - 1, j - 1) + cost) {
        counts.substitutions += cost;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++counts.deletions;
      --i;
    } else {
      ++counts.insertions;
      --j;
    }
  }
  return counts;
}

}  // namespace

EditCounts edit_counts(const std::u32string& reference, const std::u32string& hypothesis) {
  return align(reference, hypothesis);
}

EditCounts edit_counts(const std::vector<std::string>& reference, const std::vector<std::string>& hypothesis) {
  return align(reference, hypothesis);
}

int edit_distance(const std::u32string& a, const std::u32string& b) {
  std::vector<int> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    int diag = row[0];
    row[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int up = row[j];
      row[j] = std::min({diag + (a[i - 1] == b[j - 1] ? 0 : 1), up + 1, row[j - 1] + 1});
      diag = up;
    }
  }
  return row[b.size()];
}

EditCounts char_counts(std::string_view reference, std::string_view hypothesis) {
  return edit_counts(utf8::decode(reference), utf8::decode(hypothesis));
}

EditCounts word_counts(std::string_view reference, std::string_view hypothesis) {
  return edit_counts(utf8::split_whitespace(reference), utf8::split_whitespace(hypothesis));
}

double cer(std::string_view reference, std::string_view hypothesis) {
  const EditCounts c = char_counts(reference, hypothesis);
  return 100.0 * c.distance() / c.reference_length;
}

double wer(std::string_view reference, std::string_view hypothesis) {
  const EditCounts c = word_counts(reference, hypothesis);
  return 100.0 * c.distance() / c.reference_length;
}

void MetricsReport::add(std::string id, std::string reference, std::string hypothesis) {
  SampleScore s;
  s.chars = char_counts(reference, hypothesis);
  s.words = word_counts(reference, hypothesis);
  s.cer = 100.0 * s.chars.distance() / s.chars.reference_length;
  s.wer = 100.0 * s.words.distance() / s.words.reference_length;
  s.id = std::move(id);
  s.reference = std::move(reference);
  s.hypothesis = std::move(hypothesis);
  char_total_ += s.chars;
  word_total_ += s.words;
  per_sample.push_back(std::move(s));
  finalize();
}

void MetricsReport::finalize() {
  aggregate_cer = char_total_.reference_length > 0
                      ? 100.0 * char_total_.distance() / char_total_.reference_length
                      : 0.0;
  aggregate_wer = word_total_.reference_length > 0
                      ? 100.0 * word_total_.distance() / word_total_.reference_length
                      : 0.0;
}

std::string MetricsReport::to_json() const {
  using nlohmann::ordered_json;
  auto counts = [](const EditCounts& c) {
    return ordered_json{{"S", c.substitutions}, {"I", c.insertions}, {"D", c.deletions}, {"N", c.reference_length}};
  };
  ordered_json rows = ordered_json::array();
  for (const SampleScore& s : per_sample) {
    rows.push_back(ordered_json{{"id", s.id},
                                {"reference", s.reference},
                                {"hypothesis", s.hypothesis},
                                {"cer", s.cer},
                                {"wer", s.wer},
                                {"chars", counts(s.chars)},
                                {"words", counts(s.words)}});
  }
  ordered_json doc{{"aggregate_cer", aggregate_cer},
                   {"aggregate_wer", aggregate_wer},
                   {"characters", counts(char_total_)},
                   {"words", counts(word_total_)},
                   {"samples", per_sample.size()},
                   {"per_sample", std::move(rows)}};
  return doc.dump(2) + "\n";
}

}  // namespace attnhtr
