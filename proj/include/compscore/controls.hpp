#pragma once

#include "compscore/parse_tree.hpp"

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace compscore {

// Case-folded unigram probabilities; unseen words fall back to floor_prob.
class FrequencyTable {
 public:
  // CSV `word,count`; probabilities are count/sum(count).
  static FrequencyTable from_csv(const std::string& path, double floor_prob = 1e-8);
  static FrequencyTable from_counts(const std::vector<std::pair<std::string, double>>& counts,
                                    double floor_prob = 1e-8);

  // Natural log of the word's probability (floor for unseen words).
  double log_frequency(std::string_view word) const;

 private:
  std::unordered_map<std::string, double> probs_;
  double floor_prob_ = 1e-8;
};

struct TimingEntry {
  int sentence_id = 0;
  int word_index = 0;
  std::string word;
  double onset_s = 0.0;
  double offset_s = 0.0;
};

// Word timing keyed by (sentence_id, word_index).
class WordTiming {
 public:
  static WordTiming from_csv(const std::string& path);

  const TimingEntry* find(int sentence_id, int word_index) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::pair<int, int>, TimingEntry> entries_;
};

struct ControlRow {
  int sentence_id = 0;
  int word_index = 0;
  std::string word;
  int wordrate = 1;
  double log_freq = 0.0;
  int nc_topdown = 0;
  int nc_bottomup = 0;
  int nc_leftcorner = 0;
  double offset_time = 0.0;
};

struct ControlTable {
  std::vector<ControlRow> rows;  // ordered by (sentence, word)

  void write_csv(const std::string& path) const;
  static ControlTable read_csv(const std::string& path);
};

// Joins node counts, frequencies and timings per word. Word-count mismatches
// and missing timings are validation errors naming the (sentence, word);
// offset times must be strictly increasing across the run.
ControlTable build_control_table(std::span<const ParseTree> trees, const FrequencyTable& freq,
                                 const WordTiming& timing);

}  // namespace compscore
