#include "compscore/controls.hpp"

#include "compscore/csv.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

namespace compscore {

namespace {

std::string fold_case(std::string_view word) {
  std::string out(word);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

FrequencyTable FrequencyTable::from_csv(const std::string& path, double floor_prob) {
  std::vector<std::pair<std::string, double>> counts;
  for (const auto& f : read_csv(path, "word,count")) {
    counts.emplace_back(f[0], parse_double(f[1]));
  }
  return from_counts(counts, floor_prob);
}

FrequencyTable FrequencyTable::from_counts(const std::vector<std::pair<std::string, double>>& counts,
                                           double floor_prob) {
  if (floor_prob <= 0.0) throw ValidationError("frequency table: floor probability must be > 0");
  FrequencyTable table;
  table.floor_prob_ = floor_prob;
  double total = 0.0;
  for (const auto& [word, count] : counts) {
    if (count <= 0.0) throw ValidationError("frequency table: nonpositive count for '" + word + "'");
    total += count;
  }
  if (total <= 0.0) throw ValidationError("frequency table: empty");
  for (const auto& [word, count] : counts) {
    table.probs_[fold_case(word)] += count / total;
  }
  return table;
}

double FrequencyTable::log_frequency(std::string_view word) const {
  const auto it = probs_.find(fold_case(word));
  return std::log(it != probs_.end() ? it->second : floor_prob_);
}

WordTiming WordTiming::from_csv(const std::string& path) {
  WordTiming timing;
  for (const auto& f : read_csv(path, "sentence_id,word_index,word,onset_s,offset_s")) {
    TimingEntry e;
    e.sentence_id = static_cast<int>(parse_long(f[0]));
    e.word_index = static_cast<int>(parse_long(f[1]));
    e.word = f[2];
    e.onset_s = parse_double(f[3]);
    e.offset_s = parse_double(f[4]);
    const auto key = std::make_pair(e.sentence_id, e.word_index);
    if (!timing.entries_.emplace(key, std::move(e)).second) {
      throw ValidationError("timing: duplicate entry for sentence " + f[0] + " word " + f[1]);
    }
  }
  return timing;
}

const TimingEntry* WordTiming::find(int sentence_id, int word_index) const {
  const auto it = entries_.find({sentence_id, word_index});
  return it == entries_.end() ? nullptr : &it->second;
}

void ControlTable::write_csv(const std::string& path) const {
  std::string out =
      "sentence_id,word_index,word,wordrate,log_freq,nc_topdown,nc_bottomup,nc_leftcorner,offset_time\n";
  for (const auto& r : rows) {
    out += std::to_string(r.sentence_id);
    out += ',';
    out += std::to_string(r.word_index);
    out += ',';
    out += r.word;
    out += ',';
    out += std::to_string(r.wordrate);
    out += ',';
    out += format_double(r.log_freq);
    out += ',';
    out += std::to_string(r.nc_topdown);
    out += ',';
    out += std::to_string(r.nc_bottomup);
    out += ',';
    out += std::to_string(r.nc_leftcorner);
    out += ',';
    out += format_double(r.offset_time);
    out += '\n';
  }
  write_text_file(path, out);
}

ControlTable ControlTable::read_csv(const std::string& path) {
  ControlTable table;
  const auto rows = compscore::read_csv(
      path,
      "sentence_id,word_index,word,wordrate,log_freq,nc_topdown,nc_bottomup,nc_leftcorner,offset_time");
  for (const auto& f : rows) {
    ControlRow r;
    r.sentence_id = static_cast<int>(parse_long(f[0]));
    r.word_index = static_cast<int>(parse_long(f[1]));
    r.word = f[2];
    r.wordrate = static_cast<int>(parse_long(f[3]));
    r.log_freq = parse_double(f[4]);
    r.nc_topdown = static_cast<int>(parse_long(f[5]));
    r.nc_bottomup = static_cast<int>(parse_long(f[6]));
    r.nc_leftcorner = static_cast<int>(parse_long(f[7]));
    r.offset_time = parse_double(f[8]);
    table.rows.push_back(std::move(r));
  }
  return table;
}

ControlTable build_control_table(std::span<const ParseTree> trees, const FrequencyTable& freq,
                                 const WordTiming& timing) {
  ControlTable table;
  double prev_offset = -std::numeric_limits<double>::infinity();
  for (const auto& tree : trees) {
    const auto words = tree.words();
    const auto td = node_counts(tree, ParseStrategy::topdown);
    const auto bu = node_counts(tree, ParseStrategy::bottomup);
    const auto lc = node_counts(tree, ParseStrategy::leftcorner);
    for (std::size_t w = 0; w < words.size(); ++w) {
      const TimingEntry* entry = tree.sentence_id >= 0
                                     ? timing.find(tree.sentence_id, static_cast<int>(w))
                                     : nullptr;
      if (entry == nullptr) {
        throw ValidationError("timing: missing entry for sentence " +
                              std::to_string(tree.sentence_id) + " word " + std::to_string(w) +
                              " ('" + words[w] + "')");
      }
      ControlRow row;
      row.sentence_id = tree.sentence_id;
      row.word_index = static_cast<int>(w);
      row.word = words[w];
      row.wordrate = 1;
      row.log_freq = freq.log_frequency(words[w]);
      row.nc_topdown = td[w];
      row.nc_bottomup = bu[w];
      row.nc_leftcorner = lc[w];
      row.offset_time = entry->offset_s;
      if (row.offset_time <= prev_offset) {
        throw ValidationError("timing: offset times must be strictly increasing (sentence " +
                              std::to_string(tree.sentence_id) + " word " + std::to_string(w) + ")");
      }
      prev_offset = row.offset_time;
      table.rows.push_back(std::move(row));
    }
    // a timing entry past the tree's word count means the sources disagree
    if (timing.find(tree.sentence_id, static_cast<int>(words.size())) != nullptr) {
      throw ValidationError("timing: sentence " + std::to_string(tree.sentence_id) + " has more"
                            " timed words than the tree has terminals (" +
                            std::to_string(words.size()) + ")");
    }
  }
  return table;
}

}  // namespace compscore
