#include "attnhtr/manifest.hpp"

#include <fstream>

#include "attnhtr/error.hpp"

namespace attnhtr {

namespace fs = std::filesystem;

std::vector<WordSample> load_manifest(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  std::vector<WordSample> samples;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() < 2 || cols.size() > 3 || cols[0].empty() || cols[1].empty()) {
      throw RowError(ErrorCode::MalformedRow, row,
                     path.string() + ":" + std::to_string(row) +
                         ": expected image_path<TAB>transcription[<TAB>writer_id]");
    }
    WordSample s;
    s.id = cols[0];
    s.image_path = fs::path(cols[0]).is_absolute() ? fs::path(cols[0]) : base / cols[0];
    s.transcription = cols[1];
    if (cols.size() == 3) s.writer_id = cols[2];
    if (!fs::is_regular_file(s.image_path)) {
      throw RowError(ErrorCode::MissingImage, row,
                     path.string() + ":" + std::to_string(row) + ": image not found: " + s.image_path.string());
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_manifest(const fs::path& path, const std::vector<WordSample>& samples) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot write manifest " + path.string());
  const fs::path base = fs::absolute(path).parent_path();
  for (const WordSample& s : samples) {
    fs::path p = s.image_path;
    if (p.is_absolute()) {
      const fs::path rel = p.lexically_relative(base);
      if (!rel.empty() && *rel.begin() != "..") p = rel;
    }
    out << p.generic_string() << '\t' << s.transcription;
    if (!s.writer_id.empty()) out << '\t' << s.writer_id;
    out << '\n';
  }
  require(static_cast<bool>(out), ErrorCode::IoError, "failed writing manifest " + path.string());
}

}  // namespace attnhtr
