#include "attnhtr/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <opencv2/freetype.hpp>
#include <opencv2/imgproc.hpp>

#include "attnhtr/error.hpp"
#include "attnhtr/log.hpp"
#include "attnhtr/rng.hpp"
#include "attnhtr/utf8.hpp"

namespace attnhtr {

namespace {

constexpr int kRenderPx = 48;
constexpr const char* kHersheyPrefix = "hershey:";

// ---- TrueType character map ----------------------------------------------

class CharMap {
 public:
  explicit CharMap(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::IoError, "cannot open font " + path);
    data_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    parse(path);
  }

  bool has(char32_t cp) const {
    if (cp == U' ') return true;
    for (const auto& g : groups_) {
      if (cp >= g.start && cp <= g.end) return true;
    }
    return false;
  }

 private:
  struct Group {
    char32_t start;
    char32_t end;
  };

  std::uint32_t u16(std::size_t off) const {
    require(off + 2 <= data_.size(), ErrorCode::IoError, "truncated font file");
    return (static_cast<std::uint8_t>(data_[off]) << 8) | static_cast<std::uint8_t>(data_[off + 1]);
  }
  std::uint32_t u32(std::size_t off) const { return (u16(off) << 16) | u16(off + 2); }

  void parse(const std::string& path) {
    std::size_t base = 0;
    if (data_.size() >= 4 && data_.compare(0, 4, "ttcf") == 0) base = u32(12);
    const std::uint32_t tables = u16(base + 4);
    std::size_t cmap = 0;
    for (std::uint32_t i = 0; i < tables; ++i) {
      const std::size_t rec = base + 12 + 16 * i;
      if (data_.compare(rec, 4, "cmap") == 0) cmap = u32(rec + 8);
    }
    require(cmap != 0, ErrorCode::IoError, "font has no character map: " + path);
    const std::uint32_t subtables = u16(cmap + 2);
    std::size_t best = 0;
    int best_rank = -1;
    for (std::uint32_t i = 0; i < subtables; ++i) {
      const std::size_t rec = cmap + 4 + 8 * i;
      const std::uint32_t platform = u16(rec);
      const std::uint32_t encoding = u16(rec + 2);
      const std::size_t off = cmap + u32(rec + 4);
      const std::uint32_t format = u16(off);
      int rank = -1;
      if (format == 12 && (platform == 0 || (platform == 3 && encoding == 10))) rank = 2;
      if (format == 4 && (platform == 0 || (platform == 3 && (encoding == 1 || encoding == 0)))) rank = 1;
      if (rank > best_rank) {
        best_rank = rank;
        best = off;
      }
    }
    require(best_rank >= 0, ErrorCode::IoError, "font has no unicode character map: " + path);
    if (u16(best) == 12) {
      const std::uint32_t n = u32(best + 12);
      for (std::uint32_t g = 0; g < n; ++g) {
        const std::size_t rec = best + 16 + 12 * g;
        groups_.push_back({u32(rec), u32(rec + 4)});
      }
      return;
    }
    // Format 4: walk each segment and keep code ranges that map to a real glyph.
    const std::uint32_t seg_count = u16(best + 6) / 2;
    const std::size_t ends = best + 14;
    const std::size_t starts = ends + 2 * seg_count + 2;
    const std::size_t deltas = starts + 2 * seg_count;
    const std::size_t range_offsets = deltas + 2 * seg_count;
    for (std::uint32_t s = 0; s < seg_count; ++s) {
      const std::uint32_t end = u16(ends + 2 * s);
      const std::uint32_t start = u16(starts + 2 * s);
      const std::uint32_t delta = u16(deltas + 2 * s);
      const std::uint32_t ro = u16(range_offsets + 2 * s);
      if (start == 0xFFFF) continue;
      if (ro == 0) {
        groups_.push_back({start, end});
        continue;
      }
      for (std::uint32_t c = start; c <= end; ++c) {
        const std::size_t addr = range_offsets + 2 * s + ro + 2 * (c - start);
        if (addr + 2 > data_.size()) break;
        std::uint32_t glyph = u16(addr);
        if (glyph != 0) glyph = (glyph + delta) & 0xFFFF;
        if (glyph != 0) groups_.push_back({c, c});
      }
    }
  }

  std::string data_;
  std::vector<Group> groups_;
};

struct TrueTypeFont {
  cv::Ptr<cv::freetype::FreeType2> face;
  CharMap charmap;
  int ascent = 0;   // ink rows above the baseline for a reference string
  int descent = 0;  // ink rows below

  explicit TrueTypeFont(const std::string& path) : charmap(path) {
    face = cv::freetype::createFreeType2();
    try {
      face->loadFontData(path, 0);
    } catch (const cv::Exception& e) {
      fail(ErrorCode::IoError, "cannot load font " + path + ": " + e.what());
    }
  }
};

std::mutex& font_mutex() {
  static std::mutex m;
  return m;
}

TrueTypeFont& truetype(const std::string& path) {
  static std::map<std::string, std::unique_ptr<TrueTypeFont>> cache;
  auto it = cache.find(path);
  if (it == cache.end()) it = cache.emplace(path, std::make_unique<TrueTypeFont>(path)).first;
  return *it->second;
}

struct HersheySpec {
  int face = 0;
};

bool is_hershey(const std::string& font) { return font.rfind(kHersheyPrefix, 0) == 0; }

HersheySpec parse_hershey(const std::string& font) {
  const std::string rest = font.substr(std::char_traits<char>::length(kHersheyPrefix));
  const auto colon = rest.find(':');
  int id = -1;
  try {
    id = std::stoi(rest.substr(0, colon));
  } catch (const std::exception&) {
    id = -1;
  }
  require(id >= 0 && id <= 7, ErrorCode::IoError, "unknown built-in font '" + font + "'");
  HersheySpec spec;
  spec.face = id;
  if (colon != std::string::npos && rest.substr(colon + 1) == "italic") spec.face |= cv::FONT_ITALIC;
  return spec;
}

// Draws white-on-black and returns the gray canvas and the baseline row.
cv::Mat draw_text(const std::string& text, const std::string& font, int thickness_jitter,
                  int& baseline_row) {
  const int pad = kRenderPx;
  if (is_hershey(font)) {
    const HersheySpec spec = parse_hershey(font);
    const double scale = cv::getFontScaleFromHeight(spec.face, kRenderPx, 1);
    const int thickness = 1 + thickness_jitter;
    int base = 0;
    cv::Size size = cv::getTextSize(text, spec.face, scale, thickness, &base);
    cv::Mat canvas(size.height + base + 2 * pad, size.width + 2 * pad, CV_8UC1, cv::Scalar(0));
    baseline_row = pad + size.height;
    cv::putText(canvas, text, cv::Point(pad, baseline_row), spec.face, scale, cv::Scalar(255),
                thickness, cv::LINE_AA);
    return canvas;
  }
  TrueTypeFont& tt = truetype(font);
  int base = 0;
  cv::Size size = tt.face->getTextSize(text, kRenderPx, -1, &base);
  cv::Mat canvas(std::max(size.height, kRenderPx) + base + 2 * pad, size.width + 2 * pad, CV_8UC3,
                 cv::Scalar::all(0));
  baseline_row = pad + std::max(size.height, kRenderPx);
  tt.face->putText(canvas, text, cv::Point(pad, baseline_row), kRenderPx, cv::Scalar::all(255), -1,
                   cv::LINE_AA, true);
  if (thickness_jitter > 0) {
    cv::dilate(canvas, canvas, cv::getStructuringElement(cv::MORPH_ELLIPSE, {1 + 2 * thickness_jitter, 1 + 2 * thickness_jitter}));
  }
  cv::Mat gray;
  cv::cvtColor(canvas, gray, cv::COLOR_BGR2GRAY);
  return gray;
}

// Ink rows of a reference string relative to the baseline; fixes the
// vertical extent per font so letter heights are comparable across words.
std::pair<int, int> vertical_extent(const std::string& font) {
  static std::map<std::string, std::pair<int, int>> cache;
  auto it = cache.find(font);
  if (it != cache.end()) return it->second;
  int baseline = 0;
  cv::Mat ref = draw_text("Hdlbkfgjpqy|", font, 0, baseline);
  int top = ref.rows;
  int bottom = -1;
  for (int y = 0; y < ref.rows; ++y) {
    if (cv::countNonZero(ref.row(y)) > 0) {
      top = std::min(top, y);
      bottom = std::max(bottom, y);
    }
  }
  std::pair<int, int> ext{kRenderPx * 3 / 4, kRenderPx / 4};
  if (bottom >= top) ext = {std::max(1, baseline - top), std::max(1, bottom - baseline + 1)};
  cache.emplace(font, ext);
  return ext;
}

}  // namespace

CorpusLexicon extract_lexicon(std::istream& text, std::string source) {
  std::set<std::string> unique;
  std::string line;
  while (std::getline(text, line)) {
    for (std::string& token : utf8::split_whitespace(line)) unique.insert(std::move(token));
  }
  CorpusLexicon lex;
  lex.source = std::move(source);
  lex.words.assign(unique.begin(), unique.end());
  if (lex.words.empty()) log::warn("extract_lexicon: no words found in " + lex.source);
  return lex;
}

CorpusLexicon extract_lexicon_files(const std::vector<std::filesystem::path>& files) {
  std::ostringstream joined;
  std::string source;
  for (const auto& f : files) {
    std::ifstream in(f);
    require(in.good(), ErrorCode::IoError, "cannot read corpus " + f.string());
    joined << in.rdbuf() << '\n';
    if (!source.empty()) source += ",";
    source += f.string();
  }
  std::istringstream in(joined.str());
  return extract_lexicon(in, source);
}

FontSet load_fontset(const std::filesystem::path& dir) {
  FontSet set;
  std::error_code ec;
  if (dir.string().rfind(kHersheyPrefix, 0) == 0) {
    set.fonts.push_back(dir.string());
    return set;
  }
  require(std::filesystem::exists(dir, ec), ErrorCode::IoError, "font path not found: " + dir.string());
  auto accept = [&](const std::filesystem::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".ttf" || ext == ".otf" || ext == ".ttc") set.fonts.push_back(p.string());
  };
  if (std::filesystem::is_regular_file(dir)) {
    accept(dir);
  } else {
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir, ec)) {
      if (entry.is_regular_file()) accept(entry.path());
    }
  }
  std::sort(set.fonts.begin(), set.fonts.end());
  require(!set.fonts.empty(), ErrorCode::IoError, "no fonts found under " + dir.string());
  return set;
}

bool font_covers(const std::string& font, const std::string& word) {
  const std::u32string cps = utf8::decode(word);
  if (is_hershey(font)) {
    parse_hershey(font);
    return std::all_of(cps.begin(), cps.end(), [](char32_t c) { return c >= 32 && c < 127; });
  }
  std::lock_guard lock(font_mutex());
  const TrueTypeFont& tt = truetype(font);
  return std::all_of(cps.begin(), cps.end(), [&](char32_t c) { return tt.charmap.has(c); });
}

GrayImage render_word(const std::string& word, const std::string& font, int target_height,
                      std::uint64_t seed) {
  RenderOptions options;
  options.target_height = target_height;
  return render_word(word, font, options, seed);
}

GrayImage render_word(const std::string& word, const std::string& font, const RenderOptions& options,
                      std::uint64_t seed) {
  require(!word.empty(), ErrorCode::EmptyWord, "cannot render an empty word");
  require(options.target_height >= 8, ErrorCode::InvalidConfig, "target_height must be >= 8");
  require(font_covers(font, word), ErrorCode::GlyphMissing,
          "font " + font + " cannot render '" + word + "'");
  Rng rng(seed);
  const int thickness = static_cast<int>(uniform_index(rng, 2));
  const double margin_scale = uniform(rng, 0.75, 1.25);

  cv::Mat canvas;
  int baseline = 0;
  std::pair<int, int> extent;
  {
    std::lock_guard lock(font_mutex());
    canvas = draw_text(word, font, thickness, baseline);
    extent = vertical_extent(font);
  }
  int left = canvas.cols;
  int right = -1;
  for (int x = 0; x < canvas.cols; ++x) {
    if (cv::countNonZero(canvas.col(x)) > 0) {
      left = std::min(left, x);
      right = std::max(right, x);
    }
  }
  require(right >= left, ErrorCode::GlyphMissing, "font " + font + " drew no ink for '" + word + "'");

  const double px_per_out = static_cast<double>(extent.first + extent.second) /
                            std::max(1, options.target_height - 2 * options.margin);
  const int margin_px = static_cast<int>(std::lround(options.margin * px_per_out * margin_scale));
  const int top = std::max(0, baseline - extent.first - margin_px);
  const int bottom = std::min(canvas.rows, baseline + extent.second + margin_px);
  const int x0 = std::max(0, left - margin_px);
  const int x1 = std::min(canvas.cols, right + 1 + margin_px);
  cv::Mat crop = canvas(cv::Range(top, bottom), cv::Range(x0, x1));

  GrayImage out(crop.rows, crop.cols);
  for (int y = 0; y < crop.rows; ++y) {
    for (int x = 0; x < crop.cols; ++x) {
      out.at(y, x) = 1.0f - crop.at<unsigned char>(y, x) / 255.0f;
    }
  }
  return resize_to_height(out, options.target_height);
}

std::size_t sampled_word_index(std::size_t lexicon_size, std::uint64_t seed, std::size_t i) {
  Rng rng(mix_seed(seed, i));
  return uniform_index(rng, lexicon_size);
}

std::filesystem::path generate_dataset(const CorpusLexicon& lexicon, const FontSet& fonts,
                                       std::size_t n, const AugmentConfig& augment,
                                       std::uint64_t seed, const std::filesystem::path& out_dir,
                                       const GenerateOptions& options) {
  require(n >= 1, ErrorCode::InvalidConfig, "generate_dataset needs n >= 1");
  require(!lexicon.words.empty(), ErrorCode::EmptyCorpus, "lexicon is empty");
  require(fonts.count() >= 1, ErrorCode::InvalidConfig, "font set is empty");
  augment.validate();

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  require(!ec && std::filesystem::is_directory(out_dir / "images"), ErrorCode::IoError,
          "cannot create output directory " + out_dir.string());
  const std::filesystem::path manifest = out_dir / "manifest.tsv";
  std::ofstream out(manifest, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::IoError, "cannot write " + manifest.string());

  constexpr int kMaxWordAttempts = 100;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, i));
    GrayImage image;
    std::string word;
    bool rendered = false;
    for (int attempt = 0; attempt < kMaxWordAttempts && !rendered; ++attempt) {
      word = lexicon.words[uniform_index(rng, lexicon.words.size())];
      for (int f = 0; f <= options.max_font_retries; ++f) {
        const std::string& font = fonts.fonts[uniform_index(rng, fonts.count())];
        if (!font_covers(font, word)) continue;
        image = render_word(word, font, options.target_height, rng());
        rendered = true;
        break;
      }
      if (!rendered) log::warn("generate_dataset: no font renders '" + word + "', skipping it");
    }
    require(rendered, ErrorCode::GlyphMissing, "no renderable word found for sample " + std::to_string(i));
    image = apply_pipeline(image, augment, mix_seed(seed ^ 0xA5A5A5A5ull, i));

    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    const std::filesystem::path rel = std::filesystem::path("images") / name;
    save_image(image, out_dir / rel);
    out << rel.generic_string() << '\t' << word << '\n';
  }
  require(out.good(), ErrorCode::IoError, "failed writing " + manifest.string());
  return manifest;
}

}  // namespace attnhtr
