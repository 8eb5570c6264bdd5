#include "attnhtr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>

#include "attnhtr/error.hpp"
#include "attnhtr/log.hpp"

namespace attnhtr {

namespace {

constexpr char kMagic[] = "ATTNHTR1\n";
constexpr std::size_t kMagicSize = sizeof(kMagic) - 1;

void write_matrix(std::ostream& out, const ad::Matrix& m) {
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

ad::Matrix read_matrix(std::istream& in, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  ad::Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  require(static_cast<bool>(in), ErrorCode::IoError, "checkpoint truncated while reading " + what);
  return m;
}

}  // namespace

Checkpoint snapshot(const ad::ParameterStore& store, const Vocabulary& vocab, const Config& config, int epoch,
                    const Adam* adam) {
  Checkpoint ck;
  ck.config = config;
  ck.vocab = vocab;
  ck.epoch = epoch;
  for (const ad::Parameter* p : store.all()) {
    ck.tensors[p->name] = p->value;
    ck.trainable[p->name] = p->trainable;
  }
  if (adam != nullptr) {
    ck.optimizer_steps = adam->steps();
    ck.moments = adam->moments();
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  using nlohmann::ordered_json;
  ordered_json header;
  header["format"] = 1;
  header["config"] = ck.config.values();
  header["vocab"] = ordered_json::parse(ck.vocab.to_json());
  header["epoch"] = ck.epoch;
  header["best_valid_cer"] = ck.best_valid_cer;
  header["optimizer_steps"] = ck.optimizer_steps;
  ordered_json tensors = ordered_json::array();
  for (const auto& [name, m] : ck.tensors) {
    const auto t = ck.trainable.find(name);
    tensors.push_back({{"name", name},
                       {"rows", m.rows()},
                       {"cols", m.cols()},
                       {"trainable", t == ck.trainable.end() || t->second}});
  }
  header["tensors"] = std::move(tensors);
  ordered_json moments = ordered_json::array();
  for (const auto& [name, mo] : ck.moments) {
    moments.push_back({{"name", name}, {"rows", mo.first.rows()}, {"cols", mo.first.cols()}});
  }
  header["moments"] = std::move(moments);
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::IoError, "cannot write checkpoint " + path.string());
    out.write(kMagic, kMagicSize);
    const std::uint64_t size = text.size();
    out.write(reinterpret_cast<const char*>(&size), sizeof(size));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, m] : ck.tensors) write_matrix(out, m);
    for (const auto& [name, mo] : ck.moments) {
      write_matrix(out, mo.first);
      write_matrix(out, mo.second);
    }
    require(static_cast<bool>(out), ErrorCode::IoError, "failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open checkpoint " + path.string());
  char magic[kMagicSize];
  in.read(magic, kMagicSize);
  require(static_cast<bool>(in) && std::memcmp(magic, kMagic, kMagicSize) == 0, ErrorCode::IoError,
          path.string() + " is not a checkpoint");
  std::uint64_t size = 0;
  in.read(reinterpret_cast<char*>(&size), sizeof(size));
  require(static_cast<bool>(in) && size < (1ull << 32), ErrorCode::IoError, "corrupt checkpoint header");
  std::string text(size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(size));
  require(static_cast<bool>(in), ErrorCode::IoError, "checkpoint truncated in header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::IoError, std::string("corrupt checkpoint header: ") + e.what());
  }
  Checkpoint ck;
  try {
    ck.config = Config::defaults();
    for (const auto& [k, v] : header.at("config").items()) ck.config.set(k, v.get<std::string>());
    ck.vocab = Vocabulary::from_json(header.at("vocab").dump());
    ck.epoch = header.at("epoch").get<int>();
    ck.best_valid_cer = header.at("best_valid_cer").get<double>();
    ck.optimizer_steps = header.at("optimizer_steps").get<long long>();
    for (const auto& t : header.at("tensors")) {
      const std::string name = t.at("name").get<std::string>();
      ck.tensors[name] = read_matrix(in, t.at("rows").get<Eigen::Index>(), t.at("cols").get<Eigen::Index>(), name);
      ck.trainable[name] = t.at("trainable").get<bool>();
    }
    for (const auto& t : header.at("moments")) {
      const std::string name = t.at("name").get<std::string>();
      const auto rows = t.at("rows").get<Eigen::Index>();
      const auto cols = t.at("cols").get<Eigen::Index>();
      Adam::Moments mo;
      mo.first = read_matrix(in, rows, cols, name);
      mo.second = read_matrix(in, rows, cols, name);
      ck.moments[name] = std::move(mo);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::IoError, std::string("corrupt checkpoint header: ") + e.what());
  }
  return ck;
}

RestoreReport restore_parameters(const Checkpoint& ck, ad::ParameterStore& store, bool strict,
                                 const std::string& prefix) {
  RestoreReport report;
  for (ad::Parameter* p : store.all()) {
    if (p->name.rfind(prefix, 0) != 0) continue;
    const auto it = ck.tensors.find(p->name);
    if (it == ck.tensors.end()) {
      require(!strict, ErrorCode::DimensionMismatch, "checkpoint lacks parameter " + p->name);
      ++report.missing;
      continue;
    }
    const ad::Matrix& src = it->second;
    if (src.rows() == p->value.rows() && src.cols() == p->value.cols()) {
      p->value = src;
      ++report.restored;
      continue;
    }
    require(!strict, ErrorCode::DimensionMismatch,
            "parameter " + p->name + " has shape " + std::to_string(p->value.rows()) + "x" +
                std::to_string(p->value.cols()) + " but the checkpoint holds " + std::to_string(src.rows()) + "x" +
                std::to_string(src.cols()));
    const Eigen::Index r = std::min(src.rows(), p->value.rows());
    const Eigen::Index c = std::min(src.cols(), p->value.cols());
    p->value.topLeftCorner(r, c) = src.topLeftCorner(r, c);
    ++report.partial;
    log::info("partially restored " + p->name);
  }
  return report;
}

}  // namespace attnhtr
