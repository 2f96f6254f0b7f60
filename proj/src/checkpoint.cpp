#include <bit>
#include <map>
#include <sstream>

#include "gruscope/textio.hpp"
#include "gruscope/trainer.hpp"

namespace gruscope {

namespace {

constexpr const char* kManifest = "manifest.txt";
constexpr const char* kBlob = "params.bin";
constexpr const char* kFormatName = "gruscope-checkpoint";

void put_f32(std::string& out, double value) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(value));
  for (int shift = 0; shift < 32; shift += 8) {
    out.push_back(static_cast<char>((bits >> shift) & 0xffu));
  }
}

double get_f32(std::string_view blob, std::size_t offset) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) {
    bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(blob[offset + b])) << (8 * b);
  }
  return static_cast<double>(std::bit_cast<float>(bits));
}

std::string need(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw DataError("checkpoint manifest lacks '" + key + "'");
  return it->second;
}

std::size_t need_size(const std::map<std::string, std::string>& kv, const std::string& key) {
  std::size_t v = 0;
  if (!parse_size(need(kv, key), v)) throw DataError("checkpoint manifest: bad " + key);
  return v;
}

double need_double(const std::map<std::string, std::string>& kv, const std::string& key) {
  double v = 0;
  if (!parse_double(need(kv, key), v)) throw DataError("checkpoint manifest: bad " + key);
  return v;
}

struct TensorEntry {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ImaginetParams& params,
                     const TrainConfig& config, const Vocabulary& vocabulary) {
  params.validate();
  if (vocabulary.size() != params.vocab_size()) {
    throw ShapeError("vocabulary size differs from the embedding table");
  }
  std::filesystem::create_directories(dir);

  std::ostringstream m;
  m << "format\t" << kFormatName << '\n';
  m << "version\t" << kCheckpointVersion << '\n';
  m << "config.seed\t" << config.seed << '\n';
  m << "config.hidden\t" << config.hidden << '\n';
  m << "config.embedding\t" << config.embedding << '\n';
  m << "config.alpha\t" << format_double(config.alpha) << '\n';
  m << "config.learning_rate\t" << format_double(config.learning_rate) << '\n';
  m << "config.batch_size\t" << config.batch_size << '\n';
  m << "config.epochs\t" << config.epochs << '\n';
  m << "config.clip\t" << format_double(config.clip) << '\n';
  m << "config.min_count\t" << config.min_count << '\n';
  m << "config.visual_encoder\t" << to_string(config.visual_encoder) << '\n';
  m << "alpha\t" << format_double(params.alpha) << '\n';
  m << "visual_encoder\t" << to_string(params.visual_encoder) << '\n';
  m << "vocab.size\t" << vocabulary.size() << '\n';
  for (const auto& form : vocabulary.forms()) m << "vocab\t" << form << '\n';

  std::string blob;
  for (const auto& t : params.named()) {
    m << "tensor\t" << t.name << '\t' << t.tensor->rows() << '\t' << t.tensor->cols() << '\t'
      << blob.size() << '\n';
    for (double v : t.tensor->data()) put_f32(blob, v);
  }
  m << "blob.bytes\t" << blob.size() << '\n';

  write_file(dir / kBlob, blob);
  write_file(dir / kManifest, m.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const std::string manifest = read_file(dir / kManifest);
  const std::string blob = read_file(dir / kBlob);

  std::map<std::string, std::string> kv;
  std::vector<std::string> forms;
  std::vector<TensorEntry> tensors;
  std::size_t line_no = 0;
  std::istringstream in(manifest);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError("checkpoint manifest line " + std::to_string(line_no) + ": no tab");
    }
    const std::string key = line.substr(0, tab);
    const std::string value = line.substr(tab + 1);
    if (key == "vocab") {
      forms.push_back(value);
    } else if (key == "tensor") {
      const auto f = split(value, '\t');
      TensorEntry e;
      if (f.size() != 4 || !parse_size(f[1], e.rows) || !parse_size(f[2], e.cols) ||
          !parse_size(f[3], e.offset)) {
        throw DataError("checkpoint manifest line " + std::to_string(line_no) +
                        ": malformed tensor entry");
      }
      e.name = std::string(f[0]);
      tensors.push_back(std::move(e));
    } else {
      kv[key] = value;
    }
  }

  if (need(kv, "format") != kFormatName) throw DataError("not a gruscope checkpoint");
  const std::string version = need(kv, "version");
  if (version != std::to_string(kCheckpointVersion)) {
    throw DataError("unsupported checkpoint version " + version + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }

  Checkpoint cp;
  TrainConfig& c = cp.config;
  std::size_t seed = 0;
  if (!parse_size(need(kv, "config.seed"), seed)) throw DataError("checkpoint manifest: bad seed");
  c.seed = seed;
  c.hidden = need_size(kv, "config.hidden");
  c.embedding = need_size(kv, "config.embedding");
  c.alpha = need_double(kv, "config.alpha");
  c.learning_rate = need_double(kv, "config.learning_rate");
  c.batch_size = need_size(kv, "config.batch_size");
  c.epochs = need_size(kv, "config.epochs");
  c.clip = need_double(kv, "config.clip");
  c.min_count = need_size(kv, "config.min_count");
  c.visual_encoder = parse_visual_encoder(need(kv, "config.visual_encoder"));

  if (forms.size() != need_size(kv, "vocab.size")) {
    throw DataError("checkpoint vocabulary has " + std::to_string(forms.size()) +
                    " entries, manifest declares " + need(kv, "vocab.size"));
  }
  cp.vocabulary = Vocabulary::from_forms(std::move(forms));

  ImaginetParams& p = cp.params;
  p.alpha = need_double(kv, "alpha");
  p.visual_encoder = parse_visual_encoder(need(kv, "visual_encoder"));
  auto named = p.named();
  if (named.size() != tensors.size()) throw DataError("checkpoint tensor list is incomplete");

  std::size_t expected_offset = 0;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const TensorEntry& e = tensors[i];
    if (e.name != named[i].name) {
      throw DataError("checkpoint tensor " + std::to_string(i) + " is '" + e.name +
                      "', expected '" + named[i].name + "'");
    }
    if (e.offset != expected_offset) {
      throw DataError("checkpoint tensor '" + e.name + "' has offset " + std::to_string(e.offset) +
                      ", expected " + std::to_string(expected_offset));
    }
    const std::size_t bytes = e.rows * e.cols * 4;
    if (e.offset + bytes > blob.size()) {
      throw DataError("checkpoint blob truncated: tensor '" + e.name + "' needs bytes " +
                      std::to_string(e.offset) + ".." + std::to_string(e.offset + bytes) +
                      " but the blob holds " + std::to_string(blob.size()));
    }
    Matrix t(e.rows, e.cols);
    auto data = t.data();
    for (std::size_t k = 0; k < data.size(); ++k) data[k] = get_f32(blob, e.offset + 4 * k);
    *named[i].tensor = std::move(t);
    expected_offset += bytes;
  }
  if (expected_offset != blob.size() || need_size(kv, "blob.bytes") != blob.size()) {
    throw DataError("checkpoint blob has " + std::to_string(blob.size()) +
                    " bytes, manifest describes " + std::to_string(expected_offset));
  }
  p.validate();
  if (cp.vocabulary.size() != p.vocab_size()) {
    throw DataError("checkpoint vocabulary does not match the embedding table");
  }
  return cp;
}

ImaginetParams round_to_float(const ImaginetParams& params) {
  ImaginetParams out = params;
  for (auto& t : out.named()) {
    for (double& v : t.tensor->data()) v = static_cast<double>(static_cast<float>(v));
  }
  return out;
}

}  // namespace gruscope
