#pragma once

// Shared fixtures for the test binaries.

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "gruscope/corpus.hpp"
#include "gruscope/model.hpp"
#include "gruscope/random.hpp"
#include "gruscope/textio.hpp"

namespace testsupport {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("gruscope-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

// "form/POS/deprel" triples.
inline gruscope::AnnotatedSentence sentence(const std::string& id,
                                            const std::vector<std::string>& tokens) {
  std::vector<gruscope::TokenFields> fields;
  for (const auto& t : tokens) {
    const auto a = t.find('/');
    const auto b = t.find('/', a + 1);
    fields.push_back({t.substr(0, a), t.substr(a + 1, b - a - 1), t.substr(b + 1)});
  }
  return gruscope::make_sentence(id, fields);
}

inline gruscope::ModelDims small_dims(std::size_t vocab = 20, std::size_t e = 8,
                                      std::size_t d = 8, std::size_t image = 6) {
  gruscope::ModelDims dims;
  dims.vocab = vocab;
  dims.embedding = e;
  dims.hidden = d;
  dims.image = image;
  return dims;
}

inline std::vector<double> random_vector(gruscope::Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * gruscope::standard_normal(rng);
  return v;
}

inline std::string slurp(const fs::path& p) { return gruscope::read_file(p); }

}  // namespace testsupport
