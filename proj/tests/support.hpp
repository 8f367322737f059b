#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "gmct/grammar.hpp"

namespace gmct::test {

inline std::filesystem::path grammar_path(const std::string& name) {
  return std::filesystem::path(GMCT_TEST_GRAMMAR_DIR) / (name + ".cfg");
}

inline const Grammar& grammar(const std::string& name) {
  static const Grammar a = Grammar::load(grammar_path("A"));
  static const Grammar b = Grammar::load(grammar_path("B"));
  static const Grammar c = Grammar::load(grammar_path("C"));
  static const Grammar tiny = Grammar::load(grammar_path("tiny"));
  static const Grammar toy = Grammar::load(grammar_path("toy"));
  if (name == "A") return a;
  if (name == "B") return b;
  if (name == "C") return c;
  if (name == "tiny") return tiny;
  return toy;
}

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("gmct-" + tag + "-" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace gmct::test
