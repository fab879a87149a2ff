#pragma once

#include "morphogen/dataset.hpp"
#include "morphogen/error.hpp"
#include "morphogen/image.hpp"
#include "morphogen/network.hpp"
#include "morphogen/random.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace testing {

inline std::filesystem::path mnist_dir() { return MORPHOGEN_TEST_MNIST_DIR; }

inline bool have_mnist() {
    return std::filesystem::exists(mnist_dir() / "train-images-idx3-ubyte") &&
           std::filesystem::exists(mnist_dir() / "train-labels-idx1-ubyte");
}

inline morphogen::Image random_image(int rows, int cols, std::uint64_t seed) {
    morphogen::Rng rng(seed);
    morphogen::Image img(rows, cols);
    for (double& v : img.pixels) v = rng.uniform();
    return img;
}

inline morphogen::ArchConfig small_arch(int side = 12) {
    morphogen::ArchConfig arch;
    arch.input_rows = side;
    arch.input_cols = side;
    arch.coder_layers = {{4, 3, 1}, {8, 3, 1}, {8, 3, 1}};
    arch.decoder_filter_size = 5;
    return arch;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("morphogen-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace testing

#define CHECK_ERROR_CODE(expr, expected)                                          \
    do {                                                                          \
        bool thrown_ = false;                                                     \
        try {                                                                     \
            (void)(expr);                                                         \
        } catch (const morphogen::Error& e_) {                                    \
            thrown_ = true;                                                       \
            CHECK_MESSAGE(e_.code() == (expected), e_.what());                    \
        }                                                                         \
        CHECK_MESSAGE(thrown_, "expected " #expected " from " #expr);             \
    } while (0)
