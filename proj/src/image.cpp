#include "morphogen/image.hpp"

#include <algorithm>
#include <cmath>

namespace morphogen {

Image clamp_unit(Image image) {
    for (double& p : image.pixels) p = std::clamp(p, 0.0, 1.0);
    return image;
}

bool all_finite(const Image& image) {
    return std::all_of(image.pixels.begin(), image.pixels.end(), [](double p) { return std::isfinite(p); });
}

} // namespace morphogen
