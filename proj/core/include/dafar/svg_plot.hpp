#pragma once

#include <string>

#include "dafar/experiments.hpp"

namespace dafar {

// static line/bar chart for a CurveResult; pure string in, string out
std::string curve_svg(const CurveResult& r, int width = 720, int height = 480);

}  // namespace dafar
