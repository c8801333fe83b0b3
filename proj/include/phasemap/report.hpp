#pragma once

// Plain SVG figures for a solved phase map: per-phase concentration maps
// with the demixed pattern, and a reconstruction-loss heatmap.

#include "phasemap/domain.hpp"
#include "phasemap/eval.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace phasemap {

// Two panels: ternary scatter of the phase (marker area ~ activation,
// colour ~ shift ratio) and its demixed pattern with prototype sticks when
// a library is given.
std::string phase_svg(const Solution& sol, std::span<const Composition> points, std::size_t phase,
                      const PrototypeLibrary* lib = nullptr);

// Ternary scatter coloured by per-point reconstruction loss.
std::string loss_heatmap_svg(const Solution& sol, std::span<const Composition> points);

struct ReportOutput {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> warnings;
};

// Writes phase_<id>.svg for each active phase and loss_heatmap.svg.
ReportOutput write_report(const Solution& sol, std::span<const Composition> points, const PrototypeLibrary* lib,
                          const std::filesystem::path& out_dir);

}  // namespace phasemap
