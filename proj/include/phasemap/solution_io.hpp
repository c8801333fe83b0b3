#pragma once

// Sectioned text serialization of a Solution. Numbers are written in
// shortest round-trip form, so parse(format(s)) reproduces s exactly and
// equal solutions give byte-identical files.
//
//   # phasemap solution v1
//   [meta]         phases, points, q_min, q_max, d, cutoff
//   [phases]       one phase id per line
//   [activations]  one row of m activations per point (post-cutoff)
//   [alpha]        one row of m shift ratios per point
//   [sigma]        one row of m peak widths per point
//   [demixed]      "phase_id,v_0,...,v_{D-1}" or a bare phase id
//   [fields]       "phase ids joined by '+' ; point indices separated by spaces"
//   [points]       "index,reconstruction_loss,phase_cap" (blank cells when unknown)
//   [rules]        informational rates; recomputed by readers

#include "phasemap/eval.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace phasemap {

std::string format_solution(const Solution& sol, double cutoff = kActivationCutoff,
                            const std::optional<RuleReport>& rules = std::nullopt);
Solution parse_solution(std::istream& in);
Solution load_solution(const std::filesystem::path& path);

}  // namespace phasemap
