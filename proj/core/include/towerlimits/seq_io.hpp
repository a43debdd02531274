#pragma once

#include <filesystem>
#include <iosfwd>

#include "towerlimits/seq_algebra.hpp"

namespace towerlimits {

// Columnar text format:
//   # gamma=<g> d=<d> nmin=<a> nmax=<b> side=<s>
//   one line per index n_min..n_max with the d*d entries in row-major order.
void write_seq(std::ostream& out, const WeightedSeq& seq);
WeightedSeq read_seq(std::istream& in);

void save_seq(const std::filesystem::path& path, const WeightedSeq& seq);
WeightedSeq load_seq(const std::filesystem::path& path);

}  // namespace towerlimits
