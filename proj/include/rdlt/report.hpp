#pragma once

#include "rdlt/dataset.hpp"
#include "rdlt/evaluation.hpp"
#include "rdlt/transforms.hpp"

#include <span>
#include <string>

namespace rdlt {

/// Rate (bpp) against PSNR (dB) on linear axes; one polyline and legend entry per curve.
/// `metadata` is embedded verbatim (XML-escaped) when non-empty.
std::string render_rd_svg(std::span<const RDCurve> curves, const std::string& metadata = {});

/// Basis vectors as n x n tiles on an n x n grid, separated by 1-px white lines. Tile
/// (r, c) shows column r*n + c of the dense matrix, each stretched to [0, 255]; constant
/// tiles are mid gray.
LumaPlane basis_mosaic(const TransformMatrix& t);

} // namespace rdlt
