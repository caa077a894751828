#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ovgsr/errors.hpp"
#include "ovgsr/tape.hpp"

// Learnable prompt plumbing around a frozen h x w teacher token grid.
//
// Scene prompts: one learnable cell per boundary-frame position of the
// teacher grid, 2p(h+w-2p) cells in total. Attaching them grows the
// grid to (h+2p) x (w+2p): interior positions carry the teacher tokens
// untouched, border positions read the prompt cell of the teacher
// boundary cell they sit over (the p-thick corners replicate their
// nearest cell, which is where the 8p^2 gap between border positions
// and prompt cells goes).
//
// Instance prompts: a gh x gw learnable grid per role slot, added onto
// token patches sampled from a box.
namespace ovgsr {

inline void check_scene_geometry(int h, int w, int p) {
  if (p < 1) throw InvalidConfig("scene prompt: border width must be >= 1");
  if (h <= 2 * p || w <= 2 * p)
    throw InvalidConfig("scene prompt: grid must satisfy h > 2p and w > 2p");
}

// Parameter count per channel of the scene prompt.
inline int scene_prompt_cells(int h, int w, int p) {
  check_scene_geometry(h, w, p);
  return 2 * p * (h + w - 2 * p);
}

// Boundary-frame cells of an h x w grid in row-major order. This is the
// storage layout of the scene prompt: prompt row k holds the cell at
// the k-th position of this list.
inline std::vector<std::pair<int, int>> scene_border_cells(int h, int w, int p) {
  check_scene_geometry(h, w, p);
  std::vector<std::pair<int, int>> cells;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      if (i < p || i >= h - p || j < p || j >= w - p) cells.emplace_back(i, j);
  return cells;
}

namespace detail {

// Maps an augmented-grid coordinate to the teacher-grid coordinate it
// overlays: the p outer layers fold onto the matching boundary layers.
inline int band_coord(int i, int p, int n) {
  if (i < p) return i;
  if (i >= n + p) return i - 2 * p;
  return i - p;
}

}  // namespace detail

// Source row for every augmented-grid position, over the row space
// [teacher tokens (h*w) | prompt cells (scene_prompt_cells)].
inline std::vector<std::int64_t> scene_attach_map(int h, int w, int p) {
  const auto cells = scene_border_cells(h, w, p);
  // cell -> prompt row
  std::vector<int> cell_index(static_cast<std::size_t>(h * w), -1);
  for (std::size_t k = 0; k < cells.size(); ++k)
    cell_index[static_cast<std::size_t>(cells[k].first * w + cells[k].second)] =
        static_cast<int>(k);

  const int ah = h + 2 * p, aw = w + 2 * p;
  std::vector<std::int64_t> map(static_cast<std::size_t>(ah * aw));
  for (int i = 0; i < ah; ++i) {
    for (int j = 0; j < aw; ++j) {
      const bool interior = i >= p && i < h + p && j >= p && j < w + p;
      if (interior) {
        map[static_cast<std::size_t>(i * aw + j)] =
            static_cast<std::int64_t>(i - p) * w + (j - p);
      } else {
        const int ci = detail::band_coord(i, p, h);
        const int cj = detail::band_coord(j, p, w);
        const int cell = cell_index[static_cast<std::size_t>(ci * w + cj)];
        map[static_cast<std::size_t>(i * aw + j)] =
            static_cast<std::int64_t>(h) * w + cell;
      }
    }
  }
  return map;
}

// Positions of the teacher tokens inside the augmented grid, row-major;
// gathering these rows back recovers the teacher map exactly.
inline std::vector<std::int64_t> scene_interior_map(int h, int w, int p) {
  check_scene_geometry(h, w, p);
  const int aw = w + 2 * p;
  std::vector<std::int64_t> map;
  map.reserve(static_cast<std::size_t>(h * w));
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      map.push_back(static_cast<std::int64_t>(i + p) * aw + (j + p));
  return map;
}

// teacher_tokens [h*w, d] + prompt_cells [2p(h+w-2p), d]
//   -> [(h+2p)(w+2p), d]
template <typename T>
Var<T> attach_scene_prompt(Var<T> teacher_tokens, Var<T> prompt_cells, int h, int w,
                           int p) {
  Tape<T>& t = *teacher_tokens.tape;
  const Tensor<T> tok = t.val(teacher_tokens);
  const Tensor<T> pc = t.val(prompt_cells);
  if (tok.rows() != static_cast<std::int64_t>(h) * w)
    throw ShapeMismatch("attach_scene_prompt: token count != h*w");
  if (pc.rows() != scene_prompt_cells(h, w, p))
    throw ShapeMismatch("attach_scene_prompt: prompt cell count mismatch");
  Var<T> combined = concat_rows<T>({teacher_tokens, prompt_cells});
  return gather_rows(combined, scene_attach_map(h, w, p));
}

// Flat-addition variant: the same prompt cells are added elementwise
// onto the teacher's own boundary tokens, leaving the grid h x w.
template <typename T>
Var<T> add_border_prompt(Var<T> teacher_tokens, Var<T> prompt_cells, int h, int w,
                         int p) {
  Tape<T>& t = *teacher_tokens.tape;
  if (t.val(prompt_cells).rows() != scene_prompt_cells(h, w, p))
    throw ShapeMismatch("add_border_prompt: prompt cell count mismatch");
  const auto cells = scene_border_cells(h, w, p);
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  std::vector<std::vector<std::pair<std::int64_t, T>>> rows(
      static_cast<std::size_t>(hw));
  for (std::int64_t k = 0; k < hw; ++k) rows[static_cast<std::size_t>(k)] = {{k, T(1)}};
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const std::int64_t pos = static_cast<std::int64_t>(cells[c].first) * w + cells[c].second;
    rows[static_cast<std::size_t>(pos)].emplace_back(hw + static_cast<std::int64_t>(c), T(1));
  }
  Var<T> combined = concat_rows<T>({teacher_tokens, prompt_cells});
  return weighted_gather_rows(combined, std::move(rows));
}

// Box in [0,1]^2 normalized image coordinates.
struct NormBox {
  double x1 = 0, y1 = 0, x2 = 1, y2 = 1;
};

// Bilinear taps for a gh x gw sample lattice spread over `box` on an
// h x w token grid. Samples sit at patch centers; degenerate extents
// collapse to point sampling after clamping.
template <typename T>
std::vector<std::vector<std::pair<std::int64_t, T>>> box_grid_taps(
    int h, int w, const NormBox& box, int gh, int gw) {
  if (gh < 1 || gw < 1) throw InvalidConfig("box grid: size must be >= 1");
  const double x1 = std::min(std::max(box.x1, 0.0), 1.0);
  const double y1 = std::min(std::max(box.y1, 0.0), 1.0);
  const double x2 = std::min(std::max(box.x2, x1), 1.0);
  const double y2 = std::min(std::max(box.y2, y1), 1.0);

  std::vector<std::vector<std::pair<std::int64_t, T>>> taps;
  taps.reserve(static_cast<std::size_t>(gh * gw));
  for (int gy = 0; gy < gh; ++gy) {
    const double ny = y1 + (y2 - y1) * ((gy + 0.5) / gh);
    double fy = ny * h - 0.5;
    fy = std::min(std::max(fy, 0.0), static_cast<double>(h - 1));
    const int y0 = static_cast<int>(fy);
    const int yy1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int gx = 0; gx < gw; ++gx) {
      const double nx = x1 + (x2 - x1) * ((gx + 0.5) / gw);
      double fx = nx * w - 0.5;
      fx = std::min(std::max(fx, 0.0), static_cast<double>(w - 1));
      const int x0 = static_cast<int>(fx);
      const int xx1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;

      std::vector<std::pair<std::int64_t, T>> row;
      auto push = [&](int y, int x, double weight) {
        if (weight <= 0.0) return;
        row.emplace_back(static_cast<std::int64_t>(y) * w + x, static_cast<T>(weight));
      };
      push(y0, x0, (1 - wy) * (1 - wx));
      push(y0, xx1, (1 - wy) * wx);
      push(yy1, x0, wy * (1 - wx));
      push(yy1, xx1, wy * wx);
      taps.push_back(std::move(row));
    }
  }
  return taps;
}

// tokens [h*w, d] -> [gh*gw, d] patch grid for one box.
template <typename T>
Var<T> extract_box_grid(Var<T> tokens, int h, int w, const NormBox& box, int gh,
                        int gw) {
  return weighted_gather_rows(tokens, box_grid_taps<T>(h, w, box, gh, gw));
}

}  // namespace ovgsr
