//! Outer-boundary tracing on the pixel-corner lattice, and the inverse
//! operation: filling polygon rings back onto a pixel grid.
//!
//! Pixel `(col, row)` covers the unit square `[col, col+1] x [row, row+1]`
//! with y pointing down. Components are 4-connected. Rings run down the left
//! side of their first pixel (counterclockwise as displayed), keep the region
//! on their left, and contain only the corners where direction changes.

use std::collections::VecDeque;

/// Closed ring of lattice vertices `(x, y)`; the closing edge is implicit.
pub type Ring = Vec<(u32, u32)>;

// Headings in y-down coordinates.
const SOUTH: (i64, i64) = (0, 1);

fn left_of((dx, dy): (i64, i64)) -> (i64, i64) {
    (dy, -dx)
}

fn right_of(d: (i64, i64)) -> (i64, i64) {
    let (lx, ly) = left_of(d);
    (-lx, -ly)
}

/// Dense membership grid around a pixel set, padded by one pixel on every side.
struct Grid {
    x0: i64,
    y0: i64,
    w: i64,
    h: i64,
    cells: Vec<u32>,
}

impl Grid {
    fn at(&self, col: i64, row: i64) -> u32 {
        let (x, y) = (col - self.x0, row - self.y0);
        if x < 0 || y < 0 || x >= self.w || y >= self.h {
            0
        } else {
            self.cells[(y * self.w + x) as usize]
        }
    }
}

/// Traces one outer ring per 4-connected component of `pixels` (`(col, row)`).
/// Components are ordered by their first pixel in row-major order. Holes are
/// not represented.
pub fn trace_outer_boundaries(pixels: &[(u32, u32)]) -> Vec<Ring> {
    if pixels.is_empty() {
        return Vec::new();
    }
    let min_c = pixels.iter().map(|p| p.0).min().unwrap() as i64;
    let max_c = pixels.iter().map(|p| p.0).max().unwrap() as i64;
    let min_r = pixels.iter().map(|p| p.1).min().unwrap() as i64;
    let max_r = pixels.iter().map(|p| p.1).max().unwrap() as i64;
    let mut grid = Grid {
        x0: min_c - 1,
        y0: min_r - 1,
        w: max_c - min_c + 3,
        h: max_r - min_r + 3,
        cells: Vec::new(),
    };
    grid.cells = vec![0; (grid.w * grid.h) as usize];
    const MEMBER: u32 = u32::MAX;
    for &(c, r) in pixels {
        let idx = ((r as i64 - grid.y0) * grid.w + (c as i64 - grid.x0)) as usize;
        grid.cells[idx] = MEMBER;
    }

    // Label components with ids 1.. in row-major order of their first pixel.
    let mut starts = Vec::new();
    let mut next_id = 1u32;
    let mut queue = VecDeque::new();
    for idx in 0..grid.cells.len() {
        if grid.cells[idx] != MEMBER {
            continue;
        }
        let id = next_id;
        next_id += 1;
        grid.cells[idx] = id;
        starts.push((
            idx as i64 % grid.w + grid.x0,
            idx as i64 / grid.w + grid.y0,
            id,
        ));
        queue.push_back(idx as i64);
        while let Some(i) = queue.pop_front() {
            for n in [i - 1, i + 1, i - grid.w, i + grid.w] {
                // Padding guarantees in-range neighbours for member cells.
                if grid.cells[n as usize] == MEMBER {
                    grid.cells[n as usize] = id;
                    queue.push_back(n);
                }
            }
        }
    }

    starts
        .into_iter()
        .map(|(c, r, id)| trace_component(&grid, c, r, id))
        .collect()
}

fn trace_component(grid: &Grid, start_c: i64, start_r: i64, id: u32) -> Ring {
    let inside = |c: i64, r: i64| grid.at(c, r) == id;
    // The edge leaving vertex (x, y) with heading d is a boundary edge with the
    // region on its left when the left pixel is inside and the right one is not.
    let edge_ok = |x: i64, y: i64, d: (i64, i64)| {
        let (left, right) = match d {
            (0, 1) => ((x, y), (x - 1, y)),
            (1, 0) => ((x, y - 1), (x, y)),
            (0, -1) => ((x - 1, y - 1), (x, y - 1)),
            _ => ((x - 1, y), (x - 1, y - 1)),
        };
        inside(left.0, left.1) && !inside(right.0, right.1)
    };

    let start = (start_c, start_r);
    let mut ring = vec![(start_c as u32, start_r as u32)];
    let (mut x, mut y) = start;
    let mut dir = SOUTH;
    loop {
        x += dir.0;
        y += dir.1;
        if (x, y) == start {
            break;
        }
        // Left turns first keep diagonal neighbours apart (4-connectivity).
        let next = [left_of(dir), dir, right_of(dir)]
            .into_iter()
            .find(|&d| edge_ok(x, y, d))
            .expect("boundary of a finite pixel set is closed");
        if next != dir {
            ring.push((x as u32, y as u32));
            dir = next;
        }
    }
    ring
}

/// Axis-aligned bounds of a set of rings as `(x, y, width, height)`.
pub fn rings_bbox(rings: &[Ring]) -> Option<(u32, u32, u32, u32)> {
    let mut it = rings.iter().flatten();
    let &(x, y) = it.next()?;
    let (mut x0, mut y0, mut x1, mut y1) = (x, y, x, y);
    for &(x, y) in it {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    Some((x0, y0, x1 - x0, y1 - y0))
}

/// Fills polygon rings (flattened or paired coordinates) onto a `width x height`
/// grid by sampling pixel centres with the even-odd rule per ring; multiple rings
/// are unioned. Returns a row-major membership mask.
pub fn rasterize_rings(rings: &[Vec<(f64, f64)>], width: u32, height: u32) -> Vec<bool> {
    let (w, h) = (width as usize, height as usize);
    let mut mask = vec![false; w * h];
    let mut xs = Vec::new();
    for ring in rings.iter().filter(|r| r.len() >= 3) {
        let ymin = ring.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let ymax = ring.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let row_lo = ((ymin - 0.5).ceil().max(0.0)) as usize;
        let row_hi = ((ymax - 0.5).floor().min(h as f64 - 1.0)).max(-1.0);
        if row_hi < 0.0 {
            continue;
        }
        for row in row_lo..=row_hi as usize {
            let yc = row as f64 + 0.5;
            xs.clear();
            for i in 0..ring.len() {
                let (x0, y0) = ring[i];
                let (x1, y1) = ring[(i + 1) % ring.len()];
                if (y0 > yc) != (y1 > yc) {
                    xs.push(x0 + (yc - y0) * (x1 - x0) / (y1 - y0));
                }
            }
            xs.sort_by(f64::total_cmp);
            for span in xs.chunks_exact(2) {
                // Pixel centres col + 0.5 in [span[0], span[1]).
                let c0 = (span[0] - 0.5).ceil().max(0.0) as usize;
                let c1 = ((span[1] - 0.5).ceil().min(w as f64)).max(0.0) as usize;
                for col in c0..c1 {
                    mask[row * w + col] = true;
                }
            }
        }
    }
    mask
}

/// Splits a COCO flattened `[x1, y1, x2, y2, ...]` list into coordinate pairs.
pub fn unflatten(flat: &[f64]) -> Vec<(f64, f64)> {
    flat.chunks_exact(2).map(|p| (p[0], p[1])).collect()
}

pub fn ring_to_f64(ring: &Ring) -> Vec<(f64, f64)> {
    ring.iter().map(|&(x, y)| (x as f64, y as f64)).collect()
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, BTreeSet};

    use super::*;

    #[test]
    fn single_pixel() {
        assert_eq!(
            trace_outer_boundaries(&[(5, 7)]),
            vec![vec![(5, 7), (5, 8), (6, 8), (6, 7)]]
        );
    }

    #[test]
    fn two_by_two_block_merges_collinear() {
        let px = [(0, 0), (1, 0), (0, 1), (1, 1)];
        assert_eq!(
            trace_outer_boundaries(&px),
            vec![vec![(0, 0), (0, 2), (2, 2), (2, 0)]]
        );
    }

    /// Chains the unit boundary edges of a pixel set by brute force and keeps the
    /// corners; independent of the turn-rule walker above.
    fn brute_force_corners(pixels: &[(u32, u32)]) -> BTreeSet<(u32, u32)> {
        let set: BTreeSet<(i64, i64)> = pixels.iter().map(|&(c, r)| (c as i64, r as i64)).collect();
        // Undirected boundary edges between lattice points.
        let mut edges: BTreeMap<(i64, i64), Vec<(i64, i64)>> = BTreeMap::new();
        let mut add = |a: (i64, i64), b: (i64, i64)| {
            edges.entry(a).or_default().push(b);
            edges.entry(b).or_default().push(a);
        };
        for &(c, r) in &set {
            if !set.contains(&(c, r - 1)) {
                add((c, r), (c + 1, r));
            }
            if !set.contains(&(c, r + 1)) {
                add((c, r + 1), (c + 1, r + 1));
            }
            if !set.contains(&(c - 1, r)) {
                add((c, r), (c, r + 1));
            }
            if !set.contains(&(c + 1, r)) {
                add((c + 1, r), (c + 1, r + 1));
            }
        }
        edges
            .iter()
            .filter(|(v, ns)| {
                // A corner has a horizontal and a vertical edge meeting.
                ns.iter().any(|n| n.1 == v.1) && ns.iter().any(|n| n.0 == v.0)
            })
            .map(|(v, _)| (v.0 as u32, v.1 as u32))
            .collect()
    }

    #[test]
    fn l_tromino_has_six_vertices() {
        let px = [(0, 0), (1, 0), (1, 1)];
        let rings = trace_outer_boundaries(&px);
        assert_eq!(rings.len(), 1);
        assert_eq!(rings[0].len(), 6);
        let got: BTreeSet<_> = rings[0].iter().copied().collect();
        assert_eq!(got, brute_force_corners(&px));
        assert_eq!(
            rings[0],
            vec![(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 0)]
        );
    }

    #[test]
    fn diagonal_pixels_are_separate_components() {
        let rings = trace_outer_boundaries(&[(0, 0), (1, 1)]);
        assert_eq!(rings.len(), 2);
        assert!(rings.iter().all(|r| r.len() == 4));
    }

    #[test]
    fn hole_is_dropped_and_fill_covers_it() {
        let mut px = Vec::new();
        for r in 0..3 {
            for c in 0..3 {
                if (c, r) != (1, 1) {
                    px.push((c, r));
                }
            }
        }
        let rings = trace_outer_boundaries(&px);
        assert_eq!(rings, vec![vec![(0, 0), (0, 3), (3, 3), (3, 0)]]);
        let mask = rasterize_rings(&[ring_to_f64(&rings[0])], 4, 4);
        assert_eq!(mask.iter().filter(|&&m| m).count(), 9);
    }

    #[test]
    fn pinched_component_keeps_single_ring() {
        // U shape closed by a diagonal contact: 4-connected, touches itself at a vertex.
        let px = [(0, 0), (0, 1), (0, 2), (1, 2), (2, 2), (2, 1), (1, 0)];
        let rings = trace_outer_boundaries(&px);
        assert_eq!(rings.len(), 1);
        let filled = rasterize_rings(&[ring_to_f64(&rings[0])], 3, 3);
        let expect: BTreeSet<usize> = px.iter().map(|&(c, r)| (r * 3 + c) as usize).collect();
        let got: BTreeSet<usize> = (0..9).filter(|&i| filled[i]).collect();
        // Pixel (1, 1) escapes through the diagonal gap, so nothing is filled in.
        assert_eq!(got, expect);
    }

    #[test]
    fn bbox_of_rings() {
        let rings = trace_outer_boundaries(&[(2, 3), (4, 3)]);
        assert_eq!(rings_bbox(&rings), Some((2, 3, 3, 1)));
    }

    #[test]
    fn rasterize_clips_to_canvas() {
        let ring = vec![(-1.0, -1.0), (-1.0, 2.0), (2.0, 2.0), (2.0, -1.0)];
        let m = rasterize_rings(&[ring], 3, 3);
        assert_eq!(
            m,
            vec![true, true, false, true, true, false, false, false, false]
        );
    }

    proptest::proptest! {
        #[test]
        fn fill_of_traced_rings_matches_hole_free_pixels(
            cells in proptest::collection::btree_set((0u32..10, 0u32..10), 1..40)
        ) {
            let px: Vec<(u32, u32)> = cells.iter().map(|&(r, c)| (c, r)).collect();
            let rings = trace_outer_boundaries(&px);
            let filled = rasterize_rings(
                &rings.iter().map(ring_to_f64).collect::<Vec<_>>(), 10, 10);
            let truth: BTreeSet<usize> =
                px.iter().map(|&(c, r)| (r * 10 + c) as usize).collect();
            let got: BTreeSet<usize> = (0..100).filter(|&i| filled[i]).collect();
            // Filled set is a superset; the excess is exactly the enclosed holes.
            proptest::prop_assert!(truth.is_subset(&got));
            let holes = enclosed_background(&truth, 10);
            let excess: BTreeSet<usize> = got.difference(&truth).copied().collect();
            proptest::prop_assert_eq!(excess, holes);
            for r in &rings {
                proptest::prop_assert!(r.len() >= 4);
            }
        }
    }

    /// Background pixels not 8-reachable from outside the 10x10 canvas.
    fn enclosed_background(fg: &BTreeSet<usize>, n: usize) -> BTreeSet<usize> {
        let idx = |c: i64, r: i64| (r * n as i64 + c) as usize;
        let mut outside = BTreeSet::new();
        let mut stack: Vec<(i64, i64)> = Vec::new();
        for k in 0..n as i64 {
            stack.extend([(k, 0), (k, n as i64 - 1), (0, k), (n as i64 - 1, k)]);
        }
        while let Some((c, r)) = stack.pop() {
            if c < 0 || r < 0 || c >= n as i64 || r >= n as i64 {
                continue;
            }
            let i = idx(c, r);
            if fg.contains(&i) || !outside.insert(i) {
                continue;
            }
            // Background is 8-connected when the foreground is 4-connected.
            for (dc, dr) in [
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ] {
                stack.push((c + dc, r + dr));
            }
        }
        (0..n * n)
            .filter(|i| !fg.contains(i) && !outside.contains(i))
            .collect()
    }
}
