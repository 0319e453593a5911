#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use panoptic_core::geo::{
    encode_tiff, write_point_shapefile, write_world_file, BitDepth, GeoTransform, Raster, Role,
    TiffCompression, TiffLayout, TiffOptions,
};
use panoptic_core::pipeline::{JobConfig, PointFiles, RegistrySource};
use panoptic_core::registry::{Category, CategoryRegistry};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// The 14-class aerial registry: 1-3 stuff, 4-14 things, 0 void.
pub fn aerial_registry() -> CategoryRegistry {
    let names = [
        "Street",
        "Permeable Area",
        "Lake",
        "Swimming Pool",
        "Harbor",
        "Vehicle",
        "Boat",
        "Sports Court",
        "Soccer Field",
        "Commercial Building",
        "Residential Building",
        "Commercial Building Block",
        "House",
        "Small Construction",
    ];
    CategoryRegistry::new(
        0,
        names
            .iter()
            .enumerate()
            .map(|(i, n)| Category {
                label: i as u32 + 1,
                name: n.to_string(),
                isthing: i >= 3,
            })
            .collect(),
    )
    .unwrap()
}

/// Label rasters of a synthetic scene plus the ground-truth thing pixel sets.
#[derive(Debug, Clone)]
pub struct Scene {
    pub width: u32,
    pub height: u32,
    pub semantic: Vec<u16>,
    pub sequential: Vec<u16>,
    /// Sequential value -> (label, sorted row-major pixels).
    pub things: BTreeMap<u16, (u32, Vec<u32>)>,
}

impl Scene {
    pub fn semantic_raster(&self) -> Raster {
        Raster::new(
            self.width,
            self.height,
            1,
            BitDepth::Eight,
            self.semantic.clone(),
        )
        .unwrap()
    }

    pub fn sequential_raster(&self) -> Raster {
        Raster::new(
            self.width,
            self.height,
            1,
            BitDepth::Sixteen,
            self.sequential.clone(),
        )
        .unwrap()
    }

    /// RGB image whose colours follow the labels, with some noise.
    pub fn image_raster(&self, seed: u64) -> Raster {
        let mut r = rng(seed);
        let samples = self
            .semantic
            .iter()
            .flat_map(|&l| {
                let base = (l * 17) % 256;
                [base, (base + 80) % 256, (255 - base)].map(|v| (v + r.random_range(0..8)).min(255))
            })
            .collect();
        Raster::new(self.width, self.height, 3, BitDepth::Eight, samples).unwrap()
    }
}

fn paint_stuff(r: &mut StdRng, w: u32, h: u32, n_stuff: usize) -> Vec<u16> {
    let labels: Vec<u16> = {
        let mut all = vec![1u16, 2, 3];
        while all.len() > n_stuff.max(1) {
            let i = r.random_range(0..all.len());
            all.remove(i);
        }
        all
    };
    let seeds: Vec<(i64, i64, u16)> = (0..4)
        .map(|_| {
            (
                r.random_range(0..w as i64),
                r.random_range(0..h as i64),
                labels[r.random_range(0..labels.len())],
            )
        })
        .collect();
    let mut sem = vec![0u16; (w * h) as usize];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let nearest = seeds
                .iter()
                .min_by_key(|s| (s.0 - x).pow(2) + (s.1 - y).pow(2))
                .unwrap();
            sem[(y * w as i64 + x) as usize] = nearest.2;
        }
    }
    // A void patch.
    if r.random_bool(0.7) {
        let (pw, ph) = (
            r.random_range(1..=w.div_ceil(3)),
            r.random_range(1..=h.div_ceil(3)),
        );
        let (px, py) = (r.random_range(0..=w - pw), r.random_range(0..=h - ph));
        for y in py..py + ph {
            for x in px..px + pw {
                sem[(y * w + x) as usize] = 0;
            }
        }
    }
    sem
}

/// Background pixels inside the blob's padded box that 8-connected background
/// flooding from the padding cannot reach.
fn holes(blob: &BTreeSet<u32>, w: u32, h: u32) -> Vec<u32> {
    let xs = blob.iter().map(|p| (p % w) as i64);
    let ys = blob.iter().map(|p| (p / w) as i64);
    let (x0, x1) = (xs.clone().min().unwrap() - 1, xs.max().unwrap() + 1);
    let (y0, y1) = (ys.clone().min().unwrap() - 1, ys.max().unwrap() + 1);
    let inside = |x: i64, y: i64| x >= x0 && x <= x1 && y >= y0 && y <= y1;
    let is_blob = |x: i64, y: i64| {
        x >= 0
            && y >= 0
            && x < w as i64
            && y < h as i64
            && blob.contains(&((y * w as i64 + x) as u32))
    };
    let mut seen = BTreeSet::new();
    let mut q = VecDeque::new();
    for x in x0..=x1 {
        for y in [y0, y1] {
            q.push_back((x, y));
        }
    }
    for y in y0..=y1 {
        for x in [x0, x1] {
            q.push_back((x, y));
        }
    }
    while let Some((x, y)) = q.pop_front() {
        if !inside(x, y) || is_blob(x, y) || !seen.insert((x, y)) {
            continue;
        }
        for dx in -1..=1 {
            for dy in -1..=1 {
                if dx != 0 || dy != 0 {
                    q.push_back((x + dx, y + dy));
                }
            }
        }
    }
    let mut out = Vec::new();
    for y in y0 + 1..y1 {
        for x in x0 + 1..x1 {
            if !is_blob(x, y) && !seen.contains(&(x, y)) {
                out.push((y * w as i64 + x) as u32);
            }
        }
    }
    out
}

/// Random scene: Voronoi stuff, a void patch and up to `max_things` hole-free
/// random-growth things with distinct sequential values.
pub fn random_scene(seed: u64, w: u32, h: u32, max_things: usize, n_stuff: usize) -> Scene {
    let mut r = rng(seed);
    let mut semantic = paint_stuff(&mut r, w, h, n_stuff);
    let mut sequential = vec![0u16; (w * h) as usize];
    let mut things = BTreeMap::new();
    let n_things = r.random_range(0..=max_things);
    let mut value = 0u16;
    for _ in 0..n_things {
        for _attempt in 0..20 {
            let start = r.random_range(0..w * h);
            if sequential[start as usize] != 0 {
                continue;
            }
            let target = r.random_range(1..=((w * h) as usize / 8).clamp(1, 80));
            let mut blob = BTreeSet::from([start]);
            let mut frontier = vec![start];
            while blob.len() < target && !frontier.is_empty() {
                let i = r.random_range(0..frontier.len());
                let p = frontier[i];
                let (x, y) = ((p % w) as i64, (p / w) as i64);
                let nbrs: Vec<u32> = [(1, 0), (-1, 0), (0, 1), (0, -1)]
                    .iter()
                    .map(|(dx, dy)| (x + dx, y + dy))
                    .filter(|&(nx, ny)| nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64)
                    .map(|(nx, ny)| (ny * w as i64 + nx) as u32)
                    .filter(|q| !blob.contains(q) && sequential[*q as usize] == 0)
                    .collect();
                if nbrs.is_empty() {
                    frontier.swap_remove(i);
                    continue;
                }
                let q = nbrs[r.random_range(0..nbrs.len())];
                blob.insert(q);
                frontier.push(q);
            }
            let hs = holes(&blob, w, h);
            if hs.iter().any(|&p| sequential[p as usize] != 0) {
                continue;
            }
            blob.extend(hs);
            value += r.random_range(1..40);
            let label = r.random_range(4..=14u32);
            for &p in &blob {
                sequential[p as usize] = value;
                semantic[p as usize] = label as u16;
            }
            things.insert(value, (label, blob.into_iter().collect()));
            break;
        }
    }
    Scene {
        width: w,
        height: h,
        semantic,
        sequential,
        things,
    }
}

/// Scene with axis-aligned rectangular things; `sizes` gives each side range.
pub fn rect_scene(seed: u64, w: u32, h: u32, sizes: &[(u32, u32)]) -> Scene {
    let mut r = rng(seed);
    let mut semantic = paint_stuff(&mut r, w, h, 3);
    let mut sequential = vec![0u16; (w * h) as usize];
    let mut things = BTreeMap::new();
    let mut value = 0u16;
    for &(lo, hi) in sizes {
        for _attempt in 0..50 {
            let (rw, rh) = (
                r.random_range(lo..=hi).min(w),
                r.random_range(lo..=hi).min(h),
            );
            let (x0, y0) = (r.random_range(0..=w - rw), r.random_range(0..=h - rh));
            let pixels: Vec<u32> = (y0..y0 + rh)
                .flat_map(|y| (x0..x0 + rw).map(move |x| y * w + x))
                .collect();
            if pixels.iter().any(|&p| sequential[p as usize] != 0) {
                continue;
            }
            value += 1;
            let label = r.random_range(4..=14u32);
            for &p in &pixels {
                sequential[p as usize] = value;
                semantic[p as usize] = label as u16;
            }
            things.insert(value, (label, pixels));
            break;
        }
    }
    Scene {
        width: w,
        height: h,
        semantic,
        sequential,
        things,
    }
}

pub fn scene_geotransform() -> GeoTransform {
    GeoTransform::new(190_000.0, 8_260_000.0, 0.25, -0.25).unwrap()
}

/// Writes the raster trio and point files under `dir` and returns a job config
/// writing to `dir/out`. The original carries GeoTIFF tags; the label rasters
/// use world files.
pub fn write_inputs(
    dir: &Path,
    scene: &Scene,
    points: &[(Role, Vec<(f64, f64)>)],
    tile_size: u32,
) -> JobConfig {
    let gt = scene_geotransform();
    let original = scene.image_raster(7).with_geotransform(Some(gt));
    let tiled = TiffOptions {
        layout: TiffLayout::Tiled {
            tile_width: 64,
            tile_height: 64,
        },
        compression: TiffCompression::Deflate,
    };
    std::fs::write(
        dir.join("original.tif"),
        encode_tiff(&original, &tiled).unwrap(),
    )
    .unwrap();
    for (name, raster) in [
        ("semantic.tif", scene.semantic_raster()),
        ("sequential.tif", scene.sequential_raster()),
    ] {
        std::fs::write(
            dir.join(name),
            encode_tiff(&raster, &TiffOptions::default()).unwrap(),
        )
        .unwrap();
        write_world_file(&dir.join(name.replace(".tif", ".tfw")), &gt).unwrap();
    }
    let mut files = PointFiles::default();
    for (role, pts) in points {
        let p = dir.join(format!("{}.shp", role.as_str()));
        write_point_shapefile(&p, pts).unwrap();
        match role {
            Role::Train => files.train = Some(p),
            Role::Valid => files.valid = Some(p),
            Role::Test => files.test = Some(p),
        }
    }
    JobConfig {
        original: dir.join("original.tif"),
        semantic: dir.join("semantic.tif"),
        sequential: dir.join("sequential.tif"),
        points: files,
        output: dir.join("out"),
        registry: RegistrySource::Inline(aerial_registry()),
        tile_size,
        channels: None,
        force: false,
        fail_on_overlap: false,
        train_may_overlap: true,
        merged_semantic: false,
        stuff_sequential_values: BTreeSet::new(),
        workers: 1,
    }
}

/// World coordinates of the pixel corner `(col, row)`: a window of even size
/// centred there starts at `(col - size/2, row - size/2)`.
pub fn corner_point(col: u32, row: u32) -> (f64, f64) {
    scene_geotransform().pixel_to_world(col as f64, row as f64)
}

/// Grid of tile centres for `n` points at least `spacing` px apart, inset by `margin`.
pub fn grid_points(n: usize, start: (u32, u32), spacing: u32, per_row: usize) -> Vec<(u32, u32)> {
    (0..n)
        .map(|i| {
            (
                start.0 + (i % per_row) as u32 * spacing,
                start.1 + (i / per_row) as u32 * spacing,
            )
        })
        .collect()
}

/// Recursively collects relative file paths and their bytes.
pub fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .replace('\\', "/");
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

pub fn subdirs(root: &Path) -> BTreeSet<String> {
    std::fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect()
}
