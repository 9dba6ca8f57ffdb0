//! SLIC superpixels: k-means in (L, a, b, y, x) space seeded on a regular
//! grid, with a post-pass that enforces 4-connectivity by merging orphan
//! fragments into the largest adjacent superpixel.

use super::color::rgb_to_lab;
use crate::error::{Error, Result};
use image::RgbImage;
use std::io::{Read, Write};
use std::path::Path;

const SPX_MAGIC: &[u8; 4] = b"SPX1";

/// Partition of an image into connected superpixels.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelMap {
    pub height: usize,
    pub width: usize,
    /// Per-pixel superpixel id in 0..num_superpixels.
    pub labels: Vec<u32>,
    pub num_superpixels: usize,
    /// (row, col) centroid per superpixel.
    pub centroids: Vec<(f64, f64)>,
    pub sizes: Vec<u32>,
    /// Region adjacency (4-neighborhood), sorted and deduplicated.
    pub adjacency: Vec<Vec<u32>>,
}

impl SuperpixelMap {
    /// Build from a raw label raster: renumbers ids contiguously and derives
    /// centroids, sizes, and the region adjacency graph.
    pub fn from_labels(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::data("label raster does not match size"));
        }
        let max = *labels.iter().max().ok_or_else(|| Error::data("empty label raster"))?;
        let mut remap = vec![u32::MAX; max as usize + 1];
        let mut next = 0u32;
        let mut relabeled = labels;
        for v in relabeled.iter_mut() {
            let slot = &mut remap[*v as usize];
            if *slot == u32::MAX {
                *slot = next;
                next += 1;
            }
            *v = *slot;
        }
        let n = next as usize;
        let mut centroids = vec![(0.0f64, 0.0f64); n];
        let mut sizes = vec![0u32; n];
        let mut adj: Vec<std::collections::BTreeSet<u32>> =
            vec![std::collections::BTreeSet::new(); n];
        for y in 0..height {
            for x in 0..width {
                let id = relabeled[y * width + x];
                centroids[id as usize].0 += y as f64;
                centroids[id as usize].1 += x as f64;
                sizes[id as usize] += 1;
                if x + 1 < width {
                    let r = relabeled[y * width + x + 1];
                    if r != id {
                        adj[id as usize].insert(r);
                        adj[r as usize].insert(id);
                    }
                }
                if y + 1 < height {
                    let d = relabeled[(y + 1) * width + x];
                    if d != id {
                        adj[id as usize].insert(d);
                        adj[d as usize].insert(id);
                    }
                }
            }
        }
        for (c, &s) in centroids.iter_mut().zip(&sizes) {
            c.0 /= s as f64;
            c.1 /= s as f64;
        }
        Ok(SuperpixelMap {
            height,
            width,
            labels: relabeled,
            num_superpixels: n,
            centroids,
            sizes,
            adjacency: adj.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    /// Check that every superpixel is one 4-connected region.
    pub fn verify_connected(&self) -> Result<()> {
        let comps = connected_components(&self.labels, self.height, self.width);
        let distinct: std::collections::HashSet<u32> = comps.iter().copied().collect();
        if distinct.len() != self.num_superpixels {
            return Err(Error::internal(format!(
                "{} connected components for {} superpixels",
                distinct.len(),
                self.num_superpixels
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(SPX_MAGIC)?;
        for v in [self.height as u32, self.width as u32, self.num_superpixels as u32] {
            f.write_all(&v.to_le_bytes())?;
        }
        for &l in &self.labels {
            f.write_all(&l.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        f.read_exact(&mut magic)?;
        if &magic != SPX_MAGIC {
            return Err(Error::data("not a superpixel map file"));
        }
        let mut b = [0u8; 4];
        let mut read_u32 = |f: &mut dyn Read| -> Result<u32> {
            f.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let h = read_u32(&mut f)? as usize;
        let w = read_u32(&mut f)? as usize;
        let n = read_u32(&mut f)? as usize;
        let mut labels = Vec::with_capacity(h * w);
        let mut buf = vec![0u8; 4 * h * w];
        f.read_exact(&mut buf)?;
        for chunk in buf.chunks_exact(4) {
            labels.push(u32::from_le_bytes(chunk.try_into().unwrap()));
        }
        let map = SuperpixelMap::from_labels(h, w, labels)?;
        if map.num_superpixels != n {
            return Err(Error::data("superpixel count disagrees with header"));
        }
        Ok(map)
    }
}

/// Component id per pixel (4-connected, same input label).
fn connected_components(labels: &[u32], height: usize, width: usize) -> Vec<u32> {
    let mut comp = vec![u32::MAX; labels.len()];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..labels.len() {
        if comp[start] != u32::MAX {
            continue;
        }
        comp[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (y, x) = (i / width, i % width);
            let mut push = |j: usize| {
                if comp[j] == u32::MAX && labels[j] == labels[i] {
                    comp[j] = next;
                    stack.push(j);
                }
            };
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < width {
                push(i + 1);
            }
            if y > 0 {
                push(i - width);
            }
            if y + 1 < height {
                push(i + width);
            }
        }
        next += 1;
    }
    comp
}

struct Center {
    l: f64,
    a: f64,
    b: f64,
    y: f64,
    x: f64,
}

/// Segment into superpixels of roughly `target_area` pixels.
pub fn slic(
    img: &RgbImage,
    target_area: usize,
    compactness: f64,
    max_iters: usize,
) -> Result<SuperpixelMap> {
    let (w, h) = img.dimensions();
    let (height, width) = (h as usize, w as usize);
    if height * width < target_area || height < 2 || width < 2 {
        return Err(Error::data(format!(
            "image {height}x{width} too small for superpixels of {target_area} pixels"
        )));
    }
    let lab = rgb_to_lab(img);
    let step = (target_area as f64).sqrt();
    let ny = ((height as f64 / step).round() as usize).max(1);
    let nx = ((width as f64 / step).round() as usize).max(1);
    let mut centers: Vec<Center> = Vec::with_capacity(ny * nx);
    for i in 0..ny {
        for j in 0..nx {
            let y = (i as f64 + 0.5) * height as f64 / ny as f64;
            let x = (j as f64 + 0.5) * width as f64 / nx as f64;
            let (yi, xi) = (y as usize, x as usize);
            centers.push(Center {
                l: lab.l[yi * width + xi],
                a: lab.a[yi * width + xi],
                b: lab.b[yi * width + xi],
                y,
                x,
            });
        }
    }

    let spatial_scale = (compactness / step) * (compactness / step);
    let window = (2.0 * step).ceil() as isize;
    let mut labels = vec![0u32; height * width];
    let mut dist = vec![f64::INFINITY; height * width];
    for _ in 0..max_iters {
        dist.fill(f64::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let y_lo = ((c.y as isize) - window).max(0) as usize;
            let y_hi = (((c.y as isize) + window) as usize).min(height - 1);
            let x_lo = ((c.x as isize) - window).max(0) as usize;
            let x_hi = (((c.x as isize) + window) as usize).min(width - 1);
            for y in y_lo..=y_hi {
                for x in x_lo..=x_hi {
                    let i = y * width + x;
                    let dl = lab.l[i] - c.l;
                    let da = lab.a[i] - c.a;
                    let db = lab.b[i] - c.b;
                    let dy = y as f64 - c.y;
                    let dx = x as f64 - c.x;
                    let d = dl * dl + da * da + db * db + spatial_scale * (dy * dy + dx * dx);
                    if d < dist[i] {
                        dist[i] = d;
                        labels[i] = k as u32;
                    }
                }
            }
        }
        // Recompute centers as the mean of their assignments.
        let mut acc = vec![(0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0u64); centers.len()];
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                let a = &mut acc[labels[i] as usize];
                a.0 += lab.l[i];
                a.1 += lab.a[i];
                a.2 += lab.b[i];
                a.3 += y as f64;
                a.4 += x as f64;
                a.5 += 1;
            }
        }
        for (c, a) in centers.iter_mut().zip(&acc) {
            if a.5 > 0 {
                let n = a.5 as f64;
                *c = Center { l: a.0 / n, a: a.1 / n, b: a.2 / n, y: a.3 / n, x: a.4 / n };
            }
        }
    }

    enforce_connectivity(&mut labels, height, width);
    let map = SuperpixelMap::from_labels(height, width, labels)?;
    map.verify_connected()?;
    Ok(map)
}

/// Merge every orphan fragment (a connected component that is not its
/// superpixel's largest component) into the largest adjacent superpixel.
fn enforce_connectivity(labels: &mut [u32], height: usize, width: usize) {
    loop {
        let comps = connected_components(labels, height, width);
        let n_comp = comps.iter().copied().max().unwrap_or(0) as usize + 1;
        let mut comp_size = vec![0u32; n_comp];
        let mut comp_label = vec![0u32; n_comp];
        for (i, &c) in comps.iter().enumerate() {
            comp_size[c as usize] += 1;
            comp_label[c as usize] = labels[i];
        }
        // Largest component per superpixel id is canonical.
        let n_ids = labels.iter().copied().max().unwrap_or(0) as usize + 1;
        let mut canonical = vec![u32::MAX; n_ids];
        for c in 0..n_comp {
            let id = comp_label[c] as usize;
            if canonical[id] == u32::MAX || comp_size[c] > comp_size[canonical[id] as usize] {
                canonical[id] = c as u32;
            }
        }
        let mut label_size = vec![0u64; n_ids];
        for &l in labels.iter() {
            label_size[l as usize] += 1;
        }
        // For each orphan component pick the largest adjacent superpixel.
        let mut target = vec![(0u64, u32::MAX); n_comp]; // (size, label)
        let mut consider = |comp_a: u32, label_b: u32| {
            let a = comp_a as usize;
            let cand = (label_size[label_b as usize], label_b);
            if cand.0 > target[a].0 && label_b != comp_label[a] {
                target[a] = cand;
            }
        };
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                for j in [if x + 1 < width { Some(i + 1) } else { None }, if y + 1 < height {
                    Some(i + width)
                } else {
                    None
                }]
                .into_iter()
                .flatten()
                {
                    if comps[i] != comps[j] {
                        consider(comps[i], labels[j]);
                        consider(comps[j], labels[i]);
                    }
                }
            }
        }
        let mut changed = false;
        for (i, &c) in comps.iter().enumerate() {
            let id = comp_label[c as usize] as usize;
            if canonical[id] != c && target[c as usize].1 != u32::MAX {
                labels[i] = target[c as usize].1;
                changed = true;
            }
        }
        if !changed {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_image_gives_near_regular_grid() {
        let img = RgbImage::from_pixel(120, 120, image::Rgb([120, 80, 160]));
        let map = slic(&img, 400, 10.0, 10).unwrap();
        map.verify_connected().unwrap();
        // Every area within +-50% of the target.
        for &s in &map.sizes {
            assert!((200..=600).contains(&(s as usize)), "area {s}");
        }
    }

    #[test]
    fn partition_property() {
        let img = RgbImage::from_fn(90, 110, |x, y| {
            image::Rgb([((x / 9) * 30) as u8, ((y / 9) * 20) as u8, 100])
        });
        let map = slic(&img, 300, 10.0, 10).unwrap();
        assert_eq!(map.labels.len(), 90 * 110);
        assert!(map.labels.iter().all(|&l| (l as usize) < map.num_superpixels));
        let total: u32 = map.sizes.iter().sum();
        assert_eq!(total as usize, 90 * 110);
        map.verify_connected().unwrap();
    }

    #[test]
    fn two_color_split_respects_the_boundary() {
        // Left half dark, right half bright; the straight edge at x = 60.
        let img = RgbImage::from_fn(120, 120, |x, _| {
            if x < 60 {
                image::Rgb([40, 40, 40])
            } else {
                image::Rgb([220, 220, 220])
            }
        });
        let map = slic(&img, 400, 10.0, 10).unwrap();
        // Boundary recall: every true-boundary pixel must have a superpixel
        // boundary within 2 pixels.
        let mut hit = 0usize;
        let mut total = 0usize;
        for y in 0..120usize {
            total += 1;
            let mut found = false;
            'search: for x in 57..=62usize {
                let i = y * 120 + x;
                if x + 1 < 120 && map.labels[i] != map.labels[i + 1] {
                    found = true;
                    break 'search;
                }
            }
            if found {
                hit += 1;
            }
        }
        let recall = hit as f64 / total as f64;
        assert!(recall > 0.95, "boundary recall {recall}");
        // No superpixel mixes the two colors beyond a small fringe.
        for y in (0..120).step_by(7) {
            for x in (0..55).step_by(7) {
                let l_dark = map.labels[y * 120 + x];
                for x2 in (65..120).step_by(7) {
                    assert_ne!(l_dark, map.labels[y * 120 + x2]);
                }
            }
        }
    }

    #[test]
    fn degenerate_image_is_rejected() {
        let img = RgbImage::from_pixel(10, 10, image::Rgb([1, 2, 3]));
        assert!(slic(&img, 3000, 10.0, 5).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sp.bin");
        let img = RgbImage::from_fn(64, 64, |x, y| image::Rgb([(x * 4) as u8, (y * 4) as u8, 0]));
        let map = slic(&img, 256, 10.0, 5).unwrap();
        map.save(&p).unwrap();
        let back = SuperpixelMap::load(&p).unwrap();
        assert_eq!(back, map);
    }
}
