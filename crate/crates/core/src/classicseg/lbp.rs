//! Local binary patterns: 8-neighbor radius-1 codes with ties counting as
//! greater-or-equal, borders handled by mirror padding.

use crate::tiling::mirror_index;

/// Clockwise neighbor order starting at the top-left; bit i of the code is
/// set when neighbor i >= center.
const NEIGHBORS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
];

pub fn lbp_map(raster: &[f64], height: usize, width: usize) -> Vec<u8> {
    assert_eq!(raster.len(), height * width);
    let mut out = vec![0u8; height * width];
    for y in 0..height {
        for x in 0..width {
            let center = raster[y * width + x];
            let mut code = 0u8;
            for (i, &(dy, dx)) in NEIGHBORS.iter().enumerate() {
                let ny = mirror_index(y as isize + dy, height);
                let nx = mirror_index(x as isize + dx, width);
                if raster[ny * width + nx] >= center {
                    code |= 1 << i;
                }
            }
            out[y * width + x] = code;
        }
    }
    out
}

/// 256-bin histogram of LBP codes.
pub fn lbp_histogram(codes: &[u8]) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &c in codes {
        h[c as usize] += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_is_all_255() {
        let codes = lbp_map(&vec![3.5; 25], 5, 5);
        assert!(codes.iter().all(|&c| c == 255));
    }

    #[test]
    fn single_bright_pixel_neighbors_match_enumeration() {
        // 5x5 dark field with one bright pixel in the middle; compare every
        // code against a brute-force 3x3 enumeration.
        let (h, w) = (5usize, 5usize);
        let mut img = vec![0.0f64; h * w];
        img[2 * w + 2] = 9.0;
        let codes = lbp_map(&img, h, w);
        for y in 0..h {
            for x in 0..w {
                let mut expect = 0u8;
                for (i, &(dy, dx)) in NEIGHBORS.iter().enumerate() {
                    let ny = mirror_index(y as isize + dy, h);
                    let nx = mirror_index(x as isize + dx, w);
                    if img[ny * w + nx] >= img[y * w + x] {
                        expect |= 1 << i;
                    }
                }
                assert_eq!(codes[y * w + x], expect, "at ({y}, {x})");
            }
        }
        // Under the >= tie convention the bright pixel sees only smaller
        // neighbors (code 0); its neighbors see ties plus the bright pixel,
        // both of which satisfy >=, so their codes stay 255.
        assert_eq!(codes[2 * w + 2], 0);
        assert_eq!(codes[2 * w + 1], 255);
        assert_eq!(codes[1 * w + 1], 255);
    }

    #[test]
    fn histogram_sums_to_pixel_count() {
        let img: Vec<f64> = (0..48).map(|i| (i * 31 % 17) as f64).collect();
        let codes = lbp_map(&img, 6, 8);
        let h = lbp_histogram(&codes);
        assert_eq!(h.iter().sum::<u64>(), 48);
    }

    #[test]
    fn invariant_under_strictly_monotone_maps() {
        let img: Vec<f64> = (0..100).map(|i| ((i * 37) % 23) as f64 - 11.0).collect();
        let base = lbp_map(&img, 10, 10);
        let maps: Vec<Box<dyn Fn(f64) -> f64>> = vec![
            Box::new(|v| 3.0 * v + 7.0),
            Box::new(|v| v.exp()),
            Box::new(|v| v * v * v),
            Box::new(|v| v / 5.0 - 100.0),
        ];
        for (i, f) in maps.iter().enumerate() {
            let mapped: Vec<f64> = img.iter().map(|&v| f(v)).collect();
            assert_eq!(lbp_map(&mapped, 10, 10), base, "map {i}");
        }
    }
}
