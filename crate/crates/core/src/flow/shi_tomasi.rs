use super::image::GrayImage;
use super::{FlowError, LkParams};
use crate::exec::Execution;

/// Detected corner in raster coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeaturePoint {
    pub col: f64,
    pub row: f64,
    /// Minimum eigenvalue of the structure tensor at detection.
    pub score: f64,
}

/// Smaller eigenvalue of the symmetric tensor `[a b; b d]`, floored at 0.
#[inline]
fn min_eig(a: f64, b: f64, d: f64) -> f64 {
    let half = 0.5 * (a - d);
    (0.5 * (a + d) - (half * half + b * b).sqrt()).max(0.0)
}

/// Rows per work item when streaming the eigenvalue map.
const BAND: usize = 64;

/// Streams rows of the minimum-eigenvalue map from running column sums of
/// the gradient products. Gradients are taken doubled, so every product and
/// every box sum is an exact integer; the 0.25 scale is applied per pixel.
struct EigenRows<'a> {
    px: &'a [u8],
    w: usize,
    h: usize,
    lo: usize,
    hi: usize,
    /// Next row to emit.
    row: usize,
    sums: [Vec<i64>; 3],
    prod: [Vec<i32>; 3],
    pre: [Vec<i64>; 3],
}

impl<'a> EigenRows<'a> {
    fn new(img: &'a GrayImage, block: usize, row: usize) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut it = Self {
            px: img.pixels(),
            w,
            h,
            lo: block / 2,
            hi: block - 1 - block / 2,
            row,
            sums: [vec![0; w], vec![0; w], vec![0; w]],
            prod: [vec![0; w], vec![0; w], vec![0; w]],
            pre: [vec![0; w + 1], vec![0; w + 1], vec![0; w + 1]],
        };
        for r in row.saturating_sub(it.lo)..(row + it.hi + 1).min(h) {
            it.accumulate(r, 1);
        }
        it
    }

    /// Adds (`sign` 1) or removes (`sign` -1) the products of row `r`.
    fn accumulate(&mut self, r: usize, sign: i64) {
        let (w, h, px) = (self.w, self.h, self.px);
        let up = &px[r.saturating_sub(1) * w..][..w];
        let mid = &px[r * w..][..w];
        let down = &px[(r + 1).min(h - 1) * w..][..w];
        let [pxx, pxy, pyy] = &mut self.prod;
        let mut put = |c: usize, gx: i32| {
            let gy = down[c] as i32 - up[c] as i32;
            pxx[c] = gx * gx;
            pxy[c] = gx * gy;
            pyy[c] = gy * gy;
        };
        put(0, mid[1.min(w - 1)] as i32 - mid[0] as i32);
        if w > 1 {
            put(w - 1, mid[w - 1] as i32 - mid[w - 2] as i32);
        }
        if w > 2 {
            let inner = mid[2..].iter().zip(&mid[..w - 2]);
            let ys = down[1..w - 1].iter().zip(&up[1..w - 1]);
            let outs = pxx[1..w - 1]
                .iter_mut()
                .zip(&mut pxy[1..w - 1])
                .zip(&mut pyy[1..w - 1]);
            for (((r, l), (d, u)), ((xx, xy), yy)) in inner.zip(ys).zip(outs) {
                let gx = *r as i32 - *l as i32;
                let gy = *d as i32 - *u as i32;
                *xx = gx * gx;
                *xy = gx * gy;
                *yy = gy * gy;
            }
        }
        for (s, p) in self.sums.iter_mut().zip(&self.prod) {
            if sign > 0 {
                s.iter_mut().zip(p).for_each(|(s, &p)| *s += p as i64);
            } else {
                s.iter_mut().zip(p).for_each(|(s, &p)| *s -= p as i64);
            }
        }
    }

    /// Writes the current row into `out` and moves to the next one.
    fn next_row(&mut self, out: &mut [f64]) {
        let (w, lo, hi) = (self.w, self.lo, self.hi);
        for (pre, s) in self.pre.iter_mut().zip(&self.sums) {
            let mut run = 0;
            for (p, &s) in pre[1..].iter_mut().zip(s) {
                run += s;
                *p = run;
            }
        }
        let [hxx, hxy, hyy] = &self.pre;
        let eig = |c0: usize, c1: usize| {
            min_eig(
                0.25 * (hxx[c1] - hxx[c0]) as f64,
                0.25 * (hxy[c1] - hxy[c0]) as f64,
                0.25 * (hyy[c1] - hyy[c0]) as f64,
            )
        };
        // Blocks of columns `start..end` lie fully inside the row.
        let end = w.saturating_sub(hi).max(lo).min(w);
        let start = lo.min(end);
        for c in (0..start).chain(end..w) {
            out[c] = eig(c.saturating_sub(lo), (c + hi + 1).min(w));
        }
        let (n, span) = (end - start, lo + hi + 1);
        if n > 0 {
            let (xx0, xx1) = (&hxx[..n], &hxx[span..span + n]);
            let (xy0, xy1) = (&hxy[..n], &hxy[span..span + n]);
            let (yy0, yy1) = (&hyy[..n], &hyy[span..span + n]);
            for (i, o) in out[start..end].iter_mut().enumerate() {
                *o = min_eig(
                    0.25 * (xx1[i] - xx0[i]) as f64,
                    0.25 * (xy1[i] - xy0[i]) as f64,
                    0.25 * (yy1[i] - yy0[i]) as f64,
                );
            }
        }
        let r = self.row;
        self.row += 1;
        if r >= lo {
            self.accumulate(r - lo, -1);
        }
        if r + hi + 1 < self.h {
            self.accumulate(r + hi + 1, 1);
        }
    }
}

/// Minimum eigenvalue of the `block x block` summed structure tensor at every
/// pixel, row-major. Gradients are central differences with replicated
/// borders; the block covers offsets `-block/2 ..= block - 1 - block/2`.
pub fn min_eigen_map(img: &GrayImage, block: usize, exec: Execution) -> Vec<f64> {
    let w = img.width() as usize;
    let mut out = vec![0f64; img.pixels().len()];
    exec.for_each_chunk(&mut out, w * BAND, |band, rows| {
        let mut it = EigenRows::new(img, block, band * BAND);
        for row in rows.chunks_mut(w) {
            it.next_row(row);
        }
    });
    out
}

/// Distance from the border inside which no corners are reported: the
/// structure-tensor block and the level-0 tracking window must both fit.
pub fn detection_margin(p: &LkParams) -> usize {
    (p.block_size / 2 + 1).max(p.window / 2 + 1)
}

pub fn shi_tomasi_detect(img: &GrayImage, p: &LkParams) -> Result<Vec<FeaturePoint>, FlowError> {
    shi_tomasi_detect_with(img, p, Execution::default())
}

pub fn shi_tomasi_detect_with(
    img: &GrayImage,
    p: &LkParams,
    exec: Execution,
) -> Result<Vec<FeaturePoint>, FlowError> {
    p.validate()?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let margin = detection_margin(p);
    if w <= 2 * margin || h <= 2 * margin || w <= p.block_size || h <= p.block_size {
        return Err(FlowError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            required: (2 * margin + 1).max(p.block_size + 1) as u32,
        });
    }
    // Score rows are streamed in bands; each band keeps its maximum and its
    // 3x3 local maxima, and the quality threshold is applied afterwards.
    let rows = h - 2 * margin;
    let bands = exec.map_indexed(rows.div_ceil(BAND), |band| {
        let first = margin + band * BAND;
        let last = (first + BAND).min(h - margin);
        let mut it = EigenRows::new(img, p.block_size, first - 1);
        let (mut up, mut mid, mut down) = (vec![0f64; w], vec![0f64; w], vec![0f64; w]);
        it.next_row(&mut up);
        it.next_row(&mut mid);
        let mut max = 0.0f64;
        let mut found = Vec::new();
        for r in first..last {
            it.next_row(&mut down);
            for c in margin..w - margin {
                let s = mid[c];
                max = max.max(s);
                if s <= 0.0 {
                    continue;
                }
                let is_max = mid[c - 1] <= s
                    && mid[c + 1] <= s
                    && up[c - 1..=c + 1].iter().all(|&v| v <= s)
                    && down[c - 1..=c + 1].iter().all(|&v| v <= s);
                if is_max {
                    found.push((s, r, c));
                }
            }
            (up, mid, down) = (mid, down, up);
        }
        (max, found)
    });
    let max = bands.iter().fold(0.0f64, |m, b| m.max(b.0));
    if !(max > 0.0) {
        return Err(FlowError::NoFeatures);
    }
    let thresh = p.quality_level * max;
    let mut cand: Vec<(f64, usize, usize)> = bands
        .into_iter()
        .flat_map(|b| b.1)
        .filter(|c| c.0 >= thresh)
        .collect();
    cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    // Greedy spacing on a grid of min_distance cells.
    let md = p.min_distance;
    let md2 = md * md;
    let cell = md.max(1.0);
    let gw = (w as f64 / cell).ceil() as usize + 1;
    let gh = (h as f64 / cell).ceil() as usize + 1;
    let mut grid: Vec<Vec<(f64, f64)>> = vec![Vec::new(); gw * gh];
    let mut out = Vec::new();
    for (s, r, c) in cand {
        if out.len() >= p.max_corners {
            break;
        }
        let (x, y) = (c as f64, r as f64);
        let (gx, gy) = ((x / cell) as usize, (y / cell) as usize);
        let mut ok = true;
        'scan: for yy in gy.saturating_sub(1)..=(gy + 1).min(gh - 1) {
            for xx in gx.saturating_sub(1)..=(gx + 1).min(gw - 1) {
                for &(ox, oy) in &grid[yy * gw + xx] {
                    let (dx, dy) = (ox - x, oy - y);
                    if dx * dx + dy * dy < md2 {
                        ok = false;
                        break 'scan;
                    }
                }
            }
        }
        if ok {
            grid[gy * gw + gx].push((x, y));
            out.push(FeaturePoint {
                col: x,
                row: y,
                score: s,
            });
        }
    }
    if out.is_empty() {
        return Err(FlowError::NoFeatures);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_image_has_no_features() {
        let img = GrayImage::filled(128, 128, 90);
        assert_eq!(
            shi_tomasi_detect(&img, &LkParams::default()),
            Err(FlowError::NoFeatures)
        );
    }

    /// Brute-force structure tensor straight from the definition.
    fn brute_min_eig(img: &GrayImage, block: usize, c: usize, r: usize) -> f64 {
        let (w, h) = (img.width() as isize, img.height() as isize);
        let at =
            |c: isize, r: isize| img.get(c.clamp(0, w - 1) as u32, r.clamp(0, h - 1) as u32) as f64;
        let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
        let lo = (block / 2) as isize;
        for dy in -lo..(block as isize - lo) {
            for dx in -lo..(block as isize - lo) {
                let (x, y) = (c as isize + dx, r as isize + dy);
                if x < 0 || y < 0 || x >= w || y >= h {
                    continue;
                }
                let gx = 0.5 * (at(x + 1, y) - at(x - 1, y));
                let gy = 0.5 * (at(x, y + 1) - at(x, y - 1));
                a += gx * gx;
                b += gx * gy;
                d += gy * gy;
            }
        }
        let m = nalgebra::Matrix2::new(a, b, b, d);
        m.symmetric_eigenvalues().min().max(0.0)
    }

    #[test]
    fn eigen_map_matches_brute_force() {
        // 150 rows span several streaming bands.
        let img = GrayImage::from_fn(40, 150, |c, r| ((c * 37 + r * 11 + c * r) % 256) as u8);
        for block in [1, 3, 4, 10, 45] {
            let map = min_eigen_map(&img, block, Execution::Sequential);
            assert_eq!(map, min_eigen_map(&img, block, Execution::Parallel));
            for (c, r) in [
                (0, 0),
                (5, 7),
                (20, 15),
                (39, 29),
                (38, 2),
                (17, 63),
                (9, 64),
                (30, 149),
            ] {
                let e = brute_min_eig(&img, block, c, r);
                let got = map[r * 40 + c];
                assert!(
                    (got - e).abs() <= 1e-6 * (1.0 + e),
                    "block {block} at {c},{r}: {got} vs {e}"
                );
            }
        }
    }

    #[test]
    fn square_corners() {
        let img = GrayImage::from_fn(128, 128, |c, r| {
            if (62..67).contains(&c) && (62..67).contains(&r) {
                255
            } else {
                0
            }
        });
        let feats = shi_tomasi_detect(&img, &LkParams::default()).unwrap();
        assert_eq!(feats.len(), 1);
        let f = feats[0];
        let corners = [(62.0, 62.0), (66.0, 62.0), (62.0, 66.0), (66.0, 66.0)];
        let near = corners
            .iter()
            .map(|(x, y)| ((f.col - x).powi(2) + (f.row - y).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(near <= 5.0, "{f:?}");

        let p = LkParams {
            min_distance: 3.0,
            ..LkParams::default()
        };
        let feats = shi_tomasi_detect(&img, &p).unwrap();
        assert!(feats.len() >= 2);
    }

    #[test]
    fn spacing_order_and_cap() {
        let img = GrayImage::from_fn(300, 240, |c, r| {
            let v = (c as f64 * 0.37).sin() * (r as f64 * 0.23).cos() * 120.0 + 128.0;
            v as u8 ^ ((c * 7 + r * 13) % 17) as u8
        });
        let p = LkParams {
            min_distance: 20.0,
            ..LkParams::default()
        };
        let f = shi_tomasi_detect(&img, &p).unwrap();
        assert!(f.len() > 5);
        for i in 0..f.len() {
            if i > 0 {
                assert!(f[i - 1].score >= f[i].score);
            }
            for j in 0..i {
                let d = ((f[i].col - f[j].col).powi(2) + (f[i].row - f[j].row).powi(2)).sqrt();
                assert!(d >= 20.0);
            }
            let m = detection_margin(&p) as f64;
            assert!(f[i].col >= m && f[i].row >= m);
        }
        let capped = shi_tomasi_detect(
            &img,
            &LkParams {
                max_corners: 3,
                ..p
            },
        )
        .unwrap();
        assert_eq!(capped, f[..3].to_vec());
        let seq = shi_tomasi_detect_with(&img, &p, Execution::Sequential).unwrap();
        assert_eq!(seq, f);
    }
}
