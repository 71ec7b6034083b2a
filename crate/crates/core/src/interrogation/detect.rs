//! Region detection on tactile frames: 3x3 median filter, fixed threshold,
//! 8-connected labelling, size gate.

use serde::{Deserialize, Serialize};

use crate::geom::Xy;
use crate::sim::{SensorConfig, TactileFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedRegion {
    /// Mean (column, row) of member pixels.
    pub centroid_px: (f64, f64),
    pub equivalent_diameter_px: f64,
    pub pixel_count: usize,
    pub centroid_roi: Xy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub min_diameter_px: f64,
    /// Pixels strictly above this value are foreground.
    pub threshold: f64,
}

impl DetectConfig {
    /// Minimum region diameter in millimetres used by the defaults
    /// (100 px at 0.03 mm/px).
    pub const MIN_DIAMETER_MM: f64 = 3.0;

    pub fn for_sensor(cfg: &SensorConfig, threshold: f64) -> Self {
        Self { min_diameter_px: Self::MIN_DIAMETER_MM / cfg.mm_per_pixel, threshold }
    }
}

/// mean + 3 sd of a background frame.
pub fn background_threshold(frame: &TactileFrame) -> f64 {
    let n = frame.pixels.len() as f64;
    let mean = frame.pixels.iter().map(|&p| p as f64).sum::<f64>() / n;
    let var = frame.pixels.iter().map(|&p| (p as f64 - mean).powi(2)).sum::<f64>() / n;
    mean + 3.0 * var.sqrt()
}

/// 3x3 median with edge replication.
pub fn median3x3(frame: &TactileFrame) -> Vec<u8> {
    let (w, h) = (frame.width, frame.height);
    let px = &frame.pixels;
    let mut out = vec![0u8; w * h];
    let mut win = [0u8; 9];
    for v in 0..h {
        let rows = [v.saturating_sub(1), v, (v + 1).min(h - 1)];
        for u in 0..w {
            let cols = [u.saturating_sub(1), u, (u + 1).min(w - 1)];
            let mut k = 0;
            for &r in &rows {
                for &c in &cols {
                    win[k] = px[r * w + c];
                    k += 1;
                }
            }
            win.sort_unstable();
            out[v * w + u] = win[4];
        }
    }
    out
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// Two-pass 8-connected labelling of a binary mask. Returns per-pixel
/// labels (0 = background, components numbered from 1 in raster order of
/// first appearance) and the component count.
pub fn label_components(mask: &[bool], width: usize, height: usize) -> (Vec<u32>, usize) {
    let mut labels = vec![0u32; width * height];
    let mut parent: Vec<u32> = vec![0];
    for v in 0..height {
        for u in 0..width {
            let i = v * width + u;
            if !mask[i] {
                continue;
            }
            let mut neighbours = [0u32; 4];
            let mut n = 0;
            let mut push = |l: u32| {
                if l != 0 {
                    neighbours[n] = l;
                    n += 1;
                }
            };
            if u > 0 {
                push(labels[i - 1]);
            }
            if v > 0 {
                let up = i - width;
                push(labels[up]);
                if u > 0 {
                    push(labels[up - 1]);
                }
                if u + 1 < width {
                    push(labels[up + 1]);
                }
            }
            if n == 0 {
                let l = parent.len() as u32;
                parent.push(l);
                labels[i] = l;
            } else {
                let l = *neighbours[..n].iter().min().expect("n > 0");
                labels[i] = l;
                for &m in &neighbours[..n] {
                    union(&mut parent, l, m);
                }
            }
        }
    }
    let mut remap = vec![0u32; parent.len()];
    let mut count = 0u32;
    for l in 1..parent.len() as u32 {
        let r = find(&mut parent, l);
        if remap[r as usize] == 0 {
            count += 1;
            remap[r as usize] = count;
        }
        remap[l as usize] = remap[r as usize];
    }
    for l in labels.iter_mut().filter(|l| **l != 0) {
        *l = remap[*l as usize];
    }
    (labels, count as usize)
}

/// Finds candidate inclusion regions in `frame`, largest first. Ties on
/// pixel count go to the lower centroid row, then the lower column.
pub fn detect_regions(frame: &TactileFrame, cfg: &DetectConfig, mm_per_pixel: f64) -> Vec<DetectedRegion> {
    let (w, h) = (frame.width, frame.height);
    let filtered = median3x3(frame);
    let mask: Vec<bool> = filtered.iter().map(|&p| p as f64 > cfg.threshold).collect();
    let (labels, n) = label_components(&mask, w, h);
    let mut acc = vec![(0usize, 0.0f64, 0.0f64); n + 1];
    for v in 0..h {
        for u in 0..w {
            let l = labels[v * w + u] as usize;
            if l != 0 {
                let a = &mut acc[l];
                a.0 += 1;
                a.1 += u as f64;
                a.2 += v as f64;
            }
        }
    }
    let (cu, cv) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let pose = frame.probe_pose;
    let mut regions: Vec<DetectedRegion> = acc
        .into_iter()
        .skip(1)
        .filter_map(|(count, su, sv)| {
            let d = 2.0 * (count as f64 / std::f64::consts::PI).sqrt();
            (d >= cfg.min_diameter_px).then(|| {
                let c = (su / count as f64, sv / count as f64);
                DetectedRegion {
                    centroid_px: c,
                    equivalent_diameter_px: d,
                    pixel_count: count,
                    centroid_roi: Xy::new(pose.x + (c.0 - cu) * mm_per_pixel, pose.y + (c.1 - cv) * mm_per_pixel),
                }
            })
        })
        .collect();
    regions.sort_by(|a, b| {
        b.pixel_count
            .cmp(&a.pixel_count)
            .then(a.centroid_px.1.total_cmp(&b.centroid_px.1))
            .then(a.centroid_px.0.total_cmp(&b.centroid_px.0))
    });
    regions
}
