//! Red-black checkerboard partition and adaptive candidate sampling from
//! four V-shaped and four long-strip regions around each pixel.

use std::sync::OnceLock;

use crate::geometry::Hypothesis;
use crate::grid::{Grid, NormalGrid};

pub const NUM_REGIONS: usize = 8;
pub const V_SAMPLES: usize = 7;
pub const STRIP_SAMPLES: usize = 11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CheckerboardPhase {
    /// `(x + y)` even.
    Red,
    Black,
}

impl CheckerboardPhase {
    pub fn of(x: usize, y: usize) -> Self {
        if (x + y).is_multiple_of(2) {
            Self::Red
        } else {
            Self::Black
        }
    }

    pub fn other(self) -> Self {
        match self {
            Self::Red => Self::Black,
            Self::Black => Self::Red,
        }
    }

    pub fn contains(self, x: usize, y: usize) -> bool {
        Self::of(x, y) == self
    }
}

/// Offsets of the eight sampling regions, each ordered near-to-far.
///
/// Regions 0..4 are the V shapes (up, right, down, left), regions 4..8 the
/// strips in the same directions. Every offset has odd `dx + dy`, so a
/// region only ever reaches pixels of the opposite colour.
#[derive(Clone, Debug)]
pub struct SamplingPattern {
    regions: [Vec<(i64, i64)>; NUM_REGIONS],
}

const V_UP: [(i64, i64); V_SAMPLES] = [
    (0, -1),
    (-1, -2),
    (1, -2),
    (-2, -3),
    (2, -3),
    (-3, -4),
    (3, -4),
];

/// 90 degree clockwise rotation in image coordinates (y down).
fn rotate(o: (i64, i64)) -> (i64, i64) {
    (-o.1, o.0)
}

impl SamplingPattern {
    pub fn new() -> Self {
        let strip_up: Vec<(i64, i64)> = (0..STRIP_SAMPLES as i64).map(|i| (0, -3 - 2 * i)).collect();
        let v_up: Vec<(i64, i64)> = V_UP.to_vec();
        let rot_all = |v: &Vec<(i64, i64)>| v.iter().map(|&o| rotate(o)).collect::<Vec<_>>();
        let v_right = rot_all(&v_up);
        let v_down = rot_all(&v_right);
        let v_left = rot_all(&v_down);
        let s_right = rot_all(&strip_up);
        let s_down = rot_all(&s_right);
        let s_left = rot_all(&s_down);
        Self {
            regions: [v_up, v_right, v_down, v_left, strip_up, s_right, s_down, s_left],
        }
    }

    /// Shared immutable instance.
    pub fn standard() -> &'static Self {
        static PATTERN: OnceLock<SamplingPattern> = OnceLock::new();
        PATTERN.get_or_init(Self::new)
    }

    pub fn region(&self, i: usize) -> &[(i64, i64)] {
        &self.regions[i]
    }

    pub fn regions(&self) -> &[Vec<(i64, i64)>; NUM_REGIONS] {
        &self.regions
    }
}

impl Default for SamplingPattern {
    fn default() -> Self {
        Self::new()
    }
}

/// Source pixel of each region: the in-bounds region pixel with the lowest
/// stored cost (first in canonical order on ties). Regions entirely outside
/// the image fall back to the nearest in-bounds opposite-colour pixel.
pub fn sample_sources(x: usize, y: usize, cost: &Grid<f64>) -> [(usize, usize); NUM_REGIONS] {
    let pattern = SamplingPattern::standard();
    let mut out = [(x, y); NUM_REGIONS];
    for (slot, region) in out.iter_mut().zip(pattern.regions.iter()) {
        let mut best: Option<(f64, usize, usize)> = None;
        for &(dx, dy) in region {
            let sx = x as i64 + dx;
            let sy = y as i64 + dy;
            if !cost.contains(sx, sy) {
                continue;
            }
            let (sx, sy) = (sx as usize, sy as usize);
            let c = cost.at(sx, sy);
            if best.is_none_or(|(bc, _, _)| c < bc) {
                best = Some((c, sx, sy));
            }
        }
        *slot = match best {
            Some((_, sx, sy)) => (sx, sy),
            None => nearest_opposite(x, y, cost.width(), cost.height()).unwrap_or((x, y)),
        };
    }
    out
}

/// Hypotheses at the sampled source pixels.
pub fn sample_candidates(
    x: usize,
    y: usize,
    cost: &Grid<f64>,
    depth: &Grid<f64>,
    normal: &NormalGrid,
) -> [Hypothesis; NUM_REGIONS] {
    sample_sources(x, y, cost).map(|(sx, sy)| Hypothesis::new(depth.at(sx, sy), *normal.get(sx, sy)))
}

/// Nearest pixel of the opposite colour inside a `w x h` image, searching
/// rings of increasing Chebyshev radius and picking the smallest Euclidean
/// distance (row-major on ties).
fn nearest_opposite(x: usize, y: usize, w: usize, h: usize) -> Option<(usize, usize)> {
    let (x, y) = (x as i64, y as i64);
    for r in 1..=(w.max(h) as i64) {
        let mut best: Option<(i64, usize, usize)> = None;
        for yy in y - r..=y + r {
            for xx in x - r..=x + r {
                if (xx - x).abs() != r && (yy - y).abs() != r {
                    continue;
                }
                if xx < 0 || yy < 0 || xx >= w as i64 || yy >= h as i64 {
                    continue;
                }
                if (xx - x + yy - y).rem_euclid(2) == 0 {
                    continue;
                }
                let d2 = (xx - x).pow(2) + (yy - y).pow(2);
                if best.is_none_or(|(bd, _, _)| d2 < bd) {
                    best = Some((d2, xx as usize, yy as usize));
                }
            }
        }
        if let Some((_, bx, by)) = best {
            return Some((bx, by));
        }
    }
    None
}
