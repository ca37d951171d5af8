use std::fmt::Write as _;

use image::{Rgb, RgbImage};

/// Rotation grid of the robustness sweep, degrees.
pub const ROTATIONS: [f64; 5] = [-10.0, -5.0, 0.0, 5.0, 10.0];
/// Scaling grid of the robustness sweep.
pub const SCALES: [f64; 5] = [0.8, 0.9, 1.0, 1.1, 1.2];

/// Counts indexed `[actual][predicted]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn record(&mut self, actual: usize, predicted: usize) {
        self.counts[actual][predicted] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, o) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in row.iter_mut().zip(o) {
                *a += b;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Fraction on the diagonal; 0 when empty.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.correct() as f64 / t as f64,
        }
    }

    /// Header row of predicted labels, then one row per actual printer.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("actual\\predicted");
        for j in 0..self.classes() {
            let _ = write!(s, "\tprinter_{j}");
        }
        s.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            let _ = write!(s, "printer_{i}");
            for c in row {
                let _ = write!(s, "\t{c}");
            }
            s.push('\n');
        }
        s
    }

    /// Row-normalized heat map, white for 0 and red for 1, `cell` pixels per
    /// entry with gray grid lines.
    pub fn heat_image(&self, cell: u32) -> RgbImage {
        let n = self.classes() as u32;
        let side = n * cell + 1;
        let mut img = RgbImage::from_pixel(side, side, Rgb([160, 160, 160]));
        for (i, row) in self.counts.iter().enumerate() {
            let sum: u64 = row.iter().sum();
            for (j, &c) in row.iter().enumerate() {
                let r = if sum == 0 { 0.0 } else { c as f64 / sum as f64 };
                let fade = (255.0 * (1.0 - r)).round() as u8;
                let color = Rgb([255, fade, fade]);
                for y in 1..cell {
                    for x in 1..cell {
                        img.put_pixel(j as u32 * cell + x, i as u32 * cell + y, color);
                    }
                }
            }
        }
        img
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rotation,
    Scaling,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Rotation => "rotation",
            Axis::Scaling => "scaling",
        }
    }

    pub fn grid(self) -> &'static [f64; 5] {
        match self {
            Axis::Rotation => &ROTATIONS,
            Axis::Scaling => &SCALES,
        }
    }

    /// (scale, degrees) of a grid value.
    pub fn transform(self, value: f64) -> (f64, f64) {
        match self {
            Axis::Rotation => (1.0, value),
            Axis::Scaling => (value, 0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobustnessPoint {
    pub value: f64,
    pub mean: f64,
    /// Population standard deviation over runs; 0 for a single run.
    pub std: f64,
}

/// Image-level accuracy along one transform axis.
#[derive(Clone, Debug, PartialEq)]
pub struct RobustnessCurve {
    pub axis: Axis,
    pub points: Vec<RobustnessPoint>,
}

impl RobustnessCurve {
    /// `runs[r][k]` is run r's accuracy at grid point k.
    pub fn from_runs(axis: Axis, runs: &[Vec<f64>]) -> Self {
        let points = axis
            .grid()
            .iter()
            .enumerate()
            .map(|(k, &value)| {
                let xs: Vec<f64> = runs.iter().map(|r| r[k]).collect();
                let n = xs.len().max(1) as f64;
                let mean = xs.iter().sum::<f64>() / n;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                RobustnessPoint {
                    value,
                    mean,
                    std: var.sqrt(),
                }
            })
            .collect();
        Self { axis, points }
    }

    pub fn min(&self) -> f64 {
        self.points.iter().map(|p| p.mean).fold(f64::INFINITY, f64::min)
    }

    /// Accuracy at the untransformed grid point.
    pub fn identity(&self) -> f64 {
        let id = match self.axis {
            Axis::Rotation => 0.0,
            Axis::Scaling => 1.0,
        };
        self.points
            .iter()
            .find(|p| p.value == id)
            .map_or(f64::NAN, |p| p.mean)
    }
}

/// One line per (axis, value) with phase-1 and phase-2 statistics.
pub fn robustness_tsv(phase1: &[RobustnessCurve], phase2: &[RobustnessCurve]) -> String {
    let mut s = String::from("axis\tvalue\tphase1_mean\tphase1_std\tphase2_mean\tphase2_std\n");
    for (c1, c2) in phase1.iter().zip(phase2) {
        for (p1, p2) in c1.points.iter().zip(&c2.points) {
            let _ = writeln!(
                s,
                "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
                c1.axis.name(),
                p1.value,
                p1.mean,
                p1.std,
                p2.mean,
                p2.std
            );
        }
    }
    s
}
