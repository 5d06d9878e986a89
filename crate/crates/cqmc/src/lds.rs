//! Base-2 Sobol' digital nets with linear matrix scrambling.
//!
//! Direction numbers come from a bundled Joe-Kuo-style table (see
//! `data/joe-kuo-64.txt`; columns are `d s a m_1..m_s` where `s` is the
//! degree of the primitive polynomial, `a` encodes its interior
//! coefficients, and the `m_i` are the odd initial values). Dimension 1
//! is the van der Corput sequence and is not stored in the file.
//!
//! Randomization follows Matousek's linear scramble: per dimension, a
//! random nonsingular lower-triangular bit matrix (unit diagonal,
//! strictly-lower bits fair coin flips) composed with a random digital
//! shift. Because the scramble matrix acts linearly on the digit
//! vectors, it is applied once to the direction numbers; point
//! generation then runs the usual Gray-code recursion at full speed.

use std::path::Path;

use thiserror::Error;

use crate::rng::{derive, SplitMix64};

/// Largest dimension covered by the bundled direction-number table.
pub const MAX_DIMENSION: usize = 64;

/// Bits of precision carried per coordinate.
pub const BIT_PRECISION: u32 = 32;

/// Largest supported point-count exponent (n = 2^m).
pub const MAX_LOG2_POINTS: u32 = 20;

const W: usize = BIT_PRECISION as usize;
const SCALE: f64 = 1.0 / 4294967296.0; // 2^-32

/// Smallest representable coordinate after clamping; the inverse normal
/// CDF must never see an exact 0 or 1.
pub const COORD_MIN: f64 = SCALE;

#[derive(Debug, Error)]
pub enum LdsError {
    #[error("dimension {requested} exceeds the direction-number table ({available} dimensions)")]
    DimensionTooLarge { requested: usize, available: usize },
    #[error("dimension must be at least 1")]
    DimensionZero,
    #[error("log2 point count {0} exceeds the supported maximum {MAX_LOG2_POINTS}")]
    TooManyPoints(u32),
    #[error("direction-number table line {line}: {reason}")]
    BadTable { line: usize, reason: String },
    #[error("failed to read direction-number file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

const BUNDLED_TABLE: &str = include_str!("../data/joe-kuo-64.txt");

/// An unrandomized base-2 Sobol' net in `[0,1)^s`.
#[derive(Debug, Clone)]
pub struct DigitalNet {
    dim: usize,
    /// Direction numbers per dimension, MSB-aligned.
    dirs: Vec<[u32; W]>,
}

impl DigitalNet {
    /// Builds a net of the given dimension from the bundled table.
    pub fn new(dim: usize) -> Result<Self, LdsError> {
        Self::from_table(BUNDLED_TABLE, dim)
    }

    /// Builds a net from a direction-number file in the documented layout.
    pub fn from_direction_file<P: AsRef<Path>>(path: P, dim: usize) -> Result<Self, LdsError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|source| LdsError::Io {
            path: path.as_ref().display().to_string(),
            source,
        })?;
        Self::from_table(&text, dim)
    }

    /// Parses a whitespace-separated `d s a m_1..m_s` table.
    ///
    /// A non-numeric first token (a header line) is skipped. Rows must
    /// cover dimensions 2..=dim in order.
    pub fn from_table(text: &str, dim: usize) -> Result<Self, LdsError> {
        if dim == 0 {
            return Err(LdsError::DimensionZero);
        }
        let mut dirs = Vec::with_capacity(dim);
        dirs.push(van_der_corput());

        let mut want = 2usize;
        for (idx, raw) in text.lines().enumerate() {
            if dirs.len() >= dim {
                break;
            }
            let line = idx + 1;
            let fields: Vec<&str> = raw.split_whitespace().collect();
            if fields.is_empty() || fields[0].parse::<u64>().is_err() {
                continue; // header or blank
            }
            if fields.len() < 4 {
                return Err(LdsError::BadTable {
                    line,
                    reason: format!("expected at least 4 fields, found {}", fields.len()),
                });
            }
            let parse = |s: &str| -> Result<u32, LdsError> {
                s.parse().map_err(|_| LdsError::BadTable {
                    line,
                    reason: format!("bad integer {s:?}"),
                })
            };
            let d = parse(fields[0])? as usize;
            if d != want {
                return Err(LdsError::BadTable {
                    line,
                    reason: format!("expected dimension {want}, found {d}"),
                });
            }
            let s = parse(fields[1])? as usize;
            let a = parse(fields[2])?;
            if fields.len() != 3 + s {
                return Err(LdsError::BadTable {
                    line,
                    reason: format!("degree {s} needs {s} initial values, found {}", fields.len() - 3),
                });
            }
            let mut m = Vec::with_capacity(s);
            for f in &fields[3..] {
                let v = parse(f)?;
                m.push(v);
            }
            for (i, &mi) in m.iter().enumerate() {
                if mi % 2 == 0 || mi >= (2 << i) {
                    return Err(LdsError::BadTable {
                        line,
                        reason: format!("initial value m_{} = {} out of range", i + 1, mi),
                    });
                }
            }
            dirs.push(direction_numbers(s, a, &m));
            want += 1;
        }

        if dirs.len() < dim {
            return Err(LdsError::DimensionTooLarge {
                requested: dim,
                available: dirs.len(),
            });
        }
        Ok(Self { dim, dirs })
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    /// The net restricted to its first `dim` coordinates.
    pub fn prefix(&self, dim: usize) -> Result<Self, LdsError> {
        if dim == 0 {
            return Err(LdsError::DimensionZero);
        }
        if dim > self.dim {
            return Err(LdsError::DimensionTooLarge {
                requested: dim,
                available: self.dim,
            });
        }
        Ok(Self {
            dim,
            dirs: self.dirs[..dim].to_vec(),
        })
    }
}

fn van_der_corput() -> [u32; W] {
    let mut v = [0u32; W];
    for (k, slot) in v.iter_mut().enumerate() {
        *slot = 1 << (W - 1 - k);
    }
    v
}

/// Direction numbers from polynomial degree `s`, interior coefficients
/// `a`, and initial values `m` via the standard recurrence.
fn direction_numbers(s: usize, a: u32, m: &[u32]) -> [u32; W] {
    let mut v = [0u32; W];
    for k in 0..s.min(W) {
        v[k] = m[k] << (W - 1 - k);
    }
    for k in s..W {
        let mut vk = v[k - s] ^ (v[k - s] >> s);
        for t in 1..s {
            if (a >> (s - 1 - t)) & 1 == 1 {
                vk ^= v[k - t];
            }
        }
        v[k] = vk;
    }
    v
}

/// Identifies one randomization of a net: same `(master, replicate)`
/// always yields the bit-identical point stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScrambleSeed {
    pub master: u64,
    pub replicate: u64,
}

impl ScrambleSeed {
    pub fn new(master: u64, replicate: u64) -> Self {
        Self { master, replicate }
    }

    /// A decorrelated seed for an auxiliary purpose (reference runs,
    /// transform estimation, per-exponent streams, ...).
    pub fn substream(self, tag: u64) -> Self {
        Self {
            master: derive(self.master, tag),
            replicate: self.replicate,
        }
    }

    fn mixed(self) -> u64 {
        derive(self.master, self.replicate)
    }
}

/// A scrambled net: direction numbers premultiplied by the per-dimension
/// lower-triangular scramble matrices, plus digital shifts.
#[derive(Debug, Clone)]
pub struct ScrambledNet {
    dim: usize,
    dirs: Vec<[u32; W]>,
    shifts: Vec<u32>,
}

/// Applies a lower-triangular bit matrix (rows MSB-first) to a digit vector.
fn apply_lower_triangular(rows: &[u32; W], bits: u32) -> u32 {
    let mut out = 0u32;
    for (i, row) in rows.iter().enumerate() {
        let parity = (row & bits).count_ones() & 1;
        out |= parity << (W - 1 - i);
    }
    out
}

impl ScrambledNet {
    /// Scrambles `net` with matrices and shifts drawn from `seed`.
    pub fn new(net: &DigitalNet, seed: ScrambleSeed) -> Self {
        let mut rng = SplitMix64::new(seed.mixed());
        let mut dirs = Vec::with_capacity(net.dim);
        let mut shifts = Vec::with_capacity(net.dim);
        for j in 0..net.dim {
            // Row i of L: unit diagonal at digit i, fair bits at digits < i
            // (digit 0 is the most significant).
            let mut rows = [0u32; W];
            for (i, row) in rows.iter_mut().enumerate() {
                let above = if i == 0 { 0 } else { rng.next_u32() & !(u32::MAX >> i) };
                *row = above | (1 << (W - 1 - i));
            }
            let mut scrambled = [0u32; W];
            for k in 0..W {
                scrambled[k] = apply_lower_triangular(&rows, net.dirs[j][k]);
            }
            dirs.push(scrambled);
            shifts.push(rng.next_u32());
        }
        Self {
            dim: net.dim,
            dirs,
            shifts,
        }
    }

    /// The identity randomization: unit scramble matrices and zero shift.
    /// Streams the raw net unchanged (up to the boundary clamp).
    pub fn identity(net: &DigitalNet) -> Self {
        Self {
            dim: net.dim,
            dirs: net.dirs.clone(),
            shifts: vec![0; net.dim],
        }
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    /// Starts streaming points from index 0.
    pub fn stream(&self) -> PointStream<'_> {
        PointStream {
            net: self,
            state: vec![0; self.dim],
            index: 0,
        }
    }
}

/// Gray-code point stream over a scrambled net.
pub struct PointStream<'a> {
    net: &'a ScrambledNet,
    state: Vec<u32>,
    index: u64,
}

impl PointStream<'_> {
    /// Writes the next point into `out`; coordinates lie in
    /// `[2^-32, 1 - 2^-32]`.
    pub fn next_into(&mut self, out: &mut [f64]) {
        assert_eq!(out.len(), self.net.dim);
        if self.index > 0 {
            let bit = self.index.trailing_zeros() as usize;
            for (j, s) in self.state.iter_mut().enumerate() {
                *s ^= self.net.dirs[j][bit];
            }
        }
        for (j, o) in out.iter_mut().enumerate() {
            let bits = self.state[j] ^ self.net.shifts[j];
            *o = (bits as f64 * SCALE).max(COORD_MIN);
        }
        self.index += 1;
    }

    /// Collects the next `count` points as rows.
    pub fn take_points(&mut self, count: usize) -> Vec<Vec<f64>> {
        let mut rows = Vec::with_capacity(count);
        for _ in 0..count {
            let mut row = vec![0.0; self.net.dim];
            self.next_into(&mut row);
            rows.push(row);
        }
        rows
    }
}

/// First `2^m` unscrambled Sobol' points.
///
/// With `include_origin` the stream starts at the all-zeros point (the
/// usual convention; a later scramble shifts it off the origin).
/// Without it, points 1..=2^m are returned instead so the count is
/// still `2^m`.
pub fn sobol_points(net: &DigitalNet, m: u32, include_origin: bool) -> Result<Vec<Vec<f64>>, LdsError> {
    if m > MAX_LOG2_POINTS {
        return Err(LdsError::TooManyPoints(m));
    }
    let scrambled = ScrambledNet::identity(net);
    let mut stream = scrambled.stream();
    let n = 1usize << m;
    if !include_origin {
        let mut skip = vec![0.0; net.dim];
        stream.next_into(&mut skip);
    }
    Ok(stream.take_points(n))
}

/// First `2^m` points of the scrambled net.
pub fn scrambled_points(
    net: &DigitalNet,
    seed: ScrambleSeed,
    m: u32,
) -> Result<Vec<Vec<f64>>, LdsError> {
    if m > MAX_LOG2_POINTS {
        return Err(LdsError::TooManyPoints(m));
    }
    Ok(ScrambledNet::new(net, seed).stream().take_points(1 << m))
}

/// Occupancy counts of points over the dyadic grid that splits axis `k`
/// into `2^exponents[k]` cells.
///
/// The returned grid is row-major in axis order with axis 0 slowest.
pub fn elementary_interval_counts(points: &[Vec<f64>], exponents: &[u32]) -> Vec<usize> {
    let cells: usize = exponents.iter().map(|&e| 1usize << e).product();
    let mut counts = vec![0usize; cells];
    for p in points {
        assert_eq!(p.len(), exponents.len(), "point/partition dimension mismatch");
        let mut idx = 0usize;
        for (u, &e) in p.iter().zip(exponents) {
            let cells_axis = 1usize << e;
            let cell = ((u * cells_axis as f64) as usize).min(cells_axis - 1);
            idx = idx * cells_axis + cell;
        }
        counts[idx] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_prefix_matches_gray_code_recursion() {
        let net = DigitalNet::new(1).unwrap();
        let pts = sobol_points(&net, 2, true).unwrap();
        let got: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        // Hand-computed van der Corput stream in Gray-code order. Index 0
        // is the origin, clamped up to 2^-32 on output.
        assert_eq!(got[0], COORD_MIN);
        assert_eq!(&got[1..], &[0.5, 0.75, 0.25]);
    }

    #[test]
    fn first_point_is_origin() {
        let net = DigitalNet::new(3).unwrap();
        let pts = sobol_points(&net, 0, true).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].iter().all(|&u| u == COORD_MIN));
        let skipped = sobol_points(&net, 0, false).unwrap();
        assert!(skipped[0].iter().all(|&u| u > COORD_MIN));
    }

    #[test]
    fn dimension_limit_is_enforced() {
        assert!(DigitalNet::new(MAX_DIMENSION).is_ok());
        match DigitalNet::new(MAX_DIMENSION + 1) {
            Err(LdsError::DimensionTooLarge { requested, available }) => {
                assert_eq!(requested, 65);
                assert_eq!(available, 64);
            }
            other => panic!("expected DimensionTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn one_axis_stratification_holds_up_to_m12() {
        // Every 1D projection of the first 2^m points puts exactly one
        // point in each dyadic interval of width 2^-m.
        let net = DigitalNet::new(6).unwrap();
        for m in [4u32, 8, 12] {
            let pts = sobol_points(&net, m, true).unwrap();
            for axis in 0..6 {
                let proj: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[axis]]).collect();
                let counts = elementary_interval_counts(&proj, &[m]);
                assert!(
                    counts.iter().all(|&c| c == 1),
                    "axis {axis} m={m} not stratified"
                );
            }
        }
    }

    #[test]
    fn two_dimensional_net_property_m4() {
        let net = DigitalNet::new(2).unwrap();
        let pts = sobol_points(&net, 4, true).unwrap();
        // 4x4 dyadic grid: exactly one point per cell (brute-force count),
        // and likewise for every other split of 4 bits across 2 axes.
        for (e0, e1) in [(2u32, 2u32), (1, 3), (3, 1), (0, 4), (4, 0)] {
            let counts = elementary_interval_counts(&pts, &[e0, e1]);
            assert!(counts.iter().all(|&c| c == 1), "split ({e0},{e1}) failed");
        }
    }

    #[test]
    fn scramble_is_deterministic() {
        let net = DigitalNet::new(5).unwrap();
        let seed = ScrambleSeed::new(99, 7);
        let a = scrambled_points(&net, seed, 6).unwrap();
        let b = scrambled_points(&net, seed, 6).unwrap();
        assert_eq!(a, b);
        let c = scrambled_points(&net, ScrambleSeed::new(99, 8), 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn identity_scramble_reproduces_base_net() {
        let net = DigitalNet::new(3).unwrap();
        let raw = sobol_points(&net, 5, true).unwrap();
        let id = ScrambledNet::identity(&net).stream().take_points(32);
        assert_eq!(raw, id);
    }

    #[test]
    fn lower_triangular_identity_and_mixing() {
        // Unit diagonal rows act as the identity.
        let mut rows = [0u32; 32];
        for (i, r) in rows.iter_mut().enumerate() {
            *r = 1 << (31 - i);
        }
        for v in [0u32, 1, 0x8000_0000, 0xdead_beef] {
            assert_eq!(apply_lower_triangular(&rows, v), v);
        }
        // A row that XORs digit 0 into digit 1.
        rows[1] |= 1 << 31;
        assert_eq!(apply_lower_triangular(&rows, 0x8000_0000), 0xc000_0000);
    }

    #[test]
    fn scrambling_preserves_net_property() {
        // One point per cell on every tested dyadic partition, for each of
        // 200 seeds (m <= 8, s <= 3).
        let net = DigitalNet::new(3).unwrap();
        for seed in 0..200u64 {
            let pts = scrambled_points(&net, ScrambleSeed::new(seed, 0), 8).unwrap();
            for axis in 0..3 {
                let proj: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[axis]]).collect();
                let counts = elementary_interval_counts(&proj, &[8]);
                assert!(counts.iter().all(|&c| c == 1), "seed {seed} axis {axis}");
            }
            let counts = elementary_interval_counts(&pts, &[4, 4, 0]);
            assert!(counts.iter().all(|&c| c == 1), "seed {seed} 2d split");
        }
    }

    #[test]
    fn scrambled_coordinate_mean_is_uniform() {
        // Mean of a single scrambled point over many seeds: CLT bound
        // 3 sqrt(1/12/1e4) ~ 0.0087, widened to 0.015.
        let net = DigitalNet::new(2).unwrap();
        let reps = 10_000u64;
        let mut sums = [0.0f64; 2];
        for seed in 0..reps {
            let mut p = [0.0; 2];
            ScrambledNet::new(&net, ScrambleSeed::new(seed, 3))
                .stream()
                .next_into(&mut p);
            sums[0] += p[0];
            sums[1] += p[1];
        }
        for s in sums {
            let mean = s / reps as f64;
            assert!((mean - 0.5).abs() < 0.015, "mean = {mean}");
        }
    }

    #[test]
    fn scrambled_coordinates_pass_chi_square() {
        // 16 equal bins, 1e4 seeds; chi-square(15) critical value at
        // significance 1e-3 is 37.697.
        let net = DigitalNet::new(3).unwrap();
        let reps = 10_000usize;
        for &(index, axis) in &[(0usize, 0usize), (1, 1), (5, 2), (100, 0)] {
            let mut bins = [0usize; 16];
            for seed in 0..reps {
                let scr = ScrambledNet::new(&net, ScrambleSeed::new(seed as u64, 1));
                let mut stream = scr.stream();
                let mut p = [0.0; 3];
                for _ in 0..=index {
                    stream.next_into(&mut p);
                }
                bins[((p[axis] * 16.0) as usize).min(15)] += 1;
            }
            let expect = reps as f64 / 16.0;
            let chi2: f64 = bins.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
            assert!(chi2 < 37.697, "point {index} axis {axis}: chi2 = {chi2}");
        }
    }

    #[test]
    fn interval_counts_edge_cases() {
        let empty: Vec<Vec<f64>> = Vec::new();
        assert_eq!(elementary_interval_counts(&empty, &[2]), vec![0; 4]);
        let net = DigitalNet::new(1).unwrap();
        let pts = sobol_points(&net, 2, true).unwrap();
        assert_eq!(elementary_interval_counts(&pts, &[2]), vec![1; 4]);
    }

    #[test]
    fn direction_file_round_trip() {
        let dir = std::env::temp_dir().join("cqmc-test-dirs.txt");
        std::fs::write(&dir, BUNDLED_TABLE).unwrap();
        let net = DigitalNet::from_direction_file(&dir, 8).unwrap();
        let bundled = DigitalNet::new(8).unwrap();
        assert_eq!(
            sobol_points(&net, 6, true).unwrap(),
            sobol_points(&bundled, 6, true).unwrap()
        );
        std::fs::remove_file(&dir).ok();
    }

    #[test]
    fn malformed_table_is_rejected() {
        assert!(matches!(
            DigitalNet::from_table("d s a m\n2 1 0 2\n", 2),
            Err(LdsError::BadTable { .. })
        ));
        assert!(matches!(
            DigitalNet::from_table("d s a m\n3 2 1 1 3\n", 2),
            Err(LdsError::BadTable { .. })
        ));
    }
}
