//! Segmentation data model.
//!
//! Images `0..n` carry `p_i` points each; points are numbered globally by
//! concatenating images in order. An absolute segmentation assigns each point
//! one of `d` motions. A relative segmentation `Z_ij` marks which point pairs
//! across images `i` and `j` share a motion.
//!
//! Bit layout: `y = vect(X)` stacks the columns of the `p × d` matrix `X`,
//! so the slot of (global point `a`, motion `k`) is `k * p + a`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense 0/1 matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl BinaryMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![1; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::InvalidProblem(format!(
                    "ragged matrix: row {r} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|&&v| v > 1) {
                return Err(Error::InvalidProblem(format!("non-binary entry {v} in row {r}")));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    /// Builds a matrix from the coordinates of its ones.
    pub fn from_ones(rows: usize, cols: usize, ones: &[[usize; 2]]) -> Result<Self> {
        let mut m = Self::zeros(rows, cols);
        for &[r, c] in ones {
            if r >= rows || c >= cols {
                return Err(Error::InvalidProblem(format!(
                    "entry ({r}, {c}) outside a {rows}×{cols} block"
                )));
            }
            m.set(r, c, 1);
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u8) {
        debug_assert!(v <= 1);
        self.data[r * self.cols + c] = v;
    }

    pub fn flip(&mut self, r: usize, c: usize) {
        let i = r * self.cols + c;
        self.data[i] ^= 1;
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    /// Squared Frobenius distance, i.e. the number of differing entries.
    pub fn hamming(&self, other: &Self) -> usize {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).filter(|(a, b)| a != b).count()
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|r| (r + 1..self.cols).all(|c| self.get(r, c) == self.get(c, r)))
    }
}

/// Relative segmentation between images `i < j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialSegmentation {
    pub i: usize,
    pub j: usize,
    pub z: BinaryMatrix,
}

/// Absolute segmentation in label form: `labels[i][h]` is the motion of
/// point `h` in image `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Labeling {
    pub labels: Vec<Vec<usize>>,
}

impl Labeling {
    pub fn new(labels: Vec<Vec<usize>>) -> Self {
        Self { labels }
    }

    pub fn n_images(&self) -> usize {
        self.labels.len()
    }

    pub fn image(&self, i: usize) -> &[usize] {
        &self.labels[i]
    }

    pub fn point_counts(&self) -> Vec<usize> {
        self.labels.iter().map(Vec::len).collect()
    }

    /// Checks label range and, if given, per-image lengths.
    pub fn validate(&self, d: usize, point_counts: Option<&[usize]>) -> Result<()> {
        if let Some(pc) = point_counts {
            if pc.len() != self.labels.len() {
                return Err(Error::LengthMismatch { expected: pc.len(), got: self.labels.len() });
            }
            for (img, (&want, have)) in pc.iter().zip(&self.labels).enumerate() {
                if want != have.len() {
                    return Err(Error::InvalidProblem(format!(
                        "labeling of image {img} has {} points, expected {want}",
                        have.len()
                    )));
                }
            }
        }
        for (image, img) in self.labels.iter().enumerate() {
            for (point, &label) in img.iter().enumerate() {
                if label >= d {
                    return Err(Error::LabelOutOfRange { image, point, label, d });
                }
            }
        }
        Ok(())
    }

    /// Applies the global relabeling `k -> perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            labels: self.labels.iter().map(|img| img.iter().map(|&l| perm[l]).collect()).collect(),
        }
    }
}

/// Binary vector `y = vect(X)` of length `d·p`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitAssignment {
    pub bits: Vec<u8>,
}

impl BitAssignment {
    pub fn new(bits: Vec<u8>) -> Self {
        debug_assert!(bits.iter().all(|&b| b <= 1));
        Self { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bits
    }

    /// `"0101…"`, index 0 first.
    pub fn to_bitstring(&self) -> String {
        bits_to_string(&self.bits)
    }

    pub fn from_bitstring(s: &str) -> Result<Self> {
        parse_bitstring(s).map(Self::new)
    }
}

pub(crate) fn bits_to_string(bits: &[u8]) -> String {
    bits.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
}

pub(crate) fn parse_bitstring(s: &str) -> Result<Vec<u8>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(Error::InvalidProblem(format!("invalid bit character {other:?}"))),
        })
        .collect()
}

/// Points whose motion slots do not sum to one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfeasibilityReport {
    /// `(global point index, row sum)` for every violating point.
    pub points: Vec<(usize, usize)>,
}

impl fmt::Display for InfeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} point(s) with row sum != 1", self.points.len())?;
        for (a, s) in self.points.iter().take(8) {
            write!(f, "; point {a} sums to {s}")?;
        }
        if self.points.len() > 8 {
            write!(f, "; …")?;
        }
        Ok(())
    }
}

/// A multi-image motion segmentation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionProblem {
    n: usize,
    d: usize,
    point_counts: Vec<usize>,
    offsets: Vec<usize>,
    edges: Vec<PartialSegmentation>,
    ground_truth: Option<Labeling>,
    pub id: Option<String>,
    pub seed: Option<u64>,
}

impl MotionProblem {
    /// Validates and stores an instance. Edges are sorted by `(i, j)`.
    pub fn new(
        d: usize,
        point_counts: Vec<usize>,
        mut edges: Vec<PartialSegmentation>,
        ground_truth: Option<Labeling>,
    ) -> Result<Self> {
        let n = point_counts.len();
        if d == 0 {
            return Err(Error::InvalidProblem("d must be at least 1".into()));
        }
        edges.sort_by_key(|e| (e.i, e.j));
        for w in edges.windows(2) {
            if (w[0].i, w[0].j) == (w[1].i, w[1].j) {
                return Err(Error::InvalidProblem(format!(
                    "duplicate edge ({}, {})",
                    w[0].i, w[0].j
                )));
            }
        }
        for e in &edges {
            if e.i >= e.j || e.j >= n {
                return Err(Error::InvalidProblem(format!(
                    "edge ({}, {}) must satisfy i < j < n = {n}",
                    e.i, e.j
                )));
            }
            let want = (point_counts[e.i], point_counts[e.j]);
            if (e.z.rows(), e.z.cols()) != want {
                return Err(Error::InvalidProblem(format!(
                    "edge ({}, {}) block is {}×{}, expected {}×{}",
                    e.i,
                    e.j,
                    e.z.rows(),
                    e.z.cols(),
                    want.0,
                    want.1
                )));
            }
        }
        if let Some(gt) = &ground_truth {
            gt.validate(d, Some(&point_counts))?;
        }
        let offsets = point_counts
            .iter()
            .scan(0, |acc, &c| {
                let o = *acc;
                *acc += c;
                Some(o)
            })
            .collect();
        Ok(Self { n, d, point_counts, offsets, edges, ground_truth, id: None, seed: None })
    }

    pub fn with_provenance(mut self, id: Option<String>, seed: Option<u64>) -> Self {
        self.id = id;
        self.seed = seed;
        self
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn point_counts(&self) -> &[usize] {
        &self.point_counts
    }

    /// Global index of the first point of each image.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Total number of points `p`.
    pub fn total_points(&self) -> usize {
        self.point_counts.iter().sum()
    }

    /// Number of QUBO variables `k = d·p`.
    pub fn num_variables(&self) -> usize {
        self.d * self.total_points()
    }

    pub fn edges(&self) -> &[PartialSegmentation] {
        &self.edges
    }

    pub fn edge(&self, i: usize, j: usize) -> Option<&PartialSegmentation> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.edges.binary_search_by_key(&key, |e| (e.i, e.j)).ok().map(|x| &self.edges[x])
    }

    pub fn ground_truth(&self) -> Option<&Labeling> {
        self.ground_truth.as_ref()
    }

    pub(crate) fn with_edges(&self, edges: Vec<PartialSegmentation>) -> Self {
        Self { edges, ..self.clone() }
    }

    /// Ground-truth motion counts `m_i` for every image.
    pub fn ground_truth_counts(&self) -> Result<Vec<Vec<usize>>> {
        let gt = self.ground_truth.as_ref().ok_or(Error::MissingGroundTruth)?;
        Ok((0..self.n).map(|i| motion_counts(gt, i, self.d)).collect())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ProblemFile = serde_json::from_str(s)?;
        file.into_problem()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ProblemFile::from(self))?)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

/// Symmetric `p × p` block matrix with `Z_ij` at block `(i, j)`, its
/// transpose at `(j, i)`, and zeros on diagonal and absent-edge blocks.
pub fn assemble_block_z(problem: &MotionProblem) -> BinaryMatrix {
    let p = problem.total_points();
    let off = problem.offsets();
    let mut z = BinaryMatrix::zeros(p, p);
    for e in problem.edges() {
        for h in 0..e.z.rows() {
            for k in 0..e.z.cols() {
                let v = e.z.get(h, k);
                if v == 1 {
                    z.set(off[e.i] + h, off[e.j] + k, 1);
                    z.set(off[e.j] + k, off[e.i] + h, 1);
                }
            }
        }
    }
    z
}

/// Vectorizes a labeling: `y[k·p + a] = 1` iff global point `a` has label `k`.
pub fn labels_to_bits(labeling: &Labeling, d: usize) -> Result<BitAssignment> {
    labeling.validate(d, None)?;
    let p: usize = labeling.labels.iter().map(Vec::len).sum();
    let mut bits = vec![0u8; d * p];
    for (a, &label) in labeling.labels.iter().flatten().enumerate() {
        bits[label * p + a] = 1;
    }
    Ok(BitAssignment::new(bits))
}

/// Inverse of [`labels_to_bits`] on the feasible set.
///
/// Fails with [`Error::Infeasible`] listing every point whose `d` slots do not
/// sum to exactly one.
pub fn bits_to_labels(y: &BitAssignment, problem: &MotionProblem) -> Result<Labeling> {
    let d = problem.d();
    let p = problem.total_points();
    if y.len() != d * p {
        return Err(Error::LengthMismatch { expected: d * p, got: y.len() });
    }
    let mut flat = vec![0usize; p];
    let mut bad = Vec::new();
    for (a, slot) in flat.iter_mut().enumerate() {
        let mut sum = 0;
        for k in 0..d {
            if y.bits[k * p + a] == 1 {
                sum += 1;
                *slot = k;
            }
        }
        if sum != 1 {
            bad.push((a, sum));
        }
    }
    if !bad.is_empty() {
        return Err(Error::Infeasible(InfeasibilityReport { points: bad }));
    }
    let labels = problem
        .offsets()
        .iter()
        .zip(problem.point_counts())
        .map(|(&o, &c)| flat[o..o + c].to_vec())
        .collect();
    Ok(Labeling::new(labels))
}

/// `Z_ij = X_i X_jᵀ`: entry `(h, k)` is 1 iff point `h` of image `i` and
/// point `k` of image `j` share a label.
pub fn relative_from_absolute(labeling: &Labeling, i: usize, j: usize) -> BinaryMatrix {
    let (li, lj) = (labeling.image(i), labeling.image(j));
    let mut z = BinaryMatrix::zeros(li.len(), lj.len());
    for (h, a) in li.iter().enumerate() {
        for (k, b) in lj.iter().enumerate() {
            if a == b {
                z.set(h, k, 1);
            }
        }
    }
    z
}

/// Consistency error `Σ_(i,j)∈E ||Z_ij - X_i X_jᵀ||²_F`.
pub fn consistency_error(problem: &MotionProblem, labeling: &Labeling) -> u64 {
    problem
        .edges()
        .iter()
        .map(|e| e.z.hamming(&relative_from_absolute(labeling, e.i, e.j)) as u64)
        .sum()
}

/// `[m_i]_h`: number of points of image `i` carrying label `h`.
pub fn motion_counts(labeling: &Labeling, i: usize, d: usize) -> Vec<usize> {
    let mut m = vec![0; d];
    for &l in labeling.image(i) {
        m[l] += 1;
    }
    m
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeFile {
    i: usize,
    j: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    z: Option<Vec<Vec<u8>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    z_ones: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProblemFile {
    n: usize,
    d: usize,
    point_counts: Vec<usize>,
    edges: Vec<EdgeFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
}

impl ProblemFile {
    fn into_problem(self) -> Result<MotionProblem> {
        if self.n != self.point_counts.len() {
            return Err(Error::InvalidProblem(format!(
                "n = {} but {} point counts given",
                self.n,
                self.point_counts.len()
            )));
        }
        let mut edges = Vec::with_capacity(self.edges.len());
        for e in self.edges {
            let (rows, cols) = match (self.point_counts.get(e.i), self.point_counts.get(e.j)) {
                (Some(&r), Some(&c)) => (r, c),
                _ => {
                    return Err(Error::InvalidProblem(format!(
                        "edge ({}, {}) references a missing image",
                        e.i, e.j
                    )))
                }
            };
            let z = match (e.z, e.z_ones) {
                (Some(rows_), None) => {
                    let m = BinaryMatrix::from_rows(&rows_)?;
                    // an empty row list has no column count of its own
                    if rows_.is_empty() { BinaryMatrix::zeros(0, cols) } else { m }
                }
                (None, Some(ones)) => BinaryMatrix::from_ones(rows, cols, &ones)?,
                _ => {
                    return Err(Error::InvalidProblem(format!(
                        "edge ({}, {}) needs exactly one of `z` or `z_ones`",
                        e.i, e.j
                    )))
                }
            };
            edges.push(PartialSegmentation { i: e.i, j: e.j, z });
        }
        let gt = self.ground_truth.map(Labeling::new);
        Ok(MotionProblem::new(self.d, self.point_counts, edges, gt)?
            .with_provenance(self.id, self.seed))
    }
}

impl From<&MotionProblem> for ProblemFile {
    fn from(p: &MotionProblem) -> Self {
        Self {
            n: p.n,
            d: p.d,
            point_counts: p.point_counts.clone(),
            edges: p
                .edges
                .iter()
                .map(|e| EdgeFile { i: e.i, j: e.j, z: Some(e.z.to_rows()), z_ones: None })
                .collect(),
            ground_truth: p.ground_truth.as_ref().map(|g| g.labels.clone()),
            seed: p.seed,
            id: p.id.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single_edge(z: Vec<Vec<u8>>, pc: Vec<usize>) -> MotionProblem {
        let z = BinaryMatrix::from_rows(&z).unwrap();
        MotionProblem::new(2, pc, vec![PartialSegmentation { i: 0, j: 1, z }], None).unwrap()
    }

    fn noiseless(labels: Vec<Vec<usize>>, d: usize) -> MotionProblem {
        let gt = Labeling::new(labels);
        let n = gt.n_images();
        let mut edges = vec![];
        for i in 0..n {
            for j in i + 1..n {
                edges.push(PartialSegmentation { i, j, z: relative_from_absolute(&gt, i, j) });
            }
        }
        MotionProblem::new(d, gt.point_counts(), edges, Some(gt)).unwrap()
    }

    #[test]
    fn block_z_without_edges_is_zero() {
        let p = MotionProblem::new(2, vec![3, 2], vec![], None).unwrap();
        let z = assemble_block_z(&p);
        assert_eq!((z.rows(), z.cols()), (5, 5));
        assert_eq!(z.count_ones(), 0);
    }

    #[test]
    fn block_z_two_single_points() {
        let p = single_edge(vec![vec![1]], vec![1, 1]);
        assert_eq!(assemble_block_z(&p).to_rows(), vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn block_z_three_images_sixteen_points() {
        let labels = (0..3).map(|i| (0..16).map(|h| (h + i) % 2).collect()).collect();
        let p = noiseless(labels, 2);
        let z = assemble_block_z(&p);
        assert_eq!(z.rows(), 48);
        assert!(z.is_symmetric());
        for img in 0..3 {
            for h in 0..16 {
                for k in 0..16 {
                    assert_eq!(z.get(16 * img + h, 16 * img + k), 0);
                }
            }
        }
    }

    #[test]
    fn invalid_problems_rejected() {
        let z = BinaryMatrix::ones(1, 1);
        let e = |i, j| PartialSegmentation { i, j, z: z.clone() };
        assert!(MotionProblem::new(2, vec![1, 1], vec![e(1, 0)], None).is_err());
        assert!(MotionProblem::new(2, vec![1, 1], vec![e(0, 1), e(0, 1)], None).is_err());
        assert!(MotionProblem::new(2, vec![1, 2], vec![e(0, 1)], None).is_err());
        assert!(MotionProblem::new(0, vec![1, 1], vec![], None).is_err());
        assert!(BinaryMatrix::from_rows(&[vec![0, 2]]).is_err());
    }

    #[test]
    fn labels_to_bits_examples() {
        let l = Labeling::new(vec![vec![0, 1]]);
        assert_eq!(labels_to_bits(&l, 2).unwrap().bits, vec![1, 0, 0, 1]);
        let zeros = Labeling::new(vec![vec![0, 0], vec![0]]);
        assert_eq!(labels_to_bits(&zeros, 3).unwrap().bits, vec![1, 1, 1, 0, 0, 0, 0, 0, 0]);
        assert!(matches!(
            labels_to_bits(&Labeling::new(vec![vec![2]]), 2),
            Err(Error::LabelOutOfRange { label: 2, .. })
        ));
    }

    #[test]
    fn bits_to_labels_reports_infeasible_points() {
        let p = MotionProblem::new(2, vec![2, 1], vec![], None).unwrap();
        match bits_to_labels(&BitAssignment::new(vec![0; 6]), &p) {
            Err(Error::Infeasible(r)) => assert_eq!(r.points, vec![(0, 0), (1, 0), (2, 0)]),
            other => panic!("{other:?}"),
        }
        // point 1 assigned to both motions
        match bits_to_labels(&BitAssignment::new(vec![1, 1, 0, 0, 1, 1]), &p) {
            Err(Error::Infeasible(r)) => assert_eq!(r.points, vec![(1, 2)]),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            bits_to_labels(&BitAssignment::new(vec![0; 5]), &p),
            Err(Error::LengthMismatch { expected: 6, got: 5 })
        ));
    }

    #[test]
    fn relative_from_absolute_examples() {
        let l = Labeling::new(vec![vec![0, 1], vec![0, 1]]);
        assert_eq!(relative_from_absolute(&l, 0, 1).to_rows(), vec![vec![1, 0], vec![0, 1]]);
        let same = Labeling::new(vec![vec![1, 1, 1], vec![1, 1]]);
        assert_eq!(relative_from_absolute(&same, 0, 1), BinaryMatrix::ones(3, 2));
        let l = Labeling::new(vec![vec![0, 0, 1], vec![1, 0]]);
        assert_eq!(
            relative_from_absolute(&l, 0, 1).to_rows(),
            vec![vec![0, 1], vec![0, 1], vec![1, 0]]
        );
    }

    #[test]
    fn consistency_error_examples() {
        let p = noiseless(vec![vec![0, 1, 1], vec![1, 0], vec![0]], 2);
        let gt = p.ground_truth().unwrap().clone();
        assert_eq!(consistency_error(&p, &gt), 0);
        assert_eq!(consistency_error(&p, &gt.permuted(&[1, 0])), 0);

        let mut edges = p.edges().to_vec();
        edges[0].z.flip(0, 0);
        let noisy = p.with_edges(edges);
        assert_eq!(consistency_error(&noisy, &gt), 1);
        assert_eq!(consistency_error(&noisy, &gt.permuted(&[1, 0])), 1);
    }

    #[test]
    fn motion_count_examples() {
        let l = Labeling::new(vec![vec![0, 1, 0], vec![0, 0, 0, 0]]);
        assert_eq!(motion_counts(&l, 0, 2), vec![2, 1]);
        assert_eq!(motion_counts(&l, 1, 3), vec![4, 0, 0]);
        // 96 variables: two motions with eight points each
        let l = Labeling::new(vec![[vec![0; 8], vec![1; 8]].concat(); 3]);
        assert_eq!(motion_counts(&l, 2, 2), vec![8, 8]);
    }

    #[test]
    fn json_dense_and_sparse_forms() {
        let dense = r#"{"n":2,"d":2,"point_counts":[2,1],
            "edges":[{"i":0,"j":1,"z":[[1],[0]]}],"ground_truth":[[0,1],[0]],"seed":5}"#;
        let sparse = r#"{"n":2,"d":2,"point_counts":[2,1],
            "edges":[{"i":0,"j":1,"z_ones":[[0,0]]}],"ground_truth":[[0,1],[0]],"seed":5}"#;
        let a = MotionProblem::from_json_str(dense).unwrap();
        let b = MotionProblem::from_json_str(sparse).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.seed, Some(5));
        let again = MotionProblem::from_json_str(&a.to_json_string().unwrap()).unwrap();
        assert_eq!(a, again);
        let both = r#"{"n":2,"d":2,"point_counts":[1,1],"edges":[{"i":0,"j":1}]}"#;
        assert!(MotionProblem::from_json_str(both).is_err());
    }

    fn labeling_strategy() -> impl Strategy<Value = (Labeling, usize)> {
        (1usize..5).prop_flat_map(|d| {
            (prop::collection::vec(prop::collection::vec(0..d, 0..6), 1..5), Just(d))
                .prop_map(|(l, d)| (Labeling::new(l), d))
        })
    }

    proptest! {
        #[test]
        fn vectorization_round_trips((lab, d) in labeling_strategy()) {
            let p = MotionProblem::new(d, lab.point_counts(), vec![], None).unwrap();
            let y = labels_to_bits(&lab, d).unwrap();
            prop_assert_eq!(y.len(), d * p.total_points());
            prop_assert_eq!(bits_to_labels(&y, &p).unwrap(), lab);
        }

        #[test]
        fn relative_matches_explicit_product((lab, d) in labeling_strategy()) {
            // X_i as explicit p_i × d one-hot matrices
            let x: Vec<Vec<Vec<u32>>> = lab.labels.iter()
                .map(|img| img.iter().map(|&l| (0..d).map(|k| (k == l) as u32).collect()).collect())
                .collect();
            for i in 0..lab.n_images() {
                for j in 0..lab.n_images() {
                    let z = relative_from_absolute(&lab, i, j);
                    for h in 0..x[i].len() {
                        for k in 0..x[j].len() {
                            let dot: u32 = (0..d).map(|c| x[i][h][c] * x[j][k][c]).sum();
                            prop_assert_eq!(z.get(h, k) as u32, dot);
                        }
                    }
                }
                // X_iᵀ X_i = diag(m_i)
                let m = motion_counts(&lab, i, d);
                for a in 0..d {
                    for b in 0..d {
                        let v: u32 = x[i].iter().map(|row| row[a] * row[b]).sum();
                        prop_assert_eq!(v as usize, if a == b { m[a] } else { 0 });
                    }
                }
                prop_assert_eq!(m.iter().sum::<usize>(), lab.image(i).len());
            }
        }

        #[test]
        fn consistency_error_zero_iff_blocks_match(
            (lab, d) in labeling_strategy(), flip in any::<prop::sample::Index>()
        ) {
            let n = lab.n_images();
            let mut edges = vec![];
            for i in 0..n { for j in i + 1..n {
                edges.push(PartialSegmentation { i, j, z: relative_from_absolute(&lab, i, j) });
            }}
            let p = MotionProblem::new(d, lab.point_counts(), edges.clone(), Some(lab.clone())).unwrap();
            prop_assert_eq!(consistency_error(&p, &lab), 0);
            let z = assemble_block_z(&p);
            prop_assert!(z.is_symmetric());
            let nonempty: Vec<usize> = (0..edges.len()).filter(|&e| edges[e].z.rows() * edges[e].z.cols() > 0).collect();
            if !nonempty.is_empty() {
                let e = nonempty[flip.index(nonempty.len())];
                let (r, c) = (edges[e].z.rows(), edges[e].z.cols());
                let cell = flip.index(r * c);
                edges[e].z.flip(cell / c, cell % c);
                let noisy = p.with_edges(edges);
                prop_assert_eq!(consistency_error(&noisy, &lab), 1);
            }
        }
    }
}
