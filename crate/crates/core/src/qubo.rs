//! QUBO compilation of the synchronization objective.
//!
//! Energies are `yᵀ·Q·y + sᵀ·y + c` with `Q` symmetric. Linear equality
//! constraints `A·y = b` enter as penalties `λ·||A·y - b||²`, expanded into
//! `(λ·AᵀA, -2λ·Aᵀb, λ·bᵀb)`; the constant is kept so energies of feasible
//! assignments line up with the consistency error.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{assemble_block_z, MotionProblem};
use crate::scalar::Scalar;

/// Dense symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> SymMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    /// Symmetric matrix from a full row-major array; fails if asymmetric.
    pub fn from_dense(n: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::LengthMismatch { expected: n * n, got: data.len() });
        }
        let m = Self { n, data };
        if !m.is_symmetric() {
            return Err(Error::InvalidParams("quadratic matrix is not symmetric".into()));
        }
        Ok(m)
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    /// Adds `v` to `(i, j)` and, off the diagonal, to `(j, i)`.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] += v;
        if i != j {
            self.data[j * self.n + i] += v;
        }
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (i + 1..self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().filter(|v| !v.is_zero()).count()
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&v| v * s).collect() }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.n, other.n);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `I_d ⊗ self`.
    pub fn kron_identity(&self, d: usize) -> Self {
        let p = self.n;
        let mut out = Self::zeros(d * p);
        for k in 0..d {
            for a in 0..p {
                let dst = (k * p + a) * d * p + k * p;
                out.data[dst..dst + p].copy_from_slice(self.row(a));
            }
        }
        out
    }

    /// `yᵀ·self·y` for binary `y`.
    pub fn quad_form(&self, y: &[u8]) -> T {
        assert_eq!(y.len(), self.n);
        let on: Vec<usize> = (0..self.n).filter(|&i| y[i] == 1).collect();
        let mut acc = T::zero();
        for &i in &on {
            let row = self.row(i);
            for &j in &on {
                acc += row[j];
            }
        }
        acc
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> SymMatrix<U> {
        SymMatrix { n: self.n, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// `(i, j, v)` for every nonzero with `i <= j`.
    pub fn upper_triangle(&self) -> Vec<(usize, usize, T)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i..self.n {
                let v = self.get(i, j);
                if !v.is_zero() {
                    out.push((i, j, v));
                }
            }
        }
        out
    }
}

/// Integer linear equality system `rows·y = rhs` over `cols` variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearSystem {
    pub cols: usize,
    pub rows: Vec<Vec<i64>>,
    pub rhs: Vec<i64>,
}

impl LinearSystem {
    pub fn residual(&self, y: &[u8]) -> Vec<i64> {
        assert_eq!(y.len(), self.cols);
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, &b)| {
                row.iter().zip(y).filter(|(_, &v)| v == 1).map(|(&a, _)| a).sum::<i64>() - b
            })
            .collect()
    }

    pub fn is_satisfied_by(&self, y: &[u8]) -> bool {
        self.residual(y).iter().all(|&r| r == 0)
    }
}

/// Row constraints `X·1_d = 1_p` as `A = 1_dᵀ ⊗ I_p`, `b = 1_p`.
pub fn build_row_constraints(problem: &MotionProblem) -> LinearSystem {
    let (d, p) = (problem.d(), problem.total_points());
    let rows = (0..p)
        .map(|a| {
            let mut row = vec![0; d * p];
            for k in 0..d {
                row[k * p + a] = 1;
            }
            row
        })
        .collect();
    LinearSystem { cols: d * p, rows, rhs: vec![1; p] }
}

fn check_counts(problem: &MotionProblem, counts: &[Vec<usize>]) -> Result<()> {
    if counts.len() != problem.n() {
        return Err(Error::InvalidCounts(format!(
            "{} count vectors for {} images",
            counts.len(),
            problem.n()
        )));
    }
    for (i, (m, &pi)) in counts.iter().zip(problem.point_counts()).enumerate() {
        if m.len() != problem.d() {
            return Err(Error::InvalidCounts(format!(
                "image {i}: {} counts for d = {}",
                m.len(),
                problem.d()
            )));
        }
        let s: usize = m.iter().sum();
        if s != pi {
            return Err(Error::InvalidCounts(format!("image {i}: counts sum to {s}, p_i = {pi}")));
        }
    }
    Ok(())
}

/// Count constraints `K·X = M` as `E = I_d ⊗ K`, `f = vect(M)`.
///
/// Row `k·n + i` sums the slots of image `i` under motion `k`.
pub fn build_count_constraints(
    problem: &MotionProblem,
    counts: &[Vec<usize>],
) -> Result<LinearSystem> {
    check_counts(problem, counts)?;
    let (n, d, p) = (problem.n(), problem.d(), problem.total_points());
    let mut rows = Vec::with_capacity(n * d);
    let mut rhs = Vec::with_capacity(n * d);
    for k in 0..d {
        for (i, m) in counts.iter().enumerate() {
            let mut row = vec![0; d * p];
            let o = problem.offsets()[i];
            for a in o..o + problem.point_counts()[i] {
                row[k * p + a] = 1;
            }
            rows.push(row);
            rhs.push(m[k] as i64);
        }
    }
    Ok(LinearSystem { cols: d * p, rows, rhs })
}

/// Quadratic, linear and constant parts of a penalty term.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyTerms<T> {
    pub quadratic: SymMatrix<T>,
    pub linear: Vec<T>,
    pub offset: T,
}

/// Expands `λ·||A·y - b||²` into `(λ·AᵀA, -2λ·Aᵀb, λ·bᵀb)`.
pub fn expand_penalty<T: Scalar>(sys: &LinearSystem, lambda: T) -> Result<PenaltyTerms<T>> {
    if lambda <= T::zero() {
        return Err(Error::InvalidParams(format!("penalty weight must be positive, got {lambda}")));
    }
    let k = sys.cols;
    let mut quadratic = SymMatrix::zeros(k);
    let mut linear = vec![T::zero(); k];
    let mut offset = T::zero();
    for (row, &b) in sys.rows.iter().zip(&sys.rhs) {
        let nz: Vec<(usize, i64)> =
            row.iter().enumerate().filter(|(_, &a)| a != 0).map(|(i, &a)| (i, a)).collect();
        for &(i, ai) in &nz {
            for &(j, aj) in &nz {
                quadratic.data[i * k + j] += lambda * T::from_int(ai * aj);
            }
            linear[i] -= lambda * T::from_int(2 * ai * b);
        }
        offset += lambda * T::from_int(b * b);
    }
    Ok(PenaltyTerms { quadratic, linear, offset })
}

/// How v1 fills the blocks of `W = 2Z - 1` that carry no measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FillMode {
    /// Diagonal and absent-edge blocks are 0: the objective sums over measured edges only.
    #[default]
    Zeroed,
    /// Diagonal and absent-edge blocks are -1, i.e. `2Z - 1` taken over the full matrix.
    Literal,
}

impl fmt::Display for FillMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FillMode::Zeroed => "zeroed",
            FillMode::Literal => "literal",
        })
    }
}

impl FromStr for FillMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zeroed" => Ok(Self::Zeroed),
            "literal" => Ok(Self::Literal),
            _ => Err(Error::InvalidParams(format!("unknown fill mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Dense objective, row penalty.
    V1,
    /// Sparse objective, row and count penalties.
    V2,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::V1 => "v1",
            Variant::V2 => "v2",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "v1" => Ok(Self::V1),
            "v2" => Ok(Self::V2),
            _ => Err(Error::InvalidParams(format!("unknown variant {s:?}"))),
        }
    }
}

/// Penalty weights `λ1` (v1 rows), `λ2` (v2 rows), `λ3` (v2 counts).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl PenaltyWeights {
    /// Weights for generated instances.
    pub const SYNTHETIC: Self = Self { lambda1: 14.0, lambda2: 27.5, lambda3: 3.2 };
    /// Weights for instances read from dataset files.
    pub const DATASET: Self = Self { lambda1: 10.0, lambda2: 10.0, lambda3: 4.0 };
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        Self::SYNTHETIC
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QuboMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    /// `[λ1]` for v1, `[λ2, λ3]` for v2.
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fill: Option<FillMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_id: Option<String>,
}

/// `min yᵀ·quadratic·y + linearᵀ·y + offset` over binary `y` of length `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuboInstance<T> {
    quadratic: SymMatrix<T>,
    linear: Vec<T>,
    offset: T,
    pub meta: QuboMeta,
}

impl<T: Scalar> QuboInstance<T> {
    pub fn new(quadratic: SymMatrix<T>, linear: Vec<T>, offset: T, meta: QuboMeta) -> Result<Self> {
        if linear.len() != quadratic.dim() {
            return Err(Error::LengthMismatch { expected: quadratic.dim(), got: linear.len() });
        }
        if !quadratic.is_symmetric() {
            return Err(Error::InvalidParams("quadratic matrix is not symmetric".into()));
        }
        Ok(Self { quadratic, linear, offset, meta })
    }

    #[inline]
    pub fn num_variables(&self) -> usize {
        self.linear.len()
    }

    pub fn quadratic(&self) -> &SymMatrix<T> {
        &self.quadratic
    }

    pub fn linear(&self) -> &[T] {
        &self.linear
    }

    pub fn offset(&self) -> T {
        self.offset
    }

    pub fn energy(&self, y: &[u8]) -> Result<T> {
        if y.len() != self.num_variables() {
            return Err(Error::LengthMismatch { expected: self.num_variables(), got: y.len() });
        }
        let lin: T = self.linear.iter().zip(y).filter(|(_, &b)| b == 1).map(|(&s, _)| s).sum();
        Ok(self.quadratic.quad_form(y) + lin + self.offset)
    }

    /// Moves the linear part onto the diagonal (`y_i² = y_i` on binaries).
    pub fn fold_linear(&self) -> Self {
        let mut quadratic = self.quadratic.clone();
        for (i, &s) in self.linear.iter().enumerate() {
            quadratic.add(i, i, s);
        }
        Self {
            quadratic,
            linear: vec![T::zero(); self.linear.len()],
            offset: self.offset,
            meta: self.meta.clone(),
        }
    }

    pub fn to_f64(&self) -> QuboInstance<f64> {
        QuboInstance {
            quadratic: self.quadratic.map(Scalar::as_f64),
            linear: self.linear.iter().map(|&v| v.as_f64()).collect(),
            offset: self.offset.as_f64(),
            meta: self.meta.clone(),
        }
    }

    pub fn to_json_string(&self) -> Result<String> {
        let file = QuboFile {
            k: self.num_variables(),
            quadratic_upper: self
                .quadratic
                .upper_triangle()
                .into_iter()
                .map(|(i, j, v)| (i, j, v.as_f64()))
                .collect(),
            linear: self.linear.iter().map(|v| v.as_f64()).collect(),
            offset: self.offset.as_f64(),
            meta: self.meta.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

impl QuboInstance<f64> {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: QuboFile = serde_json::from_str(s)?;
        let mut q = SymMatrix::zeros(file.k);
        for (i, j, v) in file.quadratic_upper {
            if i > j || j >= file.k {
                return Err(Error::InvalidParams(format!(
                    "quadratic entry ({i}, {j}) is not in the upper triangle of a {0}×{0} matrix",
                    file.k
                )));
            }
            q.set(i, j, v);
        }
        Self::new(q, file.linear, file.offset, file.meta)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct QuboFile {
    k: usize,
    quadratic_upper: Vec<(usize, usize, f64)>,
    linear: Vec<f64>,
    offset: f64,
    #[serde(default)]
    meta: QuboMeta,
}

/// v1 objective matrix `-I_d ⊗ W`, `W = 2Z - 1` on measured blocks.
pub fn v1_objective<T: Scalar>(problem: &MotionProblem, fill: FillMode) -> SymMatrix<T> {
    let p = problem.total_points();
    let off = problem.offsets();
    let background = match fill {
        FillMode::Zeroed => T::zero(),
        FillMode::Literal => -T::one(),
    };
    let mut w = SymMatrix { n: p, data: vec![background; p * p] };
    let two = T::from_int(2);
    for e in problem.edges() {
        for h in 0..e.z.rows() {
            for c in 0..e.z.cols() {
                let v = two * T::from_int(e.z.get(h, c) as i64) - T::one();
                w.set(off[e.i] + h, off[e.j] + c, v);
            }
        }
    }
    w.scaled(-T::one()).kron_identity(problem.d())
}

/// v2 objective matrix `-I_d ⊗ Z`.
pub fn v2_objective<T: Scalar>(problem: &MotionProblem) -> SymMatrix<T> {
    let z = assemble_block_z(problem);
    let p = z.rows();
    let mut m = SymMatrix::zeros(p);
    for a in 0..p {
        for b in 0..p {
            if z.get(a, b) == 1 {
                m.data[a * p + b] = -T::one();
            }
        }
    }
    m.kron_identity(problem.d())
}

fn with_penalties<T: Scalar>(
    objective: SymMatrix<T>,
    penalties: &[PenaltyTerms<T>],
    meta: QuboMeta,
) -> Result<QuboInstance<T>> {
    let k = objective.dim();
    let mut quadratic = objective;
    let mut linear = vec![T::zero(); k];
    let mut offset = T::zero();
    for pen in penalties {
        quadratic.add_assign(&pen.quadratic);
        for (a, &b) in linear.iter_mut().zip(&pen.linear) {
            *a += b;
        }
        offset += pen.offset;
    }
    QuboInstance::new(quadratic, linear, offset, meta)
}

/// Dense formulation: `-I_d ⊗ W + λ1·||A·y - 1||²`.
pub fn build_v1<T: Scalar>(
    problem: &MotionProblem,
    lambda1: T,
    fill: FillMode,
) -> Result<QuboInstance<T>> {
    let rows = expand_penalty(&build_row_constraints(problem), lambda1)?;
    let meta = QuboMeta {
        variant: Some(Variant::V1),
        lambdas: vec![lambda1.as_f64()],
        fill: Some(fill),
        problem_id: problem.id.clone(),
    };
    with_penalties(v1_objective(problem, fill), &[rows], meta)
}

/// Sparse formulation: `-I_d ⊗ Z + λ2·||A·y - 1||² + λ3·||E·y - f||²`.
pub fn build_v2<T: Scalar>(
    problem: &MotionProblem,
    lambda2: T,
    lambda3: T,
    counts: &[Vec<usize>],
) -> Result<QuboInstance<T>> {
    let rows = expand_penalty(&build_row_constraints(problem), lambda2)?;
    let cnt = expand_penalty(&build_count_constraints(problem, counts)?, lambda3)?;
    let meta = QuboMeta {
        variant: Some(Variant::V2),
        lambdas: vec![lambda2.as_f64(), lambda3.as_f64()],
        fill: None,
        problem_id: problem.id.clone(),
    };
    with_penalties(v2_objective(problem), &[rows, cnt], meta)
}

/// Builds an `f64` QUBO of either variant. v2 counts default to the ground
/// truth when `counts` is `None`.
pub fn build(
    problem: &MotionProblem,
    variant: Variant,
    weights: &PenaltyWeights,
    fill: FillMode,
    counts: Option<&[Vec<usize>]>,
) -> Result<QuboInstance<f64>> {
    match variant {
        Variant::V1 => build_v1(problem, weights.lambda1, fill),
        Variant::V2 => {
            let owned;
            let counts = match counts {
                Some(c) => c,
                None => {
                    owned = problem.ground_truth_counts().map_err(|_| {
                        Error::InvalidCounts(
                            "v2 needs motion counts: none given and no ground truth".into(),
                        )
                    })?;
                    &owned
                }
            };
            build_v2(problem, weights.lambda2, weights.lambda3, counts)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{BinaryMatrix, Labeling, PartialSegmentation};
    use num_rational::Rational64;
    use proptest::prelude::*;

    fn two_single_points() -> MotionProblem {
        let z = BinaryMatrix::ones(1, 1);
        let gt = Labeling::new(vec![vec![0], vec![0]]);
        MotionProblem::new(2, vec![1, 1], vec![PartialSegmentation { i: 0, j: 1, z }], Some(gt))
            .unwrap()
    }

    #[test]
    fn row_constraints_kronecker_layout() {
        let p = MotionProblem::new(2, vec![2], vec![], None).unwrap();
        let a = build_row_constraints(&p);
        assert_eq!(a.rows, vec![vec![1, 0, 1, 0], vec![0, 1, 0, 1]]);
        assert_eq!(a.rhs, vec![1, 1]);
        assert!(a.is_satisfied_by(&[1, 0, 0, 1]));
        assert!(a.residual(&[0; 4]).iter().all(|&r| r == -1));
    }

    #[test]
    fn count_constraints_layout() {
        let p = MotionProblem::new(2, vec![2], vec![], None).unwrap();
        let e = build_count_constraints(&p, &[vec![1, 1]]).unwrap();
        assert_eq!(e.rows, vec![vec![1, 1, 0, 0], vec![0, 0, 1, 1]]);
        assert_eq!(e.rhs, vec![1, 1]);
        assert!(build_count_constraints(&p, &[vec![2, 1]]).is_err());
        assert!(build_count_constraints(&p, &[vec![2]]).is_err());
        assert!(build_count_constraints(&p, &[]).is_err());
    }

    #[test]
    fn count_constraints_pin_single_motion_images() {
        // m = (p_i, 0): only the all-motion-0 labeling of the image survives both families
        let p = MotionProblem::new(2, vec![2], vec![], None).unwrap();
        let a = build_row_constraints(&p);
        let e = build_count_constraints(&p, &[vec![2, 0]]).unwrap();
        let ok: Vec<u32> = (0u32..16)
            .filter(|&c| {
                let y: Vec<u8> = (0..4).map(|b| ((c >> b) & 1) as u8).collect();
                a.is_satisfied_by(&y) && e.is_satisfied_by(&y)
            })
            .collect();
        assert_eq!(ok, vec![0b0011]);
    }

    #[test]
    fn penalty_examples() {
        let sys = LinearSystem { cols: 2, rows: vec![vec![1, 1]], rhs: vec![1] };
        let pen = expand_penalty(&sys, 10i64).unwrap();
        let q = QuboInstance::new(pen.quadratic, pen.linear, pen.offset, QuboMeta::default()).unwrap();
        assert_eq!(q.energy(&[1, 1]).unwrap(), 10);
        assert_eq!(q.energy(&[1, 0]).unwrap(), 0);
        assert_eq!(q.energy(&[0, 0]).unwrap(), 10);

        let p = MotionProblem::new(3, vec![2, 3], vec![], None).unwrap();
        let pen = expand_penalty(&build_row_constraints(&p), 7i64).unwrap();
        assert_eq!(pen.offset, 7 * 5);
        assert!(expand_penalty(&sys, 0.0f64).is_err());
    }

    #[test]
    fn v1_without_edges_is_pure_penalty() {
        let p = MotionProblem::new(2, vec![3], vec![], None).unwrap();
        let q = build_v1(&p, 14i64, FillMode::Zeroed).unwrap();
        let pen = expand_penalty(&build_row_constraints(&p), 14i64).unwrap();
        assert_eq!(q.quadratic(), &pen.quadratic);
        assert_eq!(q.energy(&[1, 0, 1, 0, 1, 0]).unwrap(), 0);
        assert_eq!(q.energy(&[0, 0, 0, 1, 1, 1]).unwrap(), 0);
    }

    #[test]
    fn v1_and_v2_hand_evaluations() {
        let p = two_single_points();
        let obj1: SymMatrix<i64> = v1_objective(&p, FillMode::Zeroed);
        assert_eq!(obj1.quad_form(&[1, 1, 0, 0]), -2);
        assert_eq!(obj1.quad_form(&[1, 0, 0, 1]), 0);
        let obj2: SymMatrix<i64> = v2_objective(&p);
        assert_eq!(obj2.quad_form(&[1, 1, 0, 0]), -2);
        assert_eq!(obj2.quad_form(&[1, 0, 0, 1]), 0);

        let q = build_v1(&p, 14i64, FillMode::Zeroed).unwrap();
        assert_eq!(q.energy(&[1, 1, 0, 0]).unwrap(), -2);
        assert_eq!(q.energy(&[0, 0, 1, 1]).unwrap(), -2);
        assert_eq!(q.energy(&[1, 0, 0, 1]).unwrap(), 0);
        assert_eq!(q.energy(&[0; 4]).unwrap(), q.offset());
        assert_eq!(q.offset(), 28);
        assert_eq!(q.meta.variant, Some(Variant::V1));
    }

    #[test]
    fn literal_fill_differs_off_edges() {
        let p = two_single_points();
        let lit: SymMatrix<i64> = v1_objective(&p, FillMode::Literal);
        // diagonal of -I⊗(2Z-1) is +1 in literal mode
        assert_eq!(lit.get(0, 0), 1);
        assert_eq!(lit.get(0, 1), -1);
        let zer: SymMatrix<i64> = v1_objective(&p, FillMode::Zeroed);
        assert_eq!(zer.get(0, 0), 0);
        assert!(lit.nnz() > zer.nnz());
    }

    #[test]
    fn v2_is_sparser_than_literal_v1() {
        let gt = Labeling::new(vec![vec![0, 1, 1], vec![1, 0], vec![0, 0]]);
        let edges = vec![PartialSegmentation {
            i: 0,
            j: 1,
            z: crate::problem::relative_from_absolute(&gt, 0, 1),
        }];
        let p = MotionProblem::new(2, gt.point_counts(), edges, Some(gt)).unwrap();
        let counts = p.ground_truth_counts().unwrap();
        let q2 = build_v2(&p, 27i64, 3i64, &counts).unwrap();
        let q1 = build_v1(&p, 14i64, FillMode::Literal).unwrap();
        assert!(q2.quadratic().nnz() < q1.quadratic().nnz());
        let obj: SymMatrix<i64> = v2_objective(&p);
        let z = assemble_block_z(&p);
        assert_eq!(obj.nnz(), 2 * z.count_ones());
    }

    #[test]
    fn v2_requires_counts() {
        let p = MotionProblem::new(2, vec![1, 1], vec![], None).unwrap();
        assert!(matches!(
            build(&p, Variant::V2, &PenaltyWeights::SYNTHETIC, FillMode::Zeroed, None),
            Err(Error::InvalidCounts(_))
        ));
    }

    #[test]
    fn exact_rational_weights() {
        let p = two_single_points();
        let counts = p.ground_truth_counts().unwrap();
        let l2 = Rational64::new(55, 2);
        let l3 = Rational64::new(16, 5);
        let q = build_v2(&p, l2, l3, &counts).unwrap();
        assert_eq!(q.energy(&[1, 1, 0, 0]).unwrap(), Rational64::from_integer(-2));
        // y=(1,0,0,1): rows fine; image 1 has its point under motion 1 instead of 0,
        // so two count cells are off by one
        assert_eq!(q.energy(&[1, 0, 0, 1]).unwrap(), l3 * Rational64::from_integer(2));
        let qf = build_v2(&p, 27.5f64, 3.2, &counts).unwrap();
        assert!((qf.energy(&[1, 0, 0, 1]).unwrap() - 6.4).abs() < 1e-9);
    }

    #[test]
    fn json_round_trip() {
        let p = two_single_points();
        let q = build_v1(&p, 14.0, FillMode::Literal).unwrap();
        let back = QuboInstance::from_json_str(&q.to_json_string().unwrap()).unwrap();
        assert_eq!(back, q);
        let bad = r#"{"k":2,"quadratic_upper":[[1,0,1.0]],"linear":[0,0],"offset":0}"#;
        assert!(QuboInstance::from_json_str(bad).is_err());
    }

    #[test]
    fn kron_identity_blocks() {
        let b = SymMatrix::from_dense(2, vec![1i64, 2, 2, 3]).unwrap();
        let k = b.kron_identity(2);
        let want = vec![1, 2, 0, 0, 2, 3, 0, 0, 0, 0, 1, 2, 0, 0, 2, 3];
        assert_eq!(k, SymMatrix::from_dense(4, want).unwrap());
    }

    fn random_qubo() -> impl Strategy<Value = (QuboInstance<f64>, Vec<u8>)> {
        (1usize..9).prop_flat_map(|k| {
            (
                prop::collection::vec(-20i32..20, k * k),
                prop::collection::vec(-20i32..20, k),
                -5i32..5,
                prop::collection::vec(0u8..2, k),
            )
                .prop_map(move |(q, s, c, y)| {
                    let mut m = SymMatrix::zeros(k);
                    for i in 0..k {
                        for j in i..k {
                            m.set(i, j, q[i * k + j] as f64 * 0.5);
                        }
                    }
                    let lin = s.iter().map(|&v| v as f64 * 0.25).collect();
                    (QuboInstance::new(m, lin, c as f64, QuboMeta::default()).unwrap(), y)
                })
        })
    }

    proptest! {
        #[test]
        fn fold_linear_preserves_energy((q, y) in random_qubo()) {
            let f = q.fold_linear();
            prop_assert!(f.linear().iter().all(|&v| v == 0.0));
            prop_assert!((q.energy(&y).unwrap() - f.energy(&y).unwrap()).abs() < 1e-9);
            prop_assert_eq!(f.fold_linear(), f);
        }

        #[test]
        fn penalty_equals_squared_residual(
            rows in prop::collection::vec(prop::collection::vec(-2i64..3, 6), 1..4),
            rhs_seed in prop::collection::vec(-2i64..3, 4),
            lambda in 1i64..30,
            y in prop::collection::vec(0u8..2, 6),
        ) {
            let rhs = rhs_seed[..rows.len()].to_vec();
            let sys = LinearSystem { cols: 6, rows, rhs };
            let pen = expand_penalty(&sys, lambda).unwrap();
            let q = QuboInstance::new(pen.quadratic, pen.linear, pen.offset, QuboMeta::default()).unwrap();
            let want: i64 = lambda * sys.residual(&y).iter().map(|r| r * r).sum::<i64>();
            prop_assert_eq!(q.energy(&y).unwrap(), want);
        }
    }
}
