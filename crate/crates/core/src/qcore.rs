//! Dense complex density-matrix algebra over labeled multi-qubit tensor
//! spaces: construction, tensor products, partial trace, spectra, entropies.
//!
//! All entropies are base-2 (bits). Subsystem label order fixes the tensor
//! order, with the first label on the most significant bit of the basis
//! index, so `|001>` on labels `[A, B, C]` is basis index 1.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Tolerance for Hermiticity, trace and positivity checks.
pub const VALIDATION_TOL: f64 = 1e-10;
/// Eigenvalues and probabilities below this are clipped to zero before logs.
pub const EIG_CLIP: f64 = 1e-12;
/// Largest supported register size (dense storage only).
pub const MAX_QUBITS: usize = 10;

/// Ordered list of subsystem labels; every local dimension is 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsystemLayout {
    labels: Vec<String>,
}

impl SubsystemLayout {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::InvalidLayout("no subsystem labels".into()));
        }
        if labels.len() > MAX_QUBITS {
            return Err(Error::InvalidLayout(format!(
                "{} qubits exceeds the supported maximum of {MAX_QUBITS}",
                labels.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(Error::InvalidLayout("empty label".into()));
            }
            if labels[..i].contains(l) {
                return Err(Error::LabelCollision(l.clone()));
            }
        }
        Ok(Self { labels })
    }

    /// Convenience layout `A, B, C, ...` for `n` qubits.
    pub fn alphabetic(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::InvalidLayout(format!("unsupported qubit count {n}")));
        }
        Self::new((0..n).map(|i| ((b'A' + i as u8) as char).to_string()))
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_qubits(&self) -> usize {
        self.labels.len()
    }

    /// Total Hilbert-space dimension, `2^n`.
    pub fn dim(&self) -> usize {
        1usize << self.labels.len()
    }

    /// Tensor position of a label (0 = most significant bit).
    pub fn position(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    /// Basis index from per-subsystem bits (same order as `labels`).
    pub fn flatten(&self, bits: &[u8]) -> usize {
        debug_assert_eq!(bits.len(), self.labels.len());
        bits.iter().fold(0usize, |acc, &b| (acc << 1) | (b as usize & 1))
    }

    /// Per-subsystem bits of a basis index.
    pub fn unflatten(&self, index: usize) -> Vec<u8> {
        let n = self.labels.len();
        (0..n).map(|p| ((index >> (n - 1 - p)) & 1) as u8).collect()
    }

    /// Concatenation with a disjoint layout.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        for l in &other.labels {
            if self.contains(l) {
                return Err(Error::LabelCollision(l.clone()));
            }
        }
        let mut labels = self.labels.clone();
        labels.extend(other.labels.iter().cloned());
        Self::new(labels)
    }
}

/// Hermitian, unit-trace, positive-semidefinite matrix over a layout.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    layout: SubsystemLayout,
    mat: CMatrix,
}

impl DensityMatrix {
    /// Validating constructor.
    pub fn new(layout: SubsystemLayout, mat: CMatrix) -> Result<Self> {
        if mat.nrows() != layout.dim() || mat.ncols() != layout.dim() {
            return Err(Error::Validation {
                invariant: "shape",
                detail: format!(
                    "matrix is {}x{}, layout dimension is {}",
                    mat.nrows(),
                    mat.ncols(),
                    layout.dim()
                ),
            });
        }
        let herm_dev = hermitian_deviation(&mat);
        if herm_dev > VALIDATION_TOL {
            return Err(Error::Validation {
                invariant: "hermitian",
                detail: format!("max |rho - rho^dagger| = {herm_dev:.3e}"),
            });
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > VALIDATION_TOL || tr.im.abs() > VALIDATION_TOL {
            return Err(Error::Validation {
                invariant: "trace",
                detail: format!("trace = {tr}"),
            });
        }
        let min_eig = hermitian_eigenvalues(&mat)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -VALIDATION_TOL {
            return Err(Error::Validation {
                invariant: "positivity",
                detail: format!("minimum eigenvalue = {min_eig:.3e}"),
            });
        }
        Ok(Self { layout, mat })
    }

    pub(crate) fn from_parts_unchecked(layout: SubsystemLayout, mat: CMatrix) -> Self {
        Self { layout, mat }
    }

    /// Diagonal density matrix from a probability vector.
    pub fn from_diagonal(layout: SubsystemLayout, probs: &[f64]) -> Result<Self> {
        if probs.len() != layout.dim() {
            return Err(Error::InvalidParameter(format!(
                "probability table has {} entries, layout dimension is {}",
                probs.len(),
                layout.dim()
            )));
        }
        let mat = CMatrix::from_fn(probs.len(), probs.len(), |r, c| {
            if r == c {
                C64::new(probs[r], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        Self::new(layout, mat)
    }

    pub fn maximally_mixed(layout: SubsystemLayout) -> Self {
        let d = layout.dim();
        let mat = CMatrix::identity(d, d) * C64::new(1.0 / d as f64, 0.0);
        Self { layout, mat }
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn n_qubits(&self) -> usize {
        self.layout.n_qubits()
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Kronecker product with a disjointly labeled state.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let layout = self.layout.concat(&other.layout)?;
        let mat = self.mat.kronecker(&other.mat);
        Ok(Self { layout, mat })
    }

    /// Trace out everything except `keep` (kept labels stay in layout order).
    pub fn partial_trace(&self, keep: &[&str]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::EmptyKeepSet);
        }
        let mut keep_pos: Vec<usize> = Vec::with_capacity(keep.len());
        for l in keep {
            let p = self.layout.position(l)?;
            if keep_pos.contains(&p) {
                return Err(Error::LabelCollision((*l).to_string()));
            }
            keep_pos.push(p);
        }
        keep_pos.sort_unstable();
        let n = self.n_qubits();
        let trace_pos: Vec<usize> = (0..n).filter(|p| !keep_pos.contains(p)).collect();

        let kd = 1usize << keep_pos.len();
        let td = 1usize << trace_pos.len();
        // Assemble a full index from kept bits `k` and traced bits `t`.
        let index_of = |k: usize, t: usize| -> usize {
            let mut idx = 0usize;
            for (i, &p) in keep_pos.iter().enumerate() {
                let bit = (k >> (keep_pos.len() - 1 - i)) & 1;
                idx |= bit << (n - 1 - p);
            }
            for (i, &p) in trace_pos.iter().enumerate() {
                let bit = (t >> (trace_pos.len() - 1 - i)) & 1;
                idx |= bit << (n - 1 - p);
            }
            idx
        };

        let mut out = CMatrix::zeros(kd, kd);
        for r in 0..kd {
            for c in 0..kd {
                let mut acc = C64::new(0.0, 0.0);
                for t in 0..td {
                    acc += self.mat[(index_of(r, t), index_of(c, t))];
                }
                out[(r, c)] = acc;
            }
        }
        let labels: Vec<String> = keep_pos
            .iter()
            .map(|&p| self.layout.labels()[p].clone())
            .collect();
        Ok(Self {
            layout: SubsystemLayout::new(labels)?,
            mat: out,
        })
    }

    /// Von Neumann entropy in bits.
    pub fn von_neumann_entropy(&self) -> f64 {
        entropy_contribution(&self.mat)
    }

    /// Real eigenvalues (descending) with matched orthonormal eigenvectors.
    pub fn spectrum(&self) -> Spectrum {
        let eig = nalgebra::SymmetricEigen::new(self.mat.clone());
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let d = self.mat.nrows();
        let mut eigenvectors = CMatrix::zeros(d, d);
        for (col, &i) in order.iter().enumerate() {
            eigenvectors.set_column(col, &eig.eigenvectors.column(i));
        }
        Spectrum {
            eigenvalues,
            eigenvectors,
        }
    }
}

/// Eigen-decomposition of a density matrix, sorted by descending eigenvalue.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Column `i` is the eigenvector of `eigenvalues[i]`.
    pub eigenvectors: CMatrix,
}

/// Normalized state vector over a layout.
#[derive(Debug, Clone)]
pub struct PureState {
    layout: SubsystemLayout,
    amp: CVector,
}

impl PureState {
    pub fn new(layout: SubsystemLayout, amp: CVector) -> Result<Self> {
        if amp.len() != layout.dim() {
            return Err(Error::Validation {
                invariant: "shape",
                detail: format!(
                    "amplitude vector has {} entries, layout dimension is {}",
                    amp.len(),
                    layout.dim()
                ),
            });
        }
        let norm = amp.norm();
        if (norm - 1.0).abs() > VALIDATION_TOL {
            return Err(Error::Validation {
                invariant: "norm",
                detail: format!("norm = {norm}"),
            });
        }
        Ok(Self { layout, amp })
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amp
    }

    pub fn n_qubits(&self) -> usize {
        self.layout.n_qubits()
    }

    pub fn to_density(&self) -> DensityMatrix {
        let mat = &self.amp * self.amp.adjoint();
        DensityMatrix::from_parts_unchecked(self.layout.clone(), mat)
    }
}

/// Shannon entropy of a probability vector, in bits.
pub fn shannon_entropy(probs: &[f64]) -> Result<f64> {
    let mut sum = 0.0;
    for &p in probs {
        if p < -EIG_CLIP {
            return Err(Error::Validation {
                invariant: "probability",
                detail: format!("negative entry {p:.3e}"),
            });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > VALIDATION_TOL {
        return Err(Error::Validation {
            invariant: "normalization",
            detail: format!("entries sum to {sum}"),
        });
    }
    Ok(probs.iter().map(|&p| neg_p_log2_p(p)).sum())
}

#[inline]
pub(crate) fn neg_p_log2_p(p: f64) -> f64 {
    if p > EIG_CLIP {
        -p * p.log2()
    } else {
        0.0
    }
}

pub(crate) fn hermitian_deviation(m: &CMatrix) -> f64 {
    let mut dev: f64 = 0.0;
    for r in 0..m.nrows() {
        for c in r..m.ncols() {
            dev = dev.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    dev
}

/// Eigenvalues of a Hermitian matrix; closed forms for dims 1 and 2.
pub(crate) fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    match m.nrows() {
        1 => vec![m[(0, 0)].re],
        2 => {
            let a = m[(0, 0)].re;
            let c = m[(1, 1)].re;
            let half_diff = 0.5 * (a - c);
            let disc = (half_diff * half_diff + m[(0, 1)].norm_sqr()).sqrt();
            let mid = 0.5 * (a + c);
            vec![mid + disc, mid - disc]
        }
        _ => {
            let eig = nalgebra::SymmetricEigen::new(m.clone());
            eig.eigenvalues.iter().copied().collect()
        }
    }
}

/// `-sum lambda log2 lambda` over raw eigenvalues; works on unnormalized
/// Hermitian blocks so block-diagonal entropies can be summed directly.
pub(crate) fn entropy_contribution(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).into_iter().map(neg_p_log2_p).sum()
}
