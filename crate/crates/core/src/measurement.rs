//! Rank-one local projective bases and the non-selective measurement
//! channel `Phi(rho) = sum_k Pi_k rho Pi_k`, plus the MID basis built from
//! marginal eigenprojectors.
//!
//! Only product, rank-one, orthogonal projective measurements are
//! representable here; POVMs and entangled measurement bases are out.

use std::collections::BTreeMap;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::qcore::{C64, CMatrix, DensityMatrix, EIG_CLIP};

/// Eigenvalue gap below which a single-qubit marginal counts as degenerate
/// and the MID basis falls back to the computational basis.
pub const MID_DEGENERACY_GAP: f64 = 1e-9;

/// Single-qubit measurement basis given by Bloch angles.
///
/// The basis vector convention is fixed:
/// `|v0> = (cos(theta/2), e^{i phi} sin(theta/2))`, `P1 = I - P0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitBasis {
    theta: f64,
    phi: f64,
}

impl QubitBasis {
    /// Angles are wrapped into `theta in [0, pi]`, `phi in [0, 2 pi)`.
    pub fn new(theta: f64, phi: f64) -> Self {
        let tau = std::f64::consts::TAU;
        let mut t = theta.rem_euclid(tau);
        let mut p = phi;
        if t > std::f64::consts::PI {
            t = tau - t;
            p += std::f64::consts::PI;
        }
        Self {
            theta: t,
            phi: p.rem_euclid(tau),
        }
    }

    /// The sigma_z (computational) basis.
    pub fn computational() -> Self {
        Self { theta: 0.0, phi: 0.0 }
    }

    /// The sigma_x (Hadamard) basis.
    pub fn hadamard() -> Self {
        Self {
            theta: std::f64::consts::FRAC_PI_2,
            phi: 0.0,
        }
    }

    /// Basis whose `P0` projects onto the given single-qubit vector.
    pub fn from_state_vector(a: C64, b: C64) -> Self {
        if b.norm() < EIG_CLIP {
            return Self::computational();
        }
        if a.norm() < EIG_CLIP {
            return Self::new(std::f64::consts::PI, 0.0);
        }
        let theta = 2.0 * b.norm().atan2(a.norm());
        let phi = b.arg() - a.arg();
        Self::new(theta, phi)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Orthonormal basis vectors `(|v0>, |v1>)`.
    pub fn vectors(&self) -> (Vector2<C64>, Vector2<C64>) {
        let c = (0.5 * self.theta).cos();
        let s = (0.5 * self.theta).sin();
        let ph = C64::from_polar(1.0, self.phi);
        let v0 = Vector2::new(C64::new(c, 0.0), ph * s);
        let v1 = Vector2::new(-ph.conj() * s, C64::new(c, 0.0));
        (v0, v1)
    }

    /// Projector pair `(P0, P1)` with `P1 = I - P0`.
    pub fn projectors(&self) -> (Matrix2<C64>, Matrix2<C64>) {
        let (v0, _) = self.vectors();
        let p0 = &v0 * v0.adjoint();
        let p1 = Matrix2::identity() - p0;
        (p0, p1)
    }
}

/// Per-subsystem measurement bases for a product measurement.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProductBasisSpec {
    bases: BTreeMap<String, QubitBasis>,
}

impl ProductBasisSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(label: impl Into<String>, basis: QubitBasis) -> Self {
        let mut spec = Self::new();
        spec.insert(label, basis);
        spec
    }

    /// Computational basis on every given label.
    pub fn computational_on<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Self {
        let mut spec = Self::new();
        for l in labels {
            spec.insert(l, QubitBasis::computational());
        }
        spec
    }

    pub fn insert(&mut self, label: impl Into<String>, basis: QubitBasis) {
        self.bases.insert(label.into(), basis);
    }

    pub fn get(&self, label: &str) -> Option<&QubitBasis> {
        self.bases.get(label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.bases.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    /// Sub-spec keeping only the given labels.
    pub fn restrict_to(&self, labels: &[&str]) -> Self {
        let mut out = Self::new();
        for l in labels {
            if let Some(b) = self.bases.get(*l) {
                out.insert(*l, *b);
            }
        }
        out
    }

    fn check_against(&self, rho: &DensityMatrix) -> Result<Vec<(usize, QubitBasis)>> {
        if self.bases.is_empty() {
            return Err(Error::InvalidParameter("empty measurement spec".into()));
        }
        let mut measured: Vec<(usize, QubitBasis)> = Vec::with_capacity(self.bases.len());
        for (label, basis) in &self.bases {
            measured.push((rho.layout().position(label)?, *basis));
        }
        measured.sort_by_key(|(p, _)| *p);
        Ok(measured)
    }
}

/// One branch of a selective product measurement.
#[derive(Debug, Clone)]
pub struct MeasurementOutcome {
    /// Outcome bit per measured label, in layout order.
    pub outcomes: Vec<(String, u8)>,
    pub probability: f64,
    /// Absent when the branch probability is below 1e-12.
    pub post_state: Option<DensityMatrix>,
}

/// Full-dimension projector for one outcome string of a product measurement.
fn embedded_projector(
    rho: &DensityMatrix,
    measured: &[(usize, QubitBasis)],
    outcome: usize,
) -> CMatrix {
    let mut op = CMatrix::identity(1, 1);
    let mut mi = 0usize;
    for p in 0..rho.n_qubits() {
        if mi < measured.len() && measured[mi].0 == p {
            let (p0, p1) = measured[mi].1.projectors();
            let bit = (outcome >> (measured.len() - 1 - mi)) & 1;
            let proj = if bit == 0 { p0 } else { p1 };
            let full = CMatrix::from_fn(2, 2, |r, c| proj[(r, c)]);
            op = op.kronecker(&full);
            mi += 1;
        } else {
            op = op.kronecker(&CMatrix::identity(2, 2));
        }
    }
    op
}

/// Non-selective product measurement `Phi(rho)`; identity on unmeasured
/// subsystems. Idempotent and entropy non-decreasing.
pub fn apply_channel(rho: &DensityMatrix, spec: &ProductBasisSpec) -> Result<DensityMatrix> {
    let measured = spec.check_against(rho)?;
    let d = rho.dim();
    let mut out = CMatrix::zeros(d, d);
    for outcome in 0..(1usize << measured.len()) {
        let proj = embedded_projector(rho, &measured, outcome);
        out += &proj * rho.matrix() * &proj;
    }
    // Enforce exact Hermiticity against accumulation dust.
    let sym = (&out + out.adjoint()) * C64::new(0.5, 0.0);
    Ok(DensityMatrix::from_parts_unchecked(rho.layout().clone(), sym))
}

/// Selective product measurement: outcome probabilities and normalized
/// post-measurement states. The probability-weighted mixture of the branches
/// equals `apply_channel`.
pub fn selective_outcomes(
    rho: &DensityMatrix,
    spec: &ProductBasisSpec,
) -> Result<Vec<MeasurementOutcome>> {
    let measured = spec.check_against(rho)?;
    let labels: Vec<String> = measured
        .iter()
        .map(|(p, _)| rho.layout().labels()[*p].clone())
        .collect();
    let mut out = Vec::with_capacity(1usize << measured.len());
    for outcome in 0..(1usize << measured.len()) {
        let proj = embedded_projector(rho, &measured, outcome);
        let branch = &proj * rho.matrix() * &proj;
        let p = branch.trace().re;
        let outcomes: Vec<(String, u8)> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), ((outcome >> (labels.len() - 1 - i)) & 1) as u8))
            .collect();
        let post_state = if p > EIG_CLIP {
            let normalized = branch * C64::new(1.0 / p, 0.0);
            let sym = (&normalized + normalized.adjoint()) * C64::new(0.5, 0.0);
            Some(DensityMatrix::from_parts_unchecked(
                rho.layout().clone(),
                sym,
            ))
        } else {
            None
        };
        out.push(MeasurementOutcome {
            outcomes,
            probability: p.max(0.0),
            post_state,
        });
    }
    Ok(out)
}

/// MID basis: per-subsystem eigenprojectors of the marginals, with a
/// deterministic computational-basis fallback for degenerate marginals.
#[derive(Debug, Clone)]
pub struct MidBasis {
    pub spec: ProductBasisSpec,
    /// True for labels whose marginal was degenerate (fallback applied).
    pub fallback: BTreeMap<String, bool>,
}

impl MidBasis {
    pub fn any_fallback(&self) -> bool {
        self.fallback.values().any(|&f| f)
    }
}

pub fn mid_basis(rho: &DensityMatrix, measured: &[&str]) -> Result<MidBasis> {
    let mut spec = ProductBasisSpec::new();
    let mut fallback = BTreeMap::new();
    for label in measured {
        let marginal = rho.partial_trace(&[label])?;
        let s = marginal.spectrum();
        let degenerate = (s.eigenvalues[0] - s.eigenvalues[1]).abs() < MID_DEGENERACY_GAP;
        let basis = if degenerate {
            QubitBasis::computational()
        } else {
            let v = s.eigenvectors.column(0);
            QubitBasis::from_state_vector(v[0], v[1])
        };
        spec.insert(*label, basis);
        fallback.insert((*label).to_string(), degenerate);
    }
    Ok(MidBasis { spec, fallback })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{shannon_entropy, SubsystemLayout};
    use crate::states;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        let mut m: f64 = 0.0;
        for r in 0..a.nrows() {
            for c in 0..a.ncols() {
                m = m.max((a[(r, c)] - b[(r, c)]).norm());
            }
        }
        m
    }

    #[test]
    fn make_basis_computational() {
        let (p0, p1) = QubitBasis::new(0.0, 0.0).projectors();
        assert_abs_diff_eq!(p0[(0, 0)].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p1[(1, 1)].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn make_basis_hadamard_and_sigma_y() {
        let (p0, _) = QubitBasis::new(FRAC_PI_2, 0.0).projectors();
        for r in 0..2 {
            for c in 0..2 {
                assert_abs_diff_eq!(p0[(r, c)].re, 0.5, epsilon = 1e-12);
                assert_abs_diff_eq!(p0[(r, c)].im, 0.0, epsilon = 1e-12);
            }
        }
        let (py, _) = QubitBasis::new(FRAC_PI_2, FRAC_PI_2).projectors();
        assert_abs_diff_eq!(py[(1, 0)].im, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(py[(0, 1)].im, -0.5, epsilon = 1e-12);
    }

    #[test]
    fn projector_family_axioms() {
        for &(t, p) in &[(0.3, 1.1), (2.9, 5.2), (PI, 0.0), (1.7, 4.4)] {
            let basis = QubitBasis::new(t, p);
            let (p0, p1) = basis.projectors();
            assert!(max_diff(
                &CMatrix::from_fn(2, 2, |r, c| (p0 + p1)[(r, c)]),
                &CMatrix::identity(2, 2)
            ) < 1e-12);
            assert!(max_diff(
                &CMatrix::from_fn(2, 2, |r, c| (p0 * p0)[(r, c)]),
                &CMatrix::from_fn(2, 2, |r, c| p0[(r, c)])
            ) < 1e-12);
            assert!((p0 * p1).norm() < 1e-12);
        }
    }

    #[test]
    fn angle_wrapping() {
        let b = QubitBasis::new(-0.4, -1.0);
        assert!(b.theta() >= 0.0 && b.theta() <= PI);
        assert!(b.phi() >= 0.0 && b.phi() < std::f64::consts::TAU);
        // Wrapped angles describe the same projector.
        let (orig, _) = QubitBasis { theta: 0.4, phi: PI - 1.0 }.projectors();
        let (wrapped, _) = b.projectors();
        assert!(max_diff(
            &CMatrix::from_fn(2, 2, |r, c| orig[(r, c)]),
            &CMatrix::from_fn(2, 2, |r, c| wrapped[(r, c)])
        ) < 1e-12);
    }

    #[test]
    fn channel_on_plus_state() {
        let layout = SubsystemLayout::new(["A"]).unwrap();
        let plus = DensityMatrix::new(
            layout,
            CMatrix::from_fn(2, 2, |_, _| C64::new(0.5, 0.0)),
        )
        .unwrap();
        let spec = ProductBasisSpec::single("A", QubitBasis::computational());
        let out = apply_channel(&plus, &spec).unwrap();
        assert_abs_diff_eq!(out.matrix()[(0, 0)].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.matrix()[(0, 1)].norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn channel_in_eigenbasis_is_noop() {
        let layout = SubsystemLayout::new(["A"]).unwrap();
        let rho = DensityMatrix::from_diagonal(layout, &[0.7, 0.3]).unwrap();
        let spec = ProductBasisSpec::single("A", QubitBasis::computational());
        let out = apply_channel(&rho, &spec).unwrap();
        assert!(max_diff(out.matrix(), rho.matrix()) < 1e-12);
    }

    #[test]
    fn channel_on_ghz_sigma_z() {
        let ghz = states::make_ghz(3).unwrap().to_density();
        let spec = ProductBasisSpec::computational_on(["A", "B", "C"]);
        let out = apply_channel(&ghz, &spec).unwrap();
        assert_abs_diff_eq!(out.matrix()[(0, 0)].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.matrix()[(7, 7)].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.matrix()[(0, 7)].norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn selective_on_ghz() {
        let ghz = states::make_ghz(3).unwrap().to_density();
        let spec = ProductBasisSpec::single("A", QubitBasis::computational());
        let outs = selective_outcomes(&ghz, &spec).unwrap();
        assert_eq!(outs.len(), 2);
        for (i, o) in outs.iter().enumerate() {
            assert_abs_diff_eq!(o.probability, 0.5, epsilon = 1e-12);
            let post = o.post_state.as_ref().unwrap();
            let idx = if i == 0 { 0 } else { 7 };
            assert_abs_diff_eq!(post.matrix()[(idx, idx)].re, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn selective_on_product_state() {
        let layout = SubsystemLayout::new(["A", "B"]).unwrap();
        let mut m = CMatrix::zeros(4, 4);
        m[(1, 1)] = C64::new(1.0, 0.0); // |01><01|
        let rho = DensityMatrix::new(layout, m).unwrap();
        let spec = ProductBasisSpec::single("A", QubitBasis::computational());
        let outs = selective_outcomes(&rho, &spec).unwrap();
        assert_abs_diff_eq!(outs[0].probability, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(outs[1].probability, 0.0, epsilon = 1e-12);
        assert!(outs[1].post_state.is_none());
    }

    #[test]
    fn selective_on_w_state() {
        let w = states::make_w().to_density();
        let spec = ProductBasisSpec::single("A", QubitBasis::computational());
        let outs = selective_outcomes(&w, &spec).unwrap();
        assert_abs_diff_eq!(outs[0].probability, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(outs[1].probability, 1.0 / 3.0, epsilon = 1e-12);
        // p0 branch: A in |0>, BC in (|01>+|10>)/sqrt(2).
        let post0 = outs[0].post_state.as_ref().unwrap();
        let bc = post0.partial_trace(&["B", "C"]).unwrap();
        assert_abs_diff_eq!(bc.matrix()[(1, 2)].re, 0.5, epsilon = 1e-12);
        // p1 branch: BC in |00>.
        let post1 = outs[1].post_state.as_ref().unwrap();
        let bc1 = post1.partial_trace(&["B", "C"]).unwrap();
        assert_abs_diff_eq!(bc1.matrix()[(0, 0)].re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn selective_mixture_recovers_channel() {
        let rho = states::random_mixed(2, 4, 5).unwrap();
        let mut spec = ProductBasisSpec::new();
        spec.insert("A", QubitBasis::new(0.7, 2.0));
        spec.insert("B", QubitBasis::new(2.1, 0.4));
        let outs = selective_outcomes(&rho, &spec).unwrap();
        let channel = apply_channel(&rho, &spec).unwrap();
        let mut mix = CMatrix::zeros(4, 4);
        for o in &outs {
            if let Some(post) = &o.post_state {
                mix += post.matrix() * C64::new(o.probability, 0.0);
            }
        }
        assert!(max_diff(&mix, channel.matrix()) < 1e-10);
    }

    #[test]
    fn channel_idempotent_and_entropy_nondecreasing() {
        for seed in 0..20u64 {
            let rho = states::random_mixed(2, 3, seed).unwrap();
            let mut spec = ProductBasisSpec::new();
            spec.insert("A", QubitBasis::new(0.3 + seed as f64 * 0.1, 1.3));
            spec.insert("B", QubitBasis::new(1.9, 0.2 + seed as f64 * 0.2));
            let once = apply_channel(&rho, &spec).unwrap();
            let twice = apply_channel(&once, &spec).unwrap();
            assert!(max_diff(once.matrix(), twice.matrix()) < 1e-12);
            assert!(once.von_neumann_entropy() >= rho.von_neumann_entropy() - 1e-10);
            // CPTP witness: output passes full validation.
            DensityMatrix::new(rho.layout().clone(), once.matrix().clone()).unwrap();
        }
    }

    #[test]
    fn measurement_order_locality() {
        let rho = states::random_mixed(3, 5, 9).unwrap();
        let sa = ProductBasisSpec::single("A", QubitBasis::new(0.8, 0.5));
        let sbc = {
            let mut s = ProductBasisSpec::new();
            s.insert("B", QubitBasis::new(2.0, 4.0));
            s.insert("C", QubitBasis::new(1.2, 3.3));
            s
        };
        let ab = apply_channel(&apply_channel(&rho, &sa).unwrap(), &sbc).unwrap();
        let ba = apply_channel(&apply_channel(&rho, &sbc).unwrap(), &sa).unwrap();
        assert!(max_diff(ab.matrix(), ba.matrix()) < 1e-12);
    }

    #[test]
    fn outcome_entropy_dominates_marginal_entropy() {
        // H({p_a}) >= S(rho_A) for rank-one projective measurements.
        for seed in 30..45u64 {
            let rho = states::random_mixed(2, 4, seed).unwrap();
            let basis = QubitBasis::new(0.1 + seed as f64 * 0.15, seed as f64 * 0.37);
            let spec = ProductBasisSpec::single("A", basis);
            let outs = selective_outcomes(&rho, &spec).unwrap();
            let probs: Vec<f64> = outs.iter().map(|o| o.probability).collect();
            let h = shannon_entropy(&probs).unwrap();
            let sa = rho.partial_trace(&["A"]).unwrap().von_neumann_entropy();
            assert!(h >= sa - 1e-10);
        }
    }

    #[test]
    fn mid_basis_degenerate_fallback() {
        // All Werner-GHZ marginals are I/2, so every qubit falls back.
        let rho = states::make_werner_ghz(0.6).unwrap();
        let mid = mid_basis(&rho, &["A", "B", "C"]).unwrap();
        assert!(mid.any_fallback());
        for label in ["A", "B", "C"] {
            assert!(mid.fallback[label]);
            let b = mid.spec.get(label).unwrap();
            assert_abs_diff_eq!(b.theta(), 0.0, epsilon = 0.0);
        }
    }

    #[test]
    fn mid_basis_schmidt_marginals() {
        let rho = states::make_schmidt(3, 0.3f64.sqrt()).unwrap().to_density();
        let mid = mid_basis(&rho, &["A", "B", "C"]).unwrap();
        for label in ["A", "B", "C"] {
            assert!(!mid.fallback[label]);
            let b = mid.spec.get(label).unwrap();
            // Marginals diag(0.3, 0.7): eigenbasis is computational.
            assert!(b.theta().abs() < 1e-8 || (b.theta() - PI).abs() < 1e-8);
        }
    }

    #[test]
    fn mid_basis_hadamard_marginal() {
        // A marginal dominated by |+><+| yields the Hadamard basis.
        let layout = SubsystemLayout::new(["A"]).unwrap();
        let m = CMatrix::from_fn(2, 2, |r, c| {
            if r == c {
                C64::new(0.5, 0.0)
            } else {
                C64::new(0.3, 0.0)
            }
        });
        let a = DensityMatrix::new(layout, m).unwrap();
        let b = DensityMatrix::maximally_mixed(SubsystemLayout::new(["B"]).unwrap());
        let rho = a.tensor(&b).unwrap();
        let mid = mid_basis(&rho, &["A", "B"]).unwrap();
        assert!(!mid.fallback["A"]);
        let ba = mid.spec.get("A").unwrap();
        assert_abs_diff_eq!(ba.theta(), FRAC_PI_2, epsilon = 1e-8);
        assert_abs_diff_eq!(ba.phi(), 0.0, epsilon = 1e-8);
        assert!(mid.fallback["B"]);
    }
}
