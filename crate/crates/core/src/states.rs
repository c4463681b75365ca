//! Factories for the state families used throughout: Schmidt-decomposable
//! pure states, GHZ and W states, Werner-GHZ and W-GHZ mixtures, classical
//! states and seeded random states for property tests.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::qcore::{C64, CMatrix, CVector, DensityMatrix, PureState, SubsystemLayout};

/// `alpha |0...0> + beta |1...1>` with real non-negative `beta = sqrt(1-alpha^2)`.
pub fn make_schmidt(n: usize, alpha: f64) -> Result<PureState> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "schmidt state needs n >= 2, got {n}"
        )));
    }
    if !(0.0..=1.0).contains(&alpha.abs()) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "schmidt amplitude |alpha| must lie in [0, 1], got {alpha}"
        )));
    }
    let layout = SubsystemLayout::alphabetic(n)?;
    let beta = (1.0 - alpha * alpha).max(0.0).sqrt();
    let mut amp = CVector::zeros(layout.dim());
    amp[0] = C64::new(alpha, 0.0);
    amp[layout.dim() - 1] = C64::new(beta, 0.0);
    PureState::new(layout, amp)
}

/// `(|0...0> - |1...1>)/sqrt(2)`.
pub fn make_ghz(n: usize) -> Result<PureState> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "ghz state needs n >= 2, got {n}"
        )));
    }
    let layout = SubsystemLayout::alphabetic(n)?;
    let mut amp = CVector::zeros(layout.dim());
    let r = std::f64::consts::FRAC_1_SQRT_2;
    amp[0] = C64::new(r, 0.0);
    amp[layout.dim() - 1] = C64::new(-r, 0.0);
    PureState::new(layout, amp)
}

/// `(|001> + |010> + |100>)/sqrt(3)` on three qubits.
pub fn make_w() -> PureState {
    let layout = SubsystemLayout::alphabetic(3).unwrap();
    let mut amp = CVector::zeros(8);
    let r = C64::new(1.0 / 3.0f64.sqrt(), 0.0);
    amp[1] = r;
    amp[2] = r;
    amp[4] = r;
    PureState::new(layout, amp).unwrap()
}

/// `(1-lambda)/8 I + lambda |GHZ><GHZ|` on three qubits.
pub fn make_werner_ghz(lambda: f64) -> Result<DensityMatrix> {
    check_unit_interval(lambda, "lambda")?;
    let ghz = make_ghz(3)?.to_density();
    let id = CMatrix::identity(8, 8) * C64::new((1.0 - lambda) / 8.0, 0.0);
    let mat = id + ghz.matrix() * C64::new(lambda, 0.0);
    DensityMatrix::new(ghz.layout().clone(), mat)
}

/// `lambda |W><W| + (1-lambda) |GHZ><GHZ|` on three qubits.
pub fn make_w_ghz(lambda: f64) -> Result<DensityMatrix> {
    check_unit_interval(lambda, "lambda")?;
    let w = make_w().to_density();
    let ghz = make_ghz(3)?.to_density();
    let mat = w.matrix() * C64::new(lambda, 0.0) + ghz.matrix() * C64::new(1.0 - lambda, 0.0);
    DensityMatrix::new(w.layout().clone(), mat)
}

/// Diagonal state from a normalized probability table of length `2^n`.
pub fn make_classical(probs: &[f64]) -> Result<DensityMatrix> {
    let n = probs.len().trailing_zeros() as usize;
    if probs.len() < 2 || probs.len() != 1usize << n {
        return Err(Error::InvalidParameter(format!(
            "probability table length {} is not a power of two >= 2",
            probs.len()
        )));
    }
    let layout = SubsystemLayout::alphabetic(n)?;
    DensityMatrix::from_diagonal(layout, probs)
}

/// Haar-random pure state, deterministic per seed.
pub fn random_pure(n: usize, seed: u64) -> Result<PureState> {
    let layout = SubsystemLayout::alphabetic(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut amp = DVector::from_fn(layout.dim(), |_, _| gaussian_c64(&mut rng));
    let norm = amp.norm();
    amp /= C64::new(norm, 0.0);
    PureState::new(layout, amp)
}

/// Random mixed state of the given rank: `G G^dagger / tr` with Gaussian `G`,
/// i.e. the partial trace of a random pure state on a doubled system.
pub fn random_mixed(n: usize, rank: usize, seed: u64) -> Result<DensityMatrix> {
    random_mixed_on(&SubsystemLayout::alphabetic(n)?, rank, seed)
}

/// `random_mixed` over an explicit layout.
pub fn random_mixed_on(layout: &SubsystemLayout, rank: usize, seed: u64) -> Result<DensityMatrix> {
    let d = layout.dim();
    if rank == 0 || rank > d {
        return Err(Error::InvalidParameter(format!(
            "rank {rank} out of range 1..={d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = CMatrix::from_fn(d, rank, |_, _| gaussian_c64(&mut rng));
    let mut rho = &g * g.adjoint();
    let tr = rho.trace().re;
    rho /= C64::new(tr, 0.0);
    // Symmetrize the product against rounding dust.
    let sym = (&rho + rho.adjoint()) * C64::new(0.5, 0.0);
    DensityMatrix::new(layout.clone(), sym)
}

fn gaussian_c64(rng: &mut ChaCha8Rng) -> C64 {
    // Box-Muller; explicit so the output is stable across rand versions.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (-2.0 * u1.ln()).sqrt();
    C64::new(r * u2.cos(), r * u2.sin())
}

fn check_unit_interval(x: f64, name: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&x) || !x.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "{name} must lie in [0, 1], got {x}"
        )));
    }
    Ok(())
}
