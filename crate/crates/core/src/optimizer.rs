//! Minimization of the fixed-measurement functionals over product rank-one
//! projective bases.
//!
//! One shared candidate set (the angle grid plus each qubit's marginal
//! eigenbasis) backs every minimizer here, so the chained-step minima and
//! the global minimum are compared over identical discretizations and the
//! chain inequality holds exactly on the discretized problem.
//!
//! For up to three measured qubits the product grid is enumerated
//! exhaustively. The enumeration prunes on the fact that non-selective
//! measurement never lowers entropy: once a measurement prefix already
//! exceeds the best complete value, no completion of it can win, so the
//! subtree is skipped without changing the minimum. Four qubits and more
//! fall back to coordinate descent over subsystems (flagged `heuristic`).

use crate::correlations;
use crate::error::{Error, Result};
use crate::measurement::{self, ProductBasisSpec, QubitBasis};
use crate::qcore::{
    entropy_contribution, neg_p_log2_p, C64, CMatrix, DensityMatrix,
};

/// Qubit counts up to this bound get exhaustive product enumeration.
pub const EXHAUSTIVE_MAX_QUBITS: usize = 3;
/// Coordinate-descent sweeps for larger registers.
pub const COORDINATE_SWEEPS: usize = 3;
/// Simplex refinement stops when the value spread drops below this.
pub const REFINE_VALUE_TOL: f64 = 1e-8;
/// How many grid configurations the global scan keeps as refinement seeds.
const SCAN_KEEP: usize = 64;
/// Refinement starts after filtering the kept seeds for diversity.
const REFINE_STARTS: usize = 8;
/// Seeds closer than this (max angle difference, radians) count as the
/// same basin and only the best of them is refined.
const SEED_DISTINCT_ANGLE: f64 = 0.2;

/// Deterministic Bloch-angle candidate grid.
///
/// The theta list spans `[0, pi]` in `theta_steps` points and the phi list
/// spans `[0, 2 pi)` in `phi_steps` points; `pi/2` is inserted into either
/// list when the stepping misses it, so the poles `theta in {0, pi/2}` and
/// `phi in {0, pi/2}` are always present exactly. Candidates with
/// `theta in {0, pi}` carry a single phi (the projectors coincide).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandidateGrid {
    pub theta_steps: usize,
    pub phi_steps: usize,
    pub refine: bool,
    pub max_refine_evals: usize,
}

impl Default for CandidateGrid {
    fn default() -> Self {
        Self {
            theta_steps: 25,
            phi_steps: 25,
            refine: true,
            max_refine_evals: 500,
        }
    }
}

impl CandidateGrid {
    pub fn with_steps(theta_steps: usize, phi_steps: usize) -> Self {
        Self {
            theta_steps,
            phi_steps,
            ..Self::default()
        }
    }

    pub fn without_refinement(mut self) -> Self {
        self.refine = false;
        self
    }

    fn check(&self) -> Result<()> {
        if self.theta_steps < 2 || self.phi_steps < 1 {
            return Err(Error::InvalidParameter(format!(
                "grid needs theta_steps >= 2 and phi_steps >= 1, got {}x{}",
                self.theta_steps, self.phi_steps
            )));
        }
        Ok(())
    }

    /// The deterministic `(theta, phi)` candidate list.
    pub fn angle_candidates(&self) -> Vec<(f64, f64)> {
        let pi = std::f64::consts::PI;
        let half_pi = std::f64::consts::FRAC_PI_2;
        let tau = std::f64::consts::TAU;

        let mut thetas: Vec<f64> = (0..self.theta_steps)
            .map(|i| pi * (i as f64 / (self.theta_steps - 1) as f64))
            .collect();
        insert_exact(&mut thetas, half_pi);

        let mut phis: Vec<f64> = (0..self.phi_steps)
            .map(|j| tau * (j as f64 / self.phi_steps as f64))
            .collect();
        insert_exact(&mut phis, half_pi);

        let mut out = Vec::with_capacity(2 + (thetas.len() - 2) * phis.len());
        out.push((0.0, 0.0));
        for &t in &thetas[1..thetas.len() - 1] {
            for &p in &phis {
                out.push((t, p));
            }
        }
        out.push((pi, 0.0));
        out
    }
}

fn insert_exact(sorted: &mut Vec<f64>, value: f64) {
    if !sorted.iter().any(|&v| v == value) {
        let idx = sorted.partition_point(|&v| v < value);
        sorted.insert(idx, value);
    }
}

/// Result of a basis minimization.
#[derive(Debug, Clone)]
pub struct MinimizationResult {
    /// Functional value at `spec`, re-evaluated through the canonical path.
    pub value: f64,
    pub spec: ProductBasisSpec,
    pub evaluations: u64,
    pub refined: bool,
    /// True when coordinate descent replaced exhaustive enumeration.
    pub heuristic: bool,
}

// ---------------------------------------------------------------------------
// candidate precomputation

#[derive(Debug, Clone, Copy)]
struct Cand {
    theta: f64,
    phi: f64,
    w0: [C64; 2],
    w1: [C64; 2],
    // |w0[0]|^2, |w0[1]|^2 and conj(w0[0]) w0[1] for the 2x2 fast path.
    x: f64,
    y: f64,
    ur: f64,
    ui: f64,
}

fn make_cand(theta: f64, phi: f64) -> Cand {
    let c = (0.5 * theta).cos();
    let s = (0.5 * theta).sin();
    let ph = C64::from_polar(1.0, phi);
    let w0 = [C64::new(c, 0.0), ph * s];
    let w1 = [-ph.conj() * s, C64::new(c, 0.0)];
    let u = ph * (c * s);
    Cand {
        theta,
        phi,
        w0,
        w1,
        x: c * c,
        y: s * s,
        ur: u.re,
        ui: u.im,
    }
}

/// Shared per-qubit candidate lists: the grid plus the qubit's marginal
/// eigenbasis (so the MID basis is always a candidate and the MID bound
/// dominates the optimized value on the shared set).
fn per_qubit_candidates(rho: &DensityMatrix, grid: &CandidateGrid) -> Result<Vec<Vec<Cand>>> {
    grid.check()?;
    let base: Vec<Cand> = grid
        .angle_candidates()
        .into_iter()
        .map(|(t, p)| make_cand(t, p))
        .collect();
    let labels: Vec<&str> = rho.layout().labels().iter().map(String::as_str).collect();
    let mid = measurement::mid_basis(rho, &labels)?;
    let mut out = Vec::with_capacity(labels.len());
    for l in &labels {
        let mut cands = base.clone();
        let b = mid.spec.get(l).unwrap();
        if !cands
            .iter()
            .any(|c| c.theta == b.theta() && c.phi == b.phi())
        {
            cands.push(make_cand(b.theta(), b.phi()));
        }
        out.push(cands);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// block compression

/// Contract one qubit of a Hermitian block against a basis vector:
/// `B_w[r][c] = <w| B |w>` on the given tensor position.
fn contract(block: &CMatrix, pos: usize, w: &[C64; 2]) -> CMatrix {
    let d = block.nrows();
    let half = d / 2;
    let stride = d >> (pos + 1);
    let ins = |i: usize, s: usize| ((i / stride) * 2 + s) * stride + (i % stride);
    CMatrix::from_fn(half, half, |r, c| {
        let mut acc = C64::new(0.0, 0.0);
        for s in 0..2 {
            for t in 0..2 {
                acc += w[s].conj() * w[t] * block[(ins(r, s), ins(c, t))];
            }
        }
        acc
    })
}

fn contract_both(blocks: &[CMatrix], pos: usize, cand: &Cand) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(blocks.len() * 2);
    for b in blocks {
        out.push(contract(b, pos, &cand.w0));
        out.push(contract(b, pos, &cand.w1));
    }
    out
}

fn blocks_entropy(blocks: &[CMatrix]) -> f64 {
    blocks.iter().map(entropy_contribution).sum()
}

/// Positions to contract at each level, adjusted for the qubits already
/// removed by earlier levels.
fn adjusted_positions(order_pos: &[usize]) -> Vec<usize> {
    order_pos
        .iter()
        .enumerate()
        .map(|(k, &p)| p - order_pos[..k].iter().filter(|&&q| q < p).count())
        .collect()
}

/// Entropy of the outcome distribution of a complete product measurement
/// (equals `S(Phi(rho))` since `Phi(rho)` is diagonal in that basis).
fn full_measurement_entropy(mat: &CMatrix, cands: &[Cand]) -> f64 {
    let mut blocks = vec![mat.clone()];
    for cand in cands {
        blocks = contract_both(&blocks, 0, cand);
    }
    blocks.iter().map(|b| neg_p_log2_p(b[(0, 0)].re)).sum()
}

/// `S_k` after contracting the first `k` entries of `angles` along
/// `adj_pos`, for `k = 0..=angles.len()`.
fn prefix_entropies(mat: &CMatrix, adj_pos: &[usize], angles: &[(f64, f64)]) -> Vec<f64> {
    let mut blocks = vec![mat.clone()];
    let mut out = Vec::with_capacity(angles.len() + 1);
    out.push(blocks_entropy(&blocks));
    for (k, &(t, p)) in angles.iter().enumerate() {
        blocks = contract_both(&blocks, adj_pos[k], &make_cand(t, p));
        out.push(blocks_entropy(&blocks));
    }
    out
}

// ---------------------------------------------------------------------------
// exhaustive scan

struct Scan<'a> {
    cands: &'a [Vec<Cand>],
    adj_pos: Vec<usize>,
    s0: f64,
    track_steps: bool,
    prune: bool,
    /// Best complete configurations, ascending by value, at most
    /// `SCAN_KEEP` entries (refinement seeds beyond the minimum).
    top_full: Vec<(f64, Vec<usize>)>,
    best_steps: Vec<(f64, Vec<usize>)>,
    evals: u64,
}

struct ScanResult {
    /// Complete-measurement minima, ascending; `full[0]` is the grid argmin.
    full: Vec<(f64, Vec<usize>)>,
    steps: Vec<(f64, Vec<usize>)>,
    evals: u64,
}

impl<'a> Scan<'a> {
    fn run(
        mat: &CMatrix,
        cands: &'a [Vec<Cand>],
        order_pos: &[usize],
        track_steps: bool,
    ) -> ScanResult {
        let m = cands.len();
        let mut scan = Scan {
            cands,
            adj_pos: adjusted_positions(order_pos),
            s0: entropy_contribution(mat),
            track_steps,
            prune: true,
            top_full: Vec::with_capacity(SCAN_KEEP + 1),
            best_steps: vec![(f64::INFINITY, Vec::new()); m],
            evals: 0,
        };
        let blocks = vec![mat.clone()];
        let mut prefix = Vec::with_capacity(m);
        scan.recurse(0, &blocks, scan.s0, &mut prefix);
        ScanResult {
            full: scan.top_full,
            steps: scan.best_steps,
            evals: scan.evals,
        }
    }

    fn prune_threshold(&self) -> f64 {
        if self.top_full.len() == SCAN_KEEP {
            self.top_full[SCAN_KEEP - 1].0
        } else {
            f64::INFINITY
        }
    }

    /// Keep the `SCAN_KEEP` best complete configurations; ties favor the
    /// earlier enumeration.
    fn consider_full(&mut self, value: f64, prefix: &[usize]) {
        if self.top_full.len() == SCAN_KEEP && value >= self.top_full[SCAN_KEEP - 1].0 {
            return;
        }
        let at = self.top_full.partition_point(|e| e.0 <= value);
        self.top_full.insert(at, (value, prefix.to_vec()));
        self.top_full.truncate(SCAN_KEEP);
    }

    fn recurse(&mut self, level: usize, blocks: &[CMatrix], s_prev: f64, prefix: &mut Vec<usize>) {
        let m = self.cands.len();
        if level == m - 1 && blocks[0].nrows() == 2 {
            self.leaf_level(blocks, s_prev, prefix);
            return;
        }
        let pos = self.adj_pos[level];
        for ci in 0..self.cands[level].len() {
            let cand = self.cands[level][ci];
            let next = contract_both(blocks, pos, &cand);
            let s_here = blocks_entropy(&next);
            self.evals += 1;
            prefix.push(ci);
            if self.track_steps {
                consider(&mut self.best_steps[level], s_here - s_prev, prefix);
            }
            if level == m - 1 {
                self.consider_full(s_here - self.s0, prefix);
            } else {
                let mut skip = self.prune && s_here - self.s0 >= self.prune_threshold();
                if skip && self.track_steps {
                    skip = self.best_steps[level + 1..].iter().all(|b| b.0 <= 1e-15);
                }
                if !skip {
                    self.recurse(level + 1, &next, s_here, prefix);
                }
            }
            prefix.pop();
        }
    }

    /// Deepest level with 2x2 blocks: closed-form probabilities, no
    /// allocation in the inner loop.
    fn leaf_level(&mut self, blocks: &[CMatrix], s_prev: f64, prefix: &mut Vec<usize>) {
        let level = self.cands.len() - 1;
        let preps: Vec<[f64; 5]> = blocks
            .iter()
            .map(|b| {
                let b00 = b[(0, 0)].re;
                let b11 = b[(1, 1)].re;
                [b00, b11, b[(0, 1)].re, b[(0, 1)].im, b00 + b11]
            })
            .collect();
        for ci in 0..self.cands[level].len() {
            let cand = self.cands[level][ci];
            let mut h = 0.0;
            for p in &preps {
                let p0 = cand.x * p[0] + cand.y * p[1] + 2.0 * (cand.ur * p[2] - cand.ui * p[3]);
                h += neg_p_log2_p(p0) + neg_p_log2_p(p[4] - p0);
            }
            self.evals += 1;
            prefix.push(ci);
            self.consider_full(h - self.s0, prefix);
            if self.track_steps {
                consider(&mut self.best_steps[level], h - s_prev, prefix);
            }
            prefix.pop();
        }
    }
}

/// Strict-improvement update: ties keep the earliest enumeration index.
fn consider(best: &mut (f64, Vec<usize>), value: f64, prefix: &[usize]) {
    if value < best.0 {
        best.0 = value;
        best.1.clear();
        best.1.extend_from_slice(prefix);
    }
}

// ---------------------------------------------------------------------------
// Nelder-Mead simplex (derivative-free refinement)

fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    step: f64,
    max_evals: usize,
    ftol: f64,
) -> (Vec<f64>, f64, u64) {
    let dim = x0.len();
    let mut evals: u64 = 0;
    let mut eval = |x: &[f64], evals: &mut u64| {
        *evals += 1;
        f(x)
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let v0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), v0));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    while evals < max_evals as u64 {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        if simplex[dim].1 - simplex[0].1 < ftol {
            break;
        }
        let centroid: Vec<f64> = (0..dim)
            .map(|i| simplex[..dim].iter().map(|(x, _)| x[i]).sum::<f64>() / dim as f64)
            .collect();
        let worst = simplex[dim].clone();
        let combine = |a: f64, b: f64| -> Vec<f64> {
            (0..dim)
                .map(|i| a * centroid[i] + b * worst.0[i])
                .collect()
        };
        // reflection
        let xr = combine(2.0, -1.0);
        let vr = eval(&xr, &mut evals);
        if vr < simplex[0].1 {
            // expansion
            let xe = combine(3.0, -2.0);
            let ve = eval(&xe, &mut evals);
            simplex[dim] = if ve < vr { (xe, ve) } else { (xr, vr) };
        } else if vr < simplex[dim - 1].1 {
            simplex[dim] = (xr, vr);
        } else {
            // contraction
            let (xc, vc) = if vr < worst.1 {
                let x = combine(1.5, -0.5);
                let v = eval(&x, &mut evals);
                (x, v)
            } else {
                let x = combine(0.5, 0.5);
                let v = eval(&x, &mut evals);
                (x, v)
            };
            if vc < worst.1.min(vr) {
                simplex[dim] = (xc, vc);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = (0..dim)
                        .map(|i| 0.5 * (best[i] + entry.0[i]))
                        .collect();
                    let v = eval(&x, &mut evals);
                    *entry = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    (simplex[0].0.clone(), simplex[0].1, evals)
}

// ---------------------------------------------------------------------------
// public minimizers

fn spec_from_angles(labels: &[String], angles: &[(f64, f64)]) -> ProductBasisSpec {
    let mut spec = ProductBasisSpec::new();
    for (l, &(t, p)) in labels.iter().zip(angles) {
        spec.insert(l.clone(), QubitBasis::new(t, p));
    }
    spec
}

fn cand_angles(cands: &[Vec<Cand>], indices: &[usize]) -> Vec<(f64, f64)> {
    indices
        .iter()
        .enumerate()
        .map(|(k, &ci)| (cands[k][ci].theta, cands[k][ci].phi))
        .collect()
}

/// Measurement bases are axes on the Bloch sphere up to sign; the distance
/// between two bases is the smaller chordal distance of the two sign
/// choices, maximized over qubits.
fn seed_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&(ta, pa), &(tb, pb))| {
            let u = [ta.sin() * pa.cos(), ta.sin() * pa.sin(), ta.cos()];
            let v = [tb.sin() * pb.cos(), tb.sin() * pb.sin(), tb.cos()];
            let d = |s: f64| -> f64 {
                (0..3)
                    .map(|i| (u[i] + s * v[i]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            };
            d(-1.0).min(d(1.0))
        })
        .fold(0.0, f64::max)
}

/// Pick up to `REFINE_STARTS` scan results that sit in pairwise distinct
/// basins, in ascending value order.
fn diverse_seeds(cands: &[Vec<Cand>], top: &[(f64, Vec<usize>)]) -> Vec<Vec<(f64, f64)>> {
    let mut seeds: Vec<Vec<(f64, f64)>> = Vec::new();
    for (_, indices) in top {
        let angles = cand_angles(cands, indices);
        if seeds
            .iter()
            .all(|s| seed_distance(s, &angles) >= SEED_DISTINCT_ANGLE)
        {
            seeds.push(angles);
            if seeds.len() == REFINE_STARTS {
                break;
            }
        }
    }
    seeds
}

/// Global thermal discord `min over complete product specs of
/// S(Phi(rho)) - S(rho)` on the shared candidate set.
///
/// Refinement restarts a simplex from every distinct-basin seed among the
/// best grid configurations, which keeps a near-optimal basin in play even
/// when the grid argmin falls in a different one.
pub fn minimize_gqd(rho: &DensityMatrix, grid: &CandidateGrid) -> Result<MinimizationResult> {
    let n = rho.n_qubits();
    let labels = rho.layout().labels().to_vec();
    let cands = per_qubit_candidates(rho, grid)?;
    let s0 = rho.von_neumann_entropy();
    let mat = rho.matrix();

    let (seeds, mut evals, heuristic) = if n <= EXHAUSTIVE_MAX_QUBITS {
        let order: Vec<usize> = (0..n).collect();
        let result = Scan::run(mat, &cands, &order, false);
        (diverse_seeds(&cands, &result.full), result.evals, false)
    } else {
        let (angles, evals, heuristic) = coordinate_descent_gqd(mat, &cands, s0)?;
        (vec![angles], evals, heuristic)
    };

    let mut angles = seeds[0].clone();
    let mut value = correlations::gqd_fixed(rho, &spec_from_angles(&labels, &angles))?.value;
    let mut refined = false;
    if grid.refine {
        for seed in &seeds {
            let x0: Vec<f64> = seed.iter().flat_map(|&(t, p)| [t, p]).collect();
            let (x, _, nm_evals) = nelder_mead(
                |x| {
                    let c: Vec<Cand> = x.chunks(2).map(|a| make_cand(a[0], a[1])).collect();
                    full_measurement_entropy(mat, &c) - s0
                },
                &x0,
                0.1,
                grid.max_refine_evals,
                REFINE_VALUE_TOL,
            );
            evals += nm_evals;
            let refined_angles: Vec<(f64, f64)> = x.chunks(2).map(|a| (a[0], a[1])).collect();
            let refined_value =
                correlations::gqd_fixed(rho, &spec_from_angles(&labels, &refined_angles))?.value;
            if refined_value < value {
                value = refined_value;
                angles = refined_angles;
                refined = true;
            }
        }
    }

    let spec = spec_from_angles(&labels, &angles);
    Ok(MinimizationResult {
        value,
        spec,
        evaluations: evals,
        refined,
        heuristic,
    })
}

fn coordinate_descent_gqd(
    mat: &CMatrix,
    cands: &[Vec<Cand>],
    s0: f64,
) -> Result<(Vec<(f64, f64)>, u64, bool)> {
    let n = cands.len();
    // Start from the last candidate of each list: the marginal eigenbasis.
    let mut current: Vec<Cand> = cands.iter().map(|c| *c.last().unwrap()).collect();
    let mut evals: u64 = 0;
    let mut best = full_measurement_entropy(mat, &current) - s0;
    evals += 1;
    for _ in 0..COORDINATE_SWEEPS {
        for q in 0..n {
            let mut local_best = best;
            let mut local_cand = current[q];
            for cand in &cands[q] {
                current[q] = *cand;
                let v = full_measurement_entropy(mat, &current) - s0;
                evals += 1;
                if v < local_best {
                    local_best = v;
                    local_cand = *cand;
                }
            }
            current[q] = local_cand;
            best = local_best;
        }
    }
    Ok((
        current.iter().map(|c| (c.theta, c.phi)).collect(),
        evals,
        true,
    ))
}

/// Bipartite-style thermal discord minimum over apparatus bases,
/// `min over bases of [S_A(rho) - S(rho)]`.
pub fn minimize_thermal_qd(
    rho: &DensityMatrix,
    apparatus: &str,
    grid: &CandidateGrid,
) -> Result<MinimizationResult> {
    let pos = rho.layout().position(apparatus)?;
    if rho.n_qubits() < 2 {
        return Err(Error::InvalidParameter(
            "thermal QD needs at least two subsystems".into(),
        ));
    }
    let cands = per_qubit_candidates(rho, grid)?;
    let s0 = rho.von_neumann_entropy();
    let mat = rho.matrix();

    let mut evals: u64 = 0;
    let mut best = (f64::INFINITY, (0.0f64, 0.0f64));
    for cand in &cands[pos] {
        let blocks = contract_both(std::slice::from_ref(mat), pos, cand);
        let v = blocks_entropy(&blocks) - s0;
        evals += 1;
        if v < best.0 {
            best = (v, (cand.theta, cand.phi));
        }
    }

    let mut angles = best.1;
    let mut refined = false;
    if grid.refine {
        let (x, _, nm_evals) = nelder_mead(
            |x| {
                let cand = make_cand(x[0], x[1]);
                let blocks = contract_both(std::slice::from_ref(mat), pos, &cand);
                blocks_entropy(&blocks) - s0
            },
            &[angles.0, angles.1],
            0.1,
            grid.max_refine_evals,
            REFINE_VALUE_TOL,
        );
        evals += nm_evals;
        let grid_value = correlations::thermal_qd_fixed(
            rho,
            apparatus,
            &QubitBasis::new(angles.0, angles.1),
        )?
        .value;
        let refined_value =
            correlations::thermal_qd_fixed(rho, apparatus, &QubitBasis::new(x[0], x[1]))?.value;
        if refined_value < grid_value {
            angles = (x[0], x[1]);
            refined = true;
        }
    }

    let basis = QubitBasis::new(angles.0, angles.1);
    let value = correlations::thermal_qd_fixed(rho, apparatus, &basis)?.value;
    Ok(MinimizationResult {
        value,
        spec: ProductBasisSpec::single(apparatus, basis),
        evaluations: evals,
        refined,
        heuristic: false,
    })
}

/// Original-discord minimum over apparatus bases on the same candidate set.
pub fn minimize_original_qd(
    rho: &DensityMatrix,
    apparatus: &str,
    grid: &CandidateGrid,
) -> Result<MinimizationResult> {
    let pos = rho.layout().position(apparatus)?;
    let cands = per_qubit_candidates(rho, grid)?;
    let mut evals: u64 = 0;
    let mut best = (f64::INFINITY, (0.0f64, 0.0f64));
    for cand in &cands[pos] {
        let v = correlations::original_qd_fixed(
            rho,
            apparatus,
            &QubitBasis::new(cand.theta, cand.phi),
        )?;
        evals += 1;
        if v < best.0 {
            best = (v, (cand.theta, cand.phi));
        }
    }
    let mut angles = best.1;
    let mut refined = false;
    if grid.refine {
        let (x, v, nm_evals) = nelder_mead(
            |x| {
                correlations::original_qd_fixed(rho, apparatus, &QubitBasis::new(x[0], x[1]))
                    .unwrap_or(f64::INFINITY)
            },
            &[angles.0, angles.1],
            0.1,
            grid.max_refine_evals,
            REFINE_VALUE_TOL,
        );
        evals += nm_evals;
        if v < best.0 {
            angles = (x[0], x[1]);
            refined = true;
        }
    }
    let basis = QubitBasis::new(angles.0, angles.1);
    Ok(MinimizationResult {
        value: correlations::original_qd_fixed(rho, apparatus, &basis)?,
        spec: ProductBasisSpec::single(apparatus, basis),
        evaluations: evals,
        refined,
        heuristic: false,
    })
}

/// Chained-step minima: step `i` minimizes `S_{i+1} - S_i` jointly over the
/// non-selective bases on `order[..i]` and the apparatus basis on
/// `order[i]`, all drawn from the shared candidate set.
pub fn minimize_chained(
    rho: &DensityMatrix,
    order: &[String],
    grid: &CandidateGrid,
) -> Result<Vec<MinimizationResult>> {
    let n = rho.n_qubits();
    if order.len() != n {
        return Err(Error::InvalidParameter(
            "order must be a permutation of the subsystem labels".into(),
        ));
    }
    let mut order_pos = Vec::with_capacity(n);
    for l in order {
        let p = rho.layout().position(l)?;
        if order_pos.contains(&p) {
            return Err(Error::LabelCollision(l.clone()));
        }
        order_pos.push(p);
    }
    let all_cands = per_qubit_candidates(rho, grid)?;
    // Candidate list per level, following the measurement order.
    let cands: Vec<Vec<Cand>> = order_pos.iter().map(|&p| all_cands[p].clone()).collect();
    let adj_pos = adjusted_positions(&order_pos);
    let mat = rho.matrix();

    let (mut step_angles, scan_evals, heuristic): (Vec<Vec<(f64, f64)>>, u64, bool) =
        if n <= EXHAUSTIVE_MAX_QUBITS {
            let result = Scan::run(mat, &cands, &order_pos, true);
            (
                result
                    .steps
                    .iter()
                    .map(|(_, idx)| cand_angles(&cands, idx))
                    .collect(),
                result.evals,
                false,
            )
        } else {
            let mut per_step = Vec::with_capacity(n);
            let mut evals = 0u64;
            for k in 0..n {
                let (angles, e) = coordinate_descent_step(mat, &cands, &adj_pos, k);
                evals += e;
                per_step.push(angles);
            }
            (per_step, evals, true)
        };

    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut evals = if k == 0 { scan_evals } else { 0 };
        let mut refined = false;
        if grid.refine {
            let x0: Vec<f64> = step_angles[k].iter().flat_map(|&(t, p)| [t, p]).collect();
            let (x, _, nm_evals) = nelder_mead(
                |x| {
                    let angles: Vec<(f64, f64)> = x.chunks(2).map(|a| (a[0], a[1])).collect();
                    let s = prefix_entropies(mat, &adj_pos[..=k], &angles);
                    s[k + 1] - s[k]
                },
                &x0,
                0.1,
                grid.max_refine_evals,
                REFINE_VALUE_TOL,
            );
            evals += nm_evals;
            let refined_angles: Vec<(f64, f64)> = x.chunks(2).map(|a| (a[0], a[1])).collect();
            let grid_value = chained_step_canonical(rho, order, &step_angles[k], k)?;
            let refined_value = chained_step_canonical(rho, order, &refined_angles, k)?;
            if refined_value < grid_value {
                step_angles[k] = refined_angles;
                refined = true;
            }
        }
        let value = chained_step_canonical(rho, order, &step_angles[k], k)?;
        let mut spec = ProductBasisSpec::new();
        for (j, &(t, p)) in step_angles[k].iter().enumerate() {
            spec.insert(order[j].clone(), QubitBasis::new(t, p));
        }
        out.push(MinimizationResult {
            value,
            spec,
            evaluations: evals,
            refined,
            heuristic,
        });
    }
    Ok(out)
}

/// Step value through the canonical measurement path: apply the first `k`
/// non-selective measurements, then take the fixed thermal QD on the
/// apparatus.
fn chained_step_canonical(
    rho: &DensityMatrix,
    order: &[String],
    angles: &[(f64, f64)],
    k: usize,
) -> Result<f64> {
    let mut state = rho.clone();
    for j in 0..k {
        let spec = ProductBasisSpec::single(order[j].clone(), QubitBasis::new(angles[j].0, angles[j].1));
        state = measurement::apply_channel(&state, &spec)?;
    }
    Ok(correlations::thermal_qd_fixed(
        &state,
        &order[k],
        &QubitBasis::new(angles[k].0, angles[k].1),
    )?
    .value)
}

fn coordinate_descent_step(
    mat: &CMatrix,
    cands: &[Vec<Cand>],
    adj_pos: &[usize],
    k: usize,
) -> (Vec<(f64, f64)>, u64) {
    let eval = |current: &[Cand]| -> f64 {
        let s = prefix_entropies_c(mat, &adj_pos[..=k], current, k + 1);
        s[k + 1] - s[k]
    };
    let mut current: Vec<Cand> = (0..=k).map(|j| *cands[j].last().unwrap()).collect();
    let mut evals = 0u64;
    let mut best = eval(&current);
    evals += 1;
    for _ in 0..COORDINATE_SWEEPS {
        for q in 0..=k {
            let mut local_best = best;
            let mut local_cand = current[q];
            for cand in &cands[q] {
                current[q] = *cand;
                let v = eval(&current);
                evals += 1;
                if v < local_best {
                    local_best = v;
                    local_cand = *cand;
                }
            }
            current[q] = local_cand;
            best = local_best;
        }
    }
    (current.iter().map(|c| (c.theta, c.phi)).collect(), evals)
}

fn prefix_entropies_c(mat: &CMatrix, adj_pos: &[usize], cands: &[Cand], upto: usize) -> Vec<f64> {
    let mut blocks = vec![mat.clone()];
    let mut out = Vec::with_capacity(upto + 1);
    out.push(blocks_entropy(&blocks));
    for (k, cand) in cands.iter().take(upto).enumerate() {
        blocks = contract_both(&blocks, adj_pos[k], cand);
        out.push(blocks_entropy(&blocks));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    const H_QUARTER: f64 = 0.811278124459133;
    const WERNER_HALF: f64 = 0.331877754006699;

    fn small_grid() -> CandidateGrid {
        CandidateGrid::with_steps(5, 4).without_refinement()
    }

    #[test]
    fn grid_contains_poles_exactly() {
        for grid in [CandidateGrid::default(), CandidateGrid::with_steps(6, 7)] {
            let c = grid.angle_candidates();
            assert!(c.iter().any(|&(t, p)| t == 0.0 && p == 0.0));
            assert!(c.iter().any(|&(t, _)| t == PI));
            assert!(c.iter().any(|&(t, _)| t == FRAC_PI_2));
            assert!(c.iter().any(|&(_, p)| p == FRAC_PI_2));
        }
    }

    #[test]
    fn gqd_schmidt_binary_entropy() {
        let rho = states::make_schmidt(3, 0.25f64.sqrt()).unwrap().to_density();
        let r = minimize_gqd(&rho, &CandidateGrid::default()).unwrap();
        assert_abs_diff_eq!(r.value, H_QUARTER, epsilon = 1e-9);
        // Argmin at the Schmidt (computational) basis.
        for l in ["A", "B", "C"] {
            let b = r.spec.get(l).unwrap();
            assert!(b.theta() == 0.0 || b.theta() == PI);
        }
    }

    #[test]
    fn gqd_werner_ghz_closed_form() {
        let rho = states::make_werner_ghz(0.5).unwrap();
        let r = minimize_gqd(&rho, &CandidateGrid::default()).unwrap();
        assert_abs_diff_eq!(r.value, WERNER_HALF, epsilon = 1e-9);
        for l in ["A", "B", "C"] {
            assert_abs_diff_eq!(r.spec.get(l).unwrap().theta(), 0.0, epsilon = 0.0);
        }
    }

    #[test]
    fn gqd_classical_zero() {
        let rho = states::make_classical(&[0.4, 0.1, 0.2, 0.3]).unwrap();
        let r = minimize_gqd(&rho, &small_grid()).unwrap();
        assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn thermal_qd_examples() {
        let bell = states::make_ghz(2).unwrap().to_density();
        let r = minimize_thermal_qd(&bell, "A", &small_grid()).unwrap();
        assert_abs_diff_eq!(r.value, 1.0, epsilon = 1e-9);

        let classical = states::make_classical(&[0.5, 0.0, 0.0, 0.5]).unwrap();
        let rc = minimize_thermal_qd(&classical, "A", &small_grid()).unwrap();
        assert_abs_diff_eq!(rc.value, 0.0, epsilon = 1e-10);

        let ghz = states::make_ghz(3).unwrap().to_density();
        let rg = minimize_thermal_qd(&ghz, "A", &small_grid()).unwrap();
        assert_abs_diff_eq!(rg.value, 1.0, epsilon = 1e-9);

        assert!(minimize_thermal_qd(&ghz, "X", &small_grid()).is_err());
    }

    #[test]
    fn chained_examples() {
        let order: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();

        let ghz = states::make_ghz(3).unwrap().to_density();
        let steps = minimize_chained(&ghz, &order, &small_grid()).unwrap();
        assert_abs_diff_eq!(steps[0].value, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(steps[1].value, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(steps[2].value, 0.0, epsilon = 1e-9);

        let werner = states::make_werner_ghz(0.5).unwrap();
        let wsteps = minimize_chained(&werner, &order, &CandidateGrid::default()).unwrap();
        assert_abs_diff_eq!(wsteps[0].value, WERNER_HALF, epsilon = 1e-9);
        assert_abs_diff_eq!(wsteps[1].value, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(wsteps[2].value, 0.0, epsilon = 1e-9);

        let a = states::random_mixed_on(&crate::qcore::SubsystemLayout::new(["A"]).unwrap(), 2, 1)
            .unwrap();
        let b = states::random_mixed_on(&crate::qcore::SubsystemLayout::new(["B"]).unwrap(), 2, 2)
            .unwrap();
        let c = states::random_mixed_on(&crate::qcore::SubsystemLayout::new(["C"]).unwrap(), 2, 3)
            .unwrap();
        let product = a.tensor(&b).unwrap().tensor(&c).unwrap();
        let psteps = minimize_chained(&product, &order, &small_grid()).unwrap();
        for s in &psteps {
            assert_abs_diff_eq!(s.value, 0.0, epsilon = 1e-9);
        }

        let bad: Vec<String> = ["A", "B"].iter().map(|s| s.to_string()).collect();
        assert!(minimize_chained(&ghz, &bad, &small_grid()).is_err());
    }

    #[test]
    fn theorem_2_on_shared_grid() {
        let order: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
        for seed in 0..8u64 {
            let rho = states::random_mixed(3, 4, 600 + seed).unwrap();
            let gqd = minimize_gqd(&rho, &small_grid()).unwrap();
            let steps = minimize_chained(&rho, &order, &small_grid()).unwrap();
            let sum: f64 = steps.iter().map(|s| s.value).sum();
            assert!(
                gqd.value >= sum - 1e-9,
                "seed {seed}: gqd {} < chained sum {sum}",
                gqd.value
            );
        }
    }

    #[test]
    fn refinement_monotonic() {
        for seed in 0..5u64 {
            let rho = states::random_mixed(2, 3, 700 + seed).unwrap();
            let coarse = CandidateGrid::with_steps(5, 4).without_refinement();
            let refined = CandidateGrid {
                refine: true,
                ..coarse
            };
            let a = minimize_gqd(&rho, &coarse).unwrap();
            let b = minimize_gqd(&rho, &refined).unwrap();
            assert!(b.value <= a.value + 1e-12);
        }
    }

    #[test]
    fn deterministic_results() {
        let rho = states::random_mixed(3, 4, 12).unwrap();
        let a = minimize_gqd(&rho, &small_grid()).unwrap();
        let b = minimize_gqd(&rho, &small_grid()).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.spec, b.spec);
        assert_eq!(a.evaluations, b.evaluations);
    }

    #[test]
    fn double_resolution_oracle_two_qubits() {
        // Brute force at double resolution agrees with the standard grid plus
        // refinement to within 2e-3 bits.
        for seed in 0..3u64 {
            let rho = states::random_mixed(2, 3, 800 + seed).unwrap();
            let standard = minimize_gqd(&rho, &CandidateGrid::default()).unwrap();
            let double = minimize_gqd(&rho, &CandidateGrid::with_steps(49, 50)).unwrap();
            assert!(
                (standard.value - double.value).abs() < 2e-3,
                "seed {seed}: {} vs {}",
                standard.value,
                double.value
            );
        }
    }

    #[test]
    fn result_value_matches_spec_reevaluation() {
        let rho = states::random_mixed(2, 4, 55).unwrap();
        let r = minimize_gqd(&rho, &CandidateGrid::with_steps(7, 6)).unwrap();
        let re = correlations::gqd_fixed(&rho, &r.spec).unwrap().value;
        assert!((r.value - re).abs() < 1e-12);
    }

    #[test]
    fn four_qubit_heuristic_flagged() {
        let rho = states::make_schmidt(4, 0.5f64.sqrt()).unwrap().to_density();
        let r = minimize_gqd(&rho, &small_grid()).unwrap();
        assert!(r.heuristic);
        assert_abs_diff_eq!(r.value, 1.0, epsilon = 1e-9);
    }
}
