//! Discord-type functionals evaluated at a fixed measurement spec.
//!
//! Everything here takes the measurement bases as given; minimization over
//! bases lives in [`crate::optimizer`]. Keeping the two apart makes the
//! exact chained-decomposition identity directly testable.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::measurement::{self, ProductBasisSpec, QubitBasis};
use crate::qcore::{shannon_entropy, DensityMatrix, EIG_CLIP};

/// A functional value at a fixed measurement, with the spec that produced it.
#[derive(Debug, Clone)]
pub struct FixedMeasurementValue {
    pub value: f64,
    pub spec: ProductBasisSpec,
    /// Per-term breakdown where one exists (chained steps).
    pub decomposition: Option<Vec<f64>>,
}

/// Multipartite mutual information `sum_k S(rho_group_k) - S(rho)` over an
/// ordered disjoint partition covering all labels.
pub fn mutual_information(rho: &DensityMatrix, partition: &[Vec<String>]) -> Result<f64> {
    let mut seen: Vec<&str> = Vec::new();
    for group in partition {
        if group.is_empty() {
            return Err(Error::InvalidParameter("empty partition group".into()));
        }
        for l in group {
            if seen.contains(&l.as_str()) {
                return Err(Error::LabelCollision(l.clone()));
            }
            rho.layout().position(l)?;
            seen.push(l);
        }
    }
    if seen.len() != rho.n_qubits() {
        return Err(Error::InvalidParameter(
            "partition does not cover all subsystem labels".into(),
        ));
    }
    let mut total = -rho.von_neumann_entropy();
    for group in partition {
        let keep: Vec<&str> = group.iter().map(String::as_str).collect();
        total += rho.partial_trace(&keep)?.von_neumann_entropy();
    }
    Ok(total)
}

/// `S_A(rho) = H({p_a}) + sum_i p_i S(rho_i)`: Shannon entropy of the
/// apparatus outcomes plus the average post-measurement entropy.
pub fn locally_accessible_joint_entropy(
    rho: &DensityMatrix,
    apparatus: &str,
    basis: &QubitBasis,
) -> Result<f64> {
    let spec = ProductBasisSpec::single(apparatus, *basis);
    let outcomes = measurement::selective_outcomes(rho, &spec)?;
    let probs: Vec<f64> = outcomes.iter().map(|o| o.probability).collect();
    let h = shannon_entropy(&probs)?;
    let mut conditional = 0.0;
    for o in &outcomes {
        if o.probability > EIG_CLIP {
            if let Some(post) = &o.post_state {
                conditional += o.probability * post.von_neumann_entropy();
            }
        }
    }
    Ok(h + conditional)
}

/// Thermal QD at a fixed apparatus basis: `S_A(rho) - S(rho)`, the
/// pre-minimization bracket. The system is the full complement of the
/// apparatus label.
pub fn thermal_qd_fixed(
    rho: &DensityMatrix,
    apparatus: &str,
    basis: &QubitBasis,
) -> Result<FixedMeasurementValue> {
    let value = locally_accessible_joint_entropy(rho, apparatus, basis)? - rho.von_neumann_entropy();
    Ok(FixedMeasurementValue {
        value,
        spec: ProductBasisSpec::single(apparatus, *basis),
        decomposition: None,
    })
}

/// Thermal QD in its mutual-information form,
/// `I(rho) - I(Phi_A(rho)) + H({p_a}) - S(rho_A)`; agrees with
/// [`thermal_qd_fixed`] to numerical precision.
pub fn thermal_qd_fixed_mi_form(
    rho: &DensityMatrix,
    apparatus: &str,
    basis: &QubitBasis,
) -> Result<f64> {
    let spec = ProductBasisSpec::single(apparatus, *basis);
    let system: Vec<String> = rho
        .layout()
        .labels()
        .iter()
        .filter(|l| l.as_str() != apparatus)
        .cloned()
        .collect();
    if system.is_empty() {
        return Err(Error::InvalidParameter(
            "thermal QD needs at least one system label besides the apparatus".into(),
        ));
    }
    let partition = vec![system, vec![apparatus.to_string()]];
    let measured = measurement::apply_channel(rho, &spec)?;
    let i_before = mutual_information(rho, &partition)?;
    let i_after = mutual_information(&measured, &partition)?;
    let outcomes = measurement::selective_outcomes(rho, &spec)?;
    let probs: Vec<f64> = outcomes.iter().map(|o| o.probability).collect();
    let h = shannon_entropy(&probs)?;
    let s_a = rho.partial_trace(&[apparatus])?.von_neumann_entropy();
    Ok(i_before - i_after + h - s_a)
}

/// Original (Ollivier-Zurek) QD at a fixed apparatus basis:
/// `S(rho_S | {Pi}) - [S(rho) - S(rho_A)]`.
pub fn original_qd_fixed(rho: &DensityMatrix, apparatus: &str, basis: &QubitBasis) -> Result<f64> {
    let spec = ProductBasisSpec::single(apparatus, *basis);
    let outcomes = measurement::selective_outcomes(rho, &spec)?;
    let mut conditional = 0.0;
    for o in &outcomes {
        if o.probability > EIG_CLIP {
            if let Some(post) = &o.post_state {
                conditional += o.probability * post.von_neumann_entropy();
            }
        }
    }
    let s_a = rho.partial_trace(&[apparatus])?.von_neumann_entropy();
    Ok(conditional - (rho.von_neumann_entropy() - s_a))
}

fn check_complete(rho: &DensityMatrix, spec: &ProductBasisSpec) -> Result<()> {
    for label in rho.layout().labels() {
        if spec.get(label).is_none() {
            return Err(Error::InvalidParameter(format!(
                "spec must measure every subsystem; `{label}` is missing"
            )));
        }
    }
    if spec.len() != rho.n_qubits() {
        for l in spec.labels() {
            rho.layout().position(l)?;
        }
    }
    Ok(())
}

/// Global thermal discord at a fixed complete product spec:
/// `S(Phi(rho)) - S(rho)`.
pub fn gqd_fixed(rho: &DensityMatrix, spec: &ProductBasisSpec) -> Result<FixedMeasurementValue> {
    check_complete(rho, spec)?;
    let measured = measurement::apply_channel(rho, spec)?;
    Ok(FixedMeasurementValue {
        value: measured.von_neumann_entropy() - rho.von_neumann_entropy(),
        spec: spec.clone(),
        decomposition: None,
    })
}

/// The same functional through the mutual-information route:
/// `I(rho) - I(Phi(rho)) + sum_i [H({p_{a_i}}) - S(rho_{A_i})]`.
pub fn gqd_fixed_mi_form(rho: &DensityMatrix, spec: &ProductBasisSpec) -> Result<f64> {
    check_complete(rho, spec)?;
    let partition: Vec<Vec<String>> = rho
        .layout()
        .labels()
        .iter()
        .map(|l| vec![l.clone()])
        .collect();
    let measured = measurement::apply_channel(rho, spec)?;
    let mut total =
        mutual_information(rho, &partition)? - mutual_information(&measured, &partition)?;
    for label in rho.layout().labels() {
        let marginal = rho.partial_trace(&[label])?;
        let s_local = ProductBasisSpec::single(label.clone(), *spec.get(label).unwrap());
        let outcomes = measurement::selective_outcomes(&marginal, &s_local)?;
        let probs: Vec<f64> = outcomes.iter().map(|o| o.probability).collect();
        total += shannon_entropy(&probs)? - marginal.von_neumann_entropy();
    }
    Ok(total)
}

/// Per-step thermal QDs of the chained decomposition: step `i` is the fixed
/// thermal QD with apparatus `order[i]` on the state already non-selectively
/// measured on `order[..i]`. The steps sum to `gqd_fixed` exactly.
pub fn chained_decomposition(
    rho: &DensityMatrix,
    spec: &ProductBasisSpec,
    order: &[String],
) -> Result<Vec<f64>> {
    check_complete(rho, spec)?;
    if order.len() != rho.n_qubits() {
        return Err(Error::InvalidParameter(
            "order must be a permutation of the subsystem labels".into(),
        ));
    }
    let mut seen: Vec<&str> = Vec::new();
    for l in order {
        rho.layout().position(l)?;
        if seen.contains(&l.as_str()) {
            return Err(Error::LabelCollision(l.clone()));
        }
        seen.push(l);
    }
    let mut state = rho.clone();
    let mut steps = Vec::with_capacity(order.len());
    for label in order {
        let basis = spec.get(label).unwrap();
        steps.push(thermal_qd_fixed(&state, label, basis)?.value);
        state = measurement::apply_channel(&state, &ProductBasisSpec::single(label.clone(), *basis))?;
    }
    Ok(steps)
}

/// Multipartite MID: the global functional at the fixed eigenbasis of each
/// marginal; no extremization.
#[derive(Debug, Clone)]
pub struct MidValue {
    pub value: f64,
    pub basis: ProductBasisSpec,
    /// Per-label degenerate-marginal fallback flags.
    pub fallback: BTreeMap<String, bool>,
}

impl MidValue {
    pub fn any_fallback(&self) -> bool {
        self.fallback.values().any(|&f| f)
    }
}

pub fn mid_multipartite(rho: &DensityMatrix) -> Result<MidValue> {
    let labels: Vec<&str> = rho.layout().labels().iter().map(String::as_str).collect();
    let mid = measurement::mid_basis(rho, &labels)?;
    let fixed = gqd_fixed(rho, &mid.spec)?;
    Ok(MidValue {
        value: fixed.value,
        basis: mid.spec,
        fallback: mid.fallback,
    })
}
