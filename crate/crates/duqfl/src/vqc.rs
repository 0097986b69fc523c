//! The variational quantum classifier.
//!
//! A ZZ-interaction feature map (default two repetitions) encodes a feature
//! vector into phases, a real-amplitudes ansatz (default four repetitions of
//! RY layers + CX chains) applies the trainable rotation angles, and the
//! full Z-parity expectation is mapped to a class-1 probability
//! `p = (1 + parity) / 2`. The training loss is clamped binary cross-entropy.
//!
//! [`parameter_shift_gradient`] is the exact gradient oracle: parity
//! derivatives from ±π/2 parameter shifts, chained through the loss. It
//! refuses sampled readout so it can serve as ground truth for the SPSA
//! estimator.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::statevector::{Gate, ShotConfig, Statevector};

/// Probability clamp bound for the cross-entropy loss.
pub const PROB_CLAMP: f64 = 1e-7;

/// Circuit architecture: qubit count, feature-map and ansatz repetitions,
/// and the entanglement pattern shared by both blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_qubits: usize,
    pub feature_map_reps: usize,
    pub ansatz_reps: usize,
    pub entanglement: Entanglement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entanglement {
    Linear,
    Full,
}

impl ModelSpec {
    /// The default circuit family: ZZ feature map with two repetitions,
    /// real-amplitudes ansatz with four, linear entanglement.
    pub fn new(n_qubits: usize) -> Self {
        ModelSpec {
            n_qubits,
            feature_map_reps: 2,
            ansatz_reps: 4,
            entanglement: Entanglement::Linear,
        }
    }

    /// Number of trainable angles: `n_qubits * (ansatz_reps + 1)`.
    pub fn param_count(&self) -> usize {
        self.n_qubits * (self.ansatz_reps + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 {
            return Err(Error::InvalidConfig("n_qubits must be >= 1".into()));
        }
        Ok(())
    }

    fn entangled_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n_qubits;
        match self.entanglement {
            Entanglement::Linear => (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect(),
            Entanglement::Full => {
                let mut pairs = Vec::new();
                for i in 0..n {
                    for j in i + 1..n {
                        pairs.push((i, j));
                    }
                }
                pairs
            }
        }
    }
}

/// Trainable angle vector; length must match [`ModelSpec::param_count`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "parameter vector",
            });
        }
        Ok(ParamVector(values))
    }

    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Copy with `theta[j] += delta`.
    pub fn shifted(&self, j: usize, delta: f64) -> Self {
        let mut v = self.0.clone();
        v[j] += delta;
        ParamVector(v)
    }

    /// Copy with `theta + scale * direction`.
    pub fn add_scaled(&self, direction: &[f64], scale: f64) -> Self {
        ParamVector(
            self.0
                .iter()
                .zip(direction)
                .map(|(t, d)| t + scale * d)
                .collect(),
        )
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// One labeled observation; feature length must equal the model's qubit count
/// and, after preprocessing, each component lies in [0, π].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: u8,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: u8) -> Self {
        Sample { features, label }
    }
}

/// Gate list of the ZZ feature map for input `x`, repeated
/// `feature_map_reps` times: H on every qubit, single-qubit phases P(2 x_i),
/// then for each entangled pair (i, j) the conjugated pair phase
/// CX(i,j) · P(2 (π−x_i)(π−x_j)) on j · CX(i,j).
pub fn feature_map_gates(spec: &ModelSpec, x: &[f64]) -> Result<Vec<(Gate, Vec<usize>)>> {
    spec.validate()?;
    if x.len() != spec.n_qubits {
        return Err(Error::FeatureDimension {
            expected: spec.n_qubits,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "feature vector",
        });
    }
    let pairs = spec.entangled_pairs();
    let mut gates = Vec::new();
    for _ in 0..spec.feature_map_reps {
        for q in 0..spec.n_qubits {
            gates.push((Gate::H, vec![q]));
        }
        for q in 0..spec.n_qubits {
            gates.push((Gate::Phase(2.0 * x[q]), vec![q]));
        }
        for &(i, j) in &pairs {
            gates.push((Gate::Cx, vec![i, j]));
            gates.push((Gate::Phase(2.0 * (PI - x[i]) * (PI - x[j])), vec![j]));
            gates.push((Gate::Cx, vec![i, j]));
        }
    }
    Ok(gates)
}

/// Gate list of the real-amplitudes ansatz: `ansatz_reps` repetitions of an
/// RY layer followed by the CX entanglement chain, then one final RY layer.
pub fn ansatz_gates(spec: &ModelSpec, theta: &ParamVector) -> Result<Vec<(Gate, Vec<usize>)>> {
    spec.validate()?;
    if theta.len() != spec.param_count() {
        return Err(Error::ParamDimension {
            expected: spec.param_count(),
            got: theta.len(),
        });
    }
    let pairs = spec.entangled_pairs();
    let mut gates = Vec::new();
    let mut idx = 0;
    for _ in 0..spec.ansatz_reps {
        for q in 0..spec.n_qubits {
            gates.push((Gate::Ry(theta[idx]), vec![q]));
            idx += 1;
        }
        for &(i, j) in &pairs {
            gates.push((Gate::Cx, vec![i, j]));
        }
    }
    for q in 0..spec.n_qubits {
        gates.push((Gate::Ry(theta[idx]), vec![q]));
        idx += 1;
    }
    Ok(gates)
}

/// Encode a feature vector into a statevector, starting from |0...0⟩.
pub fn encode_features(spec: &ModelSpec, x: &[f64]) -> Result<Statevector> {
    let gates = feature_map_gates(spec, x)?;
    let mut sv = Statevector::zero_state(spec.n_qubits);
    for (gate, targets) in &gates {
        sv.apply_gate(gate, targets)?;
    }
    Ok(sv)
}

/// Apply the trainable ansatz to an (encoded) state.
pub fn apply_ansatz(
    spec: &ModelSpec,
    mut state: Statevector,
    theta: &ParamVector,
) -> Result<Statevector> {
    let gates = ansatz_gates(spec, theta)?;
    for (gate, targets) in &gates {
        state.apply_gate(gate, targets)?;
    }
    Ok(state)
}

/// Feature map followed by ansatz: the full classifier circuit.
pub fn prepare_state(spec: &ModelSpec, theta: &ParamVector, x: &[f64]) -> Result<Statevector> {
    apply_ansatz(spec, encode_features(spec, x)?, theta)
}

/// Class-1 probability `p = (1 + parity) / 2` under the given shot model.
pub fn predict_proba(
    spec: &ModelSpec,
    theta: &ParamVector,
    x: &[f64],
    shots: &ShotConfig,
) -> Result<f64> {
    shots.validate()?;
    let parity = prepare_state(spec, theta, x)?.sample_parity(shots)?;
    Ok((1.0 + parity) / 2.0)
}

fn clamp_proba(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn cross_entropy(p_clamped: f64, label: u8) -> f64 {
    if label == 1 {
        -p_clamped.ln()
    } else {
        -(1.0 - p_clamped).ln()
    }
}

/// Per-sample shot seed, so sampled readout draws an independent stream per
/// batch element while staying deterministic.
fn shot_config_for(shots: &ShotConfig, index: usize) -> ShotConfig {
    match *shots {
        ShotConfig::Exact => ShotConfig::Exact,
        ShotConfig::Sampled { shots, seed } => ShotConfig::Sampled {
            shots,
            seed: seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        },
    }
}

/// Mean clamped binary cross-entropy over a nonempty batch.
pub fn batch_loss(
    spec: &ModelSpec,
    theta: &ParamVector,
    batch: &[Sample],
    shots: &ShotConfig,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for (i, sample) in batch.iter().enumerate() {
        let p = predict_proba(spec, theta, &sample.features, &shot_config_for(shots, i))?;
        total += cross_entropy(clamp_proba(p), sample.label);
    }
    Ok(total / batch.len() as f64)
}

/// Fraction of the batch classified correctly at the p >= 0.5 threshold
/// (exact expectation readout).
pub fn accuracy(spec: &ModelSpec, theta: &ParamVector, batch: &[Sample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut correct = 0usize;
    for sample in batch {
        let p = predict_proba(spec, theta, &sample.features, &ShotConfig::Exact)?;
        let predicted = u8::from(p >= 0.5);
        if predicted == sample.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / batch.len() as f64)
}

/// Exact gradient of the parity expectation for one input via the parameter
/// shift rule: `dE/dθ_j = (E(θ + π/2 e_j) − E(θ − π/2 e_j)) / 2`.
pub fn parity_gradient(spec: &ModelSpec, theta: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
    let mut grad = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        let e_plus = prepare_state(spec, &theta.shifted(j, FRAC_PI_2), x)?.parity_expectation();
        let e_minus = prepare_state(spec, &theta.shifted(j, -FRAC_PI_2), x)?.parity_expectation();
        grad.push((e_plus - e_minus) / 2.0);
    }
    Ok(grad)
}

/// Exact gradient of [`batch_loss`] with respect to θ, chaining the
/// parameter-shift parity derivative through the clamped cross-entropy.
/// Refuses sampled readout: this is the ground-truth oracle.
pub fn parameter_shift_gradient(
    spec: &ModelSpec,
    theta: &ParamVector,
    batch: &[Sample],
    shots: &ShotConfig,
) -> Result<Vec<f64>> {
    if !shots.is_exact() {
        return Err(Error::OracleNeedsExact);
    }
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut grad = vec![0.0; theta.len()];
    for sample in batch {
        let parity = prepare_state(spec, theta, &sample.features)?.parity_expectation();
        let p = (1.0 + parity) / 2.0;
        // inside the clamp plateau the loss is constant in p
        if p <= PROB_CLAMP || p >= 1.0 - PROB_CLAMP {
            continue;
        }
        let y = f64::from(sample.label);
        let dloss_dp = (p - y) / (p * (1.0 - p));
        let parity_grad = parity_gradient(spec, theta, &sample.features)?;
        for (g, de) in grad.iter_mut().zip(&parity_grad) {
            // dp/dparity = 1/2
            *g += dloss_dp * 0.5 * de;
        }
    }
    for g in &mut grad {
        *g /= batch.len() as f64;
    }
    Ok(grad)
}
