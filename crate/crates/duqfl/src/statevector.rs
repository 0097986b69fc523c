//! Dense statevector simulation of small n-qubit circuits.
//!
//! The state is a normalized vector of 2^n complex amplitudes. Qubit 0 is the
//! least-significant bit of the basis index; that convention is fixed here and
//! relied on everywhere else (tests compare bit-exact basis indices).
//!
//! Readout is the full Z-parity observable: `(-1)^popcount(b)` weighted by
//! `|amplitude_b|^2`, either exactly or estimated from a finite number of
//! measurement shots.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalized amplitude vector over `2^n_qubits` basis states.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    amps: Vec<Complex64>,
    n_qubits: usize,
}

impl Statevector {
    /// The all-zeros computational basis state |0...0⟩.
    pub fn zero_state(n_qubits: usize) -> Self {
        assert!(n_qubits >= 1, "need at least one qubit");
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Statevector { amps, n_qubits }
    }

    /// Build from raw amplitudes; the length must be a power of two and the
    /// vector must already be normalized.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let n_qubits = amps.len().trailing_zeros() as usize;
        if amps.len() < 2 || amps.len() != (1 << n_qubits) {
            return Err(Error::InvalidConfig(format!(
                "amplitude vector length {} is not a power of two >= 2",
                amps.len()
            )));
        }
        let norm_sq: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sq - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidConfig(format!(
                "amplitude vector is not normalized (|psi|^2 = {norm_sq})"
            )));
        }
        Ok(Statevector { amps, n_qubits })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_squared(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// In-place single-qubit / two-qubit gate application.
    pub fn apply_gate(&mut self, gate: &Gate, targets: &[usize]) -> Result<()> {
        validate_targets(gate, targets, self.n_qubits)?;
        match gate {
            Gate::Cx => self.apply_cx(targets[0], targets[1]),
            single => self.apply_single(&single.single_qubit_matrix(), targets[0]),
        }
        Ok(())
    }

    fn apply_single(&mut self, m: &[[Complex64; 2]; 2], qubit: usize) {
        let stride = 1usize << qubit;
        let dim = self.amps.len();
        let mut base = 0;
        while base < dim {
            for offset in base..base + stride {
                let i0 = offset;
                let i1 = offset + stride;
                let a0 = self.amps[i0];
                let a1 = self.amps[i1];
                self.amps[i0] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i1] = m[1][0] * a0 + m[1][1] * a1;
            }
            base += 2 * stride;
        }
    }

    fn apply_cx(&mut self, control: usize, target: usize) {
        let cmask = 1usize << control;
        let tmask = 1usize << target;
        for i in 0..self.amps.len() {
            if i & cmask != 0 && i & tmask == 0 {
                self.amps.swap(i, i | tmask);
            }
        }
    }

    /// Exact expectation of the full Z-parity observable,
    /// `sum_b (-1)^popcount(b) |amp_b|^2`, in [-1, 1].
    pub fn parity_expectation(&self) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .map(|(b, a)| {
                let sign = if (b.count_ones() & 1) == 0 { 1.0 } else { -1.0 };
                sign * a.norm_sqr()
            })
            .sum()
    }

    /// Parity readout under a shot model: exact expectation, or the empirical
    /// mean of `(-1)^parity` over basis-state draws from `|amp|^2`.
    /// Deterministic for a given seed.
    pub fn sample_parity(&self, cfg: &ShotConfig) -> Result<f64> {
        match *cfg {
            ShotConfig::Exact => Ok(self.parity_expectation()),
            ShotConfig::Sampled { shots, seed } => {
                if shots == 0 {
                    return Err(Error::ZeroShots);
                }
                let mut cumulative = Vec::with_capacity(self.amps.len());
                let mut acc = 0.0;
                for a in &self.amps {
                    acc += a.norm_sqr();
                    cumulative.push(acc);
                }
                let total = acc;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut sum = 0.0f64;
                for _ in 0..shots {
                    let u: f64 = rng.gen::<f64>() * total;
                    let b = cumulative.partition_point(|&c| c <= u).min(self.amps.len() - 1);
                    sum += if (b.count_ones() & 1) == 0 { 1.0 } else { -1.0 };
                }
                Ok(sum / shots as f64)
            }
        }
    }
}

/// Gate set needed by the ZZ feature map and real-amplitudes ansatz.
/// Angles are radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    H,
    X,
    Ry(f64),
    Rz(f64),
    /// Phase gate: diag(1, e^{i angle}).
    Phase(f64),
    /// Controlled-X; targets are [control, target].
    Cx,
}

impl Gate {
    pub fn arity(&self) -> usize {
        match self {
            Gate::Cx => 2,
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Gate::H => "H",
            Gate::X => "X",
            Gate::Ry(_) => "RY",
            Gate::Rz(_) => "RZ",
            Gate::Phase(_) => "P",
            Gate::Cx => "CX",
        }
    }

    /// 2x2 matrix of a single-qubit gate. Panics on `Cx`.
    pub fn single_qubit_matrix(&self) -> [[Complex64; 2]; 2] {
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        match *self {
            Gate::H => {
                let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                [[h, h], [h, -h]]
            }
            Gate::X => [[zero, one], [one, zero]],
            Gate::Ry(theta) => {
                let c = Complex64::new((theta / 2.0).cos(), 0.0);
                let s = Complex64::new((theta / 2.0).sin(), 0.0);
                [[c, -s], [s, c]]
            }
            Gate::Rz(theta) => [
                [Complex64::from_polar(1.0, -theta / 2.0), zero],
                [zero, Complex64::from_polar(1.0, theta / 2.0)],
            ],
            Gate::Phase(theta) => [[one, zero], [zero, Complex64::from_polar(1.0, theta)]],
            Gate::Cx => panic!("CX has no single-qubit matrix"),
        }
    }
}

fn validate_targets(gate: &Gate, targets: &[usize], n_qubits: usize) -> Result<()> {
    if targets.len() != gate.arity() {
        return Err(Error::TargetArity {
            gate: gate.name(),
            expected: gate.arity(),
            got: targets.len(),
        });
    }
    for &t in targets {
        if t >= n_qubits {
            return Err(Error::QubitOutOfRange {
                index: t,
                n_qubits,
            });
        }
    }
    if targets.len() == 2 && targets[0] == targets[1] {
        return Err(Error::DuplicateTargets(targets.to_vec()));
    }
    Ok(())
}

/// Measurement model for parity readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ShotConfig {
    Exact,
    Sampled { shots: u64, seed: u64 },
}

impl ShotConfig {
    pub fn is_exact(&self) -> bool {
        matches!(self, ShotConfig::Exact)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ShotConfig::Sampled { shots: 0, .. } => Err(Error::ZeroShots),
            _ => Ok(()),
        }
    }
}

/// Reference route for verification: explicit 2^n x 2^n gate matrices applied
/// by full matrix-vector products. Independent of the in-place kernels above,
/// so agreement between the two is a meaningful check.
pub mod dense {
    use super::{validate_targets, Gate, Statevector};
    use crate::error::Result;
    use num_complex::Complex64;

    /// Embed `gate` acting on `targets` into the full 2^n x 2^n unitary.
    pub fn gate_matrix(n_qubits: usize, gate: &Gate, targets: &[usize]) -> Result<Vec<Vec<Complex64>>> {
        validate_targets(gate, targets, n_qubits)?;
        let local = local_matrix(gate);
        let k = targets.len();
        let dim = 1usize << n_qubits;
        let zero = Complex64::new(0.0, 0.0);
        let mut m = vec![vec![zero; dim]; dim];
        for col in 0..dim {
            // local column index: bit j of `lc` is the state of targets[j]
            let mut lc = 0usize;
            for (j, &t) in targets.iter().enumerate() {
                if col & (1 << t) != 0 {
                    lc |= 1 << j;
                }
            }
            let mut base = col;
            for &t in targets {
                base &= !(1 << t);
            }
            for lr in 0..(1 << k) {
                let mut row = base;
                for (j, &t) in targets.iter().enumerate() {
                    if lr & (1 << j) != 0 {
                        row |= 1 << t;
                    }
                }
                m[row][col] = local[lr][lc];
            }
        }
        Ok(m)
    }

    /// Local matrix in the sub-index convention of [`gate_matrix`]:
    /// for CX, sub-bit 0 is the control and sub-bit 1 is the target.
    pub fn local_matrix(gate: &Gate) -> Vec<Vec<Complex64>> {
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        match gate {
            Gate::Cx => {
                // basis order |t c⟩ as sub-index t*2 + c: flips t when c = 1
                let mut m = vec![vec![zero; 4]; 4];
                m[0][0] = one; // |00⟩ -> |00⟩
                m[3][1] = one; // c=1,t=0 -> c=1,t=1
                m[2][2] = one; // |t=1,c=0⟩ fixed
                m[1][3] = one; // c=1,t=1 -> c=1,t=0
                m
            }
            single => {
                let m2 = single.single_qubit_matrix();
                vec![
                    vec![m2[0][0], m2[0][1]],
                    vec![m2[1][0], m2[1][1]],
                ]
            }
        }
    }

    /// Full matrix-vector product `m * state`.
    pub fn apply(m: &[Vec<Complex64>], state: &Statevector) -> Vec<Complex64> {
        let amps = state.amplitudes();
        m.iter()
            .map(|row| row.iter().zip(amps).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Max |G†G - I| entry, for unitarity checks.
    pub fn unitarity_defect(m: &[Vec<Complex64>]) -> f64 {
        let dim = m.len();
        let mut worst = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..dim {
                    acc += m[k][i].conj() * m[k][j];
                }
                let expected = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((acc - expected).norm());
            }
        }
        worst
    }
}
