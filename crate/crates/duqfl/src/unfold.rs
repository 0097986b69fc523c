//! Deep-unfolded local training: SPSA with meta-learned hyperparameters.
//!
//! Each unfolding step draws a Rademacher direction, probes the loss at
//! `θ ± δΔ`, forms the SPSA gradient estimate, applies a momentum parameter
//! update, and then updates the learning rate η and perturbation δ themselves
//! from online meta-gradients with momentum and a 0.001 floor. The loop exits
//! early once the loss falls to the configured threshold.
//!
//! The meta-gradients are estimated without extra circuit structure:
//! `∂L/∂η ≈ −⟨g_t, g_{t−1}⟩` (loss decreases with η while successive SPSA
//! gradients align) and `∂L/∂δ` from a one-sided finite difference of the
//! loss probe along the current direction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statevector::ShotConfig;
use crate::vqc::{self, ModelSpec, ParamVector, Sample};

/// Default floor for η and δ.
pub const HYPER_FLOOR: f64 = 0.001;

/// Learned hyperparameters and the constants that govern their updates.
///
/// The update at step t is
/// `m ← γ m + (1 − γ) ∇` followed by `η ← max(floor, η − α m_η)` and
/// `δ ← max(floor, δ − β m_δ)`, with γ = `hyper_momentum`,
/// α = `meta_step_eta`, β = `meta_step_delta`. `param_momentum` is the
/// coefficient of the parameter-velocity term, a separate constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperState {
    pub eta: f64,
    pub delta: f64,
    pub m_eta: f64,
    pub m_delta: f64,
    pub hyper_momentum: f64,
    pub meta_step_eta: f64,
    pub meta_step_delta: f64,
    pub param_momentum: f64,
    pub floor: f64,
}

impl Default for HyperState {
    fn default() -> Self {
        HyperState {
            eta: 0.1,
            delta: 0.1,
            m_eta: 0.0,
            m_delta: 0.0,
            hyper_momentum: 0.9,
            meta_step_eta: 0.01,
            meta_step_delta: 0.01,
            param_momentum: 0.5,
            floor: HYPER_FLOOR,
        }
    }
}

impl HyperState {
    /// Control-arm variant: meta steps zeroed so η and δ stay at their
    /// initial values for the whole run.
    pub fn frozen() -> Self {
        HyperState {
            meta_step_eta: 0.0,
            meta_step_delta: 0.0,
            ..HyperState::default()
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.meta_step_eta == 0.0 && self.meta_step_delta == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.floor > 0.0) {
            return Err(Error::InvalidConfig("hyper floor must be positive".into()));
        }
        if self.eta < self.floor || self.delta < self.floor {
            return Err(Error::InvalidConfig(format!(
                "eta ({}) and delta ({}) must start at or above the floor {}",
                self.eta, self.delta, self.floor
            )));
        }
        for (name, v) in [
            ("hyper_momentum", self.hyper_momentum),
            ("param_momentum", self.param_momentum),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if self.meta_step_eta < 0.0 || self.meta_step_delta < 0.0 {
            return Err(Error::InvalidConfig("meta step sizes must be nonnegative".into()));
        }
        Ok(())
    }
}

/// How δ is adapted between steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdaptiveDelta {
    /// Meta-gradient update with momentum (the default).
    Meta,
    /// Proportional to the gradient norm: `δ ← max(floor, scale · ‖g‖)`.
    GradNorm { scale: f64 },
}

/// Local training loop configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnfoldConfig {
    /// Maximum unfolding steps T_u.
    pub max_steps: usize,
    /// Early-stop loss threshold ε; the loop breaks once loss ≤ ε.
    pub epsilon: f64,
    pub rademacher_seed: u64,
    pub adaptive_delta: AdaptiveDelta,
}

impl UnfoldConfig {
    pub fn new(max_steps: usize, rademacher_seed: u64) -> Self {
        UnfoldConfig {
            max_steps,
            epsilon: 0.0,
            rademacher_seed,
            adaptive_delta: AdaptiveDelta::Meta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be >= 1".into()));
        }
        if self.epsilon < 0.0 {
            return Err(Error::InvalidConfig("epsilon must be >= 0".into()));
        }
        if let AdaptiveDelta::GradNorm { scale } = self.adaptive_delta {
            if !(scale > 0.0) {
                return Err(Error::InvalidConfig("gradnorm scale must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Per-step record of one unfolding run. All vectors share length
/// `steps_used`; `etas[t]`/`deltas[t]` are the values used at step t+1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnfoldTrace {
    pub losses: Vec<f64>,
    pub etas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub stopped_early: bool,
    pub steps_used: usize,
}

impl UnfoldTrace {
    fn with_capacity(cap: usize) -> Self {
        UnfoldTrace {
            losses: Vec::with_capacity(cap),
            etas: Vec::with_capacity(cap),
            deltas: Vec::with_capacity(cap),
            grad_norms: Vec::with_capacity(cap),
            stopped_early: false,
            steps_used: 0,
        }
    }

    /// Serialize as CSV with header `t,loss,eta,delta,grad_norm`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "loss", "eta", "delta", "grad_norm"])?;
        for t in 0..self.steps_used {
            w.write_record([
                (t + 1).to_string(),
                self.losses[t].to_string(),
                self.etas[t].to_string(),
                self.deltas[t].to_string(),
                self.grad_norms[t].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parse a trace previously written by [`UnfoldTrace::write_csv`].
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut trace = UnfoldTrace::with_capacity(16);
        for record in r.deserialize() {
            let row: (usize, f64, f64, f64, f64) = record?;
            trace.losses.push(row.1);
            trace.etas.push(row.2);
            trace.deltas.push(row.3);
            trace.grad_norms.push(row.4);
        }
        trace.steps_used = trace.losses.len();
        Ok(trace)
    }
}

/// Result of one local unfolding run. The final hyperparameter state is
/// returned so the federation can persist per-client adaptation across
/// rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct UnfoldOutcome {
    pub theta: ParamVector,
    pub final_loss: f64,
    pub trace: UnfoldTrace,
    pub hyper: HyperState,
}

/// SPSA gradient estimate plus the two loss probes that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SpsaEstimate {
    pub gradient: Vec<f64>,
    pub loss_plus: f64,
    pub loss_minus: f64,
}

/// Two-probe SPSA estimate `((L(θ+δΔ) − L(θ−δΔ)) / 2δ) · Δ`.
///
/// For ±1 Rademacher entries the componentwise product with Δ equals
/// division by Δ, so this is the standard simultaneous-perturbation form.
pub fn spsa_gradient<F>(
    loss_fn: &mut F,
    theta: &ParamVector,
    delta: f64,
    draw: &[f64],
) -> Result<SpsaEstimate>
where
    F: FnMut(&ParamVector) -> Result<f64>,
{
    if !(delta > 0.0) {
        return Err(Error::InvalidConfig(format!("spsa delta must be positive, got {delta}")));
    }
    if draw.len() != theta.len() {
        return Err(Error::ShapeMismatch);
    }
    if draw.iter().any(|d| *d != 1.0 && *d != -1.0) {
        return Err(Error::InvalidConfig("rademacher draw entries must be ±1".into()));
    }
    let loss_plus = loss_fn(&theta.add_scaled(draw, delta))?;
    let loss_minus = loss_fn(&theta.add_scaled(draw, -delta))?;
    if !loss_plus.is_finite() || !loss_minus.is_finite() {
        return Err(Error::NonFinite {
            context: "spsa loss probe",
        });
    }
    let scale = (loss_plus - loss_minus) / (2.0 * delta);
    Ok(SpsaEstimate {
        gradient: draw.iter().map(|d| scale * d).collect(),
        loss_plus,
        loss_minus,
    })
}

/// Momentum parameter update
/// `θ_{t+1} = θ_t − η g + β (θ_t − θ_{t−1})`.
/// At the first step pass `theta_prev = theta_t` (zero initial velocity).
pub fn momentum_param_step(
    theta: &ParamVector,
    theta_prev: &ParamVector,
    grad: &[f64],
    eta: f64,
    param_momentum: f64,
) -> Result<ParamVector> {
    if theta.len() != theta_prev.len() || theta.len() != grad.len() {
        return Err(Error::ShapeMismatch);
    }
    let values = (0..theta.len())
        .map(|i| theta[i] - eta * grad[i] + param_momentum * (theta[i] - theta_prev[i]))
        .collect();
    ParamVector::new(values)
}

/// Momentum meta-update of η and δ, clamped at the floor:
/// `m ← γ m + (1 − γ) ∇`, `η ← max(floor, η − α m_η)`,
/// `δ ← max(floor, δ − β m_δ)`.
pub fn meta_update(hyper: &HyperState, grad_eta: f64, grad_delta: f64) -> HyperState {
    let gamma = hyper.hyper_momentum;
    let m_eta = gamma * hyper.m_eta + (1.0 - gamma) * grad_eta;
    let m_delta = gamma * hyper.m_delta + (1.0 - gamma) * grad_delta;
    HyperState {
        eta: hyper.floor.max(hyper.eta - hyper.meta_step_eta * m_eta),
        delta: hyper.floor.max(hyper.delta - hyper.meta_step_delta * m_delta),
        m_eta,
        m_delta,
        ..*hyper
    }
}

/// Online meta-gradient estimates for (η, δ).
///
/// Returns (0, 0) before any step has completed. Afterwards the η
/// hypergradient is the alignment surrogate `−⟨g_t, g_{t−1}⟩`, and the δ
/// hypergradient is a one-sided finite difference of the loss probe along
/// the current direction, `(L(θ + (δ+h)Δ) − L(θ + δΔ)) / h` with `h = 0.1 δ`,
/// reusing the already-computed `L(θ + δΔ)`.
pub fn estimate_meta_gradients<F>(
    loss_fn: &mut F,
    theta: &ParamVector,
    delta: f64,
    draw: &[f64],
    loss_plus: f64,
    grad: &[f64],
    prev_grad: Option<&[f64]>,
) -> Result<(f64, f64)>
where
    F: FnMut(&ParamVector) -> Result<f64>,
{
    let prev = match prev_grad {
        Some(p) => p,
        None => return Ok((0.0, 0.0)),
    };
    if prev.len() != grad.len() {
        return Err(Error::ShapeMismatch);
    }
    let grad_eta = -grad.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>();
    let h = 0.1 * delta;
    let probe = loss_fn(&theta.add_scaled(draw, delta + h))?;
    let grad_delta = (probe - loss_plus) / h;
    Ok((grad_eta, grad_delta))
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Run the unfolded SPSA loop against an arbitrary loss closure.
///
/// Per step: draw Δ, probe L±, estimate the SPSA gradient, apply the
/// momentum parameter update, estimate meta-gradients, meta-update η and δ,
/// and record the post-update loss. Breaks once loss ≤ ε. Deterministic for
/// a given `rademacher_seed` and a deterministic loss closure.
pub fn unfold_loss<F>(
    loss_fn: &mut F,
    theta0: &ParamVector,
    hyper0: &HyperState,
    cfg: &UnfoldConfig,
) -> Result<UnfoldOutcome>
where
    F: FnMut(&ParamVector) -> Result<f64>,
{
    cfg.validate()?;
    hyper0.validate()?;
    let mut theta = theta0.clone();
    let mut theta_prev = theta0.clone();
    let mut hyper = *hyper0;
    let mut prev_grad: Option<Vec<f64>> = None;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rademacher_seed);
    let mut trace = UnfoldTrace::with_capacity(cfg.max_steps);

    for _ in 0..cfg.max_steps {
        let draw: Vec<f64> = (0..theta.len())
            .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let est = spsa_gradient(loss_fn, &theta, hyper.delta, &draw)?;
        let grad_norm = l2_norm(&est.gradient);

        let next = momentum_param_step(&theta, &theta_prev, &est.gradient, hyper.eta, hyper.param_momentum)?;

        // meta-gradients are probed at the pre-update θ with the current Δ;
        // the frozen control arm skips the extra probe entirely
        let (grad_eta, grad_delta) = if hyper.is_frozen() {
            (0.0, 0.0)
        } else {
            estimate_meta_gradients(
                loss_fn,
                &theta,
                hyper.delta,
                &draw,
                est.loss_plus,
                &est.gradient,
                prev_grad.as_deref(),
            )?
        };

        trace.etas.push(hyper.eta);
        trace.deltas.push(hyper.delta);
        trace.grad_norms.push(grad_norm);

        theta_prev = theta;
        theta = next;
        let loss = loss_fn(&theta)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                context: "unfold step loss",
            });
        }
        trace.losses.push(loss);
        trace.steps_used += 1;

        hyper = meta_update(&hyper, grad_eta, grad_delta);
        if let AdaptiveDelta::GradNorm { scale } = cfg.adaptive_delta {
            hyper.delta = hyper.floor.max(scale * grad_norm);
        }
        prev_grad = Some(est.gradient);

        if loss <= cfg.epsilon {
            trace.stopped_early = true;
            break;
        }
    }

    let final_loss = *trace.losses.last().expect("at least one step runs");
    Ok(UnfoldOutcome {
        theta,
        final_loss,
        trace,
        hyper,
    })
}

/// Unfold one client's classifier on its local batch (Algorithm 1 over the
/// VQC loss).
pub fn unfold_client(
    spec: &ModelSpec,
    theta0: &ParamVector,
    batch: &[Sample],
    hyper0: &HyperState,
    cfg: &UnfoldConfig,
    shots: &ShotConfig,
) -> Result<UnfoldOutcome> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut loss_fn = |theta: &ParamVector| vqc::batch_loss(spec, theta, batch, shots);
    unfold_loss(&mut loss_fn, theta0, hyper0, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} vs {b} (tol {tol})");
    }

    /// f(θ) = Σ aᵢ θᵢ², exact gradient 2 aᵢ θᵢ.
    fn quadratic(coeffs: Vec<f64>) -> impl FnMut(&ParamVector) -> Result<f64> {
        move |theta: &ParamVector| {
            Ok(theta
                .as_slice()
                .iter()
                .zip(&coeffs)
                .map(|(t, a)| a * t * t)
                .sum())
        }
    }

    #[test]
    fn spsa_on_quadratic_known_draws() {
        let mut f = quadratic(vec![1.0, 1.0]);
        let theta = ParamVector::new(vec![1.0, 2.0]).unwrap();

        let est = spsa_gradient(&mut f, &theta, 0.1, &[1.0, 1.0]).unwrap();
        assert_close(est.gradient[0], 6.0, 1e-12);
        assert_close(est.gradient[1], 6.0, 1e-12);

        let est = spsa_gradient(&mut f, &theta, 0.1, &[1.0, -1.0]).unwrap();
        assert_close(est.gradient[0], -2.0, 1e-12);
        assert_close(est.gradient[1], 2.0, 1e-12);
    }

    #[test]
    fn spsa_mean_over_all_patterns_is_exact_gradient() {
        // enumerating every Rademacher pattern averages to the true gradient
        let mut f = quadratic(vec![1.0, 1.0]);
        let theta = ParamVector::new(vec![1.0, 2.0]).unwrap();
        let mut mean = vec![0.0; 2];
        for bits in 0..4u32 {
            let draw: Vec<f64> = (0..2)
                .map(|j| if bits & (1 << j) != 0 { 1.0 } else { -1.0 })
                .collect();
            let est = spsa_gradient(&mut f, &theta, 0.1, &draw).unwrap();
            for (m, g) in mean.iter_mut().zip(&est.gradient) {
                *m += g / 4.0;
            }
        }
        assert_close(mean[0], 2.0, 1e-12);
        assert_close(mean[1], 4.0, 1e-12);
    }

    #[test]
    fn spsa_unbiased_on_diagonal_quadratics_up_to_d10() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in [3usize, 7, 10] {
            let coeffs: Vec<f64> = (0..d).map(|_| rng.gen_range(0.2..3.0)).collect();
            let point: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let expected: Vec<f64> = coeffs.iter().zip(&point).map(|(a, t)| 2.0 * a * t).collect();
            let theta = ParamVector::new(point).unwrap();
            let mut f = quadratic(coeffs);
            let total = 1u32 << d;
            let mut mean = vec![0.0; d];
            for bits in 0..total {
                let draw: Vec<f64> = (0..d)
                    .map(|j| if bits & (1 << j) != 0 { 1.0 } else { -1.0 })
                    .collect();
                let est = spsa_gradient(&mut f, &theta, 0.05, &draw).unwrap();
                for (m, g) in mean.iter_mut().zip(&est.gradient) {
                    *m += g / total as f64;
                }
            }
            for (m, e) in mean.iter().zip(&expected) {
                assert_close(*m, *e, 1e-12);
            }
        }
    }

    #[test]
    fn spsa_rejects_bad_inputs() {
        let mut f = quadratic(vec![1.0]);
        let theta = ParamVector::new(vec![1.0]).unwrap();
        assert!(spsa_gradient(&mut f, &theta, 0.0, &[1.0]).is_err());
        assert!(spsa_gradient(&mut f, &theta, 0.1, &[0.5]).is_err());
        assert!(spsa_gradient(&mut f, &theta, 0.1, &[1.0, -1.0]).is_err());
    }

    #[test]
    fn momentum_step_scalar_arithmetic() {
        let theta = ParamVector::new(vec![1.0]).unwrap();
        let prev = ParamVector::new(vec![0.5]).unwrap();
        let out = momentum_param_step(&theta, &prev, &[2.0], 0.1, 0.5).unwrap();
        assert_close(out[0], 1.05, 1e-12);
    }

    #[test]
    fn momentum_step_reduces_to_plain_gradient_when_beta_zero() {
        let theta = ParamVector::new(vec![1.0, -2.0]).unwrap();
        let prev = ParamVector::new(vec![9.0, 9.0]).unwrap();
        let out = momentum_param_step(&theta, &prev, &[1.0, 1.0], 0.1, 0.0).unwrap();
        assert_close(out[0], 0.9, 1e-12);
        assert_close(out[1], -2.1, 1e-12);
    }

    #[test]
    fn momentum_step_fixed_point() {
        let theta = ParamVector::new(vec![0.7]).unwrap();
        let out = momentum_param_step(&theta, &theta, &[0.0], 0.1, 0.5).unwrap();
        assert_close(out[0], 0.7, 1e-15);
    }

    #[test]
    fn meta_update_momentum_accumulation() {
        let hyper = HyperState::default();
        let updated = meta_update(&hyper, 1.0, 0.0);
        assert_close(updated.m_eta, 0.1, 1e-12);
        assert_close(updated.eta, 0.1 - 0.01 * 0.1, 1e-12);
    }

    #[test]
    fn meta_update_engages_floor() {
        let hyper = HyperState {
            eta: 0.01,
            m_eta: 0.0,
            hyper_momentum: 0.0,
            meta_step_eta: 1.0,
            ..HyperState::default()
        };
        // m becomes 0.1, eta - 1.0 * 0.1 < 0 -> clamped to floor
        let updated = meta_update(&hyper, 0.1, 0.0);
        assert_close(updated.eta, 0.001, 1e-15);
    }

    #[test]
    fn meta_update_fixed_point_with_zero_gradients() {
        let mut hyper = HyperState::default();
        for _ in 0..10 {
            hyper = meta_update(&hyper, 0.0, 0.0);
        }
        assert_close(hyper.eta, 0.1, 1e-15);
        assert_close(hyper.delta, 0.1, 1e-15);
    }

    #[test]
    fn meta_gradients_base_case_is_zero() {
        let mut f = quadratic(vec![1.0, 1.0]);
        let theta = ParamVector::new(vec![1.0, 2.0]).unwrap();
        let (ge, gd) =
            estimate_meta_gradients(&mut f, &theta, 0.1, &[1.0, 1.0], 5.62, &[6.0, 6.0], None)
                .unwrap();
        assert_eq!((ge, gd), (0.0, 0.0));
    }

    #[test]
    fn meta_gradient_eta_is_negative_alignment() {
        let mut f = quadratic(vec![1.0, 1.0]);
        let theta = ParamVector::new(vec![1.0, 2.0]).unwrap();
        let (ge, _) = estimate_meta_gradients(
            &mut f,
            &theta,
            0.1,
            &[1.0, 1.0],
            5.62,
            &[1.0, 1.0],
            Some(&[1.0, 1.0]),
        )
        .unwrap();
        assert_close(ge, -2.0, 1e-12);
        let (ge, _) = estimate_meta_gradients(
            &mut f,
            &theta,
            0.1,
            &[1.0, 1.0],
            5.62,
            &[1.0, 0.0],
            Some(&[0.0, 1.0]),
        )
        .unwrap();
        assert_close(ge, 0.0, 1e-12);
    }

    #[test]
    fn meta_gradient_delta_probes_loss_slope() {
        // f = |θ|², θ = (1,2), δ = 0.1, Δ = (1,1):
        // L(θ+δΔ) = 5.62, h = 0.01, L(θ+0.11Δ) = 1.11² + 2.11² = 5.6842
        // -> ∂L/∂δ ≈ (5.6842 − 5.62)/0.01 = 6.42
        let mut f = quadratic(vec![1.0, 1.0]);
        let theta = ParamVector::new(vec![1.0, 2.0]).unwrap();
        let (_, gd) = estimate_meta_gradients(
            &mut f,
            &theta,
            0.1,
            &[1.0, 1.0],
            5.62,
            &[6.0, 6.0],
            Some(&[6.0, 6.0]),
        )
        .unwrap();
        assert_close(gd, 6.42, 1e-9);
    }

    #[test]
    fn unfold_descends_a_quadratic() {
        let mut f = quadratic(vec![1.0, 2.0, 0.5]);
        let theta0 = ParamVector::new(vec![1.5, -1.0, 2.0]).unwrap();
        let cfg = UnfoldConfig::new(40, 17);
        let out = unfold_loss(&mut f, &theta0, &HyperState::default(), &cfg).unwrap();
        let initial = f(&theta0).unwrap();
        assert!(out.final_loss < 0.25 * initial, "final {}", out.final_loss);
        assert_eq!(out.trace.steps_used, 40);
        assert_eq!(out.trace.losses.len(), 40);
        assert_eq!(out.trace.etas.len(), 40);
        assert_eq!(out.trace.deltas.len(), 40);
        assert_eq!(out.trace.grad_norms.len(), 40);
    }

    #[test]
    fn unfold_respects_floors_throughout() {
        let mut f = quadratic(vec![3.0, 3.0]);
        let theta0 = ParamVector::new(vec![2.0, -2.0]).unwrap();
        let cfg = UnfoldConfig::new(60, 3);
        let out = unfold_loss(&mut f, &theta0, &HyperState::default(), &cfg).unwrap();
        assert!(out.trace.etas.iter().all(|&e| e >= HYPER_FLOOR));
        assert!(out.trace.deltas.iter().all(|&d| d >= HYPER_FLOOR));
        assert!(out.hyper.eta >= HYPER_FLOOR && out.hyper.delta >= HYPER_FLOOR);
    }

    #[test]
    fn unfold_stops_after_one_step_when_epsilon_exceeds_loss() {
        let mut f = quadratic(vec![1.0]);
        let theta0 = ParamVector::new(vec![1.0]).unwrap();
        let cfg = UnfoldConfig {
            epsilon: 1e9,
            ..UnfoldConfig::new(50, 1)
        };
        let out = unfold_loss(&mut f, &theta0, &HyperState::default(), &cfg).unwrap();
        assert_eq!(out.trace.steps_used, 1);
        assert!(out.trace.stopped_early);
    }

    #[test]
    fn unfold_is_deterministic_per_seed() {
        let theta0 = ParamVector::new(vec![1.5, -1.0, 2.0]).unwrap();
        let cfg = UnfoldConfig::new(25, 99);
        let run = || {
            let mut f = quadratic(vec![1.0, 2.0, 0.5]);
            unfold_loss(&mut f, &theta0, &HyperState::default(), &cfg).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        // a different seed draws different directions
        let mut f = quadratic(vec![1.0, 2.0, 0.5]);
        let c = unfold_loss(
            &mut f,
            &theta0,
            &HyperState::default(),
            &UnfoldConfig::new(25, 100),
        )
        .unwrap();
        assert_ne!(a.trace.losses, c.trace.losses);
    }

    #[test]
    fn frozen_hyper_state_keeps_eta_delta_constant() {
        let mut f = quadratic(vec![1.0, 1.0]);
        let theta0 = ParamVector::new(vec![1.0, -1.0]).unwrap();
        let cfg = UnfoldConfig::new(20, 7);
        let out = unfold_loss(&mut f, &theta0, &HyperState::frozen(), &cfg).unwrap();
        assert!(out.trace.etas.iter().all(|&e| e == 0.1));
        assert!(out.trace.deltas.iter().all(|&d| d == 0.1));
    }

    #[test]
    fn gradnorm_mode_scales_delta_with_gradient() {
        let mut f = quadratic(vec![1.0, 1.0]);
        let theta0 = ParamVector::new(vec![2.0, 2.0]).unwrap();
        let cfg = UnfoldConfig {
            adaptive_delta: AdaptiveDelta::GradNorm { scale: 0.05 },
            ..UnfoldConfig::new(10, 42)
        };
        let out = unfold_loss(&mut f, &theta0, &HyperState::default(), &cfg).unwrap();
        // from step 2 on, δ_t = max(floor, scale * ‖g_{t−1}‖)
        for t in 1..out.trace.steps_used {
            let expected = (0.05 * out.trace.grad_norms[t - 1]).max(HYPER_FLOOR);
            assert_close(out.trace.deltas[t], expected, 1e-12);
        }
    }

    #[test]
    fn trace_round_trips_through_csv() {
        let mut f = quadratic(vec![1.0, 2.0]);
        let theta0 = ParamVector::new(vec![1.0, -1.0]).unwrap();
        let out = unfold_loss(&mut f, &theta0, &HyperState::default(), &UnfoldConfig::new(8, 4))
            .unwrap();
        let mut buf = Vec::new();
        out.trace.write_csv(&mut buf).unwrap();
        let parsed = UnfoldTrace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(parsed.losses, out.trace.losses);
        assert_eq!(parsed.etas, out.trace.etas);
        assert_eq!(parsed.deltas, out.trace.deltas);
        assert_eq!(parsed.grad_norms, out.trace.grad_norms);
        assert_eq!(parsed.steps_used, out.trace.steps_used);
    }
}
