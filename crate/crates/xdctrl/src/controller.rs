//! Mid-ranging internal-model controller synthesis.
//!
//! Each generalized mode is regulated by an IMC pair: the slow actuator
//! tracks a low-bandwidth target `T_s` and the fast actuator covers the band
//! between `T_s` and a fast target `T_f`,
//!
//! ```text
//! Q_s = g_s^{-1} T_s,        Q_f = g_f^{-1} (T_f - T_s),
//! ```
//!
//! so that `g_s Q_s + g_f Q_f = T_f` holds identically and `Q_f(1) = 0`: the
//! fast array contributes nothing at steady state. Both targets carry the
//! plant delay, which cancels in the division and keeps the controllers
//! proper and stable. Slow-only channels reuse `Q_s` unchanged.
//!
//! The static gain matrices damp the inversion of the ill-conditioned shared
//! factor `X` by Tikhonov regularization, blockwise per Fourier cell:
//!
//! ```text
//! Xdag = (S^T X^H X S + μ I)^{-1} S^T X^H.
//! ```

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::block_circulant::RingTransform;
use crate::error::{Error, Result};
use crate::filter::{DiscreteFilter, FilterBank};
use crate::plant::{
    actuator_response, fourier_decompose, modal_decompose, ActuatorDynamics, ModalSystem,
    TwoArrayPlant,
};

/// `controller.json` schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub lambda_s_hz: f64,
    pub lambda_f_hz: f64,
    pub mu_s: f64,
    pub mu_f: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            lambda_s_hz: 100.0,
            lambda_f_hz: 1400.0,
            mu_s: 1.0,
            mu_f: 10.0,
        }
    }
}

/// A first-order closed-loop target with the plant delay folded in:
/// `T(z^{-1}) = z^{-(mu+1)} (1 - e^{-λτ}) / (1 - z^{-1} e^{-λτ})`, `T(1) = 1`.
///
/// Bandwidths are given in Hz (ordinary frequency) and converted by `2π`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopTarget {
    pub lambda_hz: f64,
    /// Discrete pole `e^{-2π·λ·τ}`.
    pub pole: f64,
    /// Delay in samples (`mu + 1`).
    pub delay: usize,
    pub tau: f64,
}

impl ClosedLoopTarget {
    pub fn new(lambda_hz: f64, mu: usize, tau: f64) -> Self {
        let lambda_rad = 2.0 * std::f64::consts::PI * lambda_hz;
        Self {
            lambda_hz,
            pole: (-lambda_rad * tau).exp(),
            delay: mu + 1,
            tau,
        }
    }

    pub fn filter(&self) -> DiscreteFilter {
        let mut b = vec![0.0; self.delay];
        b.push(1.0 - self.pole);
        DiscreteFilter::new(b, vec![1.0, -self.pole]).expect("valid by construction")
    }

    pub fn response(&self, z: Complex64) -> Complex64 {
        let zinv = Complex64::new(1.0, 0.0) / z;
        zinv.powu(self.delay as u32) * (1.0 - self.pole)
            / (Complex64::new(1.0, 0.0) - zinv * self.pole)
    }
}

/// Chooses the slow and fast closed-loop targets.
///
/// Requires `0 < λ_s < λ_f < 1/(2τ)` in Hz; both targets include the loop
/// delay so the synthesis below stays causal.
pub fn design_targets(
    lambda_s_hz: f64,
    lambda_f_hz: f64,
    mu: usize,
    tau: f64,
) -> Result<(ClosedLoopTarget, ClosedLoopTarget)> {
    let nyquist = 0.5 / tau;
    if !(lambda_s_hz > 0.0) || !(lambda_s_hz < lambda_f_hz) || !(lambda_f_hz < nyquist) {
        return Err(Error::Design(format!(
            "need 0 < λ_s < λ_f < {nyquist} Hz, got λ_s = {lambda_s_hz}, λ_f = {lambda_f_hz}"
        )));
    }
    Ok((
        ClosedLoopTarget::new(lambda_s_hz, mu, tau),
        ClosedLoopTarget::new(lambda_f_hz, mu, tau),
    ))
}

/// The per-mode dynamic controllers shared by every cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeFilters {
    pub q_slow: DiscreteFilter,
    pub q_fast: DiscreteFilter,
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len().max(b.len());
    (0..len)
        .map(|i| a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0))
        .collect()
}

/// Inverts the actuator models against the targets:
/// `Q_s = g_s^{-1} T_s` and `Q_f = g_f^{-1} (T_f - T_s)`.
///
/// The delays of target and plant must agree exactly so that the inversion
/// cancels them; any mismatch would demand a non-causal controller and is
/// rejected as a synthesis error.
pub fn synthesize_mode_controllers(
    g_slow: &ActuatorDynamics,
    g_fast: &ActuatorDynamics,
    t_slow: &ClosedLoopTarget,
    t_fast: &ClosedLoopTarget,
) -> Result<ModeFilters> {
    if t_slow.delay != g_slow.delay() || t_fast.delay != g_fast.delay() {
        return Err(Error::Synthesis(format!(
            "nonproper inversion: target delays ({}, {}) differ from plant delays ({}, {})",
            t_slow.delay,
            t_fast.delay,
            g_slow.delay(),
            g_fast.delay()
        )));
    }
    let a_s = g_slow.pole();
    let a_f = g_fast.pole();
    let l_s = t_slow.pole;
    let l_f = t_fast.pole;

    // Q_s = [(1-λ_s)(1 - a_s z^{-1})] / [(1-a_s)(1 - λ_s z^{-1})]
    let q_slow = DiscreteFilter::new(
        poly_mul(&[1.0 - l_s], &[1.0, -a_s]),
        poly_mul(&[1.0 - a_s], &[1.0, -l_s]),
    )?;

    // T_f - T_s over the common denominator (1 - λ_f z^{-1})(1 - λ_s z^{-1});
    // the numerator keeps its exact zero at z = 1.
    let diff_num = poly_sub(
        &poly_mul(&[1.0 - l_f], &[1.0, -l_s]),
        &poly_mul(&[1.0 - l_s], &[1.0, -l_f]),
    );
    let q_fast = DiscreteFilter::new(
        poly_mul(&diff_num, &[1.0, -a_f]),
        poly_mul(&[1.0 - a_f], &poly_mul(&[1.0, -l_f], &[1.0, -l_s])),
    )?;

    for (name, f) in [("slow", &q_slow), ("fast", &q_fast)] {
        if !f.is_stable() {
            return Err(Error::Synthesis(format!(
                "{name} mode controller has a pole on or outside the unit circle"
            )));
        }
    }
    Ok(ModeFilters { q_slow, q_fast })
}

/// Tikhonov-damped left inverse of a tall map `G`: the minimizer matrix of
/// `min_u ‖y − G u‖² + μ‖u‖²`, computed as `(G^H G + μI)^{-1} G^H`.
pub fn tikhonov_gain(g: &DMatrix<Complex64>, mu: f64) -> Result<DMatrix<Complex64>> {
    if !(mu > 0.0) {
        return Err(Error::Domain(format!(
            "regularization weight must be positive, got {mu}"
        )));
    }
    let k = g.ncols();
    if k == 0 {
        return Ok(DMatrix::zeros(0, g.nrows()));
    }
    let mut normal = g.adjoint() * g;
    for i in 0..k {
        normal[(i, i)] += Complex64::new(mu, 0.0);
    }
    let chol = nalgebra::Cholesky::new(normal).ok_or_else(|| {
        Error::Numerical("regularized normal matrix not positive definite".into())
    })?;
    Ok(chol.solve(&g.adjoint()))
}

/// The static gain matrices of one Fourier cell.
#[derive(Debug, Clone)]
pub struct CellGains {
    /// `n_s × n_y`.
    pub xdag_slow: DMatrix<Complex64>,
    /// `n_f × n_y`.
    pub xdag_fast: DMatrix<Complex64>,
}

/// Regularized gains per Fourier cell: `Xdag_s` damps `X·diag(s_slow)` with
/// weight `mu_slow`, `Xdag_f` damps `X·[diag(s_fast); 0]` with `mu_fast`.
///
/// Computed blockwise; the assembled full-system matrices are block-diagonal
/// with these blocks, which is mathematically identical to regularizing the
/// full block-diagonal factor at a fraction of the cost.
pub fn regularized_gains(
    modal: &ModalSystem,
    mu_slow: f64,
    mu_fast: f64,
) -> Result<Vec<CellGains>> {
    modal
        .cells
        .iter()
        .map(|cell| {
            let n_y = cell.x.nrows();
            let n_s = cell.s_slow.len();
            let n_f = cell.s_fast.len();
            let mut g_slow = DMatrix::<Complex64>::zeros(n_y, n_s);
            for j in 0..n_s {
                let s = Complex64::new(cell.s_slow[j], 0.0);
                for i in 0..n_y {
                    g_slow[(i, j)] = cell.x[(i, j)] * s;
                }
            }
            let mut g_fast = DMatrix::<Complex64>::zeros(n_y, n_f);
            for j in 0..n_f {
                let s = Complex64::new(cell.s_fast[j], 0.0);
                for i in 0..n_y {
                    g_fast[(i, j)] = cell.x[(i, j)] * s;
                }
            }
            Ok(CellGains {
                xdag_slow: tikhonov_gain(&g_slow, mu_slow)?,
                xdag_fast: tikhonov_gain(&g_fast, mu_fast)?,
            })
        })
        .collect()
}

/// A fully designed mid-ranging controller: shared mode filters, per-cell
/// regularized gains and input bases, and the internal plant model.
#[derive(Debug, Clone)]
pub struct MidRangingController {
    pub config: ControllerConfig,
    pub target_slow: ClosedLoopTarget,
    pub target_fast: ClosedLoopTarget,
    pub q_slow: DiscreteFilter,
    pub q_fast: DiscreteFilter,
    pub gains: Vec<CellGains>,
    pub modal: ModalSystem,
    pub model: TwoArrayPlant,
}

/// Wires mode filters and gains into a deployable controller, validating all
/// shapes against the modal system. The fast path applies `Q_f` to the
/// coupled channels of each cell only; slow-only channels have a structurally
/// zero fast command.
pub fn assemble_controller(
    modal: ModalSystem,
    filters: ModeFilters,
    gains: Vec<CellGains>,
    targets: (ClosedLoopTarget, ClosedLoopTarget),
    config: ControllerConfig,
    model: TwoArrayPlant,
) -> Result<MidRangingController> {
    if gains.len() != modal.n {
        return Err(Error::Shape(format!(
            "expected {} gain cells, got {}",
            modal.n,
            gains.len()
        )));
    }
    for (i, g) in gains.iter().enumerate() {
        if g.xdag_slow.nrows() != modal.n_s
            || g.xdag_slow.ncols() != modal.n_y
            || g.xdag_fast.nrows() != modal.n_f
            || g.xdag_fast.ncols() != modal.n_y
        {
            return Err(Error::Shape(format!("gain shapes wrong in cell {i}")));
        }
    }
    if model.n != modal.n
        || model.n_y != modal.n_y
        || model.n_s != modal.n_s
        || model.n_f != modal.n_f
    {
        return Err(Error::Shape(
            "internal model footprint differs from the modal system".into(),
        ));
    }
    for (name, f) in [
        ("slow target", targets.0.filter()),
        ("fast target", targets.1.filter()),
        ("slow actuator", model.dyn_slow.filter()),
        ("fast actuator", model.dyn_fast.filter()),
    ] {
        if !f.is_stable() {
            return Err(Error::Synthesis(format!("{name} is unstable")));
        }
    }
    Ok(MidRangingController {
        config,
        target_slow: targets.0,
        target_fast: targets.1,
        q_slow: filters.q_slow,
        q_fast: filters.q_fast,
        gains,
        modal,
        model,
    })
}

/// Runs the full design pipeline against a plant: Fourier decomposition,
/// per-cell generalized SVD, target selection, mode-controller synthesis,
/// gain regularization and assembly.
pub fn design_mid_ranging(
    plant: &TwoArrayPlant,
    config: &ControllerConfig,
    rank_tol: Option<f64>,
) -> Result<MidRangingController> {
    let (rhat_s, rhat_f) = fourier_decompose(plant);
    let modal = modal_decompose(&rhat_s, &rhat_f, rank_tol)?;
    let targets = design_targets(
        config.lambda_s_hz,
        config.lambda_f_hz,
        plant.dyn_slow.mu,
        plant.tau(),
    )?;
    let filters =
        synthesize_mode_controllers(&plant.dyn_slow, &plant.dyn_fast, &targets.0, &targets.1)?;
    let gains = regularized_gains(&modal, config.mu_s, config.mu_f)?;
    assemble_controller(
        modal,
        filters,
        gains,
        targets,
        config.clone(),
        plant.clone(),
    )
}

/// Designed per-mode disturbance response of a scalar coupled channel whose
/// combined static gains through the shared factor are `sigma_slow` and
/// `sigma_fast`:
///
/// `S(z) = 1 − σ_s·ĝ_s·g_s(z)Q_s(z) − σ_f·ĝ_f·g_f(z)Q_f(z)`
///
/// with the damped inversions `ĝ = σ/(σ² + μ)`. At `z = 1` this reduces to
/// `μ_s/(σ_s² + μ_s)`: the fast path vanishes and the slow path leaves the
/// regularization residual.
pub fn mode_sensitivity(
    ctrl: &MidRangingController,
    sigma_slow: f64,
    sigma_fast: Option<f64>,
    mu_slow: f64,
    mu_fast: f64,
    z: Complex64,
) -> Complex64 {
    let g_s = actuator_response(&ctrl.model.dyn_slow, z).expect("off-pole evaluation");
    let slow_gain = sigma_slow / (sigma_slow * sigma_slow + mu_slow);
    let mut s = Complex64::new(1.0, 0.0) - ctrl.q_slow.evaluate(z) * g_s * sigma_slow * slow_gain;
    if let Some(sf) = sigma_fast {
        let g_f = actuator_response(&ctrl.model.dyn_fast, z).expect("off-pole evaluation");
        let fast_gain = sf / (sf * sf + mu_fast);
        s -= ctrl.q_fast.evaluate(z) * g_f * sf * fast_gain;
    }
    s
}

// ---------------------------------------------------------------------------
// Runtime
// ---------------------------------------------------------------------------

/// A feedback law the closed-loop simulator can drive. Implementations own
/// their filter state; one simulation loop is the single writer.
pub trait LoopController {
    fn sensor_dim(&self) -> usize;
    fn slow_dim(&self) -> usize;
    fn fast_dim(&self) -> usize;
    /// The internal model run in parallel to the plant, if any.
    fn model_plant(&self) -> Option<&TwoArrayPlant>;
    fn reset(&mut self);
    /// Maps the model error at one step to the two actuator commands.
    fn step(&mut self, error: &DVector<f64>, u_slow: &mut DVector<f64>, u_fast: &mut DVector<f64>);
}

/// Open-loop stand-in: zero commands, no model.
pub struct ZeroController {
    pub n_y: usize,
    pub n_s: usize,
    pub n_f: usize,
}

impl LoopController for ZeroController {
    fn sensor_dim(&self) -> usize {
        self.n_y
    }
    fn slow_dim(&self) -> usize {
        self.n_s
    }
    fn fast_dim(&self) -> usize {
        self.n_f
    }
    fn model_plant(&self) -> Option<&TwoArrayPlant> {
        None
    }
    fn reset(&mut self) {}
    fn step(&mut self, _e: &DVector<f64>, u_slow: &mut DVector<f64>, u_fast: &mut DVector<f64>) {
        u_slow.fill(0.0);
        u_fast.fill(0.0);
    }
}

/// Streaming state of a [`MidRangingController`].
///
/// Signal flow per step: spatial Fourier transform of the model error, the
/// per-cell gain maps, the shared mode filters, the per-cell input bases,
/// inverse transform, loop-sign negation.
pub struct MidRangingRuntime {
    ctrl: MidRangingController,
    t_sensor: RingTransform,
    t_slow: RingTransform,
    t_fast: RingTransform,
    bank_slow: FilterBank,
    bank_fast: FilterBank,
    e_hat: DVector<Complex64>,
    v_slow: DVector<Complex64>,
    v_fast: DVector<Complex64>,
    w_slow: DVector<Complex64>,
    w_fast: DVector<Complex64>,
    u_slow_hat: DVector<Complex64>,
    u_fast_hat: DVector<Complex64>,
}

impl MidRangingRuntime {
    pub fn new(ctrl: &MidRangingController) -> Self {
        let m = &ctrl.modal;
        let (n, n_y, n_s, n_f) = (m.n, m.n_y, m.n_s, m.n_f);
        Self {
            t_sensor: RingTransform::new(n, n_y),
            t_slow: RingTransform::new(n, n_s),
            t_fast: RingTransform::new(n, n_f),
            bank_slow: FilterBank::new(&ctrl.q_slow, n * n_s),
            bank_fast: FilterBank::new(&ctrl.q_fast, n * n_f),
            e_hat: DVector::zeros(n * n_y),
            v_slow: DVector::zeros(n * n_s),
            v_fast: DVector::zeros(n * n_f),
            w_slow: DVector::zeros(n * n_s),
            w_fast: DVector::zeros(n * n_f),
            u_slow_hat: DVector::zeros(n * n_s),
            u_fast_hat: DVector::zeros(n * n_f),
            ctrl: ctrl.clone(),
        }
    }
}

impl LoopController for MidRangingRuntime {
    fn sensor_dim(&self) -> usize {
        self.ctrl.modal.n * self.ctrl.modal.n_y
    }
    fn slow_dim(&self) -> usize {
        self.ctrl.modal.n * self.ctrl.modal.n_s
    }
    fn fast_dim(&self) -> usize {
        self.ctrl.modal.n * self.ctrl.modal.n_f
    }
    fn model_plant(&self) -> Option<&TwoArrayPlant> {
        Some(&self.ctrl.model)
    }
    fn reset(&mut self) {
        self.bank_slow.reset();
        self.bank_fast.reset();
    }

    fn step(&mut self, error: &DVector<f64>, u_slow: &mut DVector<f64>, u_fast: &mut DVector<f64>) {
        let m = &self.ctrl.modal;
        let (n, n_y, n_s, n_f) = (m.n, m.n_y, m.n_s, m.n_f);

        self.t_sensor.forward(error, &mut self.e_hat);
        for i in 0..n {
            let e_cell = self.e_hat.rows(i * n_y, n_y);
            let g = &self.ctrl.gains[i];
            self.v_slow.rows_mut(i * n_s, n_s).gemv(
                Complex64::new(1.0, 0.0),
                &g.xdag_slow,
                &e_cell,
                Complex64::new(0.0, 0.0),
            );
            if n_f > 0 {
                self.v_fast.rows_mut(i * n_f, n_f).gemv(
                    Complex64::new(1.0, 0.0),
                    &g.xdag_fast,
                    &e_cell,
                    Complex64::new(0.0, 0.0),
                );
            }
        }
        self.bank_slow.step(&self.v_slow, &mut self.w_slow);
        self.bank_fast.step(&self.v_fast, &mut self.w_fast);
        for i in 0..n {
            let cell = &m.cells[i];
            self.u_slow_hat.rows_mut(i * n_s, n_s).gemv(
                Complex64::new(1.0, 0.0),
                &cell.u_slow,
                &self.w_slow.rows(i * n_s, n_s),
                Complex64::new(0.0, 0.0),
            );
            if n_f > 0 {
                self.u_fast_hat.rows_mut(i * n_f, n_f).gemv(
                    Complex64::new(1.0, 0.0),
                    &cell.u_fast,
                    &self.w_fast.rows(i * n_f, n_f),
                    Complex64::new(0.0, 0.0),
                );
            }
        }
        self.t_slow.inverse_real(&self.u_slow_hat, u_slow);
        self.t_fast.inverse_real(&self.u_fast_hat, u_fast);
        // Loop sign.
        u_slow.neg_mut();
        u_fast.neg_mut();
    }
}

// ---------------------------------------------------------------------------
// All-fast comparison design
// ---------------------------------------------------------------------------

/// The comparison controller for a ring carrying only fast correctors at
/// every position of both arrays: single-array IMC with the fast target on
/// all channels and one shared regularization weight.
#[derive(Debug, Clone)]
pub struct HypotheticalController {
    pub target: ClosedLoopTarget,
    pub q_filter: DiscreteFilter,
    pub mu: f64,
    /// Per-cell damped inverse of `[σ_i φ_i]`, `(n_s+n_f) × n_y`.
    pub gains: Vec<DMatrix<Complex64>>,
    /// All-fast variant of the design plant.
    pub model: TwoArrayPlant,
}

/// Designs the all-fast comparison controller: same controller bandwidth as
/// the coupled channels' fast target, Tikhonov weight `mu` on the combined
/// corrector set.
pub fn design_hypothetical(
    plant: &TwoArrayPlant,
    lambda_f_hz: f64,
    mu: f64,
) -> Result<HypotheticalController> {
    let model = plant.all_fast();
    let target = ClosedLoopTarget::new(lambda_f_hz, model.dyn_fast.mu, model.tau());
    if !(lambda_f_hz > 0.0 && lambda_f_hz < 0.5 / model.tau()) {
        return Err(Error::Design(format!(
            "bandwidth {lambda_f_hz} Hz outside (0, Nyquist)"
        )));
    }
    let a_f = model.dyn_fast.pole();
    let q_filter = DiscreteFilter::new(
        poly_mul(&[1.0 - target.pole], &[1.0, -a_f]),
        poly_mul(&[1.0 - a_f], &[1.0, -target.pole]),
    )?;
    let (rhat_s, rhat_f) = fourier_decompose(&model);
    let gains = (0..model.n)
        .map(|i| {
            let n_y = model.n_y;
            let k = model.n_s + model.n_f;
            let mut combined = DMatrix::<Complex64>::zeros(n_y, k);
            combined
                .view_mut((0, 0), (n_y, model.n_s))
                .copy_from(rhat_s.block(i));
            combined
                .view_mut((0, model.n_s), (n_y, model.n_f))
                .copy_from(rhat_f.block(i));
            tikhonov_gain(&combined, mu).map_err(|e| Error::Cell {
                cell: i,
                reason: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HypotheticalController {
        target,
        q_filter,
        mu,
        gains,
        model,
    })
}

/// Streaming state of a [`HypotheticalController`].
pub struct HypotheticalRuntime {
    ctrl: HypotheticalController,
    t_sensor: RingTransform,
    t_slow: RingTransform,
    t_fast: RingTransform,
    bank: FilterBank,
    e_hat: DVector<Complex64>,
    v: DVector<Complex64>,
    w: DVector<Complex64>,
    u_slow_hat: DVector<Complex64>,
    u_fast_hat: DVector<Complex64>,
}

impl HypotheticalRuntime {
    pub fn new(ctrl: &HypotheticalController) -> Self {
        let m = &ctrl.model;
        let k = m.n_s + m.n_f;
        Self {
            t_sensor: RingTransform::new(m.n, m.n_y),
            t_slow: RingTransform::new(m.n, m.n_s),
            t_fast: RingTransform::new(m.n, m.n_f),
            bank: FilterBank::new(&ctrl.q_filter, m.n * k),
            e_hat: DVector::zeros(m.n * m.n_y),
            v: DVector::zeros(m.n * k),
            w: DVector::zeros(m.n * k),
            u_slow_hat: DVector::zeros(m.n * m.n_s),
            u_fast_hat: DVector::zeros(m.n * m.n_f),
            ctrl: ctrl.clone(),
        }
    }
}

impl LoopController for HypotheticalRuntime {
    fn sensor_dim(&self) -> usize {
        self.ctrl.model.n * self.ctrl.model.n_y
    }
    fn slow_dim(&self) -> usize {
        self.ctrl.model.n * self.ctrl.model.n_s
    }
    fn fast_dim(&self) -> usize {
        self.ctrl.model.n * self.ctrl.model.n_f
    }
    fn model_plant(&self) -> Option<&TwoArrayPlant> {
        Some(&self.ctrl.model)
    }
    fn reset(&mut self) {
        self.bank.reset();
    }

    fn step(&mut self, error: &DVector<f64>, u_slow: &mut DVector<f64>, u_fast: &mut DVector<f64>) {
        let m = &self.ctrl.model;
        let (n, n_y, n_s, n_f) = (m.n, m.n_y, m.n_s, m.n_f);
        let k = n_s + n_f;

        self.t_sensor.forward(error, &mut self.e_hat);
        for i in 0..n {
            self.v.rows_mut(i * k, k).gemv(
                Complex64::new(1.0, 0.0),
                &self.ctrl.gains[i],
                &self.e_hat.rows(i * n_y, n_y),
                Complex64::new(0.0, 0.0),
            );
        }
        self.bank.step(&self.v, &mut self.w);
        // Per-cell split back into the two physical corrector groups.
        for i in 0..n {
            for j in 0..n_s {
                self.u_slow_hat[i * n_s + j] = self.w[i * k + j];
            }
            for j in 0..n_f {
                self.u_fast_hat[i * n_f + j] = self.w[i * k + n_s + j];
            }
        }
        self.t_slow.inverse_real(&self.u_slow_hat, u_slow);
        self.t_fast.inverse_real(&self.u_fast_hat, u_fast);
        u_slow.neg_mut();
        u_fast.neg_mut();
    }
}

/// Either controller design, with enough context to set up its simulation.
#[derive(Debug, Clone)]
pub enum DesignedController {
    MidRanging(MidRangingController),
    AllFast(HypotheticalController),
}

impl DesignedController {
    pub fn runtime(&self) -> Box<dyn LoopController> {
        match self {
            Self::MidRanging(c) => Box::new(MidRangingRuntime::new(c)),
            Self::AllFast(c) => Box::new(HypotheticalRuntime::new(c)),
        }
    }

    /// The true plant this controller is meant to run against: unchanged for
    /// the mid-ranging design, all-fast dynamics for the comparison design.
    pub fn simulation_plant(&self, plant: &TwoArrayPlant) -> TwoArrayPlant {
        match self {
            Self::MidRanging(_) => plant.clone(),
            Self::AllFast(_) => plant.all_fast(),
        }
    }

    pub fn footprint_matches(&self, plant: &TwoArrayPlant) -> bool {
        let model = match self {
            Self::MidRanging(c) => &c.model,
            Self::AllFast(c) => &c.model,
        };
        model.n == plant.n
            && model.n_y == plant.n_y
            && model.n_s == plant.n_s
            && model.n_f == plant.n_f
    }
}
