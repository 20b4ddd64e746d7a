//! Deterministic discrete-time closed-loop simulation.
//!
//! The loop runs the physical plant and the controller's internal model side
//! by side on the same commands; the controller sees only the difference of
//! their outputs. With an exact model that difference is the disturbance
//! itself, which is what makes the structure stable whenever plant and
//! controller are individually stable.
//!
//! Per-array actuator semantics are the exact difference equations
//!
//! ```text
//! v[k] = e^{-aτ} v[k-1] + (1 - e^{-aτ}) u[k-μ-1],
//! y[k] = Σ_arrays R·v[k] + d[k],
//! ```
//!
//! realized as a delay line of `μ+1` command vectors feeding a one-pole
//! filter bank, followed by the FFT-structured static map.

pub mod disturbance;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::collections::VecDeque;

use crate::block_circulant::{FftMatvec, MatvecScratch, RingTransform};
use crate::controller::{LoopController, MidRangingController};
use crate::error::{Error, Result};
use crate::filter::FilterBank;
use crate::plant::TwoArrayPlant;

/// Which signals [`run_closed_loop`] keeps.
#[derive(Debug, Clone, Copy)]
pub struct RecordFlags {
    pub y: bool,
    pub u_slow: bool,
    pub u_fast: bool,
    /// Internal model output.
    pub model_output: bool,
    /// Per-array contributions to the plant output (before adding d).
    pub path_contributions: bool,
}

impl Default for RecordFlags {
    fn default() -> Self {
        Self {
            y: true,
            u_slow: true,
            u_fast: true,
            model_output: false,
            path_contributions: false,
        }
    }
}

/// Closed-loop simulation setup. The disturbance matrix must provide at
/// least `steps` rows of `N_y` columns.
pub struct SimulationConfig<'a> {
    pub steps: usize,
    pub plant: &'a TwoArrayPlant,
    pub disturbance: &'a DMatrix<f64>,
    /// Multiplicative gain error applied to the internal model's response
    /// blocks (0 = exact model).
    pub model_mismatch: f64,
    pub record: RecordFlags,
}

impl<'a> SimulationConfig<'a> {
    pub fn new(plant: &'a TwoArrayPlant, disturbance: &'a DMatrix<f64>, steps: usize) -> Self {
        Self {
            steps,
            plant,
            disturbance,
            model_mismatch: 0.0,
            record: RecordFlags::default(),
        }
    }
}

/// Recorded signals, one row per step. Unrecorded signals stay empty.
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub steps: usize,
    pub tau: f64,
    pub y: DMatrix<f64>,
    pub u_slow: DMatrix<f64>,
    pub u_fast: DMatrix<f64>,
    pub y_model: Option<DMatrix<f64>>,
    pub y_slow_path: Option<DMatrix<f64>>,
    pub y_fast_path: Option<DMatrix<f64>>,
}

/// One actuator array: delay line, first-order lag and static map.
struct ArrayStepper {
    matvec: FftMatvec,
    scratch: MatvecScratch,
    pole: f64,
    delay_line: VecDeque<DVector<f64>>,
    lag_state: DVector<f64>,
    contribution: DVector<f64>,
}

impl ArrayStepper {
    fn new(matvec: FftMatvec, pole: f64, delay: usize, inputs: usize, outputs: usize) -> Self {
        let delay_line = (0..delay).map(|_| DVector::zeros(inputs)).collect();
        Self {
            scratch: matvec.scratch(),
            matvec,
            pole,
            delay_line,
            lag_state: DVector::zeros(inputs),
            contribution: DVector::zeros(outputs),
        }
    }

    /// Advances the lag with the delayed command and refreshes `contribution`.
    fn advance_output(&mut self) -> Result<()> {
        let delayed = self.delay_line.pop_front().expect("delay line non-empty");
        // v[k] = pole·v[k-1] + (1-pole)·u[k-μ-1]
        self.lag_state.axpy(1.0 - self.pole, &delayed, self.pole);
        self.matvec
            .apply_into(&self.lag_state, &mut self.scratch, &mut self.contribution)
    }

    fn push(&mut self, u: &DVector<f64>) {
        self.delay_line.push_back(u.clone());
    }

    fn reset(&mut self) {
        for slot in &mut self.delay_line {
            slot.fill(0.0);
        }
        self.lag_state.fill(0.0);
        self.contribution.fill(0.0);
    }
}

/// The physical two-array ring as a streaming system.
///
/// Mutable single-owner state; one simulation loop drives it through
/// [`PlantStepper::output`] / [`PlantStepper::push`] (or [`PlantStepper::step`]
/// when the commands are known up front).
pub struct PlantStepper {
    slow: ArrayStepper,
    fast: ArrayStepper,
    n_y: usize,
    y: DVector<f64>,
}

impl PlantStepper {
    /// `gain` scales the static maps (used for the model-mismatch knob).
    pub fn with_gain(plant: &TwoArrayPlant, gain: f64) -> Self {
        let scale_blocks = |m: &crate::block_circulant::BlockCirculantMatrix| {
            if gain == 1.0 {
                m.clone()
            } else {
                let blocks = m.blocks().iter().map(|b| b * gain).collect();
                crate::block_circulant::BlockCirculantMatrix::new(
                    m.n(),
                    m.block_rows(),
                    m.block_cols(),
                    blocks,
                )
                .expect("same shape")
            }
        };
        let n_y = plant.total_sensors();
        Self {
            slow: ArrayStepper::new(
                FftMatvec::new(&scale_blocks(&plant.r_slow)),
                plant.dyn_slow.pole(),
                plant.dyn_slow.delay(),
                plant.total_slow(),
                n_y,
            ),
            fast: ArrayStepper::new(
                FftMatvec::new(&scale_blocks(&plant.r_fast)),
                plant.dyn_fast.pole(),
                plant.dyn_fast.delay(),
                plant.total_fast(),
                n_y,
            ),
            n_y,
            y: DVector::zeros(n_y),
        }
    }

    pub fn new(plant: &TwoArrayPlant) -> Self {
        Self::with_gain(plant, 1.0)
    }

    pub fn reset(&mut self) {
        self.slow.reset();
        self.fast.reset();
    }

    /// Output at the current step: both arrays advance their lags on the
    /// delayed commands, then the static maps and the disturbance are summed.
    pub fn output(&mut self, d: &DVector<f64>) -> Result<&DVector<f64>> {
        if d.len() != self.n_y {
            return Err(Error::Shape(format!(
                "disturbance length {} != {}",
                d.len(),
                self.n_y
            )));
        }
        self.slow.advance_output()?;
        self.fast.advance_output()?;
        self.y.copy_from(d);
        self.y += &self.slow.contribution;
        self.y += &self.fast.contribution;
        Ok(&self.y)
    }

    /// Appends the commands of the current step to the delay lines.
    pub fn push(&mut self, u_slow: &DVector<f64>, u_fast: &DVector<f64>) {
        self.slow.push(u_slow);
        self.fast.push(u_fast);
    }

    /// `output` followed by `push`: the output never depends on the commands
    /// of the same step because of the `μ+1` loop delay.
    pub fn step(
        &mut self,
        u_slow: &DVector<f64>,
        u_fast: &DVector<f64>,
        d: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let y = self.output(d)?.clone();
        self.push(u_slow, u_fast);
        Ok(y)
    }

    /// Per-array output contributions of the current step.
    pub fn contributions(&self) -> (&DVector<f64>, &DVector<f64>) {
        (&self.slow.contribution, &self.fast.contribution)
    }
}

/// Runs the closed loop of the internal-model structure for `cfg.steps`
/// samples. Deterministic: identical inputs produce bit-identical traces.
///
/// Aborts with the failing step index as soon as any signal goes non-finite.
pub fn run_closed_loop(
    cfg: &SimulationConfig,
    controller: &mut dyn LoopController,
) -> Result<SimulationTrace> {
    let plant = cfg.plant;
    let (n_y, n_s, n_f) = (
        plant.total_sensors(),
        plant.total_slow(),
        plant.total_fast(),
    );
    if cfg.steps == 0 {
        return Err(Error::Precondition("steps must be >= 1".into()));
    }
    if controller.sensor_dim() != n_y
        || controller.slow_dim() != n_s
        || controller.fast_dim() != n_f
    {
        return Err(Error::Shape(format!(
            "controller footprint ({}, {}, {}) does not match plant ({n_y}, {n_s}, {n_f})",
            controller.sensor_dim(),
            controller.slow_dim(),
            controller.fast_dim()
        )));
    }
    if cfg.disturbance.nrows() < cfg.steps || cfg.disturbance.ncols() != n_y {
        return Err(Error::Shape(format!(
            "disturbance is {}x{}, need at least {}x{n_y}",
            cfg.disturbance.nrows(),
            cfg.disturbance.ncols(),
            cfg.steps
        )));
    }
    if let Some(model) = controller.model_plant() {
        if model.total_sensors() != n_y || model.total_slow() != n_s || model.total_fast() != n_f {
            return Err(Error::Shape(
                "internal model footprint does not match the plant".into(),
            ));
        }
    }

    let mut plant_state = PlantStepper::new(plant);
    let mut model_state = controller
        .model_plant()
        .map(|m| PlantStepper::with_gain(m, 1.0 + cfg.model_mismatch));
    controller.reset();

    let rec = cfg.record;
    let alloc = |on: bool, cols: usize| {
        if on {
            DMatrix::zeros(cfg.steps, cols)
        } else {
            DMatrix::zeros(0, 0)
        }
    };
    let mut trace = SimulationTrace {
        steps: cfg.steps,
        tau: plant.tau(),
        y: alloc(rec.y, n_y),
        u_slow: alloc(rec.u_slow, n_s),
        u_fast: alloc(rec.u_fast, n_f),
        y_model: rec.model_output.then(|| DMatrix::zeros(cfg.steps, n_y)),
        y_slow_path: rec
            .path_contributions
            .then(|| DMatrix::zeros(cfg.steps, n_y)),
        y_fast_path: rec
            .path_contributions
            .then(|| DMatrix::zeros(cfg.steps, n_y)),
    };

    let mut d_k = DVector::zeros(n_y);
    let mut e = DVector::zeros(n_y);
    let mut u_slow = DVector::zeros(n_s);
    let mut u_fast = DVector::zeros(n_f);

    for k in 0..cfg.steps {
        for j in 0..n_y {
            d_k[j] = cfg.disturbance[(k, j)];
        }
        {
            let y = plant_state.output(&d_k)?;
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged { step: k });
            }
            e.copy_from(y);
        }
        if let Some(model) = model_state.as_mut() {
            let zero = DVector::zeros(n_y);
            let ym = model.output(&zero)?;
            e -= ym;
            if let Some(buf) = trace.y_model.as_mut() {
                for j in 0..n_y {
                    buf[(k, j)] = ym[j];
                }
            }
        }
        controller.step(&e, &mut u_slow, &mut u_fast);

        if rec.y {
            let y = &plant_state.y;
            for j in 0..n_y {
                trace.y[(k, j)] = y[j];
            }
        }
        if rec.u_slow {
            for j in 0..n_s {
                trace.u_slow[(k, j)] = u_slow[j];
            }
        }
        if rec.u_fast {
            for j in 0..n_f {
                trace.u_fast[(k, j)] = u_fast[j];
            }
        }
        if let (Some(sp), Some(fp)) = (trace.y_slow_path.as_mut(), trace.y_fast_path.as_mut()) {
            let (slow_c, fast_c) = plant_state.contributions();
            for j in 0..n_y {
                sp[(k, j)] = slow_c[j];
                fp[(k, j)] = fast_c[j];
            }
        }

        plant_state.push(&u_slow, &u_fast);
        if let Some(model) = model_state.as_mut() {
            model.push(&u_slow, &u_fast);
        }
    }
    Ok(trace)
}

// ---------------------------------------------------------------------------
// Generalized-mode-space simulation
// ---------------------------------------------------------------------------

/// A complex delay-plus-one-pole bank mirroring [`ArrayStepper`] for the
/// diagonal mode-space dynamics.
struct ModalArray {
    pole: f64,
    delay_line: VecDeque<DVector<Complex64>>,
    lag_state: DVector<Complex64>,
}

impl ModalArray {
    fn new(pole: f64, delay: usize, channels: usize) -> Self {
        Self {
            pole,
            delay_line: (0..delay).map(|_| DVector::zeros(channels)).collect(),
            lag_state: DVector::zeros(channels),
        }
    }

    fn advance_output(&mut self) -> &DVector<Complex64> {
        let delayed = self.delay_line.pop_front().expect("delay line non-empty");
        let pole = Complex64::new(self.pole, 0.0);
        let gain = Complex64::new(1.0 - self.pole, 0.0);
        self.lag_state.axpy(gain, &delayed, pole);
        &self.lag_state
    }

    fn push(&mut self, u: &DVector<Complex64>) {
        self.delay_line.push_back(u.clone());
    }
}

/// Simulates the closed loop entirely in generalized mode space (diagonal
/// per-channel dynamics, matrix gains `Xdag·X`) and maps the result back to
/// physical sensor coordinates. With matched initial states this is the same
/// trajectory as [`run_closed_loop`] up to roundoff.
pub fn run_closed_loop_modal(
    ctrl: &MidRangingController,
    disturbance: &DMatrix<f64>,
    steps: usize,
) -> Result<DMatrix<f64>> {
    let m = &ctrl.modal;
    let plant = &ctrl.model;
    let (n, n_y, n_s, n_f) = (m.n, m.n_y, m.n_s, m.n_f);
    let total_y = n * n_y;
    if disturbance.nrows() < steps || disturbance.ncols() != total_y {
        return Err(Error::Shape("disturbance shape mismatch".into()));
    }

    // Per-cell pieces: X (modal -> Fourier outputs), X^{-1} (for the
    // transformed disturbance) and the loop gains G = Xdag·X.
    let lus: Vec<_> = m.cells.iter().map(|c| c.x.clone().lu()).collect();
    let g_slow: Vec<DMatrix<Complex64>> = (0..n)
        .map(|i| &ctrl.gains[i].xdag_slow * &m.cells[i].x)
        .collect();
    let g_fast: Vec<DMatrix<Complex64>> = (0..n)
        .map(|i| &ctrl.gains[i].xdag_fast * &m.cells[i].x)
        .collect();

    let mut t_sensor = RingTransform::new(n, n_y);
    let mut plant_slow = ModalArray::new(plant.dyn_slow.pole(), plant.dyn_slow.delay(), n * n_s);
    let mut plant_fast = ModalArray::new(plant.dyn_fast.pole(), plant.dyn_fast.delay(), n * n_f);
    let mut model_slow = ModalArray::new(plant.dyn_slow.pole(), plant.dyn_slow.delay(), n * n_s);
    let mut model_fast = ModalArray::new(plant.dyn_fast.pole(), plant.dyn_fast.delay(), n * n_f);
    let mut bank_slow = FilterBank::new(&ctrl.q_slow, n * n_s);
    let mut bank_fast = FilterBank::new(&ctrl.q_fast, n * n_f);

    let mut out = DMatrix::zeros(steps, total_y);
    let mut d_phys = DVector::zeros(total_y);
    let mut d_hat = DVector::<Complex64>::zeros(total_y);
    let mut d_tilde = DVector::<Complex64>::zeros(total_y);
    let mut y_tilde = DVector::<Complex64>::zeros(total_y);
    let mut ym_tilde = DVector::<Complex64>::zeros(total_y);
    let mut e_tilde = DVector::<Complex64>::zeros(total_y);
    let mut v_slow = DVector::<Complex64>::zeros(n * n_s);
    let mut v_fast = DVector::<Complex64>::zeros(n * n_f);
    let mut w_slow = DVector::<Complex64>::zeros(n * n_s);
    let mut w_fast = DVector::<Complex64>::zeros(n * n_f);
    let mut y_hat = DVector::<Complex64>::zeros(total_y);
    let mut y_phys = DVector::<f64>::zeros(total_y);

    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);

    for k in 0..steps {
        for j in 0..total_y {
            d_phys[j] = disturbance[(k, j)];
        }
        t_sensor.forward(&d_phys, &mut d_hat);
        for i in 0..n {
            let cell = lus[i]
                .solve(&d_hat.rows(i * n_y, n_y).into_owned())
                .ok_or_else(|| Error::Numerical(format!("shared factor singular in cell {i}")))?;
            d_tilde.rows_mut(i * n_y, n_y).copy_from(&cell);
        }

        // Plant and model outputs. Channel layout: per cell, the n_f coupled
        // channels come first, then the slow-only channels.
        let vs = plant_slow.advance_output().clone();
        let vf = plant_fast.advance_output().clone();
        let ms = model_slow.advance_output().clone();
        let mf = model_fast.advance_output().clone();
        for i in 0..n {
            let cell = &m.cells[i];
            for j in 0..n_s {
                let mut y = Complex64::new(cell.s_slow[j], 0.0) * vs[i * n_s + j];
                let mut ym = Complex64::new(cell.s_slow[j], 0.0) * ms[i * n_s + j];
                if j < n_f {
                    let sf = Complex64::new(cell.s_fast[j], 0.0);
                    y += sf * vf[i * n_f + j];
                    ym += sf * mf[i * n_f + j];
                }
                y_tilde[i * n_y + j] = y + d_tilde[i * n_y + j];
                ym_tilde[i * n_y + j] = ym;
            }
        }
        e_tilde.copy_from(&y_tilde);
        e_tilde -= &ym_tilde;

        for i in 0..n {
            let e_cell = e_tilde.rows(i * n_y, n_y);
            v_slow
                .rows_mut(i * n_s, n_s)
                .gemv(one, &g_slow[i], &e_cell, zero);
            if n_f > 0 {
                v_fast
                    .rows_mut(i * n_f, n_f)
                    .gemv(one, &g_fast[i], &e_cell, zero);
            }
        }
        bank_slow.step(&v_slow, &mut w_slow);
        bank_fast.step(&v_fast, &mut w_fast);
        w_slow.neg_mut();
        w_fast.neg_mut();
        plant_slow.push(&w_slow);
        plant_fast.push(&w_fast);
        model_slow.push(&w_slow);
        model_fast.push(&w_fast);

        // Back to physical coordinates: y = (F ⊗ I) X ỹ.
        for i in 0..n {
            let cell = &m.cells[i];
            y_hat
                .rows_mut(i * n_y, n_y)
                .gemv(one, &cell.x, &y_tilde.rows(i * n_y, n_y), zero);
        }
        t_sensor.inverse_real(&y_hat, &mut y_phys);
        for j in 0..total_y {
            out[(k, j)] = y_phys[j];
        }
    }
    Ok(out)
}
