//! The two-array ring model: static response maps for the slow and fast
//! corrector arrays, first-order actuator dynamics with loop delay, and the
//! two-stage decomposition (spatial Fourier transform, then a per-cell
//! generalized SVD) that reduces the coupled system to independent TISO and
//! SISO channels.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block_circulant::{BlockCirculantMatrix, BlockDiagonalForm};
use crate::error::{Error, Result};
use crate::filter::DiscreteFilter;
use crate::gsvd::{self, GsvdFactors};

/// First-order actuator dynamics with a pure loop delay:
/// `g(z^{-1}) = z^{-(mu+1)} (1 - e^{-a·tau}) / (1 - z^{-1} e^{-a·tau})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorDynamics {
    /// Bandwidth in rad/s.
    pub a: f64,
    /// Loop delay in samples.
    pub mu: usize,
    /// Sampling period in seconds.
    pub tau: f64,
}

impl ActuatorDynamics {
    pub fn new(a: f64, mu: usize, tau: f64) -> Result<Self> {
        if !(a > 0.0) || !(tau > 0.0) {
            return Err(Error::Domain(format!(
                "bandwidth and sampling period must be positive (a={a}, tau={tau})"
            )));
        }
        let dyn_ = Self { a, mu, tau };
        debug_assert!(dyn_.pole() > 0.0 && dyn_.pole() < 1.0);
        Ok(dyn_)
    }

    /// Discrete pole `e^{-a·tau}`, strictly inside the unit circle.
    pub fn pole(&self) -> f64 {
        (-self.a * self.tau).exp()
    }

    /// Total delay `mu + 1` in samples.
    pub fn delay(&self) -> usize {
        self.mu + 1
    }

    /// The transfer function as an explicit coefficient filter.
    pub fn filter(&self) -> DiscreteFilter {
        let pole = self.pole();
        let mut b = vec![0.0; self.delay()];
        b.push(1.0 - pole);
        DiscreteFilter::new(b, vec![1.0, -pole]).expect("valid by construction")
    }
}

/// Evaluates the actuator transfer function at the point `z`.
///
/// Unity gain at `z = 1` for any bandwidth and delay; errors at the pole
/// `z = e^{-a·tau}` and at `z = 0` where the delay term is singular.
pub fn actuator_response(dynamics: &ActuatorDynamics, z: Complex64) -> Result<Complex64> {
    let pole = dynamics.pole();
    if (z - Complex64::new(pole, 0.0)).norm() < 1e-14 {
        return Err(Error::Domain(format!(
            "transfer function evaluated at its pole z = {pole}"
        )));
    }
    if z.norm() < 1e-300 {
        return Err(Error::Domain("delay term singular at z = 0".into()));
    }
    let zinv = Complex64::new(1.0, 0.0) / z;
    let delay = zinv.powu(dynamics.delay() as u32);
    Ok(delay * (1.0 - pole) / (Complex64::new(1.0, 0.0) - zinv * pole))
}

/// Configuration of a synthetic ring, matching the `ring.json` schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RingConfig {
    /// Ring symmetry (number of identical cells).
    pub n: usize,
    /// Sensors per cell.
    pub n_y: usize,
    /// Slow correctors per cell.
    pub n_s: usize,
    /// Fast correctors per cell.
    pub n_f: usize,
    /// Slow-array bandwidth in rad/s.
    pub a_s: f64,
    /// Fast-array bandwidth in rad/s.
    pub a_f: f64,
    /// Loop delay in samples.
    pub mu: usize,
    /// Sampling rate in Hz.
    pub tau_hz: f64,
    /// Spatial decay rate of the synthetic response (per cell distance).
    pub decay: f64,
    pub seed: u64,
}

impl Default for RingConfig {
    fn default() -> Self {
        Self {
            n: 6,
            n_y: 42,
            n_s: 42,
            n_f: 24,
            a_s: 80.0,
            a_f: 12_000.0,
            mu: 7,
            tau_hz: 100_000.0,
            decay: 0.3,
            seed: 42,
        }
    }
}

impl RingConfig {
    /// Small shape exercising both coupled and slow-only channels plus the
    /// conjugate cell pairing; the default for fast tests.
    pub fn toy() -> Self {
        Self {
            n: 2,
            n_y: 3,
            n_s: 3,
            n_f: 1,
            ..Self::default()
        }
    }

    pub fn tau(&self) -> f64 {
        1.0 / self.tau_hz
    }

    pub fn slow_dynamics(&self) -> Result<ActuatorDynamics> {
        ActuatorDynamics::new(self.a_s, self.mu, self.tau())
    }

    pub fn fast_dynamics(&self) -> Result<ActuatorDynamics> {
        ActuatorDynamics::new(self.a_f, self.mu, self.tau())
    }
}

/// The two-array ring plant: static block-circulant response maps plus the
/// shared actuator dynamics of each array. Immutable after construction.
#[derive(Debug, Clone)]
pub struct TwoArrayPlant {
    pub n: usize,
    pub n_y: usize,
    pub n_s: usize,
    pub n_f: usize,
    pub r_slow: BlockCirculantMatrix,
    pub r_fast: BlockCirculantMatrix,
    pub dyn_slow: ActuatorDynamics,
    pub dyn_fast: ActuatorDynamics,
}

impl TwoArrayPlant {
    pub fn new(
        r_slow: BlockCirculantMatrix,
        r_fast: BlockCirculantMatrix,
        dyn_slow: ActuatorDynamics,
        dyn_fast: ActuatorDynamics,
    ) -> Result<Self> {
        let n = r_slow.n();
        if r_fast.n() != n || r_fast.block_rows() != r_slow.block_rows() {
            return Err(Error::Shape(
                "slow and fast response maps must share cell count and sensor rows".into(),
            ));
        }
        if r_fast.block_cols() > r_slow.block_cols() {
            return Err(Error::Shape(format!(
                "per-cell fast corrector count {} exceeds slow count {}",
                r_fast.block_cols(),
                r_slow.block_cols()
            )));
        }
        if (dyn_slow.tau - dyn_fast.tau).abs() > 0.0 || dyn_slow.mu != dyn_fast.mu {
            return Err(Error::Domain(
                "both arrays share the sampling period and loop delay".into(),
            ));
        }
        Ok(Self {
            n,
            n_y: r_slow.block_rows(),
            n_s: r_slow.block_cols(),
            n_f: r_fast.block_cols(),
            r_slow,
            r_fast,
            dyn_slow,
            dyn_fast,
        })
    }

    pub fn total_sensors(&self) -> usize {
        self.n * self.n_y
    }

    pub fn total_slow(&self) -> usize {
        self.n * self.n_s
    }

    pub fn total_fast(&self) -> usize {
        self.n * self.n_f
    }

    pub fn tau(&self) -> f64 {
        self.dyn_slow.tau
    }

    /// The comparison variant in which every corrector of both arrays runs
    /// with the fast dynamics.
    pub fn all_fast(&self) -> Self {
        Self {
            dyn_slow: self.dyn_fast,
            ..self.clone()
        }
    }

    /// Dense concatenation `[R_slow  R_fast]`, the full static response.
    pub fn concatenated_dense(&self) -> DMatrix<f64> {
        let slow = self.r_slow.to_dense();
        let fast = self.r_fast.to_dense();
        let mut out = DMatrix::zeros(slow.nrows(), slow.ncols() + fast.ncols());
        out.view_mut((0, 0), (slow.nrows(), slow.ncols()))
            .copy_from(&slow);
        out.view_mut((0, slow.ncols()), (fast.nrows(), fast.ncols()))
            .copy_from(&fast);
        out
    }
}

/// Spatial Fourier decomposition of both response maps. Because the maps are
/// block-circulant the transformed maps are block-diagonal with one
/// `n_y × n_s` (resp. `n_y × n_f`) block per spatial frequency.
pub fn fourier_decompose(plant: &TwoArrayPlant) -> (BlockDiagonalForm, BlockDiagonalForm) {
    (
        plant.r_slow.block_diagonalize(),
        plant.r_fast.block_diagonalize(),
    )
}

/// One cell of the generalized modal decomposition.
#[derive(Debug, Clone)]
pub struct ModalCell {
    /// Shared left factor of the cell, `n_y × n_y`.
    pub x: DMatrix<Complex64>,
    /// Slow input basis, `n_s × n_s`.
    pub u_slow: DMatrix<Complex64>,
    /// Fast input basis, `n_f × n_f`.
    pub u_fast: DMatrix<Complex64>,
    /// Slow gains per channel, length `n_s` (coupled gains then ones).
    pub s_slow: DVector<f64>,
    /// Fast gains of the coupled channels, length `n_f`.
    pub s_fast: DVector<f64>,
    /// Condition number of the shared factor.
    pub cond_x: f64,
}

impl ModalCell {
    /// `X · diag(s_slow) · U_slow^H` — the slow response block of the cell.
    pub fn reconstruct_slow(&self) -> DMatrix<Complex64> {
        let n_s = self.s_slow.len();
        let mut mid = DMatrix::<Complex64>::zeros(self.x.ncols(), n_s);
        for i in 0..n_s.min(self.x.ncols()) {
            mid[(i, i)] = Complex64::new(self.s_slow[i], 0.0);
        }
        &self.x * mid * self.u_slow.adjoint()
    }

    /// `X · [diag(s_fast); 0] · U_fast^H` — the fast response block.
    pub fn reconstruct_fast(&self) -> DMatrix<Complex64> {
        let n_f = self.s_fast.len();
        let mut mid = DMatrix::<Complex64>::zeros(self.x.ncols(), n_f);
        for i in 0..n_f.min(self.x.ncols()) {
            mid[(i, i)] = Complex64::new(self.s_fast[i], 0.0);
        }
        &self.x * mid * self.u_fast.adjoint()
    }
}

/// The block-diagonal concatenation of per-cell factors: the ring in
/// generalized mode space. Cell `i` holds `n_f` coupled (two-input) channels
/// followed by `n_s − n_f` slow-only channels with unit slow gain.
#[derive(Debug, Clone)]
pub struct ModalSystem {
    pub n: usize,
    pub n_y: usize,
    pub n_s: usize,
    pub n_f: usize,
    pub cells: Vec<ModalCell>,
}

/// One decoupled channel of the modal system.
#[derive(Debug, Clone, Copy)]
pub struct ModeChannel {
    pub cell: usize,
    pub index: usize,
    pub s_slow: f64,
    /// `None` for slow-only channels.
    pub s_fast: Option<f64>,
}

impl ModalSystem {
    /// Flat iteration over all `n·n_s` channels.
    pub fn channels(&self) -> impl Iterator<Item = ModeChannel> + '_ {
        let n_s = self.n_s;
        let n_f = self.n_f;
        self.cells.iter().enumerate().flat_map(move |(cell, c)| {
            (0..n_s).map(move |index| ModeChannel {
                cell,
                index,
                s_slow: c.s_slow[index],
                s_fast: if index < n_f {
                    Some(c.s_fast[index])
                } else {
                    None
                },
            })
        })
    }

    /// (coupled, slow-only) channel counts per cell.
    pub fn channel_split(&self) -> (usize, usize) {
        (self.n_f, self.n_s - self.n_f)
    }
}

/// Per-cell generalized SVD of the Fourier blocks.
///
/// Each slow block must be square (`n_y = n_s`); the unit gains of the
/// slow-only channels are folded into `s_slow` and the structural zeros into
/// the fast side. With no fast array at all (`n_f = 0`) the factorization
/// degenerates to a plain SVD per cell, `σ_i = (W Σ) I V^H`.
pub fn modal_decompose(
    rhat_slow: &BlockDiagonalForm,
    rhat_fast: &BlockDiagonalForm,
    rank_tol: Option<f64>,
) -> Result<ModalSystem> {
    let n = rhat_slow.n();
    let n_y = rhat_slow.block_rows();
    let n_s = rhat_slow.block_cols();
    let n_f = rhat_fast.block_cols();
    if rhat_fast.n() != n || rhat_fast.block_rows() != n_y {
        return Err(Error::Shape(
            "slow and fast Fourier forms must share cell count and rows".into(),
        ));
    }
    if n_y != n_s {
        return Err(Error::Shape(format!(
            "per-cell slow response must be square, got {n_y}x{n_s}"
        )));
    }

    let cells: Vec<Result<ModalCell>> = (0..n)
        .into_par_iter()
        .map(|i| {
            decompose_cell(rhat_slow.block(i), rhat_fast.block(i), rank_tol).map_err(|e| {
                Error::Cell {
                    cell: i,
                    reason: e.to_string(),
                }
            })
        })
        .collect();
    let cells = cells.into_iter().collect::<Result<Vec<_>>>()?;

    Ok(ModalSystem {
        n,
        n_y,
        n_s,
        n_f,
        cells,
    })
}

fn decompose_cell(
    sigma: &DMatrix<Complex64>,
    phi: &DMatrix<Complex64>,
    rank_tol: Option<f64>,
) -> Result<ModalCell> {
    let q = sigma.nrows();
    let n_f = phi.ncols();

    if n_f == 0 {
        // Slow-only ring: σ = (W Σ) I V^H from a plain SVD.
        let svd = sigma
            .clone()
            .try_svd(true, true, f64::EPSILON, 0)
            .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
        let w = svd.u.expect("requested U");
        let v = svd.v_t.expect("requested V^H").adjoint();
        let sv = svd.singular_values;
        if sv[q - 1] <= gsvd::default_rank_tol(q, 0, sv[0]) {
            return Err(Error::Numerical(
                "slow response block is numerically singular".into(),
            ));
        }
        let mut x = w;
        for j in 0..q {
            let s = Complex64::new(sv[j], 0.0);
            for i in 0..q {
                x[(i, j)] *= s;
            }
        }
        return Ok(ModalCell {
            x,
            u_slow: v,
            u_fast: DMatrix::zeros(0, 0),
            s_slow: DVector::from_element(q, 1.0),
            s_fast: DVector::zeros(0),
            cond_x: sv[0] / sv[q - 1],
        });
    }

    let factors: GsvdFactors = gsvd::gsvd(sigma, phi, rank_tol)?;
    if factors.rank_c < q {
        return Err(Error::Numerical(format!(
            "cell response is rank-deficient ({} < {q}); \
             the controller design needs a full-rank shared factor",
            factors.rank_c
        )));
    }
    let report = gsvd::condition_report(&factors);
    let mut s_slow = DVector::from_element(q, 1.0);
    for i in 0..factors.m {
        s_slow[i] = factors.s_a[i];
    }
    Ok(ModalCell {
        x: factors.x,
        u_slow: factors.u_a,
        u_fast: factors.u_b,
        s_slow,
        s_fast: factors.s_b,
        cond_x: report.cond_x,
    })
}

/// Deterministic synthetic ring with orbit-response-like structure.
///
/// Per-cell response entries decay with the sensor-to-corrector ring
/// distance as `exp(-decay · d)` (d in cells) under an oscillatory envelope,
/// plus a small seeded noise floor that keeps the matrix full rank while the
/// smooth kernel makes it ill-conditioned. Fast correctors sit at a subset
/// of the slow positions with a weaker field: their columns are scaled
/// copies of the matching slow columns, so the fast controllable subspace is
/// contained in the slow one by construction while the generalized gain
/// splits stay away from the symmetric point.
pub fn generate_synthetic_ring(config: &RingConfig) -> Result<TwoArrayPlant> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    let RingConfig {
        n,
        n_y,
        n_s,
        n_f,
        decay,
        seed,
        ..
    } = *config;
    if n == 0 || n_y == 0 || n_s == 0 {
        return Err(Error::Shape("ring dimensions must be positive".into()));
    }
    if n_f > n_s {
        return Err(Error::Shape(format!(
            "fast corrector count {n_f} exceeds slow count {n_s}"
        )));
    }
    if n_y != n_s {
        return Err(Error::Shape(format!(
            "per-cell slow response must be square, got {n_y} sensors x {n_s} correctors"
        )));
    }
    if !(decay > 0.0) {
        return Err(Error::Domain("decay must be positive".into()));
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    // Non-integer oscillation count around the ring, in the style of a
    // betatron phase advance.
    let tune = 1.72 * n as f64 / 6.0 + 0.31;
    let noise_level = 1e-3;

    let mut slow_blocks = Vec::with_capacity(n);
    for d in 0..n {
        let mut block = DMatrix::zeros(n_y, n_s);
        for i in 0..n_y {
            for j in 0..n_s {
                let sensor_pos = i as f64 / n_y as f64;
                let corr_pos = d as f64 + j as f64 / n_s as f64;
                let mut delta = (corr_pos - sensor_pos).rem_euclid(n as f64);
                if delta > n as f64 / 2.0 {
                    delta = n as f64 - delta;
                }
                let envelope = (-decay * delta).exp();
                let osc = (2.0 * std::f64::consts::PI * tune * delta / n as f64).cos();
                let noise: f64 = normal.sample(&mut rng);
                block[(i, j)] = envelope * osc + noise_level * noise;
            }
        }
        slow_blocks.push(block);
    }

    // Fast correctors sit at a subset of the slow positions, with a weaker
    // field than the slow magnets at the same spot.
    let fast_field = 0.6;
    let fast_blocks: Vec<DMatrix<f64>> = slow_blocks
        .iter()
        .map(|b| {
            DMatrix::from_fn(n_y, n_f, |i, j| {
                let src = j * n_s / n_f.max(1);
                fast_field * b[(i, src)]
            })
        })
        .collect();

    let r_slow = BlockCirculantMatrix::new(n, n_y, n_s, slow_blocks)?;
    let r_fast = BlockCirculantMatrix::new(n, n_y, n_f, fast_blocks)?;
    TwoArrayPlant::new(
        r_slow,
        r_fast,
        config.slow_dynamics()?,
        config.fast_dynamics()?,
    )
}

/// Builds the dense spatial Fourier transform `(F_n* ⊗ I_w)` used by the
/// equivalence oracles; the hot paths use FFTs instead.
pub fn dense_forward_transform(n: usize, width: usize) -> DMatrix<Complex64> {
    crate::block_circulant::fourier_matrix(n)
        .adjoint()
        .kronecker(&DMatrix::<Complex64>::identity(width, width))
}

/// Dense inverse spatial transform `(F_n ⊗ I_w)`.
pub fn dense_inverse_transform(n: usize, width: usize) -> DMatrix<Complex64> {
    crate::block_circulant::fourier_matrix(n)
        .kronecker(&DMatrix::<Complex64>::identity(width, width))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{complexify, max_abs, rel_residual};
    use approx::assert_relative_eq;

    fn toy_plant() -> TwoArrayPlant {
        generate_synthetic_ring(&RingConfig::toy()).unwrap()
    }

    #[test]
    fn actuator_unity_dc_gain() {
        let d = ActuatorDynamics::new(80.0, 7, 1e-5).unwrap();
        let g = actuator_response(&d, Complex64::new(1.0, 0.0)).unwrap();
        assert_relative_eq!(g.re, 1.0, epsilon = 1e-14);
        assert!(g.im.abs() < 1e-14);
    }

    #[test]
    fn actuator_bandwidth_is_minus_three_db() {
        // First-order prototype: |g| = 1/√2 at ω = a, within 2%.
        let d = ActuatorDynamics::new(80.0, 7, 1e-5).unwrap();
        let z = Complex64::from_polar(1.0, d.a * d.tau);
        let g = actuator_response(&d, z).unwrap();
        let want = std::f64::consts::FRAC_1_SQRT_2;
        assert!((g.norm() - want).abs() / want < 0.02, "|g| = {}", g.norm());
    }

    #[test]
    fn actuator_delay_phase_is_exact() {
        // Dividing out the first-order part leaves exactly z^{-(mu+1)}.
        let d = ActuatorDynamics::new(80.0, 7, 1e-5).unwrap();
        let omega = 2.0 * std::f64::consts::PI * 700.0;
        let z = Complex64::from_polar(1.0, omega * d.tau);
        let g = actuator_response(&d, z).unwrap();
        let pole = d.pole();
        let first_order = (1.0 - pole) / (Complex64::new(1.0, 0.0) - pole / z);
        let delay_part = g / first_order;
        let want = Complex64::from_polar(1.0, -8.0 * omega * d.tau);
        assert!((delay_part - want).norm() < 1e-12);
    }

    #[test]
    fn actuator_rejects_pole_evaluation() {
        let d = ActuatorDynamics::new(80.0, 7, 1e-5).unwrap();
        let z = Complex64::new(d.pole(), 0.0);
        assert!(matches!(actuator_response(&d, z), Err(Error::Domain(_))));
    }

    #[test]
    fn actuator_magnitude_bounded_on_unit_circle() {
        // Low-pass with unity DC gain and pure delay: |g| <= 1 everywhere.
        let d = ActuatorDynamics::new(12_000.0, 7, 1e-5).unwrap();
        for k in 1..500 {
            let omega = std::f64::consts::PI * k as f64 / 500.0 / d.tau;
            let z = Complex64::from_polar(1.0, omega * d.tau);
            let g = actuator_response(&d, z).unwrap();
            assert!(g.norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn fourier_decompose_single_cell_is_identity() {
        let mut cfg = RingConfig::toy();
        cfg.n = 1;
        let plant = generate_synthetic_ring(&cfg).unwrap();
        let (rhat_s, _) = fourier_decompose(&plant);
        let direct = complexify(&plant.r_slow.blocks()[0]);
        assert!(max_abs(&(rhat_s.block(0) - &direct)) < 1e-12);
    }

    #[test]
    fn fourier_decompose_matches_dense_oracle() {
        let plant = toy_plant();
        let (rhat_s, rhat_f) = fourier_decompose(&plant);
        let left = dense_forward_transform(plant.n, plant.n_y);
        let right_s = dense_inverse_transform(plant.n, plant.n_s);
        let right_f = dense_inverse_transform(plant.n, plant.n_f);
        let full_s = &left * complexify(&plant.r_slow.to_dense()) * right_s;
        let full_f = &left * complexify(&plant.r_fast.to_dense()) * right_f;
        let scale = max_abs(&full_s);
        for i in 0..plant.n {
            let vs = full_s
                .view((i * plant.n_y, i * plant.n_s), (plant.n_y, plant.n_s))
                .into_owned();
            let vf = full_f
                .view((i * plant.n_y, i * plant.n_f), (plant.n_y, plant.n_f))
                .into_owned();
            assert!(max_abs(&(vs - rhat_s.block(i))) / scale <= 1e-10);
            assert!(max_abs(&(vf - rhat_f.block(i))) / scale <= 1e-10);
        }
    }

    #[test]
    fn fourier_equivalence_with_static_gains() {
        // y = R_s u_s + R_f u_f must map to ŷ = R̂_s û_s + R̂_f û_f.
        use rand::{Rng, SeedableRng};
        let plant = toy_plant();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let u_s = DVector::from_fn(plant.total_slow(), |_, _| rng.gen_range(-1.0..1.0));
        let u_f = DVector::from_fn(plant.total_fast(), |_, _| rng.gen_range(-1.0..1.0));
        let y = plant.r_slow.matvec_dense(&u_s).unwrap() + plant.r_fast.matvec_dense(&u_f).unwrap();

        let (rhat_s, rhat_f) = fourier_decompose(&plant);
        let tf_s = dense_forward_transform(plant.n, plant.n_s);
        let tf_f = dense_forward_transform(plant.n, plant.n_f);
        let tf_y_inv = dense_inverse_transform(plant.n, plant.n_y);
        let u_s_hat = tf_s * u_s.map(|v| Complex64::new(v, 0.0));
        let u_f_hat = tf_f * u_f.map(|v| Complex64::new(v, 0.0));
        let mut y_hat = DVector::<Complex64>::zeros(plant.total_sensors());
        for i in 0..plant.n {
            let ys = rhat_s.block(i) * u_s_hat.rows(i * plant.n_s, plant.n_s);
            let yf = rhat_f.block(i) * u_f_hat.rows(i * plant.n_f, plant.n_f);
            y_hat
                .rows_mut(i * plant.n_y, plant.n_y)
                .copy_from(&(ys + yf));
        }
        let y_back = tf_y_inv * y_hat;
        let scale = y.amax();
        for k in 0..y.len() {
            assert!((y_back[k].re - y[k]).abs() / scale <= 1e-10);
            assert!(y_back[k].im.abs() / scale <= 1e-10);
        }
    }

    #[test]
    fn modal_decompose_substitution_case() {
        // Single cell with σ = I_2, φ = (1,0)^T: equal splits on the coupled
        // channel, unit slow gain on the other.
        let sigma = DMatrix::<Complex64>::identity(2, 2);
        let phi = complexify(&DMatrix::from_column_slice(2, 1, &[1.0, 0.0]));
        let rhat_s = BlockDiagonalForm::new(1, 2, 2, vec![sigma]).unwrap();
        let rhat_f = BlockDiagonalForm::new(1, 2, 1, vec![phi]).unwrap();
        let ms = modal_decompose(&rhat_s, &rhat_f, None).unwrap();
        let cell = &ms.cells[0];
        assert_relative_eq!(
            cell.s_slow[0],
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            cell.s_fast[0],
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-12
        );
        assert_relative_eq!(cell.s_slow[1], 1.0, epsilon = 1e-14);
        assert_eq!(ms.channel_split(), (1, 1));
    }

    #[test]
    fn modal_normalization_always_holds() {
        let plant = toy_plant();
        let (rhat_s, rhat_f) = fourier_decompose(&plant);
        let ms = modal_decompose(&rhat_s, &rhat_f, None).unwrap();
        for ch in ms.channels() {
            let fast_sq = ch.s_fast.map_or(0.0, |s| s * s);
            assert!((ch.s_slow * ch.s_slow + fast_sq - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn modal_reconstruction_full_scale() {
        let plant = generate_synthetic_ring(&RingConfig::default()).unwrap();
        assert_eq!(
            (
                plant.total_sensors(),
                plant.total_slow(),
                plant.total_fast()
            ),
            (252, 252, 144)
        );
        let (rhat_s, rhat_f) = fourier_decompose(&plant);
        let ms = modal_decompose(&rhat_s, &rhat_f, None).unwrap();
        assert_eq!(ms.channel_split(), (24, 18));
        for i in 0..plant.n {
            assert!(
                rel_residual(&ms.cells[i].reconstruct_slow(), rhat_s.block(i)) <= 1e-9,
                "slow cell {i}"
            );
            assert!(
                rel_residual(&ms.cells[i].reconstruct_fast(), rhat_f.block(i)) <= 1e-9,
                "fast cell {i}"
            );
        }
    }

    #[test]
    fn conjugate_cells_reconstruct_after_conjugation() {
        // For a real ring the Fourier blocks pair up as conjugates, so the
        // conjugated factors of cell i must reconstruct the blocks of cell
        // n - i within tolerance.
        let plant = toy_plant();
        let (rhat_s, rhat_f) = fourier_decompose(&plant);
        let ms = modal_decompose(&rhat_s, &rhat_f, None).unwrap();
        let n = plant.n;
        for i in 1..n {
            let conj_slow = ms.cells[i].reconstruct_slow().map(|z| z.conj());
            let conj_fast = ms.cells[i].reconstruct_fast().map(|z| z.conj());
            assert!(rel_residual(&conj_slow, rhat_s.block(n - i)) <= 1e-9);
            assert!(rel_residual(&conj_fast, rhat_f.block(n - i)) <= 1e-9);
        }
    }

    #[test]
    fn synthetic_ring_is_circulant_and_ill_conditioned() {
        let plant = generate_synthetic_ring(&RingConfig::default()).unwrap();
        // Exactly circulant by construction.
        let dense = plant.r_slow.to_dense();
        let (_, worst) = BlockCirculantMatrix::from_dense(&dense, plant.n, 0.0).unwrap();
        assert_eq!(worst, 0.0);
        // Condition of the concatenated response.
        let sv = plant.concatenated_dense().singular_values();
        let cond = sv[0] / sv[sv.len() - 1];
        assert!(cond >= 1e3, "condition {cond:.3e} too benign");
    }

    #[test]
    fn synthetic_ring_is_deterministic() {
        let a = generate_synthetic_ring(&RingConfig::default()).unwrap();
        let b = generate_synthetic_ring(&RingConfig::default()).unwrap();
        assert_eq!(a.r_slow.blocks(), b.r_slow.blocks());
        assert_eq!(a.r_fast.blocks(), b.r_fast.blocks());
        let mut other = RingConfig::default();
        other.seed += 1;
        let c = generate_synthetic_ring(&other).unwrap();
        assert_ne!(a.r_slow.blocks(), c.r_slow.blocks());
        assert_eq!(a.r_slow.block_rows(), c.r_slow.block_rows());
    }

    #[test]
    fn synthetic_ring_degenerate_shape() {
        let cfg = RingConfig {
            n: 1,
            n_y: 1,
            n_s: 1,
            n_f: 1,
            ..RingConfig::default()
        };
        let plant = generate_synthetic_ring(&cfg).unwrap();
        assert_eq!(plant.total_sensors(), 1);
        assert_eq!(plant.total_fast(), 1);
    }

    #[test]
    fn fast_columns_are_subset_of_slow() {
        let plant = generate_synthetic_ring(&RingConfig::default()).unwrap();
        for (bs, bf) in plant.r_slow.blocks().iter().zip(plant.r_fast.blocks()) {
            for j in 0..plant.n_f {
                let src = j * plant.n_s / plant.n_f;
                assert_eq!(bf.column(j), bs.column(src) * 0.6);
            }
        }
    }

    #[test]
    fn modal_decompose_rejects_nonsquare_cells() {
        let rhat_s = BlockDiagonalForm::new(1, 2, 3, vec![DMatrix::zeros(2, 3)]).unwrap();
        let rhat_f = BlockDiagonalForm::new(1, 2, 1, vec![DMatrix::zeros(2, 1)]).unwrap();
        assert!(matches!(
            modal_decompose(&rhat_s, &rhat_f, None),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn modal_decompose_names_failing_cell() {
        // A singular slow block in cell 1 must be reported with its index.
        let good = DMatrix::<Complex64>::identity(2, 2);
        let bad = DMatrix::<Complex64>::zeros(2, 2);
        let phi = complexify(&DMatrix::from_column_slice(2, 1, &[1.0, 0.0]));
        let rhat_s = BlockDiagonalForm::new(2, 2, 2, vec![good, bad]).unwrap();
        let rhat_f = BlockDiagonalForm::new(2, 2, 1, vec![phi.clone(), phi]).unwrap();
        match modal_decompose(&rhat_s, &rhat_f, None) {
            Err(Error::Cell { cell, .. }) => assert_eq!(cell, 1),
            other => panic!("expected cell error, got {other:?}"),
        }
    }
}
