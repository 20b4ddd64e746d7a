//! Disturbance synthesis and measurement augmentation.
//!
//! The synthetic generator produces mode-space colored noise whose spatial
//! weight follows the singular-value magnitudes of the plant's static
//! response (strong output directions carry more disturbance power, as they
//! do on a real ring), then maps it to sensor coordinates.
//!
//! [`augment_measurements`] widens a measured sensor matrix to a larger
//! footprint in four steps: copy-and-append the missing columns, project
//! into mode space with an SVD basis of the target response, rescale the
//! per-mode spectra with a monotone weighting over singular-value magnitude,
//! and project back.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::plant::TwoArrayPlant;

/// Left singular basis of a static response map, used as the spatial mode
/// space for disturbance shaping.
#[derive(Debug, Clone)]
pub struct SpatialBasis {
    /// Orthonormal output directions, one per column.
    pub vectors: DMatrix<f64>,
    pub singular_values: DVector<f64>,
}

impl SpatialBasis {
    /// SVD of the concatenated `[R_slow  R_fast]` response.
    pub fn from_plant(plant: &TwoArrayPlant) -> Self {
        Self::from_response(&plant.concatenated_dense())
    }

    pub fn from_response(response: &DMatrix<f64>) -> Self {
        let svd = response.clone().svd(true, false);
        Self {
            vectors: svd.u.expect("requested U"),
            singular_values: svd.singular_values,
        }
    }

    pub fn modes(&self) -> usize {
        self.vectors.ncols()
    }
}

/// Temporal spectrum of each mode's time series.
#[derive(Debug, Clone, PartialEq)]
pub enum TemporalShape {
    /// Flat spectrum, unit variance.
    White,
    /// One-pole low-pass (unit variance) plus a white floor, normalized to
    /// unit total variance: low-frequency dominated with a broadband tail.
    LowPassFloor { cutoff_hz: f64, floor: f64 },
}

/// Distribution of disturbance power over the spatial modes.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatialWeighting {
    Uniform,
    /// Proportional to the singular value of the mode (normalized to the
    /// largest).
    SingularValue,
    /// All power in one mode index.
    Concentrated(usize),
    Custom(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct DisturbanceProfile {
    pub temporal: TemporalShape,
    pub spatial: SpatialWeighting,
    pub amplitude: f64,
}

impl Default for DisturbanceProfile {
    fn default() -> Self {
        Self {
            temporal: TemporalShape::LowPassFloor {
                cutoff_hz: 20.0,
                floor: 0.05,
            },
            spatial: SpatialWeighting::SingularValue,
            amplitude: 1.0,
        }
    }
}

impl DisturbanceProfile {
    fn mode_weights(&self, basis: &SpatialBasis) -> Result<Vec<f64>> {
        let n = basis.modes();
        match &self.spatial {
            SpatialWeighting::Uniform => Ok(vec![1.0; n]),
            SpatialWeighting::SingularValue => {
                let max = basis.singular_values[0].max(1e-300);
                Ok((0..n)
                    .map(|i| basis.singular_values.get(i).copied().unwrap_or(0.0) / max)
                    .collect())
            }
            SpatialWeighting::Concentrated(idx) => {
                if *idx >= n {
                    return Err(Error::Shape(format!(
                        "concentrated mode {idx} out of range ({n} modes)"
                    )));
                }
                let mut w = vec![0.0; n];
                w[*idx] = 1.0;
                Ok(w)
            }
            SpatialWeighting::Custom(w) => {
                if w.len() != n {
                    return Err(Error::Shape(format!(
                        "custom weights length {} != {n}",
                        w.len()
                    )));
                }
                Ok(w.clone())
            }
        }
    }
}

/// Generates a `steps × N_y` disturbance matrix, deterministic per seed.
pub fn synthesize_disturbance(
    basis: &SpatialBasis,
    steps: usize,
    seed: u64,
    profile: &DisturbanceProfile,
    tau: f64,
) -> DMatrix<f64> {
    let weights = profile
        .mode_weights(basis)
        .expect("profile consistent with basis");
    let n_modes = basis.modes();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;

    // Mode series in a steps × modes matrix; draws run mode-major so the
    // stream is reproducible independently of any later reshaping.
    let mut modes = DMatrix::zeros(steps, n_modes);
    for mode in 0..n_modes {
        let w = weights[mode] * profile.amplitude;
        match &profile.temporal {
            TemporalShape::White => {
                for k in 0..steps {
                    let z: f64 = normal.sample(&mut rng);
                    modes[(k, mode)] = w * z;
                }
            }
            TemporalShape::LowPassFloor { cutoff_hz, floor } => {
                let rho = (-2.0 * std::f64::consts::PI * cutoff_hz * tau).exp();
                // Unit-variance scaling of the one-pole output.
                let norm = ((1.0 + rho) / (1.0 - rho)).sqrt();
                let total = (1.0 + floor * floor).sqrt();
                let mut lp = 0.0;
                for k in 0..steps {
                    let z1: f64 = normal.sample(&mut rng);
                    let z2: f64 = normal.sample(&mut rng);
                    lp = rho * lp + (1.0 - rho) * z1;
                    modes[(k, mode)] = w * (norm * lp + floor * z2) / total;
                }
            }
        }
    }
    modes * basis.vectors.transpose()
}

/// Step 1 of the augmentation: copy the first `target - width` columns and
/// append them on the right.
pub fn append_copied_columns(raw: &DMatrix<f64>, target: usize) -> Result<DMatrix<f64>> {
    let width = raw.ncols();
    if width == 0 {
        return Err(Error::Shape("raw measurement matrix has no columns".into()));
    }
    if target < width {
        return Err(Error::Shape(format!(
            "target width {target} smaller than measured width {width}"
        )));
    }
    let extra = target - width;
    if extra > width {
        return Err(Error::Shape(format!(
            "cannot copy {extra} columns out of {width}"
        )));
    }
    let mut out = DMatrix::zeros(raw.nrows(), target);
    out.view_mut((0, 0), (raw.nrows(), width)).copy_from(raw);
    for j in 0..extra {
        out.set_column(width + j, &raw.column(j));
    }
    Ok(out)
}

/// Step 2: project sensor rows into mode space (`modes = data · V`).
pub fn project_to_modes(data: &DMatrix<f64>, basis: &SpatialBasis) -> Result<DMatrix<f64>> {
    if data.ncols() != basis.vectors.nrows() {
        return Err(Error::Shape(format!(
            "data width {} != basis dimension {}",
            data.ncols(),
            basis.vectors.nrows()
        )));
    }
    Ok(data * &basis.vectors)
}

/// Step 3: scale each mode's time series (hence its whole spectrum) by a
/// per-mode factor.
pub fn rescale_modes(modes: &DMatrix<f64>, weights: &[f64]) -> Result<DMatrix<f64>> {
    if weights.len() != modes.ncols() {
        return Err(Error::Shape(format!(
            "{} weights for {} modes",
            weights.len(),
            modes.ncols()
        )));
    }
    let mut out = modes.clone();
    for (j, w) in weights.iter().enumerate() {
        for i in 0..out.nrows() {
            out[(i, j)] *= w;
        }
    }
    Ok(out)
}

/// Step 4: back to sensor coordinates (`data = modes · V^T`).
pub fn project_from_modes(modes: &DMatrix<f64>, basis: &SpatialBasis) -> Result<DMatrix<f64>> {
    if modes.ncols() != basis.vectors.ncols() {
        return Err(Error::Shape(format!(
            "mode count {} != basis modes {}",
            modes.ncols(),
            basis.vectors.ncols()
        )));
    }
    Ok(modes * basis.vectors.transpose())
}

/// A monotone weighting over singular-value magnitude: `(σ_i/σ_max)^exponent`.
pub fn monotone_sv_weights(basis: &SpatialBasis, exponent: f64) -> Vec<f64> {
    let max = basis.singular_values[0].max(1e-300);
    (0..basis.modes())
        .map(|i| (basis.singular_values.get(i).copied().unwrap_or(0.0) / max).powf(exponent))
        .collect()
}

/// The full four-step augmentation of a measured sensor matrix to the wider
/// target footprint.
pub fn augment_measurements(
    raw: &DMatrix<f64>,
    target: usize,
    basis: &SpatialBasis,
    weights: &[f64],
) -> Result<DMatrix<f64>> {
    let appended = append_copied_columns(raw, target)?;
    let modes = project_to_modes(&appended, basis)?;
    let rescaled = rescale_modes(&modes, weights)?;
    project_from_modes(&rescaled, basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{generate_synthetic_ring, RingConfig};
    use rand::Rng;

    fn toy_basis() -> SpatialBasis {
        let plant = generate_synthetic_ring(&RingConfig::toy()).unwrap();
        SpatialBasis::from_plant(&plant)
    }

    #[test]
    fn deterministic_per_seed() {
        let basis = toy_basis();
        let profile = DisturbanceProfile::default();
        let a = synthesize_disturbance(&basis, 256, 7, &profile, 1e-5);
        let b = synthesize_disturbance(&basis, 256, 7, &profile, 1e-5);
        assert_eq!(a, b);
        let c = synthesize_disturbance(&basis, 256, 8, &profile, 1e-5);
        assert_ne!(a, c);
    }

    #[test]
    fn concentrated_weighting_is_rank_one() {
        let basis = toy_basis();
        let profile = DisturbanceProfile {
            temporal: TemporalShape::White,
            spatial: SpatialWeighting::Concentrated(0),
            amplitude: 1.0,
        };
        let d = synthesize_disturbance(&basis, 512, 3, &profile, 1e-5);
        // Every row must be collinear with the first basis vector.
        let v0 = basis.vectors.column(0);
        for k in 0..d.nrows() {
            let row = d.row(k).transpose();
            let proj = row.dot(&v0);
            let norm = row.norm();
            if norm > 1e-9 {
                assert!(
                    proj.abs() / norm >= 0.999,
                    "row {k} correlation {}",
                    proj.abs() / norm
                );
            }
        }
    }

    #[test]
    fn append_copies_leading_columns() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let raw = DMatrix::from_fn(16, 5, |_, _| rng.gen_range(-1.0..1.0));
        let wide = append_copied_columns(&raw, 8).unwrap();
        assert_eq!(wide.ncols(), 8);
        // Column just past the measured width equals the first raw column.
        assert_eq!(wide.column(5), raw.column(0));
        assert_eq!(wide.column(7), raw.column(2));
        // target == width is a no-op.
        let same = append_copied_columns(&raw, 5).unwrap();
        assert_eq!(same, raw);
        assert!(append_copied_columns(&raw, 3).is_err());
    }

    #[test]
    fn unit_weights_round_trip() {
        let basis = toy_basis();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let raw = DMatrix::from_fn(32, basis.modes() - 2, |_, _| rng.gen_range(-1.0..1.0));
        let appended = append_copied_columns(&raw, basis.modes()).unwrap();
        let ones = vec![1.0; basis.modes()];
        let out = augment_measurements(&raw, basis.modes(), &basis, &ones).unwrap();
        assert!((&out - &appended).amax() <= 1e-10);
    }

    #[test]
    fn monotone_weights_are_monotone() {
        let basis = toy_basis();
        let w = monotone_sv_weights(&basis, 1.0);
        for i in 1..w.len() {
            assert!(w[i] <= w[i - 1] + 1e-15);
        }
        assert!((w[0] - 1.0).abs() < 1e-15);
    }
}
