//! Spectral post-processing: Welch spectra, integrated-motion curves and the
//! present-vs-all-fast controller comparison.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::controller::{DesignedController, ZeroController};
use crate::error::{Error, Result};
use crate::plant::TwoArrayPlant;
use crate::simulator::{run_closed_loop, RecordFlags, SimulationConfig};

/// Output scaling of [`power_spectrum`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumScaling {
    /// Power spectral density (power per Hz): bin sums times the bin width
    /// recover the signal power.
    Density,
    /// Amplitude-calibrated power spectrum: a bin-centered sinusoid of
    /// amplitude `A` reads `A²/2` at its peak bin.
    Spectrum,
}

/// Welch estimator configuration.
#[derive(Debug, Clone)]
pub struct WelchConfig {
    pub segment_len: usize,
    /// Fractional overlap between segments in `[0, 0.9]`.
    pub overlap: f64,
    pub window: WindowKind,
    pub scaling: SpectrumScaling,
    pub sample_rate_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Rectangular,
    Hann,
}

impl WelchConfig {
    pub fn new(sample_rate_hz: f64) -> Self {
        Self {
            segment_len: 4096,
            overlap: 0.5,
            window: WindowKind::Hann,
            scaling: SpectrumScaling::Spectrum,
            sample_rate_hz,
        }
    }

    fn window_samples(&self, len: usize) -> Vec<f64> {
        match self.window {
            WindowKind::Rectangular => vec![1.0; len],
            WindowKind::Hann => (0..len)
                .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos()))
                .collect(),
        }
    }
}

/// One-sided averaged spectra of a set of channels.
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    /// Bin centers in Hz, ascending from 0 to Nyquist.
    pub freqs: Vec<f64>,
    /// `bins × channels` power values in the configured scaling.
    pub power: DMatrix<f64>,
    /// Largest power value over the whole group (plot-normalization scalar).
    pub normalization: f64,
    /// Bin width in Hz.
    pub df: f64,
    pub segments: usize,
}

impl SpectrumResult {
    /// Group-normalized spectra; the overall maximum is exactly one.
    pub fn normalized(&self) -> DMatrix<f64> {
        if self.normalization > 0.0 {
            &self.power / self.normalization
        } else {
            self.power.clone()
        }
    }
}

/// Welch-averaged one-sided spectra of every column of `signals`.
///
/// Segments overlap by the configured fraction, each windowed before its
/// DFT; one-sided bins are doubled except at DC and Nyquist. Needs at least
/// 256 samples; the segment length is clamped to the signal length.
pub fn power_spectrum(signals: &DMatrix<f64>, cfg: &WelchConfig) -> Result<SpectrumResult> {
    let steps = signals.nrows();
    let channels = signals.ncols();
    if steps < 256 {
        return Err(Error::Precondition(format!(
            "need at least 256 samples, got {steps}"
        )));
    }
    if !(0.0..=0.9).contains(&cfg.overlap) {
        return Err(Error::Domain("overlap must lie in [0, 0.9]".into()));
    }
    let seg = cfg.segment_len.min(steps).max(16);
    let hop = ((seg as f64) * (1.0 - cfg.overlap)).max(1.0) as usize;
    let n_segments = if steps >= seg {
        (steps - seg) / hop + 1
    } else {
        1
    };
    let window = cfg.window_samples(seg);
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let window_sum: f64 = window.iter().sum();

    let bins = seg / 2 + 1;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(seg);
    let mut power = DMatrix::zeros(bins, channels);
    let mut buf = vec![Complex64::new(0.0, 0.0); seg];

    for ch in 0..channels {
        for s in 0..n_segments {
            let start = s * hop;
            for i in 0..seg {
                buf[i] = Complex64::new(signals[(start + i, ch)] * window[i], 0.0);
            }
            fft.process(&mut buf);
            for (k, v) in buf.iter().enumerate().take(bins) {
                power[(k, ch)] += v.norm_sqr();
            }
        }
    }

    let base_scale = match cfg.scaling {
        SpectrumScaling::Density => 1.0 / (cfg.sample_rate_hz * window_power),
        SpectrumScaling::Spectrum => 1.0 / (window_sum * window_sum),
    };
    for ch in 0..channels {
        for k in 0..bins {
            let one_sided = if k == 0 || (seg % 2 == 0 && k == bins - 1) {
                1.0
            } else {
                2.0
            };
            power[(k, ch)] *= base_scale * one_sided / n_segments as f64;
        }
    }

    let df = cfg.sample_rate_hz / seg as f64;
    let freqs = (0..bins).map(|k| k as f64 * df).collect();
    let normalization = power.amax();
    Ok(SpectrumResult {
        freqs,
        power,
        normalization,
        df,
        segments: n_segments,
    })
}

/// Cumulative integrated motion over frequency: nondecreasing by
/// construction since the integrand is a magnitude.
#[derive(Debug, Clone)]
pub struct IbmCurve {
    pub freqs: Vec<f64>,
    pub ibm: Vec<f64>,
}

impl IbmCurve {
    pub fn final_value(&self) -> f64 {
        self.ibm.last().copied().unwrap_or(0.0)
    }
}

/// Cumulative trapezoidal integral of `|magnitude|` over an ascending
/// frequency grid, truncated at `up_to_hz` when given.
///
/// This is the analytic entry point: pass `|S(ω)·d(ω)|` samples directly.
pub fn ibm_from_spectrum(
    freqs: &[f64],
    magnitude: &[f64],
    up_to_hz: Option<f64>,
) -> Result<IbmCurve> {
    if freqs.len() != magnitude.len() {
        return Err(Error::Shape(format!(
            "{} frequencies vs {} magnitudes",
            freqs.len(),
            magnitude.len()
        )));
    }
    if freqs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition(
            "frequency grid must be ascending".into(),
        ));
    }
    let limit = up_to_hz.unwrap_or(f64::INFINITY);
    let mut out_f = Vec::new();
    let mut out_v = Vec::new();
    let mut acc = 0.0;
    for (i, &f) in freqs.iter().enumerate() {
        if f > limit {
            break;
        }
        if i > 0 {
            let g0 = magnitude[i - 1].abs();
            let g1 = magnitude[i].abs();
            acc += 0.5 * (g0 + g1) * (f - freqs[i - 1]);
        }
        out_f.push(f);
        out_v.push(acc);
    }
    Ok(IbmCurve {
        freqs: out_f,
        ibm: out_v,
    })
}

/// Integrated motion of a measured trace column: the integrand is the
/// square root of the Welch power spectral density of the signal.
pub fn ibm_from_trace(
    signal: &DVector<f64>,
    welch: &WelchConfig,
    up_to_hz: Option<f64>,
) -> Result<IbmCurve> {
    let mut cfg = welch.clone();
    cfg.scaling = SpectrumScaling::Density;
    let data = DMatrix::from_column_slice(signal.len(), 1, signal.as_slice());
    let spectrum = power_spectrum(&data, &cfg)?;
    let magnitude: Vec<f64> = (0..spectrum.freqs.len())
        .map(|k| spectrum.power[(k, 0)].sqrt())
        .collect();
    ibm_from_spectrum(&spectrum.freqs, &magnitude, up_to_hz)
}

/// Steady-state complex amplitude of `signal` at angular frequency `omega`,
/// demodulated over whole periods of the window `[start, end)`.
pub fn demodulate_tone(
    signal: &[f64],
    omega: f64,
    tau: f64,
    start: usize,
    end: usize,
) -> Complex64 {
    let period = 2.0 * std::f64::consts::PI / (omega * tau);
    let cycles = ((end - start) as f64 / period).floor().max(1.0);
    let count = (cycles * period).round() as usize;
    let count = count.min(end - start);
    let mut acc = Complex64::new(0.0, 0.0);
    for k in start..start + count {
        acc += signal[k] * Complex64::from_polar(1.0, -omega * tau * k as f64);
    }
    // Complex exponential correlation: amplitude of A·cos(ωkτ+φ) is A/2·e^{iφ}
    // doubled back to A·e^{iφ}.
    2.0 * acc / count as f64
}

/// Result of [`compare_controllers`].
#[derive(Debug, Clone)]
pub struct ControllerComparison {
    pub ibm_present: IbmCurve,
    pub ibm_hypothetical: IbmCurve,
    pub ibm_open_loop: IbmCurve,
    /// Pointwise `present / hypothetical` (1 where both are zero).
    pub ratio_curve: Vec<f64>,
    pub sensor_index: usize,
}

/// Runs three simulations on the identical disturbance — open loop, the
/// first controller, the second controller — and compares the integrated
/// motion at one sensor.
///
/// Each controller runs against its own true-plant variant (the all-fast
/// design replaces every corrector's dynamics); the open loop output equals
/// the disturbance itself.
pub fn compare_controllers(
    plant: &TwoArrayPlant,
    present: &DesignedController,
    hypothetical: &DesignedController,
    disturbance: &DMatrix<f64>,
    sensor_index: usize,
    welch: &WelchConfig,
) -> Result<ControllerComparison> {
    if sensor_index >= plant.total_sensors() {
        return Err(Error::Shape(format!(
            "sensor index {sensor_index} out of range ({} sensors)",
            plant.total_sensors()
        )));
    }
    for (name, ctrl) in [("present", present), ("hypothetical", hypothetical)] {
        if !ctrl.footprint_matches(plant) {
            return Err(Error::Shape(format!(
                "{name} controller was designed for a different plant footprint"
            )));
        }
    }
    let steps = disturbance.nrows();

    let run = |ctrl: &DesignedController| -> Result<DVector<f64>> {
        let sim_plant = ctrl.simulation_plant(plant);
        let mut cfg = SimulationConfig::new(&sim_plant, disturbance, steps);
        cfg.record = RecordFlags {
            y: true,
            u_slow: false,
            u_fast: false,
            model_output: false,
            path_contributions: false,
        };
        let mut runtime = ctrl.runtime();
        let trace = run_closed_loop(&cfg, runtime.as_mut())?;
        Ok(trace.y.column(sensor_index).into_owned())
    };

    let y_present = run(present)?;
    let y_hypothetical = run(hypothetical)?;

    // Open loop: u = 0 means y = d at every sensor.
    let mut zero = ZeroController {
        n_y: plant.total_sensors(),
        n_s: plant.total_slow(),
        n_f: plant.total_fast(),
    };
    let cfg = SimulationConfig::new(plant, disturbance, steps);
    let open_trace = run_closed_loop(&cfg, &mut zero)?;
    let y_open = open_trace.y.column(sensor_index).into_owned();

    let ibm_present = ibm_from_trace(&y_present, welch, None)?;
    let ibm_hypothetical = ibm_from_trace(&y_hypothetical, welch, None)?;
    let ibm_open_loop = ibm_from_trace(&y_open, welch, None)?;
    let ratio_curve = ibm_present
        .ibm
        .iter()
        .zip(&ibm_hypothetical.ibm)
        .map(|(p, h)| {
            if *h == 0.0 {
                if *p == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                p / h
            }
        })
        .collect();

    Ok(ControllerComparison {
        ibm_present,
        ibm_hypothetical,
        ibm_open_loop,
        ratio_curve,
        sensor_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sinusoid(steps: usize, amp: f64, freq_hz: f64, fs: f64) -> DMatrix<f64> {
        DMatrix::from_fn(steps, 1, |k, _| {
            amp * (2.0 * std::f64::consts::PI * freq_hz * k as f64 / fs).sin()
        })
    }

    #[test]
    fn sinusoid_peak_reads_half_amplitude_squared() {
        let fs = 10_000.0;
        let mut cfg = WelchConfig::new(fs);
        cfg.segment_len = 1024;
        // Bin-centered frequency: k·fs/N with k = 96.
        let f0 = 96.0 * fs / 1024.0;
        let amp = 3.0;
        let data = sinusoid(8192, amp, f0, fs);
        let spec = power_spectrum(&data, &cfg).unwrap();
        let peak = spec.power.column(0).iter().cloned().fold(0.0f64, f64::max);
        let want = amp * amp / 2.0;
        assert!(
            (peak - want).abs() / want < 0.01,
            "peak {peak:.4} want {want:.4}"
        );
        // The peak sits at the right bin.
        let peak_idx = (0..spec.freqs.len())
            .max_by(|&a, &b| spec.power[(a, 0)].partial_cmp(&spec.power[(b, 0)]).unwrap())
            .unwrap();
        assert_relative_eq!(spec.freqs[peak_idx], f0, epsilon = spec.df / 2.0);
    }

    #[test]
    fn zero_signal_gives_zero_spectrum() {
        let data = DMatrix::zeros(4096, 2);
        let spec = power_spectrum(&data, &WelchConfig::new(1000.0)).unwrap();
        assert_eq!(spec.power.amax(), 0.0);
    }

    #[test]
    fn density_scaling_satisfies_windowed_parseval() {
        // Summing the one-sided density over bins times the bin width must
        // equal the window-normalized average segment power (exact up to FFT
        // roundoff, checked well below the documented 1e-6).
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let steps = 4096;
        let data = DMatrix::from_fn(steps, 1, |_, _| rng.gen_range(-1.0..1.0));
        let fs = 5_000.0;
        let mut cfg = WelchConfig::new(fs);
        cfg.segment_len = 512;
        cfg.scaling = SpectrumScaling::Density;
        let spec = power_spectrum(&data, &cfg).unwrap();
        let total: f64 = spec.power.column(0).iter().sum::<f64>() * spec.df;

        // Independent accumulation of the windowed segment powers.
        let seg = 512;
        let hop = 256;
        let window = cfg.window_samples(seg);
        let wp: f64 = window.iter().map(|w| w * w).sum();
        let mut acc = 0.0;
        let mut count = 0;
        let mut start = 0;
        while start + seg <= steps {
            let mut p = 0.0;
            for i in 0..seg {
                let v = data[(start + i, 0)] * window[i];
                p += v * v;
            }
            acc += p / wp;
            count += 1;
            start += hop;
        }
        let want = acc / count as f64;
        assert!(
            (total - want).abs() / want <= 1e-6,
            "sum {total:.6e} want {want:.6e}"
        );
    }

    #[test]
    fn white_noise_is_flat_within_chi_squared_band() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let steps = 1 << 15;
        let data = DMatrix::from_fn(steps, 1, |_, _| {
            use rand_distr::{Distribution, StandardNormal};
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        });
        let fs = 1000.0;
        let mut cfg = WelchConfig::new(fs);
        cfg.segment_len = 1024;
        cfg.window = WindowKind::Rectangular;
        cfg.overlap = 0.0;
        cfg.scaling = SpectrumScaling::Density;
        let spec = power_spectrum(&data, &cfg).unwrap();
        // Unit-variance white noise: PSD = 1/fs one-sided... times 2.
        let expected = 2.0 / fs;
        let k = spec.segments as f64;
        let chi = ChiSquared::new(2.0 * k).unwrap();
        let lo = chi.inverse_cdf(0.025) / (2.0 * k);
        let hi = chi.inverse_cdf(0.975) / (2.0 * k);
        // Interior bins only (DC and Nyquist have different statistics).
        let mut inside = 0;
        let mut total = 0;
        for b in 1..spec.freqs.len() - 1 {
            let ratio = spec.power[(b, 0)] / expected;
            if ratio >= lo && ratio <= hi {
                inside += 1;
            }
            total += 1;
        }
        let frac = inside as f64 / total as f64;
        assert!(frac >= 0.90, "only {frac:.3} of bins inside the 95% band");
    }

    #[test]
    fn normalized_peak_is_exactly_one() {
        let data = sinusoid(4096, 1.0, 100.0, 10_000.0);
        let spec = power_spectrum(&data, &WelchConfig::new(10_000.0)).unwrap();
        assert_eq!(spec.normalized().amax(), 1.0);
    }

    #[test]
    fn ibm_of_constant_magnitude_is_linear() {
        // S ≡ 1, |d| ≡ c: the trapezoid rule is exact on a linear integrand,
        // so IBM(f) = c·f along the whole grid.
        let freqs: Vec<f64> = (0..100).map(|i| i as f64 * 2.5).collect();
        let c = 0.7;
        let mags = vec![c; 100];
        let curve = ibm_from_spectrum(&freqs, &mags, None).unwrap();
        for (f, v) in curve.freqs.iter().zip(&curve.ibm) {
            assert_relative_eq!(*v, c * f, epsilon = 1e-12);
        }
    }

    #[test]
    fn ibm_is_monotone_and_zero_for_silence() {
        let zero = DVector::zeros(4096);
        let curve = ibm_from_trace(&zero, &WelchConfig::new(1000.0), None).unwrap();
        assert!(curve.ibm.iter().all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noisy = DVector::from_fn(4096, |_, _| rng.gen_range(-1.0..1.0));
        let curve = ibm_from_trace(&noisy, &WelchConfig::new(1000.0), None).unwrap();
        for w in curve.ibm.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn ibm_rejects_descending_grid() {
        let freqs = vec![0.0, 2.0, 1.0];
        let mags = vec![1.0; 3];
        assert!(ibm_from_spectrum(&freqs, &mags, None).is_err());
    }

    #[test]
    fn comparison_is_symmetric_under_argument_swap() {
        use crate::controller::{
            design_hypothetical, design_mid_ranging, ControllerConfig, DesignedController,
        };
        use crate::plant::{generate_synthetic_ring, RingConfig};
        use crate::simulator::disturbance::{
            synthesize_disturbance, DisturbanceProfile, SpatialBasis,
        };
        let plant = generate_synthetic_ring(&RingConfig::toy()).unwrap();
        let a = DesignedController::MidRanging(
            design_mid_ranging(&plant, &ControllerConfig::default(), None).unwrap(),
        );
        let b = DesignedController::AllFast(design_hypothetical(&plant, 1400.0, 1.0).unwrap());
        let basis = SpatialBasis::from_plant(&plant);
        let d =
            synthesize_disturbance(&basis, 2048, 3, &DisturbanceProfile::default(), plant.tau());
        let mut welch = WelchConfig::new(1.0 / plant.tau());
        welch.segment_len = 512;
        let ab = compare_controllers(&plant, &a, &b, &d, 0, &welch).unwrap();
        let ba = compare_controllers(&plant, &b, &a, &d, 0, &welch).unwrap();
        // Identical simulation conditions: swapping the arguments swaps the
        // outputs bit for bit.
        assert_eq!(ab.ibm_present.ibm, ba.ibm_hypothetical.ibm);
        assert_eq!(ab.ibm_hypothetical.ibm, ba.ibm_present.ibm);
        assert_eq!(ab.ibm_open_loop.ibm, ba.ibm_open_loop.ibm);
    }

    #[test]
    fn demodulation_recovers_amplitude_and_phase() {
        let fs = 10_000.0;
        let tau = 1.0 / fs;
        let omega = 2.0 * std::f64::consts::PI * 430.0;
        let amp = 1.8;
        let phase = 0.6;
        let signal: Vec<f64> = (0..20_000)
            .map(|k| amp * (omega * tau * k as f64 + phase).cos())
            .collect();
        let z = demodulate_tone(&signal, omega, tau, 2_000, 20_000);
        assert!((z.norm() - amp).abs() < 1e-3);
        assert!((z.arg() - phase).abs() < 1e-3);
    }
}
