//! `xdctrl` — end-to-end pipeline driver: synthetic ring generation,
//! controller design, closed-loop simulation and spectral analysis, with
//! reproducible seeds and hashed run manifests.
//!
//! Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure.

mod manifest;
mod store;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use serde::Serialize;

use manifest::RunManifest;
use xdctrl::analysis::{compare_controllers, ibm_from_trace, power_spectrum, WelchConfig};
use xdctrl::block_circulant::{bench_matvec, BlockCirculantMatrix};
use xdctrl::controller::{
    design_hypothetical, design_mid_ranging, ControllerConfig, DesignedController,
};
use xdctrl::plant::{generate_synthetic_ring, RingConfig};
use xdctrl::simulator::disturbance::{
    synthesize_disturbance, DisturbanceProfile, SpatialBasis, SpatialWeighting, TemporalShape,
};
use xdctrl::simulator::{run_closed_loop, SimulationConfig};

#[derive(Parser)]
#[command(
    name = "xdctrl",
    version,
    about = "Ring decomposition, mid-ranging controller design and closed-loop simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic ring (response matrices + dynamics).
    GenRing {
        /// Ring configuration JSON; defaults apply for missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Design a controller for a generated ring.
    Design {
        #[arg(long)]
        ring: PathBuf,
        /// Controller configuration JSON; defaults apply for missing fields.
        #[arg(long)]
        controller: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Design the all-fast comparison controller instead.
        #[arg(long)]
        hypothetical: bool,
        /// Regularization weight of the all-fast design.
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
    },
    /// Run the closed loop and record the traces.
    Simulate {
        #[arg(long)]
        ring: PathBuf,
        #[arg(long)]
        controller: PathBuf,
        /// Simulation length in samples.
        #[arg(long, default_value_t = 65536)]
        steps: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Disturbance file (.csv or .bin); synthesized when absent.
        #[arg(long)]
        disturbance: Option<PathBuf>,
        /// Corner frequency of the synthetic disturbance low-pass, Hz.
        #[arg(long, default_value_t = 20.0)]
        dist_cutoff_hz: f64,
        /// Broadband floor of the synthetic disturbance.
        #[arg(long, default_value_t = 0.05)]
        dist_floor: f64,
        /// Multiplicative gain error of the internal model.
        #[arg(long, default_value_t = 0.0)]
        model_mismatch: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Post-process traces.
    Analyze {
        #[command(subcommand)]
        mode: AnalyzeMode,
    },
    /// Time the structured matvec against the dense one.
    Bench {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 9)]
        trials: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Optional output directory for the timing report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-hash every file listed in a run manifest.
    Verify {
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Subcommand)]
enum AnalyzeMode {
    /// Welch spectra of a recorded signal, normalized by the group maximum.
    Spectra {
        #[arg(long)]
        trace: PathBuf,
        /// One of: y, u_slow, u_fast.
        #[arg(long, default_value = "y")]
        signal: String,
        #[arg(long, default_value_t = 4096)]
        segment: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrated-motion curve of one sensor.
    Ibm {
        #[arg(long)]
        trace: PathBuf,
        /// Sensor column index (0-based).
        #[arg(long, default_value_t = 3)]
        sensor: usize,
        #[arg(long, default_value_t = 4096)]
        segment: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Present vs all-fast comparison: three simulations on one disturbance.
    Compare {
        #[arg(long)]
        ring: PathBuf,
        #[arg(long)]
        controller: PathBuf,
        #[arg(long)]
        hypothetical: PathBuf,
        #[arg(long, default_value_t = 65536)]
        steps: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        sensor: usize,
        #[arg(long, default_value_t = 8192)]
        segment: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

enum CliError {
    Config(String),
    Numerical(String),
}

impl From<xdctrl::Error> for CliError {
    fn from(e: xdctrl::Error) -> Self {
        use xdctrl::Error::*;
        match e {
            Numerical(_) | Cell { .. } | Diverged { .. } | Structure { .. } => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

fn read_json_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| {
        CliError::Config(format!(
            "{}: line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

fn main() -> ExitCode {
    // XDCTRL_THREADS caps internal parallelism; 0 or unset = automatic.
    if let Ok(value) = std::env::var("XDCTRL_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenRing { config, out, seed } => gen_ring(config, out, seed),
        Command::Design {
            ring,
            controller,
            out,
            hypothetical,
            mu,
        } => design(ring, controller, out, hypothetical, mu),
        Command::Simulate {
            ring,
            controller,
            steps,
            seed,
            disturbance,
            dist_cutoff_hz,
            dist_floor,
            model_mismatch,
            out,
        } => simulate(
            ring,
            controller,
            steps,
            seed,
            disturbance,
            dist_cutoff_hz,
            dist_floor,
            model_mismatch,
            out,
        ),
        Command::Analyze { mode } => analyze(mode),
        Command::Bench {
            n,
            p,
            m,
            trials,
            seed,
            out,
        } => bench(n, p, m, trials, seed, out),
        Command::Verify { manifest } => verify(manifest),
    }
}

fn finalize_manifest(
    mut manifest: RunManifest,
    out: &Path,
    files: &[PathBuf],
) -> Result<(), CliError> {
    for f in files {
        manifest.record(out, f)?;
    }
    manifest.write(out)?;
    Ok(())
}

fn gen_ring(config: Option<PathBuf>, out: PathBuf, seed: Option<u64>) -> Result<(), CliError> {
    let mut cfg: RingConfig = match &config {
        Some(path) => read_json_config(path)?,
        None => RingConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let plant = generate_synthetic_ring(&cfg)?;
    let files = store::save_ring(&out, &cfg, &plant)?;
    let manifest = RunManifest::new(
        "gen-ring",
        &serde_json::to_vec(&cfg).expect("serializable"),
        Some(cfg.seed),
    );
    finalize_manifest(manifest, &out, &files)?;
    println!(
        "ring: {} cells, {} sensors, {} slow + {} fast correctors -> {}",
        cfg.n,
        plant.total_sensors(),
        plant.total_slow(),
        plant.total_fast(),
        out.display()
    );
    Ok(())
}

fn design(
    ring: PathBuf,
    controller: Option<PathBuf>,
    out: PathBuf,
    hypothetical: bool,
    mu: f64,
) -> Result<(), CliError> {
    let (ring_cfg, plant) = store::load_ring(&ring)?;
    let ctrl_cfg: ControllerConfig = match &controller {
        Some(path) => read_json_config(path)?,
        None => ControllerConfig::default(),
    };

    let designed = if hypothetical {
        let c = design_hypothetical(&plant, ctrl_cfg.lambda_f_hz, mu)?;
        println!(
            "all-fast design: {} correctors, bandwidth {} Hz, mu = {}",
            plant.total_slow() + plant.total_fast(),
            ctrl_cfg.lambda_f_hz,
            mu
        );
        DesignedController::AllFast(c)
    } else {
        let c = design_mid_ranging(&plant, &ctrl_cfg, None)?;
        let m = &c.modal;
        let (coupled, slow_only) = m.channel_split();
        println!(
            "mid-ranging design: {} cells x ({coupled} coupled + {slow_only} slow-only channels)",
            m.n
        );
        println!("cell  cond(X)      coupled gain split (s_slow, s_fast)");
        for (i, cell) in m.cells.iter().enumerate() {
            let shown = m.n_f.min(6);
            let mut pairs: Vec<String> = (0..shown)
                .map(|j| format!("({:.4}, {:.4})", cell.s_slow[j], cell.s_fast[j]))
                .collect();
            if m.n_f > shown {
                pairs.push(format!(".. {} more", m.n_f - shown));
            }
            println!("{i:>4}  {:<11.4e}  {}", cell.cond_x, pairs.join(" "));
        }
        DesignedController::MidRanging(c)
    };

    let ring_hash = store::config_hash(&ring_cfg);
    let files = store::save_controller(&out, &designed, &ring_hash)?;
    #[derive(Serialize)]
    struct DesignRunConfig<'a> {
        ring_config: &'a RingConfig,
        controller: &'a ControllerConfig,
        hypothetical: bool,
        mu: f64,
    }
    let manifest = RunManifest::new(
        "design",
        &serde_json::to_vec(&DesignRunConfig {
            ring_config: &ring_cfg,
            controller: &ctrl_cfg,
            hypothetical,
            mu,
        })
        .expect("serializable"),
        None,
    );
    finalize_manifest(manifest, &out, &files)?;
    println!("controller -> {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    ring: PathBuf,
    controller: PathBuf,
    steps: usize,
    seed: u64,
    disturbance: Option<PathBuf>,
    dist_cutoff_hz: f64,
    dist_floor: f64,
    model_mismatch: f64,
    out: PathBuf,
) -> Result<(), CliError> {
    if steps == 0 {
        return Err(CliError::Config("steps must be >= 1".into()));
    }
    let (ring_cfg, plant) = store::load_ring(&ring)?;
    let designed = store::load_controller(&controller, &ring_cfg, &plant)?;
    let sim_plant = designed.simulation_plant(&plant);

    let (d, disturbance_hash) = match &disturbance {
        Some(path) => {
            let data = match path.extension().and_then(|e| e.to_str()) {
                Some("csv") => xdctrl::io::read_dense_csv(path)?,
                _ => xdctrl::io::read_dense_bin(path)?,
            };
            let hash = manifest::sha256_file(path)?;
            (data, Some(hash))
        }
        None => {
            let profile = DisturbanceProfile {
                temporal: TemporalShape::LowPassFloor {
                    cutoff_hz: dist_cutoff_hz,
                    floor: dist_floor,
                },
                spatial: SpatialWeighting::SingularValue,
                amplitude: 1.0,
            };
            let basis = SpatialBasis::from_plant(&sim_plant);
            (
                synthesize_disturbance(&basis, steps, seed, &profile, sim_plant.tau()),
                None,
            )
        }
    };

    let mut cfg = SimulationConfig::new(&sim_plant, &d, steps);
    cfg.model_mismatch = model_mismatch;
    let mut runtime = designed.runtime();
    let trace = run_closed_loop(&cfg, runtime.as_mut())?;

    #[derive(Serialize)]
    struct SimulateRunConfig<'a> {
        ring_config: &'a RingConfig,
        steps: usize,
        seed: u64,
        disturbance_sha256: &'a Option<String>,
        dist_cutoff_hz: f64,
        dist_floor: f64,
        model_mismatch: f64,
    }
    let run_cfg_bytes = serde_json::to_vec(&SimulateRunConfig {
        ring_config: &ring_cfg,
        steps,
        seed,
        disturbance_sha256: &disturbance_hash,
        dist_cutoff_hz,
        dist_floor,
        model_mismatch,
    })
    .expect("serializable");
    let cfg_hash = manifest::sha256_hex(&run_cfg_bytes);
    let files = store::save_trace(&out, &trace, &cfg_hash)?;
    let manifest = RunManifest::new("simulate", &run_cfg_bytes, Some(seed));
    finalize_manifest(manifest, &out, &files)?;
    println!(
        "simulated {} steps ({:.3} s of ring time) -> {}",
        steps,
        steps as f64 * sim_plant.tau(),
        out.display()
    );
    Ok(())
}

fn write_curve_csv(path: &Path, header: &str, columns: &[&[f64]]) -> Result<(), CliError> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{header}").map_err(CliError::from)?;
    let rows = columns.first().map_or(0, |c| c.len());
    for i in 0..rows {
        let fields: Vec<String> = columns.iter().map(|c| format!("{}", c[i])).collect();
        writeln!(w, "{}", fields.join(",")).map_err(CliError::from)?;
    }
    Ok(())
}

fn analyze(mode: AnalyzeMode) -> Result<(), CliError> {
    match mode {
        AnalyzeMode::Spectra {
            trace,
            signal,
            segment,
            out,
        } => {
            let (meta, data) = store::load_trace_signal(&trace, &signal)?;
            let mut welch = WelchConfig::new(1.0 / meta.tau);
            welch.segment_len = segment;
            let spec = power_spectrum(&data, &welch)?;
            fs::create_dir_all(&out)?;
            let normalized = spec.normalized();
            let csv = out.join(format!("spectra_{signal}.csv"));
            {
                use std::io::Write;
                let mut w = std::io::BufWriter::new(fs::File::create(&csv)?);
                let header: Vec<String> = std::iter::once("freq_hz".to_string())
                    .chain((0..normalized.ncols()).map(|c| format!("ch_{c}")))
                    .collect();
                writeln!(w, "{}", header.join(",")).map_err(CliError::from)?;
                for (i, f) in spec.freqs.iter().enumerate() {
                    let mut fields = vec![format!("{f}")];
                    fields
                        .extend((0..normalized.ncols()).map(|c| format!("{}", normalized[(i, c)])));
                    writeln!(w, "{}", fields.join(",")).map_err(CliError::from)?;
                }
            }
            #[derive(Serialize)]
            struct Summary {
                signal: String,
                segments: usize,
                bin_width_hz: f64,
                normalization: f64,
            }
            let summary_path = out.join("spectra_summary.json");
            fs::write(
                &summary_path,
                serde_json::to_vec_pretty(&Summary {
                    signal: signal.clone(),
                    segments: spec.segments,
                    bin_width_hz: spec.df,
                    normalization: spec.normalization,
                })
                .expect("serializable"),
            )?;
            let manifest = RunManifest::new(
                "analyze-spectra",
                &fs::read(trace.join("trace.json"))?,
                None,
            );
            finalize_manifest(manifest, &out, &[csv, summary_path])?;
            println!("spectra ({signal}) -> {}", out.display());
            Ok(())
        }
        AnalyzeMode::Ibm {
            trace,
            sensor,
            segment,
            out,
        } => {
            let (meta, data) = store::load_trace_signal(&trace, "y")?;
            if sensor >= data.ncols() {
                return Err(CliError::Config(format!(
                    "sensor {sensor} out of range ({} sensors)",
                    data.ncols()
                )));
            }
            let mut welch = WelchConfig::new(1.0 / meta.tau);
            welch.segment_len = segment;
            let column = data.column(sensor).into_owned();
            let curve = ibm_from_trace(&column, &welch, None)?;
            fs::create_dir_all(&out)?;
            let csv = out.join("ibm.csv");
            write_curve_csv(&csv, "freq_hz,ibm", &[&curve.freqs, &curve.ibm])?;
            #[derive(Serialize)]
            struct Summary {
                sensor_index: usize,
                ibm_final: f64,
            }
            let summary_path = out.join("ibm_summary.json");
            fs::write(
                &summary_path,
                serde_json::to_vec_pretty(&Summary {
                    sensor_index: sensor,
                    ibm_final: curve.final_value(),
                })
                .expect("serializable"),
            )?;
            let manifest =
                RunManifest::new("analyze-ibm", &fs::read(trace.join("trace.json"))?, None);
            finalize_manifest(manifest, &out, &[csv, summary_path])?;
            println!(
                "integrated motion at sensor {sensor}: {:.6} -> {}",
                curve.final_value(),
                out.display()
            );
            Ok(())
        }
        AnalyzeMode::Compare {
            ring,
            controller,
            hypothetical,
            steps,
            seed,
            sensor,
            segment,
            out,
        } => {
            let (ring_cfg, plant) = store::load_ring(&ring)?;
            let present = store::load_controller(&controller, &ring_cfg, &plant)?;
            let hyp = store::load_controller(&hypothetical, &ring_cfg, &plant)?;
            let basis = SpatialBasis::from_plant(&plant);
            let d = synthesize_disturbance(
                &basis,
                steps,
                seed,
                &DisturbanceProfile::default(),
                plant.tau(),
            );
            let mut welch = WelchConfig::new(1.0 / plant.tau());
            welch.segment_len = segment;
            let cmp = compare_controllers(&plant, &present, &hyp, &d, sensor, &welch)?;
            fs::create_dir_all(&out)?;
            let csv = out.join("ibm_compare.csv");
            write_curve_csv(
                &csv,
                "freq_hz,present,hypothetical,open_loop,ratio",
                &[
                    &cmp.ibm_present.freqs,
                    &cmp.ibm_present.ibm,
                    &cmp.ibm_hypothetical.ibm,
                    &cmp.ibm_open_loop.ibm,
                    &cmp.ratio_curve,
                ],
            )?;
            #[derive(Serialize)]
            struct Summary {
                sensor_index: usize,
                ibm_final: f64,
                ibm_final_hypothetical: f64,
                ibm_final_open_loop: f64,
                ratio: f64,
            }
            let ratio = cmp.ibm_present.final_value() / cmp.ibm_hypothetical.final_value();
            let summary_path = out.join("compare_summary.json");
            fs::write(
                &summary_path,
                serde_json::to_vec_pretty(&Summary {
                    sensor_index: sensor,
                    ibm_final: cmp.ibm_present.final_value(),
                    ibm_final_hypothetical: cmp.ibm_hypothetical.final_value(),
                    ibm_final_open_loop: cmp.ibm_open_loop.final_value(),
                    ratio,
                })
                .expect("serializable"),
            )?;
            #[derive(Serialize)]
            struct CompareRunConfig<'a> {
                ring_config: &'a RingConfig,
                steps: usize,
                seed: u64,
                sensor: usize,
            }
            let manifest = RunManifest::new(
                "analyze-compare",
                &serde_json::to_vec(&CompareRunConfig {
                    ring_config: &ring_cfg,
                    steps,
                    seed,
                    sensor,
                })
                .expect("serializable"),
                Some(seed),
            );
            finalize_manifest(manifest, &out, &[csv, summary_path])?;
            println!(
                "integrated motion at sensor {sensor}: present {:.6}, all-fast {:.6}, \
                 open loop {:.6} (ratio {ratio:.4}) -> {}",
                cmp.ibm_present.final_value(),
                cmp.ibm_hypothetical.final_value(),
                cmp.ibm_open_loop.final_value(),
                out.display()
            );
            Ok(())
        }
    }
}

fn bench(
    n: usize,
    p: usize,
    m: usize,
    trials: usize,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let blocks = (0..n)
        .map(|_| DMatrix::from_fn(p, m, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    let matrix = BlockCirculantMatrix::new(n, p, m, blocks)?;
    let report = bench_matvec(&matrix, trials)?;
    println!(
        "shape: {n} cells of {p}x{m} (dense {}x{})",
        matrix.nrows(),
        matrix.ncols()
    );
    println!("dense matvec:      {:.3e} s", report.t_dense);
    println!("structured matvec: {:.3e} s", report.t_fft);
    println!("  reshape share:   {:.3e} s", report.t_reshape);
    println!("reduction:         {:.1}%", report.reduction * 100.0);
    match report.predicted_ratio {
        Some(ratio) => println!(
            "operation-count model: ratio {:.4} (reduction {:.1}%)",
            ratio,
            (1.0 - ratio) * 100.0
        ),
        None => println!("operation-count model: n/a (cell count not a power of two)"),
    }
    if let Some(out) = out {
        fs::create_dir_all(&out)?;
        #[derive(Serialize)]
        struct BenchReport {
            n: usize,
            p: usize,
            m: usize,
            trials: usize,
            t_dense: f64,
            t_fft: f64,
            t_reshape: f64,
            reduction: f64,
            predicted_ratio: Option<f64>,
        }
        let path = out.join("bench.json");
        fs::write(
            &path,
            serde_json::to_vec_pretty(&BenchReport {
                n,
                p,
                m,
                trials,
                t_dense: report.t_dense,
                t_fft: report.t_fft,
                t_reshape: report.t_reshape,
                reduction: report.reduction,
                predicted_ratio: report.predicted_ratio,
            })
            .expect("serializable"),
        )?;
        #[derive(Serialize)]
        struct BenchRunConfig {
            n: usize,
            p: usize,
            m: usize,
            trials: usize,
            seed: u64,
        }
        let manifest = RunManifest::new(
            "bench",
            &serde_json::to_vec(&BenchRunConfig {
                n,
                p,
                m,
                trials,
                seed,
            })
            .expect("serializable"),
            Some(seed),
        );
        finalize_manifest(manifest, &out, &[path])?;
    }
    Ok(())
}

fn verify(manifest_path: PathBuf) -> Result<(), CliError> {
    let mismatches = manifest::verify_manifest(&manifest_path)?;
    if mismatches.is_empty() {
        println!("verify: all listed files match");
        Ok(())
    } else {
        for m in &mismatches {
            eprintln!("verify: {m}");
        }
        Err(CliError::Numerical(format!(
            "{} file(s) failed verification",
            mismatches.len()
        )))
    }
}
