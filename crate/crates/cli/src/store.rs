//! On-disk layout of rings, controller designs and traces.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use xdctrl::controller::{
    CellGains, ClosedLoopTarget, ControllerConfig, DesignedController, HypotheticalController,
    MidRangingController,
};
use xdctrl::error::{Error, Result};
use xdctrl::filter::DiscreteFilter;
use xdctrl::io;
use xdctrl::plant::{ModalCell, ModalSystem, RingConfig, TwoArrayPlant};

use crate::manifest::sha256_hex;

pub fn config_hash<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("serializable config"))
}

// ---------------------------------------------------------------------------
// Ring
// ---------------------------------------------------------------------------

pub fn save_ring(dir: &Path, config: &RingConfig, plant: &TwoArrayPlant) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let cfg_path = dir.join("ring.json");
    fs::write(
        &cfg_path,
        serde_json::to_vec_pretty(config).expect("serializable"),
    )?;
    let slow = dir.join("r_slow.bcm");
    let fast = dir.join("r_fast.bcm");
    io::write_bcm(&slow, &plant.r_slow)?;
    io::write_bcm(&fast, &plant.r_fast)?;
    Ok(vec![cfg_path, slow, fast])
}

pub fn load_ring(dir: &Path) -> Result<(RingConfig, TwoArrayPlant)> {
    let cfg_bytes = fs::read(dir.join("ring.json"))?;
    let config: RingConfig = serde_json::from_slice(&cfg_bytes)
        .map_err(|e| Error::CorruptFile(format!("ring.json: {e}")))?;
    let r_slow = io::read_bcm(&dir.join("r_slow.bcm"))?;
    let r_fast = io::read_bcm(&dir.join("r_fast.bcm"))?;
    let plant = TwoArrayPlant::new(
        r_slow,
        r_fast,
        config.slow_dynamics()?,
        config.fast_dynamics()?,
    )?;
    Ok((config, plant))
}

// ---------------------------------------------------------------------------
// Controller
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct DesignFile {
    pub kind: String,
    pub ring_config_sha256: String,
    pub config: ControllerConfig,
    pub n: usize,
    pub n_y: usize,
    pub n_s: usize,
    pub n_f: usize,
    pub target_slow: ClosedLoopTarget,
    pub target_fast: ClosedLoopTarget,
    pub q_slow: DiscreteFilter,
    pub q_fast: DiscreteFilter,
    pub s_slow: Vec<Vec<f64>>,
    pub s_fast: Vec<Vec<f64>>,
    pub cond_x: Vec<f64>,
    /// All-fast regularization weight (comparison design only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

pub fn save_controller(
    dir: &Path,
    ctrl: &DesignedController,
    ring_hash: &str,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    match ctrl {
        DesignedController::MidRanging(c) => {
            let m = &c.modal;
            let design = DesignFile {
                kind: "mid_ranging".into(),
                ring_config_sha256: ring_hash.into(),
                config: c.config.clone(),
                n: m.n,
                n_y: m.n_y,
                n_s: m.n_s,
                n_f: m.n_f,
                target_slow: c.target_slow,
                target_fast: c.target_fast,
                q_slow: c.q_slow.clone(),
                q_fast: c.q_fast.clone(),
                s_slow: m
                    .cells
                    .iter()
                    .map(|c| c.s_slow.iter().copied().collect())
                    .collect(),
                s_fast: m
                    .cells
                    .iter()
                    .map(|c| c.s_fast.iter().copied().collect())
                    .collect(),
                cond_x: m.cells.iter().map(|c| c.cond_x).collect(),
                mu: None,
            };
            let design_path = dir.join("design.json");
            fs::write(
                &design_path,
                serde_json::to_vec_pretty(&design).expect("serializable"),
            )?;
            files.push(design_path);

            let collect = |f: &dyn Fn(&ModalCell) -> DMatrix<num_complex::Complex64>| {
                m.cells.iter().map(f).collect::<Vec<_>>()
            };
            for (stem, blocks) in [
                ("x", collect(&|c: &ModalCell| c.x.clone())),
                ("u_slow", collect(&|c: &ModalCell| c.u_slow.clone())),
                ("u_fast", collect(&|c: &ModalCell| c.u_fast.clone())),
                (
                    "xdag_slow",
                    c.gains.iter().map(|g| g.xdag_slow.clone()).collect(),
                ),
                (
                    "xdag_fast",
                    c.gains.iter().map(|g| g.xdag_fast.clone()).collect(),
                ),
            ] {
                let stem_path = dir.join(stem);
                io::write_complex_blocks(&stem_path, &blocks)?;
                files.push(dir.join(format!("{stem}.re.bcm")));
                files.push(dir.join(format!("{stem}.im.bcm")));
            }
        }
        DesignedController::AllFast(c) => {
            let design = DesignFile {
                kind: "all_fast".into(),
                ring_config_sha256: ring_hash.into(),
                config: ControllerConfig::default(),
                n: c.model.n,
                n_y: c.model.n_y,
                n_s: c.model.n_s,
                n_f: c.model.n_f,
                target_slow: c.target,
                target_fast: c.target,
                q_slow: c.q_filter.clone(),
                q_fast: c.q_filter.clone(),
                s_slow: Vec::new(),
                s_fast: Vec::new(),
                cond_x: Vec::new(),
                mu: Some(c.mu),
            };
            let design_path = dir.join("design.json");
            fs::write(
                &design_path,
                serde_json::to_vec_pretty(&design).expect("serializable"),
            )?;
            files.push(design_path);
            let stem_path = dir.join("xdag");
            io::write_complex_blocks(&stem_path, &c.gains)?;
            files.push(dir.join("xdag.re.bcm"));
            files.push(dir.join("xdag.im.bcm"));
        }
    }
    Ok(files)
}

pub fn load_controller(
    dir: &Path,
    ring_config: &RingConfig,
    plant: &TwoArrayPlant,
) -> Result<DesignedController> {
    let bytes = fs::read(dir.join("design.json"))?;
    let design: DesignFile = serde_json::from_slice(&bytes)
        .map_err(|e| Error::CorruptFile(format!("design.json: {e}")))?;
    let ring_hash = config_hash(ring_config);
    if design.ring_config_sha256 != ring_hash {
        return Err(Error::Precondition(format!(
            "controller was designed for a different ring \
             (expected config hash {}, ring has {ring_hash})",
            design.ring_config_sha256
        )));
    }
    match design.kind.as_str() {
        "mid_ranging" => {
            let x = io::read_complex_blocks(&dir.join("x"))?;
            let u_slow = io::read_complex_blocks(&dir.join("u_slow"))?;
            let u_fast = io::read_complex_blocks(&dir.join("u_fast"))?;
            let xdag_slow = io::read_complex_blocks(&dir.join("xdag_slow"))?;
            let xdag_fast = io::read_complex_blocks(&dir.join("xdag_fast"))?;
            if [&u_slow, &u_fast, &xdag_slow, &xdag_fast]
                .iter()
                .any(|v| v.len() != design.n)
                || x.len() != design.n
            {
                return Err(Error::CorruptFile(
                    "cell count mismatch in gain files".into(),
                ));
            }
            let cells = (0..design.n)
                .map(|i| ModalCell {
                    x: x[i].clone(),
                    u_slow: u_slow[i].clone(),
                    u_fast: u_fast[i].clone(),
                    s_slow: DVector::from_vec(design.s_slow[i].clone()),
                    s_fast: DVector::from_vec(design.s_fast[i].clone()),
                    cond_x: design.cond_x[i],
                })
                .collect();
            let modal = ModalSystem {
                n: design.n,
                n_y: design.n_y,
                n_s: design.n_s,
                n_f: design.n_f,
                cells,
            };
            let gains = (0..design.n)
                .map(|i| CellGains {
                    xdag_slow: xdag_slow[i].clone(),
                    xdag_fast: xdag_fast[i].clone(),
                })
                .collect();
            Ok(DesignedController::MidRanging(MidRangingController {
                config: design.config,
                target_slow: design.target_slow,
                target_fast: design.target_fast,
                q_slow: design.q_slow,
                q_fast: design.q_fast,
                gains,
                modal,
                model: plant.clone(),
            }))
        }
        "all_fast" => {
            let gains = io::read_complex_blocks(&dir.join("xdag"))?;
            Ok(DesignedController::AllFast(HypotheticalController {
                target: design.target_fast,
                q_filter: design.q_slow,
                mu: design.mu.unwrap_or(1.0),
                gains,
                model: plant.all_fast(),
            }))
        }
        other => Err(Error::CorruptFile(format!("unknown design kind {other:?}"))),
    }
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct TraceFile {
    pub steps: usize,
    pub tau: f64,
    pub signals: Vec<String>,
    pub config_sha256: String,
}

pub fn save_trace(
    dir: &Path,
    trace: &xdctrl::simulator::SimulationTrace,
    config_hash: &str,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut signals = Vec::new();
    for (name, data) in [
        ("y", &trace.y),
        ("u_slow", &trace.u_slow),
        ("u_fast", &trace.u_fast),
    ] {
        if data.nrows() == 0 {
            continue;
        }
        let path = dir.join(format!("{name}.bin"));
        io::write_dense_bin(&path, data)?;
        files.push(path);
        signals.push(name.to_string());
    }
    let meta = TraceFile {
        steps: trace.steps,
        tau: trace.tau,
        signals,
        config_sha256: config_hash.to_string(),
    };
    let meta_path = dir.join("trace.json");
    fs::write(
        &meta_path,
        serde_json::to_vec_pretty(&meta).expect("serializable"),
    )?;
    files.push(meta_path);
    Ok(files)
}

pub fn load_trace_signal(dir: &Path, signal: &str) -> Result<(TraceFile, DMatrix<f64>)> {
    let bytes = fs::read(dir.join("trace.json"))?;
    let meta: TraceFile = serde_json::from_slice(&bytes)
        .map_err(|e| Error::CorruptFile(format!("trace.json: {e}")))?;
    if !meta.signals.iter().any(|s| s == signal) {
        return Err(Error::Precondition(format!(
            "signal {signal:?} not recorded; available: {:?}",
            meta.signals
        )));
    }
    let data = io::read_dense_bin(&dir.join(format!("{signal}.bin")))?;
    Ok((meta, data))
}
