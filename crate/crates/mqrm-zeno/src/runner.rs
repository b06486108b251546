//! Batch execution behind the CLI: one job per sweep point, run over a
//! rayon pool with a memory bound enforced before launch, results written by
//! a single thread so output is deterministic. Also hosts the validation
//! battery behind the `validate` subcommand.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use crate::config::{RunConfig, TaskKind};
use crate::model::{Beta, HamiltonianTerms, ModelParams, QuadConvention, SqueezeThermal};
use crate::output::{angles_csv, decay_csv, energy_csv, write_pair, Sidecar};
use crate::se_oracle;
use crate::tensornet::dense::hermiticity_defect;
use crate::tensornet::{
    dense_check, dense_hamiltonian, tdvp_evolve, ChainLayout, NumericsConfig, TfdMpo, TfdMps,
};
use crate::zeno::{
    classify_and_crossover, critical_angle_scan, decay_curve, default_phi_grid,
    energy_flow_analysis, tdvp_survival_at, Classification, Engine,
};
use crate::{Error, Result};

/// Upper bound on resident state memory across all concurrent jobs.
const MEMORY_BUDGET_BYTES: usize = 4 << 30;

/// Rough per-job resident bytes: (2M+1) site tensors of D²·(N_max+1)
/// complexes, times a workspace factor for environments and two-site merges.
pub fn estimate_job_bytes(cfg: &RunConfig) -> usize {
    match cfg.task.engine {
        Engine::Analytic | Engine::Se => 1 << 20,
        Engine::Tdvp => {
            let sites = 2 * cfg.model.num_modes + 1;
            let per_site = cfg.numerics.d_max * cfg.numerics.d_max * (cfg.numerics.n_max + 1) * 16;
            sites.saturating_mul(per_site).saturating_mul(8)
        }
    }
}

fn check_memory(points: &[RunConfig], jobs: usize) -> Result<()> {
    let worst = points.iter().map(estimate_job_bytes).max().unwrap_or(0);
    let needed = worst.saturating_mul(jobs.min(points.len()).max(1));
    if needed > MEMORY_BUDGET_BYTES {
        return Err(Error::Config(format!(
            "estimated memory {needed} bytes across {jobs} jobs exceeds the {MEMORY_BUDGET_BYTES}-byte budget; lower --jobs, d_max, or n_max"
        )));
    }
    Ok(())
}

/// One produced artifact: file stem plus its CSV body and sidecar.
struct Artifact {
    stem: String,
    csv: String,
    sidecar: Sidecar,
}

/// Paths of the files a run wrote.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
}

fn point_stem(kind: TaskKind, idx: usize, total: usize) -> String {
    let base = match kind {
        TaskKind::Decay => "decay",
        TaskKind::Angles => "angles",
        TaskKind::Energy => "energy",
    };
    if total == 1 {
        base.to_string()
    } else {
        format!("{base}_{idx:02}")
    }
}

fn run_point(kind: TaskKind, point: &RunConfig, stem: String) -> Result<Artifact> {
    let params = point.model_params()?;
    let st = point.squeeze_thermal()?;
    let numerics = point.numerics_config();
    match kind {
        TaskKind::Decay => {
            let grid = point.tau_grid()?;
            let curve =
                decay_curve(point.task.engine, &params, &st, &grid, Some(&numerics))?;
            let classified = classify_and_crossover(&curve).ok();
            let summary = json!({
                "classification": classified.as_ref().map(|c| match c.classification {
                    Classification::PureQze => json!("pure-qze"),
                    Classification::PureQaze => json!("pure-qaze"),
                    Classification::Crossover { tau_c } =>
                        json!({"crossover": {"tau_c": tau_c}}),
                }),
            });
            Ok(Artifact {
                stem,
                csv: decay_csv(&curve),
                sidecar: Sidecar::new(point)?
                    .with_convergence(curve.report.clone())
                    .with_summary(summary),
            })
        }
        TaskKind::Angles => {
            let grid = default_phi_grid(point.task.phi_points);
            let scan = critical_angle_scan(
                point.task.engine,
                &params,
                &st,
                point.task.tau,
                &grid,
                Some(&numerics),
            )?;
            let summary = match scan.extrema {
                Some(ex) => json!({
                    "phi_max": ex.phi_max,
                    "phi_min": ex.phi_min,
                    "gamma_max": ex.gamma_max,
                    "gamma_min": ex.gamma_min,
                }),
                None => json!({"degenerate": true}),
            };
            Ok(Artifact {
                stem,
                csv: angles_csv(&scan),
                sidecar: Sidecar::new(point)?.with_summary(summary),
            })
        }
        TaskKind::Energy => {
            if point.task.engine != Engine::Tdvp {
                return Err(Error::Engine(
                    "energy-flow runs need per-mode occupation snapshots; set task.engine = \"tdvp\"".into(),
                ));
            }
            let times = point.time_grid()?;
            let terms = HamiltonianTerms::build_with_convention(&params, &st, numerics.convention);
            let layout =
                ChainLayout::for_terms(&terms, numerics.n_max, numerics.drop_fictitious_at_t0)?;
            let mpo = TfdMpo::build(&terms, &layout)?;
            let state = TfdMps::product_state(&layout);
            let traj = tdvp_evolve(state, &mpo, &numerics, &times)?;
            let flow = energy_flow_analysis(&traj, &layout, &terms, &params, &st)?;
            let summary = json!({
                "a1": flow.a1,
                "a2": flow.a2,
                "qaze_enabling": flow.qaze_enabling,
                "backflow": flow.backflow.iter().map(|b| json!({
                    "mode": b.mode, "t_start": b.t_start, "t_end": b.t_end,
                })).collect::<Vec<_>>(),
            });
            Ok(Artifact {
                stem,
                csv: energy_csv(&flow),
                sidecar: Sidecar::new(point)?
                    .with_convergence(Some(traj.report.clone()))
                    .with_summary(summary),
            })
        }
    }
}

/// Run the configured task over every sweep point, `jobs` points at a time,
/// writing all files from this thread once every job has finished.
pub fn run_sweep(cfg: &RunConfig, jobs: usize, out_dir: Option<&Path>) -> Result<RunOutput> {
    cfg.validate()?;
    let points = cfg.sweep_points()?;
    let jobs = jobs.max(1);
    check_memory(&points, jobs)?;
    let kind = cfg.task.kind;
    let total = points.len();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let artifacts: Vec<Artifact> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(idx, point)| run_point(kind, point, point_stem(kind, idx, total)))
            .collect::<Result<Vec<_>>>()
    })?;

    let dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    let mut files = Vec::new();
    for a in &artifacts {
        write_pair(&dir, &a.stem, &a.csv, &a.sidecar)?;
        files.push(dir.join(format!("{}.csv", a.stem)));
        files.push(dir.join(format!("{}.json", a.stem)));
    }
    Ok(RunOutput { files })
}

fn with_kind(cfg: &RunConfig, kind: TaskKind) -> RunConfig {
    let mut cfg = cfg.clone();
    cfg.task.kind = kind;
    cfg
}

pub fn run_decay(cfg: &RunConfig, jobs: usize, out_dir: Option<&Path>) -> Result<RunOutput> {
    run_sweep(&with_kind(cfg, TaskKind::Decay), jobs, out_dir)
}

pub fn run_angles(cfg: &RunConfig, jobs: usize, out_dir: Option<&Path>) -> Result<RunOutput> {
    run_sweep(&with_kind(cfg, TaskKind::Angles), jobs, out_dir)
}

pub fn run_energy(cfg: &RunConfig, jobs: usize, out_dir: Option<&Path>) -> Result<RunOutput> {
    run_sweep(&with_kind(cfg, TaskKind::Energy), jobs, out_dir)
}

/// One line of the validation table.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckResult {
    fn new(name: &'static str, measured: f64, tolerance: f64) -> Self {
        Self { name, measured, tolerance, pass: measured <= tolerance }
    }
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{:<44} {:>12.3e} <= {:>9.1e}  {}\n",
                c.name,
                c.measured,
                c.tolerance,
                if c.pass { "PASS" } else { "FAIL" }
            ));
        }
        out
    }
}

/// The property-test battery: dense/MPO equality, Hermiticity (and the
/// deliberate sign-flip convention being caught), zero-temperature
/// fictitious-block equivalence, integrator step-halving stability,
/// conservation laws, and cross-engine agreement — all on desk-scale
/// instances.
pub fn run_validate() -> Result<ValidationReport> {
    let mut checks = Vec::new();

    let params = ModelParams::resonant(0.1, 2)?;
    let st = SqueezeThermal::new(0.3, std::f64::consts::FRAC_PI_2, Beta::Finite(0.5))?;
    let terms = HamiltonianTerms::build(&params, &st);
    let layout = ChainLayout::new(2, 3, true)?;

    // MPO contraction equals the directly assembled dense Hamiltonian
    let h = dense_hamiltonian(&terms, &layout)?;
    let h_mpo = TfdMpo::build(&terms, &layout)?.contract_dense()?;
    let mpo_dev = (&h - &h_mpo).iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    checks.push(CheckResult::new("MPO contraction vs dense assembly", mpo_dev, 1e-12));

    // Hermiticity of the main-text convention...
    checks.push(CheckResult::new(
        "Hamiltonian Hermiticity (main convention)",
        hermiticity_defect(&h),
        1e-12,
    ));
    // ...and the flipped-sign convention must be caught as non-Hermitian
    let typo = HamiltonianTerms::build_with_convention(&params, &st, QuadConvention::AppendixTypo);
    let typo_defect = hermiticity_defect(&dense_hamiltonian(&typo, &layout)?);
    checks.push(CheckResult::new(
        "flipped-sign convention flagged (defect > 1e-3)",
        if typo_defect > 1e-3 { 0.0 } else { 1.0 },
        0.5,
    ));

    // dropping the decoupled fictitious block at T = 0 changes nothing
    let vac = SqueezeThermal::vacuum();
    let terms0 = HamiltonianTerms::build(&params, &vac);
    // exact bond dimension for this instance is 16, so leave headroom and
    // disable truncation entirely
    let cfg_small = NumericsConfig {
        n_max: 3,
        d_max: 64,
        dt: 0.005,
        svd_cutoff: 0.0,
        krylov_dim: 20,
        krylov_tol: 1e-13,
        ..NumericsConfig::defaults_for_g(params.g)
    };
    let times = [0.5, 1.0];
    let full = {
        let cfg = NumericsConfig { drop_fictitious_at_t0: false, ..cfg_small.clone() };
        let layout = ChainLayout::for_terms(&terms0, cfg.n_max, cfg.drop_fictitious_at_t0)?;
        debug_assert!(layout.has_fictitious());
        tdvp_survival_at(&params, &vac, &cfg, &times)?.0
    };
    let dropped = tdvp_survival_at(&params, &vac, &cfg_small, &times)?.0;
    let drop_dev = full
        .iter()
        .zip(&dropped)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    checks.push(CheckResult::new("T=0 fictitious-block drop equivalence", drop_dev, 1e-8));

    // dense propagation vs the tensor-network engine
    let dc = dense_check(&terms, &layout, &cfg_small, &times)?;
    checks.push(CheckResult::new("TDVP vs dense propagation (survival)", dc.max_dev_survival, 1e-6));
    checks.push(CheckResult::new(
        "TDVP vs dense propagation (mode numbers)",
        dc.max_dev_mode_number,
        1e-6,
    ));

    // conservation along a TDVP run
    let mpo = TfdMpo::build(&terms, &layout)?;
    let traj = tdvp_evolve(TfdMps::product_state(&layout), &mpo, &cfg_small, &times)?;
    checks.push(CheckResult::new("TDVP norm conservation", traj.report.norm_deviation, 1e-8));
    checks.push(CheckResult::new("TDVP energy drift", traj.report.energy_drift, 1e-6));

    // step-halving stability of both integrators
    let p15 = ModelParams::resonant(0.1, 15)?;
    let st_th = SqueezeThermal::thermal(0.5)?;
    let se_dev = se_oracle::halving_deviation(&p15, &st_th, 1.0, se_oracle::default_dt(&p15))?;
    checks.push(CheckResult::new("SE integrator step-halving stability", se_dev, 1e-9));
    let halved = NumericsConfig { dt: cfg_small.dt / 2.0, ..cfg_small.clone() };
    let coarse = tdvp_survival_at(&params, &st, &cfg_small, &times)?.0;
    let fine = tdvp_survival_at(&params, &st, &halved, &times)?.0;
    let tdvp_halving = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    checks.push(CheckResult::new("TDVP step-halving stability", tdvp_halving, 1e-6));

    // cross-engine rate agreement in the weak-coupling regime
    let p_weak = ModelParams::resonant(0.01, 15)?;
    let grid: Vec<f64> = (1..=20).map(|k| 0.05 * k as f64).collect();
    let se = decay_curve(Engine::Se, &p_weak, &vac, &grid, None)?;
    let an = decay_curve(Engine::Analytic, &p_weak, &vac, &grid, None)?;
    let rate_dev = se
        .gamma
        .iter()
        .zip(&an.gamma)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1e-300))
        .fold(0.0f64, f64::max);
    checks.push(CheckResult::new("analytic vs SE rate agreement (relative)", rate_dev, 0.05));

    // convergence warning surfaced at an under-resolved Fock cutoff
    let squeezed_hard = SqueezeThermal::new(0.5, 0.0, Beta::Finite(0.5))?;
    let tiny = NumericsConfig { n_max: 4, dt: 0.01, ..NumericsConfig::defaults_for_g(0.3) };
    let p_strong = ModelParams::resonant(0.3, 1)?;
    let (_, report) = tdvp_survival_at(&p_strong, &squeezed_hard, &tiny, &[1.0])?;
    checks.push(CheckResult::new(
        "tail-occupation warning at n_max=4 (must trigger)",
        if report.tail_occupation > 1e-6 { 0.0 } else { 1.0 },
        0.5,
    ));

    Ok(ValidationReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_run_writes_csv_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_override("model.num_modes=3").unwrap();
        cfg.apply_override("task.tau_max=0.2").unwrap();
        let out = run_decay(&cfg, 1, Some(dir.path())).unwrap();
        assert_eq!(out.files.len(), 2);
        let csv = std::fs::read_to_string(&out.files[0]).unwrap();
        assert!(csv.starts_with("tau,p_sur,gamma,engine\n"));
        assert_eq!(csv.lines().count(), 21);
        let sidecar: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&out.files[1]).unwrap()).unwrap();
        assert_eq!(sidecar["config_hash"], serde_json::json!(cfg.hash().unwrap()));
    }

    #[test]
    fn decay_zero_coupling_gives_zero_rates() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_override("model.g=0.0").unwrap();
        cfg.apply_override("task.tau_max=0.1").unwrap();
        let out = run_decay(&cfg, 1, Some(dir.path())).unwrap();
        let csv = std::fs::read_to_string(&out.files[0]).unwrap();
        for line in csv.lines().skip(1) {
            let gamma: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
            assert_eq!(gamma, 0.0);
        }
    }

    #[test]
    fn sweep_is_deterministic_across_job_counts() {
        let mut cfg = RunConfig::default();
        cfg.apply_override("model.num_modes=3").unwrap();
        cfg.apply_override("task.tau_max=0.1").unwrap();
        cfg.apply_override("task.sweep=[{\"model.g\"=0.01},{\"model.g\"=0.05}]").unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let o1 = run_decay(&cfg, 1, Some(d1.path())).unwrap();
        let o2 = run_decay(&cfg, 4, Some(d2.path())).unwrap();
        assert_eq!(o1.files.len(), 4);
        for (a, b) in o1.files.iter().zip(&o2.files) {
            assert_eq!(
                std::fs::read(a).unwrap(),
                std::fs::read(b).unwrap(),
                "{a:?} differs between job counts"
            );
        }
    }

    #[test]
    fn angles_run_emits_extremum_summary() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_override("model.num_modes=2").unwrap();
        cfg.apply_override("state.r=0.3").unwrap();
        cfg.apply_override("task.phi_points=32").unwrap();
        let out = run_angles(&cfg, 1, Some(dir.path())).unwrap();
        let csv = std::fs::read_to_string(&out.files[0]).unwrap();
        assert!(csv.starts_with("phi,gamma,r,g,tau,beta\n"));
        let sidecar: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&out.files[1]).unwrap()).unwrap();
        assert!(sidecar["summary"]["phi_max"].is_number());
        assert!(sidecar["summary"]["phi_min"].is_number());
    }

    #[test]
    fn angles_run_flat_at_zero_squeezing() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_override("model.num_modes=2").unwrap();
        cfg.apply_override("task.phi_points=16").unwrap();
        let out = run_angles(&cfg, 1, Some(dir.path())).unwrap();
        let csv = std::fs::read_to_string(&out.files[0]).unwrap();
        let gammas: Vec<f64> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert!(gammas.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-14 * w[0].abs()));
        let sidecar: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&out.files[1]).unwrap()).unwrap();
        assert_eq!(sidecar["summary"]["degenerate"], serde_json::json!(true));
    }

    #[test]
    fn energy_run_requires_tdvp_and_reports_identity() {
        let mut cfg = RunConfig::default();
        cfg.apply_override("model.num_modes=1").unwrap();
        cfg.apply_override("numerics.n_max=10").unwrap();
        cfg.apply_override("numerics.dt=0.01").unwrap();
        cfg.apply_override("task.t_max=3.0").unwrap();
        cfg.apply_override("task.t_samples=10").unwrap();
        // non-tdvp engine is rejected
        let dir = tempfile::tempdir().unwrap();
        assert!(run_energy(&cfg, 1, Some(dir.path())).is_err());
        cfg.apply_override("task.engine=tdvp").unwrap();
        let out = run_energy(&cfg, 1, Some(dir.path())).unwrap();
        let csv = std::fs::read_to_string(&out.files[0]).unwrap();
        assert!(csv.starts_with("t,e_tls,e_mode_0\n"));
        let sidecar: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&out.files[1]).unwrap()).unwrap();
        assert!(sidecar["summary"]["a1"].is_number());
        assert!(sidecar["convergence"]["converged"].as_bool().unwrap());
    }

    #[test]
    fn memory_guard_blocks_oversized_jobs() {
        let mut cfg = RunConfig::default();
        cfg.apply_override("task.engine=tdvp").unwrap();
        cfg.apply_override("numerics.d_max=4000").unwrap();
        cfg.apply_override("numerics.n_max=200").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let err = run_decay(&cfg, 8, Some(dir.path())).unwrap_err();
        assert!(err.to_string().contains("budget"), "{err}");
    }

    #[test]
    fn validation_battery_is_green() {
        let report = run_validate().unwrap();
        assert!(report.all_passed(), "\n{}", report.table());
        assert!(report.checks.len() >= 10);
        assert!(report.table().contains("PASS"));
    }
}
