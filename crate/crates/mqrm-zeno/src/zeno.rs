//! Measurement protocol and physics analysis: survival probability under
//! repeated projective measurement, effective decay rate γ(τ) = −ln P_sur/τ,
//! QZE/QAZE classification with the crossover interval τ_c, per-mode energy
//! flow diagnostics, and critical squeezing-angle scans.
//!
//! All analyses are read-only over immutable curves and trajectories; the
//! engine dispatch (`Engine`) routes curve generation to the closed-form
//! rates, the single-excitation oracle, or the tensor-network evolution.

use serde::{Deserialize, Serialize};

use crate::analytic::{gamma_th_squeezed, RateQuery};
use crate::model::{HamiltonianTerms, ModelParams, SqueezeThermal};
use crate::se_oracle::se_survival_at;
use crate::tensornet::{
    measure, tdvp_evolve_map, ChainLayout, ConvergenceReport, NumericsConfig, ObservableSpec,
    TfdMpo, TfdMps, Trajectory,
};
use crate::{Error, Result};

/// Which computational engine produced a curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Analytic,
    Se,
    Tdvp,
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Engine::Analytic => "analytic",
            Engine::Se => "se",
            Engine::Tdvp => "tdvp",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Engine::Analytic),
            "se" => Ok(Engine::Se),
            "tdvp" => Ok(Engine::Tdvp),
            other => Err(Error::Config(format!(
                "unknown engine '{other}' (expected analytic, se, or tdvp)"
            ))),
        }
    }
}

/// γ(τ) sampled on an increasing τ grid, with the parameters it was
/// generated from.
#[derive(Debug, Clone)]
pub struct DecayCurve {
    pub tau_grid: Vec<f64>,
    /// Survival probabilities, each in (0, 1].
    pub p_sur: Vec<f64>,
    /// γ[i] = −ln(p_sur[i]) / tau_grid[i].
    pub gamma: Vec<f64>,
    pub engine: Engine,
    pub params: ModelParams,
    pub st: SqueezeThermal,
    /// Convergence diagnostics, present for tensor-network curves.
    pub report: Option<ConvergenceReport>,
}

/// Sign of dγ/dτ over the curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Classification {
    /// γ increasing everywhere: measurement always slows the decay further.
    PureQze,
    /// γ decreasing everywhere.
    PureQaze,
    /// Interior maximum: QZE below `tau_c`, QAZE above.
    Crossover { tau_c: f64 },
}

/// Result of `classify_and_crossover`.
#[derive(Debug, Clone)]
pub struct CrossoverReport {
    pub classification: Classification,
    /// dγ/dτ at each grid point (central differences, one-sided at the ends).
    pub dgamma: Vec<f64>,
}

/// Energy bookkeeping along a trajectory, with the short-time fit
/// E_TLS/Δ = 1/2 − a₁(gt) − a₂(gt)².
#[derive(Debug, Clone)]
pub struct EnergyFlow {
    pub times: Vec<f64>,
    /// E_TLS(t) = Δ⟨σz⟩/2.
    pub e_tls: Vec<f64>,
    /// e_modes[i][m] = ω_m ⟨a_m†a_m⟩ at times[i].
    pub e_modes: Vec<Vec<f64>>,
    /// P_sur(t) = (⟨σz⟩+1)/2 = E_TLS/Δ + 1/2.
    pub p_sur: Vec<f64>,
    pub a1: f64,
    pub a2: f64,
    /// a₂ < 0, the condition enabling the anti-Zeno regime.
    pub qaze_enabling: bool,
    pub backflow: Vec<BackflowInterval>,
}

/// A contiguous interval on which mode `mode` returns energy to the rest of
/// the system after having previously absorbed some.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackflowInterval {
    pub mode: usize,
    pub t_start: f64,
    pub t_end: f64,
}

/// Located extrema of an angle scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleExtrema {
    pub phi_max: f64,
    pub phi_min: f64,
    pub gamma_max: f64,
    pub gamma_min: f64,
}

/// γ(φ) over a uniform φ grid on [0, 2π) at fixed (τ, r, g, β).
#[derive(Debug, Clone)]
pub struct AngleScan {
    pub phi_grid: Vec<f64>,
    pub gamma: Vec<f64>,
    pub tau: f64,
    pub params: ModelParams,
    /// Template state whose angle the scan varies.
    pub st: SqueezeThermal,
    pub engine: Engine,
    /// None when the scan is degenerate (flat within round-off, e.g. r = 0).
    pub extrema: Option<AngleExtrema>,
}

/// γ(τ) = −ln P_sur/τ. Survival probabilities within round-off above 1 are
/// clamped; anything further out is rejected.
pub fn effective_decay_rate(p_sur: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParams(format!("tau must be > 0, got {tau}")));
    }
    if !(p_sur > 0.0) {
        return Err(Error::InvalidParams(format!(
            "survival probability must be > 0, got {p_sur}"
        )));
    }
    if p_sur > 1.0 + 1e-9 {
        return Err(Error::InvalidParams(format!(
            "survival probability {p_sur} exceeds 1 beyond round-off"
        )));
    }
    Ok(-p_sur.min(1.0).ln() / tau)
}

/// P_sur(nτ) = P_sur(τ)ⁿ: each projective measurement collapses the survived
/// branch back to the initial state, so the single-interval probability
/// factorizes (valid for gτ < 1).
pub fn survival_n_measurements(p_sur_single: f64, n: u32) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidParams("measurement count must be >= 1".into()));
    }
    if !(0.0..=1.0 + 1e-9).contains(&p_sur_single) {
        return Err(Error::InvalidParams(format!(
            "survival probability must lie in [0, 1], got {p_sur_single}"
        )));
    }
    Ok(p_sur_single.min(1.0).powi(n as i32))
}

/// Default τ grid: Δ(ω₀τ) = 0.01 over (0, 1].
pub fn default_tau_grid() -> Vec<f64> {
    (1..=100).map(|k| k as f64 * 0.01).collect()
}

fn check_tau_grid(tau_grid: &[f64]) -> Result<()> {
    if tau_grid.is_empty() {
        return Err(Error::InvalidParams("empty tau grid".into()));
    }
    if tau_grid[0] <= 0.0 || tau_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams(
            "tau grid must be positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// One survival probability and rate per grid point. The tensor-network
/// engine runs a single evolution to max(τ) and samples it at every grid
/// point; `cfg` defaults to `NumericsConfig::defaults_for_g` when absent.
pub fn decay_curve(
    engine: Engine,
    params: &ModelParams,
    st: &SqueezeThermal,
    tau_grid: &[f64],
    cfg: Option<&NumericsConfig>,
) -> Result<DecayCurve> {
    check_tau_grid(tau_grid)?;
    let (p_sur, report) = match engine {
        Engine::Analytic => {
            let p = tau_grid
                .iter()
                .map(|&tau| {
                    let q = RateQuery::new(*params, *st, tau)?;
                    Ok((-gamma_th_squeezed(&q) * tau).exp())
                })
                .collect::<Result<Vec<f64>>>()?;
            (p, None)
        }
        Engine::Se => (se_survival_at(params, st, tau_grid)?, None),
        Engine::Tdvp => {
            let default_cfg;
            let cfg = match cfg {
                Some(c) => c,
                None => {
                    default_cfg = NumericsConfig::defaults_for_g(params.g);
                    &default_cfg
                }
            };
            let (p, report) = tdvp_survival_at(params, st, cfg, tau_grid)?;
            (p, Some(report))
        }
    };
    let gamma = tau_grid
        .iter()
        .zip(&p_sur)
        .map(|(&tau, &p)| effective_decay_rate(p, tau))
        .collect::<Result<Vec<f64>>>()?;
    let p_sur = p_sur.iter().map(|&p| p.min(1.0)).collect();
    Ok(DecayCurve {
        tau_grid: tau_grid.to_vec(),
        p_sur,
        gamma,
        engine,
        params: *params,
        st: *st,
        report,
    })
}

/// P_sur at the given times from a single tensor-network evolution,
/// via P_sur = (⟨σz⟩ + 1)/2.
pub fn tdvp_survival_at(
    params: &ModelParams,
    st: &SqueezeThermal,
    cfg: &NumericsConfig,
    times: &[f64],
) -> Result<(Vec<f64>, ConvergenceReport)> {
    let terms = HamiltonianTerms::build_with_convention(params, st, cfg.convention);
    let layout = ChainLayout::for_terms(&terms, cfg.n_max, cfg.drop_fictitious_at_t0)?;
    let mpo = TfdMpo::build(&terms, &layout)?;
    let state = TfdMps::product_state(&layout);
    tdvp_evolve_map(state, &mpo, cfg, times, |_, s| {
        let sz = measure(s, &layout, &terms, (st.phi, st.r), ObservableSpec::SigmaZ)?;
        Ok((sz.re + 1.0) / 2.0)
    })
}

/// Per-interval QZE/QAZE classification plus the crossover location, when
/// one exists: dγ/dτ by finite differences, τ_c by bracketing the sign
/// change and fitting a parabola through the three surrounding points.
pub fn classify_and_crossover(curve: &DecayCurve) -> Result<CrossoverReport> {
    let n = curve.tau_grid.len();
    if n < 5 {
        return Err(Error::InvalidParams(format!(
            "crossover classification needs >= 5 grid points, got {n}"
        )));
    }
    let tau = &curve.tau_grid;
    let gam = &curve.gamma;
    let mut dgamma = Vec::with_capacity(n);
    dgamma.push((gam[1] - gam[0]) / (tau[1] - tau[0]));
    for i in 1..n - 1 {
        dgamma.push((gam[i + 1] - gam[i - 1]) / (tau[i + 1] - tau[i - 1]));
    }
    dgamma.push((gam[n - 1] - gam[n - 2]) / (tau[n - 1] - tau[n - 2]));

    // first + → − sign change of the derivative, i.e. an interior maximum
    let bracket = (0..n - 1).find(|&i| dgamma[i] > 0.0 && dgamma[i + 1] <= 0.0);
    let classification = match bracket {
        None => {
            if dgamma[0] >= 0.0 {
                Classification::PureQze
            } else {
                Classification::PureQaze
            }
        }
        Some(i) => {
            // parabola through the three points around the larger of the pair
            let j = if gam[i] >= gam[i + 1] { i } else { i + 1 };
            let j = j.clamp(1, n - 2);
            let xs = [tau[j - 1], tau[j], tau[j + 1]];
            let ys = [gam[j - 1], gam[j], gam[j + 1]];
            let tau_c = match parabola_vertex(&xs, &ys) {
                Some(v) if v >= xs[0] && v <= xs[2] => v,
                _ => tau[j],
            };
            Classification::Crossover { tau_c }
        }
    };
    Ok(CrossoverReport { classification, dgamma })
}

/// Vertex abscissa of the parabola through three points; None when the
/// points are collinear.
fn parabola_vertex(x: &[f64; 3], y: &[f64; 3]) -> Option<f64> {
    let d01 = (y[1] - y[0]) / (x[1] - x[0]);
    let d12 = (y[2] - y[1]) / (x[2] - x[1]);
    let curv = (d12 - d01) / (x[2] - x[0]);
    if curv == 0.0 || !curv.is_finite() {
        return None;
    }
    // vertex of y = y1 + d01(x−x0)(...) in Newton form
    Some((x[0] + x[1]) / 2.0 - d01 / (2.0 * curv))
}

/// Threshold under which dE_m/dt counts as backflow rather than noise.
fn backflow_threshold(params: &ModelParams) -> f64 {
    -1e-6 * params.omega0 * params.g * params.g
}

/// E_TLS(t), per-mode E_m(t), the (a₁, a₂) short-time fit over
/// gt ∈ (0, `fit_window`], and per-mode backflow intervals from a
/// tensor-network trajectory. `fit_window` defaults to 0.3 via
/// [`energy_flow_analysis`].
pub fn energy_flow_analysis_windowed(
    traj: &Trajectory,
    layout: &ChainLayout,
    terms: &HamiltonianTerms,
    params: &ModelParams,
    st: &SqueezeThermal,
    fit_window: f64,
) -> Result<EnergyFlow> {
    if traj.samples.is_empty() {
        return Err(Error::InvalidParams("empty trajectory".into()));
    }
    let num_modes = layout.num_modes();
    let mut times = Vec::with_capacity(traj.samples.len());
    let mut e_tls = Vec::with_capacity(traj.samples.len());
    let mut p_sur = Vec::with_capacity(traj.samples.len());
    let mut e_modes = Vec::with_capacity(traj.samples.len());
    for s in &traj.samples {
        let sz = measure(&s.state, layout, terms, (st.phi, st.r), ObservableSpec::SigmaZ)?.re;
        times.push(s.time);
        e_tls.push(params.delta * sz / 2.0);
        p_sur.push((sz + 1.0) / 2.0);
        let row = (0..num_modes)
            .map(|m| {
                measure(&s.state, layout, terms, (st.phi, st.r), ObservableSpec::ModeEnergy(m))
                    .map(|e| e.re)
            })
            .collect::<Result<Vec<f64>>>()?;
        e_modes.push(row);
    }

    let (a1, a2) = fit_short_time(&times, &e_tls, params, fit_window)?;
    let backflow = detect_backflow(&times, &e_modes, params);
    Ok(EnergyFlow {
        times,
        e_tls,
        e_modes,
        p_sur,
        a1,
        a2,
        qaze_enabling: a2 < 0.0,
        backflow,
    })
}

/// [`energy_flow_analysis_windowed`] with the default window gt ∈ (0, 0.3].
pub fn energy_flow_analysis(
    traj: &Trajectory,
    layout: &ChainLayout,
    terms: &HamiltonianTerms,
    params: &ModelParams,
    st: &SqueezeThermal,
) -> Result<EnergyFlow> {
    energy_flow_analysis_windowed(traj, layout, terms, params, st, 0.3)
}

/// Least-squares (a₁, a₂) in E_TLS/Δ = 1/2 − a₁x − a₂x², x = gt, over
/// x ∈ (0, window]. A decoupled qubit (g = 0) has no window and fits to
/// (0, 0) exactly.
fn fit_short_time(times: &[f64], e_tls: &[f64], params: &ModelParams, window: f64) -> Result<(f64, f64)> {
    if params.g == 0.0 {
        return Ok((0.0, 0.0));
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(e_tls)
        .filter_map(|(&t, &e)| {
            let x = params.g * t;
            if x > 0.0 && x <= window {
                // residual: 1/2 − E_TLS/Δ = a₁x + a₂x²
                Some((x, 0.5 - e / params.delta))
            } else {
                None
            }
        })
        .collect();
    if pts.len() < 5 {
        return Err(Error::InvalidParams(format!(
            "short-time fit window gt in (0, {window}] holds only {} samples (need >= 5)",
            pts.len()
        )));
    }
    let (mut sxx, mut sxxx, mut sxxxx, mut sxy, mut sxxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y) in &pts {
        let x2 = x * x;
        sxx += x2;
        sxxx += x2 * x;
        sxxxx += x2 * x2;
        sxy += x * y;
        sxxy += x2 * y;
    }
    let det = sxx * sxxxx - sxxx * sxxx;
    if det.abs() < 1e-300 {
        return Err(Error::InvalidParams("degenerate short-time fit window".into()));
    }
    let a1 = (sxy * sxxxx - sxxy * sxxx) / det;
    let a2 = (sxx * sxxy - sxxx * sxy) / det;
    Ok((a1, a2))
}

/// Intervals where a mode's energy decreases (below the noise threshold)
/// after it has previously absorbed a comparable amount.
fn detect_backflow(times: &[f64], e_modes: &[Vec<f64>], params: &ModelParams) -> Vec<BackflowInterval> {
    let threshold = backflow_threshold(params);
    let absorbed_floor = threshold.abs();
    let n = times.len();
    let mut out = Vec::new();
    if n < 2 {
        return out;
    }
    let num_modes = e_modes[0].len();
    for m in 0..num_modes {
        let mut peak = 0.0f64;
        let mut open: Option<f64> = None;
        for i in 0..n - 1 {
            peak = peak.max(e_modes[i][m]);
            let rate = (e_modes[i + 1][m] - e_modes[i][m]) / (times[i + 1] - times[i]);
            let flowing_back = rate < threshold && peak > absorbed_floor;
            match (flowing_back, open) {
                (true, None) => open = Some(times[i]),
                (false, Some(t0)) => {
                    out.push(BackflowInterval { mode: m, t_start: t0, t_end: times[i] });
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(t0) = open {
            out.push(BackflowInterval { mode: m, t_start: t0, t_end: times[n - 1] });
        }
    }
    out
}

/// γ(φ) at fixed (τ, r, g, β) over a uniform grid on [0, 2π), with parabolic
/// refinement of the located extrema. A flat scan (r = 0 within round-off)
/// reports degenerate extrema.
pub fn critical_angle_scan(
    engine: Engine,
    params: &ModelParams,
    st_template: &SqueezeThermal,
    tau: f64,
    phi_grid: &[f64],
    cfg: Option<&NumericsConfig>,
) -> Result<AngleScan> {
    check_phi_grid(phi_grid)?;
    if !(tau > 0.0) {
        return Err(Error::InvalidParams(format!("tau must be > 0, got {tau}")));
    }
    let mut gamma = Vec::with_capacity(phi_grid.len());
    for &phi in phi_grid {
        let st = SqueezeThermal::new(st_template.r, phi, st_template.beta)?;
        let g = match engine {
            Engine::Analytic => gamma_th_squeezed(&RateQuery::new(*params, st, tau)?),
            Engine::Se => {
                let p = se_survival_at(params, &st, &[tau])?[0];
                effective_decay_rate(p, tau)?
            }
            Engine::Tdvp => {
                let default_cfg;
                let cfg = match cfg {
                    Some(c) => c,
                    None => {
                        default_cfg = NumericsConfig::defaults_for_g(params.g);
                        &default_cfg
                    }
                };
                let (p, _) = tdvp_survival_at(params, &st, cfg, &[tau])?;
                effective_decay_rate(p[0], tau)?
            }
        };
        gamma.push(g);
    }
    let extrema = locate_extrema(phi_grid, &gamma);
    Ok(AngleScan {
        phi_grid: phi_grid.to_vec(),
        gamma,
        tau,
        params: *params,
        st: *st_template,
        engine,
        extrema,
    })
}

/// Uniform grid of `n` angles covering [0, 2π).
pub fn default_phi_grid(n: usize) -> Vec<f64> {
    let step = 2.0 * std::f64::consts::PI / n as f64;
    (0..n).map(|k| k as f64 * step).collect()
}

fn check_phi_grid(phi_grid: &[f64]) -> Result<()> {
    let n = phi_grid.len();
    if n < 8 {
        return Err(Error::InvalidParams(format!("phi grid needs >= 8 points, got {n}")));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let step = two_pi / n as f64;
    for (k, &phi) in phi_grid.iter().enumerate() {
        if (phi - k as f64 * step).abs() > 1e-9 {
            return Err(Error::InvalidParams(
                "phi grid must be uniform over [0, 2pi) starting at 0".into(),
            ));
        }
    }
    Ok(())
}

/// Grid extrema refined by a parabola through each extremum and its periodic
/// neighbors; None when the scan is flat within round-off.
fn locate_extrema(phi_grid: &[f64], gamma: &[f64]) -> Option<AngleExtrema> {
    let n = phi_grid.len();
    let two_pi = 2.0 * std::f64::consts::PI;
    let (mut k_max, mut k_min) = (0usize, 0usize);
    for k in 1..n {
        if gamma[k] > gamma[k_max] {
            k_max = k;
        }
        if gamma[k] < gamma[k_min] {
            k_min = k;
        }
    }
    let spread = gamma[k_max] - gamma[k_min];
    if spread <= 1e-12 * gamma[k_max].abs().max(1e-300) {
        return None;
    }
    let refine = |k: usize| -> f64 {
        let prev = (k + n - 1) % n;
        let next = (k + 1) % n;
        // unwrap neighbor angles across the periodic boundary
        let x0 = if prev > k { phi_grid[prev] - two_pi } else { phi_grid[prev] };
        let x2 = if next < k { phi_grid[next] + two_pi } else { phi_grid[next] };
        let xs = [x0, phi_grid[k], x2];
        let ys = [gamma[prev], gamma[k], gamma[next]];
        match parabola_vertex(&xs, &ys) {
            Some(v) if v >= xs[0] && v <= xs[2] => v.rem_euclid(two_pi),
            _ => phi_grid[k],
        }
    };
    Some(AngleExtrema {
        phi_max: refine(k_max),
        phi_min: refine(k_min),
        gamma_max: gamma[k_max],
        gamma_min: gamma[k_min],
    })
}
