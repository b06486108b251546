//! Time-dependent variational principle integrator: symmetric second-order
//! single-site sweeps with an initial two-site warm-up phase that grows the
//! bonds out of the product state, Krylov local propagators, and convergence
//! accounting (discarded weight, Fock-tail occupation, norm and energy
//! drift).

use ndarray::{linalg::kron, s, Array1, Array2, Array3, Array4, Order};
use ndarray_linalg::QR;
use num_complex::Complex64 as C64;

use crate::{Error, Result};

use super::krylov::expm_krylov;
use super::mps::{dagger, transfer_step, TfdMps};
use super::{NumericsConfig, SiteKind, TfdMpo};

/// State snapshot at a requested sample time.
#[derive(Debug, Clone)]
pub struct Sample {
    pub time: f64,
    pub state: TfdMps,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub report: ConvergenceReport,
}

/// Post-run convergence accounting. `converged` is false when any truncation
/// or cutoff control was saturated; the specific causes are listed in
/// `warnings`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConvergenceReport {
    pub steps: usize,
    pub max_bond_dim: usize,
    /// Accumulated relative discarded weight over all truncated splits.
    pub total_discarded_weight: f64,
    /// |norm − 1| at the end of the run.
    pub norm_deviation: f64,
    /// |⟨Ĥ⟩(t_end) − ⟨Ĥ⟩(0)|.
    pub energy_drift: f64,
    /// Largest population found in the top two Fock levels of any boson
    /// site at any sample time.
    pub tail_occupation: f64,
    pub max_krylov_error: f64,
    pub warnings: Vec<String>,
    pub converged: bool,
}

#[derive(Default)]
struct Stats {
    steps: usize,
    max_bond: usize,
    discarded: f64,
    max_krylov_err: f64,
    tail: f64,
}

/// Evolve `state` under the MPO, calling `f` at each requested sample time.
/// Sample times must be strictly increasing and non-negative; a leading 0.0
/// samples the initial state.
pub fn tdvp_evolve_map<T>(
    mut state: TfdMps,
    mpo: &TfdMpo,
    cfg: &NumericsConfig,
    times: &[f64],
    mut f: impl FnMut(f64, &TfdMps) -> Result<T>,
) -> Result<(Vec<T>, ConvergenceReport)> {
    cfg.validate()?;
    if state.num_sites() != mpo.num_sites() {
        return Err(Error::Engine(format!(
            "state has {} sites, MPO has {}",
            state.num_sites(),
            mpo.num_sites()
        )));
    }
    if times.is_empty() {
        return Err(Error::InvalidParams("no sample times requested".into()));
    }
    if times[0] < 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams(
            "sample times must be non-negative and strictly increasing".into(),
        ));
    }

    let e0 = state.expect_mpo(mpo)?;
    let mut stats = Stats::default();
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0f64;

    // A product state sits at a rank-deficient point of the MPS manifold
    // where the tangent-space projection is O(1) wrong, so the very first
    // step picks up an O(dt) error. Subdividing that step geometrically
    // confines the damage to the smallest substep.
    let mut ramp_needed = state.max_bond_dim() == 1;

    for &target in times {
        while target - t > 1e-12 * target.max(1.0) {
            let h = cfg.dt.min(target - t);
            if ramp_needed {
                const RAMP_BITS: u32 = 24;
                step(&mut state, mpo, cfg, &mut stats, h / (1u64 << RAMP_BITS) as f64, true)?;
                for k in (1..=RAMP_BITS).rev() {
                    step(&mut state, mpo, cfg, &mut stats, h / (1u64 << k) as f64, true)?;
                }
                ramp_needed = false;
            } else {
                let two_site = stats.steps < cfg.warmup_steps;
                step(&mut state, mpo, cfg, &mut stats, h, two_site)?;
            }
            t += h;
            stats.steps += 1;
            stats.max_bond = stats.max_bond.max(state.max_bond_dim());
        }
        stats.tail = stats.tail.max(tail_occupation(&state, mpo)?);
        out.push(f(t, &state)?);
    }

    let norm_deviation = (state.norm() - 1.0).abs();
    let energy_drift = (state.expect_mpo(mpo)? - e0).norm();
    let mut warnings = Vec::new();
    if stats.discarded > cfg.truncation_budget {
        warnings.push(format!(
            "accumulated discarded weight {:.3e} exceeds budget {:.3e}; increase d_max",
            stats.discarded, cfg.truncation_budget
        ));
    }
    if stats.tail > 1e-6 {
        warnings.push(format!(
            "Fock-tail occupation {:.3e} above 1e-6; increase n_max",
            stats.tail
        ));
    }
    if norm_deviation > 1e-8 {
        warnings.push(format!("norm deviated from 1 by {norm_deviation:.3e}"));
    }
    let converged = warnings.is_empty();
    Ok((
        out,
        ConvergenceReport {
            steps: stats.steps,
            max_bond_dim: stats.max_bond,
            total_discarded_weight: stats.discarded,
            norm_deviation,
            energy_drift,
            tail_occupation: stats.tail,
            max_krylov_error: stats.max_krylov_err,
            warnings,
            converged,
        },
    ))
}

/// Evolve and keep a full state snapshot per sample time.
pub fn tdvp_evolve(
    state: TfdMps,
    mpo: &TfdMpo,
    cfg: &NumericsConfig,
    times: &[f64],
) -> Result<Trajectory> {
    let (samples, report) =
        tdvp_evolve_map(state, mpo, cfg, times, |time, s| {
            Ok(Sample { time, state: s.clone() })
        })?;
    Ok(Trajectory { samples, report })
}

/// Population of the top two Fock levels, maximized over boson sites.
fn tail_occupation(state: &TfdMps, mpo: &TfdMpo) -> Result<f64> {
    let layout = mpo.layout();
    let n_max = layout.n_max();
    let d = n_max + 1;
    let mut proj = Array2::<C64>::zeros((d, d));
    proj[(d - 1, d - 1)] = C64::new(1.0, 0.0);
    if d >= 2 {
        proj[(d - 2, d - 2)] = C64::new(1.0, 0.0);
    }
    let mut worst = 0.0f64;
    for (i, site) in layout.sites().iter().enumerate() {
        if site.kind == SiteKind::Spin {
            continue;
        }
        worst = worst.max(state.expect_local(i, &proj)?.re);
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// environments

type Env = Array3<C64>; // (bond-bra, mpo, bond-ket)

fn trivial_env() -> Env {
    Array3::from_elem((1, 1, 1), C64::new(1.0, 0.0))
}

fn is_zero(op: &ndarray::ArrayView2<C64>) -> bool {
    op.iter().all(|z| z.norm() == 0.0)
}

/// Absorb one site into a left environment.
fn update_left(env: &Env, a: &Array3<C64>, w: &Array4<C64>) -> Env {
    let (wl, wr, _, _) = w.dim();
    let r = a.dim().2;
    let mut out = Array3::<C64>::zeros((r, wr, r));
    for l in 0..wl {
        for rr in 0..wr {
            let op = w.slice(s![l, rr, .., ..]);
            if is_zero(&op) {
                continue;
            }
            let contrib = transfer_step(&env.slice(s![.., l, ..]).to_owned(), a, Some(&op.to_owned()));
            let mut dst = out.slice_mut(s![.., rr, ..]);
            dst += &contrib;
        }
    }
    out
}

/// Mirror of `transfer_step` walking right to left: env (rb, rk) → (lb, lk).
fn transfer_step_right(env: &Array2<C64>, a: &Array3<C64>, op: Option<&Array2<C64>>) -> Array2<C64> {
    let (l, d, r) = a.dim();
    let ket = match op {
        Some(o) => {
            let mut b = Array3::<C64>::zeros((l, d, r));
            for li in 0..l {
                let blk = a.slice(s![li, .., ..]).to_owned();
                b.slice_mut(s![li, .., ..]).assign(&o.dot(&blk));
            }
            b
        }
        None => a.clone(),
    };
    let ketm = ket.to_shape(((l * d, r), Order::RowMajor)).unwrap().to_owned();
    let c = ketm.dot(&env.t()); // (lk·d, rb)
    let cm = c.to_shape(((l, d * env.nrows()), Order::RowMajor)).unwrap().to_owned();
    let abar = a
        .to_shape(((l, d * r), Order::RowMajor))
        .unwrap()
        .mapv(|z| z.conj());
    abar.dot(&cm.t()) // (lb, lk)
}

/// Absorb one site into a right environment.
fn update_right(env: &Env, a: &Array3<C64>, w: &Array4<C64>) -> Env {
    let (wl, wr, _, _) = w.dim();
    let l = a.dim().0;
    let mut out = Array3::<C64>::zeros((l, wl, l));
    for li in 0..wl {
        for rr in 0..wr {
            let op = w.slice(s![li, rr, .., ..]);
            if is_zero(&op) {
                continue;
            }
            let contrib =
                transfer_step_right(&env.slice(s![.., rr, ..]).to_owned(), a, Some(&op.to_owned()));
            let mut dst = out.slice_mut(s![.., li, ..]);
            dst += &contrib;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// effective Hamiltonians

/// Single- or merged-two-site effective Hamiltonian application.
struct Heff<'a> {
    l: &'a Env,
    w: &'a Array4<C64>,
    r: &'a Env,
}

impl Heff<'_> {
    /// Flattened dimensions (bond-left, physical, bond-right) of the domain.
    fn dims(&self) -> (usize, usize, usize) {
        (self.l.dim().2, self.w.dim().3, self.r.dim().2)
    }

    fn apply(&self, v: &Array1<C64>) -> Array1<C64> {
        let (a, d, b) = self.dims();
        let (_, wl, _) = self.l.dim();
        let (_, wr, _) = self.r.dim();
        let lm = self
            .l
            .to_shape(((a * wl, a), Order::RowMajor))
            .unwrap()
            .to_owned();
        let vm = v.to_shape(((a, d * b), Order::RowMajor)).unwrap().to_owned();
        // x1 (abra, wl, dket, bket)
        let x1 = lm.dot(&vm);
        let x1 = x1
            .to_shape(((a, wl, d, b), Order::RowMajor))
            .unwrap()
            .permuted_axes([0, 3, 1, 2])
            .as_standard_layout()
            .to_shape(((a * b, wl * d), Order::RowMajor))
            .unwrap()
            .to_owned();
        // W as (wl·dket, wr·dbra)
        let wm = self
            .w
            .view()
            .permuted_axes([0, 3, 1, 2])
            .as_standard_layout()
            .to_shape(((wl * d, wr * d), Order::RowMajor))
            .unwrap()
            .to_owned();
        // x2 (abra, bket, wr, dbra)
        let x2 = x1.dot(&wm);
        let x2 = x2
            .to_shape(((a, b, wr, d), Order::RowMajor))
            .unwrap()
            .permuted_axes([0, 3, 2, 1])
            .as_standard_layout()
            .to_shape(((a * d, wr * b), Order::RowMajor))
            .unwrap()
            .to_owned();
        // R as (wr·bket, bbra)
        let rm = self
            .r
            .view()
            .permuted_axes([1, 2, 0])
            .as_standard_layout()
            .to_shape(((wr * b, b), Order::RowMajor))
            .unwrap()
            .to_owned();
        let out = x2.dot(&rm); // (abra·dbra, bbra)
        out.to_shape((a * d * b, Order::RowMajor)).unwrap().to_owned()
    }
}

/// Zero-site (bond) effective Hamiltonian application.
struct Keff<'a> {
    l: &'a Env,
    r: &'a Env,
}

impl Keff<'_> {
    fn dims(&self) -> (usize, usize) {
        (self.l.dim().2, self.r.dim().2)
    }

    fn apply(&self, v: &Array1<C64>) -> Array1<C64> {
        let (a, b) = self.dims();
        let (_, w, _) = self.l.dim();
        let lm = self
            .l
            .to_shape(((a * w, a), Order::RowMajor))
            .unwrap()
            .to_owned();
        let vm = v.to_shape(((a, b), Order::RowMajor)).unwrap().to_owned();
        let x = lm.dot(&vm); // (abra·w, bket)
        let x = x.to_shape(((a, w * b), Order::RowMajor)).unwrap().to_owned();
        let rm = self
            .r
            .view()
            .permuted_axes([1, 2, 0])
            .as_standard_layout()
            .to_shape(((w * b, b), Order::RowMajor))
            .unwrap()
            .to_owned();
        x.dot(&rm).to_shape((a * b, Order::RowMajor)).unwrap().to_owned()
    }
}

/// Merge two adjacent MPO tensors into one block acting on the fused
/// physical leg.
fn merge_mpo_pair(wi: &Array4<C64>, wj: &Array4<C64>) -> Array4<C64> {
    let (wl, wm, d1, _) = wi.dim();
    let (_, wr, d2, _) = wj.dim();
    let mut out = Array4::<C64>::zeros((wl, wr, d1 * d2, d1 * d2));
    for l in 0..wl {
        for m in 0..wm {
            let a = wi.slice(s![l, m, .., ..]);
            if is_zero(&a) {
                continue;
            }
            let a = a.to_owned();
            for r in 0..wr {
                let b = wj.slice(s![m, r, .., ..]);
                if is_zero(&b) {
                    continue;
                }
                let block = kron(&a, &b.to_owned());
                let mut dst = out.slice_mut(s![l, r, .., ..]);
                dst += &block;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// sweeps

fn flatten3(a: &Array3<C64>) -> Array1<C64> {
    let (l, d, r) = a.dim();
    a.to_shape((l * d * r, Order::RowMajor)).unwrap().to_owned()
}

fn unflatten3(v: &Array1<C64>, dims: (usize, usize, usize)) -> Array3<C64> {
    v.to_shape((dims, Order::RowMajor)).unwrap().to_owned()
}

/// One symmetric integration step of size `h`: a left-to-right half-sweep
/// followed by its mirror. `two_site` selects the bond-growing warm-up
/// variant.
fn step(
    state: &mut TfdMps,
    mpo: &TfdMpo,
    cfg: &NumericsConfig,
    stats: &mut Stats,
    h: f64,
    two_site: bool,
) -> Result<()> {
    let n = state.num_sites();
    if state.center() != 0 {
        state.canonicalize_to(0);
    }
    // right environments from the incoming (right-orthonormal) tensors
    let mut r_envs = vec![trivial_env(); n];
    for i in (0..n - 1).rev() {
        r_envs[i] = update_right(&r_envs[i + 1], &state.tensors[i + 1], mpo.site_tensor(i + 1));
    }
    let mut l_envs = vec![trivial_env(); n];

    let fwd = C64::new(0.0, -h / 2.0);
    let bwd = C64::new(0.0, h / 2.0);
    let kry = |heff: &Heff, v: &Array1<C64>, coeff: C64, stats: &mut Stats| -> Result<Array1<C64>> {
        let res = expm_krylov(&|x| heff.apply(x), v, coeff, cfg.krylov_dim, cfg.krylov_tol)?;
        stats.max_krylov_err = stats.max_krylov_err.max(res.error_est);
        Ok(res.vector)
    };
    let kry_bond =
        |keff: &Keff, v: &Array1<C64>, coeff: C64, stats: &mut Stats| -> Result<Array1<C64>> {
            let res = expm_krylov(&|x| keff.apply(x), v, coeff, cfg.krylov_dim, cfg.krylov_tol)?;
            stats.max_krylov_err = stats.max_krylov_err.max(res.error_est);
            Ok(res.vector)
        };

    if !two_site {
        // left-to-right half step
        for i in 0..n {
            let heff = Heff { l: &l_envs[i], w: mpo.site_tensor(i), r: &r_envs[i] };
            let dims = state.tensors[i].dim();
            let v = kry(&heff, &flatten3(&state.tensors[i]), fwd, stats)?;
            state.tensors[i] = unflatten3(&v, dims);
            if i + 1 < n {
                let (l, d, r) = state.tensors[i].dim();
                let m = state.tensors[i]
                    .to_shape(((l * d, r), Order::RowMajor))
                    .unwrap()
                    .to_owned();
                let (q, c) = m.qr().map_err(|e| Error::Engine(format!("QR failed: {e}")))?;
                let k = q.ncols();
                state.tensors[i] = q.to_shape(((l, d, k), Order::RowMajor)).unwrap().to_owned();
                l_envs[i + 1] = update_left(&l_envs[i], &state.tensors[i], mpo.site_tensor(i));
                let keff = Keff { l: &l_envs[i + 1], r: &r_envs[i] };
                let cv = kry_bond(
                    &keff,
                    &c.to_shape((k * r, Order::RowMajor)).unwrap().to_owned(),
                    bwd,
                    stats,
                )?;
                let c = cv.to_shape(((k, r), Order::RowMajor)).unwrap().to_owned();
                let (ln, dn, rn) = state.tensors[i + 1].dim();
                let nxt = c.dot(
                    &state.tensors[i + 1]
                        .to_shape(((ln, dn * rn), Order::RowMajor))
                        .unwrap()
                        .to_owned(),
                );
                state.tensors[i + 1] =
                    nxt.to_shape(((k, dn, rn), Order::RowMajor)).unwrap().to_owned();
                state.center = i + 1;
            }
        }
        // right-to-left half step
        let mut r_env = trivial_env();
        for i in (0..n).rev() {
            let heff = Heff { l: &l_envs[i], w: mpo.site_tensor(i), r: &r_env };
            let dims = state.tensors[i].dim();
            let v = kry(&heff, &flatten3(&state.tensors[i]), fwd, stats)?;
            state.tensors[i] = unflatten3(&v, dims);
            if i > 0 {
                let (l, d, r) = state.tensors[i].dim();
                let m = state.tensors[i]
                    .to_shape(((l, d * r), Order::RowMajor))
                    .unwrap()
                    .to_owned();
                let (q, rr) = dagger(&m).qr().map_err(|e| Error::Engine(format!("QR failed: {e}")))?;
                let k = q.ncols();
                state.tensors[i] =
                    dagger(&q).to_shape(((k, d, r), Order::RowMajor)).unwrap().to_owned();
                r_env = update_right(&r_env, &state.tensors[i], mpo.site_tensor(i));
                let c = dagger(&rr); // (l, k)
                let keff = Keff { l: &l_envs[i], r: &r_env };
                let cv = kry_bond(
                    &keff,
                    &c.to_shape((l * k, Order::RowMajor)).unwrap().to_owned(),
                    bwd,
                    stats,
                )?;
                let c = cv.to_shape(((l, k), Order::RowMajor)).unwrap().to_owned();
                let (lp, dp, rp) = state.tensors[i - 1].dim();
                debug_assert_eq!(rp, l);
                let prev = state.tensors[i - 1]
                    .to_shape(((lp * dp, rp), Order::RowMajor))
                    .unwrap()
                    .to_owned()
                    .dot(&c);
                state.tensors[i - 1] =
                    prev.to_shape(((lp, dp, k), Order::RowMajor)).unwrap().to_owned();
                state.center = i - 1;
            }
        }
        return Ok(());
    }

    // two-site warm-up variant
    let merged: Vec<Array4<C64>> = (0..n - 1)
        .map(|i| merge_mpo_pair(mpo.site_tensor(i), mpo.site_tensor(i + 1)))
        .collect();
    // left-to-right
    for i in 0..n - 1 {
        state.center = i;
        let theta = state.merge_with_right();
        let (l, d1, d2, r) = theta.dim();
        let heff = Heff { l: &l_envs[i], w: &merged[i], r: &r_envs[i + 1] };
        let v = kry(
            &heff,
            &theta.to_shape((l * d1 * d2 * r, Order::RowMajor)).unwrap().to_owned(),
            fwd,
            stats,
        )?;
        let theta = v.to_shape(((l, d1, d2, r), Order::RowMajor)).unwrap().to_owned();
        stats.discarded += state.split_two_site(&theta, cfg.d_max, cfg.svd_cutoff, true);
        l_envs[i + 1] = update_left(&l_envs[i], &state.tensors[i], mpo.site_tensor(i));
        if i + 2 < n {
            let heff = Heff { l: &l_envs[i + 1], w: mpo.site_tensor(i + 1), r: &r_envs[i + 1] };
            let dims = state.tensors[i + 1].dim();
            let v = kry(&heff, &flatten3(&state.tensors[i + 1]), bwd, stats)?;
            state.tensors[i + 1] = unflatten3(&v, dims);
        }
    }
    // right-to-left
    let mut r_env = trivial_env();
    for i in (0..n - 1).rev() {
        state.center = i;
        let theta = state.merge_with_right();
        let (l, d1, d2, r) = theta.dim();
        let heff = Heff { l: &l_envs[i], w: &merged[i], r: &r_env };
        let v = kry(
            &heff,
            &theta.to_shape((l * d1 * d2 * r, Order::RowMajor)).unwrap().to_owned(),
            fwd,
            stats,
        )?;
        let theta = v.to_shape(((l, d1, d2, r), Order::RowMajor)).unwrap().to_owned();
        stats.discarded += state.split_two_site(&theta, cfg.d_max, cfg.svd_cutoff, false);
        r_env = update_right(&r_env, &state.tensors[i + 1], mpo.site_tensor(i + 1));
        if i > 0 {
            let heff = Heff { l: &l_envs[i], w: mpo.site_tensor(i), r: &r_env };
            let dims = state.tensors[i].dim();
            let v = kry(&heff, &flatten3(&state.tensors[i]), bwd, stats)?;
            state.tensors[i] = unflatten3(&v, dims);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sigma_z, Beta, HamiltonianTerms, ModelParams, SqueezeThermal};
    use crate::tensornet::{dense::DensePropagator, ChainLayout};
    use approx::assert_relative_eq;

    fn exact_config(dt: f64) -> NumericsConfig {
        NumericsConfig {
            n_max: 3,
            d_max: 64,
            dt,
            krylov_dim: 20,
            svd_cutoff: 0.0,
            warmup_steps: 10,
            truncation_budget: 1e-6,
            krylov_tol: 1e-13,
            drop_fictitious_at_t0: true,
            convention: crate::model::QuadConvention::MainText,
        }
    }

    #[test]
    fn matches_dense_propagation_thermal_squeezed() {
        // M=1 doubled chain with squeezing and finite temperature against
        // exact diagonalization
        let p = ModelParams::resonant(0.2, 1).unwrap();
        let st = SqueezeThermal::new(0.3, std::f64::consts::PI / 2.0, Beta::Finite(0.5)).unwrap();
        let terms = HamiltonianTerms::build(&p, &st);
        let layout = ChainLayout::new(1, 3, true).unwrap();
        let cfg = exact_config(0.01);
        let times: Vec<f64> = (1..=5).map(|k| k as f64 * 0.6).collect();
        let report = crate::tensornet::dense_check(&terms, &layout, &cfg, &times).unwrap();
        assert!(report.max_dev_survival < 1e-7, "dev {}", report.max_dev_survival);
        assert!(report.max_dev_mode_number < 1e-6, "dev {}", report.max_dev_mode_number);
    }

    #[test]
    fn matches_dense_propagation_two_modes() {
        let p = ModelParams::resonant(0.15, 2).unwrap();
        let st = SqueezeThermal::thermal(1.0).unwrap();
        let terms = HamiltonianTerms::build(&p, &st);
        let layout = ChainLayout::new(2, 2, true).unwrap();
        let cfg = NumericsConfig { n_max: 2, ..exact_config(0.004) };
        let times = [1.0, 2.0, 3.0];
        let report = crate::tensornet::dense_check(&terms, &layout, &cfg, &times).unwrap();
        assert!(report.max_dev_survival < 1e-6, "dev {}", report.max_dev_survival);
    }

    #[test]
    fn unitarity_and_energy_conservation() {
        let p = ModelParams::resonant(0.2, 1).unwrap();
        let st = SqueezeThermal::new(0.4, 1.1, Beta::Finite(0.8)).unwrap();
        let terms = HamiltonianTerms::build(&p, &st);
        let layout = ChainLayout::new(1, 24, true).unwrap();
        let mpo = TfdMpo::build(&terms, &layout).unwrap();
        let cfg = NumericsConfig { n_max: 24, ..exact_config(0.01) };
        let state = TfdMps::product_state(&layout);
        let traj = tdvp_evolve(state, &mpo, &cfg, &[2.0]).unwrap();
        assert!(traj.report.norm_deviation < 1e-10, "norm dev {}", traj.report.norm_deviation);
        assert!(traj.report.energy_drift < 1e-8, "energy drift {}", traj.report.energy_drift);
        assert!(traj.report.converged, "warnings: {:?}", traj.report.warnings);
    }

    #[test]
    fn truncation_budget_overflow_is_flagged() {
        // force a tiny bond cap so the warm-up must discard weight
        let p = ModelParams::resonant(0.5, 2).unwrap();
        let st = SqueezeThermal::new(0.8, 0.0, Beta::Finite(0.3)).unwrap();
        let terms = HamiltonianTerms::build(&p, &st);
        let layout = ChainLayout::new(2, 3, true).unwrap();
        let mpo = TfdMpo::build(&terms, &layout).unwrap();
        let cfg = NumericsConfig {
            d_max: 2,
            svd_cutoff: 0.0,
            warmup_steps: 1000,
            ..exact_config(0.05)
        };
        let traj = tdvp_evolve(TfdMps::product_state(&layout), &mpo, &cfg, &[5.0]).unwrap();
        assert!(!traj.report.converged);
        assert!(traj
            .report
            .warnings
            .iter()
            .any(|w| w.contains("discarded weight")));
    }

    #[test]
    fn survival_probability_against_dense_sigma_z() {
        // spot-check the σz route to P_sur used downstream
        let p = ModelParams::resonant(0.3, 1).unwrap();
        let terms = HamiltonianTerms::build(&p, &SqueezeThermal::vacuum());
        let layout = ChainLayout::new(1, 3, false).unwrap();
        let mpo = TfdMpo::build(&terms, &layout).unwrap();
        let prop = DensePropagator::new(&terms, &layout).unwrap();
        let cfg = exact_config(0.005);
        let traj =
            tdvp_evolve(TfdMps::product_state(&layout), &mpo, &cfg, &[0.7, 1.9]).unwrap();
        for samp in &traj.samples {
            let sz = samp.state.expect_local(layout.spin_pos(), &sigma_z()).unwrap().re;
            let psi = prop.state_at(samp.time);
            assert_relative_eq!((sz + 1.0) / 2.0, prop.survival(&psi), epsilon = 1e-8);
        }
    }

    #[test]
    fn single_step_is_reversible() {
        // the LTR/RTL sweeps must be exact adjoints: stepping +h then −h
        // from a full-rank state returns to it at machine precision
        use ndarray::Array3;
        let p = ModelParams::resonant(0.15, 2).unwrap();
        let st = SqueezeThermal::new(0.0, 0.0, Beta::Finite(1.0)).unwrap();
        let terms = HamiltonianTerms::build(&p, &st);
        let layout = ChainLayout::new(2, 2, true).unwrap();
        let mpo = TfdMpo::build(&terms, &layout).unwrap();
        let mut s = 5u64;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let dims: Vec<usize> = layout.sites().iter().map(|x| x.dim).collect();
        let n = dims.len();
        let mut tensors = Vec::new();
        let mut left = 1usize;
        for (i, &d) in dims.iter().enumerate() {
            let right: usize = if i + 1 == n {
                1
            } else {
                (left * d).min(dims[i + 1..].iter().product::<usize>())
            };
            tensors.push(Array3::from_shape_fn((left, d, right), |_| C64::new(next(), next())));
            left = right;
        }
        let mut state = TfdMps { tensors, center: 0 };
        state.canonicalize_to(0);
        state.normalize();
        let v0 = state.to_dense();
        let cfg = NumericsConfig { n_max: 2, krylov_dim: 40, ..exact_config(0.05) };
        for two_site in [false, true] {
            let mut st2 = state.clone();
            let mut stats = Stats::default();
            step(&mut st2, &mpo, &cfg, &mut stats, 0.05, two_site).unwrap();
            step(&mut st2, &mpo, &cfg, &mut stats, -0.05, two_site).unwrap();
            let v1 = st2.to_dense();
            let dev: f64 =
                v0.iter().zip(v1.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(dev < 1e-12, "two_site={two_site}: dev {dev:.3e}");
        }
    }
}
