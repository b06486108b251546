//! Closed-form survival-probability decay rates.
//!
//! `gamma_2nd` is the frequency-blind second-order rate, `gamma_th` the
//! thermal rate carrying the sinc² frequency weights, and
//! `gamma_th_squeezed` its squeezing-renormalized extension
//! (g_m² → |K|² g_m², ω_m → A ω_m; the qubit splitting Δ is left
//! unrenormalized). `kernel_f` and `chi_short_time` expose the short-time
//! kernel the thermal rate derives from, so the exponent/rate identity can be
//! asserted directly.

use num_complex::Complex64 as C64;

use crate::model::{ModelParams, SqueezeThermal};
use crate::{Error, Result};

/// A rate evaluation point: model, initial state, and measurement interval.
#[derive(Debug, Clone, Copy)]
pub struct RateQuery {
    pub params: ModelParams,
    pub st: SqueezeThermal,
    pub tau: f64,
}

impl RateQuery {
    pub fn new(params: ModelParams, st: SqueezeThermal, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParams(format!("tau must be > 0, got {tau}")));
        }
        Ok(Self { params, st, tau })
    }

    /// The closed-form rates are derived in the frequent-measurement regime;
    /// outside g·τ < 1 results are still returned but should be flagged.
    pub fn outside_validity(&self) -> bool {
        self.params.g * self.tau >= 1.0
    }
}

/// sin(x)/x with the removable singularity handled by a Taylor branch.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// (x − sin x)/x², series-evaluated below |x| = 0.5 where the direct
/// difference loses digits to cancellation.
fn x_minus_sin_over_x2(x: f64) -> f64 {
    if x.abs() < 0.5 {
        let x2 = x * x;
        x / 6.0
            * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0 * (1.0 - x2 / 110.0))))
    } else {
        (x - x.sin()) / (x * x)
    }
}

/// Short-time kernel F(Δ, ω) of the single-excitation dynamics:
///
/// ```text
/// F = 2 sin²((ω−Δ)t/2) / (t(ω−Δ)²)  −  i ((ω−Δ)t − sin((ω−Δ)t)) / (t(ω−Δ)²)
/// ```
///
/// The resonant limit ω → Δ is t/2 + 0i.
pub fn kernel_f(delta: f64, omega: f64, t: f64) -> C64 {
    let u = (omega - delta) * t;
    let re = t / 2.0 * sinc(u / 2.0).powi(2);
    let im = -t * x_minus_sin_over_x2(u);
    C64::new(re, im)
}

/// Second-order decay rate, independent of Δ and the mode frequencies:
/// τ Σ_m g_m² (cosh²θ_m + sinh²θ_m) = τ Σ_m g_m² coth(βω_m/2).
pub fn gamma_2nd(q: &RateQuery) -> f64 {
    let modes = q.params.mode_table();
    let angles = q.st.thermal_angles(&modes);
    q.tau
        * modes
            .iter()
            .zip(&angles)
            .map(|(m, th)| m.g * m.g * (th.cosh().powi(2) + th.sinh().powi(2)))
            .sum::<f64>()
}

/// Thermal decay rate
/// τ Σ_m g_m² [cosh²θ_m sinc²(τ(ω_m−Δ)/2) + sinh²θ_m sinc²(τ(ω_m+Δ)/2)].
///
/// Derived for an unsqueezed thermal initial state; rejects r ≠ 0.
pub fn gamma_th(q: &RateQuery) -> Result<f64> {
    if q.st.is_squeezed() {
        return Err(Error::Engine(
            "gamma_th is derived for r = 0; use gamma_th_squeezed".into(),
        ));
    }
    Ok(gamma_th_squeezed(q))
}

/// `gamma_th` with the squeezing renormalization g_m² → |K|² g_m² and
/// ω_m → A ω_m. Reduces to `gamma_th` exactly at r = 0 (A = 1, |K|² = 1).
///
/// The thermal angles are those of the initial state and keep the bare ω_m.
pub fn gamma_th_squeezed(q: &RateQuery) -> f64 {
    let sc = q.st.coeffs();
    let ksq = sc.k.norm_sqr();
    let modes = q.params.mode_table();
    let angles = q.st.thermal_angles(&modes);
    let delta = q.params.delta;
    q.tau
        * modes
            .iter()
            .zip(&angles)
            .map(|(m, th)| {
                let g2 = ksq * m.g * m.g;
                let w = sc.a * m.omega;
                let co = th.cosh().powi(2) * sinc(q.tau * (w - delta) / 2.0).powi(2);
                let cr = th.sinh().powi(2) * sinc(q.tau * (w + delta) / 2.0).powi(2);
                g2 * (co + cr)
            })
            .sum::<f64>()
}

/// First-iteration short-time amplitude
/// χ̃(t) = exp{−t Σ_m g_m² [cosh²θ_m F(Δ,ω_m) + sinh²θ_m F(Δ,−ω_m)]};
/// |χ̃|² is the short-time survival probability and −ln|χ̃(τ)|²/τ equals
/// `gamma_th`.
pub fn chi_short_time(params: &ModelParams, st: &SqueezeThermal, t: f64) -> Result<C64> {
    if st.is_squeezed() {
        return Err(Error::Engine("chi_short_time is derived for r = 0".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidParams(format!("t must be >= 0, got {t}")));
    }
    let modes = params.mode_table();
    let angles = st.thermal_angles(&modes);
    let exponent: C64 = modes
        .iter()
        .zip(&angles)
        .map(|(m, th)| {
            let g2 = m.g * m.g;
            kernel_f(params.delta, m.omega, t) * (g2 * th.cosh().powi(2))
                + kernel_f(params.delta, -m.omega, t) * (g2 * th.sinh().powi(2))
        })
        .sum();
    Ok((-C64::new(t, 0.0) * exponent).exp())
}
