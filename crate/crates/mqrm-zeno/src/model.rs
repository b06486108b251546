//! Model definition: the multimode Rabi Hamiltonian, the squeezed-thermal
//! initial state, and every derived coefficient of the squeezing-transformed,
//! thermofield-doubled Hamiltonian that the engines consume.
//!
//! The doubled Hamiltonian is
//!
//! ```text
//! Ĥ = (Δ/2)σz
//!   + Σ_m ω_m [ A(a†a − b†b) + (B a†² − B b² + H.c.) ]
//!   + Σ_m g_m (K coshθ_m a† + K sinhθ_m b_m) σx + H.c.
//! ```
//!
//! with A = cosh²r + sinh²r, B = e^{iφ} cosh r sinh r, K = cosh r + e^{iφ} sinh r
//! and thermal angles θ_m = arctanh(e^{−βω_m/2}). All quantities are in units
//! of ω₀ with k_B = 1.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Inverse temperature, with zero temperature as a first-class value so that
/// θ_m = 0 holds exactly rather than up to a large-float cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beta {
    Finite(f64),
    Infinite,
}

impl Beta {
    pub fn is_zero_temperature(self) -> bool {
        matches!(self, Beta::Infinite)
    }

    /// Thermal Bogoliubov angle θ = arctanh(e^{−βω/2}) for a mode of
    /// frequency `omega`.
    pub fn thermal_angle(self, omega: f64) -> f64 {
        match self {
            Beta::Infinite => 0.0,
            Beta::Finite(beta) => (-beta * omega / 2.0).exp().atanh(),
        }
    }
}

/// One mode of the harmonic ladder: ω_m = (m+1)ω₀, g_m = √(m+1) g.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub omega: f64,
    pub g: f64,
}

/// Physical model definition: qubit splitting, base mode frequency, base
/// coupling, and the number of modes in the ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub delta: f64,
    pub omega0: f64,
    pub g: f64,
    pub num_modes: usize,
}

impl ModelParams {
    pub fn new(delta: f64, omega0: f64, g: f64, num_modes: usize) -> Result<Self> {
        if !(omega0 > 0.0) {
            return Err(Error::InvalidParams(format!("omega0 must be > 0, got {omega0}")));
        }
        if !(g >= 0.0) {
            return Err(Error::InvalidParams(format!("g must be >= 0, got {g}")));
        }
        if num_modes < 1 {
            return Err(Error::InvalidParams("num_modes must be >= 1".into()));
        }
        if !delta.is_finite() {
            return Err(Error::InvalidParams(format!("delta must be finite, got {delta}")));
        }
        Ok(Self { delta, omega0, g, num_modes })
    }

    /// Resonant model at Δ = ω₀ = 1 with the given coupling and mode count.
    pub fn resonant(g: f64, num_modes: usize) -> Result<Self> {
        Self::new(1.0, 1.0, g, num_modes)
    }

    /// The per-mode table (ω_m, g_m) for m = 0..M−1.
    pub fn mode_table(&self) -> Vec<Mode> {
        (0..self.num_modes)
            .map(|m| Mode {
                omega: (m as f64 + 1.0) * self.omega0,
                g: (m as f64 + 1.0).sqrt() * self.g,
            })
            .collect()
    }
}

/// Derived coefficients of the squeezing transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezeCoeffs {
    /// A = cosh²r + sinh²r = cosh 2r; real, ≥ 1.
    pub a: f64,
    /// B = e^{iφ} cosh r sinh r; |B| = sinh(2r)/2.
    pub b: C64,
    /// K = cosh r + e^{iφ} sinh r; |K|² = cosh 2r + cos φ sinh 2r.
    pub k: C64,
}

/// Squeezing and temperature of the initial mode register.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezeThermal {
    pub r: f64,
    pub phi: f64,
    pub beta: Beta,
}

impl SqueezeThermal {
    pub fn new(r: f64, phi: f64, beta: Beta) -> Result<Self> {
        if !(r >= 0.0) {
            return Err(Error::InvalidParams(format!("squeezing amplitude r must be >= 0, got {r}")));
        }
        if !phi.is_finite() {
            return Err(Error::InvalidParams("squeezing angle must be finite".into()));
        }
        if let Beta::Finite(beta) = beta {
            if !(beta > 0.0) {
                return Err(Error::InvalidParams(format!("beta must be > 0 or infinite, got {beta}")));
            }
        }
        Ok(Self { r, phi, beta })
    }

    /// Unsqueezed state at zero temperature.
    pub fn vacuum() -> Self {
        Self { r: 0.0, phi: 0.0, beta: Beta::Infinite }
    }

    /// Unsqueezed thermal state.
    pub fn thermal(beta: f64) -> Result<Self> {
        Self::new(0.0, 0.0, Beta::Finite(beta))
    }

    pub fn is_squeezed(&self) -> bool {
        self.r != 0.0
    }

    pub fn coeffs(&self) -> SqueezeCoeffs {
        let (ch, sh) = (self.r.cosh(), self.r.sinh());
        let phase = C64::from_polar(1.0, self.phi);
        SqueezeCoeffs {
            a: ch * ch + sh * sh,
            b: phase * ch * sh,
            k: C64::new(ch, 0.0) + phase * sh,
        }
    }

    /// Thermal angles θ_m for the given mode table; all zero at β = ∞.
    pub fn thermal_angles(&self, modes: &[Mode]) -> Vec<f64> {
        modes.iter().map(|m| self.beta.thermal_angle(m.omega)).collect()
    }
}

/// Sign/factor convention for the quadratic (B) terms, selectable so the two
/// conventions printed in the source material can be compared. `MainText` is
/// the Hermitian one and the default; `AppendixTypo` reproduces the
/// non-Hermitian b-site variant and exists only so the validation battery can
/// demonstrate that the Hermiticity check catches it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum QuadConvention {
    #[default]
    MainText,
    AppendixTypo,
}

/// Per-mode coefficients of the doubled Hamiltonian, engine-agnostic.
///
/// Operator dictionary (H.c. partners carry the conjugate coefficient):
/// `a_number`·a†a, `b_number`·b†b, `a_quad`·a†², `b_quad`·b²,
/// `b_quad_dag`·b†², `a_coupling`·a†σx, `b_coupling`·b σx.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeTerms {
    pub omega: f64,
    pub g: f64,
    pub theta: f64,
    pub a_number: f64,
    pub b_number: f64,
    pub a_quad: C64,
    pub b_quad: C64,
    pub b_quad_dag: C64,
    pub a_coupling: C64,
    pub b_coupling: C64,
}

/// Symbolic term list of the doubled Hamiltonian Ĥ, consumed by both the
/// single-excitation oracle and the tensor-network engine.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianTerms {
    /// Coefficient of σz (i.e. Δ/2).
    pub spin_z: f64,
    pub modes: Vec<ModeTerms>,
    pub convention: QuadConvention,
}

impl HamiltonianTerms {
    pub fn build(params: &ModelParams, st: &SqueezeThermal) -> Self {
        Self::build_with_convention(params, st, QuadConvention::MainText)
    }

    pub fn build_with_convention(
        params: &ModelParams,
        st: &SqueezeThermal,
        convention: QuadConvention,
    ) -> Self {
        let sc = st.coeffs();
        let modes = params
            .mode_table()
            .into_iter()
            .map(|m| {
                let theta = st.beta.thermal_angle(m.omega);
                let b_quad = -sc.b * m.omega;
                let b_quad_dag = match convention {
                    QuadConvention::MainText => -sc.b.conj() * m.omega,
                    // b†² coefficient with the sign flipped, non-Hermitian
                    // for complex B
                    QuadConvention::AppendixTypo => sc.b.conj() * m.omega,
                };
                ModeTerms {
                    omega: m.omega,
                    g: m.g,
                    theta,
                    a_number: sc.a * m.omega,
                    b_number: -sc.a * m.omega,
                    a_quad: sc.b * m.omega,
                    b_quad,
                    b_quad_dag,
                    a_coupling: sc.k * theta.cosh() * m.g,
                    b_coupling: sc.k * theta.sinh() * m.g,
                }
            })
            .collect();
        Self { spin_z: params.delta / 2.0, modes, convention }
    }

    /// True when every fictitious-mode term vanishes (zero temperature), in
    /// which case engines may drop the b-sites entirely.
    pub fn fictitious_decoupled(&self) -> bool {
        self.modes.iter().all(|m| {
            m.theta == 0.0 && m.b_quad.norm() == 0.0 && m.b_quad_dag.norm() == 0.0
        })
    }
}

/// Kind of chain site an operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteKind {
    Spin,
    PhysicalBoson,
    FictitiousBoson,
}

/// Symbolic tag for a local operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpLabel {
    SigmaX,
    SigmaZ,
    SigmaPlus,
    SigmaMinus,
    Annihilate,
    Create,
    Number,
    Identity,
}

/// A dense local operator in a site's truncated basis.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOperator {
    pub site_kind: SiteKind,
    pub label: OpLabel,
    pub matrix: Array2<C64>,
}

impl LocalOperator {
    /// Spin-site operator (2×2). `Annihilate`/`Create`/`Number` are not
    /// spin operators and are rejected.
    pub fn spin(label: OpLabel) -> Result<Self> {
        let matrix = match label {
            OpLabel::SigmaX => sigma_x(),
            OpLabel::SigmaZ => sigma_z(),
            OpLabel::SigmaPlus => sigma_plus(),
            OpLabel::SigmaMinus => sigma_minus(),
            OpLabel::Identity => identity(2),
            _ => return Err(Error::InvalidParams(format!("{label:?} is not a spin operator"))),
        };
        Ok(Self { site_kind: SiteKind::Spin, label, matrix })
    }

    /// Boson-site operator in the Fock basis |0..n_max⟩.
    pub fn boson(site_kind: SiteKind, label: OpLabel, n_max: usize) -> Result<Self> {
        if site_kind == SiteKind::Spin {
            return Err(Error::InvalidParams("boson operator on a spin site".into()));
        }
        let matrix = match label {
            OpLabel::Annihilate => annihilate(n_max),
            OpLabel::Create => create(n_max),
            OpLabel::Number => number(n_max),
            OpLabel::Identity => identity(n_max + 1),
            _ => return Err(Error::InvalidParams(format!("{label:?} is not a boson operator"))),
        };
        Ok(Self { site_kind, label, matrix })
    }
}

pub fn identity(dim: usize) -> Array2<C64> {
    Array2::from_diag_elem(dim, C64::new(1.0, 0.0))
}

/// σz = diag(1, −1); basis ordering |↑⟩, |↓⟩.
pub fn sigma_z() -> Array2<C64> {
    let mut m = Array2::zeros((2, 2));
    m[(0, 0)] = C64::new(1.0, 0.0);
    m[(1, 1)] = C64::new(-1.0, 0.0);
    m
}

pub fn sigma_x() -> Array2<C64> {
    let mut m = Array2::zeros((2, 2));
    m[(0, 1)] = C64::new(1.0, 0.0);
    m[(1, 0)] = C64::new(1.0, 0.0);
    m
}

/// σ₊ = |↑⟩⟨↓|.
pub fn sigma_plus() -> Array2<C64> {
    let mut m = Array2::zeros((2, 2));
    m[(0, 1)] = C64::new(1.0, 0.0);
    m
}

/// σ₋ = |↓⟩⟨↑|.
pub fn sigma_minus() -> Array2<C64> {
    let mut m = Array2::zeros((2, 2));
    m[(1, 0)] = C64::new(1.0, 0.0);
    m
}

/// Annihilation operator truncated to |0..n_max⟩: a|n⟩ = √n |n−1⟩. The row
/// that would create |n_max+1⟩ is dropped.
pub fn annihilate(n_max: usize) -> Array2<C64> {
    let d = n_max + 1;
    let mut m = Array2::zeros((d, d));
    for n in 1..d {
        m[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    m
}

pub fn create(n_max: usize) -> Array2<C64> {
    annihilate(n_max).t().mapv(|z| z.conj())
}

pub fn number(n_max: usize) -> Array2<C64> {
    let d = n_max + 1;
    Array2::from_shape_fn((d, d), |(i, j)| {
        if i == j { C64::new(i as f64, 0.0) } else { C64::new(0.0, 0.0) }
    })
}
