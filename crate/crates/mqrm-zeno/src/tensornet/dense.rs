//! Dense brute-force oracle: assembles the doubled Hamiltonian as an explicit
//! matrix, propagates by exact eigendecomposition, and compares observables
//! against the tensor-network engine.

use ndarray::{linalg::kron, Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;

use crate::model::{
    annihilate, create, identity, number, sigma_x, sigma_z, HamiltonianTerms,
};
use crate::{Error, Result};

use super::{ChainLayout, NumericsConfig};

/// Hard cap on the dense Hilbert dimension.
pub const DENSE_DIM_GUARD: usize = 1 << 16;

/// Embed a local operator at `site` into the full product space.
pub fn embed(layout: &ChainLayout, site: usize, op: &Array2<C64>) -> Array2<C64> {
    let mut full = Array2::from_diag_elem(1, C64::new(1.0, 0.0));
    for (i, s) in layout.sites().iter().enumerate() {
        let local = if i == site { op.clone() } else { identity(s.dim) };
        full = kron(&full, &local);
    }
    full
}

/// Embed a product of local operators on distinct sites.
pub fn embed_product(layout: &ChainLayout, ops: &[(usize, &Array2<C64>)]) -> Array2<C64> {
    let mut full = Array2::from_diag_elem(1, C64::new(1.0, 0.0));
    for (i, s) in layout.sites().iter().enumerate() {
        let local = ops
            .iter()
            .find(|(j, _)| *j == i)
            .map(|(_, op)| (*op).clone())
            .unwrap_or_else(|| identity(s.dim));
        full = kron(&full, &local);
    }
    full
}

/// Assemble the dense doubled Hamiltonian from the symbolic term list.
pub fn dense_hamiltonian(terms: &HamiltonianTerms, layout: &ChainLayout) -> Result<Array2<C64>> {
    let dim = layout
        .total_dim()
        .filter(|&d| d <= DENSE_DIM_GUARD)
        .ok_or_else(|| {
            Error::DimensionGuard(format!(
                "dense assembly limited to dimension {DENSE_DIM_GUARD}"
            ))
        })?;
    let n_max = layout.n_max();
    let a = annihilate(n_max);
    let adag = create(n_max);
    let num = number(n_max);
    let a2 = a.dot(&a);
    let adag2 = adag.dot(&adag);
    let sx = sigma_x();

    let mut h = Array2::<C64>::zeros((dim, dim));
    h += &(&embed(layout, layout.spin_pos(), &sigma_z()) * C64::new(terms.spin_z, 0.0));

    for (m, t) in terms.modes.iter().enumerate() {
        let asite = layout.physical_site(m);
        h += &(&embed(layout, asite, &num) * C64::new(t.a_number, 0.0));
        if t.a_quad.norm() > 0.0 {
            h += &(&embed(layout, asite, &adag2) * t.a_quad);
            h += &(&embed(layout, asite, &a2) * t.a_quad.conj());
        }
        // coupling: (a_coupling a† + conj a) σx
        if t.a_coupling.norm() > 0.0 {
            let g_a = &adag * t.a_coupling + &a * t.a_coupling.conj();
            h += &embed_product(layout, &[(asite, &g_a), (layout.spin_pos(), &sx)]);
        }
        if let Some(bsite) = layout.fictitious_site(m) {
            h += &(&embed(layout, bsite, &num) * C64::new(t.b_number, 0.0));
            if t.b_quad.norm() > 0.0 || t.b_quad_dag.norm() > 0.0 {
                h += &(&embed(layout, bsite, &a2) * t.b_quad);
                h += &(&embed(layout, bsite, &adag2) * t.b_quad_dag);
            }
            if t.b_coupling.norm() > 0.0 {
                let g_b = &a * t.b_coupling + &adag * t.b_coupling.conj();
                h += &embed_product(layout, &[(bsite, &g_b), (layout.spin_pos(), &sx)]);
            }
        } else if t.theta != 0.0 || t.b_quad.norm() > 0.0 {
            return Err(Error::Engine(
                "layout drops fictitious modes but the Hamiltonian couples them".into(),
            ));
        }
    }
    Ok(h)
}

/// Max-norm of H − H†.
pub fn hermiticity_defect(h: &Array2<C64>) -> f64 {
    let mut worst = 0.0f64;
    for ((i, j), v) in h.indexed_iter() {
        worst = worst.max((v - h[(j, i)].conj()).norm());
    }
    worst
}

/// Exact propagator ψ(t) = U e^{−iΛt} U† ψ(0) from one eigendecomposition.
pub struct DensePropagator {
    layout: ChainLayout,
    evals: Array1<f64>,
    evecs: Array2<C64>,
    psi0_eig: Array1<C64>,
}

impl DensePropagator {
    /// Diagonalize the dense Hamiltonian; the initial state is the doubled
    /// vacuum with the spin up.
    pub fn new(terms: &HamiltonianTerms, layout: &ChainLayout) -> Result<Self> {
        let h = dense_hamiltonian(terms, layout)?;
        let defect = hermiticity_defect(&h);
        if defect > 1e-12 {
            return Err(Error::Engine(format!(
                "dense Hamiltonian is not Hermitian (defect {defect:.3e}); check the sign convention"
            )));
        }
        let (evals, evecs) = h
            .eigh(UPLO::Lower)
            .map_err(|e| Error::Engine(format!("eigendecomposition failed: {e}")))?;
        // zheev here diagonalizes the transpose (row-/column-major mismatch):
        // the eigenvectors of H are the conjugated columns
        let evecs = evecs.mapv(|z| z.conj());
        let dim = evecs.nrows();
        let mut psi0 = Array1::<C64>::zeros(dim);
        psi0[0] = C64::new(1.0, 0.0); // all sites in their first basis state
        let psi0_eig = evecs.t().mapv(|z| z.conj()).dot(&psi0);
        Ok(Self { layout: layout.clone(), evals, evecs, psi0_eig })
    }

    pub fn state_at(&self, t: f64) -> Array1<C64> {
        let phases: Array1<C64> = self
            .evals
            .iter()
            .zip(self.psi0_eig.iter())
            .map(|(&e, &c)| c * C64::from_polar(1.0, -e * t))
            .collect();
        self.evecs.dot(&phases)
    }

    pub fn expect(&self, psi: &Array1<C64>, op: &Array2<C64>) -> C64 {
        let opsi = op.dot(psi);
        psi.iter().zip(opsi.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    /// P_sur(t) = ⟨|↑⟩⟨↑| ⊗ 1⟩.
    pub fn survival(&self, psi: &Array1<C64>) -> f64 {
        let spin = self.layout.spin_pos();
        // stride of the spin index in the row-major product basis
        let stride: usize =
            self.layout.sites()[spin + 1..].iter().map(|s| s.dim).product();
        let period = 2 * stride;
        psi.iter()
            .enumerate()
            .filter(|(i, _)| (i % period) / stride == 0)
            .map(|(_, z)| z.norm_sqr())
            .sum()
    }

    pub fn sigma_z(&self, psi: &Array1<C64>) -> f64 {
        let op = embed(&self.layout, self.layout.spin_pos(), &sigma_z());
        self.expect(psi, &op).re
    }

    pub fn mode_number(&self, psi: &Array1<C64>, m: usize) -> f64 {
        let op = embed(&self.layout, self.layout.physical_site(m), &number(self.layout.n_max()));
        self.expect(psi, &op).re
    }

    pub fn layout(&self) -> &ChainLayout {
        &self.layout
    }
}

/// Maximum deviations of the TDVP evolution from the dense propagation over
/// a sampled time window.
#[derive(Debug, Clone)]
pub struct DenseCheckReport {
    pub times: Vec<f64>,
    pub max_dev_survival: f64,
    pub max_dev_sigma_z: f64,
    pub max_dev_mode_number: f64,
}

/// Brute-force check of the TDVP engine on a small instance: propagate both
/// ways and compare survival probability, ⟨σz⟩, and per-mode occupations.
pub fn dense_check(
    terms: &HamiltonianTerms,
    layout: &ChainLayout,
    cfg: &NumericsConfig,
    times: &[f64],
) -> Result<DenseCheckReport> {
    cfg.validate()?;
    let prop = DensePropagator::new(terms, layout)?;
    let mpo = super::TfdMpo::build(terms, layout)?;
    let state = super::TfdMps::product_state(layout);
    let traj = super::tdvp_evolve(state, &mpo, cfg, times)?;

    let mut report = DenseCheckReport {
        times: times.to_vec(),
        max_dev_survival: 0.0,
        max_dev_sigma_z: 0.0,
        max_dev_mode_number: 0.0,
    };
    for snap in traj.samples.iter().filter(|s| s.time > 0.0) {
        let psi = prop.state_at(snap.time);
        let sz_mps = snap.state.expect_local(layout.spin_pos(), &sigma_z())?.re;
        let ps_mps = (sz_mps + 1.0) / 2.0;
        report.max_dev_survival =
            report.max_dev_survival.max((prop.survival(&psi) - ps_mps).abs());
        report.max_dev_sigma_z =
            report.max_dev_sigma_z.max((prop.sigma_z(&psi) - sz_mps).abs());
        for m in 0..layout.num_modes() {
            let n_mps = snap
                .state
                .expect_local(layout.physical_site(m), &number(layout.n_max()))?
                .re;
            report.max_dev_mode_number =
                report.max_dev_mode_number.max((prop.mode_number(&psi, m) - n_mps).abs());
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Beta, ModelParams, QuadConvention, SqueezeThermal};
    use approx::assert_relative_eq;

    fn small_terms(r: f64, phi: f64, beta: Beta) -> (HamiltonianTerms, ChainLayout) {
        let p = ModelParams::resonant(0.1, 2).unwrap();
        let st = SqueezeThermal::new(r, phi, beta).unwrap();
        let terms = HamiltonianTerms::build(&p, &st);
        let layout = ChainLayout::new(2, 3, true).unwrap();
        (terms, layout)
    }

    #[test]
    fn dense_hamiltonian_is_hermitian() {
        for (r, phi, beta) in [
            (0.0, 0.0, Beta::Infinite),
            (0.3, 0.0, Beta::Infinite),
            (0.3, 1.7, Beta::Finite(0.5)),
            (0.7, std::f64::consts::PI / 2.0, Beta::Finite(2.0)),
        ] {
            let (terms, layout) = small_terms(r, phi, beta);
            let h = dense_hamiltonian(&terms, &layout).unwrap();
            assert!(hermiticity_defect(&h) < 1e-12, "r={r} phi={phi}");
        }
    }

    #[test]
    fn appendix_typo_convention_breaks_hermiticity() {
        let p = ModelParams::resonant(0.1, 1).unwrap();
        let st = SqueezeThermal::new(0.3, 1.0, Beta::Finite(0.5)).unwrap();
        let terms =
            HamiltonianTerms::build_with_convention(&p, &st, QuadConvention::AppendixTypo);
        let layout = ChainLayout::new(1, 3, true).unwrap();
        let h = dense_hamiltonian(&terms, &layout).unwrap();
        assert!(hermiticity_defect(&h) > 1e-3);
        assert!(DensePropagator::new(&terms, &layout).is_err());
    }

    #[test]
    fn vacuum_energy_is_delta_half() {
        let (terms, layout) = small_terms(0.3, 0.9, Beta::Finite(0.8));
        let prop = DensePropagator::new(&terms, &layout).unwrap();
        let psi0 = prop.state_at(0.0);
        let h = dense_hamiltonian(&terms, &layout).unwrap();
        let e0 = prop.expect(&psi0, &h);
        assert_relative_eq!(e0.re, 0.5, max_relative = 1e-10);
        assert_relative_eq!(e0.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn decoupled_qubit_never_decays() {
        let p = ModelParams::resonant(0.0, 1).unwrap();
        let st = SqueezeThermal::vacuum();
        let terms = HamiltonianTerms::build(&p, &st);
        let layout = ChainLayout::new(1, 2, false).unwrap();
        let prop = DensePropagator::new(&terms, &layout).unwrap();
        for &t in &[0.3, 1.7, 9.2] {
            let psi = prop.state_at(t);
            assert_relative_eq!(prop.survival(&psi), 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn dense_matches_se_oracle_weak_coupling() {
        // independent cross-check of two exact engines at r = 0
        let p = ModelParams::resonant(0.02, 1).unwrap();
        let st = SqueezeThermal::thermal(1.0).unwrap();
        let terms = HamiltonianTerms::build(&p, &st);
        let layout = ChainLayout::new(1, 4, true).unwrap();
        let prop = DensePropagator::new(&terms, &layout).unwrap();
        let times: Vec<f64> = (1..=10).map(|k| k as f64 * 2.0).collect();
        let se = crate::se_oracle::se_survival_at(&p, &st, &times).unwrap();
        for (t, ps_se) in times.iter().zip(&se) {
            let psi = prop.state_at(*t);
            // SE restriction discards counter-rotating corrections whose
            // phase error grows like g²t/(ω+Δ)
            assert_relative_eq!(prop.survival(&psi), ps_se, epsilon = 1e-2);
        }
    }

    #[test]
    fn vacuum_rabi_dense() {
        // M=1, resonant, T=0, weak coupling: survival = cos²(gt)
        let g = 0.005;
        let p = ModelParams::resonant(g, 1).unwrap();
        let terms = HamiltonianTerms::build(&p, &SqueezeThermal::vacuum());
        let layout = ChainLayout::new(1, 3, false).unwrap();
        let prop = DensePropagator::new(&terms, &layout).unwrap();
        for &t in &[10.0, 50.0, 100.0] {
            let psi = prop.state_at(t);
            assert_relative_eq!(prop.survival(&psi), (g * t).cos().powi(2), epsilon = 1e-4);
        }
    }

    #[test]
    fn propagation_matches_taylor_for_complex_hamiltonian() {
        // guards the eigenvector convention of the LAPACK binding: complex
        // phases (φ ≠ 0, π) make H genuinely complex Hermitian
        let (terms, layout) = small_terms(0.3, 1.3, Beta::Finite(0.8));
        let prop = DensePropagator::new(&terms, &layout).unwrap();
        let h = dense_hamiltonian(&terms, &layout).unwrap();
        let t = 0.7;
        let coeff = C64::new(0.0, -t);
        let mut psi = Array1::<C64>::zeros(h.nrows());
        psi[0] = C64::new(1.0, 0.0);
        let mut term = psi.clone();
        for p in 1..200 {
            term = h.dot(&term).mapv(|z| z * coeff / p as f64);
            psi += &term;
        }
        let got = prop.state_at(t);
        for (a, b) in got.iter().zip(psi.iter()) {
            assert_relative_eq!(a.re, b.re, epsilon = 1e-10);
            assert_relative_eq!(a.im, b.im, epsilon = 1e-10);
        }
    }

    #[test]
    fn dimension_guard() {
        let p = ModelParams::resonant(0.1, 4).unwrap();
        let terms = HamiltonianTerms::build(&p, &SqueezeThermal::thermal(0.5).unwrap());
        let layout = ChainLayout::new(4, 20, true).unwrap();
        assert!(matches!(
            dense_hamiltonian(&terms, &layout),
            Err(Error::DimensionGuard(_))
        ));
    }
}
