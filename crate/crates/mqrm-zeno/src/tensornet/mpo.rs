//! Matrix-product operator for the doubled Hamiltonian.
//!
//! Every interaction term couples a single boson mode to the spin, so a bond
//! dimension of 3 suffices regardless of M: channel 0 carries completed
//! terms, channel 1 the pending σx partner, channel 2 the identity. Walking
//! left to right,
//!
//! ```text
//!        ⎡ I          ⎤        ⎡ I         ⎤        ⎡ I        ⎤
//!  W_b = ⎢      0   I ⎥  W_s = ⎢ σx        ⎥  W_a = ⎢ G_a  I   ⎥
//!        ⎣ H_b  G_b I ⎦        ⎣ Δσz/2 σx I⎦        ⎣ H_a    I ⎦
//! ```
//!
//! with boundary row (0,0,1) on the left and column (1,0,0)ᵀ on the right.
//! The W_s(1,1) entry must vanish: an identity there would thread a spurious
//! G_b·G_a boson-boson product straight through the spin site.

use ndarray::{linalg::kron, s, Array2, Array4};
use num_complex::Complex64 as C64;

use crate::model::{annihilate, create, identity, number, sigma_x, sigma_z, HamiltonianTerms};
use crate::{Error, Result};

use super::{ChainLayout, SiteKind};

const W: usize = 3;

/// MPO for the doubled Hamiltonian over a given chain layout. Tensor index
/// order is (bond-left, bond-right, ket, bra); the boundary tensors are
/// pre-sliced to bond dimension 1.
#[derive(Debug, Clone)]
pub struct TfdMpo {
    tensors: Vec<Array4<C64>>,
    layout: ChainLayout,
}

impl TfdMpo {
    pub fn build(terms: &HamiltonianTerms, layout: &ChainLayout) -> Result<Self> {
        if terms.modes.len() != layout.num_modes() {
            return Err(Error::Engine(format!(
                "term list has {} modes but layout has {}",
                terms.modes.len(),
                layout.num_modes()
            )));
        }
        if !layout.has_fictitious() && !terms.fictitious_decoupled() {
            return Err(Error::Engine(
                "layout drops fictitious modes but the Hamiltonian couples them".into(),
            ));
        }
        let n_max = layout.n_max();
        let a = annihilate(n_max);
        let adag = create(n_max);
        let num = number(n_max);
        let a2 = a.dot(&a);
        let adag2 = adag.dot(&adag);
        let id_b = identity(n_max + 1);

        let mut tensors = Vec::with_capacity(layout.num_sites());
        for site in layout.sites() {
            let mut w = match site.kind {
                SiteKind::Spin => {
                    let mut w = Array4::<C64>::zeros((W, W, 2, 2));
                    put(&mut w, 0, 0, &identity(2));
                    put(&mut w, 1, 0, &sigma_x());
                    put(&mut w, 2, 0, &(&sigma_z() * C64::new(terms.spin_z, 0.0)));
                    put(&mut w, 2, 1, &sigma_x());
                    put(&mut w, 2, 2, &identity(2));
                    w
                }
                SiteKind::PhysicalBoson => {
                    let t = &terms.modes[site.mode.unwrap()];
                    let h_a = &num * C64::new(t.a_number, 0.0)
                        + &adag2 * t.a_quad
                        + &a2 * t.a_quad.conj();
                    let g_a = &adag * t.a_coupling + &a * t.a_coupling.conj();
                    let mut w = Array4::<C64>::zeros((W, W, site.dim, site.dim));
                    put(&mut w, 0, 0, &id_b);
                    put(&mut w, 1, 0, &g_a);
                    put(&mut w, 1, 1, &id_b);
                    put(&mut w, 2, 0, &h_a);
                    put(&mut w, 2, 2, &id_b);
                    w
                }
                SiteKind::FictitiousBoson => {
                    let t = &terms.modes[site.mode.unwrap()];
                    let h_b = &num * C64::new(t.b_number, 0.0)
                        + &a2 * t.b_quad
                        + &adag2 * t.b_quad_dag;
                    let g_b = &a * t.b_coupling + &adag * t.b_coupling.conj();
                    let mut w = Array4::<C64>::zeros((W, W, site.dim, site.dim));
                    put(&mut w, 0, 0, &id_b);
                    put(&mut w, 1, 1, &id_b);
                    put(&mut w, 2, 0, &h_b);
                    put(&mut w, 2, 1, &g_b);
                    put(&mut w, 2, 2, &id_b);
                    w
                }
            };
            if tensors.is_empty() {
                w = w.slice(s![2..3, .., .., ..]).to_owned();
            }
            tensors.push(w);
        }
        let last = tensors.len() - 1;
        tensors[last] = tensors[last].slice(s![.., 0..1, .., ..]).to_owned();
        Ok(Self { tensors, layout: layout.clone() })
    }

    pub fn tensors(&self) -> &[Array4<C64>] {
        &self.tensors
    }

    pub fn site_tensor(&self, i: usize) -> &Array4<C64> {
        &self.tensors[i]
    }

    pub fn num_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn layout(&self) -> &ChainLayout {
        &self.layout
    }

    /// Contract the MPO into an explicit matrix (test helper; guarded by the
    /// dense dimension cap).
    pub fn contract_dense(&self) -> Result<Array2<C64>> {
        self.layout
            .total_dim()
            .filter(|&d| d <= super::dense::DENSE_DIM_GUARD)
            .ok_or_else(|| Error::DimensionGuard("MPO too large to contract densely".into()))?;
        // blocks[w] = operator on the sites contracted so far, per bond channel
        let mut blocks = vec![Array2::from_diag_elem(1, C64::new(1.0, 0.0))];
        for w in &self.tensors {
            let (wl, wr, d, _) = w.dim();
            debug_assert_eq!(wl, blocks.len());
            let grown = blocks[0].nrows() * d;
            let mut next = vec![Array2::<C64>::zeros((grown, grown)); wr];
            for l in 0..wl {
                for r in 0..wr {
                    let op = w.slice(s![l, r, .., ..]).to_owned();
                    if op.iter().all(|z| z.norm() == 0.0) {
                        continue;
                    }
                    next[r] += &kron(&blocks[l], &op);
                }
            }
            blocks = next;
        }
        debug_assert_eq!(blocks.len(), 1);
        Ok(blocks.pop().unwrap())
    }
}

fn put(w: &mut Array4<C64>, l: usize, r: usize, op: &Array2<C64>) {
    w.slice_mut(s![l, r, .., ..]).assign(op);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Beta, ModelParams, SqueezeThermal};
    use crate::tensornet::dense::dense_hamiltonian;

    fn max_dev(x: &Array2<C64>, y: &Array2<C64>) -> f64 {
        x.iter().zip(y.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn mpo_matches_dense_assembly() {
        // the MPO block structure must reproduce the term-by-term dense sum
        // exactly, for every sector the coefficients can populate
        for (r, phi, beta, m, fict) in [
            (0.0, 0.0, Beta::Infinite, 1, false),
            (0.0, 0.0, Beta::Infinite, 2, true),
            (0.0, 0.0, Beta::Finite(0.5), 2, true),
            (0.3, 1.7, Beta::Finite(0.5), 2, true),
            (0.7, std::f64::consts::PI / 2.0, Beta::Finite(2.0), 1, true),
            (0.4, 0.0, Beta::Infinite, 2, true),
        ] {
            let p = ModelParams::resonant(0.1, m).unwrap();
            let st = SqueezeThermal::new(r, phi, beta).unwrap();
            let terms = HamiltonianTerms::build(&p, &st);
            let layout = ChainLayout::new(m, 3, fict).unwrap();
            if fict {
                let h_ref = dense_hamiltonian(&terms, &layout).unwrap();
                let h_mpo = TfdMpo::build(&terms, &layout).unwrap().contract_dense().unwrap();
                assert!(
                    max_dev(&h_ref, &h_mpo) < 1e-13,
                    "r={r} phi={phi} M={m}: dev {}",
                    max_dev(&h_ref, &h_mpo)
                );
            } else {
                assert!(terms.fictitious_decoupled());
                let h_ref = dense_hamiltonian(&terms, &layout).unwrap();
                let h_mpo = TfdMpo::build(&terms, &layout).unwrap().contract_dense().unwrap();
                assert!(max_dev(&h_ref, &h_mpo) < 1e-13);
            }
        }
    }

    #[test]
    fn boundary_tensors_are_sliced() {
        let p = ModelParams::resonant(0.1, 2).unwrap();
        let terms = HamiltonianTerms::build(&p, &SqueezeThermal::thermal(1.0).unwrap());
        let layout = ChainLayout::new(2, 4, true).unwrap();
        let mpo = TfdMpo::build(&terms, &layout).unwrap();
        assert_eq!(mpo.num_sites(), 5);
        assert_eq!(mpo.site_tensor(0).dim(), (1, 3, 5, 5));
        assert_eq!(mpo.site_tensor(2).dim(), (3, 3, 2, 2));
        assert_eq!(mpo.site_tensor(4).dim(), (3, 1, 5, 5));
    }

    #[test]
    fn rejects_mismatched_layout() {
        let p = ModelParams::resonant(0.1, 2).unwrap();
        let terms = HamiltonianTerms::build(&p, &SqueezeThermal::thermal(1.0).unwrap());
        let layout = ChainLayout::new(3, 4, true).unwrap();
        assert!(TfdMpo::build(&terms, &layout).is_err());
        // dropping coupled fictitious modes is also an error
        let l2 = ChainLayout::new(2, 4, false).unwrap();
        assert!(TfdMpo::build(&terms, &l2).is_err());
    }
}
