//! Matrix-product state over the doubled chain: mixed-canonical storage,
//! orthogonality-center moves, expectation values, and the truncated
//! two-site split used by the warm-up sweeps.

use ndarray::{s, Array1, Array2, Array3, Array4, Order};
use ndarray_linalg::{QR, SVD};
use num_complex::Complex64 as C64;

use crate::{Error, Result};

use super::{ChainLayout, TfdMpo};

/// MPS with site tensors indexed (bond-left, physical, bond-right) and an
/// orthogonality center: sites left of `center` are left-orthonormal, sites
/// right of it right-orthonormal.
#[derive(Debug, Clone)]
pub struct TfdMps {
    pub(crate) tensors: Vec<Array3<C64>>,
    pub(crate) center: usize,
}

pub(crate) fn dagger(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

fn reshape2(a: &Array3<C64>, rows: usize, cols: usize) -> Array2<C64> {
    a.to_shape(((rows, cols), Order::RowMajor)).expect("reshape").to_owned()
}

impl TfdMps {
    /// Every site in its first basis state (spin up, empty modes), all bond
    /// dimensions 1. This is the doubled vacuum the evolution starts from.
    pub fn product_state(layout: &ChainLayout) -> Self {
        let tensors = layout
            .sites()
            .iter()
            .map(|s| {
                let mut t = Array3::<C64>::zeros((1, s.dim, 1));
                t[(0, 0, 0)] = C64::new(1.0, 0.0);
                t
            })
            .collect();
        Self { tensors, center: 0 }
    }

    pub fn num_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn site_tensor(&self, i: usize) -> &Array3<C64> {
        &self.tensors[i]
    }

    pub fn center(&self) -> usize {
        self.center
    }

    /// Internal bond dimensions, left to right (length N−1).
    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors[..self.tensors.len() - 1].iter().map(|t| t.dim().2).collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn norm(&self) -> f64 {
        let e = self.transfer(&[]);
        debug_assert_eq!(e.dim(), (1, 1));
        e[(0, 0)].re.max(0.0).sqrt()
    }

    /// Rescale the center tensor to unit norm; returns the prior norm.
    pub fn normalize(&mut self) -> f64 {
        let n = self.norm();
        if n > 0.0 {
            self.tensors[self.center].mapv_inplace(|z| z / n);
        }
        n
    }

    /// ⟨O⟩ for a single-site operator, normalized by ⟨ψ|ψ⟩.
    pub fn expect_local(&self, site: usize, op: &Array2<C64>) -> Result<C64> {
        self.expect_product(&[(site, op)])
    }

    /// ⟨O₁O₂…⟩ for a product of local operators; operators listed for the
    /// same site compose in list order. Normalized by ⟨ψ|ψ⟩.
    pub fn expect_product(&self, ops: &[(usize, &Array2<C64>)]) -> Result<C64> {
        for &(site, op) in ops {
            if site >= self.num_sites() {
                return Err(Error::Engine(format!("operator site {site} out of range")));
            }
            let d = self.tensors[site].dim().1;
            if op.dim() != (d, d) {
                return Err(Error::Engine(format!(
                    "operator on site {site} is {:?}, local dimension is {d}",
                    op.dim()
                )));
            }
        }
        let norm2 = self.transfer(&[])[(0, 0)].re;
        if norm2 <= 0.0 {
            return Err(Error::Engine("state has zero norm".into()));
        }
        Ok(self.transfer(ops)[(0, 0)] / norm2)
    }

    /// ⟨Ĥ⟩ for an MPO over the same layout, normalized by ⟨ψ|ψ⟩.
    pub fn expect_mpo(&self, mpo: &TfdMpo) -> Result<C64> {
        if mpo.num_sites() != self.num_sites() {
            return Err(Error::Engine(format!(
                "MPO has {} sites, state has {}",
                mpo.num_sites(),
                self.num_sites()
            )));
        }
        let norm2 = self.transfer(&[])[(0, 0)].re;
        if norm2 <= 0.0 {
            return Err(Error::Engine("state has zero norm".into()));
        }
        // E[wl](lb, lk), walked left to right through the MPO channels
        let mut env = vec![Array2::<C64>::from_diag_elem(1, C64::new(1.0, 0.0))];
        for (a, w) in self.tensors.iter().zip(mpo.tensors()) {
            let (wl, wr, _, _) = w.dim();
            debug_assert_eq!(wl, env.len());
            let mut next = vec![Array2::<C64>::zeros((a.dim().2, a.dim().2)); wr];
            for l in 0..wl {
                for r in 0..wr {
                    let op = w.slice(s![l, r, .., ..]).to_owned();
                    if op.iter().all(|z| z.norm() == 0.0) {
                        continue;
                    }
                    next[r] += &transfer_step(&env[l], a, Some(&op));
                }
            }
            env = next;
        }
        debug_assert_eq!(env.len(), 1);
        Ok(env.pop().unwrap()[(0, 0)] / norm2)
    }

    /// Full-chain transfer contraction ⟨ψ| Π ops |ψ⟩ as a 1×1 matrix.
    fn transfer(&self, ops: &[(usize, &Array2<C64>)]) -> Array2<C64> {
        let mut env = Array2::<C64>::from_diag_elem(1, C64::new(1.0, 0.0));
        for (i, a) in self.tensors.iter().enumerate() {
            let site_op = ops.iter().filter(|(j, _)| *j == i).fold(
                None::<Array2<C64>>,
                |acc, (_, op)| {
                    Some(match acc {
                        // list order O₁O₂ acts as O₁·O₂ on the ket
                        None => (*op).clone(),
                        Some(prev) => prev.dot(*op),
                    })
                },
            );
            env = transfer_step(&env, a, site_op.as_ref());
        }
        env
    }

    /// Shift the center one site right, pushing the R factor into the next
    /// tensor.
    pub(crate) fn move_center_right(&mut self) {
        let i = self.center;
        debug_assert!(i + 1 < self.num_sites());
        let (l, d, r) = self.tensors[i].dim();
        let m = reshape2(&self.tensors[i], l * d, r);
        let (q, rr) = m.qr().expect("QR");
        let k = q.ncols();
        self.tensors[i] = q.to_shape(((l, d, k), Order::RowMajor)).unwrap().to_owned();
        let (ln, dn, rn) = self.tensors[i + 1].dim();
        let nxt = rr.dot(&reshape2(&self.tensors[i + 1], ln, dn * rn));
        self.tensors[i + 1] = nxt.to_shape(((k, dn, rn), Order::RowMajor)).unwrap().to_owned();
        self.center = i + 1;
    }

    /// Shift the center one site left, pushing the L factor into the
    /// previous tensor.
    pub(crate) fn move_center_left(&mut self) {
        let i = self.center;
        debug_assert!(i > 0);
        let (l, d, r) = self.tensors[i].dim();
        let m = reshape2(&self.tensors[i], l, d * r);
        // LQ via QR of the adjoint: M = (R† ) (Q†) with Q† right-orthonormal
        let (q, rr) = dagger(&m).qr().expect("QR");
        let k = q.ncols();
        self.tensors[i] = dagger(&q).to_shape(((k, d, r), Order::RowMajor)).unwrap().to_owned();
        let (lp, dp, rp) = self.tensors[i - 1].dim();
        let prev = reshape2(&self.tensors[i - 1], lp * dp, rp).dot(&dagger(&rr));
        self.tensors[i - 1] = prev.to_shape(((lp, dp, k), Order::RowMajor)).unwrap().to_owned();
        self.center = i - 1;
    }

    /// Re-establish mixed canonical form with the center at `i`, regardless
    /// of the current gauge. Does not change the state.
    pub fn canonicalize_to(&mut self, i: usize) {
        assert!(i < self.num_sites());
        self.center = 0;
        while self.center + 1 < self.num_sites() {
            self.move_center_right();
        }
        while self.center > i {
            self.move_center_left();
        }
    }

    /// Contract the center with its right neighbour into a two-site block
    /// (l, d_i, d_{i+1}, r).
    pub(crate) fn merge_with_right(&self) -> Array4<C64> {
        let i = self.center;
        let (l, d1, k) = self.tensors[i].dim();
        let (_, d2, r) = self.tensors[i + 1].dim();
        let left = reshape2(&self.tensors[i], l * d1, k);
        let right = reshape2(&self.tensors[i + 1], k, d2 * r);
        left.dot(&right)
            .to_shape(((l, d1, d2, r), Order::RowMajor))
            .unwrap()
            .to_owned()
    }

    /// Split a two-site block back into tensors at (center, center+1) via a
    /// truncated SVD; the center ends up on `right`-th side. Returns the
    /// discarded weight (sum of dropped squared singular values, relative to
    /// the block norm).
    pub(crate) fn split_two_site(
        &mut self,
        theta: &Array4<C64>,
        d_max: usize,
        cutoff: f64,
        center_right: bool,
    ) -> f64 {
        let i = self.center;
        let (l, d1, d2, r) = theta.dim();
        let m = theta
            .to_shape(((l * d1, d2 * r), Order::RowMajor))
            .unwrap()
            .to_owned();
        let (u, sv, vt) = m.svd(true, true).expect("SVD");
        let u = u.unwrap();
        let vt = vt.unwrap();
        let (keep, discarded) = truncation_rank(&sv, d_max, cutoff);

        let u = u.slice(s![.., ..keep]).to_owned();
        let vt = vt.slice(s![..keep, ..]).to_owned();
        let sd = Array2::from_diag(&sv.slice(s![..keep]).mapv(|x| C64::new(x, 0.0)));
        if center_right {
            self.tensors[i] = u.to_shape(((l, d1, keep), Order::RowMajor)).unwrap().to_owned();
            self.tensors[i + 1] = sd
                .dot(&vt)
                .to_shape(((keep, d2, r), Order::RowMajor))
                .unwrap()
                .to_owned();
            self.center = i + 1;
        } else {
            self.tensors[i] = u
                .dot(&sd)
                .to_shape(((l, d1, keep), Order::RowMajor))
                .unwrap()
                .to_owned();
            self.tensors[i + 1] = vt.to_shape(((keep, d2, r), Order::RowMajor)).unwrap().to_owned();
            self.center = i;
        }
        discarded
    }

    /// Dense statevector of the MPS (test helper).
    pub fn to_dense(&self) -> Array1<C64> {
        let mut v = Array2::<C64>::from_diag_elem(1, C64::new(1.0, 0.0));
        for a in &self.tensors {
            let (l, d, r) = a.dim();
            // v (1, dims·l) × A (l, d·r) over the shared bond
            let rows = v.nrows() * v.ncols() / l;
            let vm = v.to_shape(((rows, l), Order::RowMajor)).unwrap().to_owned();
            v = vm.dot(&reshape2(a, l, d * r));
            let n = v.nrows() * v.ncols() / r;
            v = v.to_shape(((n, r), Order::RowMajor)).unwrap().to_owned();
        }
        debug_assert_eq!(v.ncols(), 1);
        v.column(0).to_owned()
    }
}

/// E'(rb, rk) = Σ A†(lb,d,rb) E(lb,lk) [op] A(lk,d,rk).
pub(crate) fn transfer_step(
    env: &Array2<C64>,
    a: &Array3<C64>,
    op: Option<&Array2<C64>>,
) -> Array2<C64> {
    let (l, d, r) = a.dim();
    let ket = match op {
        // apply op to the physical leg: B(l,d,r) = Σ op(d,d') A(l,d',r)
        Some(o) => {
            let am = a.to_shape(((l, d * r), Order::RowMajor)).unwrap().to_owned();
            let mut b = Array3::<C64>::zeros((l, d, r));
            for li in 0..l {
                let blk = am.row(li).to_owned().to_shape(((d, r), Order::RowMajor)).unwrap().to_owned();
                b.slice_mut(s![li, .., ..]).assign(&o.dot(&blk));
            }
            b
        }
        None => a.clone(),
    };
    let ketm = ket.to_shape(((l, d * r), Order::RowMajor)).unwrap().to_owned();
    let t = env.dot(&ketm); // (lb, d·rk)
    let t = t.to_shape(((env.nrows() * d, r), Order::RowMajor)).unwrap().to_owned();
    let abar = a
        .to_shape(((l * d, r), Order::RowMajor))
        .unwrap()
        .mapv(|z| z.conj());
    abar.t().dot(&t)
}

/// Number of singular values to keep under the bond cap and relative
/// discarded-weight cutoff, plus the discarded weight itself.
pub(crate) fn truncation_rank(sv: &Array1<f64>, d_max: usize, cutoff: f64) -> (usize, f64) {
    let total: f64 = sv.iter().map(|x| x * x).sum();
    if total == 0.0 {
        return (1, 0.0);
    }
    let mut keep = sv.len().min(d_max);
    // drop trailing values while the discarded weight stays below cutoff
    let mut discarded: f64 = sv.iter().skip(keep).map(|x| x * x).sum();
    while keep > 1 {
        let next = discarded + sv[keep - 1] * sv[keep - 1];
        if next / total > cutoff {
            break;
        }
        discarded = next;
        keep -= 1;
    }
    (keep, discarded / total)
}
