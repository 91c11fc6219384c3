//! The elliptic dynamical R-matrix of the `sl_N` vector representation.
//!
//! `R̄(z, Π)` acts on `V ⊗ V` by
//!
//! ```text
//! v_j ⊗ v_j       ↦ v_j ⊗ v_j
//! v_j1 ⊗ v_j2     ↦ b(u,s) v_j1 ⊗ v_j2 + c̄(u,s) v_j2 ⊗ v_j1      (j1 < j2)
//! v_j2 ⊗ v_j1     ↦ b̄(u)   v_j2 ⊗ v_j1 + c(u,s)  v_j1 ⊗ v_j2
//! ```
//!
//! with `z = q^{2u}` and `s = (P+h)_{j1,j2}`. The dynamical Yang-Baxter
//! equation holds in the form
//!
//! ```text
//! R12(z1/z2, Π q^{2h(3)}) R13(z1/z3, Π) R23(z2/z3, Π q^{2h(1)})
//!   = R23(z2/z3, Π) R13(z1/z3, Π q^{2h(2)}) R12(z1/z2, Π)
//! ```
//!
//! where `q^{2h(i)}` adds the weight of the color in slot `i` to every
//! `(P+h)_{j,k}`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::dense::{basis_colors, basis_index, CMatrix};
use crate::ellfn::{rho_plus, ModularParams, Nome};
use crate::error::{Error, Result};
use crate::tensorspace::{add_color_weight, DynamicalParams};

/// Brackets with modulus below this are treated as zeros.
pub const SINGULAR_TOL: f64 = 1e-12;

pub type ColorPair = (usize, usize);

/// Sparse `N² × N²` R-matrix, keyed by `(input pair, output pair)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynRMatrix {
    rank: usize,
    entries: BTreeMap<(ColorPair, ColorPair), Complex64>,
    z: Complex64,
    nome: Nome,
}

impl DynRMatrix {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn spectral(&self) -> Complex64 {
        self.z
    }

    pub fn nome(&self) -> Nome {
        self.nome
    }

    /// Coefficient of `v_out` in `R̄ v_in`; zero when not stored.
    pub fn entry(&self, input: ColorPair, output: ColorPair) -> Complex64 {
        self.entries
            .get(&(input, output))
            .copied()
            .unwrap_or_default()
    }

    /// Matrix element `⟨out| R̄ |in⟩`, i.e. `R̄_{out}^{in}`.
    pub fn element(&self, output: ColorPair, input: ColorPair) -> Complex64 {
        self.entry(input, output)
    }

    pub fn entries(&self) -> impl Iterator<Item = (ColorPair, ColorPair, Complex64)> + '_ {
        self.entries.iter().map(|(&(i, o), &v)| (i, o, v))
    }

    /// Image of `v_a ⊗ v_b` as a list of `(output pair, coefficient)`.
    pub fn apply(&self, input: ColorPair) -> Vec<(ColorPair, Complex64)> {
        self.entries
            .range((input, (0, 0))..=(input, (usize::MAX, usize::MAX)))
            .map(|(&(_, o), &v)| (o, v))
            .collect()
    }

    /// Dense matrix with rows indexed by output, columns by input.
    pub fn dense(&self) -> CMatrix {
        let n = self.rank;
        let mut m = CMatrix::zeros(n * n, n * n);
        for (&((a, b), (c, d)), &v) in &self.entries {
            m[(basis_index(&[c, d], n), basis_index(&[a, b], n))] = v;
        }
        m
    }

    pub fn scaled(&self, s: Complex64) -> DynRMatrix {
        DynRMatrix {
            entries: self.entries.iter().map(|(&k, &v)| (k, v * s)).collect(),
            ..self.clone()
        }
    }

    /// Every stored entry preserves the color multiset.
    pub fn satisfies_ice_rule(&self) -> bool {
        self.entries.keys().all(|&((a, b), (c, d))| {
            let (mut x, mut y) = ([a, b], [c, d]);
            x.sort_unstable();
            y.sort_unstable();
            x == y
        })
    }
}

fn checked_bracket(mp: &ModularParams, x: Complex64, nome: Nome) -> Complex64 {
    mp.bracket_on(x, nome)
}

/// Builds `R̄` from the additive spectral variable `u` and a rule for
/// `s = (P+h)_{j,k}`.
pub(crate) fn rbar_additive<F>(
    u: Complex64,
    rank: usize,
    s_of: F,
    mp: &ModularParams,
    nome: Nome,
) -> Result<DynRMatrix>
where
    F: Fn(usize, usize) -> Complex64,
{
    let one = Complex64::new(1.0, 0.0);
    let br = |x: Complex64| checked_bracket(mp, x, nome);
    let bu = br(u);
    let bu1 = br(u + one);
    if bu1.norm() < SINGULAR_TOL {
        return Err(Error::Pole(format!("[u+1] vanishes at u = {u}")));
    }
    let b1 = br(one);
    let mut entries = BTreeMap::new();
    for j in 1..=rank {
        entries.insert(((j, j), (j, j)), one);
    }
    for j1 in 1..=rank {
        for j2 in j1 + 1..=rank {
            let s = s_of(j1, j2);
            let bs = br(s);
            if bs.norm() < SINGULAR_TOL {
                return Err(Error::Singular { j1, j2 });
            }
            let b = br(s + one) * br(s - one) * bu / (bs * bs * bu1);
            let bbar = bu / bu1;
            let c = b1 * br(s + u) / (bs * bu1);
            let cbar = b1 * br(s - u) / (bs * bu1);
            entries.insert(((j1, j2), (j1, j2)), b);
            entries.insert(((j2, j1), (j2, j1)), bbar);
            // E_{j1,j2} ⊗ E_{j2,j1}: v_j2 ⊗ v_j1 ↦ v_j1 ⊗ v_j2
            entries.insert(((j2, j1), (j1, j2)), c);
            // E_{j2,j1} ⊗ E_{j1,j2}: v_j1 ⊗ v_j2 ↦ v_j2 ⊗ v_j1
            entries.insert(((j1, j2), (j2, j1)), cbar);
        }
    }
    Ok(DynRMatrix {
        rank,
        entries,
        z: mp.qpow(2.0 * u),
        nome,
    })
}

/// `R̄(z, Π)` on the unstarred (`p`) or starred (`p*`) nome.
pub fn rbar(
    z: Complex64,
    pdyn: &DynamicalParams,
    mp: &ModularParams,
    starred: bool,
) -> Result<DynRMatrix> {
    let nome = if starred { Nome::PStar } else { Nome::P };
    let mut m = rbar_additive(mp.additive(z), pdyn.rank(), |j, k| pdyn.pair(j, k), mp, nome)?;
    m.z = z;
    Ok(m)
}

/// `R⁺(z, Π) = ρ⁺(z) R̄(z, Π)`.
pub fn r_plus(z: Complex64, pdyn: &DynamicalParams, mp: &ModularParams) -> Result<DynRMatrix> {
    let rho = rho_plus(z, pdyn.rank(), mp)?;
    Ok(rbar(z, pdyn, mp, false)?.scaled(rho))
}

/// Dense operator of `R̄` acting on slots `(a, b)` of `V^{⊗len}`, with the
/// dynamical parameters shifted by the total weight of the colors in the
/// `spectators` slots of each input basis vector.
pub(crate) fn embedded(
    u: Complex64,
    slots: (usize, usize),
    spectators: &[usize],
    len: usize,
    pdyn: &DynamicalParams,
    mp: &ModularParams,
    nome: Nome,
) -> Result<CMatrix> {
    let n = pdyn.rank();
    let dim = n.pow(len as u32);
    let mut cache: BTreeMap<Vec<i64>, DynRMatrix> = BTreeMap::new();
    let mut m = CMatrix::zeros(dim, dim);
    for col in 0..dim {
        let colors = basis_colors(col, len, n);
        let mut w = vec![0i64; n - 1];
        for &s in spectators {
            add_color_weight(&mut w, colors[s], 1);
        }
        if !cache.contains_key(&w) {
            let r = rbar_additive(u, n, |j, k| pdyn.pair_shifted(j, k, &w), mp, nome)?;
            cache.insert(w.clone(), r);
        }
        for ((x, y), v) in cache[&w].apply((colors[slots.0], colors[slots.1])) {
            let mut out = colors.clone();
            out[slots.0] = x;
            out[slots.1] = y;
            m[(basis_index(&out, n), col)] += v;
        }
    }
    Ok(m)
}

/// Max-norm residual of the dynamical Yang-Baxter equation on `V^{⊗3}`.
pub fn check_dybe(
    z1: Complex64,
    z2: Complex64,
    z3: Complex64,
    pdyn: &DynamicalParams,
    mp: &ModularParams,
) -> Result<f64> {
    // Differences of principal logs keep u13 = u12 + u23 on every branch.
    let (u1, u2, u3) = (mp.additive(z1), mp.additive(z2), mp.additive(z3));
    let (u12, u13, u23) = (u1 - u2, u1 - u3, u2 - u3);
    let op = |u, slots, spectator| embedded(u, slots, spectator, 3, pdyn, mp, Nome::P);
    let lhs = op(u12, (0, 1), &[2])?
        .mul(&op(u13, (0, 2), &[])?)
        .mul(&op(u23, (1, 2), &[0])?);
    let rhs = op(u23, (1, 2), &[])?
        .mul(&op(u13, (0, 2), &[1])?)
        .mul(&op(u12, (0, 1), &[])?);
    Ok(lhs.max_abs_diff(&rhs))
}

fn permutation(n: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n * n, n * n);
    for a in 1..=n {
        for b in 1..=n {
            m[(basis_index(&[b, a], n), basis_index(&[a, b], n))] = Complex64::new(1.0, 0.0);
        }
    }
    m
}

/// `‖R̄(z,Π) P R̄(1/z,Π) P − Id‖_max`.
pub fn check_inversion(z: Complex64, pdyn: &DynamicalParams, mp: &ModularParams) -> Result<f64> {
    check_inversion_on(z, pdyn, mp, Nome::P, Nome::P)
}

/// Inversion residual with independent nome choices for the two factors.
pub fn check_inversion_on(
    z: Complex64,
    pdyn: &DynamicalParams,
    mp: &ModularParams,
    first: Nome,
    second: Nome,
) -> Result<f64> {
    let n = pdyn.rank();
    let u = mp.additive(z);
    let a = rbar_additive(u, n, |j, k| pdyn.pair(j, k), mp, first)?.dense();
    let b = rbar_additive(-u, n, |j, k| pdyn.pair(j, k), mp, second)?.dense();
    let p = permutation(n);
    let prod = a.mul(&p).mul(&b).mul(&p);
    Ok(prod.max_abs_diff(&CMatrix::identity(n * n)))
}
