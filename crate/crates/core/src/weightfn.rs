//! Elliptic weight functions `W̃_I`, the modified form `𝒲_I`, and
//! stable-envelope restrictions.
//!
//! Additive variables: `t^{(l)}_a = q^{2 v^{(l)}_a}` and `z_s = q^{2 u_s}`,
//! each obtained from the principal logarithm of its own point. Level `N`
//! of the nested variables is `u`.

use num_complex::Complex64;
use serde::Serialize;

use crate::dense::CMatrix;
use crate::ellfn::{ModularParams, Nome};
use crate::error::{Error, Result};
use crate::par;
use crate::rmat::{rbar_additive, SINGULAR_TOL};
use crate::tensorspace::{
    enumerate, index_from_colors, leq, ColorString, CompositionLambda, DynamicalParams,
    EvaluationPoints, PartitionIndex, DEFAULT_ENUMERATION_CAP,
};

/// Largest number of symmetrization summands evaluated for one weight function.
pub const MAX_SYM_TERMS: usize = 10_000_000;

/// Perturbations used for removable singularities at specialization.
pub const LIMIT_STEPS: [f64; 2] = [1e-5, 1e-6];

/// Integration variables `t^{(l)}_a` for `l = 1, ..., N-1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct TVariables {
    levels: Vec<Vec<Complex64>>,
}

impl TVariables {
    /// `levels[l-1]` must have `λ^{(l)} = λ_1 + ... + λ_l` entries.
    pub fn new(levels: Vec<Vec<Complex64>>, lambda: &CompositionLambda) -> Result<Self> {
        if levels.len() + 1 != lambda.rank() {
            return Err(Error::Shape(format!(
                "{} t-levels for N = {}",
                levels.len(),
                lambda.rank()
            )));
        }
        for (l, level) in levels.iter().enumerate() {
            let want = lambda.partial(l + 1);
            if level.len() != want {
                return Err(Error::Shape(format!(
                    "level {} has {} variables, expected {want}",
                    l + 1,
                    level.len()
                )));
            }
            if level.iter().any(|t| t.norm() == 0.0 || !t.is_finite()) {
                return Err(Error::Domain("t-variables must be finite and nonzero".into()));
            }
        }
        Ok(TVariables { levels })
    }

    /// The specialization `t = z_J`: `t^{(l)}_a = z_{j^{(l)}_a}`.
    pub fn specialized(j: &PartitionIndex, z: &EvaluationPoints) -> Result<Self> {
        check_points(j, z)?;
        let pts = z.points();
        let levels = (1..j.rank())
            .map(|l| j.union(l).iter().map(|&i| pts[i - 1]).collect())
            .collect();
        Ok(TVariables { levels })
    }

    pub fn levels(&self) -> &[Vec<Complex64>] {
        &self.levels
    }

    /// Total number of variables `M = Σ_l λ^{(l)}`.
    pub fn count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn additive(&self, mp: &ModularParams) -> Vec<Vec<Complex64>> {
        self.levels
            .iter()
            .map(|lv| lv.iter().map(|&t| mp.additive(t)).collect())
            .collect()
    }

    /// Permutes the entries of level `l` (1-based): new `a` takes old `perm[a]`.
    pub fn permuted(&self, l: usize, perm: &[usize]) -> Result<Self> {
        let level = &self.levels[l - 1];
        let mut seen = vec![false; level.len()];
        if perm.len() != level.len() || perm.iter().any(|&i| i >= level.len() || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::Shape(format!("not a permutation of level {l}")));
        }
        let mut levels = self.levels.clone();
        levels[l - 1] = perm.iter().map(|&i| level[i]).collect();
        Ok(TVariables { levels })
    }

    fn shape_matches(&self, i: &PartitionIndex) -> Result<()> {
        TVariables::new(self.levels.clone(), &i.lambda()).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightFunctionEval {
    pub value: Complex64,
    /// Summands evaluated directly.
    pub terms_evaluated: usize,
    /// Summands replaced by their limit under the specialization rule.
    pub skipped_singular: usize,
}

fn check_points(i: &PartitionIndex, z: &EvaluationPoints) -> Result<()> {
    if z.len() != i.n() {
        return Err(Error::Shape(format!("{} points for n = {}", z.len(), i.n())));
    }
    Ok(())
}

fn check_dyn(i: &PartitionIndex, pdyn: &DynamicalParams) -> Result<()> {
    if pdyn.rank() != i.rank() {
        return Err(Error::Shape(format!(
            "dynamical parameters of rank {} for N = {}",
            pdyn.rank(),
            i.rank()
        )));
    }
    Ok(())
}

/// Per-slot data of `Ũ_I` that does not depend on the variables.
struct Slot {
    b0: usize,
    shift: Complex64,
    larger: Vec<usize>,
}

struct Layout {
    /// `slots[l-1][a]` for `l = 1, ..., N-1`.
    slots: Vec<Vec<Slot>>,
    sizes: Vec<usize>,
}

impl Layout {
    fn new(i: &PartitionIndex, pdyn: &DynamicalParams) -> Layout {
        let n_colors = i.rank();
        let mu = i.colors();
        let mu = mu.colors();
        let unions = i.unions();
        let mut slots = Vec::with_capacity(n_colors - 1);
        for l in 1..n_colors {
            let lower = &unions[l - 1];
            let upper = &unions[l];
            let level = lower
                .iter()
                .map(|&s| {
                    let ms = mu[s - 1];
                    let c: i64 = mu[s..]
                        .iter()
                        .map(|&m| (m == ms) as i64 - (m == l + 1) as i64)
                        .sum();
                    Slot {
                        b0: upper.iter().position(|&x| x == s).expect("nested unions"),
                        shift: pdyn.pair(ms, l + 1) - c as f64,
                        larger: (0..upper.len()).filter(|&b| upper[b] > s).collect(),
                    }
                })
                .collect();
            slots.push(level);
        }
        let sizes = slots.iter().map(Vec::len).collect();
        Layout { slots, sizes }
    }

    fn term_count(&self) -> Result<usize> {
        let mut total: usize = 1;
        for &m in &self.sizes {
            for f in 2..=m {
                total = total
                    .checked_mul(f)
                    .filter(|&t| t <= MAX_SYM_TERMS)
                    .ok_or_else(|| {
                        Error::CapExceeded(format!("more than {MAX_SYM_TERMS} symmetrization terms"))
                    })?;
            }
        }
        Ok(total)
    }

    /// Applies the `idx`-th tuple of level permutations (mixed radix, Lehmer
    /// code per level, level 1 most significant).
    fn permute(&self, v: &[Vec<Complex64>], mut idx: usize) -> Vec<Vec<Complex64>> {
        let mut out: Vec<Vec<Complex64>> = Vec::with_capacity(v.len());
        for (l, &m) in self.sizes.iter().enumerate().rev() {
            let mut pool: Vec<Complex64> = v[l].clone();
            let mut digits = vec![0; m];
            for (k, d) in digits.iter_mut().enumerate() {
                let radix = m - k;
                *d = idx % radix;
                idx /= radix;
            }
            let mut level = Vec::with_capacity(m);
            for &d in &digits {
                level.push(pool.remove(d));
            }
            out.push(level);
        }
        out.reverse();
        out
    }
}

fn denominator(mp: &ModularParams, x: Complex64, what: &str) -> Result<Complex64> {
    let b = mp.bracket(x);
    if b.norm() < SINGULAR_TOL {
        return Err(Error::Pole(format!("[{what}] vanishes at {x}")));
    }
    Ok(b)
}

/// One summand `Ũ_I` at additive variables `v` (levels `1..N-1`) and `u`.
fn summand(layout: &Layout, v: &[Vec<Complex64>], u: &[Complex64], mp: &ModularParams) -> Result<Complex64> {
    let one = Complex64::new(1.0, 0.0);
    let b1 = mp.bracket(one);
    let mut val = one;
    for (l, level) in layout.slots.iter().enumerate() {
        let lower = &v[l];
        let upper: &[Complex64] = if l + 1 < v.len() { &v[l + 1] } else { u };
        for (a, slot) in level.iter().enumerate() {
            let x = upper[slot.b0] - lower[a];
            val *= mp.bracket(x + slot.shift) * b1
                / (denominator(mp, x + one, "v' - v + 1")? * denominator(mp, slot.shift, "(P+h) - C")?);
            for &b in &slot.larger {
                let x = upper[b] - lower[a];
                val *= mp.bracket(x) / denominator(mp, x + one, "v' - v + 1")?;
            }
            for b in a + 1..lower.len() {
                let x = lower[a] - lower[b];
                val *= mp.bracket(x - one) / denominator(mp, x, "v_a - v_b")?;
            }
        }
    }
    Ok(val)
}

fn additive_inputs(
    i: &PartitionIndex,
    t: &TVariables,
    z: &EvaluationPoints,
    pdyn: &DynamicalParams,
    mp: &ModularParams,
) -> Result<(Layout, Vec<Vec<Complex64>>, Vec<Complex64>)> {
    check_points(i, z)?;
    check_dyn(i, pdyn)?;
    t.shape_matches(i)?;
    Ok((Layout::new(i, pdyn), t.additive(mp), z.additive(mp)))
}

/// The unsymmetrized summand `Ũ_I(t, z, Π)`.
pub fn u_tilde(
    i: &PartitionIndex,
    t: &TVariables,
    z: &EvaluationPoints,
    pdyn: &DynamicalParams,
    mp: &ModularParams,
) -> Result<Complex64> {
    let (layout, v, u) = additive_inputs(i, t, z, pdyn, mp)?;
    summand(&layout, &v, &u, mp)
}

fn symmetrized(layout: &Layout, v: &[Vec<Complex64>], u: &[Complex64], mp: &ModularParams) -> Result<WeightFunctionEval> {
    let count = layout.term_count()?;
    let terms = par::try_map_indexed(count, |idx| summand(layout, &layout.permute(v, idx), u, mp))?;
    Ok(WeightFunctionEval {
        value: terms.into_iter().sum(),
        terms_evaluated: count,
        skipped_singular: 0,
    })
}

/// Number of summands `Π_l λ^{(l)}!` of `W̃_I`.
pub(crate) fn sym_term_count(i: &PartitionIndex, pdyn: &DynamicalParams) -> Result<usize> {
    check_dyn(i, pdyn)?;
    Layout::new(i, pdyn).term_count()
}

/// `Ũ_I` at additive variables after the `perm`-th tuple of level
/// permutations, so that summing over `perm < sym_term_count` gives `W̃_I`.
pub(crate) fn u_tilde_additive(
    i: &PartitionIndex,
    v: &[Vec<Complex64>],
    u: &[Complex64],
    pdyn: &DynamicalParams,
    mp: &ModularParams,
    perm: usize,
) -> Result<Complex64> {
    check_dyn(i, pdyn)?;
    let layout = Layout::new(i, pdyn);
    summand(&layout, &layout.permute(v, perm), u, mp)
}

/// `W̃_I(t, z, Π)`: the plain sum of `Ũ_I` over all permutations within each level.
pub fn w_tilde(
    i: &PartitionIndex,
    t: &TVariables,
    z: &EvaluationPoints,
    pdyn: &DynamicalParams,
    mp: &ModularParams,
) -> Result<WeightFunctionEval> {
    let (layout, v, u) = additive_inputs(i, t, z, pdyn, mp)?;
    symmetrized(&layout, &v, &u, mp)
}

/// `W̃_I` at `t = z_J`. Summands with a vanishing denominator are replaced by
/// the Richardson limit of `t^{(l)}_a = z_{j^{(l)}_a} (1 + ε)^k`, with `k` the
/// position of the variable among all levels and `ε ∈ LIMIT_STEPS`; summands that
/// blow up individually are extrapolated as a group, and a group that still
/// diverges is a genuine pole.
pub fn specialize(
    i: &PartitionIndex,
    j: &PartitionIndex,
    z: &EvaluationPoints,
    pdyn: &DynamicalParams,
    mp: &ModularParams,
) -> Result<WeightFunctionEval> {
    if i.lambda() != j.lambda() {
        return Err(Error::Shape(format!("{i} and {j} have different shapes")));
    }
    let t = TVariables::specialized(j, z)?;
    let (layout, v, u) = additive_inputs(i, &t, z, pdyn, mp)?;
    specialized_sum(&layout, &v, &u, mp)
}

fn specialized_sum(layout: &Layout, v: &[Vec<Complex64>], u: &[Complex64], mp: &ModularParams) -> Result<WeightFunctionEval> {
    let count = layout.term_count()?;
    let terms = par::map_indexed(count, |idx| summand(layout, &layout.permute(v, idx), u, mp));
    let mut value = Complex64::new(0.0, 0.0);
    let mut failed = Vec::new();
    for (idx, term) in terms.into_iter().enumerate() {
        match term {
            Ok(x) => value += x,
            Err(Error::Pole(_)) => failed.push(idx),
            Err(e) => return Err(e),
        }
    }
    if failed.is_empty() {
        return Ok(WeightFunctionEval {
            value,
            terms_evaluated: count,
            skipped_singular: 0,
        });
    }
    let perturbed = |eps: f64| -> Result<Vec<Complex64>> {
        // Variable k (flattened) is scaled by (1+ε)^k so that coincidences
        // among the t's are broken as well as those with z.
        let dv = mp.additive(Complex64::new(1.0 + eps, 0.0));
        let mut k = 0.0;
        let w: Vec<Vec<Complex64>> = v
            .iter()
            .map(|lv| {
                lv.iter()
                    .map(|x| {
                        k += 1.0;
                        x + k * dv
                    })
                    .collect()
            })
            .collect();
        failed
            .iter()
            .map(|&idx| summand(layout, &layout.permute(&w, idx), u, mp))
            .collect()
    };
    let coarse = perturbed(LIMIT_STEPS[0])?;
    let fine = perturbed(LIMIT_STEPS[1])?;
    let (mut group_coarse, mut group_fine) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for (&c, &f) in coarse.iter().zip(&fine) {
        if diverges(c, f) {
            group_coarse += c;
            group_fine += f;
        } else {
            value += richardson(c, f);
        }
    }
    if diverges(group_coarse, group_fine) {
        return Err(Error::Pole(format!(
            "specialized weight function diverges ({} singular summands)",
            failed.len()
        )));
    }
    value += richardson(group_coarse, group_fine);
    Ok(WeightFunctionEval {
        value,
        terms_evaluated: count - failed.len(),
        skipped_singular: failed.len(),
    })
}

/// Linear extrapolation to `ε = 0` from `ε = LIMIT_STEPS`.
fn richardson(coarse: Complex64, fine: Complex64) -> Complex64 {
    let [h1, h2] = LIMIT_STEPS;
    (h1 * fine - h2 * coarse) / (h1 - h2)
}

/// A simple pole grows by `h1/h2` between the two steps.
fn diverges(coarse: Complex64, fine: Complex64) -> bool {
    fine.norm() > 2.0 * coarse.norm() && fine.norm() > 1e-8
}

/// Closed form of `W̃_I(z_I)`:
/// `Π_{k<l} Π_{a ∈ I_k} Π_{b ∈ I_l, a < b} [u_b - u_a] / [u_b - u_a + 1]`.
pub fn diagonal_value(i: &PartitionIndex, z: &EvaluationPoints, mp: &ModularParams) -> Result<Complex64> {
    check_points(i, z)?;
    let u = z.additive(mp);
    let one = Complex64::new(1.0, 0.0);
    let mut val = one;
    for k in 1..=i.rank() {
        for l in k + 1..=i.rank() {
            for &a in i.part(k) {
                for &b in i.part(l).iter().filter(|&&b| b > a) {
                    let x = u[b - 1] - u[a - 1];
                    val *= mp.bracket(x) / denominator(mp, x + one, "u_b - u_a + 1")?;
                }
            }
        }
    }
    Ok(val)
}

/// `|LHS - RHS|` of the transition identity exchanging `z_i` and `z_{i+1}`:
///
/// `W̃_{..μ_{i+1} μ_i..}(t, ..z_{i+1}, z_i..) =
///   Σ R̄(z_i/z_{i+1}, Π q^{-2 Σ_{j≥i} ⟨ε̄_{μ_j},h⟩})_{μ_i μ_{i+1}}^{μ'_i μ'_{i+1}} W̃_{..μ'_i μ'_{i+1}..}(t, z)`.
pub fn transition_check(
    mu: &ColorString,
    i: usize,
    t: &TVariables,
    z: &EvaluationPoints,
    pdyn: &DynamicalParams,
    mp: &ModularParams,
) -> Result<f64> {
    let (lhs, rhs) = transition_sides(mu, i, t, z, pdyn, mp)?;
    Ok((lhs - rhs).norm())
}

pub(crate) fn transition_sides(
    mu: &ColorString,
    i: usize,
    t: &TVariables,
    z: &EvaluationPoints,
    pdyn: &DynamicalParams,
    mp: &ModularParams,
) -> Result<(Complex64, Complex64)> {
    let n = mu.len();
    if i == 0 || i >= n {
        return Err(Error::Domain(format!("swap position {i} outside 1..{n}")));
    }
    let rank = pdyn.rank();
    let lhs_index = index_from_colors(&mu.swapped(i), rank)?;
    let lhs = w_tilde(&lhs_index, t, &z.swapped(i), pdyn, mp)?.value;

    let u = z.additive(mp);
    let shift: Vec<i64> = mu.suffix_weight(i, rank).iter().map(|w| -w).collect();
    let r = rbar_additive(u[i - 1] - u[i], rank, |j, k| pdyn.pair_shifted(j, k, &shift), mp, Nome::P)?;
    let target = (mu.at(i), mu.at(i + 1));
    let mut rhs = Complex64::new(0.0, 0.0);
    for (input, output, coef) in r.entries() {
        if output != target {
            continue;
        }
        let mut colors = mu.colors().to_vec();
        colors[i - 1] = input.0;
        colors[i] = input.1;
        let idx = index_from_colors(&ColorString::new(colors, rank)?, rank)?;
        rhs += coef * w_tilde(&idx, t, z, pdyn, mp)?.value;
    }
    Ok((lhs, rhs))
}

/// `H_λ(t, z)` and `E_λ(t)`; `E_λ` keeps the `a = b` factors `[1]`.
fn h_and_e(v: &[Vec<Complex64>], u: &[Complex64], mp: &ModularParams) -> Result<(Complex64, Complex64)> {
    let one = Complex64::new(1.0, 0.0);
    let (mut h, mut e) = (one, one);
    for (l, lower) in v.iter().enumerate() {
        let upper: &[Complex64] = if l + 1 < v.len() { &v[l + 1] } else { u };
        for &va in lower {
            for &vb in upper {
                h *= mp.bracket(vb - va + one);
            }
            for &vb in lower {
                e *= denominator(mp, vb - va + one, "v_b - v_a + 1")?;
            }
        }
    }
    Ok((h, e))
}

/// `𝒲_I = H_λ W̃_I / E_λ`.
pub fn modified_w(
    i: &PartitionIndex,
    t: &TVariables,
    z: &EvaluationPoints,
    pdyn: &DynamicalParams,
    mp: &ModularParams,
) -> Result<Complex64> {
    let (layout, v, u) = additive_inputs(i, t, z, pdyn, mp)?;
    let (h, e) = h_and_e(&v, &u, mp)?;
    Ok(h * symmetrized(&layout, &v, &u, mp)?.value / e)
}

/// `𝒲_I` computed as `Sym U_I` with
/// `U_I = Π_l Π_a u^{(l)}_I / Π_{a<b} [v_a - v_b][v_b - v_a - 1]`.
pub fn modified_w_sym(
    i: &PartitionIndex,
    t: &TVariables,
    z: &EvaluationPoints,
    pdyn: &DynamicalParams,
    mp: &ModularParams,
) -> Result<Complex64> {
    let (layout, v, u) = additive_inputs(i, t, z, pdyn, mp)?;
    let unions = i.unions();
    let count = layout.term_count()?;
    let one = Complex64::new(1.0, 0.0);
    let term = |idx: usize| -> Result<Complex64> {
        let w = layout.permute(&v, idx);
        let mut val = one;
        for (l, level) in layout.slots.iter().enumerate() {
            let lower = &w[l];
            let upper: &[Complex64] = if l + 1 < w.len() { &w[l + 1] } else { &u };
            for (a, slot) in level.iter().enumerate() {
                let s = unions[l][a];
                let x = upper[slot.b0] - lower[a];
                val *= mp.bracket(x + slot.shift) / denominator(mp, slot.shift, "(P+h) - C")?;
                for (b, &ib) in unions[l + 1].iter().enumerate() {
                    let x = upper[b] - lower[a];
                    if ib > s {
                        val *= mp.bracket(x);
                    } else if ib < s {
                        val *= mp.bracket(x + one);
                    }
                }
                for b in a + 1..lower.len() {
                    val /= denominator(mp, lower[a] - lower[b], "v_a - v_b")?
                        * denominator(mp, lower[b] - lower[a] - one, "v_b - v_a - 1")?;
                }
            }
        }
        Ok(val)
    };
    Ok(par::try_map_indexed(count, term)?.into_iter().sum())
}

/// Chambers for the stable envelope; only `|z_1| < ... < |z_n|` is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Chamber {
    #[default]
    Increasing,
}

/// `Stab(F_I)|_{F_J} = 𝒲_{σ0(I)}(z_J^{-1}, σ0(z^{-1}), Π^{-1})`.
///
/// Since `z_j^{-1}` is entry `n+1-j` of `σ0(z^{-1})`, the variables are the
/// specialization at `σ0(J)`.
pub fn stable_envelope_restriction(
    i: &PartitionIndex,
    j: &PartitionIndex,
    z: &EvaluationPoints,
    pdyn: &DynamicalParams,
    mp: &ModularParams,
    chamber: Chamber,
) -> Result<Complex64> {
    let Chamber::Increasing = chamber;
    if i.lambda() != j.lambda() {
        return Err(Error::Shape(format!("{i} and {j} have different shapes")));
    }
    check_points(i, z)?;
    check_dyn(i, pdyn)?;
    let zr = z.inverted().reversed();
    let (ir, jr) = (i.reversed(), j.reversed());
    let pinv = pdyn.inverted();
    let t = TVariables::specialized(&jr, &zr)?;
    let (layout, v, u) = additive_inputs(&ir, &t, &zr, &pinv, mp)?;
    let (h, e) = h_and_e(&v, &u, mp)?;
    Ok(h * specialized_sum(&layout, &v, &u, mp)?.value / e)
}

/// Matrix `M[a][b] = W̃_{J_b}(z_{I_a})` over all partitions of shape `λ`, in
/// [`enumerate`] order. A numerical probe of the specialization structure.
pub fn specialization_matrix(
    lambda: &CompositionLambda,
    z: &EvaluationPoints,
    pdyn: &DynamicalParams,
    mp: &ModularParams,
) -> Result<(Vec<PartitionIndex>, CMatrix)> {
    let all = enumerate(lambda, DEFAULT_ENUMERATION_CAP)?;
    let m = all.len();
    let mut out = CMatrix::zeros(m, m);
    for (a, ia) in all.iter().enumerate() {
        for (b, jb) in all.iter().enumerate() {
            out[(a, b)] = specialize(jb, ia, z, pdyn, mp)?.value;
        }
    }
    Ok((all, out))
}

/// Worst violations of the triangular structure over all pairs of shape `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TriangularityReport {
    pub pairs: usize,
    /// `max |W̃_J(z_I)|` over pairs with `I ≰ J`.
    pub max_off_triangle: f64,
    /// `max |W̃_I(z_I) / diag(I) - 1|`.
    pub max_diagonal_rel: f64,
}

pub fn triangularity_report(
    lambda: &CompositionLambda,
    z: &EvaluationPoints,
    pdyn: &DynamicalParams,
    mp: &ModularParams,
) -> Result<TriangularityReport> {
    let all = enumerate(lambda, DEFAULT_ENUMERATION_CAP)?;
    let mut report = TriangularityReport {
        pairs: 0,
        max_off_triangle: 0.0,
        max_diagonal_rel: 0.0,
    };
    for i in &all {
        for j in &all {
            report.pairs += 1;
            let val = specialize(j, i, z, pdyn, mp)?.value;
            if i == j {
                let d = diagonal_value(i, z, mp)?;
                report.max_diagonal_rel = report.max_diagonal_rel.max((val / d - 1.0).norm());
            } else if !leq(i, j)? {
                report.max_off_triangle = report.max_off_triangle.max(val.norm());
            }
        }
    }
    Ok(report)
}
