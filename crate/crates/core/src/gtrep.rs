//! Level-0 evaluation representation, the tensor `L⁺` action, the
//! Gelfand-Tsetlin basis `ξ_I` and the current action on it.
//!
//! The bracket coefficients of the current action are evaluated in the
//! inverted spectral variables `z_i^{-1} = q^{2u_i}`, `w^{-1} = q^{2v}`,
//! matching the `z^{-1}` arguments of the change of basis. Currents are
//! related to their additive forms by
//!
//! ```text
//! e_j(w) = E_j(w) w^{(P_j - 1)/r*},    f_j(w) = F_j(w) w^{-((P+h)_j - 1)/r},
//! ```
//!
//! with `P`, `(P+h)` read on the vector before the current acts. As in the
//! single-site representation, the delta function of `e_j`, `f_j` at site `s`
//! is supported at `w = q^{j-N+1} z_s`.
//! `e^{-Q_{α_j}}` lowers `P_k` by `a_{jk}`; `F_j` lowers `(P+h)_k` by `a_{jk}`.
//! Delta functions are never evaluated: actions return their supports.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::dense::{basis_colors, basis_index, CMatrix};
use crate::ellfn::{bracket_derivative_at_zero, ModularParams, Nome};
use crate::error::{Error, Result};
use crate::rmat::{embedded, SINGULAR_TOL};
use crate::tensorspace::{
    enumerate, leq, ColorString, CompositionLambda, DynamicalParams, EvaluationPoints,
    PartitionIndex, DEFAULT_ENUMERATION_CAP,
};
use crate::weightfn::{diagonal_value, specialize};

/// Coefficients below this are dropped from tensor states.
pub const PRUNE_TOL: f64 = 1e-14;

/// Cartan matrix entry `a_{ij}` of `sl_N` (1-based).
pub fn cartan(i: usize, j: usize) -> i64 {
    match i.abs_diff(j) {
        0 => 2,
        1 => -1,
        _ => 0,
    }
}

fn cartan_row(j: usize, rank: usize) -> Vec<i64> {
    (1..rank).map(|k| cartan(j, k)).collect()
}

fn neg(v: &[i64]) -> Vec<i64> {
    v.iter().map(|x| -x).collect()
}

/// A finite linear combination of basis vectors, each tagged with an
/// integer shift of the dynamical parameters.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TensorState {
    terms: BTreeMap<(ColorString, Vec<i64>), Complex64>,
}

impl TensorState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn basis(colors: ColorString, eta: Vec<i64>) -> Self {
        let mut s = Self::new();
        s.add(colors, eta, Complex64::new(1.0, 0.0));
        s
    }

    pub fn add(&mut self, colors: ColorString, eta: Vec<i64>, coef: Complex64) {
        let key = (colors, eta);
        let v = *self.terms.entry(key.clone()).or_default() + coef;
        if v.norm() < PRUNE_TOL {
            self.terms.remove(&key);
        } else {
            self.terms.insert(key, v);
        }
    }

    pub fn coefficient(&self, colors: &ColorString, eta: &[i64]) -> Complex64 {
        self.terms
            .get(&(colors.clone(), eta.to_vec()))
            .copied()
            .unwrap_or_default()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&ColorString, &[i64], Complex64)> {
        self.terms.iter().map(|((c, e), &v)| (c, e.as_slice(), v))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        let mut out = Self::new();
        for (c, e, v) in self.terms() {
            out.add(c.clone(), e.to_vec(), v * s);
        }
        out
    }

    /// Max-norm distance, treating missing terms as zero.
    pub fn distance(&self, other: &TensorState) -> f64 {
        let mut diff = self.clone();
        for (c, e, v) in other.terms() {
            diff.terms
                .entry((c.clone(), e.to_vec()))
                .and_modify(|x| *x -= v)
                .or_insert(-v);
        }
        diff.terms.values().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// One term `δ(q^{j-N+1} z_site / w) · coefficient · ξ_target` of a current action.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Support {
    pub site: usize,
    pub point: Complex64,
    pub target: PartitionIndex,
    pub coefficient: Complex64,
    /// Shift of `P` carried by the `e^{-Q_α}` tag.
    pub eta_shift: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct CurrentActionResult {
    pub support: Vec<Support>,
}

/// Operators of the single-site evaluation representation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SiteOperator {
    E { j: usize, w: Complex64 },
    F { j: usize, w: Complex64 },
    PhiPlus { j: usize, w: Complex64 },
    PhiMinus { j: usize, w: Complex64 },
    Alpha { j: usize, m: i32 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteAction {
    pub matrix: CMatrix,
    pub eta_shift: Vec<i64>,
    /// Support point `q^{j-N+1} z` of the delta function, for `e_j`, `f_j`.
    pub support: Option<Complex64>,
}

/// Relative tolerance deciding whether `w` sits on a delta support.
pub const SUPPORT_TOL: f64 = 1e-12;

/// `π_z(op)` on `V` at level 0. For `e_j`, `f_j` the delta function is
/// evaluated structurally: the matrix is the coefficient of `δ(q^{j-N+1} z/w)`
/// when `w` equals the support point, and zero otherwise.
pub fn eval_rep_single(op: SiteOperator, z: Complex64, n_colors: usize, mp: &ModularParams) -> Result<SiteAction> {
    let mp = mp.level_zero();
    let tr = mp.truncation();
    let p = mp.p();
    let qf = |x: f64| mp.qpow(Complex64::new(x, 0.0));
    let j = match op {
        SiteOperator::E { j, .. }
        | SiteOperator::F { j, .. }
        | SiteOperator::PhiPlus { j, .. }
        | SiteOperator::PhiMinus { j, .. }
        | SiteOperator::Alpha { j, .. } => j,
    };
    if j == 0 || j >= n_colors {
        return Err(Error::param("j", format!("{j} outside 1..{n_colors}")));
    }
    let nn = n_colors as f64;
    let jj = j as f64;
    let support = z * qf(jj - nn + 1.0);
    let mut m = CMatrix::zeros(n_colors, n_colors);
    let tag = neg(&cartan_row(j, n_colors));
    let none = vec![0; n_colors - 1];
    let on_support = |w: Complex64| (w - support).norm() <= SUPPORT_TOL * w.norm().max(1.0);
    let qf_real = |x: f64| mp.q().powf(x);
    let poch = |x: f64| crate::ellfn::qpoch(Complex64::new(x, 0.0), p, &tr);
    let h = |k: usize| (k == j) as i32 as f64 - (k == j + 1) as i32 as f64;
    let out = match op {
        SiteOperator::E { w, .. } => {
            if on_support(w) {
                m[(j - 1, j)] = poch(p * qf_real(2.0))? / poch(p)?;
            }
            SiteAction { matrix: m, eta_shift: tag, support: Some(support) }
        }
        SiteOperator::F { w, .. } => {
            if on_support(w) {
                m[(j, j - 1)] = poch(p * qf_real(-2.0))? / poch(p)?;
            }
            SiteAction { matrix: m, eta_shift: none, support: Some(support) }
        }
        SiteOperator::PhiPlus { w, .. } => {
            let c = qf(-jj + nn - 1.0) * w / z;
            for k in 1..=n_colors {
                let hk = h(k);
                let den = crate::ellfn::theta(c, p, &tr)?;
                if den.norm() < SINGULAR_TOL {
                    return Err(Error::Pole(format!("φ⁺_{j} denominator vanishes at w = {w}")));
                }
                m[(k - 1, k - 1)] = qf(-hk) * crate::ellfn::theta(qf(2.0 * hk) * c, p, &tr)? / den;
            }
            SiteAction { matrix: m, eta_shift: tag, support: None }
        }
        SiteOperator::PhiMinus { w, .. } => {
            let c = qf(jj - nn + 1.0) * z / w;
            for k in 1..=n_colors {
                let hk = h(k);
                let den = crate::ellfn::theta(c, p, &tr)?;
                if den.norm() < SINGULAR_TOL {
                    return Err(Error::Pole(format!("φ⁻_{j} denominator vanishes at w = {w}")));
                }
                m[(k - 1, k - 1)] = qf(hk) * crate::ellfn::theta(qf(-2.0 * hk) * c, p, &tr)? / den;
            }
            SiteAction { matrix: m, eta_shift: tag, support: None }
        }
        SiteOperator::Alpha { m: mm, .. } => {
            if mm == 0 {
                return Err(Error::param("m", "α_{j,m} needs m ≠ 0"));
            }
            let mf = mm as f64;
            let qint = (qf(mf) - qf(-mf)) / (qf(1.0) - qf(-1.0));
            let pre = qint / mf * support.powi(mm);
            m[(j - 1, j - 1)] = pre * qf(-mf);
            m[(j, j)] = -pre * qf(mf);
            SiteAction { matrix: m, eta_shift: none, support: None }
        }
    };
    Ok(out)
}

/// `(π_{z_1} ⊗ ... ⊗ π_{z_n}) Δ'(L⁺(1/w))` on `V_0 ⊗ V^{⊗n}` (auxiliary slot
/// first): `R̄^{(0n)}(z_n/w, Π* q^{2Σ_{j<n} h^{(j)}}) ··· R̄^{(01)}(z_1/w, Π*)`,
/// with `p* = p` at level 0.
pub fn lplus_tensor(w: Complex64, z: &EvaluationPoints, pdyn: &DynamicalParams, mp: &ModularParams) -> Result<CMatrix> {
    let mp = mp.level_zero();
    let n = z.len();
    let rank = pdyn.rank();
    let v = mp.additive(w);
    let u = z.additive(&mp);
    let mut acc = CMatrix::identity(rank.pow(n as u32 + 1));
    for k in 1..=n {
        let spectators: Vec<usize> = (1..k).collect();
        let r = embedded(u[k - 1] - v, (0, k), &spectators, n + 1, pdyn, &mp, Nome::PStar)?;
        acc = r.mul(&acc);
    }
    Ok(acc)
}

/// Applies [`lplus_tensor`] to `v_aux ⊗ state`. Output color strings carry
/// the auxiliary color first.
pub fn lplus_apply(
    w: Complex64,
    aux: usize,
    state: &TensorState,
    z: &EvaluationPoints,
    pdyn: &DynamicalParams,
    mp: &ModularParams,
) -> Result<TensorState> {
    let rank = pdyn.rank();
    let n = z.len();
    let op = lplus_tensor(w, z, pdyn, mp)?;
    let mut out = TensorState::new();
    for (colors, eta, coef) in state.terms() {
        if colors.len() != n {
            return Err(Error::Shape(format!("state of length {} for n = {n}", colors.len())));
        }
        let mut full = vec![aux];
        full.extend_from_slice(colors.colors());
        let col = basis_index(&full, rank);
        for row in 0..op.rows() {
            let x = op[(row, col)];
            if x != Complex64::new(0.0, 0.0) {
                let c = ColorString::new(basis_colors(row, n + 1, rank), rank)?;
                out.add(c, eta.to_vec(), x * coef);
            }
        }
    }
    Ok(out)
}

/// `ξ_I = Σ_J W̃_J(z_I^{-1}, z^{-1}, Π q^{2Σ_j⟨ε̄_{μ_j},h⟩}) v_J`.
pub fn gt_vector(i: &PartitionIndex, z: &EvaluationPoints, pdyn: &DynamicalParams, mp: &ModularParams) -> Result<TensorState> {
    let rank = i.rank();
    let shifted = pdyn.shift(&crate::tensorspace::weight_of(&i.colors(), rank).total)?;
    let zinv = z.inverted();
    let zero = vec![0; rank - 1];
    let mut out = TensorState::new();
    for j in enumerate(&i.lambda(), DEFAULT_ENUMERATION_CAP)? {
        let c = specialize(&j, i, &zinv, &shifted, mp)?.value;
        out.add(j.colors(), zero.clone(), c);
    }
    Ok(out)
}

/// Transition matrix `M[a][b]` = coefficient of `v_{J_b}` in `ξ_{I_a}`, over
/// all partitions of shape `λ` in enumeration order.
pub fn gt_basis(
    lambda: &CompositionLambda,
    z: &EvaluationPoints,
    pdyn: &DynamicalParams,
    mp: &ModularParams,
) -> Result<(Vec<PartitionIndex>, CMatrix)> {
    let all = enumerate(lambda, DEFAULT_ENUMERATION_CAP)?;
    let zero = vec![0; lambda.rank() - 1];
    let mut m = CMatrix::zeros(all.len(), all.len());
    for (a, i) in all.iter().enumerate() {
        let xi = gt_vector(i, z, pdyn, mp)?;
        for (b, j) in all.iter().enumerate() {
            m[(a, b)] = xi.coefficient(&j.colors(), &zero);
        }
    }
    Ok((all, m))
}

/// Worst deviations of the GT transition matrix from its triangular shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GtTriangularity {
    pub max_off_triangle: f64,
    pub max_diagonal_rel: f64,
}

pub fn gt_triangularity(
    lambda: &CompositionLambda,
    z: &EvaluationPoints,
    pdyn: &DynamicalParams,
    mp: &ModularParams,
) -> Result<GtTriangularity> {
    let (all, m) = gt_basis(lambda, z, pdyn, mp)?;
    let zinv = z.inverted();
    let mut out = GtTriangularity { max_off_triangle: 0.0, max_diagonal_rel: 0.0 };
    for (a, i) in all.iter().enumerate() {
        for (b, j) in all.iter().enumerate() {
            if a == b {
                let d = diagonal_value(i, &zinv, mp)?;
                out.max_diagonal_rel = out.max_diagonal_rel.max((m[(a, b)] / d - 1.0).norm());
            } else if !leq(i, j)? {
                out.max_off_triangle = out.max_off_triangle.max(m[(a, b)].norm());
            }
        }
    }
    Ok(out)
}

/// Support of `δ(q^{j-N+1} z_s / w)`: the point where the current meets site `s`.
fn support_point(j: usize, rank: usize, zs: Complex64, mp: &ModularParams) -> Complex64 {
    zs * mp.qpow(Complex64::new(j as f64 - rank as f64 + 1.0, 0.0))
}

fn inverted_additive(z: &EvaluationPoints, mp: &ModularParams) -> Vec<Complex64> {
    z.additive(mp).into_iter().map(|u| -u).collect()
}

fn bracket_ratio(mp: &ModularParams, num: Complex64, den: Complex64) -> Result<Complex64> {
    let d = mp.bracket(den);
    if d.norm() < SINGULAR_TOL {
        return Err(Error::Pole(format!("bracket [{den}] vanishes")));
    }
    Ok(mp.bracket(num) / d)
}

fn check_j(j: usize, i: &PartitionIndex) -> Result<()> {
    if j == 0 || j >= i.rank() {
        return Err(Error::param("j", format!("{j} outside 1..{}", i.rank())));
    }
    Ok(())
}

/// Gauge constants `(a, a*)` with `a = 1` and `a a* = -[0]'/((q - q^{-1})[1])`.
pub fn gauge_constants(mp: &ModularParams) -> (Complex64, Complex64) {
    let mp = mp.level_zero();
    let q = mp.q();
    let a_star = -bracket_derivative_at_zero(&mp) / ((q - 1.0 / q) * mp.bracket(Complex64::new(1.0, 0.0)));
    (Complex64::new(1.0, 0.0), a_star)
}

/// Which expansion of `φ_j^±(w)` the caller intends; both give the same value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PhiSign {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiEigen {
    pub eigenvalue: Complex64,
    pub eta_shift: Vec<i64>,
    pub sign: PhiSign,
}

/// `φ_j^±(w) ξ_I = Π_{a∈I_j} [u_a-v+1]/[u_a-v] Π_{b∈I_{j+1}} [u_b-v-1]/[u_b-v] e^{-Q_{α_j}} ξ_I`.
pub fn phi_on_gt(
    j: usize,
    w: Complex64,
    i: &PartitionIndex,
    z: &EvaluationPoints,
    mp: &ModularParams,
    sign: PhiSign,
) -> Result<PhiEigen> {
    check_j(j, i)?;
    let mp = mp.level_zero();
    let u = inverted_additive(z, &mp);
    let v = -mp.additive(w);
    let one = Complex64::new(1.0, 0.0);
    let mut val = one;
    for &a in i.part(j) {
        val *= bracket_ratio(&mp, u[a - 1] - v + one, u[a - 1] - v)?;
    }
    for &b in i.part(j + 1) {
        val *= bracket_ratio(&mp, u[b - 1] - v - one, u[b - 1] - v)?;
    }
    Ok(PhiEigen {
        eigenvalue: val,
        eta_shift: neg(&cartan_row(j, i.rank())),
        sign,
    })
}

/// `E_j(w) ξ_I = a* Σ_{i∈I_{j+1}} δ(q^{j-N+1} z_i/w) Π_{k∈I_{j+1}, k≠i} [u_i-u_k+1]/[u_i-u_k] e^{-Q_{α_j}} ξ_{I^{i'}}`.
pub fn e_on_gt(j: usize, i: &PartitionIndex, z: &EvaluationPoints, mp: &ModularParams) -> Result<CurrentActionResult> {
    check_j(j, i)?;
    let mp = mp.level_zero();
    let u = inverted_additive(z, &mp);
    let (_, a_star) = gauge_constants(&mp);
    let one = Complex64::new(1.0, 0.0);
    let tag = neg(&cartan_row(j, i.rank()));
    let part = i.part(j + 1);
    let mut support = Vec::with_capacity(part.len());
    for &s in part {
        let mut c = a_star;
        for &k in part.iter().filter(|&&k| k != s) {
            let x = u[s - 1] - u[k - 1];
            c *= bracket_ratio(&mp, x + one, x)?;
        }
        support.push(Support {
            site: s,
            point: support_point(j, i.rank(), z.points()[s - 1], &mp),
            target: i.moved(s, j + 1, j)?,
            coefficient: c,
            eta_shift: tag.clone(),
        });
    }
    Ok(CurrentActionResult { support })
}

/// `F_j(w) ξ_I = a Σ_{i∈I_j} δ(q^{j-N+1} z_i/w) Π_{k∈I_j, k≠i} [u_k-u_i+1]/[u_k-u_i] ξ_{I^{'i}}`.
pub fn f_on_gt(j: usize, i: &PartitionIndex, z: &EvaluationPoints, mp: &ModularParams) -> Result<CurrentActionResult> {
    check_j(j, i)?;
    let mp = mp.level_zero();
    let u = inverted_additive(z, &mp);
    let (a, _) = gauge_constants(&mp);
    let one = Complex64::new(1.0, 0.0);
    let part = i.part(j);
    let mut support = Vec::with_capacity(part.len());
    for &s in part {
        let mut c = a;
        for &k in part.iter().filter(|&&k| k != s) {
            let x = u[k - 1] - u[s - 1];
            c *= bracket_ratio(&mp, x + one, x)?;
        }
        support.push(Support {
            site: s,
            point: support_point(j, i.rank(), z.points()[s - 1], &mp),
            target: i.moved(s, j, j + 1)?,
            coefficient: c,
            eta_shift: vec![0; i.rank() - 1],
        });
    }
    Ok(CurrentActionResult { support })
}

/// Current type for exchange checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Current {
    E,
    F,
}

/// Dynamical shift handling; `Ignore` is the negative control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum ShiftMode {
    #[default]
    Apply,
    Ignore,
}

/// `h_k` eigenvalue of `ξ_I`: `λ_k - λ_{k+1}`.
fn h_weight(i: &PartitionIndex) -> Vec<f64> {
    (1..i.rank())
        .map(|k| i.part(k).len() as f64 - i.part(k + 1).len() as f64)
        .collect()
}

fn cpow(w: Complex64, x: Complex64) -> Complex64 {
    (x * w.ln()).exp()
}

type Chain = BTreeMap<(usize, usize, PartitionIndex), Complex64>;

/// Applies `x_first(w_first)` then `x_second(w_second)` to `ξ_I` with the
/// multiplicative currents `e = E w^{(P-1)/r*}`, `f = F w^{-((P+h)-1)/r}`.
/// Keys are `(site of second, site of first, target)`.
#[allow(clippy::too_many_arguments)]
fn chain(
    kind: Current,
    second: usize,
    first: usize,
    i: &PartitionIndex,
    z: &EvaluationPoints,
    pdyn: &DynamicalParams,
    mp: &ModularParams,
    mode: ShiftMode,
) -> Result<Chain> {
    let rank = i.rank();
    let r = mp.r();
    let one = Complex64::new(1.0, 0.0);
    // Dynamical variable read by the conversion factor, per index k.
    let base: Vec<Complex64> = match kind {
        Current::E => {
            let h = h_weight(i);
            (1..rank).map(|k| pdyn.value(k) - h[k - 1]).collect()
        }
        Current::F => (1..rank).map(|k| pdyn.value(k)).collect(),
    };
    let act = |j: usize, idx: &PartitionIndex| match kind {
        Current::E => e_on_gt(j, idx, z, mp),
        Current::F => f_on_gt(j, idx, z, mp),
    };
    let conv = |w: Complex64, x: Complex64| match kind {
        Current::E => cpow(w, (x - one) / r),
        Current::F => cpow(w, -(x - one) / r),
    };
    let mut out = Chain::new();
    for s1 in act(first, i)?.support {
        let c1 = s1.coefficient * conv(s1.point, base[first - 1]);
        let mut after = base.clone();
        if mode == ShiftMode::Apply {
            for (k, x) in after.iter_mut().enumerate() {
                *x -= cartan(first, k + 1) as f64;
            }
        }
        for s2 in act(second, &s1.target)?.support {
            let c2 = s2.coefficient * conv(s2.point, after[second - 1]);
            *out.entry((s2.site, s1.site, s2.target)).or_default() += c1 * c2;
        }
    }
    Ok(out)
}

/// Max residual of
///
/// ```text
/// z θ(q^{±b_ij} w/z) x_i(z) x_j(w) = -w θ(q^{±b_ij} z/w) x_j(w) x_i(z)
/// ```
///
/// (`+` for `e`, `-` for `f`) on `ξ_I` over all support pairs
/// `z = z_a`, `w = z_b`, `a ≠ b`.
#[allow(clippy::too_many_arguments)]
pub fn exchange_residual(
    kind: Current,
    i_idx: usize,
    j_idx: usize,
    i: &PartitionIndex,
    z: &EvaluationPoints,
    pdyn: &DynamicalParams,
    mp: &ModularParams,
    mode: ShiftMode,
) -> Result<f64> {
    check_j(i_idx, i)?;
    check_j(j_idx, i)?;
    let mp = mp.level_zero();
    let tr = mp.truncation();
    let p = mp.p();
    let b = cartan(i_idx, j_idx) as f64;
    let qb = mp.qpow(Complex64::new(if kind == Current::E { b } else { -b }, 0.0));
    // x_i(z) x_j(w): j acts first; keys (a, b, target) with z = z_a, w = z_b.
    let lhs = chain(kind, i_idx, j_idx, i, z, pdyn, &mp, mode)?;
    // x_j(w) x_i(z): i acts first; keys come out as (b, a, target).
    let rhs: Chain = chain(kind, j_idx, i_idx, i, z, pdyn, &mp, mode)?
        .into_iter()
        .map(|((sb, sa, t), v)| ((sa, sb, t), v))
        .collect();
    let pts = z.points();
    let mut worst = 0.0f64;
    let keys: std::collections::BTreeSet<_> = lhs.keys().chain(rhs.keys()).cloned().collect();
    for key in keys {
        let (a, bb, _) = &key;
        if a == bb {
            continue;
        }
        let zz = support_point(i_idx, i.rank(), pts[a - 1], &mp);
        let ww = support_point(j_idx, i.rank(), pts[bb - 1], &mp);
        let l = lhs.get(&key).copied().unwrap_or_default() * zz * crate::ellfn::theta(qb * ww / zz, p, &tr)?;
        let r = -rhs.get(&key).copied().unwrap_or_default() * ww * crate::ellfn::theta(qb * zz / ww, p, &tr)?;
        worst = worst.max((l - r).norm());
    }
    Ok(worst)
}

/// Exchange residual for `e_j e_j` and `f_j f_j` on `ξ_I`, whichever has
/// support pairs; the maximum of both.
pub fn exchange_check(
    j: usize,
    i: &PartitionIndex,
    z: &EvaluationPoints,
    pdyn: &DynamicalParams,
    mp: &ModularParams,
) -> Result<f64> {
    let e = exchange_residual(Current::E, j, j, i, z, pdyn, mp, ShiftMode::Apply)?;
    let f = exchange_residual(Current::F, j, j, i, z, pdyn, mp, ShiftMode::Apply)?;
    Ok(e.max(f))
}

/// `|e_j(z_a) f_j(z_b) ξ_I - f_j(z_b) e_j(z_a) ξ_I|` over `a ≠ b`: the
/// support-separated part of `[e_j(z), f_j(w)]`, which must vanish.
pub fn ef_commutator_residual(
    j: usize,
    i: &PartitionIndex,
    z: &EvaluationPoints,
    pdyn: &DynamicalParams,
    mp: &ModularParams,
) -> Result<f64> {
    check_j(j, i)?;
    let mp = mp.level_zero();
    let r = mp.r();
    let one = Complex64::new(1.0, 0.0);
    let h = h_weight(i);
    let p_j = pdyn.value(j) - h[j - 1];
    let s_j = pdyn.value(j);
    let mut acc: BTreeMap<(usize, usize, PartitionIndex), Complex64> = BTreeMap::new();
    // e(z) f(w): f first reads (P+h)_j = s_j; F leaves P_j unchanged.
    for sf in f_on_gt(j, i, z, &mp)?.support {
        let cf = sf.coefficient * cpow(sf.point, -(s_j - one) / r);
        for se in e_on_gt(j, &sf.target, z, &mp)?.support {
            let ce = se.coefficient * cpow(se.point, (p_j - one) / r);
            *acc.entry((se.site, sf.site, se.target)).or_default() += cf * ce;
        }
    }
    // f(w) e(z): E lowers P_j by 2 and raises h_j by 2, so (P+h)_j is unchanged.
    for se in e_on_gt(j, i, z, &mp)?.support {
        let ce = se.coefficient * cpow(se.point, (p_j - one) / r);
        for sf in f_on_gt(j, &se.target, z, &mp)?.support {
            let cf = sf.coefficient * cpow(sf.point, -(s_j - one) / r);
            *acc.entry((se.site, sf.site, sf.target)).or_default() -= cf * ce;
        }
    }
    Ok(acc
        .into_iter()
        .filter(|((a, b, _), _)| a != b)
        .map(|(_, v)| v.norm())
        .fold(0.0, f64::max))
}

/// For each `i ∈ I_{j+1}`: `|φ_j(w; ξ_{I^{i'}}) / φ_j(w; ξ_I) - [u_i-v+1]/[u_i-v-1]|`.
pub fn phi_shadow_residual(
    j: usize,
    w: Complex64,
    i: &PartitionIndex,
    z: &EvaluationPoints,
    mp: &ModularParams,
) -> Result<f64> {
    let mp = mp.level_zero();
    let base = phi_on_gt(j, w, i, z, &mp, PhiSign::Plus)?.eigenvalue;
    let u = inverted_additive(z, &mp);
    let v = -mp.additive(w);
    let one = Complex64::new(1.0, 0.0);
    let mut worst = 0.0f64;
    for s in e_on_gt(j, i, z, &mp)?.support {
        let moved = phi_on_gt(j, w, &s.target, z, &mp, PhiSign::Minus)?.eigenvalue;
        let x = u[s.site - 1] - v;
        let want = bracket_ratio(&mp, x + one, x - one)?;
        worst = worst.max((moved / base - want).norm() / want.norm().max(1.0));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rmat::rbar_additive;
    use crate::tensorspace::index_from_colors;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn mp() -> ModularParams {
        ModularParams::new(0.5, 3.1, 0.0).unwrap()
    }

    fn idx(colors: &[usize], rank: usize) -> PartitionIndex {
        index_from_colors(&ColorString::new(colors.to_vec(), rank).unwrap(), rank).unwrap()
    }

    fn points(rng: &mut ChaCha8Rng, n: usize) -> EvaluationPoints {
        EvaluationPoints::new(
            (0..n)
                .map(|_| Complex64::from_polar(rng.random_range(0.4..0.95), rng.random_range(-3.0..3.0)))
                .collect(),
        )
        .unwrap()
    }

    fn pdyn(rng: &mut ChaCha8Rng, n_colors: usize) -> DynamicalParams {
        DynamicalParams::new(
            (1..n_colors)
                .map(|_| c(rng.random_range(0.3..2.0), rng.random_range(-0.4..0.4)))
                .collect(),
        )
    }

    #[test]
    fn site_operators() {
        let mp = ModularParams::new(0.5, 3.0, 0.0).unwrap();
        let z = c(0.7, 0.2);
        let n = 3;
        for j in 1..n {
            let w = c(0.3, -0.6);
            let plus = eval_rep_single(SiteOperator::PhiPlus { j, w }, z, n, &mp).unwrap();
            let minus = eval_rep_single(SiteOperator::PhiMinus { j, w }, z, n, &mp).unwrap();
            assert!(plus.matrix.max_abs_diff(&minus.matrix) < 1e-12);
            for k in 1..=n {
                if k != j && k != j + 1 {
                    assert!((plus.matrix[(k - 1, k - 1)] - 1.0).norm() < 1e-14);
                }
            }
            assert_eq!(plus.eta_shift, neg(&cartan_row(j, n)));

            let support = z * mp.qpow(c(j as f64 - n as f64 + 1.0, 0.0));
            let e = eval_rep_single(SiteOperator::E { j, w: support }, z, n, &mp).unwrap();
            for k in 0..n {
                for l in 0..n {
                    if (k, l) != (j - 1, j) {
                        assert_eq!(e.matrix[(k, l)], c(0.0, 0.0));
                    }
                }
            }
            assert!(e.matrix[(j - 1, j)].norm() > 0.5);
            let off = eval_rep_single(SiteOperator::E { j, w: support * 1.1 }, z, n, &mp).unwrap();
            assert_eq!(off.matrix.max_abs(), 0.0);
            let f = eval_rep_single(SiteOperator::F { j, w: support }, z, n, &mp).unwrap();
            assert!(f.matrix[(j, j - 1)].norm() > 0.5);
            assert!(f.eta_shift.iter().all(|&x| x == 0));

            let m = 3;
            let a = eval_rep_single(SiteOperator::Alpha { j, m }, z, n, &mp).unwrap();
            let q: f64 = 0.5;
            let qm = (q.powi(m) - q.powi(-m)) / (q - 1.0 / q);
            let want = qm / m as f64 * (support).powi(m) * q.powi(-m);
            assert!((a.matrix[(j - 1, j - 1)] - want).norm() < 1e-12 * want.norm());
        }
    }

    #[test]
    fn lplus_single_site_is_rbar() {
        let mp = mp();
        let pd = DynamicalParams::new(vec![c(1.2, 0.1)]);
        let z = EvaluationPoints::new(vec![c(0.4, 0.5)]).unwrap();
        let w = c(-0.3, 0.6);
        let l = lplus_tensor(w, &z, &pd, &mp).unwrap();
        // Same branch choice as lplus_tensor: u(z) - u(w).
        let u = mp.additive(z.points()[0]) - mp.additive(w);
        let r = rbar_additive(u, 2, |j, k| pd.pair(j, k), &mp, Nome::PStar).unwrap().dense();
        assert!(l.max_abs_diff(&r) < 1e-12);
    }

    #[test]
    fn lplus_two_sites_by_hand() {
        let mp = mp();
        let pd = DynamicalParams::new(vec![c(1.2, 0.1), c(0.8, -0.2)]);
        let z = EvaluationPoints::new(vec![c(0.4, 0.5), c(0.1, -0.7)]).unwrap();
        let w = c(-0.3, 0.6);
        let l = lplus_tensor(w, &z, &pd, &mp).unwrap();
        let n = 3;
        let v = mp.additive(w);
        let u = z.additive(&mp);
        // R^{(01)} with no shift, then R^{(02)} shifted by the weight of slot 1.
        let mut r01 = CMatrix::zeros(27, 27);
        let mut r02 = CMatrix::zeros(27, 27);
        let plain = rbar_additive(u[0] - v, n, |j, k| pd.pair(j, k), &mp, Nome::PStar).unwrap();
        for col in 0..27 {
            let cs = basis_colors(col, 3, n);
            for ((x, y), val) in plain.apply((cs[0], cs[1])) {
                r01[(basis_index(&[x, y, cs[2]], n), col)] += val;
            }
            let shifted = pd.shift(&crate::tensorspace::color_weight(cs[1], n)).unwrap();
            let r = rbar_additive(u[1] - v, n, |j, k| shifted.pair(j, k), &mp, Nome::PStar).unwrap();
            for ((x, y), val) in r.apply((cs[0], cs[2])) {
                r02[(basis_index(&[x, cs[1], y], n), col)] += val;
            }
        }
        assert!(l.max_abs_diff(&r02.mul(&r01)) < 1e-12);

        // Color conservation.
        let state = TensorState::basis(ColorString::new(vec![2, 3], 3).unwrap(), vec![0, 0]);
        let out = lplus_apply(w, 1, &state, &z, &pd, &mp).unwrap();
        for (cs, _, _) in out.terms() {
            let mut s = cs.colors().to_vec();
            s.sort_unstable();
            assert_eq!(s, vec![1, 2, 3]);
        }
    }

    #[test]
    fn gt_basis_is_triangular() {
        let mp = mp();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for parts in [vec![1, 1], vec![2, 1], vec![1, 1, 1], vec![2, 2], vec![1, 2, 1]] {
            let lambda = CompositionLambda::new(parts.clone()).unwrap();
            let z = points(&mut rng, lambda.n());
            let pd = pdyn(&mut rng, lambda.rank());
            let t = gt_triangularity(&lambda, &z, &pd, &mp).unwrap();
            assert!(t.max_off_triangle < 1e-10, "{parts:?} {t:?}");
            assert!(t.max_diagonal_rel < 1e-9, "{parts:?} {t:?}");
        }
        let z = EvaluationPoints::new(vec![c(0.5, 0.1)]).unwrap();
        let pd = DynamicalParams::new(vec![c(1.1, 0.0)]);
        let i = idx(&[2], 2);
        let xi = gt_vector(&i, &z, &pd, &mp).unwrap();
        assert_eq!(xi.len(), 1);
        assert!((xi.coefficient(&i.colors(), &[0]) - 1.0).norm() < 1e-14);
    }

    #[test]
    fn phi_literal_formula() {
        let mp = mp();
        let z = EvaluationPoints::new(vec![c(0.5, 0.2), c(-0.3, 0.6)]).unwrap();
        let w = c(0.2, -0.7);
        let i = idx(&[1, 2], 2);
        let got = phi_on_gt(1, w, &i, &z, &mp, PhiSign::Plus).unwrap();
        let u: Vec<_> = z.points().iter().map(|&x| -mp.additive(x)).collect();
        let v = -mp.additive(w);
        let one = c(1.0, 0.0);
        let b = |x| mp.bracket(x);
        let want = b(u[0] - v + one) * b(u[1] - v - one) / (b(u[0] - v) * b(u[1] - v));
        assert!((got.eigenvalue - want).norm() < 1e-13 * want.norm());
        assert_eq!(got.eta_shift, vec![-2]);
        let empty = idx(&[3, 3], 3);
        assert_eq!(phi_on_gt(1, w, &empty, &z, &mp, PhiSign::Minus).unwrap().eigenvalue, one);
    }

    #[test]
    fn current_action_supports() {
        let mp = mp();
        let z = EvaluationPoints::new(vec![c(0.5, 0.2), c(-0.3, 0.6)]).unwrap();
        let i = idx(&[1, 1], 2);
        assert!(e_on_gt(1, &i, &z, &mp).unwrap().support.is_empty());
        // I = ({2},{1}): E_1 moves 1 into I_1, empty product.
        let i = idx(&[2, 1], 2);
        let e = e_on_gt(1, &i, &z, &mp).unwrap();
        assert_eq!(e.support.len(), 1);
        assert_eq!(e.support[0].site, 1);
        assert_eq!(e.support[0].target, PartitionIndex::new(vec![vec![1, 2], vec![]]).unwrap());
        assert!((e.support[0].coefficient - gauge_constants(&mp).1).norm() < 1e-15);
        let f = f_on_gt(1, &i, &z, &mp).unwrap();
        assert_eq!(f.support[0].target, PartitionIndex::new(vec![vec![], vec![1, 2]]).unwrap());
    }

    #[test]
    fn exchange_relations() {
        let mp = mp();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for colors in [&[1, 1][..], &[2, 2], &[1, 2, 1], &[2, 1, 2, 2], &[1, 1, 2, 3], &[3, 2, 1, 3], &[2, 2, 3, 1]] {
            let rank = (*colors.iter().max().unwrap()).max(2);
            let i = idx(colors, rank);
            let z = points(&mut rng, colors.len());
            let pd = pdyn(&mut rng, rank);
            for a in 1..rank {
                for b in 1..rank {
                    for kind in [Current::E, Current::F] {
                        let res = exchange_residual(kind, a, b, &i, &z, &pd, &mp, ShiftMode::Apply).unwrap();
                        assert!(res < 1e-9, "{colors:?} {kind:?} {a}{b} {res}");
                    }
                }
            }
        }
    }

    #[test]
    fn ignoring_the_shift_breaks_exchange() {
        let mp = mp();
        let z = EvaluationPoints::new(vec![c(0.5, 0.2), c(-0.3, 0.6)]).unwrap();
        let pd = DynamicalParams::new(vec![c(1.3, 0.1)]);
        let i = idx(&[1, 1], 2);
        let bad = exchange_residual(Current::F, 1, 1, &i, &z, &pd, &mp, ShiftMode::Ignore).unwrap();
        assert!(bad > 1e-3, "{bad}");
        let i = idx(&[2, 2], 2);
        let bad = exchange_residual(Current::E, 1, 1, &i, &z, &pd, &mp, ShiftMode::Ignore).unwrap();
        assert!(bad > 1e-3, "{bad}");
        assert!(exchange_check(1, &i, &z, &pd, &mp).unwrap() < 1e-9);
    }

    #[test]
    fn non_adjacent_currents_commute() {
        let mp = mp();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let i = idx(&[2, 1, 4, 3], 4);
        let z = points(&mut rng, 4);
        let pd = pdyn(&mut rng, 4);
        for kind in [Current::E, Current::F] {
            assert!(exchange_residual(kind, 1, 3, &i, &z, &pd, &mp, ShiftMode::Apply).unwrap() < 1e-12);
        }
    }

    #[test]
    fn ef_commute_at_distinct_supports_and_phi_shadow() {
        let mp = mp();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for colors in [&[1, 2][..], &[2, 1, 1, 2], &[1, 2, 3], &[3, 2, 2, 1]] {
            let rank = (*colors.iter().max().unwrap()).max(2);
            let i = idx(colors, rank);
            let z = points(&mut rng, colors.len());
            let pd = pdyn(&mut rng, rank);
            for j in 1..rank {
                assert!(ef_commutator_residual(j, &i, &z, &pd, &mp).unwrap() < 1e-10);
                let w = Complex64::from_polar(0.77, 0.3);
                assert!(phi_shadow_residual(j, w, &i, &z, &mp).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn tensor_state_pruning() {
        let cs = ColorString::new(vec![1, 2], 2).unwrap();
        let mut s = TensorState::basis(cs.clone(), vec![0]);
        s.add(cs.clone(), vec![0], c(-1.0, 1e-15));
        assert!(s.is_empty());
        s.add(cs.clone(), vec![-2], c(2.0, 0.0));
        s.add(cs.clone(), vec![0], c(1.0, 0.0));
        assert_eq!(s.len(), 2);
        assert_eq!(s.coefficient(&cs, &[-2]), c(2.0, 0.0));
        assert_eq!(s.scaled(c(0.5, 0.0)).coefficient(&cs, &[-2]), c(1.0, 0.0));
        assert_eq!(s.distance(&s.clone()), 0.0);
    }
}
