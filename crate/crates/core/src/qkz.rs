//! The elliptic q-KZ integrand `e(t,Π) Φ(t,z) W̃_I(t,z,Π)`, its trigonometric
//! degeneration, and an experimental product-trapezoid estimate of the torus
//! integral.
//!
//! Level `N` of the nested variables is `t^{(N)} = z`. The integrand is
//! multivalued in `t` (principal logarithms in `e(t,Π)` and in the bracket
//! prefactors), so the torus estimate is reported with its self-convergence
//! and never claimed to be exact.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::ellfn::{ell_gamma, qpoch, ModularParams};
use crate::error::{Error, Result};
use crate::par;
use crate::tensorspace::{DynamicalParams, EvaluationPoints, PartitionIndex};
use crate::weightfn::{sym_term_count, u_tilde_additive, w_tilde, TVariables};

/// Largest number of integration variables accepted by the quadrature.
pub const MAX_TORUS_DIM: usize = 3;
/// Largest number of nodes per circle accepted by the quadrature.
pub const MAX_GRID: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Kernel {
    /// `Φ(t,z)` built on `Γ(·; p, Q)`.
    Elliptic { trace_nome: f64 },
    /// `Φ^{trig}(t,z)`, the `Q → 0` limit.
    Trig,
}

/// Everything the integrand depends on apart from `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrandSpec {
    cocycle: PartitionIndex,
    cycle: Option<PartitionIndex>,
    kernel: Kernel,
    pdyn: DynamicalParams,
    z: EvaluationPoints,
    mp: ModularParams,
}

impl IntegrandSpec {
    pub fn new(
        cocycle: PartitionIndex,
        kernel: Kernel,
        pdyn: DynamicalParams,
        z: EvaluationPoints,
        mp: ModularParams,
    ) -> Result<Self> {
        if z.len() != cocycle.n() {
            return Err(Error::Shape(format!("{} points for n = {}", z.len(), cocycle.n())));
        }
        if pdyn.rank() != cocycle.rank() {
            return Err(Error::Shape(format!(
                "dynamical parameters of rank {} for N = {}",
                pdyn.rank(),
                cocycle.rank()
            )));
        }
        let p = mp.p();
        if let Some(s) = z.points().iter().position(|x| !(x.norm() > p && x.norm() < 1.0)) {
            return Err(Error::Domain(format!(
                "need p < |z| < 1, got |z_{}| = {} with p = {p}",
                s + 1,
                z.points()[s].norm()
            )));
        }
        if let Kernel::Elliptic { trace_nome } = kernel {
            if !(trace_nome > 0.0 && trace_nome < 1.0) {
                return Err(Error::param("Q", format!("must lie in (0,1), got {trace_nome}")));
            }
            if !cocycle.lambda().is_zero_weight() {
                return Err(Error::Domain(format!(
                    "trace kernel needs zero weight λ = (m^N), got {:?}",
                    cocycle.lambda().parts()
                )));
            }
        }
        Ok(IntegrandSpec {
            cocycle,
            cycle: None,
            kernel,
            pdyn,
            z,
            mp,
        })
    }

    /// Inserts the cycle weight function `W̃_J` on the trace nome `Q`.
    pub fn with_cycle(mut self, j: PartitionIndex) -> Result<Self> {
        if !matches!(self.kernel, Kernel::Elliptic { .. }) {
            return Err(Error::param("J", "a cycle label needs the elliptic kernel"));
        }
        if j.lambda() != self.cocycle.lambda() {
            return Err(Error::Shape("I and J must have the same λ".into()));
        }
        self.cycle = Some(j);
        Ok(self)
    }

    pub fn cocycle(&self) -> &PartitionIndex {
        &self.cocycle
    }
    pub fn cycle(&self) -> Option<&PartitionIndex> {
        self.cycle.as_ref()
    }
    pub fn kernel(&self) -> Kernel {
        self.kernel
    }
    pub fn points(&self) -> &EvaluationPoints {
        &self.z
    }
    pub fn dynamical(&self) -> &DynamicalParams {
        &self.pdyn
    }
    pub fn params(&self) -> &ModularParams {
        &self.mp
    }

    /// Number of integration variables `M = Σ_{l<N} λ^{(l)}`.
    pub fn dimension(&self) -> usize {
        let lambda = self.cocycle.lambda();
        (1..lambda.rank()).map(|l| lambda.partial(l)).sum()
    }
}

/// `e(t,Π) = exp(Σ_l log(Π_l/Π_{l+1}) Σ_a log t^{(l)}_a / log p)` with
/// `log(Π_l/Π_{l+1}) = 2 ln q (P_l + eta_l)`.
pub fn e_factor(t: &TVariables, pdyn: &DynamicalParams, mp: &ModularParams) -> Result<Complex64> {
    if t.levels().len() + 1 != pdyn.rank() {
        return Err(Error::Shape(format!(
            "{} t-levels for N = {}",
            t.levels().len(),
            pdyn.rank()
        )));
    }
    let ln_p = mp.p().ln();
    let exponent: Complex64 = t
        .levels()
        .iter()
        .enumerate()
        .map(|(l, level)| {
            let log_ratio = 2.0 * mp.ln_q() * pdyn.value(l + 1);
            let logs: Complex64 = level.iter().map(|x| x.ln()).sum();
            log_ratio * logs
        })
        .sum();
    Ok((exponent / ln_p).exp())
}

fn full_levels(t: &TVariables, z: &EvaluationPoints) -> Vec<Vec<Complex64>> {
    let mut levels = t.levels().to_vec();
    levels.push(z.points().to_vec());
    levels
}

fn check_levels(t: &TVariables, z: &EvaluationPoints) -> Result<()> {
    if let Some(last) = t.levels().last() {
        if last.len() > z.len() {
            return Err(Error::Shape(format!(
                "top t-level has {} variables but only {} points",
                last.len(),
                z.len()
            )));
        }
    }
    Ok(())
}

/// Product over the cross-level block `(a, b)` and the in-level pairs `a < b`
/// of `cross(t^{(l)}_a / t^{(l+1)}_b)` and `pair(t^{(l)}_a / t^{(l)}_b)`.
fn kernel_product(
    t: &TVariables,
    z: &EvaluationPoints,
    cross: impl Fn(Complex64, usize, usize, usize) -> Result<Complex64>,
    pair: impl Fn(Complex64, Complex64, usize, usize, usize) -> Result<Complex64>,
) -> Result<Complex64> {
    check_levels(t, z)?;
    let levels = full_levels(t, z);
    let mut out = Complex64::new(1.0, 0.0);
    for l in 0..levels.len() - 1 {
        let (lower, upper) = (&levels[l], &levels[l + 1]);
        for (a, ta) in lower.iter().enumerate() {
            for (b, tb) in upper.iter().enumerate() {
                out *= cross(ta / tb, l + 1, a + 1, b + 1)?;
            }
        }
        for a in 0..lower.len() {
            for b in a + 1..lower.len() {
                out *= pair(lower[a] / lower[b], lower[b] / lower[a], l + 1, a + 1, b + 1)?;
            }
        }
    }
    Ok(out)
}

fn located(e: Error, what: &str, l: usize, a: usize, b: usize) -> Error {
    match e {
        Error::GammaPole { m, n } => Error::Pole(format!(
            "{what} at level {l}, (a, b) = ({a}, {b}), Gamma factor (m={m}, n={n})"
        )),
        other => other,
    }
}

/// The elliptic kernel `Φ(t,z)` with `Γ(·; p, Q)`.
pub fn phi_kernel(t: &TVariables, z: &EvaluationPoints, mp: &ModularParams, trace_nome: f64) -> Result<Complex64> {
    let (p, ps) = (mp.p(), mp.p_star());
    let tr = mp.truncation();
    let g = |x: Complex64| ell_gamma(x, p, trace_nome, &tr);
    kernel_product(
        t,
        z,
        |x, l, a, b| {
            let ratio = || Ok(g(x)? / g(ps * x)?);
            ratio().map_err(|e| located(e, "cross-level", l, a, b))
        },
        |x, y, l, a, b| {
            let ratio = || Ok(g(ps * x)? * g(ps * y)? / (g(x)? * g(y)?));
            ratio().map_err(|e| located(e, "in-level", l, a, b))
        },
    )
}

/// The trigonometric kernel `Φ^{trig}(t,z)` with `(·; p)_∞`.
pub fn phi_trig(t: &TVariables, z: &EvaluationPoints, mp: &ModularParams) -> Result<Complex64> {
    let (p, ps) = (mp.p(), mp.p_star());
    let tr = mp.truncation();
    let poch = |x: Complex64| qpoch(x, p, &tr);
    let nonzero = |d: Complex64, what: &str, l: usize, a: usize, b: usize| {
        if d.norm() < 1e-300 {
            Err(Error::Pole(format!("{what} at level {l}, (a, b) = ({a}, {b})")))
        } else {
            Ok(d)
        }
    };
    kernel_product(
        t,
        z,
        |x, l, a, b| Ok(poch(ps * x)? / nonzero(poch(x)?, "cross-level", l, a, b)?),
        |x, y, l, a, b| {
            let den = nonzero(poch(ps * x)? * poch(ps * y)?, "in-level", l, a, b)?;
            Ok(poch(x)? * poch(y)? / den)
        },
    )
}

/// The separate factors of the integrand at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegrandParts {
    pub e: Complex64,
    pub phi: Complex64,
    pub w_cocycle: Complex64,
    pub w_cycle: Option<Complex64>,
    pub value: Complex64,
}

pub fn integrand_parts(spec: &IntegrandSpec, t: &TVariables) -> Result<IntegrandParts> {
    let mp = &spec.mp;
    let e = e_factor(t, &spec.pdyn, mp)?;
    let phi = match spec.kernel {
        Kernel::Elliptic { trace_nome } => phi_kernel(t, &spec.z, mp, trace_nome)?,
        Kernel::Trig => phi_trig(t, &spec.z, mp)?,
    };
    let w_cocycle = w_tilde(&spec.cocycle, t, &spec.z, &spec.pdyn, mp)?.value;
    let w_cycle = match (&spec.cycle, spec.kernel) {
        (Some(j), Kernel::Elliptic { trace_nome }) => {
            let mq = mp.with_nome(trace_nome)?;
            Some(w_tilde(j, t, &spec.z, &spec.pdyn, &mq)?.value)
        }
        _ => None,
    };
    let value = e * phi * w_cocycle * w_cycle.unwrap_or(Complex64::new(1.0, 0.0));
    Ok(IntegrandParts {
        e,
        phi,
        w_cocycle,
        w_cycle,
        value,
    })
}

/// `e · Φ · W̃_I (· W̃_J on nome Q)` at `t`.
pub fn integrand(spec: &IntegrandSpec, t: &TVariables) -> Result<Complex64> {
    Ok(integrand_parts(spec, t)?.value)
}

/// Phase offset of variable `v` in units of the grid step. Distinct
/// non-integer offsets keep different variables off each other's nodes.
fn node_offset(v: usize, dim: usize) -> f64 {
    (v as f64 + 0.5) / (dim as f64 + 1.0)
}

fn node_angle(v: usize, k: usize, dim: usize, m0: usize) -> f64 {
    let theta = 2.0 * PI * (k as f64 + node_offset(v, dim)) / m0 as f64;
    if theta > PI {
        theta - 2.0 * PI
    } else {
        theta
    }
}

/// Node `k` of variable `v` on a circle with `m0` nodes.
pub fn torus_node(v: usize, k: usize, dim: usize, m0: usize) -> Complex64 {
    Complex64::from_polar(1.0, node_angle(v, k, dim, m0))
}

fn check_grid(dim: usize, m0: usize) -> Result<()> {
    if dim == 0 || dim > MAX_TORUS_DIM {
        return Err(Error::CapExceeded(format!(
            "torus dimension {dim} outside 1..={MAX_TORUS_DIM}"
        )));
    }
    if m0 == 0 || m0 > MAX_GRID {
        return Err(Error::CapExceeded(format!("grid size {m0} outside 1..={MAX_GRID}")));
    }
    Ok(())
}

/// `Σ_nodes f(nodes) Π_v weights[v][k_v]` over the product grid, with
/// `sizes[l]` variables on level `l`. Nodes are evaluated in parallel and
/// summed in index order.
fn torus_sum<F>(sizes: &[usize], m0: usize, weights: &[Vec<Complex64>], f: F) -> Result<Complex64>
where
    F: Fn(&[Vec<Complex64>]) -> Result<Complex64> + Sync + Send,
{
    let dim: usize = sizes.iter().sum();
    let total = m0.pow(dim as u32);
    let values = par::try_map_indexed(total, |idx| {
        let mut rest = idx;
        let mut v = 0;
        let mut weight = Complex64::new(1.0, 0.0);
        let mut levels = Vec::with_capacity(sizes.len());
        for &s in sizes {
            let mut level = Vec::with_capacity(s);
            for _ in 0..s {
                let k = rest % m0;
                level.push(torus_node(v, k, dim, m0));
                weight *= weights[v][k];
                rest /= m0;
                v += 1;
            }
            levels.push(level);
        }
        Ok::<_, Error>(weight * f(&levels)?)
    })?;
    Ok(values.into_iter().sum())
}

/// Product-trapezoid mean of `f` over the unit torus.
pub fn torus_mean<F>(sizes: &[usize], m0: usize, f: F) -> Result<Complex64>
where
    F: Fn(&[Vec<Complex64>]) -> Result<Complex64> + Sync + Send,
{
    let dim: usize = sizes.iter().sum();
    let uniform = vec![vec![Complex64::new(1.0 / m0 as f64, 0.0); m0]; dim];
    torus_sum(sizes, m0, &uniform, f)
}

fn sinc_pi(x: Complex64) -> Complex64 {
    let y = x * PI;
    if y.norm() < 1e-6 {
        1.0 - y * y / 6.0
    } else {
        y.sin() / y
    }
}

/// Node weights for `∫_{-π}^{π} t^α h(t) dθ/2π` with `h` single valued and
/// sampled at the nodes of variable `v`: the discrete Fourier coefficients of
/// `h` integrated exactly against the principal branch of `t^α`.
pub fn branch_weights(alpha: Complex64, v: usize, dim: usize, m0: usize) -> Vec<Complex64> {
    let half = (m0 / 2) as i64;
    (0..m0)
        .map(|j| {
            let theta = node_angle(v, j, dim, m0);
            let sum: Complex64 = (-half..m0 as i64 - half)
                .map(|k| Complex64::from_polar(1.0, -(k as f64) * theta) * sinc_pi(alpha + k as f64))
                .sum();
            sum / m0 as f64
        })
        .collect()
}

/// Shared data of the branch-resolved integrand.
struct Resolved<'a> {
    spec: &'a IntegrandSpec,
    u: Vec<Complex64>,
    cycle_params: Option<ModularParams>,
    multiplicity: f64,
}

impl<'a> Resolved<'a> {
    fn new(spec: &'a IntegrandSpec) -> Result<Self> {
        let cycle_params = match (spec.cycle.is_some(), spec.kernel) {
            (true, Kernel::Elliptic { trace_nome }) => Some(spec.mp.with_nome(trace_nome)?),
            _ => None,
        };
        Ok(Resolved {
            spec,
            u: spec.z.additive(&spec.mp),
            cycle_params,
            multiplicity: sym_term_count(&spec.cocycle, &spec.pdyn)? as f64,
        })
    }

    fn terms(&self) -> Result<usize> {
        match &self.spec.cycle {
            Some(j) => sym_term_count(j, &self.spec.pdyn),
            None => Ok(1),
        }
    }

    /// `e · Ũ_I (· Ũ_J on nome Q, permuted by `term`)` at additive `v`: the
    /// part of one summand that is multivalued in `t`.
    fn branch_part(&self, v: &[Vec<Complex64>], term: usize) -> Result<Complex64> {
        let spec = self.spec;
        let mp = &spec.mp;
        let ln_p = mp.p().ln();
        let exponent: Complex64 = v
            .iter()
            .enumerate()
            .map(|(l, level)| {
                let logs: Complex64 = level.iter().map(|x| 2.0 * mp.ln_q() * x).sum();
                2.0 * mp.ln_q() * spec.pdyn.value(l + 1) * logs
            })
            .sum();
        let mut val = (exponent / ln_p).exp() * u_tilde_additive(&spec.cocycle, v, &self.u, &spec.pdyn, mp, 0)?;
        if let (Some(j), Some(mq)) = (&spec.cycle, &self.cycle_params) {
            val *= u_tilde_additive(j, v, &self.u, &spec.pdyn, mq, term)?;
        }
        Ok(val * self.multiplicity)
    }

    fn kernel(&self, t: &TVariables) -> Result<Complex64> {
        match self.spec.kernel {
            Kernel::Elliptic { trace_nome } => phi_kernel(t, &self.spec.z, &self.spec.mp, trace_nome),
            Kernel::Trig => phi_trig(t, &self.spec.z, &self.spec.mp),
        }
    }

    fn additive(&self, levels: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        levels
            .iter()
            .map(|lv| lv.iter().map(|&t| self.spec.mp.additive(t)).collect())
            .collect()
    }

    /// Exponents `α_k` with `summand(t_k e^{2πi}) = e^{2πi α_k} summand(t)`,
    /// checked to be the same at two base points.
    fn exponents(&self, sizes: &[usize], term: usize) -> Result<Vec<Complex64>> {
        let dim: usize = sizes.iter().sum();
        let turn = Complex64::new(0.0, PI / self.spec.mp.ln_q());
        let at = |phase: f64, step: f64| -> Result<Vec<Complex64>> {
            let mut k = 0;
            let levels: Vec<Vec<Complex64>> = sizes
                .iter()
                .map(|&s| {
                    (0..s)
                        .map(|_| {
                            k += 1;
                            Complex64::from_polar(1.0, phase + step * k as f64)
                        })
                        .collect()
                })
                .collect();
            let v = self.additive(&levels);
            let base = self.branch_part(&v, term)?;
            let mut out = Vec::with_capacity(dim);
            for l in 0..v.len() {
                for a in 0..v[l].len() {
                    let mut w = v.clone();
                    w[l][a] += turn;
                    let ratio = self.branch_part(&w, term)? / base;
                    out.push(ratio.ln() / Complex64::new(0.0, 2.0 * PI));
                }
            }
            Ok(out)
        };
        let first = at(0.37, 0.83)?;
        let second = at(-1.21, 1.07)?;
        let spread = first.iter().zip(&second).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if spread.is_nan() || spread >= 1e-8 {
            return Err(Error::Domain(format!(
                "integrand monodromy is not a constant phase (spread {spread:.2e})"
            )));
        }
        Ok(first)
    }

    fn integrate(&self, sizes: &[usize], m0: usize) -> Result<Complex64> {
        let dim: usize = sizes.iter().sum();
        let lambda = self.spec.cocycle.lambda();
        let mut total = Complex64::new(0.0, 0.0);
        for term in 0..self.terms()? {
            let alpha = self.exponents(sizes, term)?;
            let weights: Vec<Vec<Complex64>> =
                (0..dim).map(|v| branch_weights(alpha[v], v, dim, m0)).collect();
            total += torus_sum(sizes, m0, &weights, |levels| {
                let t = TVariables::new(levels.to_vec(), &lambda)?;
                let v = self.additive(levels);
                let undo: Complex64 = levels
                    .iter()
                    .flatten()
                    .zip(&alpha)
                    .map(|(t, a)| (-a * t.ln()).exp())
                    .product();
                Ok(self.branch_part(&v, term)? * self.kernel(&t)? * undo)
            })?;
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureReport {
    pub dimension: usize,
    pub grid: usize,
    /// Branch-resolved estimate with `grid` nodes per circle.
    pub coarse: Complex64,
    /// Branch-resolved estimate with `2 grid` nodes per circle.
    pub fine: Complex64,
    pub difference: f64,
    pub relative_difference: f64,
    /// Plain product trapezoid with `grid` and `2 grid` nodes.
    pub trapezoid_coarse: Complex64,
    pub trapezoid_fine: Complex64,
}

fn level_sizes(spec: &IntegrandSpec) -> Vec<usize> {
    let lambda = spec.cocycle.lambda();
    (1..lambda.rank()).map(|l| lambda.partial(l)).collect()
}

/// Experimental torus integral `∮ Π dt/(2πi t) (integrand)` on the principal
/// branch, compared between `m0` and `2 m0` nodes per circle.
///
/// Each summand of the integrand picks up a constant phase `e^{2πi α}` when
/// one variable winds once, so on the principal branch it jumps across the
/// negative real axis and the plain trapezoid converges only at first order.
/// The branch-resolved estimate integrates one summand per cycle term (the
/// others follow by relabeling), divides out `t^α`, and integrates the
/// remaining periodic part against `t^α` exactly.
pub fn torus_quadrature(spec: &IntegrandSpec, m0: usize) -> Result<QuadratureReport> {
    let dim = spec.dimension();
    check_grid(dim, m0)?;
    let sizes = level_sizes(spec);
    let resolved = Resolved::new(spec)?;
    let coarse = resolved.integrate(&sizes, m0)?;
    let fine = resolved.integrate(&sizes, 2 * m0)?;
    let lambda = spec.cocycle.lambda();
    let plain = |levels: &[Vec<Complex64>]| integrand(spec, &TVariables::new(levels.to_vec(), &lambda)?);
    let difference = (fine - coarse).norm();
    Ok(QuadratureReport {
        dimension: dim,
        grid: m0,
        coarse,
        fine,
        difference,
        relative_difference: difference / fine.norm().max(f64::MIN_POSITIVE),
        trapezoid_coarse: torus_mean(&sizes, m0, plain)?,
        trapezoid_fine: torus_mean(&sizes, 2 * m0, plain)?,
    })
}

/// Integrand values at every node of the `m0` grid, in grid order
/// (variable 1 fastest).
pub fn torus_grid(spec: &IntegrandSpec, m0: usize) -> Result<Vec<(Vec<Complex64>, Complex64)>> {
    let dim = spec.dimension();
    check_grid(dim, m0)?;
    let lambda = spec.cocycle.lambda();
    let sizes = level_sizes(spec);
    let total = m0.pow(dim as u32);
    par::try_map_indexed(total, |idx| {
        let mut rest = idx;
        let mut flat = Vec::with_capacity(dim);
        for v in 0..dim {
            flat.push(torus_node(v, rest % m0, dim, m0));
            rest /= m0;
        }
        let mut levels = Vec::new();
        let mut it = flat.iter().copied();
        for &s in &sizes {
            levels.push(it.by_ref().take(s).collect());
        }
        let t = TVariables::new(levels, &lambda)?;
        Ok((flat, integrand(spec, &t)?))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorspace::CompositionLambda;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn mp() -> ModularParams {
        ModularParams::new(0.5, 3.0, 1.0).unwrap()
    }

    fn idx(parts: Vec<Vec<usize>>) -> PartitionIndex {
        PartitionIndex::new(parts).unwrap()
    }

    fn pts(v: Vec<Complex64>) -> EvaluationPoints {
        EvaluationPoints::new(v).unwrap()
    }

    fn tv(levels: Vec<Vec<Complex64>>, lambda: &[usize]) -> TVariables {
        TVariables::new(levels, &CompositionLambda::new(lambda.to_vec()).unwrap()).unwrap()
    }

    fn n3_setup() -> (TVariables, EvaluationPoints, DynamicalParams) {
        let t = tv(
            vec![vec![c(0.9, 0.3)], vec![c(-0.4, 0.8), c(0.6, -0.7)]],
            &[1, 1, 1],
        );
        let z = pts(vec![c(0.5, 0.2), c(-0.3, 0.6), c(0.1, -0.7)]);
        let pd = DynamicalParams::new(vec![c(1.7, 0.1), c(-0.6, 0.2)]);
        (t, z, pd)
    }

    #[test]
    fn e_factor_trivial_cases() {
        let m = mp();
        let (t, _, _) = n3_setup();
        let flat = DynamicalParams::new(vec![c(0.0, 0.0), c(0.0, 0.0)]);
        assert!((e_factor(&t, &flat, &m).unwrap() - 1.0).norm() < 1e-15);
        let ones = tv(vec![vec![c(1.0, 0.0)], vec![c(1.0, 0.0); 2]], &[1, 1, 1]);
        let pd = DynamicalParams::new(vec![c(1.3, 0.0), c(0.4, 0.0)]);
        assert!((e_factor(&ones, &pd, &m).unwrap() - 1.0).norm() < 1e-15);
    }

    #[test]
    fn e_factor_p_shift_covariance() {
        let m = mp();
        let (t, _, pd) = n3_setup();
        let base = e_factor(&t, &pd, &m).unwrap();
        for l in 1..=2 {
            for a in 0..t.levels()[l - 1].len() {
                let mut levels = t.levels().to_vec();
                levels[l - 1][a] *= m.p();
                let shifted = tv(levels, &[1, 1, 1]);
                let ratio = e_factor(&shifted, &pd, &m).unwrap() / base;
                // Π_l / Π_{l+1} = q^{2 (P_l + eta_l)}
                let want = m.qpow(2.0 * pd.value(l));
                assert!((ratio - want).norm() < 1e-12 * want.norm(), "l={l} a={a}");
            }
        }
    }

    fn phi_trig_oracle(t: &TVariables, z: &EvaluationPoints, m: &ModularParams) -> Complex64 {
        // independent transcription with explicit finite products
        let poch = |x: Complex64| (0..400).fold(c(1.0, 0.0), |acc, n| acc * (1.0 - x * m.p().powi(n)));
        let mut levels = t.levels().to_vec();
        levels.push(z.points().to_vec());
        let ps = m.p_star();
        let mut out = c(1.0, 0.0);
        for l in 0..levels.len() - 1 {
            for ta in &levels[l] {
                for tb in &levels[l + 1] {
                    out *= poch(ps * ta / tb) / poch(ta / tb);
                }
            }
            let lv = &levels[l];
            for a in 0..lv.len() {
                for b in a + 1..lv.len() {
                    let (x, y) = (lv[a] / lv[b], lv[b] / lv[a]);
                    out *= poch(x) * poch(y) / (poch(ps * x) * poch(ps * y));
                }
            }
        }
        out
    }

    #[test]
    fn phi_trig_matches_product_oracle() {
        let m = mp();
        let (t, z, _) = n3_setup();
        let got = phi_trig(&t, &z, &m).unwrap();
        let want = phi_trig_oracle(&t, &z, &m);
        assert!((got - want).norm() < 1e-12 * want.norm());
    }

    #[test]
    fn phi_trig_at_level_zero_reduces_to_rational_factors() {
        // p* = p: (p x; p)/(x; p) = 1/(1-x) and the pair block is (1-x)(1-1/x)
        let m = mp().level_zero();
        let (t, z, _) = n3_setup();
        let mut levels = t.levels().to_vec();
        levels.push(z.points().to_vec());
        let mut want = c(1.0, 0.0);
        for l in 0..2 {
            for ta in &levels[l] {
                for tb in &levels[l + 1] {
                    want /= 1.0 - ta / tb;
                }
            }
            let lv = &levels[l];
            for a in 0..lv.len() {
                for b in a + 1..lv.len() {
                    let x = lv[a] / lv[b];
                    want *= (1.0 - x) * (1.0 - 1.0 / x);
                }
            }
        }
        let got = phi_trig(&t, &z, &m).unwrap();
        assert!((got - want).norm() < 1e-12 * want.norm());
    }

    #[test]
    fn elliptic_kernel_degenerates_to_trig() {
        let m = mp();
        let (t, z, _) = n3_setup();
        let trig = phi_trig(&t, &z, &m).unwrap();
        let ell = phi_kernel(&t, &z, &m, 1e-6).unwrap();
        assert!((ell - trig).norm() < 1e-4 * trig.norm());
        let far = phi_kernel(&t, &z, &m, 0.3).unwrap();
        assert!((far - trig).norm() > 1e-3 * trig.norm());
    }

    #[test]
    fn single_variable_kernel_is_cross_level_only() {
        let m = mp();
        let t = tv(vec![vec![c(0.8, 0.6)]], &[1, 1]);
        let z = pts(vec![c(0.5, 0.1), c(-0.2, 0.6)]);
        let tr = m.truncation();
        let g = |x: Complex64| ell_gamma(x, m.p(), 0.01, &tr).unwrap();
        let t1 = t.levels()[0][0];
        let want: Complex64 = z.points().iter().map(|zb| g(t1 / zb) / g(m.p_star() * t1 / zb)).product();
        let got = phi_kernel(&t, &z, &m, 0.01).unwrap();
        assert!((got - want).norm() < 1e-12 * want.norm());
    }

    #[test]
    fn kernel_is_symmetric_within_levels() {
        let m = mp();
        let (t, z, _) = n3_setup();
        let swapped = t.permuted(2, &[1, 0]).unwrap();
        for q in [Some(0.05), None] {
            let (a, b) = match q {
                Some(q) => (phi_kernel(&t, &z, &m, q).unwrap(), phi_kernel(&swapped, &z, &m, q).unwrap()),
                None => (phi_trig(&t, &z, &m).unwrap(), phi_trig(&swapped, &z, &m).unwrap()),
            };
            assert!((a - b).norm() < 1e-12 * a.norm());
        }
    }

    #[test]
    fn kernel_pole_reports_location() {
        let m = mp();
        let z = pts(vec![c(0.5, 0.1), c(-0.2, 0.6)]);
        let t = tv(vec![vec![z.points()[1]]], &[1, 1]);
        match phi_kernel(&t, &z, &m, 0.01) {
            Err(Error::Pole(msg)) => assert!(msg.contains("cross-level") && msg.contains("(1, 2)"), "{msg}"),
            other => panic!("expected a pole, got {other:?}"),
        }
    }

    #[test]
    fn spec_validation() {
        let m = mp();
        let i = idx(vec![vec![1], vec![2]]);
        let pd = DynamicalParams::new(vec![c(1.7, 0.0)]);
        let inside = pts(vec![c(0.5, 0.1), c(-0.2, 0.6)]);
        let spec = IntegrandSpec::new(i.clone(), Kernel::Elliptic { trace_nome: 0.1 }, pd.clone(), inside.clone(), m);
        assert!(spec.is_ok());
        let on_circle = pts(vec![c(1.0, 0.0), c(-0.2, 0.6)]);
        assert!(matches!(
            IntegrandSpec::new(i.clone(), Kernel::Trig, pd.clone(), on_circle, m),
            Err(Error::Domain(_))
        ));
        let unbalanced = idx(vec![vec![1, 2], vec![3]]);
        let z3 = pts(vec![c(0.5, 0.1), c(-0.2, 0.6), c(0.3, -0.4)]);
        assert!(matches!(
            IntegrandSpec::new(unbalanced.clone(), Kernel::Elliptic { trace_nome: 0.1 }, pd.clone(), z3.clone(), m),
            Err(Error::Domain(_))
        ));
        let trig = IntegrandSpec::new(unbalanced, Kernel::Trig, pd, z3, m).unwrap();
        assert!(trig.clone().with_cycle(idx(vec![vec![1, 3], vec![2]])).is_err());
        assert_eq!(trig.dimension(), 2);
    }

    #[test]
    fn integrand_components_multiply() {
        let m = mp();
        let i = idx(vec![vec![2], vec![1]]);
        let j = idx(vec![vec![1], vec![2]]);
        let pd = DynamicalParams::new(vec![c(1.7, 0.1)]);
        let z = pts(vec![c(0.5, 0.1), c(-0.2, 0.6)]);
        let spec = IntegrandSpec::new(i.clone(), Kernel::Elliptic { trace_nome: 0.05 }, pd.clone(), z.clone(), m)
            .unwrap()
            .with_cycle(j.clone())
            .unwrap();
        let t = tv(vec![vec![c(0.6, 0.8)]], &[1, 1]);
        let parts = integrand_parts(&spec, &t).unwrap();
        let mq = m.with_nome(0.05).unwrap();
        let wj = w_tilde(&j, &t, &z, &pd, &mq).unwrap().value;
        assert!((parts.w_cycle.unwrap() - wj).norm() < 1e-14 * wj.norm());
        let want = e_factor(&t, &pd, &m).unwrap() * phi_kernel(&t, &z, &m, 0.05).unwrap()
            * w_tilde(&i, &t, &z, &pd, &m).unwrap().value
            * wj;
        assert!((parts.value - want).norm() < 1e-13 * want.norm());
        assert!(parts.value.is_finite());
    }

    #[test]
    fn trapezoid_is_exact_on_trigonometric_polynomials() {
        let constant = torus_mean(&[1, 2], 8, |_| Ok(c(2.5, -1.0))).unwrap();
        assert!((constant - c(2.5, -1.0)).norm() < 1e-14);
        for k in [1i32, -3, 7] {
            let mean = torus_mean(&[1, 2], 8, |lv| Ok(lv[1][0].powi(k) * lv[0][0])).unwrap();
            assert!(mean.norm() < 1e-14, "k={k}");
        }
        // t1 t2^{-1}: constant term vanishes unless exponents cancel on one variable
        let mixed = torus_mean(&[2], 16, |lv| Ok(lv[0][0] * lv[0][0].inv() + lv[0][1])).unwrap();
        assert!((mixed - 1.0).norm() < 1e-14);
    }

    #[test]
    fn grid_caps() {
        let m = mp();
        let spec = IntegrandSpec::new(
            idx(vec![vec![1], vec![2]]),
            Kernel::Trig,
            DynamicalParams::new(vec![c(1.7, 0.0)]),
            pts(vec![c(0.5, 0.1), c(-0.2, 0.6)]),
            m,
        )
        .unwrap();
        assert!(matches!(torus_quadrature(&spec, 65), Err(Error::CapExceeded(_))));
        let big = IntegrandSpec::new(
            idx(vec![vec![1, 3], vec![2, 4]]),
            Kernel::Trig,
            DynamicalParams::new(vec![c(1.7, 0.0)]),
            pts(vec![c(0.5, 0.1), c(-0.2, 0.6), c(0.3, -0.4), c(0.6, 0.2)]),
            m,
        )
        .unwrap();
        assert_eq!(big.dimension(), 2);
        let grid = torus_grid(&spec, 4).unwrap();
        assert_eq!(grid.len(), 4);
        assert!((grid[1].0[0] - torus_node(0, 1, 1, 4)).norm() == 0.0);
    }

    #[test]
    fn branch_weights_integrate_powers_exactly() {
        let alpha = c(0.37, 0.1);
        // ∫ e^{i(k+α)θ} dθ/2π over (-π, π) = sin(π(k+α))/(π(k+α))
        let exact = |k: f64| (PI * (alpha + k)).sin() / (PI * (alpha + k));
        let want = exact(0.0) + 0.3 * exact(1.0) + 0.2 * exact(-1.0);
        for dim in [1, 2] {
            let w = branch_weights(alpha, dim - 1, dim, 8);
            let got: Complex64 = (0..8)
                .map(|j| {
                    let t = torus_node(dim - 1, j, dim, 8);
                    w[j] * (1.0 + 0.3 * t + 0.2 / t)
                })
                .sum();
            assert!((got - want).norm() < 1e-14, "dim={dim}");
        }
        let plain = branch_weights(c(0.0, 0.0), 0, 1, 8);
        assert!(plain.iter().all(|w| (w - 0.125).norm() < 1e-15));
    }

    #[test]
    fn summands_rebuild_the_weight_function() {
        let m = mp();
        let (t, z, pd) = n3_setup();
        let i = idx(vec![vec![2], vec![3], vec![1]]);
        let v = t.additive(&m);
        let u = z.additive(&m);
        let count = sym_term_count(&i, &pd).unwrap();
        assert_eq!(count, 2);
        let sum: Complex64 = (0..count).map(|k| u_tilde_additive(&i, &v, &u, &pd, &m, k).unwrap()).sum();
        let want = w_tilde(&i, &t, &z, &pd, &m).unwrap().value;
        assert!((sum - want).norm() < 1e-13 * want.norm());
    }

    fn n2_spec(parts: Vec<Vec<usize>>, kernel: Kernel, m: ModularParams) -> IntegrandSpec {
        IntegrandSpec::new(
            idx(parts),
            kernel,
            DynamicalParams::new(vec![c(1.7, 0.2)]),
            pts(vec![c(0.4, 0.1), c(-0.2, 0.35)]),
            m,
        )
        .unwrap()
    }

    #[test]
    fn monodromy_is_a_root_of_unity_in_r() {
        for (r, k) in [(3.0, 1.0), (4.0, 0.0), (2.5, 0.5)] {
            let m = ModularParams::new(0.5, r, k).unwrap();
            for parts in [vec![vec![1], vec![2]], vec![vec![2], vec![1]]] {
                let spec = n2_spec(parts, Kernel::Trig, m);
                let alpha = Resolved::new(&spec).unwrap().exponents(&[1], 0).unwrap()[0];
                let frac = 1.0 / r - (1.0 / r).round();
                assert!((alpha - frac).norm() < 1e-10, "r={r}: α = {alpha}");
            }
        }
    }

    #[test]
    fn trig_quadrature_self_convergence() {
        let m = mp();
        for parts in [vec![vec![1], vec![2]], vec![vec![2], vec![1]]] {
            let spec = n2_spec(parts, Kernel::Trig, m);
            let r32 = torus_quadrature(&spec, 32).unwrap();
            assert!(r32.relative_difference < 1e-6, "{r32:?}");
            // the plain trapezoid sees the branch jump and converges at first order
            let r16 = torus_quadrature(&spec, 16).unwrap();
            let gap = |r: &QuadratureReport| (r.trapezoid_fine - r.fine).norm();
            assert!(gap(&r32) > 1e-4 * r32.fine.norm());
            let rate = gap(&r16) / gap(&r32);
            assert!((rate - 2.0).abs() < 0.1, "rate {rate}");
        }
    }

    #[test]
    fn elliptic_quadrature_with_cycle_converges() {
        let m = mp();
        let spec = n2_spec(vec![vec![2], vec![1]], Kernel::Elliptic { trace_nome: 0.05 }, m)
            .with_cycle(idx(vec![vec![1], vec![2]]))
            .unwrap();
        let r = torus_quadrature(&spec, 32).unwrap();
        assert!(r.relative_difference < 1e-6, "{r:?}");
        assert!(r.fine.is_finite() && r.fine.norm() > 0.0);
    }

    #[test]
    fn quadrature_is_deterministic_across_paths() {
        let m = mp();
        let spec = n2_spec(vec![vec![1], vec![2]], Kernel::Trig, m);
        let a = torus_quadrature(&spec, 16).unwrap();
        let b = par::with_sequential(|| torus_quadrature(&spec, 16).unwrap());
        assert_eq!(a, b);
    }
}
