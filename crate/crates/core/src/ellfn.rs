//! Elliptic special functions: q-Pochhammer symbols, the odd theta function,
//! Jacobi brackets `[u]`, the elliptic Gamma function and the scalar factors
//! that dress the R-matrix.
//!
//! All nomes are real in `(0, 1)`. Complex powers `z^a` use the principal
//! logarithm (branch cut on the negative real axis). Infinite products are
//! truncated at the first factor whose deviation from 1 drops below
//! [`Truncation::eps`], with [`Truncation::max_terms`] as a hard cap.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Truncation control shared by every infinite product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Truncation {
    pub eps: f64,
    pub max_terms: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation {
            eps: 1e-14,
            max_terms: 512,
        }
    }
}

impl Truncation {
    pub fn new(eps: f64, max_terms: usize) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::param("trunc_eps", format!("must be > 0, got {eps}")));
        }
        if max_terms == 0 {
            return Err(Error::param("max_terms", "must be positive"));
        }
        Ok(Truncation { eps, max_terms })
    }
}

/// Which elliptic nome a bracket or R-matrix is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Nome {
    /// `p = q^{2r}`
    P,
    /// `p* = q^{2r*}`, `r* = r - k`
    PStar,
}

/// The parameter pack `(q, r, k)` with the derived nomes `p = q^{2r}` and
/// `p* = q^{2(r-k)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModularParams {
    q: f64,
    r: f64,
    k: f64,
    trunc: Truncation,
}

impl ModularParams {
    pub fn new(q: f64, r: f64, k: f64) -> Result<Self> {
        Self::with_truncation(q, r, k, Truncation::default())
    }

    pub fn with_truncation(q: f64, r: f64, k: f64, trunc: Truncation) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::param("q", format!("must lie in (0,1), got {q}")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::param("r", format!("must be > 0, got {r}")));
        }
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::param("k", format!("must be >= 0, got {k}")));
        }
        if r <= k {
            return Err(Error::param(
                "r",
                format!("need r > k so that p* < 1, got r={r}, k={k}"),
            ));
        }
        Ok(ModularParams { q, r, k, trunc })
    }

    /// Parameters whose unstarred nome equals `nome`, at level 0.
    ///
    /// Used for weight functions whose brackets run on a different nome
    /// (for instance the trace parameter `Q` of the q-KZ integrand).
    pub fn with_nome(&self, nome: f64) -> Result<Self> {
        if !(nome > 0.0 && nome < 1.0) {
            return Err(Error::param("nome", format!("must lie in (0,1), got {nome}")));
        }
        let r = nome.ln() / (2.0 * self.q.ln());
        Self::with_truncation(self.q, r, 0.0, self.trunc)
    }

    /// The same `(q, r)` at level `k = 0`, so that `p* = p`.
    pub fn level_zero(&self) -> Self {
        ModularParams { k: 0.0, ..*self }
    }

    pub fn q(&self) -> f64 {
        self.q
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn k(&self) -> f64 {
        self.k
    }
    pub fn r_star(&self) -> f64 {
        self.r - self.k
    }
    pub fn p(&self) -> f64 {
        self.q.powf(2.0 * self.r)
    }
    pub fn p_star(&self) -> f64 {
        self.q.powf(2.0 * self.r_star())
    }
    pub fn truncation(&self) -> Truncation {
        self.trunc
    }
    pub fn ln_q(&self) -> f64 {
        self.q.ln()
    }

    pub fn nome(&self, nome: Nome) -> f64 {
        match nome {
            Nome::P => self.p(),
            Nome::PStar => self.p_star(),
        }
    }

    fn period(&self, nome: Nome) -> f64 {
        match nome {
            Nome::P => self.r,
            Nome::PStar => self.r_star(),
        }
    }

    /// `q^x = exp(x ln q)`, single valued for complex `x`.
    pub fn qpow(&self, x: Complex64) -> Complex64 {
        (x * self.ln_q()).exp()
    }

    /// Additive variable `u` with `z = q^{2u}` (principal logarithm).
    pub fn additive(&self, z: Complex64) -> Complex64 {
        z.ln() / (2.0 * self.ln_q())
    }

    /// Unstarred bracket `[u] = q^{u^2/r - u} θ_p(q^{2u})`.
    pub fn bracket(&self, u: Complex64) -> Complex64 {
        self.bracket_on(u, Nome::P)
    }

    /// Starred bracket `[u]* = q^{u^2/r* - u} θ_{p*}(q^{2u})`.
    pub fn bracket_star(&self, u: Complex64) -> Complex64 {
        self.bracket_on(u, Nome::PStar)
    }

    pub fn bracket_on(&self, u: Complex64, nome: Nome) -> Complex64 {
        let period = self.period(nome);
        let prefactor = self.qpow(u * u / period - u);
        let x = self.qpow(2.0 * u);
        prefactor * theta_unchecked(x, self.nome(nome), &self.trunc)
    }
}

fn poch_unchecked(z: Complex64, s: f64, trunc: &Truncation) -> Complex64 {
    let mut prod = Complex64::new(1.0, 0.0);
    let mut term = z;
    for _ in 0..trunc.max_terms {
        if term.norm() < trunc.eps {
            break;
        }
        prod *= 1.0 - term;
        term *= s;
    }
    prod
}

fn theta_unchecked(z: Complex64, p: f64, trunc: &Truncation) -> Complex64 {
    poch_unchecked(z, p, trunc)
        * poch_unchecked(p / z, p, trunc)
        * poch_unchecked(Complex64::new(p, 0.0), p, trunc)
}

fn check_nome(name: &'static str, s: f64) -> Result<()> {
    if s.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("nome must satisfy |s| < 1, got {s}")))
    }
}

/// `(z; s)_∞ = Π_{n≥0} (1 - z s^n)`.
pub fn qpoch(z: Complex64, s: f64, trunc: &Truncation) -> Result<Complex64> {
    check_nome("s", s)?;
    Ok(poch_unchecked(z, s, trunc))
}

/// Odd theta function `θ_p(z) = (z;p)_∞ (p/z;p)_∞ (p;p)_∞`.
pub fn theta(z: Complex64, p: f64, trunc: &Truncation) -> Result<Complex64> {
    check_nome("p", p)?;
    if z == Complex64::new(0.0, 0.0) {
        return Err(Error::Domain("theta_p(z) is undefined at z = 0".into()));
    }
    Ok(theta_unchecked(z, p, trunc))
}

/// Jacobi bracket `[u]` (or `[u]*` when `starred`).
pub fn jacobi_bracket(u: Complex64, mp: &ModularParams, starred: bool) -> Complex64 {
    let nome = if starred { Nome::PStar } else { Nome::P };
    mp.bracket_on(u, nome)
}

/// `[0]'`, by a central difference Richardson-extrapolated over `h` and `h/2`.
pub fn bracket_derivative_at_zero(mp: &ModularParams) -> Complex64 {
    bracket_derivative_with_step(mp, 1e-3)
}

pub(crate) fn bracket_derivative_with_step(mp: &ModularParams, h: f64) -> Complex64 {
    let central = |h: f64| {
        let h = Complex64::new(h, 0.0);
        (mp.bracket(h) - mp.bracket(-h)) / (2.0 * h)
    };
    (4.0 * central(h / 2.0) - central(h)) / 3.0
}

/// Double product `(x; p, s)_∞`. With `pole_check`, a vanishing factor is
/// reported as [`Error::GammaPole`].
fn double_poch(
    x: Complex64,
    p: f64,
    s: f64,
    trunc: &Truncation,
    pole_check: bool,
) -> Result<Complex64> {
    let mut prod = Complex64::new(1.0, 0.0);
    let mut row = x;
    for m in 0..trunc.max_terms {
        if row.norm() < trunc.eps {
            break;
        }
        let mut term = row;
        for n in 0..trunc.max_terms {
            if term.norm() < trunc.eps {
                break;
            }
            let factor = 1.0 - term;
            if pole_check && factor.norm() < 1e-12 {
                return Err(Error::GammaPole { m, n });
            }
            prod *= factor;
            term *= s;
        }
        row *= p;
    }
    Ok(prod)
}

/// Elliptic Gamma function `Γ(z; p, s) = (ps/z; p, s)_∞ / (z; p, s)_∞`.
pub fn ell_gamma(z: Complex64, p: f64, s: f64, trunc: &Truncation) -> Result<Complex64> {
    check_nome("p", p)?;
    check_nome("s", s)?;
    if z == Complex64::new(0.0, 0.0) {
        return Err(Error::Domain("elliptic Gamma is undefined at z = 0".into()));
    }
    let den = double_poch(z, p, s, trunc, true)?;
    let num = double_poch(p * s / z, p, s, trunc, false)?;
    Ok(num / den)
}

fn principal_pow(z: Complex64, a: f64) -> Result<Complex64> {
    if z == Complex64::new(0.0, 0.0) {
        return Err(Error::Domain("complex power of zero".into()));
    }
    Ok((z.ln() * a).exp())
}

fn check_rank(n_colors: usize) -> Result<()> {
    if n_colors == 0 {
        Err(Error::param("N", "rank must be at least 1"))
    } else {
        Ok(())
    }
}

/// Scalar prefactor `ρ⁺(z)` of `R⁺(z, Π)`.
pub fn rho_plus(z: Complex64, n_colors: usize, mp: &ModularParams) -> Result<Complex64> {
    check_rank(n_colors)?;
    let n = n_colors as f64;
    let q = mp.q();
    let p = mp.p();
    let s = q.powf(2.0 * n);
    let t = mp.truncation();
    let g = |x: Complex64| ell_gamma(x, p, s, &t);
    let num = g(z)? * g(s * z)?;
    let den = g(q * q * z)? * g(q.powf(2.0 * n - 2.0) * z)?;
    let pref = q.powf(-(n - 1.0) / n) * principal_pow(z, (n - 1.0) / (mp.r() * n))?;
    Ok(pref * num / den)
}

/// Scalar factor `μ(z)` of the vertex-operator exchange relation.
pub fn mu_scalar(z: Complex64, n_colors: usize, mp: &ModularParams) -> Result<Complex64> {
    check_rank(n_colors)?;
    let n = n_colors as f64;
    let q = mp.q();
    let r = mp.r();
    let p = mp.p();
    let s = q.powf(2.0 * n);
    let t = mp.truncation();
    let g = |x: Complex64| ell_gamma(x, p, s, &t);
    let num = g(p * z)? * g(s * z)?;
    let den = g(q * q * z)? * g(p * q.powf(2.0 * n - 2.0) * z)?;
    let pref = principal_pow(z, -(r - 1.0) / r * (n - 1.0) / n)?;
    Ok(pref * num / den)
}
