//! Colors, partitions, weights and dynamical parameters.
//!
//! Colors and positions are 1-based throughout, matching the JSON layouts:
//! a partition serializes as `[[1,3],[2]]`, a color string as `[1,2,1]`.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ellfn::ModularParams;
use crate::error::{Error, Result};

/// Default cap on `n` for [`enumerate`].
pub const DEFAULT_ENUMERATION_CAP: usize = 10;

/// A composition `λ = (λ_1, ..., λ_N)` of `n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CompositionLambda(Vec<usize>);

impl CompositionLambda {
    pub fn new(parts: Vec<usize>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Shape("λ needs at least one part".into()));
        }
        Ok(CompositionLambda(parts))
    }

    pub fn parts(&self) -> &[usize] {
        &self.0
    }

    /// Number of colors `N`.
    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn n(&self) -> usize {
        self.0.iter().sum()
    }

    /// `λ^{(l)} = λ_1 + ... + λ_l`, with `partial(0) = 0`.
    pub fn partial(&self, l: usize) -> usize {
        self.0[..l].iter().sum()
    }

    /// `n! / (λ_1! ... λ_N!)`
    pub fn multinomial(&self) -> u128 {
        let fact = |k: usize| (1..=k as u128).product::<u128>();
        self.0.iter().fold(fact(self.n()), |acc, &l| acc / fact(l))
    }

    /// Zero weight means all parts are equal.
    pub fn is_zero_weight(&self) -> bool {
        self.0.windows(2).all(|w| w[0] == w[1])
    }
}

/// A color string `μ = (μ_1, ..., μ_n)` with `μ_i ∈ {1, ..., N}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ColorString(Vec<usize>);

impl ColorString {
    pub fn new(colors: Vec<usize>, rank: usize) -> Result<Self> {
        if let Some(&bad) = colors.iter().find(|&&c| c == 0 || c > rank) {
            return Err(Error::Domain(format!("color {bad} out of range 1..={rank}")));
        }
        Ok(ColorString(colors))
    }

    pub fn colors(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Color at 1-based position `i`.
    pub fn at(&self, i: usize) -> usize {
        self.0[i - 1]
    }

    pub fn swapped(&self, i: usize) -> ColorString {
        let mut v = self.0.clone();
        v.swap(i - 1, i);
        ColorString(v)
    }

    pub fn reversed(&self) -> ColorString {
        ColorString(self.0.iter().rev().copied().collect())
    }

    /// Concatenation of two color strings.
    pub fn concat(&self, other: &ColorString) -> ColorString {
        ColorString(self.0.iter().chain(other.0.iter()).copied().collect())
    }

    /// Weight of the colors at positions `from..=n`.
    pub fn suffix_weight(&self, from: usize, rank: usize) -> Vec<i64> {
        let mut w = vec![0; rank.saturating_sub(1)];
        for &c in &self.0[from - 1..] {
            add_color_weight(&mut w, c, 1);
        }
        w
    }
}

impl fmt::Display for ColorString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.0 {
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Adds `sign · ⟨ε̄_c, h_i⟩ = sign · (δ_{c,i} - δ_{c,i+1})` to `w`.
pub(crate) fn add_color_weight(w: &mut [i64], c: usize, sign: i64) {
    let rank_minus_one = w.len();
    if c <= rank_minus_one {
        w[c - 1] += sign;
    }
    if c >= 2 && c - 2 < rank_minus_one {
        w[c - 2] -= sign;
    }
}

/// The `h`-weight vector of a single color.
pub fn color_weight(c: usize, rank: usize) -> Vec<i64> {
    let mut w = vec![0; rank.saturating_sub(1)];
    add_color_weight(&mut w, c, 1);
    w
}

/// A partition `I = (I_1, ..., I_N)` of `{1, ..., n}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct PartitionIndex {
    parts: Vec<Vec<usize>>,
    colors: Vec<usize>,
}

impl TryFrom<Vec<Vec<usize>>> for PartitionIndex {
    type Error = Error;
    fn try_from(parts: Vec<Vec<usize>>) -> Result<Self> {
        PartitionIndex::new(parts)
    }
}

impl From<PartitionIndex> for Vec<Vec<usize>> {
    fn from(p: PartitionIndex) -> Self {
        p.parts
    }
}

impl PartitionIndex {
    pub fn new(mut parts: Vec<Vec<usize>>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Shape("partition needs at least one part".into()));
        }
        let n: usize = parts.iter().map(Vec::len).sum();
        let mut colors = vec![0usize; n];
        for (l, part) in parts.iter_mut().enumerate() {
            part.sort_unstable();
            for &i in part.iter() {
                if i == 0 || i > n {
                    return Err(Error::Domain(format!("element {i} outside [1,{n}]")));
                }
                if colors[i - 1] != 0 {
                    return Err(Error::Domain(format!("element {i} appears twice")));
                }
                colors[i - 1] = l + 1;
            }
        }
        Ok(PartitionIndex { parts, colors })
    }

    pub fn from_colors(mu: &ColorString, rank: usize) -> Result<Self> {
        index_from_colors(mu, rank)
    }

    pub fn parts(&self) -> &[Vec<usize>] {
        &self.parts
    }

    /// `I_l` for 1-based `l`.
    pub fn part(&self, l: usize) -> &[usize] {
        &self.parts[l - 1]
    }

    pub fn rank(&self) -> usize {
        self.parts.len()
    }

    pub fn n(&self) -> usize {
        self.colors.len()
    }

    pub fn lambda(&self) -> CompositionLambda {
        CompositionLambda(self.parts.iter().map(Vec::len).collect())
    }

    pub fn colors(&self) -> ColorString {
        ColorString(self.colors.clone())
    }

    /// Color of the 1-based element `i`.
    pub fn color_of(&self, i: usize) -> usize {
        self.colors[i - 1]
    }

    /// Sorted elements of `I^{(l)} = I_1 ∪ ... ∪ I_l`.
    pub fn union(&self, l: usize) -> Vec<usize> {
        let mut u: Vec<usize> = self.parts[..l].iter().flatten().copied().collect();
        u.sort_unstable();
        u
    }

    /// All unions `I^{(1)}, ..., I^{(N)}`.
    pub fn unions(&self) -> Vec<Vec<usize>> {
        (1..=self.rank()).map(|l| self.union(l)).collect()
    }

    /// Reindexing by the longest permutation: `I_{μ_n ... μ_1}`.
    pub fn reversed(&self) -> PartitionIndex {
        index_from_colors(&self.colors().reversed(), self.rank())
            .expect("reversal preserves validity")
    }

    /// Moves element `i` from part `from` to part `to` (1-based).
    pub fn moved(&self, i: usize, from: usize, to: usize) -> Result<PartitionIndex> {
        if self.color_of(i) != from {
            return Err(Error::Domain(format!("{i} is not in I_{from}")));
        }
        let mut parts = self.parts.clone();
        parts[from - 1].retain(|&x| x != i);
        parts[to - 1].push(i);
        PartitionIndex::new(parts)
    }
}

impl fmt::Display for PartitionIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (l, part) in self.parts.iter().enumerate() {
            if l > 0 {
                write!(f, ",")?;
            }
            write!(f, "{{")?;
            for (a, i) in part.iter().enumerate() {
                if a > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{i}")?;
            }
            write!(f, "}}")?;
        }
        write!(f, ")")
    }
}

/// The partition `I` with `i ∈ I_{μ_i}`.
pub fn index_from_colors(mu: &ColorString, rank: usize) -> Result<PartitionIndex> {
    let mut parts = vec![Vec::new(); rank];
    for (i, &c) in mu.colors().iter().enumerate() {
        if c == 0 || c > rank {
            return Err(Error::Domain(format!("color {c} out of range 1..={rank}")));
        }
        parts[c - 1].push(i + 1);
    }
    PartitionIndex::new(parts)
}

/// `I ≤ J` iff `i^{(l)}_a ≤ j^{(l)}_a` for every level `l` and slot `a`.
pub fn leq(i: &PartitionIndex, j: &PartitionIndex) -> Result<bool> {
    if i.lambda() != j.lambda() {
        return Err(Error::Shape(format!(
            "partitions of different shape: {:?} vs {:?}",
            i.lambda().parts(),
            j.lambda().parts()
        )));
    }
    Ok((1..=i.rank()).all(|l| {
        i.union(l)
            .iter()
            .zip(j.union(l).iter())
            .all(|(a, b)| a <= b)
    }))
}

/// All partitions of shape `λ`, ordered lexicographically by color string.
pub fn enumerate(lambda: &CompositionLambda, cap: usize) -> Result<Vec<PartitionIndex>> {
    let n = lambda.n();
    if n > cap {
        return Err(Error::CapExceeded(format!("n = {n} exceeds enumeration cap {cap}")));
    }
    let rank = lambda.rank();
    let mut remaining = lambda.parts().to_vec();
    let mut current = Vec::with_capacity(n);
    let mut out = Vec::new();
    fn rec(
        remaining: &mut [usize],
        current: &mut Vec<usize>,
        n: usize,
        rank: usize,
        out: &mut Vec<PartitionIndex>,
    ) {
        if current.len() == n {
            let mu = ColorString(current.clone());
            out.push(index_from_colors(&mu, rank).expect("valid by construction"));
            return;
        }
        for c in 1..=rank {
            if remaining[c - 1] > 0 {
                remaining[c - 1] -= 1;
                current.push(c);
                rec(remaining, current, n, rank, out);
                current.pop();
                remaining[c - 1] += 1;
            }
        }
    }
    rec(&mut remaining, &mut current, n, rank, &mut out);
    Ok(out)
}

/// `h`-weights of a color string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WeightVector {
    /// `total[j-1] = Σ_i (δ_{μ_i,j} - δ_{μ_i,j+1})`
    pub total: Vec<i64>,
    /// `prefix[m]` is the weight of `μ_1 ... μ_m` (`prefix[0] = 0`).
    pub prefix: Vec<Vec<i64>>,
}

pub fn weight_of(mu: &ColorString, rank: usize) -> WeightVector {
    let mut acc = vec![0i64; rank.saturating_sub(1)];
    let mut prefix = vec![acc.clone()];
    for &c in mu.colors() {
        add_color_weight(&mut acc, c, 1);
        prefix.push(acc.clone());
    }
    WeightVector {
        total: acc,
        prefix,
    }
}

/// Dynamical parameters `P_1, ..., P_{N-1}` with exact integer offsets.
///
/// `p` holds the values of `(P+h)_i` on the vector in question; `eta`
/// accumulates integer shifts (from `e^{-Q_α}` tags or explicit weight
/// shifts) and is added on evaluation, so `Π_{j,k} = q^{2(P+h)_{j,k}}` is
/// computed on demand and never stored.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicalParams {
    p: Vec<Complex64>,
    eta: Vec<i64>,
}

impl DynamicalParams {
    pub fn new(p: Vec<Complex64>) -> Self {
        let eta = vec![0; p.len()];
        DynamicalParams { p, eta }
    }

    pub fn with_eta(p: Vec<Complex64>, eta: Vec<i64>) -> Result<Self> {
        if p.len() != eta.len() {
            return Err(Error::Shape("P and eta lengths differ".into()));
        }
        Ok(DynamicalParams { p, eta })
    }

    /// Number of colors `N` (one more than the number of parameters).
    pub fn rank(&self) -> usize {
        self.p.len() + 1
    }

    pub fn base(&self) -> &[Complex64] {
        &self.p
    }

    pub fn eta(&self) -> &[i64] {
        &self.eta
    }

    /// `P_i + eta_i`, 1-based.
    pub fn value(&self, i: usize) -> Complex64 {
        self.p[i - 1] + self.eta[i - 1] as f64
    }

    /// `(P+h)_{j,k} = Σ_{i=j}^{k-1} (P_i + eta_i)`.
    pub fn pair(&self, j: usize, k: usize) -> Complex64 {
        (j..k).map(|i| self.value(i)).sum()
    }

    /// `(P+h)_{j,k}` with an extra integer weight shift added.
    pub fn pair_shifted(&self, j: usize, k: usize, extra: &[i64]) -> Complex64 {
        (j..k).map(|i| self.value(i) + extra[i - 1] as f64).sum()
    }

    /// `Π_{j,k} = q^{2(P+h)_{j,k}}`.
    pub fn pi(&self, j: usize, k: usize, mp: &ModularParams) -> Complex64 {
        mp.qpow(2.0 * self.pair(j, k))
    }

    pub fn shift(&self, delta: &[i64]) -> Result<Self> {
        if delta.len() != self.eta.len() {
            return Err(Error::Shape(format!(
                "shift has {} entries, expected {}",
                delta.len(),
                self.eta.len()
            )));
        }
        let eta = self.eta.iter().zip(delta).map(|(a, b)| a + b).collect();
        Ok(DynamicalParams {
            p: self.p.clone(),
            eta,
        })
    }

    /// `Π → Π^{-1}`, i.e. every `(P+h)_i → -(P+h)_i`.
    pub fn inverted(&self) -> Self {
        DynamicalParams {
            p: self.p.iter().map(|x| -x).collect(),
            eta: self.eta.iter().map(|x| -x).collect(),
        }
    }
}

/// Evaluation points `z_1, ..., z_n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct EvaluationPoints(Vec<Complex64>);

impl EvaluationPoints {
    pub fn new(z: Vec<Complex64>) -> Result<Self> {
        if z.iter().any(|x| x.norm() == 0.0 || !x.is_finite()) {
            return Err(Error::Domain("evaluation points must be finite and nonzero".into()));
        }
        Ok(EvaluationPoints(z))
    }

    pub fn points(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `u_i` with `z_i = q^{2u_i}`.
    pub fn additive(&self, mp: &ModularParams) -> Vec<Complex64> {
        self.0.iter().map(|&z| mp.additive(z)).collect()
    }

    pub fn inverted(&self) -> Self {
        EvaluationPoints(self.0.iter().map(|z| 1.0 / z).collect())
    }

    pub fn reversed(&self) -> Self {
        EvaluationPoints(self.0.iter().rev().copied().collect())
    }

    pub fn swapped(&self, i: usize) -> Self {
        let mut v = self.0.clone();
        v.swap(i - 1, i);
        EvaluationPoints(v)
    }

    pub fn require_distinct(&self, tol: f64) -> Result<()> {
        for (a, x) in self.0.iter().enumerate() {
            for y in &self.0[a + 1..] {
                if (x - y).norm() <= tol * x.norm().max(y.norm()) {
                    return Err(Error::Domain("evaluation points must be pairwise distinct".into()));
                }
            }
        }
        Ok(())
    }
}
