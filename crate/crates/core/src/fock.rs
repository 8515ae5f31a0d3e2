//! Exponential vectors in the symmetric Fock space `Γ(L²([0,t], ℂ^k))`.
//!
//! Only exponential vectors of step functions appear, so every inner product
//! is `exp` of an exact integral and nothing is truncated.

use serde::Serialize;

use crate::algebra::{Element, C64};
use crate::error::{Error, Result};
use crate::trotter::{self, classify, ConvergenceReport, SeriesFit, Thresholds, Verdict};

fn tol(t: f64) -> f64 {
    1e-12 * t.max(1.0)
}

/// A `ℂ^k`-valued step function on `[0, t]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepFunction {
    multiplicity: usize,
    breakpoints: Vec<f64>,
    values: Vec<Vec<C64>>,
}

impl StepFunction {
    /// `breakpoints` are `0 = s_0 < … < s_m`; `values[j]` lives on `[s_j, s_{j+1})`.
    pub fn new(multiplicity: usize, breakpoints: Vec<f64>, values: Vec<Vec<C64>>) -> Result<Self> {
        if breakpoints.first() != Some(&0.0) {
            return Err(Error::InvalidPartition("breakpoints must start at 0".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) || breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidPartition("breakpoints must increase strictly".into()));
        }
        if values.len() + 1 != breakpoints.len() {
            return Err(Error::LengthMismatch { left: values.len() as f64, right: breakpoints.len() as f64 - 1.0 });
        }
        if let Some(v) = values.iter().find(|v| v.len() != multiplicity) {
            return Err(Error::DimensionMismatch { expected: multiplicity, found: v.len() });
        }
        Ok(StepFunction { multiplicity, breakpoints, values })
    }

    /// `value · 𝟙_{[0,t]}`; for `t = 0` the function on the empty interval.
    pub fn constant(value: Vec<C64>, t: f64) -> Result<Self> {
        let k = value.len();
        if t == 0.0 {
            return Self::new(k, vec![0.0], vec![]);
        }
        Self::new(k, vec![0.0, t], vec![value])
    }

    pub fn zero(multiplicity: usize, t: f64) -> Result<Self> {
        Self::constant(vec![C64::new(0.0, 0.0); multiplicity], t)
    }

    pub fn multiplicity(&self) -> usize {
        self.multiplicity
    }

    pub fn length(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[Vec<C64>] {
        &self.values
    }

    /// `self` on `[0, s)` followed by `other` shifted to `[s, s + t)`.
    pub fn concat(&self, other: &StepFunction) -> Result<Self> {
        if self.multiplicity != other.multiplicity {
            return Err(Error::DimensionMismatch { expected: self.multiplicity, found: other.multiplicity });
        }
        let shift = self.length();
        let mut breakpoints = self.breakpoints.clone();
        breakpoints.extend(other.breakpoints[1..].iter().map(|b| b + shift));
        let mut values = self.values.clone();
        values.extend(other.values.iter().cloned());
        Self::new(self.multiplicity, breakpoints, values)
    }

    /// The same function in `ℂ^k ⊕ 0 ⊂ ℂ^{k'}`.
    pub fn embed(&self, multiplicity: usize) -> Result<Self> {
        if multiplicity < self.multiplicity {
            return Err(Error::DimensionMismatch { expected: self.multiplicity, found: multiplicity });
        }
        let values = self
            .values
            .iter()
            .map(|v| {
                let mut w = v.clone();
                w.resize(multiplicity, C64::new(0.0, 0.0));
                w
            })
            .collect();
        Self::new(multiplicity, self.breakpoints.clone(), values)
    }

    fn value_at(&self, s: f64) -> &[C64] {
        let j = self.breakpoints.partition_point(|&b| b <= s).saturating_sub(1);
        &self.values[j.min(self.values.len() - 1)]
    }

    /// `∫ ⟨f(s), g(s)⟩ ds` over the merged breakpoints, antilinear in `f`.
    pub fn integral(&self, other: &StepFunction) -> Result<C64> {
        if self.multiplicity != other.multiplicity {
            return Err(Error::DimensionMismatch { expected: self.multiplicity, found: other.multiplicity });
        }
        let (l1, l2) = (self.length(), other.length());
        if (l1 - l2).abs() > tol(l1) {
            return Err(Error::LengthMismatch { left: l1, right: l2 });
        }
        let mut cuts: Vec<f64> = self.breakpoints.iter().chain(&other.breakpoints).copied().collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() <= tol(l1));
        let mut total = C64::new(0.0, 0.0);
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let inner: C64 = self.value_at(mid).iter().zip(other.value_at(mid)).map(|(a, b)| a.conj() * b).sum();
            total += inner * (w[1] - w[0]);
        }
        Ok(total)
    }
}

/// `prefactor · ψ(argument)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentialVector {
    pub prefactor: C64,
    pub argument: StepFunction,
}

impl ExponentialVector {
    pub fn new(prefactor: C64, argument: StepFunction) -> Self {
        ExponentialVector { prefactor, argument }
    }

    pub fn vacuum(multiplicity: usize, t: f64) -> Result<Self> {
        Ok(Self::new(C64::new(1.0, 0.0), StepFunction::zero(multiplicity, t)?))
    }

    /// `φ ⊗ ψ` under `Γ(L²[0,s]) ⊗ Γ(L²[0,t]) = Γ(L²[0,s+t])`.
    pub fn concat(&self, other: &ExponentialVector) -> Result<Self> {
        Ok(Self::new(self.prefactor * other.prefactor, self.argument.concat(&other.argument)?))
    }

    pub fn embed(&self, multiplicity: usize) -> Result<Self> {
        Ok(Self::new(self.prefactor, self.argument.embed(multiplicity)?))
    }

    pub fn length(&self) -> f64 {
        self.argument.length()
    }
}

/// `⟨φ, ψ⟩ = conj(p_φ) p_ψ exp(∫ ⟨f, g⟩)`.
pub fn fock_inner(phi: &ExponentialVector, psi: &ExponentialVector) -> Result<C64> {
    let exponent = phi.argument.integral(&psi.argument)?;
    Ok(phi.prefactor.conj() * psi.prefactor * exponent.exp())
}

/// Gram matrix `G[i][j] = ⟨v_i, v_j⟩`.
pub fn gram_matrix(vectors: &[ExponentialVector]) -> Result<Element> {
    let n = vectors.len();
    let mut g = Element::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] = fock_inner(&vectors[i], &vectors[j])?;
        }
    }
    Ok(g)
}

/// The unit `t ↦ e^{tα} ψ(c 𝟙_{[0,t]})`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnitParams {
    pub alpha: C64,
    pub c: Vec<C64>,
}

impl UnitParams {
    pub fn new(alpha: C64, c: Vec<C64>) -> Self {
        UnitParams { alpha, c }
    }

    /// Scalar unit in multiplicity one.
    pub fn scalar(alpha: C64, c: C64) -> Self {
        Self::new(alpha, vec![c])
    }

    pub fn at(&self, t: f64) -> Result<ExponentialVector> {
        Ok(ExponentialVector::new((self.alpha * t).exp(), StepFunction::constant(self.c.clone(), t)?))
    }

    /// Generator of `⟨ξ_t, ξ'_t⟩ = e^{t(ᾱ + α' + ⟨c, c'⟩)}`.
    pub fn covariance(&self, other: &UnitParams) -> C64 {
        self.alpha.conj() + other.alpha + self.c.iter().zip(&other.c).map(|(a, b)| a.conj() * b).sum::<C64>()
    }
}

/// `(u_{ϰt/n} ⊗ v_{λt/n})^{⊗n}` with `fractions = (ϰ, λ)`, `ϰ + λ = 1`.
/// Each slot places `u` on its first portion.
pub fn trotter_vector(u: &UnitParams, v: &UnitParams, t: f64, n: usize, fractions: (f64, f64)) -> Result<ExponentialVector> {
    let (kappa, lambda) = fractions;
    if n == 0 {
        return Err(Error::InvalidPartition("zero slots".into()));
    }
    if kappa < 0.0 || lambda < 0.0 || (kappa + lambda - 1.0).abs() > 1e-12 {
        return Err(Error::FractionMismatch { term: 0, sum: kappa + lambda });
    }
    let k = u.c.len();
    if v.c.len() != k {
        return Err(Error::DimensionMismatch { expected: k, found: v.c.len() });
    }
    let slot = t / n as f64;
    let prefactor = ((kappa * u.alpha + lambda * v.alpha) * t).exp();
    if slot == 0.0 {
        return Ok(ExponentialVector::new(prefactor, StepFunction::zero(k, 0.0)?));
    }
    let mut breakpoints = vec![0.0];
    let mut values = Vec::with_capacity(2 * n);
    for i in 0..n {
        let start = i as f64 * slot;
        for (unit, lo, hi) in [(u, 0.0, kappa), (v, kappa, 1.0)] {
            if hi > lo {
                breakpoints.push(if hi == 1.0 { (i + 1) as f64 * slot } else { start + hi * slot });
                values.push(unit.c.clone());
            }
        }
    }
    Ok(ExponentialVector::new(prefactor, StepFunction::new(k, breakpoints, values)?))
}

/// Inner products for one Trotter product `y` at a given slot count.
#[derive(Clone, Debug, Serialize)]
pub struct CounterexampleRow {
    pub n: usize,
    pub mesh: f64,
    pub y_y: f64,
    pub w_y: f64,
    pub w_w: f64,
    pub y_minus_w: f64,
    pub zeta_zeta: f64,
    pub zeta_y: f64,
    pub y_minus_zeta: f64,
    /// `max |⟨ξ, y⟩ − ⟨ξ, w⟩|` over the generating units `ξ ∈ {u, v}`.
    pub ambient_w: f64,
    /// The same against `ζ`, computed in multiplicity two.
    pub ambient_zeta: f64,
    /// Largest change of an inner product under `ℂ ⊕ 0 ⊂ ℂ²`.
    pub embedding_defect: f64,
}

/// Defect series against one reference vector, shaped like the kernel-engine report.
#[derive(Clone, Debug, Serialize)]
pub struct ReferenceSeries {
    pub reference: String,
    pub rows: Vec<(usize, f64, f64, f64, f64)>,
    pub gram: SeriesFit,
    pub criterion: SeriesFit,
    pub ambient: SeriesFit,
    pub verdict: Verdict,
}

impl ReferenceSeries {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(ConvergenceReport::CSV_HEADER);
        out.push('\n');
        for &(n, mesh, gram, criterion, norm) in &self.rows {
            out.push_str(&trotter::csv_row(n, mesh, gram, criterion, norm));
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CounterexampleReport {
    pub t: f64,
    pub rows: Vec<CounterexampleRow>,
    pub vs_w: ReferenceSeries,
    pub vs_zeta: ReferenceSeries,
    pub notes: Vec<String>,
}

/// Vacuum and indicator units alternated in half slots.
///
/// `w = ψ(½𝟙)` is the weak limit in `Γ(L²([0,t]))`; `ζ = ψ((½ ⊕ ½)𝟙)` is the
/// adjoined unit realized in `Γ(L²([0,t], ℂ²))`, where the original system
/// sits as `ℂ ⊕ 0`.
pub fn counterexample_scenario(t: f64, ns: &[usize], thresholds: &Thresholds) -> Result<CounterexampleReport> {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let half = C64::new(0.5, 0.0);
    let u = UnitParams::scalar(zero, zero);
    let v = UnitParams::scalar(zero, one);
    let w = UnitParams::scalar(zero, half).at(t)?;
    let zeta = UnitParams::new(zero, vec![half, half]).at(t)?;
    let ambient = [u.at(t)?, v.at(t)?];
    let ambient2: Vec<ExponentialVector> = ambient.iter().map(|a| a.embed(2)).collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let y = trotter_vector(&u, &v, t, n, (0.5, 0.5))?;
        let y2 = y.embed(2)?;
        let re = |a: &ExponentialVector, b: &ExponentialVector| fock_inner(a, b).map(|z| z.re);
        let (y_y, w_y, w_w) = (re(&y, &y)?, re(&w, &y)?, re(&w, &w)?);
        let (zeta_zeta, zeta_y) = (re(&zeta, &zeta)?, re(&zeta, &y2)?);
        let mut ambient_w: f64 = 0.0;
        let mut ambient_zeta: f64 = 0.0;
        let mut embedding_defect: f64 = (re(&y2, &y2)? - y_y).abs();
        for (a, a2) in ambient.iter().zip(&ambient2) {
            ambient_w = ambient_w.max((fock_inner(a, &y)? - fock_inner(a, &w)?).norm());
            ambient_zeta = ambient_zeta.max((fock_inner(a2, &y2)? - fock_inner(a2, &zeta)?).norm());
            embedding_defect = embedding_defect.max((fock_inner(a2, &y2)? - fock_inner(a, &y)?).norm());
        }
        rows.push(CounterexampleRow {
            n,
            mesh: t / n as f64,
            y_y,
            w_y,
            w_w,
            y_minus_w: y_y - 2.0 * w_y + w_w,
            zeta_zeta,
            zeta_y,
            y_minus_zeta: y_y - 2.0 * zeta_y + zeta_zeta,
            ambient_w,
            ambient_zeta,
            embedding_defect,
        });
    }

    let series = |reference: &str, pick: fn(&CounterexampleRow) -> (f64, f64, f64, f64)| {
        let data: Vec<(usize, f64, f64, f64, f64)> = rows
            .iter()
            .map(|r| {
                let (rr, ry, _, norm) = pick(r);
                (r.n, r.mesh, (r.y_y - rr).abs(), (ry - rr).abs(), norm)
            })
            .collect();
        let mesh: Vec<f64> = data.iter().map(|r| r.1).collect();
        let fit = |vals: Vec<f64>| SeriesFit::new(&mesh, &vals, thresholds);
        let gram = fit(data.iter().map(|r| r.2).collect());
        let criterion = fit(data.iter().map(|r| r.3).collect());
        let ambient = fit(rows.iter().map(|r| pick(r).2).collect());
        let verdict = classify(&gram, &criterion, &ambient);
        ReferenceSeries { reference: reference.to_string(), rows: data, gram, criterion, ambient, verdict }
    };
    let vs_w = series("w", |r| (r.w_w, r.w_y, r.ambient_w, r.y_minus_w));
    let vs_zeta = series("ζ", |r| (r.zeta_zeta, r.zeta_y, r.ambient_zeta, r.y_minus_zeta));

    let mut notes = vec![
        "all values are exact integrals of step functions and do not depend on n".to_string(),
        format!("verdict against w: {}", vs_w.verdict),
        format!("verdict against ζ: {}", vs_zeta.verdict),
    ];
    if vs_zeta.verdict != Verdict::NormConvergent {
        notes.push(format!(
            "⟨ζ,y⟩ = {:.12} differs from ⟨ζ,ζ⟩ = {:.12}: the norm criterion fails against ζ",
            rows.last().map_or(1.0, |r| r.zeta_y),
            rows.last().map_or(1.0, |r| r.zeta_zeta)
        ));
    }
    Ok(CounterexampleReport { t, rows, vs_w, vs_zeta, notes })
}
