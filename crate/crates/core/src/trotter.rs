//! Products of sections over interval partitions and their convergence.
//!
//! A [`Partition`] `(t_n, …, t_1)` is stored in tensor order: `parts[0]` is
//! `t_n`, the leftmost factor of `y_{t_n} ⊙ ⋯ ⊙ y_{t_1}`, which covers the
//! latest interval. Inner products of products factor as
//! `⟨x ⊙ y, c x' ⊙ y'⟩ = ⟨y, ⟨x, c x'⟩ y'⟩`, so the leftmost factor's map is
//! applied first and later factors wrap around it.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{self, Element, Superoperator, C64};
use crate::error::{Error, Result};
use crate::kernels::{CpdSemigroup, OperatorKernel};
use crate::random;
use crate::units::{self, ExtendedGenerator, ExtensionOptions, UnitExpression};

fn cut_tol(length: f64) -> f64 {
    1e-12 * length.max(1.0)
}

/// An interval partition of `[0, |𝔱|]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Partition {
    parts: Vec<f64>,
}

impl Partition {
    pub fn new(parts: Vec<f64>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidPartition("no parts".into()));
        }
        if let Some(p) = parts.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::InvalidPartition(format!("part {p} is not positive")));
        }
        Ok(Partition { parts })
    }

    pub fn singleton(t: f64) -> Result<Self> {
        Self::new(vec![t])
    }

    /// `n` equal parts of `t`.
    pub fn uniform(t: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidPartition("zero parts".into()));
        }
        Self::new(vec![t / n as f64; n])
    }

    pub fn parts(&self) -> &[f64] {
        &self.parts
    }

    pub fn count(&self) -> usize {
        self.parts.len()
    }

    /// `|𝔱| = Σ t_i`.
    pub fn length(&self) -> f64 {
        self.parts.iter().sum()
    }

    /// `‖𝔱‖ = max t_i`.
    pub fn norm(&self) -> f64 {
        self.parts.iter().cloned().fold(0.0, f64::max)
    }

    /// Cumulative cut points from the left, the last one being `|𝔱|`.
    pub fn cuts(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.parts
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.parts.iter().map(|p| p * factor).collect())
    }

    /// Common refinement: the partition whose cut points are the union of both.
    pub fn refine(&self, other: &Partition) -> Result<Partition> {
        let (l1, l2) = (self.length(), other.length());
        if (l1 - l2).abs() > cut_tol(l1) {
            return Err(Error::LengthMismatch { left: l1, right: l2 });
        }
        let mut cuts: Vec<f64> = self.cuts();
        cuts.pop();
        let mut others = other.cuts();
        others.pop();
        cuts.extend(others);
        cuts.sort_by(f64::total_cmp);
        let tol = cut_tol(l1);
        let mut parts = Vec::with_capacity(cuts.len() + 1);
        let mut lo = 0.0;
        for c in cuts {
            if c - lo > tol && l1 - c > tol {
                parts.push(c - lo);
                lo = c;
            }
        }
        parts.push(l1 - lo);
        Partition::new(parts)
    }

    /// Whether every cut of `coarser` is a cut of `self`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        let own = self.cuts();
        let tol = cut_tol(self.length());
        coarser.cuts().iter().all(|c| own.iter().any(|o| (o - c).abs() <= tol))
    }

    /// `count` random positive parts summing to `t`.
    pub fn random(rng: &mut random::Rng, t: f64, count: usize) -> Result<Self> {
        let weights: Vec<f64> = (0..count.max(1)).map(|_| random::uniform(rng, 0.2, 1.0)).collect();
        let total: f64 = weights.iter().sum();
        Self::new(weights.iter().map(|w| t * w / total).collect())
    }
}

/// Common refinement `𝔱 ∨ 𝔰`.
pub fn refine(t: &Partition, s: &Partition) -> Result<Partition> {
    t.refine(s)
}

/// Evaluates `c ↦ ⟨x_𝔰, c y_𝔱⟩` from the semigroup of the units involved.
/// Semigroup entries are cached by label pair and length.
pub struct PairingEngine<'a> {
    semigroup: &'a CpdSemigroup,
    cache: HashMap<(usize, usize, u64), Superoperator>,
}

impl<'a> PairingEngine<'a> {
    pub fn new(semigroup: &'a CpdSemigroup) -> Self {
        PairingEngine { semigroup, cache: HashMap::new() }
    }

    fn kernel(&self) -> &OperatorKernel {
        self.semigroup.generator()
    }

    fn entry(&mut self, a: &str, b: &str, s: f64) -> Result<Superoperator> {
        let (i, j) = (self.kernel().index(a)?, self.kernel().index(b)?);
        let key = (i, j, s.to_bits());
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit.clone());
        }
        let value = self.semigroup.entry_at_signed(i, j, s)?;
        self.cache.insert(key, value.clone());
        Ok(value)
    }

    /// `c ↦ ⟨x_L, c y_L⟩` for a single interval of length `L`. Negative `L`
    /// continues the formula analytically; only finite-difference checks use it.
    pub fn pair_over_length(&mut self, x: &UnitExpression, y: &UnitExpression, length: f64) -> Result<Superoperator> {
        x.validate(self.kernel())?;
        y.validate(self.kernel())?;
        let d = self.kernel().dim();
        let mut total = Superoperator::zero(d);
        for p in x.terms() {
            for q in y.terms() {
                let (ap, aq) = (p.left_at(length), q.left_at(length));
                let (bp, bq) = (p.right_at(length), q.right_at(length));
                let mut inner = Superoperator::sandwich(&ap.adjoint(), &aq);
                for piece in units::common_refinement(&p.segments, &q.segments) {
                    let step = self.entry(piece.left, piece.right, piece.width * length)?;
                    inner = step.compose(&inner)?;
                }
                total = total + Superoperator::sandwich(&bp.adjoint(), &bq).compose(&inner)?;
            }
        }
        Ok(total)
    }

    /// `c ↦ ⟨x_𝔰, c y_𝔱⟩`.
    ///
    /// Both sides are evaluated over the common refinement. A side whose parts
    /// get cut by the other partition must be a bare unit, which splits freely
    /// by the unit property.
    pub fn pairing(&mut self, x: &UnitExpression, s: &Partition, y: &UnitExpression, t: &Partition) -> Result<Superoperator> {
        let (ls, lt) = (s.length(), t.length());
        let tol = cut_tol(ls);
        if (ls - lt).abs() > tol {
            return Err(Error::LengthMismatch { left: ls, right: lt });
        }
        let fine = s.refine(t)?;
        let split = |p: &Partition| fine.count() > p.count();
        if split(s) && x.bare_unit().is_none() {
            return Err(Error::NotSplittable("left expression".into()));
        }
        if split(t) && y.bare_unit().is_none() {
            return Err(Error::NotSplittable("right expression".into()));
        }
        let blocks = fine.parts().to_vec();
        let d = self.kernel().dim();
        let mut by_length: HashMap<u64, Superoperator> = HashMap::new();
        let mut total = Superoperator::identity(d);
        for length in blocks {
            let map = match by_length.get(&length.to_bits()) {
                Some(m) => m.clone(),
                None => {
                    let m = self.pair_over_length(x, y, length)?;
                    by_length.insert(length.to_bits(), m.clone());
                    m
                }
            };
            total = map.compose(&total)?;
        }
        Ok(total)
    }
}

/// `c ↦ ⟨x_𝔰, c y_𝔱⟩` for expressions over the labels of `semigroup`.
pub fn eval_pairing(
    x: &UnitExpression,
    s: &Partition,
    y: &UnitExpression,
    t: &Partition,
    semigroup: &CpdSemigroup,
) -> Result<Superoperator> {
    PairingEngine::new(semigroup).pairing(x, s, y, t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    NormConvergent,
    WeakOnly,
    Divergent,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::NormConvergent => "norm-convergent",
            Verdict::WeakOnly => "weak-only",
            Verdict::Divergent => "divergent",
        })
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "norm-convergent" => Ok(Verdict::NormConvergent),
            "weak-only" => Ok(Verdict::WeakOnly),
            "divergent" => Ok(Verdict::Divergent),
            other => Err(format!("unknown verdict `{other}`")),
        }
    }
}

/// Floating-point cut-offs that make the convergence dichotomy decidable.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Thresholds {
    /// Defect at the finest partition below which a series counts as converged.
    pub converged: f64,
    /// Minimal fitted log-log rate for convergence.
    pub min_rate: f64,
    /// Defect at the finest partition above which a slow series is a plateau.
    pub plateau: f64,
    /// Series entirely below this are exact (no rate is fitted).
    pub exact: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { converged: 1e-6, min_rate: 0.5, plateau: 1e-3, exact: 1e-10 }
    }
}

/// Least-squares slope of `log y` against `log x` over points with `y > floor`.
pub fn loglog_slope(x: &[f64], y: &[f64], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(_, &v)| v > floor)
        .map(|(&a, &b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

/// Behaviour of one defect series along a schedule.
///
/// A series converges when it is exact, already below `converged`, or its
/// rate fitted on the finer half of the schedule reaches `min_rate`. The
/// `strict` flags additionally demand the finest defect be below
/// `converged`, which first-order convergence reaches only for generators
/// of small norm at the default schedule lengths.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesFit {
    pub finest: f64,
    /// Slope over the whole schedule.
    pub rate: Option<f64>,
    /// Slope over the finer half of the schedule.
    pub tail_rate: Option<f64>,
    pub exact: bool,
    pub converged: bool,
    pub plateau: bool,
    pub strict_converged: bool,
    pub strict_plateau: bool,
}

impl SeriesFit {
    pub fn new(mesh: &[f64], values: &[f64], th: &Thresholds) -> Self {
        let mut order: Vec<usize> = (0..mesh.len()).collect();
        order.sort_by(|&a, &b| mesh[a].total_cmp(&mesh[b]));
        let finest = order.first().map_or(0.0, |&i| values[i]);
        let exact = values.iter().all(|v| v.abs() <= th.exact);
        let rate = if exact { None } else { loglog_slope(mesh, values, th.exact) };
        let tail: Vec<usize> = order[..order.len().div_ceil(2).max(2).min(order.len())].to_vec();
        let tail_rate = if exact {
            None
        } else {
            let m: Vec<f64> = tail.iter().map(|&i| mesh[i]).collect();
            let v: Vec<f64> = tail.iter().map(|&i| values[i]).collect();
            loglog_slope(&m, &v, th.exact)
        };
        let fast = |r: Option<f64>| r.is_some_and(|r| r >= th.min_rate);
        SeriesFit {
            finest,
            rate,
            tail_rate,
            exact,
            converged: exact || finest < th.converged || fast(tail_rate),
            plateau: !exact && finest > th.plateau && !fast(tail_rate),
            strict_converged: exact || (finest < th.converged && fast(rate)),
            strict_plateau: !exact && finest > th.plateau && !fast(rate),
        }
    }
}

/// Verdict decision from the defect series of one schedule.
///
/// * norm-convergent: the criterion and Gram defects both converge;
/// * weak-only: pairings against ambient units converge but the criterion
///   or Gram defect plateaus;
/// * divergent: anything else.
pub fn classify(gram: &SeriesFit, criterion: &SeriesFit, ambient: &SeriesFit) -> Verdict {
    decide(
        (gram.converged, gram.plateau),
        (criterion.converged, criterion.plateau),
        ambient.converged,
    )
}

/// [`classify`] with the `strict` flags.
pub fn classify_strict(gram: &SeriesFit, criterion: &SeriesFit, ambient: &SeriesFit) -> Verdict {
    decide(
        (gram.strict_converged, gram.strict_plateau),
        (criterion.strict_converged, criterion.strict_plateau),
        ambient.strict_converged,
    )
}

fn decide(gram: (bool, bool), criterion: (bool, bool), ambient: bool) -> Verdict {
    if criterion.0 && gram.0 {
        Verdict::NormConvergent
    } else if ambient && (criterion.1 || gram.1) {
        Verdict::WeakOnly
    } else {
        Verdict::Divergent
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundRow {
    pub horizon: f64,
    pub n: usize,
    pub mesh: f64,
    pub gram_defect: f64,
    pub defect_bound: f64,
    pub gram_norm: f64,
    /// `e^{t (‖K‖ + h M)}` with `h` the coarsest mesh.
    pub norm_bound: f64,
    /// `e^{t max(‖K‖, M)}`.
    pub literal_norm_bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub k_norm: f64,
    /// Estimated constant in `‖⟨y_s,•y_s⟩ − id − sK‖ ≤ s² M`.
    pub m: f64,
    /// `M + ‖K‖² e^{h‖K‖}` with `h` the coarsest mesh in the schedule.
    pub m_prime: f64,
    pub rows: Vec<BoundRow>,
    pub defect_bound_holds: bool,
    pub bounded: bool,
    /// Whether every gram norm also sits below `e^{t max(‖K‖, M)}`. This
    /// rate undercuts `1 + s‖K‖ + s²M` at small `s`, so it can fail.
    pub literal_bounded: bool,
}

/// Lengths at which the second-order remainder of `⟨y_s, •y_s⟩` is sampled.
pub const REMAINDER_GRID: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

/// `M = max_s ‖⟨y_s,•y_s⟩ − id − sK‖ / s²` over `REMAINDER_GRID` and `extra`.
pub fn estimate_remainder(y: &UnitExpression, extension: &ExtendedGenerator, extra: &[f64]) -> Result<f64> {
    let semigroup = extension.semigroup();
    let mut engine = PairingEngine::new(&semigroup);
    let d = extension.assembled.dim();
    let id = Superoperator::identity(d);
    let mut m: f64 = 0.0;
    for &s in REMAINDER_GRID.iter().chain(extra) {
        let y_s = engine.pair_over_length(y, y, s)?;
        let remainder = &(&y_s - &id) - &extension.zeta_zeta.scale(C64::new(s, 0.0));
        m = m.max(remainder.norm() / (s * s));
    }
    Ok(m)
}

/// Checks the estimate `‖⟨y_𝔱,•y_𝔱⟩ − ⟨ζ_t,•ζ_t⟩‖ ≤ ‖𝔱‖ t e^{tr} M'` and the
/// bound `‖⟨y_𝔱,•y_𝔱⟩‖ ≤ e^{tr}` for every schedule member, at the horizons
/// `T/4, T/2, 3T/4, T`. Here `r = ‖K‖ + hM`, which dominates
/// `1 + s‖K‖ + s²M ≤ e^{sr}` for all parts `s ≤ h`.
pub fn bound_check(
    y: &UnitExpression,
    extension: &ExtendedGenerator,
    horizon: f64,
    schedule: &[Partition],
) -> Result<BoundReport> {
    let k = &extension.zeta_zeta;
    let k_norm = k.norm();
    let coarsest = schedule.iter().map(Partition::norm).fold(0.0, f64::max);
    let m = estimate_remainder(y, extension, &[coarsest])?;
    let m_prime = m + k_norm * k_norm * (coarsest * k_norm).exp();
    let rate = k_norm + coarsest * m;
    let literal_rate = k_norm.max(m);
    let semigroup = extension.semigroup();

    let mut jobs = Vec::new();
    for tau in [0.25, 0.5, 0.75, 1.0].map(|f| f * horizon) {
        for p in schedule {
            jobs.push((tau, p.scaled(tau / horizon)?));
        }
    }
    let rows = jobs
        .par_iter()
        .map(|(tau, p)| -> Result<BoundRow> {
            let mut engine = PairingEngine::new(&semigroup);
            let gram = engine.pairing(y, p, y, p)?;
            let gram_defect = (&gram - &k.exp(*tau)?).norm();
            Ok(BoundRow {
                horizon: *tau,
                n: p.count(),
                mesh: p.norm(),
                gram_defect,
                defect_bound: p.norm() * tau * (tau * rate).exp() * m_prime,
                gram_norm: gram.norm(),
                norm_bound: (tau * rate).exp(),
                literal_norm_bound: (tau * literal_rate).exp(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let slack = |bound: f64| bound * (1.0 + 1e-8) + 1e-12;
    Ok(BoundReport {
        k_norm,
        m,
        m_prime,
        defect_bound_holds: rows.iter().all(|r| r.gram_defect <= slack(r.defect_bound)),
        bounded: rows.iter().all(|r| r.gram_norm <= slack(r.norm_bound)),
        literal_bounded: rows.iter().all(|r| r.gram_norm <= slack(r.literal_norm_bound)),
        rows,
    })
}

/// How to build a schedule of partitions of the horizon.
#[derive(Clone, Debug, PartialEq)]
pub enum ScheduleSpec {
    /// Uniform partitions with `2^min … 2^max` parts.
    Dyadic { min: u32, max: u32 },
    /// A refinement chain of `count` random partitions, part counts doubling from 8.
    Random { count: usize },
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec::Dyadic { min: 3, max: 12 }
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleSpec::Dyadic { min, max } => write!(f, "dyadic:{min}:{max}"),
            ScheduleSpec::Random { count } => write!(f, "random:{count}"),
        }
    }
}

impl FromStr for ScheduleSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let fields: Vec<&str> = s.split(':').collect();
        let num = |x: &str| x.parse::<u32>().map_err(|_| format!("bad number `{x}` in schedule `{s}`"));
        match fields.as_slice() {
            ["dyadic", lo, hi] => {
                let (min, max) = (num(lo)?, num(hi)?);
                if min > max || max > 20 {
                    return Err(format!("dyadic range `{s}` must satisfy min ≤ max ≤ 20"));
                }
                Ok(ScheduleSpec::Dyadic { min, max })
            }
            ["random", count] => {
                let count = num(count)? as usize;
                if count == 0 || count > 12 {
                    return Err(format!("random schedule count `{count}` must be in 1..=12"));
                }
                Ok(ScheduleSpec::Random { count })
            }
            _ => Err(format!("schedule `{s}` is not `dyadic:MIN:MAX` or `random:COUNT`")),
        }
    }
}

impl ScheduleSpec {
    pub fn build(&self, horizon: f64, seed: u64) -> Result<Vec<Partition>> {
        match *self {
            ScheduleSpec::Dyadic { min, max } => (min..=max).map(|k| Partition::uniform(horizon, 1 << k)).collect(),
            ScheduleSpec::Random { count } => {
                let mut rng = random::rng(seed);
                let mut chain = vec![Partition::random(&mut rng, horizon, 8)?];
                for k in 1..count {
                    let next = Partition::random(&mut rng, horizon, 8 << k)?;
                    let refined = chain[k - 1].refine(&next)?;
                    chain.push(refined);
                }
                Ok(chain)
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScheduleRow {
    pub n: usize,
    pub mesh: f64,
    /// `‖⟨y_𝔱,•y_𝔱⟩ − ⟨ζ_t,•ζ_t⟩‖`.
    pub gram_defect: f64,
    /// `‖⟨ζ_t,•y_𝔱⟩ − ⟨ζ_t,•ζ_t⟩‖`.
    pub criterion_defect: f64,
    /// Largest eigenvalue of `⟨y_𝔱 − ζ_t, y_𝔱 − ζ_t⟩`.
    pub norm_defect: f64,
    /// `max_ξ ‖⟨ξ_t,•y_𝔱⟩ − ⟨ξ_t,•ζ_t⟩‖` over ambient units.
    pub ambient_defect: f64,
    /// Difference between the two evaluations of `⟨y_𝔱 − ζ_t, y_𝔱 − ζ_t⟩`,
    /// relative to the size of the terms.
    pub adjoint_residual: f64,
    pub gram_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub horizon: f64,
    pub reference: String,
    pub schedule: String,
    pub seed: u64,
    pub rows: Vec<ScheduleRow>,
    pub gram: SeriesFit,
    pub criterion: SeriesFit,
    pub norm: SeriesFit,
    pub ambient: SeriesFit,
    pub verdict: Verdict,
    /// Verdict with the finest defect also required below `converged`.
    pub strict_verdict: Verdict,
    /// Observed order of the single-interval criterion error
    /// `‖⟨ζ_s,•y_s⟩ − ⟨ζ_s,•ζ_s⟩‖` as `s → 0`.
    pub interval_order: Option<f64>,
    /// Whether uniform sequences already decide the net limit.
    pub sequence_suffices: bool,
    /// Spread of the criterion defect over the finer half of the schedule.
    pub cauchy_spread: f64,
    pub max_adjoint_residual: f64,
    pub min_norm_defect: f64,
    pub bounds: BoundReport,
    pub thresholds: Thresholds,
    pub notes: Vec<String>,
}

impl ConvergenceReport {
    pub const CSV_HEADER: &'static str = "n,mesh,gram_defect,criterion_defect,norm_defect";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&csv_row(r.n, r.mesh, r.gram_defect, r.criterion_defect, r.norm_defect));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub(crate) fn csv_row(n: usize, mesh: f64, gram: f64, criterion: f64, norm: f64) -> String {
    format!("{n},{mesh:e},{gram:e},{criterion:e},{norm:e}\n")
}

#[derive(Clone, Debug, Default)]
pub struct VerdictOptions {
    /// Compare against this ambient unit instead of the adjoined `ζ`.
    pub candidate: Option<String>,
    pub thresholds: Thresholds,
    pub extension: ExtensionOptions,
}


fn value_at_one(map: &Superoperator) -> Element {
    map.apply(&algebra::identity(map.dim()))
}

/// Builds the extension of `generator` by `y`, evaluates all defect series
/// on the schedule and decides convergence.
pub fn convergence_verdict(
    y: &UnitExpression,
    generator: &OperatorKernel,
    horizon: f64,
    schedule: &[Partition],
    options: &VerdictOptions,
) -> Result<ConvergenceReport> {
    if schedule.is_empty() {
        return Err(Error::InvalidPartition("empty schedule".into()));
    }
    if let Some(p) = schedule.iter().find(|p| (p.length() - horizon).abs() > cut_tol(horizon)) {
        return Err(Error::LengthMismatch { left: p.length(), right: horizon });
    }
    let extension = units::extend_generator(y, generator, &options.extension)?;
    let reference_label = match &options.candidate {
        Some(c) => {
            generator.index(c)?;
            c.clone()
        }
        None => units::ZETA.to_string(),
    };
    let d = generator.dim();
    let semigroup = extension.semigroup();
    let kernel = semigroup.generator();
    let reference = UnitExpression::unit(d, &reference_label);
    let r = kernel.index(&reference_label)?;
    let whole = Partition::singleton(horizon)?;
    let z = semigroup.entry_at(r, r, horizon)?;
    let z1 = value_at_one(&z);
    let ambient: Vec<(UnitExpression, Superoperator)> = generator
        .labels()
        .iter()
        .map(|l| Ok((UnitExpression::unit(d, l), semigroup.entry_at(kernel.index(l)?, r, horizon)?)))
        .collect::<Result<_>>()?;

    let rows = schedule
        .par_iter()
        .map(|p| -> Result<ScheduleRow> {
            let mut engine = PairingEngine::new(&semigroup);
            let gram = engine.pairing(y, p, y, p)?;
            let crit = engine.pairing(&reference, &whole, y, p)?;
            let cross = engine.pairing(y, p, &reference, &whole)?;
            let mut ambient_defect: f64 = 0.0;
            for (xi, target) in &ambient {
                let pair = engine.pairing(xi, &whole, y, p)?;
                ambient_defect = ambient_defect.max((&pair - target).norm());
            }
            let (g1, c1, x1) = (value_at_one(&gram), value_at_one(&crit), value_at_one(&cross));
            let direct = &g1 - &c1 - &x1 + &z1;
            let via_adjoint = &g1 - &c1 - c1.adjoint() + &z1;
            Ok(ScheduleRow {
                n: p.count(),
                mesh: p.norm(),
                gram_defect: (&gram - &z).norm(),
                criterion_defect: (&crit - &z).norm(),
                norm_defect: algebra::hermitian_spectrum(&direct).max(),
                ambient_defect,
                adjoint_residual: (&direct - &via_adjoint).norm()
                    / (g1.norm() + 2.0 * c1.norm() + z1.norm()).max(1.0),
                gram_norm: gram.norm(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let th = &options.thresholds;
    let mesh: Vec<f64> = rows.iter().map(|r| r.mesh).collect();
    let series = |f: fn(&ScheduleRow) -> f64| SeriesFit::new(&mesh, &rows.iter().map(f).collect::<Vec<_>>(), th);
    let gram = series(|r| r.gram_defect);
    let criterion = series(|r| r.criterion_defect);
    let norm = series(|r| r.norm_defect.max(0.0));
    let ambient_fit = series(|r| r.ambient_defect);
    let verdict = classify(&gram, &criterion, &ambient_fit);
    let strict_verdict = classify_strict(&gram, &criterion, &ambient_fit);

    // Single-interval criterion error at s and s/10.
    let mut engine = PairingEngine::new(&semigroup);
    let interval_error = |engine: &mut PairingEngine, s: f64| -> Result<f64> {
        Ok((&engine.pair_over_length(&reference, y, s)? - &semigroup.entry_at(r, r, s)?).norm())
    };
    let (e1, e2) = (interval_error(&mut engine, 1e-2)?, interval_error(&mut engine, 1e-3)?);
    let interval_order = (e1 > th.exact * 1e-2 && e2 > 0.0).then(|| (e1 / e2).log10());
    let sequence_suffices = interval_order.is_none_or(|o| o >= 1.8);

    let mut sorted: Vec<&ScheduleRow> = rows.iter().collect();
    sorted.sort_by(|a, b| b.mesh.total_cmp(&a.mesh));
    let tail = &sorted[sorted.len() / 2..];
    let cauchy_spread = tail.iter().map(|r| r.criterion_defect).fold(f64::NEG_INFINITY, f64::max)
        - tail.iter().map(|r| r.criterion_defect).fold(f64::INFINITY, f64::min);

    let bounds = bound_check(y, &extension, horizon, schedule)?;

    let mut notes = Vec::new();
    if sequence_suffices {
        notes.push("single-interval criterion error is O(s^2): uniform sequences decide the limit".to_string());
    } else {
        notes.push("single-interval criterion error is not O(s^2): sequence results do not certify the net".to_string());
    }
    notes.push(match verdict {
        Verdict::NormConvergent => format!("criterion holds against {reference_label}: y_t converges in norm"),
        Verdict::WeakOnly => format!(
            "criterion fails against {reference_label} while ambient pairings converge: limit is weak only"
        ),
        Verdict::Divergent => format!("no convergence certified against {reference_label}"),
    });
    if extension.report.discrepancy {
        notes.push("conditional-CPD routes disagreed on the extended generator".to_string());
    }

    Ok(ConvergenceReport {
        horizon,
        reference: reference_label,
        schedule: format!("{} partitions, n = {}..{}", rows.len(), rows.first().map_or(0, |r| r.n), rows.last().map_or(0, |r| r.n)),
        seed: options.extension.check.seed,
        max_adjoint_residual: rows.iter().map(|r| r.adjoint_residual).fold(0.0, f64::max),
        min_norm_defect: rows.iter().map(|r| r.norm_defect).fold(f64::INFINITY, f64::min),
        rows,
        gram,
        criterion,
        norm,
        ambient: ambient_fit,
        verdict,
        strict_verdict,
        interval_order,
        sequence_suffices,
        cauchy_spread,
        bounds,
        thresholds: th.clone(),
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{ce_form_kernel, covariance_kernel, labels, random_ce_parameters};
    use nalgebra::DMatrix;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn counterexample_generator() -> OperatorKernel {
        let gamma = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        covariance_kernel(labels(&["u", "v"]), &gamma).unwrap()
    }

    #[test]
    fn partition_length_and_norm() {
        let p = Partition::new(vec![0.5, 0.25, 0.25]).unwrap();
        assert_eq!(p.length(), 1.0);
        assert_eq!(p.norm(), 0.5);
        assert!(Partition::new(vec![]).is_err());
        assert!(Partition::new(vec![0.5, 0.0]).is_err());
        assert!(Partition::new(vec![-1.0]).is_err());
    }

    #[test]
    fn refine_examples() {
        let t = Partition::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(t.refine(&t).unwrap(), t);
        let s = Partition::new(vec![0.25, 0.75]).unwrap();
        assert_eq!(t.refine(&s).unwrap().parts(), &[0.25, 0.25, 0.5]);
        let other = Partition::new(vec![0.5, 0.6]).unwrap();
        assert!(matches!(t.refine(&other), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn join_is_a_refinement_with_smaller_mesh() {
        let mut rng = random::rng(40);
        for _ in 0..100 {
            let n1 = 1 + random::index(&mut rng, 7);
            let n2 = 1 + random::index(&mut rng, 7);
            let t = Partition::random(&mut rng, 1.7, n1).unwrap();
            let s = Partition::random(&mut rng, 1.7, n2).unwrap();
            let j = t.refine(&s).unwrap();
            assert!(j.norm() <= t.norm().min(s.norm()) + 1e-12);
            assert!(j.refines(&t) && j.refines(&s));
            assert!((j.length() - 1.7).abs() < 1e-12);
            let j2 = s.refine(&t).unwrap();
            assert_eq!(j.count(), j2.count());
        }
    }

    #[test]
    fn single_unit_pairing_collapses_to_semigroup() {
        let mut rng = random::rng(41);
        let (eta, beta) = random_ce_parameters(&mut rng, 2, 2, 1.0);
        let q = ce_form_kernel(2, labels(&["a", "b"]), &eta, &beta).unwrap();
        let s = CpdSemigroup::new(q);
        let (x, y) = (UnitExpression::unit(2, "a"), UnitExpression::unit(2, "b"));
        let t = 0.9;
        let expected = s.entry_at(0, 1, t).unwrap();
        for (p1, p2) in [(3, 5), (1, 8), (4, 4)] {
            let a = Partition::random(&mut rng, t, p1).unwrap();
            let b = Partition::random(&mut rng, t, p2).unwrap();
            let got = eval_pairing(&x, &a, &y, &b, &s).unwrap();
            assert!(got.max_abs_diff(&expected) < 1e-10);
        }
    }

    #[test]
    fn composite_expressions_cannot_be_split() {
        let s = CpdSemigroup::new(counterexample_generator());
        let y = UnitExpression::concat(1, &[("u", 0.5), ("v", 0.5)]).unwrap();
        let coarse = Partition::singleton(1.0).unwrap();
        let fine = Partition::uniform(1.0, 2).unwrap();
        assert!(matches!(eval_pairing(&y, &coarse, &y, &fine, &s), Err(Error::NotSplittable(_))));
        assert!(matches!(
            eval_pairing(&y, &coarse, &y, &Partition::singleton(2.0).unwrap(), &s),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn trotter_pair_norm_is_constant() {
        // ⟨y_𝔱, y_𝔱⟩ = e^{1/2} for the vacuum/indicator alternation, every n.
        let s = CpdSemigroup::new(counterexample_generator());
        let y = UnitExpression::concat(1, &[("u", 0.5), ("v", 0.5)]).unwrap();
        for n in [1, 3, 8, 64] {
            let p = Partition::uniform(1.0, n).unwrap();
            let g = eval_pairing(&y, &p, &y, &p, &s).unwrap().rep()[(0, 0)];
            assert!((g - c(0.5f64.exp(), 0.0)).norm() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn adjoined_unit_pairs_weakly_with_trotter_product() {
        // ⟨ζ_1, y_𝔱⟩ = e^{1/4} for every n.
        let q = counterexample_generator();
        let y = UnitExpression::concat(1, &[("u", 0.5), ("v", 0.5)]).unwrap();
        let ext = units::extend_generator(&y, &q, &ExtensionOptions::default()).unwrap();
        let s = ext.semigroup();
        let zeta = UnitExpression::unit(1, units::ZETA);
        let whole = Partition::singleton(1.0).unwrap();
        for n in [1, 8, 1024] {
            let p = Partition::uniform(1.0, n).unwrap();
            let v = eval_pairing(&zeta, &whole, &y, &p, &s).unwrap().rep()[(0, 0)];
            assert!((v - c(0.25f64.exp(), 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn slope_fit_recovers_power_law() {
        let x = [0.1, 0.05, 0.025, 0.0125];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((loglog_slope(&x, &y, 0.0).unwrap() - 1.5).abs() < 1e-12);
        assert!(loglog_slope(&x[..1], &y[..1], 0.0).is_none());
    }

    #[test]
    fn schedule_specs_parse_and_build() {
        let dy: ScheduleSpec = "dyadic:3:5".parse().unwrap();
        let parts = dy.build(2.0, 0).unwrap();
        assert_eq!(parts.iter().map(Partition::count).collect::<Vec<_>>(), vec![8, 16, 32]);
        assert_eq!(dy.to_string(), "dyadic:3:5");
        let rnd: ScheduleSpec = "random:4".parse().unwrap();
        let chain = rnd.build(1.0, 9).unwrap();
        assert_eq!(chain.len(), 4);
        for w in chain.windows(2) {
            assert!(w[1].refines(&w[0]));
        }
        assert!("dyadic:5:3".parse::<ScheduleSpec>().is_err());
        assert!("geometric:3".parse::<ScheduleSpec>().is_err());
    }

    #[test]
    fn single_unit_is_norm_convergent_exactly() {
        let mut rng = random::rng(42);
        let (eta, beta) = random_ce_parameters(&mut rng, 2, 2, 1.0);
        let q = ce_form_kernel(2, labels(&["a", "b"]), &eta, &beta).unwrap();
        let y = UnitExpression::unit(2, "a");
        let schedule = ScheduleSpec::Dyadic { min: 3, max: 6 }.build(1.0, 0).unwrap();
        let report = convergence_verdict(&y, &q, 1.0, &schedule, &VerdictOptions::default()).unwrap();
        assert_eq!(report.verdict, Verdict::NormConvergent);
        for r in &report.rows {
            assert!(r.gram_defect <= 1e-10 && r.criterion_defect <= 1e-10 && r.norm_defect.abs() <= 1e-10);
        }
        assert!(report.bounds.defect_bound_holds && report.bounds.bounded);
    }

    #[test]
    fn csv_has_one_row_per_partition() {
        let q = counterexample_generator();
        let y = UnitExpression::concat(1, &[("u", 0.5), ("v", 0.5)]).unwrap();
        let schedule = ScheduleSpec::Dyadic { min: 1, max: 3 }.build(1.0, 0).unwrap();
        let report = convergence_verdict(&y, &q, 1.0, &schedule, &VerdictOptions::default()).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], ConvergenceReport::CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("2,"));
    }
}
