//! Sections `t ↦ y_t` built from units, their infinitesimal data, and the
//! extension of a generator kernel by a new unit `ζ`.
//!
//! A [`UnitExpression`] is a sum of terms
//!
//! ```text
//! [e^{tβ}] · a · ξ¹_{κ₁t} ⊙ ξ²_{κ₂t} ⊙ … · b · [e^{tβ}]
//! ```
//!
//! where the twist `e^{tβ}` sits on at most one side, the segment fractions
//! `κ` sum to one, and segments are listed in tensor order (leftmost factor
//! first). Units themselves are never stored; they are known only through
//! the generator kernel `Q` of their CPD-semigroup, `⟨ξ_t, b ξ'_t⟩ = e^{tQ^{ξξ'}}(b)`.
//!
//! For two terms the map `c ↦ ⟨p_t, c q_t⟩` is
//! `c ↦ B_p(t)* M(t)(A_p(t)* c A_q(t)) B_q(t)`, where `A`, `B` are the
//! (twisted) outer multipliers and `M(t)` composes the semigroup entries
//! over the common refinement of both segment lists. Its derivative at
//! zero follows from the product rule; [`pair_derivative`] sums it over
//! all term pairs.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::algebra::{self, Element, Superoperator, C64, PSD_TOL};
use crate::error::{Error, Result};
use crate::kernels::{self, ConditionalConfig, ConditionalReport, CpdSemigroup, OperatorKernel};

/// Label of the adjoined unit in extended kernels.
pub const ZETA: &str = "ζ";

const FRACTION_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TwistSide {
    None,
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub label: String,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub left: Element,
    pub right: Element,
    pub twist: Element,
    pub side: TwistSide,
    pub segments: Vec<Segment>,
}

impl Term {
    pub fn unit(dim: usize, label: &str) -> Self {
        Self::concat(dim, &[(label, 1.0)])
    }

    pub fn concat(dim: usize, segments: &[(&str, f64)]) -> Self {
        Term {
            left: algebra::identity(dim),
            right: algebra::identity(dim),
            twist: DMatrix::zeros(dim, dim),
            side: TwistSide::None,
            segments: segments.iter().map(|&(l, f)| Segment { label: l.to_string(), fraction: f }).collect(),
        }
    }

    pub fn with_left(mut self, a: Element) -> Self {
        self.left = a;
        self
    }

    pub fn with_right(mut self, b: Element) -> Self {
        self.right = b;
        self
    }

    pub fn with_twist(mut self, beta: Element, side: TwistSide) -> Self {
        self.twist = beta;
        self.side = side;
        self
    }

    pub fn scaled(mut self, z: C64) -> Self {
        self.left *= z;
        self
    }

    pub fn dim(&self) -> usize {
        self.left.nrows()
    }

    /// Left multiplier at time `t`, twist included.
    pub fn left_at(&self, t: f64) -> Element {
        match self.side {
            TwistSide::Left => algebra::expm(&(&self.twist * C64::new(t, 0.0))) * &self.left,
            _ => self.left.clone(),
        }
    }

    /// Right multiplier at time `t`, twist included.
    pub fn right_at(&self, t: f64) -> Element {
        match self.side {
            TwistSide::Right => &self.right * algebra::expm(&(&self.twist * C64::new(t, 0.0))),
            _ => self.right.clone(),
        }
    }

    /// The bare unit `ξ` if this term is exactly `1 · ξ_t · 1`.
    pub fn bare_unit(&self) -> Option<&str> {
        let d = self.dim();
        let id = algebra::identity(d);
        let bare = self.segments.len() == 1
            && (self.side == TwistSide::None || self.twist.iter().all(|z| z.norm() == 0.0))
            && self.left == id
            && self.right == id;
        bare.then(|| self.segments[0].label.as_str())
    }
}

/// A piece of the common refinement of two segment lists: its width as a
/// fraction of the whole, and the segment label on each side.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Piece<'a> {
    pub width: f64,
    pub left: &'a str,
    pub right: &'a str,
}

pub(crate) fn common_refinement<'a>(p: &'a [Segment], q: &'a [Segment]) -> Vec<Piece<'a>> {
    let cuts = |s: &[Segment]| -> Vec<f64> {
        let mut acc = 0.0;
        s.iter()
            .map(|seg| {
                acc += seg.fraction;
                acc
            })
            .collect()
    };
    let (cp, cq) = (cuts(p), cuts(q));
    let mut pieces = Vec::with_capacity(p.len() + q.len());
    let (mut i, mut j, mut lo) = (0, 0, 0.0);
    while i < p.len() && j < q.len() {
        let hi = cp[i].min(cq[j]);
        if hi - lo > FRACTION_TOL {
            pieces.push(Piece { width: hi - lo, left: &p[i].label, right: &q[j].label });
        }
        if (cp[i] - hi).abs() <= FRACTION_TOL {
            i += 1;
        }
        if (cq[j] - hi).abs() <= FRACTION_TOL {
            j += 1;
        }
        lo = hi;
    }
    pieces
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnitExpression {
    dim: usize,
    terms: Vec<Term>,
}

impl UnitExpression {
    pub fn from_terms(dim: usize, terms: Vec<Term>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidExpression("expression has no terms".into()));
        }
        for (k, term) in terms.iter().enumerate() {
            for m in [&term.left, &term.right, &term.twist] {
                if m.nrows() != dim || m.ncols() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: m.nrows() });
                }
            }
            if term.segments.is_empty() {
                return Err(Error::InvalidExpression(format!("term {k} has no unit segments")));
            }
            if term.segments.iter().any(|s| !(s.fraction > 0.0) || !s.fraction.is_finite()) {
                return Err(Error::InvalidExpression(format!("term {k} has a non-positive fraction")));
            }
            let sum: f64 = term.segments.iter().map(|s| s.fraction).sum();
            if (sum - 1.0).abs() > FRACTION_TOL {
                return Err(Error::FractionMismatch { term: k, sum });
            }
        }
        Ok(UnitExpression { dim, terms })
    }

    /// `y_t = ξ_t`.
    pub fn unit(dim: usize, label: &str) -> Self {
        UnitExpression { dim, terms: vec![Term::unit(dim, label)] }
    }

    /// `y_t = Σ ϰ_ℓ ξ^ℓ_t`.
    pub fn affine(dim: usize, parts: &[(C64, &str)]) -> Result<Self> {
        Self::from_terms(dim, parts.iter().map(|&(z, l)| Term::unit(dim, l).scaled(z)).collect())
    }

    /// `y_t = ξ_t e^{tβ}` (right) or `e^{tβ} ξ_t` (left).
    pub fn twisted(dim: usize, label: &str, beta: Element, side: TwistSide) -> Result<Self> {
        Self::from_terms(dim, vec![Term::unit(dim, label).with_twist(beta, side)])
    }

    /// `y_t = ξ¹_{κ₁t} ⊙ ξ²_{κ₂t} ⊙ …`.
    pub fn concat(dim: usize, segments: &[(&str, f64)]) -> Result<Self> {
        Self::from_terms(dim, vec![Term::concat(dim, segments)])
    }

    /// `y_t = ξ⁰_t + Σ a_ℓ ξ^ℓ_t b_ℓ`.
    pub fn modification(dim: usize, base: &str, parts: &[(Element, &str, Element)]) -> Result<Self> {
        let mut terms = vec![Term::unit(dim, base)];
        for (a, l, b) in parts {
            terms.push(Term::unit(dim, l).with_left(a.clone()).with_right(b.clone()));
        }
        Self::from_terms(dim, terms)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn labels(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for s in self.terms.iter().flat_map(|t| &t.segments) {
            if !out.contains(&s.label.as_str()) {
                out.push(&s.label);
            }
        }
        out
    }

    /// `Σ a·b` over terms, the value of `⟨1, y_0⟩`-type normalizations.
    pub fn value_at_zero(&self) -> Element {
        self.terms.iter().fold(DMatrix::zeros(self.dim, self.dim), |acc, t| acc + &t.left * &t.right)
    }

    /// The label if the expression is a single bare unit; only those may be
    /// split across partition intervals.
    pub fn bare_unit(&self) -> Option<&str> {
        match self.terms.as_slice() {
            [t] => t.bare_unit(),
            _ => None,
        }
    }

    pub fn validate(&self, kernel: &OperatorKernel) -> Result<()> {
        if kernel.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: kernel.dim(), found: self.dim });
        }
        for l in self.labels() {
            kernel.index(l)?;
        }
        Ok(())
    }
}

fn sandwich_adj(a: &Element, b: &Element) -> Superoperator {
    Superoperator::sandwich(&a.adjoint(), b)
}

/// `d/dt|₀ ⟨e1_t, • e2_t⟩` given the generator kernel of the units involved.
pub fn pair_derivative(e1: &UnitExpression, e2: &UnitExpression, generator: &OperatorKernel) -> Result<Superoperator> {
    e1.validate(generator)?;
    e2.validate(generator)?;
    let d = generator.dim();
    let mut total = Superoperator::zero(d);
    for p in e1.terms() {
        for q in e2.terms() {
            let inner = sandwich_adj(&p.left, &q.left);
            let outer = sandwich_adj(&p.right, &q.right);
            let mut segments = Superoperator::zero(d);
            for piece in common_refinement(&p.segments, &q.segments) {
                let g = generator.get(piece.left, piece.right)?;
                segments = segments + g.scale(C64::new(piece.width, 0.0));
            }
            total = total + outer.compose(&segments)?.compose(&inner)?;
            if p.side == TwistSide::Right {
                total = total + sandwich_adj(&(&p.right * &p.twist), &q.right).compose(&inner)?;
            }
            if q.side == TwistSide::Right {
                total = total + sandwich_adj(&p.right, &(&q.right * &q.twist)).compose(&inner)?;
            }
            if p.side == TwistSide::Left {
                total = total + outer.compose(&sandwich_adj(&(&p.twist * &p.left), &q.left))?;
            }
            if q.side == TwistSide::Left {
                total = total + outer.compose(&sandwich_adj(&p.left, &(&q.twist * &q.left)))?;
            }
        }
    }
    Ok(total)
}

#[derive(Clone, Debug)]
pub struct ExtensionOptions {
    pub tol: f64,
    pub check: ConditionalConfig,
    /// Allowed `‖Σ a·b − 1‖`.
    pub normalization_tol: f64,
}

impl Default for ExtensionOptions {
    fn default() -> Self {
        ExtensionOptions { tol: PSD_TOL, check: ConditionalConfig::default(), normalization_tol: 1e-10 }
    }
}

/// The generator kernel on `S ∪ {ζ}` carrying the infinitesimal data of a section.
#[derive(Clone, Debug)]
pub struct ExtendedGenerator {
    pub base: OperatorKernel,
    /// `K = Q^{ζζ}`.
    pub zeta_zeta: Superoperator,
    /// `K_ξ = Q^{ζξ}` for each `ξ ∈ S`, in label order.
    pub zeta_xi: Vec<(String, Superoperator)>,
    pub assembled: OperatorKernel,
    pub report: ConditionalReport,
}

impl ExtendedGenerator {
    pub fn semigroup(&self) -> CpdSemigroup {
        CpdSemigroup::new(self.assembled.clone())
    }

    pub fn zeta_index(&self) -> usize {
        self.assembled.len() - 1
    }

    pub fn zeta_xi(&self, label: &str) -> Result<&Superoperator> {
        self.zeta_xi
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, k)| k)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }
}

/// Adjoins `ζ` with `Q^{ζζ} = K`, `Q^{ζξ} = K_ξ`, `Q^{ξζ} = * ∘ K_ξ ∘ *`
/// and certifies that the result is still conditionally CPD.
pub fn extend_generator(y: &UnitExpression, generator: &OperatorKernel, options: &ExtensionOptions) -> Result<ExtendedGenerator> {
    y.validate(generator)?;
    if generator.labels().iter().any(|l| l == ZETA) {
        return Err(Error::DuplicateLabel(ZETA.to_string()));
    }
    let d = generator.dim();
    let offset = (y.value_at_zero() - algebra::identity(d)).norm();
    if offset > options.normalization_tol {
        return Err(Error::InvalidExpression(format!(
            "Σ a·b over terms differs from the unit by {offset:e}; ⟨y_t, •y_t⟩ does not start at id"
        )));
    }
    let k = pair_derivative(y, y, generator)?;
    let zeta_xi = generator
        .labels()
        .iter()
        .map(|l| Ok((l.clone(), pair_derivative(y, &UnitExpression::unit(d, l), generator)?)))
        .collect::<Result<Vec<_>>>()?;

    let n = generator.len();
    let mut labels = generator.labels().to_vec();
    labels.push(ZETA.to_string());
    let assembled = OperatorKernel::from_fn(d, labels, |i, j| match (i == n, j == n) {
        (false, false) => generator.entry(i, j).clone(),
        (true, false) => zeta_xi[j].1.clone(),
        (false, true) => zeta_xi[i].1.involuted(),
        (true, true) => k.clone(),
    })?;
    let report = kernels::is_conditionally_cpd(&assembled, options.tol, &options.check)?;
    if !report.conditionally_cpd {
        let scale = algebra::op_norm(&assembled.block_choi()).max(1.0);
        let min_eigenvalue = report.compressed_min_eigenvalue.min(report.sampled.min_scaled_eigenvalue * scale);
        return Err(Error::ExtensionRejected { min_eigenvalue, numerical: min_eigenvalue.abs() < 1e-6 * scale });
    }
    Ok(ExtendedGenerator { base: generator.clone(), zeta_zeta: k, zeta_xi, assembled, report })
}

#[derive(Clone, Debug)]
pub struct Normalization {
    pub beta: Element,
    pub expression: UnitExpression,
    pub extension: ExtendedGenerator,
    /// `‖K(1)‖`.
    pub unitality_defect: f64,
}

/// Times at which `exp(tK)(1) = 1` is verified after normalizing.
pub const UNITALITY_TIMES: [f64; 3] = [0.25, 0.5, 1.0];

/// `y_t = ξ_t e^{tβ}` with `β = −Q^{ξξ}(1)/2 + ih`, making `⟨ζ_t, •ζ_t⟩` unital.
pub fn normalize_unit(
    label: &str,
    generator: &OperatorKernel,
    h: &Element,
    side: TwistSide,
    options: &ExtensionOptions,
) -> Result<Normalization> {
    let d = generator.dim();
    let one = algebra::identity(d);
    let q1 = generator.get(label, label)?.apply(&one);
    let skew = (&q1 - q1.adjoint()).norm();
    if skew > 1e-10 * q1.norm().max(1.0) {
        return Err(Error::MalformedGenerator(format!("Q^{{{label},{label}}}(1) is not self-adjoint (defect {skew:e})")));
    }
    if (h - h.adjoint()).norm() > 1e-12 * h.norm().max(1.0) {
        return Err(Error::InvalidExpression("h must be self-adjoint".into()));
    }
    let beta = q1 * C64::new(-0.5, 0.0) + h * C64::new(0.0, 1.0);
    let expression = UnitExpression::twisted(d, label, beta.clone(), side)?;
    let extension = extend_generator(&expression, generator, options)?;
    let k = &extension.zeta_zeta;
    let unitality_defect = k.apply(&one).norm();
    let scale = generator.entries().iter().map(Superoperator::frobenius).fold(1.0, f64::max);
    if unitality_defect > 1e-10 * scale {
        return Err(Error::MalformedGenerator(format!("K(1) = {unitality_defect:e} after normalization")));
    }
    for t in UNITALITY_TIMES {
        let drift = (k.exp(t)?.apply(&one) - &one).norm();
        if drift > 1e-9 * scale {
            return Err(Error::MalformedGenerator(format!("exp({t} K)(1) drifts by {drift:e}")));
        }
    }
    Ok(Normalization { beta, expression, extension, unitality_defect })
}
