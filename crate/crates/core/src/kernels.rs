//! Operator-valued kernels `S × S → B(M_d)` on finite label sets.
//!
//! Positivity of a kernel `k` in the sense
//! `Σ_ij b_i* k^{σ_i σ_j}(a_i* a_j) b_j ≥ 0` is decided through the
//! *block Choi matrix*: the hermitian matrix of size `|S| d²` with entries
//!
//! ```text
//! C[(σ,p,r), (σ',q,s)] = k^{σσ'}(E_pq)[(r, s)]
//! ```
//!
//! It is the nonzero principal block of the Choi matrix of the block map
//! `(x_{σσ'}) ↦ (k^{σσ'}(x_{σσ'}))`. Splitting each `a_i` into rows and
//! each `b_i` into columns, the quadratic form of a tuple is a sum of terms
//! `W* C W` with `W(σ,p,·) = Σ_{i: σ_i = σ} conj(a_i[(k,p)]) b_i x`, and the
//! constraint `Σ a_i b_i = 0` says `⟨u, W⟩ = 0` for every such `W`, where
//! `u(σ,p,r) = δ_pr`. Hence
//!
//! * CPD ⇔ `C ⪰ 0`,
//! * conditionally CPD ⇔ `C` is PSD on `u⊥`.
//!
//! Negative eigenvectors are turned back into explicit tuples so every
//! negative verdict carries a checkable witness.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algebra::{self, Element, Superoperator, C64};
use crate::error::{Error, Result};
use crate::random::{self, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorKernel {
    dim: usize,
    labels: Vec<String>,
    /// Row-major `|S| × |S|` table.
    entries: Vec<Superoperator>,
}

impl OperatorKernel {
    pub fn new(dim: usize, labels: Vec<String>, entries: Vec<Superoperator>) -> Result<Self> {
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        let n = labels.len();
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: entries.len() });
        }
        if let Some(e) = entries.iter().find(|e| e.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: e.dim() });
        }
        Ok(OperatorKernel { dim, labels, entries })
    }

    pub fn from_fn(
        dim: usize,
        labels: Vec<String>,
        mut f: impl FnMut(usize, usize) -> Superoperator,
    ) -> Result<Self> {
        let n = labels.len();
        let entries = (0..n * n).map(|k| f(k / n, k % n)).collect();
        Self::new(dim, labels, entries)
    }

    /// The kernel with every entry equal to the identity map.
    pub fn identity(dim: usize, labels: Vec<String>) -> Result<Self> {
        Self::from_fn(dim, labels, |_, _| Superoperator::identity(dim))
    }

    pub fn zero(dim: usize, labels: Vec<String>) -> Result<Self> {
        Self::from_fn(dim, labels, |_, _| Superoperator::zero(dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn entry(&self, i: usize, j: usize) -> &Superoperator {
        &self.entries[i * self.len() + j]
    }

    pub fn get(&self, a: &str, b: &str) -> Result<&Superoperator> {
        Ok(self.entry(self.index(a)?, self.index(b)?))
    }

    pub fn entries(&self) -> &[Superoperator] {
        &self.entries
    }

    /// `max |k^{σ'σ} − * ∘ k^{σσ'} ∘ *|` over all pairs, entrywise.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max(self.entry(j, i).max_abs_diff(&self.entry(i, j).involuted()));
            }
        }
        worst
    }

    fn scale_hint(&self) -> f64 {
        self.entries.iter().map(Superoperator::frobenius).fold(1.0, f64::max)
    }

    pub fn ensure_hermitian(&self, tol: f64) -> Result<()> {
        let defect = self.hermitian_defect();
        if defect > tol * self.scale_hint() {
            return Err(Error::NotAKernel { defect });
        }
        Ok(())
    }

    /// Reorders labels: label `k` of the result is label `order[k]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let labels = order.iter().map(|&k| self.labels[k].clone()).collect();
        Self::from_fn(self.dim, labels, |i, j| self.entry(order[i], order[j]).clone())
    }

    pub fn restrict(&self, labels: &[String]) -> Result<Self> {
        let order = labels.iter().map(|l| self.index(l)).collect::<Result<Vec<_>>>()?;
        self.permuted(&order)
    }

    pub fn map(&self, f: impl Fn(&Superoperator) -> Result<Superoperator>) -> Result<Self> {
        let entries = self.entries.iter().map(f).collect::<Result<Vec<_>>>()?;
        Self::new(self.dim, self.labels.clone(), entries)
    }

    pub fn combine(&self, other: &Self, f: impl Fn(&Superoperator, &Superoperator) -> Superoperator) -> Result<Self> {
        if self.labels != other.labels || self.dim != other.dim {
            return Err(Error::Scenario("kernels over different label sets".into()));
        }
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| f(a, b)).collect();
        Self::new(self.dim, self.labels.clone(), entries)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    /// Block Choi matrix; see the module docs for the index convention.
    pub fn block_choi(&self) -> DMatrix<C64> {
        let (n, d) = (self.len(), self.dim);
        let block = d * d;
        DMatrix::from_fn(n * block, n * block, |row, col| {
            let (sigma, p, r) = (row / block, (row % block) / d, row % d);
            let (tau, q, s) = (col / block, (col % block) / d, col % d);
            self.entry(sigma, tau).rep()[(r + d * s, p + d * q)]
        })
    }

    /// `u(σ,p,r) = δ_pr`, normalized; the image of the constraint `Σ a_i b_i = 0`.
    fn constraint_direction(&self) -> DVector<C64> {
        let (n, d) = (self.len(), self.dim);
        let mut u = DVector::zeros(n * d * d);
        for sigma in 0..n {
            for p in 0..d {
                u[sigma * d * d + p * d + p] = C64::new(1.0, 0.0);
            }
        }
        let norm = u.norm();
        u.unscale(norm)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut entries = BTreeMap::new();
        for (i, a) in self.labels.iter().enumerate() {
            for (j, b) in self.labels.iter().enumerate() {
                let rep = self.entry(i, j).rep();
                let n = rep.nrows();
                let values = (0..n * n).map(|k| [rep[(k / n, k % n)].re, rep[(k / n, k % n)].im]).collect();
                entries.insert(format!("{a}|{b}"), values);
            }
        }
        let doc = KernelJson { dim: self.dim, labels: self.labels.clone(), entries };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: KernelJson = serde_json::from_str(text)?;
        if doc.dim == 0 {
            return Err(Error::Scenario("kernel dimension must be positive".into()));
        }
        if let Some(l) = doc.labels.iter().find(|l| l.contains('|')) {
            return Err(Error::Scenario(format!("label `{l}` contains `|`")));
        }
        let n = doc.dim * doc.dim;
        let mut entries = Vec::with_capacity(doc.labels.len().pow(2));
        for a in &doc.labels {
            for b in &doc.labels {
                let key = format!("{a}|{b}");
                let values = doc
                    .entries
                    .get(&key)
                    .ok_or_else(|| Error::Scenario(format!("kernel entry `{key}` missing")))?;
                if values.len() != n * n {
                    return Err(Error::DimensionMismatch { expected: n * n, found: values.len() });
                }
                let rep = DMatrix::from_fn(n, n, |r, c| {
                    let [re, im] = values[r * n + c];
                    C64::new(re, im)
                });
                entries.push(Superoperator::from_rep(doc.dim, rep)?);
            }
        }
        if doc.entries.len() != entries.len() {
            return Err(Error::Scenario("kernel has entries for unknown label pairs".into()));
        }
        Self::new(doc.dim, doc.labels, entries)
    }
}

#[derive(Serialize, Deserialize)]
struct KernelJson {
    dim: usize,
    labels: Vec<String>,
    entries: BTreeMap<String, Vec<[f64; 2]>>,
}

/// An explicit tuple `(σ_i, a_i, b_i)` for the positivity condition.
#[derive(Clone, Debug, Serialize)]
pub struct PositivityWitness {
    pub labels: Vec<String>,
    #[serde(skip)]
    pub a: Vec<Element>,
    #[serde(skip)]
    pub b: Vec<Element>,
    /// Smallest eigenvalue of `Σ b_i* k^{σ_i σ_j}(a_i* a_j) b_j`, re-evaluated
    /// directly from the tuple.
    pub form_min_eigenvalue: f64,
    /// `‖Σ a_i b_i‖`, zero for witnesses of the conditional test.
    pub constraint_residual: f64,
}

/// `Σ_ij b_i* k^{σ_i σ_j}(a_i* a_j) b_j`.
pub fn quadratic_form(kernel: &OperatorKernel, sigma: &[usize], a: &[Element], b: &[Element]) -> Element {
    let d = kernel.dim();
    let mut sum = DMatrix::zeros(d, d);
    for i in 0..sigma.len() {
        for j in 0..sigma.len() {
            let inner = kernel.entry(sigma[i], sigma[j]).apply(&(a[i].adjoint() * &a[j]));
            sum += b[i].adjoint() * inner * &b[j];
        }
    }
    sum
}

fn witness_from_vector(kernel: &OperatorKernel, w: &DVector<C64>) -> PositivityWitness {
    let (n, d) = (kernel.len(), kernel.dim());
    let mut sigma = Vec::new();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for s in 0..n {
        for p in 0..d {
            let g = DVector::from_fn(d, |r, _| w[s * d * d + p * d + r]);
            if g.norm() == 0.0 {
                continue;
            }
            let mut bm = DMatrix::zeros(d, d);
            bm.set_column(0, &g);
            sigma.push(s);
            a.push(algebra::matrix_unit(d, 0, p));
            b.push(bm);
        }
    }
    let form = quadratic_form(kernel, &sigma, &a, &b);
    let constraint: Element = a.iter().zip(&b).map(|(x, y)| x * y).fold(DMatrix::zeros(d, d), |acc, m| acc + m);
    PositivityWitness {
        labels: sigma.iter().map(|&s| kernel.labels()[s].clone()).collect(),
        a,
        b,
        form_min_eigenvalue: algebra::hermitian_spectrum(&form).min(),
        constraint_residual: constraint.norm(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CpdVerdict {
    pub cpd: bool,
    pub min_eigenvalue: f64,
    pub threshold: f64,
    pub witness: Option<PositivityWitness>,
}

/// Complete positive definiteness via the block Choi matrix.
pub fn is_cpd(kernel: &OperatorKernel, tol: f64) -> Result<CpdVerdict> {
    kernel.ensure_hermitian(1e-9)?;
    let choi = kernel.block_choi();
    let threshold = -tol * algebra::op_norm(&choi).max(1.0);
    let spectrum = algebra::hermitian_spectrum(&choi);
    let cpd = spectrum.min() >= threshold;
    let witness = (!cpd).then(|| witness_from_vector(kernel, &spectrum.vector(0)));
    Ok(CpdVerdict { cpd, min_eigenvalue: spectrum.min(), threshold, witness })
}

#[derive(Clone, Debug)]
pub struct ConditionalConfig {
    pub samples: usize,
    pub max_terms: usize,
    pub seed: u64,
    pub grid: Vec<f64>,
}

impl Default for ConditionalConfig {
    fn default() -> Self {
        ConditionalConfig { samples: 500, max_terms: 3, seed: 0x5eed, grid: geometric_grid(1e-3, 1.0, 12) }
    }
}

pub fn geometric_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (points - 1) as f64;
    (0..points).map(|k| lo * (ratio * k as f64).exp()).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SampledCheck {
    pub samples: usize,
    /// Smallest eigenvalue over all samples, each divided by `max(1, scale)`.
    pub min_scaled_eigenvalue: f64,
    pub violations: usize,
    pub worst: Option<PositivityWitness>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GridPoint {
    pub t: f64,
    pub min_eigenvalue: f64,
    pub threshold: f64,
    pub cpd: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionalReport {
    pub conditionally_cpd: bool,
    /// Constrained sampling of the positivity condition.
    pub sampled: SampledCheck,
    pub sampled_pass: bool,
    /// CPD of `exp(tQ)` on the t-grid.
    pub schoenberg: Vec<GridPoint>,
    pub schoenberg_pass: bool,
    /// Block Choi matrix compressed to the constraint subspace.
    pub compressed_min_eigenvalue: f64,
    pub compressed_threshold: f64,
    pub compressed_pass: bool,
    pub discrepancy: bool,
    pub witness: Option<PositivityWitness>,
    pub seed: u64,
}

/// Conditional complete positive definiteness.
///
/// No finite procedure decides the condition over all tuples from sampling
/// alone, so three routes are run and all must agree: constrained sampling,
/// CPD of `exp(tQ)` on a grid, and the compressed block Choi matrix.
pub fn is_conditionally_cpd(kernel: &OperatorKernel, tol: f64, config: &ConditionalConfig) -> Result<ConditionalReport> {
    kernel.ensure_hermitian(1e-9)?;

    let choi = kernel.block_choi();
    let u = kernel.constraint_direction();
    let projector = DMatrix::identity(choi.nrows(), choi.ncols()) - &u * u.adjoint();
    let compressed = &projector * &choi * &projector;
    let spectrum = algebra::hermitian_spectrum(&compressed);
    let compressed_threshold = -tol * algebra::op_norm(&choi).max(1.0);
    let compressed_pass = spectrum.min() >= compressed_threshold;

    let sampled = sample_constrained(kernel, config)?;
    let sampled_pass = sampled.min_scaled_eigenvalue >= -tol;

    let semigroup = CpdSemigroup::new(kernel.clone());
    let mut schoenberg = Vec::with_capacity(config.grid.len());
    for &t in &config.grid {
        let verdict = is_cpd(&semigroup.evaluate(t)?, tol)?;
        schoenberg.push(GridPoint { t, min_eigenvalue: verdict.min_eigenvalue, threshold: verdict.threshold, cpd: verdict.cpd });
    }
    let schoenberg_pass = schoenberg.iter().all(|g| g.cpd);

    let witness = if !compressed_pass {
        let w = &projector * spectrum.vector(0);
        Some(witness_from_vector(kernel, &w))
    } else if !sampled_pass {
        sampled.worst.clone()
    } else {
        None
    };
    let verdicts = [sampled_pass, schoenberg_pass, compressed_pass];
    Ok(ConditionalReport {
        conditionally_cpd: verdicts.iter().all(|&v| v),
        discrepancy: verdicts.iter().any(|&v| v != verdicts[0]),
        sampled,
        sampled_pass,
        schoenberg,
        schoenberg_pass,
        compressed_min_eigenvalue: spectrum.min(),
        compressed_threshold,
        compressed_pass,
        witness,
        seed: config.seed,
    })
}

/// An invertible matrix with condition number below `1e3`.
fn invertible_matrix(rng: &mut Rng, d: usize) -> Element {
    loop {
        let m = random::gaussian_matrix(rng, d, d);
        let sv = m.clone().svd(false, false).singular_values;
        let (max, min) = (sv.max(), sv.min());
        if min > 0.0 && max / min < 1e3 {
            return m;
        }
    }
}

/// A random tuple with `Σ a_i b_i = 0`; the last `b` is solved for.
pub fn constrained_tuple(rng: &mut Rng, labels: usize, d: usize, n: usize) -> (Vec<usize>, Vec<Element>, Vec<Element>) {
    let sigma: Vec<usize> = (0..n).map(|_| random::index(rng, labels)).collect();
    let mut a: Vec<Element> = (0..n - 1).map(|_| random::gaussian_matrix(rng, d, d)).collect();
    let mut b: Vec<Element> = (0..n - 1).map(|_| random::gaussian_matrix(rng, d, d)).collect();
    let last = invertible_matrix(rng, d);
    let partial = a.iter().zip(&b).fold(DMatrix::zeros(d, d), |acc: Element, (x, y)| acc + x * y);
    let inverse = last.clone().try_inverse().expect("well-conditioned by construction");
    b.push(-(inverse * partial));
    a.push(last);
    (sigma, a, b)
}

/// A random unconstrained tuple.
pub fn free_tuple(rng: &mut Rng, labels: usize, d: usize, n: usize) -> (Vec<usize>, Vec<Element>, Vec<Element>) {
    let sigma = (0..n).map(|_| random::index(rng, labels)).collect();
    let a = (0..n).map(|_| random::gaussian_matrix(rng, d, d)).collect();
    let b = (0..n).map(|_| random::gaussian_matrix(rng, d, d)).collect();
    (sigma, a, b)
}

/// Magnitude bound for the quadratic form of a tuple, used to make sampled
/// eigenvalues scale-free.
pub fn form_scale(kernel: &OperatorKernel, sigma: &[usize], a: &[Element], b: &[Element]) -> f64 {
    let mut scale = 0.0;
    for i in 0..sigma.len() {
        for j in 0..sigma.len() {
            scale += b[i].norm() * a[i].norm() * a[j].norm() * b[j].norm() * kernel.entry(sigma[i], sigma[j]).frobenius();
        }
    }
    scale.max(1.0)
}

fn sample_constrained(kernel: &OperatorKernel, config: &ConditionalConfig) -> Result<SampledCheck> {
    let mut rng = random::rng(config.seed);
    let (labels, d) = (kernel.len(), kernel.dim());
    let mut check = SampledCheck { samples: 0, min_scaled_eigenvalue: f64::INFINITY, violations: 0, worst: None };
    if labels == 0 {
        check.min_scaled_eigenvalue = 0.0;
        return Ok(check);
    }
    let max_terms = config.max_terms.max(2);
    for _ in 0..config.samples {
        let n = 2 + random::index(&mut rng, max_terms - 1);
        let (sigma, a, b) = constrained_tuple(&mut rng, labels, d, n);
        let form = quadratic_form(kernel, &sigma, &a, &b);
        let scaled = algebra::hermitian_spectrum(&form).min() / form_scale(kernel, &sigma, &a, &b);
        check.samples += 1;
        if scaled < 0.0 && scaled < check.min_scaled_eigenvalue {
            let residual = a.iter().zip(&b).fold(DMatrix::zeros(d, d), |acc: Element, (x, y)| acc + x * y).norm();
            check.worst = Some(PositivityWitness {
                labels: sigma.iter().map(|&s| kernel.labels()[s].clone()).collect(),
                form_min_eigenvalue: algebra::hermitian_spectrum(&form).min(),
                constraint_residual: residual,
                a,
                b,
            });
        }
        if scaled < -1e-10 {
            check.violations += 1;
        }
        check.min_scaled_eigenvalue = check.min_scaled_eigenvalue.min(scaled);
    }
    Ok(check)
}

/// A CPD-semigroup given by its generator; every entry is the one-parameter
/// semigroup `t ↦ exp(t Q^{σσ'})`.
#[derive(Clone, Debug)]
pub struct CpdSemigroup {
    generator: OperatorKernel,
}

impl CpdSemigroup {
    pub fn new(generator: OperatorKernel) -> Self {
        CpdSemigroup { generator }
    }

    pub fn generator(&self) -> &OperatorKernel {
        &self.generator
    }

    pub fn evaluate(&self, t: f64) -> Result<OperatorKernel> {
        self.generator.map(|g| g.exp(t))
    }

    pub fn entry_at(&self, i: usize, j: usize, t: f64) -> Result<Superoperator> {
        self.generator.entry(i, j).exp(t)
    }

    pub fn entry_at_signed(&self, i: usize, j: usize, t: f64) -> Result<Superoperator> {
        self.generator.entry(i, j).exp_signed(t)
    }
}

/// `k^{σσ'}(b) = Σ_m L_{σ,m}* b L_{σ',m}`.
#[derive(Clone, Debug)]
pub struct KolmogorovDecomposition {
    pub dim: usize,
    pub labels: Vec<String>,
    /// `factors[σ][m] = L_{σ,m}`.
    pub factors: Vec<Vec<Element>>,
}

impl KolmogorovDecomposition {
    pub fn rank(&self) -> usize {
        self.factors.first().map_or(0, Vec::len)
    }

    pub fn reconstruct(&self) -> Result<OperatorKernel> {
        OperatorKernel::from_fn(self.dim, self.labels.clone(), |i, j| {
            self.factors[i]
                .iter()
                .zip(&self.factors[j])
                .fold(Superoperator::zero(self.dim), |acc, (li, lj)| acc + Superoperator::sandwich(&li.adjoint(), lj))
        })
    }
}

/// Factorizes the block Choi matrix of a CPD kernel.
pub fn kolmogorov_decompose(kernel: &OperatorKernel, tol: f64) -> Result<KolmogorovDecomposition> {
    let verdict = is_cpd(kernel, tol)?;
    if !verdict.cpd {
        return Err(Error::NotCpd { min_eigenvalue: verdict.min_eigenvalue });
    }
    let (n, d) = (kernel.len(), kernel.dim());
    let choi = kernel.block_choi();
    let spectrum = algebra::hermitian_spectrum(&choi);
    let cut = tol * algebra::op_norm(&choi).max(1.0);
    let mut factors = vec![Vec::new(); n];
    for (k, &lambda) in spectrum.values.iter().enumerate() {
        if lambda <= cut {
            continue;
        }
        let w = spectrum.vector(k) * C64::new(lambda.sqrt(), 0.0);
        for (sigma, out) in factors.iter_mut().enumerate() {
            out.push(DMatrix::from_fn(d, d, |p, r| w[sigma * d * d + p * d + r].conj()));
        }
    }
    Ok(KolmogorovDecomposition { dim: d, labels: kernel.labels().to_vec(), factors })
}

/// Generator of Christensen–Evans shape,
/// `Q^{σσ'}(b) = η_σ* b η_σ' + b β_σ' + β_σ* b`; conditionally CPD for any
/// choice of `η`, `β`. Used to produce test instances and scenario input.
pub fn ce_form_kernel(dim: usize, labels: Vec<String>, eta: &[Element], beta: &[Element]) -> Result<OperatorKernel> {
    let n = labels.len();
    if eta.len() != n || beta.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: eta.len().min(beta.len()) });
    }
    if let Some(m) = eta.iter().chain(beta).find(|m| m.nrows() != dim || m.ncols() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, found: m.nrows() });
    }
    OperatorKernel::from_fn(dim, labels, |i, j| {
        Superoperator::sandwich(&eta[i].adjoint(), &eta[j])
            + Superoperator::right_mul(&beta[j])
            + Superoperator::left_mul(&beta[i].adjoint())
    })
}

/// Scalar (`d = 1`) kernel from a covariance matrix `γ`.
pub fn covariance_kernel(labels: Vec<String>, gamma: &DMatrix<C64>) -> Result<OperatorKernel> {
    let n = labels.len();
    if gamma.nrows() != n || gamma.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: gamma.nrows() });
    }
    OperatorKernel::from_fn(1, labels, |i, j| Superoperator::identity(1).scale(gamma[(i, j)]))
}

/// Gaussian `η_σ`, `β_σ` with entries of standard deviation `scale` per real component.
pub fn random_ce_parameters(rng: &mut Rng, dim: usize, labels: usize, scale: f64) -> (Vec<Element>, Vec<Element>) {
    let z = C64::new(scale, 0.0);
    let eta = (0..labels).map(|_| random::gaussian_matrix(rng, dim, dim) * z).collect();
    let beta = (0..labels).map(|_| random::gaussian_matrix(rng, dim, dim) * z).collect();
    (eta, beta)
}

pub fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}
