//! Average BER over Rayleigh fading from the tone correlation matrix.
//!
//! The decision statistic of one competing codeword is the Gaussian quadratic
//! form `Delta = y^H A y` with `y = [g; e]`, `g = D h'` the faded symbol
//! differences and `e` interference plus noise on the same tones. Its
//! negative-tail probability is recovered from the Laplace transform
//! `Phi(s) = E[exp(-s Delta)]` by integrating along a vertical line inside
//! the convergence strip. After the substitution `s = c (1 + j tan(theta))`
//! the integral becomes
//! `(1/pi) int_0^{pi/2} Re Phi + tan(theta) Im Phi d theta`, evaluated with
//! the Gauss-Chebyshev (midpoint) rule.
//!
//! Two evaluations of `Phi` are provided. [`laplace_transform`] works on the
//! full `2 eta x 2 eta` matrices. The batch path diagonalizes `R_gg` once per
//! term, after which `Phi` factorizes over the eigenmodes.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::ChannelCorrelation;
use crate::error::{Error, Result};
use crate::system::ErrorTerm;

type C64 = Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadCase {
    /// Deterministic interference `J'` (possibly zero).
    NonFaded,
    /// Rayleigh-faded tones with covariance `R_J'J'`.
    Rayleigh,
}

/// Position of the vertical integration line `Re(s) = c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Abscissa {
    /// Minimizer of `Phi(c) / c` on the real axis inside the strip.
    Saddle,
    /// A fixed fraction of the nearest positive pole.
    PoleFraction(f64),
}

/// Gauss-Chebyshev settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureConfig {
    /// Initial node count, doubled until converged.
    pub nodes: usize,
    pub max_nodes: usize,
    /// Successive results must agree to `rel_tol * |P| + abs_tol`.
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub abscissa: Abscissa,
    /// Cross-check every result with a dense trapezoid rule.
    pub verify: bool,
    pub dense_nodes: usize,
    pub verify_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            nodes: 64,
            max_nodes: 1 << 14,
            rel_tol: 1e-9,
            abs_tol: 1e-300,
            abscissa: Abscissa::Saddle,
            verify: false,
            dense_nodes: 20_000,
            verify_tol: 1e-6,
        }
    }
}

impl QuadratureConfig {
    /// Tight settings used for equivalence checks.
    pub fn precise() -> Self {
        QuadratureConfig {
            rel_tol: 1e-13,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.nodes < 8 || self.max_nodes < self.nodes {
            return Err(Error::config("quadrature needs at least 8 nodes"));
        }
        if let Abscissa::PoleFraction(f) = self.abscissa {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::config("contour abscissa must lie strictly inside the strip"));
            }
        }
        Ok(())
    }
}

/// The `(mu_yy, R_yy, A)` description of one competing codeword.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianQuadForm {
    pub eta: usize,
    /// Diagonal of `D`, the symbol differences `x' - z'`.
    pub d: Vec<C64>,
    pub r_gg: DMatrix<C64>,
    /// Interference on the term tones (zero in the Rayleigh case).
    pub j: Vec<C64>,
    /// `F` with `R_J'J' = F F^H` (Rayleigh case; one column per tone).
    pub rayleigh_factor: Option<DMatrix<C64>>,
    pub n0: f64,
    pub case: QuadCase,
}

impl GaussianQuadForm {
    /// `R_J'J'`.
    pub fn r_jj(&self) -> DMatrix<C64> {
        match &self.rayleigh_factor {
            Some(f) => f * f.adjoint(),
            None => DMatrix::zeros(self.eta, self.eta),
        }
    }

    pub fn mu_yy(&self) -> DVector<C64> {
        let mut mu = DVector::zeros(2 * self.eta);
        if self.case == QuadCase::NonFaded {
            for (k, &x) in self.j.iter().enumerate() {
                mu[self.eta + k] = x;
            }
        }
        mu
    }

    pub fn r_yy(&self) -> DMatrix<C64> {
        let n = self.eta;
        let mut r = DMatrix::zeros(2 * n, 2 * n);
        r.view_mut((0, 0), (n, n)).copy_from(&self.r_gg);
        let mut lower = self.r_jj();
        for k in 0..n {
            lower[(k, k)] += C64::new(self.n0, 0.0);
        }
        r.view_mut((n, n), (n, n)).copy_from(&lower);
        r
    }

    /// `[[I, -I], [-I, 0]]`.
    pub fn a(&self) -> DMatrix<C64> {
        let n = self.eta;
        DMatrix::from_fn(2 * n, 2 * n, |r, c| {
            let v = match (r < n, c < n) {
                (true, true) if r == c => 1.0,
                (true, false) if c - n == r => -1.0,
                (false, true) if r - n == c => -1.0,
                _ => 0.0,
            };
            C64::new(v, 0.0)
        })
    }

    /// `A^{-1} = [[0, -I], [-I, -I]]`.
    pub fn a_inv(&self) -> DMatrix<C64> {
        let n = self.eta;
        DMatrix::from_fn(2 * n, 2 * n, |r, c| {
            let v = match (r < n, c < n) {
                (true, false) if c - n == r => -1.0,
                (false, true) if r - n == c => -1.0,
                (false, false) if r == c => -1.0,
                _ => 0.0,
            };
            C64::new(v, 0.0)
        })
    }
}

/// Forms the quadratic form of `term` with normalized-gain correlation
/// `sigma`, interference `j` over all tones, and noise power `n0`.
/// For the Rayleigh case `j` is ignored and `rayleigh` supplies the
/// leakage vectors and `E[alpha_k^2]`.
pub fn build_quadform(
    term: &ErrorTerm,
    sigma: &ChannelCorrelation,
    j: &[C64],
    rayleigh: Option<(&[Vec<C64>], &[f64])>,
    n0: f64,
) -> Result<GaussianQuadForm> {
    let eta = term.eta();
    if eta == 0 {
        return Err(Error::invalid("error term has no differing symbols"));
    }
    let sub = sigma.submatrix(&term.tones);
    let d = term.diffs.clone();
    let r_gg = DMatrix::from_fn(eta, eta, |a, b| d[a] * sub[(a, b)] * d[b].conj());
    let (case, jv, factor) = match rayleigh {
        None => (QuadCase::NonFaded, term.tones.iter().map(|&t| j[t]).collect(), None),
        Some((leakage, ms)) => {
            let f = DMatrix::from_fn(eta, leakage.len(), |a, k| leakage[k][term.tones[a]] * ms[k].sqrt());
            (QuadCase::Rayleigh, vec![C64::new(0.0, 0.0); eta], Some(f))
        }
    };
    Ok(GaussianQuadForm {
        eta,
        d,
        r_gg,
        j: jv,
        rayleigh_factor: factor,
        n0,
        case,
    })
}

/// `Phi(s)` from the full matrices.
pub fn laplace_transform(qf: &GaussianQuadForm, s: C64) -> Result<C64> {
    let n2 = 2 * qf.eta;
    let r = qf.r_yy();
    let m = DMatrix::<C64>::identity(n2, n2) + (&r * qf.a()) * s;
    let det = m.clone().lu().determinant();
    if det.norm() < 1e-300 {
        return Err(Error::Pole { re: s.re, im: s.im });
    }
    let mu = qf.mu_yy();
    if qf.case == QuadCase::Rayleigh || mu.iter().all(|x| x.norm() == 0.0) {
        return Ok(C64::new(1.0, 0.0) / det);
    }
    let inner = qf.a_inv() + r * s;
    let Some(inv) = inner.try_inverse() else {
        return Err(Error::Pole { re: s.re, im: s.im });
    };
    let quad = (mu.adjoint() * inv * &mu)[(0, 0)];
    Ok((-s * quad).exp() / det)
}

/// Eigenmode representation of one quadratic form.
#[derive(Clone, Debug)]
struct Modal {
    lambda: Vec<f64>,
    n0: f64,
    interference: ModalInterference,
}

#[derive(Clone, Debug)]
enum ModalInterference {
    Zero,
    /// `|U^H J'|^2` per mode.
    Fixed(Vec<f64>),
    /// Columns of `U^H F`, one per interfering tone.
    Rayleigh(Vec<Vec<C64>>),
}

struct Eigen {
    lambda: Vec<f64>,
    u: DMatrix<C64>,
}

fn hermitian_eigen(r: &DMatrix<C64>) -> Eigen {
    let e = SymmetricEigen::new(r.clone());
    Eigen {
        lambda: e.eigenvalues.iter().map(|&l| l.max(0.0)).collect(),
        u: e.eigenvectors,
    }
}

/// `U^H v`.
fn project(u: &DMatrix<C64>, v: &[C64]) -> Vec<C64> {
    (0..u.ncols())
        .map(|i| (0..u.nrows()).map(|a| u[(a, i)].conj() * v[a]).sum())
        .collect()
}

impl Modal {
    fn from_quadform(qf: &GaussianQuadForm) -> Modal {
        let e = hermitian_eigen(&qf.r_gg);
        let interference = match (&qf.rayleigh_factor, qf.case) {
            (Some(f), QuadCase::Rayleigh) => ModalInterference::Rayleigh(
                (0..f.ncols())
                    .map(|k| project(&e.u, f.column(k).as_slice()))
                    .collect(),
            ),
            _ if qf.j.iter().all(|x| x.norm() == 0.0) => ModalInterference::Zero,
            _ => ModalInterference::Fixed(project(&e.u, &qf.j).iter().map(|x| x.norm_sqr()).collect()),
        };
        Modal {
            lambda: e.lambda,
            n0: qf.n0,
            interference,
        }
    }

    fn lambda_max(&self) -> f64 {
        self.lambda.iter().copied().fold(0.0, f64::max)
    }

    /// Smallest positive pole of `Phi` on the real axis, or a lower bound for it.
    fn pole(&self) -> f64 {
        let n0 = match &self.interference {
            // Interference power adds to the noise, which only moves the pole inward.
            ModalInterference::Rayleigh(cols) => {
                self.n0 + cols.iter().flatten().map(|x| x.norm_sqr()).sum::<f64>()
            }
            _ => self.n0,
        };
        let l = self.lambda_max();
        (1.0 + (1.0 + 4.0 * n0 / l).sqrt()) / (2.0 * n0)
    }

    fn abscissa(&self, quad: &QuadratureConfig) -> f64 {
        let pole = self.pole();
        match quad.abscissa {
            Abscissa::PoleFraction(f) => f * pole,
            Abscissa::Saddle => {
                // ln Phi(c) - ln c is convex on (0, pole); golden-section search.
                let f = |c: f64| self.ln_phi(C64::new(c, 0.0)).re - c.ln();
                let (mut a, mut b) = (1e-6 * pole, (1.0 - 1e-6) * pole);
                let r = (5f64.sqrt() - 1.0) / 2.0;
                let mut x1 = b - r * (b - a);
                let mut x2 = a + r * (b - a);
                let (mut f1, mut f2) = (f(x1), f(x2));
                // The optimum is flat, so a coarse bracket is enough.
                for _ in 0..24 {
                    if f1 < f2 {
                        b = x2;
                        x2 = x1;
                        f2 = f1;
                        x1 = b - r * (b - a);
                        f1 = f(x1);
                    } else {
                        a = x1;
                        x1 = x2;
                        f1 = f2;
                        x2 = a + r * (b - a);
                        f2 = f(x2);
                    }
                }
                0.5 * (a + b)
            }
        }
    }

    fn ln_phi(&self, s: C64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        let s2 = s * s;
        let mut w = Vec::new();
        for (i, &l) in self.lambda.iter().enumerate() {
            let q = 1.0 + s * l - s2 * (self.n0 * l);
            acc -= q.ln();
            match &self.interference {
                ModalInterference::Fixed(m2) => acc += s2 * (l * m2[i]) / q,
                ModalInterference::Rayleigh(_) => w.push(s2 * l / q),
                ModalInterference::Zero => {}
            }
        }
        if let ModalInterference::Rayleigh(cols) = &self.interference {
            acc -= rayleigh_det(cols, &w).ln();
        }
        acc
    }

    /// Same as `ln_phi(s).exp()` with one complex product in place of a
    /// logarithm per mode.
    fn phi(&self, s: C64) -> C64 {
        let s2 = s * s;
        let mut prod = C64::new(1.0, 0.0);
        let mut extra = C64::new(0.0, 0.0);
        let mut w = Vec::new();
        for (i, &l) in self.lambda.iter().enumerate() {
            let q = 1.0 + s * l - s2 * (self.n0 * l);
            prod *= q;
            match &self.interference {
                ModalInterference::Fixed(m2) => extra += s2 * (l * m2[i]) / q,
                ModalInterference::Rayleigh(_) => w.push(s2 * l / q),
                ModalInterference::Zero => {}
            }
        }
        if let ModalInterference::Rayleigh(cols) = &self.interference {
            prod *= rayleigh_det(cols, &w);
        }
        if !(prod.re.is_finite() && prod.im.is_finite()) {
            // |Phi| decays like |s|^(-2 eta); the product only overflows far out.
            return C64::new(0.0, 0.0);
        }
        extra.exp() / prod
    }

    fn pep(&self, quad: &QuadratureConfig) -> Result<f64> {
        if self.lambda_max() == 0.0 {
            return Ok(0.5);
        }
        if matches!(self.interference, ModalInterference::Zero) {
            return pep_eigen_angles(&self.lambda, self.n0, quad);
        }
        contour(|s| self.phi(s), self.abscissa(quad), quad)
    }
}

/// `det(I_K - B^H W B)` with `W = diag(w)`, `B` given by columns.
fn rayleigh_det(cols: &[Vec<C64>], w: &[C64]) -> C64 {
    let k = cols.len();
    if k == 1 {
        let sum: C64 = cols[0].iter().zip(w).map(|(b, &wi)| wi * b.norm_sqr()).sum();
        return 1.0 - sum;
    }
    let m = DMatrix::from_fn(k, k, |a, b| {
        let sum: C64 = cols[a].iter().zip(&cols[b]).zip(w).map(|((x, y), &wi)| x.conj() * wi * y).sum();
        if a == b {
            1.0 - sum
        } else {
            -sum
        }
    });
    m.lu().determinant()
}

fn check_probability(p: f64) -> Result<f64> {
    if !(-1e-12..=1.0 + 1e-12).contains(&p) || p.is_nan() {
        return Err(Error::Numerical(format!("quadrature produced {p}, outside [0, 1]")));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// `(1/pi) int_0^{pi/2} f(theta) d theta` with the midpoint rule, doubling
/// the node count until two successive results agree.
fn midpoint<F: FnMut(f64) -> f64>(mut f: F, quad: &QuadratureConfig) -> Result<f64> {
    let rule = |n: usize, f: &mut F| {
        let h = PI / 2.0 / n as f64;
        (0..n).map(|k| f((k as f64 + 0.5) * h)).sum::<f64>() * h / PI
    };
    let mut n = quad.nodes;
    let mut prev = rule(n, &mut f);
    while n < quad.max_nodes {
        n *= 2;
        let next = rule(n, &mut f);
        if (next - prev).abs() <= quad.rel_tol * next.abs() + quad.abs_tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Numerical(format!(
        "quadrature did not converge within {} nodes (last value {prev:e})",
        quad.max_nodes
    )))
}

fn dense_trapezoid<F: FnMut(f64) -> f64>(mut f: F, n: usize) -> f64 {
    let h = PI / 2.0 / n as f64;
    let mut s = 0.5 * (f(0.0) + f(PI / 2.0 - 1e-9));
    for k in 1..n {
        s += f(k as f64 * h);
    }
    s * h / PI
}

fn contour<P: Fn(C64) -> C64>(phi: P, c: f64, quad: &QuadratureConfig) -> Result<f64> {
    let integrand = |theta: f64| {
        let t = theta.tan();
        let v = phi(C64::new(c, c * t));
        v.re + t * v.im
    };
    let p = check_probability(midpoint(integrand, quad)?)?;
    if quad.verify {
        let dense = dense_trapezoid(integrand, quad.dense_nodes);
        if (dense - p).abs() > quad.verify_tol * p.abs().max(1e-300) {
            return Err(Error::Numerical(format!(
                "contour quadrature {p:e} disagrees with dense integration {dense:e}"
            )));
        }
    }
    Ok(p)
}

/// Average PEP by contour integration along `Re(s) = c`.
pub fn pep_contour(qf: &GaussianQuadForm, quad: &QuadratureConfig) -> Result<f64> {
    quad.validate()?;
    let modal = Modal::from_quadform(qf);
    if modal.lambda_max() == 0.0 {
        return Ok(0.5);
    }
    contour(|s| modal.phi(s), modal.abscissa(quad), quad)
}

/// Same as [`pep_contour`] but evaluates `Phi` from the full matrices.
pub fn pep_contour_full(qf: &GaussianQuadForm, quad: &QuadratureConfig) -> Result<f64> {
    quad.validate()?;
    let modal = Modal::from_quadform(qf);
    let c = modal.abscissa(quad);
    let failure = std::cell::RefCell::new(None);
    let p = contour(
        |s| match laplace_transform(qf, s) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                C64::new(0.0, 0.0)
            }
        },
        c,
        quad,
    );
    match failure.into_inner() {
        Some(e) => Err(e),
        None => p,
    }
}

/// Average PEP without interference:
/// `(1/pi) int_0^{pi/2} 1 / det(I + R_gg / (4 N0 sin^2 theta)) d theta`.
pub fn pep_no_interference(qf: &GaussianQuadForm, quad: &QuadratureConfig) -> Result<f64> {
    quad.validate()?;
    let e = hermitian_eigen(&qf.r_gg);
    pep_eigen_angles(&e.lambda, qf.n0, quad)
}

fn pep_eigen_angles(lambda: &[f64], n0: f64, quad: &QuadratureConfig) -> Result<f64> {
    let scaled: Vec<f64> = lambda.iter().map(|l| l / (4.0 * n0)).collect();
    let p = midpoint(
        |theta| {
            let s2 = theta.sin().powi(2);
            scaled.iter().map(|&x| s2 / (s2 + x)).product::<f64>()
        },
        quad,
    )?;
    check_probability(p)
}

/// Interference at one operating point, at unit shadowing.
#[derive(Clone, Debug, PartialEq)]
pub enum Interferer {
    None,
    /// Deterministic `J` over all data tones.
    Fixed(Vec<C64>),
    /// Rayleigh tones: unit leakage vectors over all data tones and `E[alpha_k^2]`.
    Rayleigh { leakage: Vec<Vec<C64>>, mean_square: Vec<f64> },
}

impl Interferer {
    fn scaled(&self, g: f64) -> Interferer {
        match self {
            Interferer::None => Interferer::None,
            Interferer::Fixed(j) => Interferer::Fixed(j.iter().map(|x| x / g).collect()),
            Interferer::Rayleigh { leakage, mean_square } => Interferer::Rayleigh {
                leakage: leakage.clone(),
                mean_square: mean_square.iter().map(|m| m / (g * g)).collect(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatingPoint {
    pub n0: f64,
    pub interferer: Interferer,
}

/// Average BER `(1/L_c) sum_i sum_l a_l PEP_il` for every operating point.
/// No 1/2 cap is applied. Terms are given per start position, with any
/// erased tones already removed.
pub fn average_ber_method2(
    terms: &[Vec<ErrorTerm>],
    sigma: &ChannelCorrelation,
    points: &[OperatingPoint],
    quad: &QuadratureConfig,
) -> Result<Vec<f64>> {
    let weighted: Vec<(f64, OperatingPoint)> = points.iter().map(|p| (1.0, p.clone())).collect();
    let groups: Vec<Vec<usize>> = (0..points.len()).map(|k| vec![k]).collect();
    evaluate(terms, sigma, &weighted, &groups, quad)
}

/// [`average_ber_method2`] averaged over lognormal shadowing with standard
/// deviation `shadow_std_db` using `n_nodes` Gauss-Hermite nodes. At
/// amplitude `G` the noise power becomes `N0 / G^2` and the interference
/// amplitude `J / G`.
pub fn average_ber_method2_shadowed(
    terms: &[Vec<ErrorTerm>],
    sigma: &ChannelCorrelation,
    points: &[OperatingPoint],
    shadow_std_db: f64,
    n_nodes: usize,
    quad: &QuadratureConfig,
) -> Result<Vec<f64>> {
    let (nodes, weights) = lognormal_nodes(shadow_std_db, n_nodes)?;
    let mut expanded = Vec::new();
    let mut groups = Vec::new();
    for p in points {
        let mut group = Vec::new();
        for (&g, &w) in nodes.iter().zip(&weights) {
            group.push(expanded.len());
            expanded.push((
                w,
                OperatingPoint {
                    n0: p.n0 / (g * g),
                    interferer: p.interferer.scaled(g),
                },
            ));
        }
        groups.push(group);
    }
    evaluate(terms, sigma, &expanded, &groups, quad)
}

fn evaluate(
    terms: &[Vec<ErrorTerm>],
    sigma: &ChannelCorrelation,
    points: &[(f64, OperatingPoint)],
    groups: &[Vec<usize>],
    quad: &QuadratureConfig,
) -> Result<Vec<f64>> {
    quad.validate()?;
    let mut sums = vec![0.0; points.len()];
    if terms.is_empty() {
        return Ok(vec![0.0; groups.len()]);
    }
    // Fixed chunks summed in order keep the result independent of the
    // number of worker threads.
    let flat: Vec<&ErrorTerm> = terms.iter().flatten().collect();
    let partial = flat
        .par_chunks(TERM_CHUNK)
        .map(|chunk| {
            let mut sums = vec![0.0; points.len()];
            for &term in chunk {
                add_term(term, sigma, points, quad, &mut sums)?;
            }
            Ok(sums)
        })
        .collect::<Result<Vec<_>>>()?;
    for part in partial {
        sums.iter_mut().zip(part).for_each(|(s, p)| *s += p);
    }
    let lc = terms.len() as f64;
    Ok(groups
        .iter()
        .map(|g| g.iter().map(|&k| points[k].0 * sums[k]).sum::<f64>() / lc)
        .collect())
}

const TERM_CHUNK: usize = 256;

fn add_term(
    term: &ErrorTerm,
    sigma: &ChannelCorrelation,
    points: &[(f64, OperatingPoint)],
    quad: &QuadratureConfig,
    sums: &mut [f64],
) -> Result<()> {
    let a = term.info_errors as f64;
    if term.eta() == 0 {
        sums.iter_mut().for_each(|s| *s += 0.5 * a);
        return Ok(());
    }
    let sub = sigma.submatrix(&term.tones);
    let d = &term.diffs;
    let r_gg = DMatrix::from_fn(term.eta(), term.eta(), |x, y| d[x] * sub[(x, y)] * d[y].conj());
    let e = hermitian_eigen(&r_gg);
    for (sum, (_, p)) in sums.iter_mut().zip(points) {
        let interference = match &p.interferer {
            Interferer::None => ModalInterference::Zero,
            Interferer::Fixed(j) => {
                let jp: Vec<C64> = term.tones.iter().map(|&t| j[t]).collect();
                if jp.iter().all(|x| x.norm() == 0.0) {
                    ModalInterference::Zero
                } else {
                    ModalInterference::Fixed(project(&e.u, &jp).iter().map(|x| x.norm_sqr()).collect())
                }
            }
            Interferer::Rayleigh { leakage, mean_square } => {
                let cols: Vec<Vec<C64>> = leakage
                    .iter()
                    .zip(mean_square)
                    .filter(|(_, &ms)| ms > 0.0)
                    .filter_map(|(lk, &ms)| {
                        let f: Vec<C64> = term.tones.iter().map(|&t| lk[t] * ms.sqrt()).collect();
                        (f.iter().any(|x| x.norm() != 0.0)).then(|| project(&e.u, &f))
                    })
                    .collect();
                if cols.is_empty() {
                    ModalInterference::Zero
                } else {
                    ModalInterference::Rayleigh(cols)
                }
            }
        };
        let modal = Modal {
            lambda: e.lambda.clone(),
            n0: p.n0,
            interference,
        };
        *sum += a * modal.pep(quad)?;
    }
    Ok(())
}

/// Gauss-Hermite nodes and weights for `exp(-x^2)` (Golub-Welsch).
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::invalid("Gauss-Hermite rule needs at least one node"));
    }
    let jacobi = DMatrix::<f64>::from_fn(n, n, |a, b| {
        if a + 1 == b || b + 1 == a {
            (a.max(b) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let e = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (e.eigenvalues[k], PI.sqrt() * e.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

/// Shadowing amplitudes `G` and probability weights for
/// `20 log10 G ~ Normal(0, sigma_db^2)`.
pub fn lognormal_nodes(sigma_db: f64, n_nodes: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(sigma_db >= 0.0) {
        return Err(Error::invalid(format!("shadowing deviation must be non-negative, got {sigma_db}")));
    }
    if sigma_db == 0.0 {
        return Ok((vec![1.0], vec![1.0]));
    }
    let (x, w) = gauss_hermite(n_nodes)?;
    let g = x
        .iter()
        .map(|&xk| 10f64.powf(2f64.sqrt() * sigma_db * xk / 20.0))
        .collect();
    let w = w.iter().map(|wk| wk / PI.sqrt()).collect();
    Ok((g, w))
}

/// `E[f(G)]` over lognormal shadowing.
pub fn lognormal_average<F>(mut f: F, sigma_db: f64, n_nodes: usize) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (g, w) = lognormal_nodes(sigma_db, n_nodes)?;
    let mut acc = 0.0;
    for (gk, wk) in g.iter().zip(&w) {
        acc += wk * f(*gk)?;
    }
    Ok(acc)
}
