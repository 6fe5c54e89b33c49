//! Soft-margin kernel SVM trained by SMO, combined one-vs-one.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_labels, check_width};
use crate::error::{Error, Result};
use crate::features::{Row, SparseMatrix};
use crate::par;

pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 100_000;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Poly { degree: u32, gamma: f64 },
    Rbf { gamma: f64 },
}

impl Kernel {
    fn eval(&self, a: Row<'_>, b: Row<'_>, sq_a: f64, sq_b: f64) -> f64 {
        match *self {
            Kernel::Linear => a.dot(&b),
            Kernel::Poly { degree, gamma } => (gamma * a.dot(&b) + 1.0).powi(degree as i32),
            Kernel::Rbf { gamma } => (-gamma * (sq_a + sq_b - 2.0 * a.dot(&b)).max(0.0)).exp(),
        }
    }
}

/// Kernel choice before `gamma` is resolved against the training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Poly,
    Rbf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub c: f64,
    pub degree: u32,
    /// `None` means `1 / (n_features * variance of X)`.
    pub gamma: Option<f64>,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            kind: KernelKind::Linear,
            c: 1.0,
            degree: 3,
            gamma: None,
        }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::config(format!("C must be positive, got {}", self.c)));
        }
        if self.kind == KernelKind::Poly && self.degree < 2 {
            return Err(Error::config("poly kernel degree must be at least 2"));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::config(format!("gamma must be positive, got {g}")));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, x: &SparseMatrix) -> Kernel {
        let gamma = self.gamma.unwrap_or_else(|| default_gamma(x));
        match self.kind {
            KernelKind::Linear => Kernel::Linear,
            KernelKind::Poly => Kernel::Poly {
                degree: self.degree,
                gamma,
            },
            KernelKind::Rbf => Kernel::Rbf { gamma },
        }
    }
}

pub fn default_gamma(x: &SparseMatrix) -> f64 {
    let denom = x.n_cols() as f64 * x.entry_variance();
    if denom > 0.0 {
        1.0 / denom
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub kernel: KernelSpec,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            kernel: KernelSpec::default(),
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Dual solution of one binary problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    /// `max_{I_up} -y G - min_{I_low} -y G` at exit.
    pub kkt_violation: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct KernelRows<'a> {
    x: &'a SparseMatrix,
    kernel: Kernel,
    sq: Vec<f64>,
    rows: Vec<Option<Vec<f64>>>,
    cached: usize,
    budget: usize,
}

impl<'a> KernelRows<'a> {
    fn new(x: &'a SparseMatrix, kernel: Kernel) -> Self {
        let n = x.n_rows();
        KernelRows {
            x,
            kernel,
            sq: x.rows().map(|r| r.sq_norm()).collect(),
            rows: vec![None; n],
            cached: 0,
            budget: (1usize << 24).max(2 * n),
        }
    }

    fn diag(&self, i: usize) -> f64 {
        let r = self.x.row(i);
        self.kernel.eval(r, r, self.sq[i], self.sq[i])
    }

    fn row(&mut self, i: usize) -> &[f64] {
        if self.rows[i].is_none() {
            let n = self.x.n_rows();
            if self.cached + n > self.budget {
                self.rows.iter_mut().for_each(|r| *r = None);
                self.cached = 0;
            }
            let ri = self.x.row(i);
            let row = (0..n)
                .map(|j| self.kernel.eval(ri, self.x.row(j), self.sq[i], self.sq[j]))
                .collect();
            self.rows[i] = Some(row);
            self.cached += n;
        }
        self.rows[i].as_deref().expect("cached row")
    }
}

/// Solves `min ½ aᵀQa − eᵀa` s.t. `yᵀa = 0`, `0 ≤ a ≤ C`, with
/// `Q_ij = y_i y_j K(x_i, x_j)`, using second-order working-set selection.
pub fn solve_binary(x: &SparseMatrix, y: &[f64], kernel: Kernel, c: f64, tol: f64, max_iter: usize) -> BinarySolution {
    let n = y.len();
    let mut kr = KernelRows::new(x, kernel);
    let qd: Vec<f64> = (0..n).map(|i| kr.diag(i)).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let (sel, _) = select_working_set(&mut kr, &qd, y, &alpha, &grad, c, tol);
        let Some((i, j)) = sel else {
            converged = true;
            break;
        };
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let ki = kr.row(i).to_vec();
        let kj = kr.row(j).to_vec();
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        let quad = (qd[i] + qd[j] - 2.0 * ki[j]).max(TAU);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (dai, daj) = (alpha[i] - old_ai, alpha[j] - old_aj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * dai + y[j] * kj[t] * daj);
        }
    }

    let (_, kkt_violation) = select_working_set(&mut kr, &qd, y, &alpha, &grad, c, tol);
    if !converged {
        log::warn!(
            "SVM solver hit max_iter={max_iter} with KKT violation {kkt_violation:.3e} (tol {tol:.1e})"
        );
    }
    BinarySolution {
        rho: compute_rho(y, &alpha, &grad, c),
        alpha,
        kkt_violation,
        iterations,
        converged,
    }
}

fn is_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn is_low(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// Returns the working pair (or `None` at optimality) and the current
/// maximal violation `Gmax + Gmax2`.
fn select_working_set(
    kr: &mut KernelRows<'_>,
    qd: &[f64],
    y: &[f64],
    alpha: &[f64],
    grad: &[f64],
    c: f64,
    tol: f64,
) -> (Option<(usize, usize)>, f64) {
    let n = y.len();
    let mut gmax = f64::NEG_INFINITY;
    let mut i_sel = None;
    for t in 0..n {
        if is_up(y[t], alpha[t], c) {
            let v = -y[t] * grad[t];
            if v >= gmax {
                gmax = v;
                i_sel = Some(t);
            }
        }
    }
    let mut gmax2 = f64::NEG_INFINITY;
    for t in 0..n {
        if is_low(y[t], alpha[t], c) {
            gmax2 = gmax2.max(y[t] * grad[t]);
        }
    }
    let violation = if gmax.is_finite() && gmax2.is_finite() {
        (gmax + gmax2).max(0.0)
    } else {
        0.0
    };
    let Some(i) = i_sel else {
        return (None, violation);
    };
    if gmax + gmax2 < tol {
        return (None, violation);
    }
    let ki = kr.row(i);
    let mut best = None;
    let mut best_obj = f64::INFINITY;
    for t in 0..n {
        if !is_low(y[t], alpha[t], c) {
            continue;
        }
        let grad_diff = gmax + y[t] * grad[t];
        if grad_diff > 0.0 {
            let quad = (qd[i] + qd[t] - 2.0 * ki[t]).max(TAU);
            let obj = -(grad_diff * grad_diff) / quad;
            if obj <= best_obj {
                best_obj = obj;
                best = Some(t);
            }
        }
    }
    (best.map(|j| (i, j)), violation)
}

fn compute_rho(y: &[f64], alpha: &[f64], grad: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// One fitted one-vs-one subproblem: positive side is class `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    pub a: usize,
    pub b: usize,
    /// Indices into the model's support-vector pool.
    pub sv: Vec<u32>,
    /// `alpha_i * y_i` for each support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub kkt_violation: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    pub n_classes: usize,
    pub n_features: usize,
    pub support_vectors: SparseMatrix,
    pub pairs: Vec<PairModel>,
    /// Explicit primal weights per pair, linear kernel only.
    #[serde(skip)]
    linear_w: Vec<Vec<f64>>,
}

pub fn fit_svm(x: &SparseMatrix, y: &[usize], n_classes: usize, cfg: &SvmConfig) -> Result<SvmModel> {
    cfg.kernel.validate()?;
    let counts = check_labels(x, y, n_classes)?;
    let kernel = cfg.kernel.resolve(x);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in y.iter().enumerate() {
        by_class[c].push(i);
    }
    let mut pair_list = Vec::new();
    for a in 0..n_classes {
        for b in a + 1..n_classes {
            if counts[a] == 0 || counts[b] == 0 {
                log::warn!("skipping SVM pair ({a}, {b}): a class has no training rows");
                continue;
            }
            pair_list.push((a, b));
        }
    }
    if pair_list.is_empty() {
        return Err(Error::Training("every one-vs-one pair was degenerate".into()));
    }
    let solved = par::map(&pair_list, |&(a, b)| {
        let rows: Vec<usize> = by_class[a].iter().chain(&by_class[b]).copied().collect();
        let sub = x.select_rows(&rows);
        let ys: Vec<f64> = rows.iter().map(|&r| if y[r] == a { 1.0 } else { -1.0 }).collect();
        let sol = solve_binary(&sub, &ys, kernel, cfg.kernel.c, cfg.tol, cfg.max_iter);
        (rows, ys, sol)
    });

    let mut pool: BTreeMap<usize, u32> = BTreeMap::new();
    for (rows, _, sol) in &solved {
        for (k, &r) in rows.iter().enumerate() {
            if sol.alpha[k] > 0.0 {
                pool.insert(r, 0);
            }
        }
    }
    for (slot, id) in pool.values_mut().enumerate() {
        *id = slot as u32;
    }
    let sv_rows: Vec<usize> = pool.keys().copied().collect();
    let support_vectors = x.select_rows(&sv_rows);
    let pairs = pair_list
        .iter()
        .zip(solved)
        .map(|(&(a, b), (rows, ys, sol))| {
            let (sv, coef) = rows
                .iter()
                .enumerate()
                .filter(|&(k, _)| sol.alpha[k] > 0.0)
                .map(|(k, r)| (pool[r], sol.alpha[k] * ys[k]))
                .unzip();
            PairModel {
                a,
                b,
                sv,
                coef,
                rho: sol.rho,
                kkt_violation: sol.kkt_violation,
                iterations: sol.iterations,
            }
        })
        .collect();
    let mut model = SvmModel {
        kernel,
        c: cfg.kernel.c,
        n_classes,
        n_features: x.n_cols(),
        support_vectors,
        pairs,
        linear_w: Vec::new(),
    };
    model.prepare();
    Ok(model)
}

impl SvmModel {
    /// Builds derived state after fitting or deserialization.
    pub fn prepare(&mut self) {
        if self.kernel != Kernel::Linear {
            return;
        }
        self.linear_w = self
            .pairs
            .iter()
            .map(|p| {
                let mut w = vec![0.0; self.n_features];
                for (&s, &c) in p.sv.iter().zip(&p.coef) {
                    for (t, v) in self.support_vectors.row(s as usize).iter() {
                        w[t as usize] += c * v;
                    }
                }
                w
            })
            .collect();
    }

    pub fn max_kkt_violation(&self) -> f64 {
        self.pairs.iter().map(|p| p.kkt_violation).fold(0.0, f64::max)
    }

    /// Signed decision value of every pair for every row.
    pub fn decision_values(&self, x: &SparseMatrix) -> Result<Vec<Vec<f64>>> {
        check_width(self.n_features, x)?;
        let sv_sq: Vec<f64> = self.support_vectors.rows().map(|r| r.sq_norm()).collect();
        let rows: Vec<usize> = (0..x.n_rows()).collect();
        Ok(par::map(&rows, |&i| {
            let r = x.row(i);
            if self.kernel == Kernel::Linear {
                return self
                    .pairs
                    .iter()
                    .zip(&self.linear_w)
                    .map(|(p, w)| r.dot_dense(w) - p.rho)
                    .collect();
            }
            let sq = r.sq_norm();
            let k: Vec<f64> = (0..self.support_vectors.n_rows())
                .map(|s| self.kernel.eval(r, self.support_vectors.row(s), sq, sv_sq[s]))
                .collect();
            self.pairs
                .iter()
                .map(|p| {
                    p.sv.iter().zip(&p.coef).map(|(&s, c)| c * k[s as usize]).sum::<f64>() - p.rho
                })
                .collect()
        }))
    }

    pub fn predict(&self, x: &SparseMatrix) -> Result<Vec<usize>> {
        Ok(self
            .decision_values(x)?
            .iter()
            .map(|d| vote(self.n_classes, &self.pairs, d))
            .collect())
    }
}

/// One-vs-one voting. Ties in vote count go to the larger sum of signed
/// decision values over pairs among the tied classes, then the lowest index.
pub fn vote(n_classes: usize, pairs: &[PairModel], dec: &[f64]) -> usize {
    let mut votes = vec![0usize; n_classes];
    for (p, &d) in pairs.iter().zip(dec) {
        votes[if d >= 0.0 { p.a } else { p.b }] += 1;
    }
    let top = *votes.iter().max().expect("at least one class");
    let tied: Vec<usize> = (0..n_classes).filter(|&c| votes[c] == top).collect();
    if tied.len() == 1 {
        return tied[0];
    }
    let mut margin = vec![0.0; n_classes];
    for (p, &d) in pairs.iter().zip(dec) {
        if tied.contains(&p.a) && tied.contains(&p.b) {
            margin[p.a] += d;
            margin[p.b] -= d;
        }
    }
    let mut best = tied[0];
    for &c in &tied[1..] {
        if margin[c] > margin[best] {
            best = c;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(p: &[(f64, f64)]) -> SparseMatrix {
        SparseMatrix::from_dense(&p.iter().map(|&(a, b)| vec![a, b]).collect::<Vec<_>>())
    }

    fn cfg(kind: KernelKind, c: f64, gamma: Option<f64>) -> SvmConfig {
        SvmConfig {
            kernel: KernelSpec {
                kind,
                c,
                degree: 3,
                gamma,
            },
            ..Default::default()
        }
    }

    #[test]
    fn symmetric_pair_separates_at_origin() {
        let x = pts(&[(-1.0, 0.0), (1.0, 0.0)]);
        let m = fit_svm(&x, &[0, 1], 2, &cfg(KernelKind::Linear, 1.0, None)).unwrap();
        assert_eq!(m.predict(&pts(&[(2.0, 0.0), (-2.0, 0.0)])).unwrap(), vec![1, 0]);
        let d = m.decision_values(&pts(&[(0.0, 0.0)])).unwrap();
        assert!(d[0][0].abs() < 1e-9);
        assert!(m.max_kkt_violation() <= 1e-3);
    }

    #[test]
    fn xor_needs_a_nonlinear_kernel() {
        let x = pts(&[(0.0, 0.0), (1.0, 1.0), (0.0, 1.0), (1.0, 0.0)]);
        let y = [0, 0, 1, 1];
        let rbf = fit_svm(&x, &y, 2, &cfg(KernelKind::Rbf, 10.0, Some(1.0))).unwrap();
        assert_eq!(rbf.predict(&x).unwrap(), y);
        assert!(rbf.max_kkt_violation() <= 1e-3);
        let lin = fit_svm(&x, &y, 2, &cfg(KernelKind::Linear, 10.0, None)).unwrap();
        let acc = lin.predict(&x).unwrap().iter().zip(&y).filter(|(a, b)| a == b).count();
        assert!(acc < 4);
    }

    #[test]
    fn cyclic_vote_tie_uses_margins() {
        let pairs: Vec<PairModel> = [(0, 1), (0, 2), (1, 2)]
            .iter()
            .map(|&(a, b)| PairModel {
                a,
                b,
                sv: vec![],
                coef: vec![],
                rho: 0.0,
                kkt_violation: 0.0,
                iterations: 0,
            })
            .collect();
        // 0 beats 1, 2 beats 0, 1 beats 2: one vote each.
        assert_eq!(vote(3, &pairs, &[0.5, -0.2, 0.9]), 1);
        assert_eq!(vote(3, &pairs, &[0.5, -0.9, 0.2]), 2);
        assert_eq!(vote(3, &pairs, &[0.5, 0.3, 0.1]), 0);
    }

    #[test]
    fn serde_round_trip_rebuilds_weights() {
        let x = pts(&[(-1.0, 0.5), (1.0, 0.2), (0.0, 2.0)]);
        let m = fit_svm(&x, &[0, 1, 2], 3, &cfg(KernelKind::Linear, 1.0, None)).unwrap();
        let mut back: SvmModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        back.prepare();
        assert_eq!(back, m);
    }
}
