//! Primal-dual interior-point method for
//!
//! ```text
//!   minimize cᵀx  s.t.  Ax = b,  Gx + s = h,  s ∈ K
//! ```
//!
//! with K a product of nonnegative orthants and second-order cones. The
//! iteration runs on the homogeneous self-dual embedding with Nesterov–Todd
//! scaling and Mehrotra predictor-corrector steps, so infeasibility is
//! detected from certificates rather than by iteration failure.

use super::cone::{self, ConeBlock, ConeKind};
use super::ldl::LdlFactor;
use super::polish;
use serde::Serialize;
use thiserror::Error;

/// Sparse matrix stored by rows, duplicate columns merged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRows {
    pub cols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn new(cols: usize) -> Self {
        SparseRows { cols, rows: Vec::new() }
    }

    pub fn push_row(&mut self, mut entries: Vec<(usize, f64)>) {
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (c, v) in entries {
            assert!(c < self.cols, "column {c} out of range");
            match merged.last_mut() {
                Some(last) if last.0 == c => last.1 += v,
                _ => merged.push((c, v)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        self.rows.push(merged);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(c, v)| v * x[c]).sum()).collect()
    }

    pub fn mul_t(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, &yi) in self.rows.iter().zip(y) {
            for &(c, v) in r {
                out[c] += v * yi;
            }
        }
        out
    }

    fn scaled(&self, row: &[f64], col: &[f64]) -> Self {
        SparseRows {
            cols: self.cols,
            rows: self
                .rows
                .iter()
                .zip(row)
                .map(|(r, &e)| r.iter().map(|&(c, v)| (c, e * v * col[c])).collect())
                .collect(),
        }
    }
}

/// A cone program in standard form.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardForm {
    pub c: Vec<f64>,
    pub a: SparseRows,
    pub b: Vec<f64>,
    pub g: SparseRows,
    pub h: Vec<f64>,
    pub cones: Vec<ConeBlock>,
}

impl StandardForm {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    fn validate(&self) -> Result<(), SolverError> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let rows_finite = |m: &SparseRows| m.rows.iter().all(|r| r.iter().all(|e| e.1.is_finite()));
        if !(finite(&self.c) && finite(&self.b) && finite(&self.h) && rows_finite(&self.a) && rows_finite(&self.g)) {
            return Err(SolverError::NumericalBreakdown("non-finite problem data".into()));
        }
        let m: usize = self.cones.iter().map(|c| c.dim).sum();
        let mut off = 0;
        for c in &self.cones {
            if c.offset != off || c.dim == 0 {
                return Err(SolverError::Malformed("cone blocks must tile the rows of G".into()));
            }
            off += c.dim;
        }
        if m != self.g.len() || m != self.h.len() || self.a.len() != self.b.len() {
            return Err(SolverError::Malformed("dimension mismatch".into()));
        }
        if self.a.cols != self.n() || self.g.cols != self.n() {
            return Err(SolverError::Malformed("column count mismatch".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("malformed problem: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    SlowProgress,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Relative primal and dual feasibility tolerance.
    pub tol: f64,
    /// Relative gap target. If progress stalls before reaching it, the best
    /// iterate is still Optimal when it meets `tol` on all three measures.
    pub gap_tol: f64,
    pub max_iter: usize,
    /// Multiplier applied to the initial slack/dual point.
    pub start_scale: f64,
    pub equilibrate: bool,
    /// Finish with active-set Newton steps; kept only if no residual worsens.
    pub polish: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-8, gap_tol: 1e-8, max_iter: 200, start_scale: 1.0, equilibrate: true, polish: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    /// max(‖Ax − b‖∞, ‖Gx + s − h‖∞) / (1 + max(‖b‖∞, ‖h‖∞, ‖x‖∞, ‖s‖∞))
    pub primal: f64,
    /// ‖c + Aᵀy + Gᵀz‖∞ / (1 + max(‖c‖∞, ‖y‖∞, ‖z‖∞))
    pub dual: f64,
    /// Unnormalized numerators of `primal` and `dual`.
    pub primal_abs: f64,
    pub dual_abs: f64,
    /// max(sᵀz, |pobj − dobj|) / (1 + |pobj|)
    pub gap: f64,
    /// sᵀz
    pub complementarity: f64,
    /// pobj − dobj
    pub duality_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub s: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
}

const STATIC_REG: f64 = 1e-9;
const DYN_EPS: f64 = 1e-13;
const DYN_DELTA: f64 = 1e-7;
const STEP_FRACTION: f64 = 0.99;

struct Kkt {
    n: usize,
    p: usize,
    m: usize,
    entries: Vec<(usize, usize)>,
    /// values of the static part (A, G and regularization)
    base: Vec<f64>,
    /// (entry index, block index, local row, local col) for W² entries
    w_slots: Vec<(usize, usize, usize, usize)>,
    ldl: LdlFactor,
    values: Vec<f64>,
}

impl Kkt {
    fn new(prob: &StandardForm) -> Self {
        let (n, p, m) = (prob.n(), prob.a.len(), prob.g.len());
        let mut entries = Vec::new();
        let mut base = Vec::new();
        let mut w_slots = Vec::new();
        for i in 0..n {
            entries.push((i, i));
            base.push(STATIC_REG);
        }
        for i in 0..p {
            entries.push((n + i, n + i));
            base.push(-STATIC_REG);
        }
        for (bi, b) in prob.cones.iter().enumerate() {
            for a in 0..b.dim {
                let lim = if b.kind == ConeKind::Soc { b.dim } else { a + 1 };
                for c in a..lim {
                    w_slots.push((entries.len(), bi, a, c));
                    entries.push((n + p + b.offset + a, n + p + b.offset + c));
                    base.push(if a == c { -STATIC_REG } else { 0.0 });
                }
            }
        }
        for (i, r) in prob.a.rows.iter().enumerate() {
            for &(c, v) in r {
                entries.push((c, n + i));
                base.push(v);
            }
        }
        for (i, r) in prob.g.rows.iter().enumerate() {
            for &(c, v) in r {
                entries.push((c, n + p + i));
                base.push(v);
            }
        }
        let signs: Vec<f64> = (0..n + p + m).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
        let ldl = LdlFactor::new(n + p + m, &entries, &signs);
        let values = base.clone();
        Kkt { n, p, m, entries, base, w_slots, ldl, values }
    }

    /// Factor with the given W² blocks (None = identity).
    fn factor(&mut self, blocks: &[ConeBlock], w2: Option<&[Vec<f64>]>) -> bool {
        self.values.copy_from_slice(&self.base);
        for &(e, bi, a, c) in &self.w_slots {
            let v = match w2 {
                Some(w) => w[bi][a * blocks[bi].dim + c],
                None => f64::from(a == c),
            };
            self.values[e] -= v;
        }
        self.ldl.factor(&self.values, DYN_EPS, DYN_DELTA)
    }

    /// Product with the unregularized matrix.
    fn mul(&self, x: &[f64]) -> Vec<f64> {
        let (n, p) = (self.n, self.p);
        let mut y = vec![0.0; x.len()];
        for (&(r, c), (&v, &b)) in self.entries.iter().zip(self.values.iter().zip(&self.base)) {
            let mut val = v;
            if r == c && (r < n + p) {
                val -= b; // drop static regularization on x and y blocks
            } else if r == c {
                val += STATIC_REG;
            }
            y[r] += val * x[c];
            if r != c {
                y[c] += val * x[r];
            }
        }
        y
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.ldl.solve(&mut x);
        let norm_rhs = rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut best_err = f64::INFINITY;
        for _ in 0..8 {
            let kx = self.mul(&x);
            let mut r: Vec<f64> = rhs.iter().zip(&kx).map(|(a, b)| a - b).collect();
            let err = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if err <= 1e-15 * (1.0 + norm_rhs) || err >= 0.5 * best_err {
                break;
            }
            best_err = err;
            self.ldl.solve(&mut r);
            for (xi, ri) in x.iter_mut().zip(&r) {
                *xi += ri;
            }
        }
        debug_assert_eq!(x.len(), self.n + self.p + self.m);
        x
    }
}

struct Equilibration {
    d: Vec<f64>,
    e_a: Vec<f64>,
    e_g: Vec<f64>,
}

fn equilibrate(prob: &StandardForm, enabled: bool) -> Equilibration {
    let n = prob.n();
    let mut eq = Equilibration { d: vec![1.0; n], e_a: vec![1.0; prob.a.len()], e_g: vec![1.0; prob.g.len()] };
    if !enabled {
        return eq;
    }
    for _ in 0..25 {
        let mut col = vec![0.0f64; n];
        for (r, &e) in prob.a.rows.iter().zip(&eq.e_a).chain(prob.g.rows.iter().zip(&eq.e_g)) {
            for &(c, v) in r {
                col[c] = col[c].max((e * v * eq.d[c]).abs());
            }
        }
        for j in 0..n {
            if col[j] > 0.0 {
                eq.d[j] = (eq.d[j] / col[j].sqrt()).clamp(1e-4, 1e4);
            }
        }
        let row_norm =
            |r: &Vec<(usize, f64)>, e: f64, d: &[f64]| r.iter().fold(0.0f64, |a, &(c, v)| a.max((e * v * d[c]).abs()));
        for (i, r) in prob.a.rows.iter().enumerate() {
            let nr = row_norm(r, eq.e_a[i], &eq.d);
            if nr > 0.0 {
                eq.e_a[i] = (eq.e_a[i] / nr.sqrt()).clamp(1e-4, 1e4);
            }
        }
        for b in &prob.cones {
            let rng = b.offset..b.offset + b.dim;
            match b.kind {
                ConeKind::Nonneg => {
                    for i in rng {
                        let nr = row_norm(&prob.g.rows[i], eq.e_g[i], &eq.d);
                        if nr > 0.0 {
                            eq.e_g[i] = (eq.e_g[i] / nr.sqrt()).clamp(1e-4, 1e4);
                        }
                    }
                }
                ConeKind::Soc => {
                    let nr = rng.clone().map(|i| row_norm(&prob.g.rows[i], eq.e_g[i], &eq.d)).fold(0.0, f64::max);
                    if nr > 0.0 {
                        let e = (eq.e_g[b.offset] / nr.sqrt()).clamp(1e-4, 1e4);
                        eq.e_g[rng].iter_mut().for_each(|v| *v = e);
                    }
                }
            }
        }
    }
    eq
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
}

pub fn solve(prob: &StandardForm, options: &SolverOptions) -> Result<ConicSolution, SolverError> {
    prob.validate()?;
    if !(options.tol > 0.0 && options.gap_tol > 0.0 && options.start_scale > 0.0) {
        return Err(SolverError::Malformed("tolerances and start scale must be positive".into()));
    }
    let eq = equilibrate(prob, options.equilibrate);
    let sp = StandardForm {
        c: prob.c.iter().zip(&eq.d).map(|(c, d)| c * d).collect(),
        a: prob.a.scaled(&eq.e_a, &eq.d),
        b: prob.b.iter().zip(&eq.e_a).map(|(b, e)| b * e).collect(),
        g: prob.g.scaled(&eq.e_g, &eq.d),
        h: prob.h.iter().zip(&eq.e_g).map(|(h, e)| h * e).collect(),
        cones: prob.cones.clone(),
    };
    let (n, p, m) = (sp.n(), sp.a.len(), sp.g.len());
    let blocks = &sp.cones;
    let degree: usize = blocks.iter().map(|b| b.degree()).sum();
    let e = cone::identity(blocks, m);
    let mut kkt = Kkt::new(&sp);

    let split = |v: &[f64]| (v[..n].to_vec(), v[n..n + p].to_vec(), v[n + p..].to_vec());
    let stack = |a: &[f64], b: &[f64], c: &[f64]| [a, b, c].concat();

    // initial point
    if !kkt.factor(blocks, None) {
        return Err(SolverError::NumericalBreakdown("initial factorization failed".into()));
    }
    let (x0, _, zt) = split(&kkt.solve(&stack(&vec![0.0; n], &sp.b, &sp.h)));
    let mut s0: Vec<f64> = zt.iter().map(|v| -v).collect();
    let ap = -cone::min_eig(blocks, &s0);
    if ap >= 0.0 {
        s0.iter_mut().zip(&e).for_each(|(v, ei)| *v += (1.0 + ap) * ei);
    }
    let neg_c: Vec<f64> = sp.c.iter().map(|v| -v).collect();
    let (_, y0, mut z0) = split(&kkt.solve(&stack(&neg_c, &vec![0.0; p], &vec![0.0; m])));
    let ad = -cone::min_eig(blocks, &z0);
    if ad >= 0.0 {
        z0.iter_mut().zip(&e).for_each(|(v, ei)| *v += (1.0 + ad) * ei);
    }
    let k = options.start_scale;
    let mut it = Iterate {
        x: x0,
        y: y0,
        z: z0.iter().map(|v| v * k).collect(),
        s: s0.iter().map(|v| v * k).collect(),
        tau: 1.0,
        kappa: k,
    };

    let norm_b = inf_norm(&prob.b).max(inf_norm(&prob.h));
    let norm_c = inf_norm(&prob.c);
    let mut best: Option<(f64, ConicSolution)> = None;
    let mut mu_hist: Vec<f64> = Vec::new();

    for iter in 0..=options.max_iter {
        // unscaled quantities
        let xo: Vec<f64> = it.x.iter().zip(&eq.d).map(|(x, d)| x * d).collect();
        let yo: Vec<f64> = it.y.iter().zip(&eq.e_a).map(|(y, e)| y * e).collect();
        let zo: Vec<f64> = it.z.iter().zip(&eq.e_g).map(|(z, e)| z * e).collect();
        let so: Vec<f64> = it.s.iter().zip(&eq.e_g).map(|(s, e)| s / e).collect();
        let tau = it.tau;
        let ax = prob.a.mul(&xo);
        let gx = prob.g.mul(&xo);
        let aty = prob.a.mul_t(&yo);
        let gtz = prob.g.mul_t(&zo);
        let pres_abs = ax
            .iter()
            .zip(&prob.b)
            .map(|(a, b)| (a / tau - b).abs())
            .fold(0.0, f64::max)
            .max(gx.iter().zip(&so).zip(&prob.h).map(|((g, s), h)| ((g + s) / tau - h).abs()).fold(0.0, f64::max));
        let pres = pres_abs / (1.0 + norm_b.max(inf_norm(&xo).max(inf_norm(&so)) / tau));
        let dres_abs =
            prob.c.iter().zip(aty.iter().zip(&gtz)).map(|(c, (a, g))| (c + (a + g) / tau).abs()).fold(0.0, f64::max);
        let dres = dres_abs / (1.0 + norm_c.max(inf_norm(&yo).max(inf_norm(&zo)) / tau));
        let pobj = dot(&prob.c, &xo) / tau;
        let dobj = -(dot(&prob.b, &yo) + dot(&prob.h, &zo)) / tau;
        let comp = dot(&it.s, &it.z) / (tau * tau);
        let gap = comp.max((pobj - dobj).abs()) / (1.0 + pobj.abs());
        let make = |status| ConicSolution {
            status,
            x: xo.iter().map(|v| v / tau).collect(),
            y: yo.iter().map(|v| v / tau).collect(),
            z: zo.iter().map(|v| v / tau).collect(),
            s: so.iter().map(|v| v / tau).collect(),
            primal_objective: pobj,
            dual_objective: dobj,
            residuals: Residuals {
                primal: pres,
                dual: dres,
                primal_abs: pres_abs,
                dual_abs: dres_abs,
                gap,
                complementarity: comp,
                duality_gap: pobj - dobj,
            },
            iterations: iter,
        };
        if pres <= options.tol && dres <= options.tol && gap <= options.gap_tol {
            return Ok(finish(prob, options, make(SolveStatus::Optimal)));
        }
        let merit = (pres / options.tol).max(dres / options.tol).max(gap / options.gap_tol);
        if merit.is_finite() && best.as_ref().is_none_or(|(bm, _)| merit < *bm) {
            best = Some((merit, make(SolveStatus::SlowProgress)));
        }
        // infeasibility certificates (unnormalized)
        let byhz = dot(&prob.b, &yo) + dot(&prob.h, &zo);
        if byhz < 0.0 {
            let r = aty.iter().zip(&gtz).map(|(a, g)| (a + g).abs()).fold(0.0, f64::max) / -byhz;
            if r <= options.tol {
                let scale = -1.0 / byhz;
                let mut sol = make(SolveStatus::Infeasible);
                sol.y = yo.iter().map(|v| v * scale).collect();
                sol.z = zo.iter().map(|v| v * scale).collect();
                return Ok(sol);
            }
        }
        let cx = dot(&prob.c, &xo);
        if cx < 0.0 {
            let r = inf_norm(&ax).max(gx.iter().zip(&so).map(|(g, s)| (g + s).abs()).fold(0.0, f64::max)) / -cx;
            if r <= options.tol {
                let scale = -1.0 / cx;
                let mut sol = make(SolveStatus::Unbounded);
                sol.x = xo.iter().map(|v| v * scale).collect();
                sol.s = so.iter().map(|v| v * scale).collect();
                return Ok(sol);
            }
        }
        if iter == options.max_iter {
            break;
        }
        let mu = (dot(&it.s, &it.z) + it.kappa * it.tau) / (degree as f64 + 1.0);
        mu_hist.push(mu);
        if mu_hist.len() > 10 && mu > (1.0 - 1e-2) * mu_hist[mu_hist.len() - 11] {
            break;
        }

        // scaled residuals of the embedding
        let rx: Vec<f64> = {
            let aty = sp.a.mul_t(&it.y);
            let gtz = sp.g.mul_t(&it.z);
            (0..n).map(|i| aty[i] + gtz[i] + sp.c[i] * it.tau).collect()
        };
        let ry: Vec<f64> = sp.a.mul(&it.x).iter().zip(&sp.b).map(|(ax, b)| -ax + b * it.tau).collect();
        let rz: Vec<f64> = {
            let gx = sp.g.mul(&it.x);
            (0..m).map(|i| it.s[i] + gx[i] - sp.h[i] * it.tau).collect()
        };
        let rt = it.kappa + dot(&sp.c, &it.x) + dot(&sp.b, &it.y) + dot(&sp.h, &it.z);

        let Some(sc) = cone::nt_scaling(blocks, &it.s, &it.z) else { break };
        let lambda = cone::apply_w(blocks, &sc, &it.z, false);
        let w2: Vec<Vec<f64>> = blocks.iter().zip(&sc).map(|(b, s)| cone::w_squared_block(s, b.dim)).collect();
        if !kkt.factor(blocks, Some(&w2)) {
            break;
        }
        let (x1, y1, z1) = split(&kkt.solve(&stack(&neg_c, &sp.b, &sp.h)));
        let denom1 = dot(&sp.c, &x1) + dot(&sp.b, &y1) + dot(&sp.h, &z1) - it.kappa / it.tau;

        let direction = |sigma: f64, ds_target: &[f64], dk_target: f64| {
            let f = 1.0 - sigma;
            let wl = cone::apply_w(blocks, &sc, &cone::jordan_div(blocks, &lambda, ds_target), false);
            let r1: Vec<f64> = rx.iter().map(|v| -f * v).collect();
            let r2: Vec<f64> = ry.iter().map(|v| f * v).collect();
            let r3: Vec<f64> = rz.iter().zip(&wl).map(|(v, w)| -f * v - w).collect();
            let (x2, y2, z2) = split(&kkt.solve(&stack(&r1, &r2, &r3)));
            let dtau = (-f * rt - dk_target / it.tau - (dot(&sp.c, &x2) + dot(&sp.b, &y2) + dot(&sp.h, &z2))) / denom1;
            let dx: Vec<f64> = x2.iter().zip(&x1).map(|(a, b)| a + dtau * b).collect();
            let dy: Vec<f64> = y2.iter().zip(&y1).map(|(a, b)| a + dtau * b).collect();
            let dz: Vec<f64> = z2.iter().zip(&z1).map(|(a, b)| a + dtau * b).collect();
            // ds = W(λ⧵d_s) − W² dz
            let wwdz = cone::apply_w(blocks, &sc, &cone::apply_w(blocks, &sc, &dz, false), false);
            let ds: Vec<f64> = wl.iter().zip(&wwdz).map(|(a, b)| a - b).collect();
            let dkappa = (dk_target - it.kappa * dtau) / it.tau;
            (dx, dy, dz, ds, dtau, dkappa)
        };
        let step_len = |dz: &[f64], ds: &[f64], dtau: f64, dkappa: f64| {
            let mut a =
                cone::max_step(blocks, &it.s, ds, f64::INFINITY).min(cone::max_step(blocks, &it.z, dz, f64::INFINITY));
            if dtau < 0.0 {
                a = a.min(-it.tau / dtau);
            }
            if dkappa < 0.0 {
                a = a.min(-it.kappa / dkappa);
            }
            a
        };

        // predictor
        let ll = cone::jordan(blocks, &lambda, &lambda);
        let ds_aff: Vec<f64> = ll.iter().map(|v| -v).collect();
        let (_, _, dz_a, ds_a, dtau_a, dkappa_a) = direction(0.0, &ds_aff, -it.kappa * it.tau);
        let alpha_a = step_len(&dz_a, &ds_a, dtau_a, dkappa_a).min(1.0);
        let sigma = (1.0 - alpha_a).powi(3).clamp(0.0, 1.0);

        // corrector
        let corr =
            cone::jordan(blocks, &cone::apply_w(blocks, &sc, &ds_a, true), &cone::apply_w(blocks, &sc, &dz_a, false));
        let ds_c: Vec<f64> = (0..m).map(|i| -ll[i] + sigma * mu * e[i] - corr[i]).collect();
        let dk_c = -it.kappa * it.tau + sigma * mu - dkappa_a * dtau_a;
        let (dx, dy, dz, ds, dtau, dkappa) = direction(sigma, &ds_c, dk_c);
        let alpha = (STEP_FRACTION * step_len(&dz, &ds, dtau, dkappa)).min(1.0);
        if !(alpha > 1e-14) || !dx.iter().chain(&dy).all(|v| v.is_finite()) {
            break;
        }
        for (v, d) in it.x.iter_mut().zip(&dx) {
            *v += alpha * d;
        }
        for (v, d) in it.y.iter_mut().zip(&dy) {
            *v += alpha * d;
        }
        for (v, d) in it.z.iter_mut().zip(&dz) {
            *v += alpha * d;
        }
        for (v, d) in it.s.iter_mut().zip(&ds) {
            *v += alpha * d;
        }
        it.tau += alpha * dtau;
        it.kappa += alpha * dkappa;
    }
    match best {
        // gap_tol is a refinement target; stalling short of it still counts
        // as converged when the contract tolerance is met
        Some((_, mut sol)) => {
            let r = &sol.residuals;
            if r.primal <= options.tol && r.dual <= options.tol && r.gap <= options.tol {
                sol.status = SolveStatus::Optimal;
                sol = finish(prob, options, sol);
            }
            Ok(sol)
        }
        None => Err(SolverError::NumericalBreakdown("no finite iterate".into())),
    }
}

/// Residuals and objectives of a candidate point, normalized as in the loop.
fn assess(prob: &StandardForm, x: &[f64], y: &[f64], z: &[f64], s: &[f64]) -> (Residuals, f64, f64) {
    let norm_b = inf_norm(&prob.b).max(inf_norm(&prob.h));
    let pres_abs = prob
        .a
        .mul(x)
        .iter()
        .zip(&prob.b)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        .max(prob.g.mul(x).iter().zip(s).zip(&prob.h).map(|((g, s), h)| (g + s - h).abs()).fold(0.0, f64::max));
    let aty = prob.a.mul_t(y);
    let gtz = prob.g.mul_t(z);
    let dres_abs = prob.c.iter().zip(aty.iter().zip(&gtz)).map(|(c, (a, g))| (c + a + g).abs()).fold(0.0, f64::max);
    let pobj = dot(&prob.c, x);
    let dobj = -(dot(&prob.b, y) + dot(&prob.h, z));
    let comp = dot(s, z);
    let r = Residuals {
        primal: pres_abs / (1.0 + norm_b.max(inf_norm(x)).max(inf_norm(s))),
        dual: dres_abs / (1.0 + inf_norm(&prob.c).max(inf_norm(y)).max(inf_norm(z))),
        primal_abs: pres_abs,
        dual_abs: dres_abs,
        gap: comp.max((pobj - dobj).abs()) / (1.0 + pobj.abs()),
        complementarity: comp,
        duality_gap: pobj - dobj,
    };
    (r, pobj, dobj)
}

fn finish(prob: &StandardForm, options: &SolverOptions, sol: ConicSolution) -> ConicSolution {
    if !options.polish {
        return sol;
    }
    let Some(p) = polish::polish(prob, &sol.x, &sol.y, &sol.z, &sol.s) else { return sol };
    let (r, pobj, dobj) = assess(prob, &p.x, &p.y, &p.z, &p.s);
    // rounding floor below which comparisons are meaningless
    let floor = 1e-14;
    let old = &sol.residuals;
    if r.primal <= old.primal.max(floor) && r.dual <= old.dual.max(floor) && r.gap <= old.gap.max(floor) {
        ConicSolution {
            x: p.x,
            y: p.y,
            z: p.z,
            s: p.s,
            primal_objective: pobj,
            dual_objective: dobj,
            residuals: r,
            ..sol
        }
    } else {
        sol
    }
}
