//! Active-set Newton refinement of an interior-point solution.
//!
//! Near the optimum the NT-scaled systems become so ill-conditioned that
//! coordinates lying along the boundary of a tight cone are only resolved to
//! roughly the square root of the attainable gap. Once the IPM has settled
//! which constraints are active, the optimum is the root of a smooth
//! equality-constrained KKT system:
//!
//! - active orthant rows and cones whose dual is interior become `Gᵢx = hᵢ`;
//! - cones with both `s` and `z` on the boundary become `‖s̄‖ − s₀ = 0`, a
//!   convex function whose Hessian keeps the Newton matrix quasi-definite;
//! - everything else is dropped with `z = 0`.
//!
//! A few Newton steps on that system recover full precision. The caller
//! decides whether to keep the result.

use super::cone::{ConeBlock, ConeKind};
use super::ldl::LdlFactor;
use super::solver::StandardForm;
use std::collections::BTreeMap;

const REG: f64 = 1e-10;
const MAX_STEPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Role {
    Inactive,
    /// rows become equalities with free multipliers
    Equality,
    /// ‖s̄‖ = s₀ with multiplier ν, z = ν(1, −s̄/‖s̄‖)
    Boundary,
}

pub(crate) struct Polished {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub s: Vec<f64>,
}

fn soc_eigs(v: &[f64]) -> (f64, f64) {
    let nb = v[1..].iter().map(|a| a * a).sum::<f64>().sqrt();
    (v[0] - nb, v[0] + nb)
}

fn classify(blocks: &[ConeBlock], s: &[f64], z: &[f64]) -> Vec<(ConeBlock, Role)> {
    let mut out = Vec::new();
    for b in blocks {
        match b.kind {
            ConeKind::Nonneg => {
                for i in b.offset..b.offset + b.dim {
                    let role = if z[i] > s[i] { Role::Equality } else { Role::Inactive };
                    out.push((ConeBlock { kind: ConeKind::Nonneg, offset: i, dim: 1 }, role));
                }
            }
            ConeKind::Soc => {
                let r = b.offset..b.offset + b.dim;
                let (s1, s2) = soc_eigs(&s[r.clone()]);
                let (z1, z2) = soc_eigs(&z[r]);
                let role = if s1 > z2 {
                    Role::Inactive
                } else if z1 > s2 {
                    Role::Equality
                } else {
                    Role::Boundary
                };
                out.push((*b, role));
            }
        }
    }
    out
}

/// Symmetric matrix assembled from upper-triangle triplets.
struct SymBuilder(BTreeMap<(usize, usize), f64>);

impl SymBuilder {
    fn add(&mut self, r: usize, c: usize, v: f64) {
        let key = if r <= c { (r, c) } else { (c, r) };
        *self.0.entry(key).or_insert(0.0) += v;
    }

    fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for (&(r, c), &v) in &self.0 {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
        y
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Refines (x, y, z, s) or returns None when the active set looks wrong or
/// Newton fails to make progress.
pub(crate) fn polish(prob: &StandardForm, x: &[f64], y: &[f64], z: &[f64], s: &[f64]) -> Option<Polished> {
    let (n, p) = (prob.n(), prob.a.len());
    let roles = classify(&prob.cones, s, z);
    // multiplier slots: one per equality row, one per boundary cone
    let mut eq_rows: Vec<usize> = Vec::new();
    let mut bnd: Vec<ConeBlock> = Vec::new();
    for (b, role) in &roles {
        match role {
            Role::Equality => eq_rows.extend(b.offset..b.offset + b.dim),
            Role::Boundary => bnd.push(*b),
            Role::Inactive => {}
        }
    }
    let (ne, nb) = (eq_rows.len(), bnd.len());
    let dim = n + p + ne + nb;

    let mut x = x.to_vec();
    let mut y = y.to_vec();
    let mut w: Vec<f64> = eq_rows.iter().map(|&i| z[i]).collect();
    let mut nu: Vec<f64> = Vec::with_capacity(nb);
    for b in &bnd {
        let sb = &s[b.offset..b.offset + b.dim];
        let zb = &z[b.offset..b.offset + b.dim];
        let nrm = sb[1..].iter().map(|a| a * a).sum::<f64>().sqrt();
        if nrm == 0.0 {
            return None;
        }
        let proj = zb[0] - zb[1..].iter().zip(&sb[1..]).map(|(a, c)| a * c).sum::<f64>() / nrm;
        nu.push(0.5 * proj);
    }

    // full z implied by the multipliers at slack s
    let dual_of = |w: &[f64], nu: &[f64], s: &[f64]| {
        let mut zz = vec![0.0; s.len()];
        for (k, &i) in eq_rows.iter().enumerate() {
            zz[i] = w[k];
        }
        for (k, b) in bnd.iter().enumerate() {
            let sb = &s[b.offset..b.offset + b.dim];
            let nrm = sb[1..].iter().map(|a| a * a).sum::<f64>().sqrt();
            zz[b.offset] = nu[k];
            for j in 1..b.dim {
                zz[b.offset + j] = -nu[k] * sb[j] / nrm;
            }
        }
        zz
    };
    let residual = |x: &[f64], y: &[f64], w: &[f64], nu: &[f64]| {
        let gx = prob.g.mul(x);
        let s: Vec<f64> = prob.h.iter().zip(&gx).map(|(h, g)| h - g).collect();
        let zz = dual_of(w, nu, &s);
        let aty = prob.a.mul_t(y);
        let gtz = prob.g.mul_t(&zz);
        let mut f: Vec<f64> = (0..n).map(|i| prob.c[i] + aty[i] + gtz[i]).collect();
        f.extend(prob.a.mul(x).iter().zip(&prob.b).map(|(a, b)| a - b));
        f.extend(eq_rows.iter().map(|&i| -s[i]));
        f.extend(bnd.iter().map(|b| {
            let sb = &s[b.offset..b.offset + b.dim];
            sb[1..].iter().map(|a| a * a).sum::<f64>().sqrt() - sb[0]
        }));
        (f, s)
    };

    let (mut f, mut slack) = residual(&x, &y, &w, &nu);
    let mut fnorm = inf_norm(&f);
    for _ in 0..MAX_STEPS {
        if fnorm <= 1e-15 {
            break;
        }
        let mut k = SymBuilder(BTreeMap::new());
        for i in 0..dim {
            k.add(i, i, 0.0);
        }
        for (i, r) in prob.a.rows.iter().enumerate() {
            for &(c, v) in r {
                k.add(c, n + i, v);
            }
        }
        for (j, &row) in eq_rows.iter().enumerate() {
            for &(c, v) in &prob.g.rows[row] {
                k.add(c, n + p + j, v);
            }
        }
        for (kb, b) in bnd.iter().enumerate() {
            let sb = &slack[b.offset..b.offset + b.dim];
            let nrm = sb[1..].iter().map(|a| a * a).sum::<f64>().sqrt();
            let u: Vec<f64> = sb[1..].iter().map(|a| a / nrm).collect();
            // gradient g = G_0ᵀ − Ḡᵀu
            let col = n + p + ne + kb;
            for &(c, v) in &prob.g.rows[b.offset] {
                k.add(c, col, v);
            }
            for (j, uj) in u.iter().enumerate() {
                for &(c, v) in &prob.g.rows[b.offset + 1 + j] {
                    k.add(c, col, -uj * v);
                }
            }
            // Hessian ν·Ḡᵀ(I − uuᵀ)Ḡ/‖s̄‖, row by row over the cone's columns
            let d = b.dim - 1;
            let scale = nu[kb] / nrm;
            for a in 0..d {
                for bb in 0..d {
                    let m = f64::from(a == bb) - u[a] * u[bb];
                    if m == 0.0 {
                        continue;
                    }
                    for &(ca, va) in &prob.g.rows[b.offset + 1 + a] {
                        for &(cb, vb) in &prob.g.rows[b.offset + 1 + bb] {
                            if ca <= cb {
                                k.add(ca, cb, scale * m * va * vb);
                            }
                        }
                    }
                }
            }
        }
        let entries: Vec<(usize, usize)> = k.0.keys().copied().collect();
        let mut values: Vec<f64> = k.0.values().copied().collect();
        for (e, &(r, c)) in entries.iter().enumerate() {
            if r == c {
                values[e] += if r < n { REG } else { -REG };
            }
        }
        let signs: Vec<f64> = (0..dim).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
        let mut ldl = LdlFactor::new(dim, &entries, &signs);
        if !ldl.factor(&values, 1e-14, 1e-8) {
            return None;
        }
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let mut d = rhs.clone();
        ldl.solve(&mut d);
        for _ in 0..20 {
            let kd = k.mul(&d);
            let mut r: Vec<f64> = rhs.iter().zip(&kd).map(|(a, b)| a - b).collect();
            if inf_norm(&r) <= 1e-16 * (1.0 + inf_norm(&rhs)) {
                break;
            }
            ldl.solve(&mut r);
            d.iter_mut().zip(&r).for_each(|(a, b)| *a += b);
        }
        if !d.iter().all(|v| v.is_finite()) {
            return None;
        }
        let step = |v: &[f64], off: usize| v.iter().enumerate().map(|(i, a)| a + d[off + i]).collect::<Vec<f64>>();
        let (nx, ny, nw, nn) = (step(&x, 0), step(&y, n), step(&w, n + p), step(&nu, n + p + ne));
        let (nf, ns) = residual(&nx, &ny, &nw, &nn);
        let nnorm = inf_norm(&nf);
        if !(nnorm < fnorm) {
            break;
        }
        (x, y, w, nu, f, slack, fnorm) = (nx, ny, nw, nn, nf, ns, nnorm);
    }

    // rebuild a cone-feasible pair from the active set
    let mut s = slack;
    for &i in &eq_rows {
        s[i] = 0.0;
    }
    for b in &bnd {
        let nrm = s[b.offset + 1..b.offset + b.dim].iter().map(|a| a * a).sum::<f64>().sqrt();
        s[b.offset] = nrm;
    }
    let z = dual_of(&w, &nu, &s);
    if nu.iter().any(|&v| v < 0.0) {
        return None;
    }
    for (b, role) in &roles {
        let r = b.offset..b.offset + b.dim;
        let ok = match (b.kind, role) {
            (ConeKind::Nonneg, Role::Equality) => z[b.offset] >= 0.0,
            (ConeKind::Nonneg, _) => s[b.offset] >= 0.0,
            (ConeKind::Soc, Role::Equality) => soc_eigs(&z[r]).0 >= 0.0,
            (ConeKind::Soc, Role::Inactive) => soc_eigs(&s[r]).0 >= 0.0,
            (ConeKind::Soc, Role::Boundary) => true,
        };
        if !ok {
            return None;
        }
    }
    Some(Polished { x, y, z, s })
}
