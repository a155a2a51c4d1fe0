//! Nonnegative orthant and second-order cone algebra used by the
//! interior-point method: Jordan products, Nesterov–Todd scaling and
//! step-to-boundary computations.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    /// `dim` independent nonnegativity constraints.
    Nonneg,
    /// {(t, x) : t ≥ ‖x‖}.
    Soc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConeBlock {
    pub kind: ConeKind,
    pub offset: usize,
    pub dim: usize,
}

impl ConeBlock {
    /// Contribution to the barrier degree.
    pub fn degree(&self) -> usize {
        match self.kind {
            ConeKind::Nonneg => self.dim,
            ConeKind::Soc => 1,
        }
    }
}

/// NT scaling data for one block.
#[derive(Debug, Clone)]
pub enum Scaling {
    /// W = diag(w)
    Nonneg(Vec<f64>),
    /// W = η·[[w0, w1ᵀ], [w1, I + w1w1ᵀ/(1+w0)]]
    Soc { eta: f64, w0: f64, w1: Vec<f64> },
}

fn soc_res(x: &[f64]) -> f64 {
    let t = x[0];
    let n2: f64 = x[1..].iter().map(|v| v * v).sum();
    (t - n2.sqrt()) * (t + n2.sqrt())
}

pub fn identity(blocks: &[ConeBlock], m: usize) -> Vec<f64> {
    let mut e = vec![0.0; m];
    for b in blocks {
        match b.kind {
            ConeKind::Nonneg => e[b.offset..b.offset + b.dim].iter_mut().for_each(|v| *v = 1.0),
            ConeKind::Soc => e[b.offset] = 1.0,
        }
    }
    e
}

/// Smallest "eigenvalue" of x over all blocks.
pub fn min_eig(blocks: &[ConeBlock], x: &[f64]) -> f64 {
    let mut m = f64::INFINITY;
    for b in blocks {
        let xs = &x[b.offset..b.offset + b.dim];
        match b.kind {
            ConeKind::Nonneg => xs.iter().for_each(|&v| m = m.min(v)),
            ConeKind::Soc => {
                let n: f64 = xs[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                m = m.min(xs[0] - n);
            }
        }
    }
    m
}

/// Computes the NT scaling point for interior s, z. Returns None if either
/// has left the cone interior.
pub fn nt_scaling(blocks: &[ConeBlock], s: &[f64], z: &[f64]) -> Option<Vec<Scaling>> {
    let mut out = Vec::with_capacity(blocks.len());
    for b in blocks {
        let (ss, zz) = (&s[b.offset..b.offset + b.dim], &z[b.offset..b.offset + b.dim]);
        match b.kind {
            ConeKind::Nonneg => {
                let mut w = Vec::with_capacity(b.dim);
                for (a, c) in ss.iter().zip(zz) {
                    if !(*a > 0.0 && *c > 0.0) {
                        return None;
                    }
                    w.push((a / c).sqrt());
                }
                out.push(Scaling::Nonneg(w));
            }
            ConeKind::Soc => {
                let (sr, zr) = (soc_res(ss), soc_res(zz));
                if !(sr > 0.0 && zr > 0.0 && ss[0] > 0.0 && zz[0] > 0.0) {
                    return None;
                }
                let (sn, zn) = (sr.sqrt(), zr.sqrt());
                let sb: Vec<f64> = ss.iter().map(|v| v / sn).collect();
                let zb: Vec<f64> = zz.iter().map(|v| v / zn).collect();
                let dot: f64 = sb.iter().zip(&zb).map(|(a, c)| a * c).sum();
                let gamma = ((1.0 + dot) / 2.0).sqrt();
                let w1: Vec<f64> = sb[1..].iter().zip(&zb[1..]).map(|(a, c)| (a - c) / (2.0 * gamma)).collect();
                // w0 = (s̄0 + z̄0)/2γ analytically; this form keeps w0² − ‖w1‖² = 1
                let w0 = (1.0 + w1.iter().map(|v| v * v).sum::<f64>()).sqrt();
                out.push(Scaling::Soc { eta: (sr / zr).sqrt().sqrt(), w0, w1 });
            }
        }
    }
    Some(out)
}

/// y = W x (or W⁻¹ x when `inverse`).
pub fn apply_w(blocks: &[ConeBlock], sc: &[Scaling], x: &[f64], inverse: bool) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for (b, s) in blocks.iter().zip(sc) {
        let xs = &x[b.offset..b.offset + b.dim];
        let ys = &mut y[b.offset..b.offset + b.dim];
        match s {
            Scaling::Nonneg(w) => {
                for i in 0..b.dim {
                    ys[i] = if inverse { xs[i] / w[i] } else { xs[i] * w[i] };
                }
            }
            Scaling::Soc { eta, w0, w1 } => {
                // W̄ = [[w0, w1ᵀ],[w1, I + w1w1ᵀ/(1+w0)]]; W̄⁻¹ = J W̄ J
                let sg = if inverse { -1.0 } else { 1.0 };
                let f = if inverse { 1.0 / eta } else { *eta };
                let d: f64 = w1.iter().zip(&xs[1..]).map(|(a, c)| a * c).sum();
                ys[0] = f * (w0 * xs[0] + sg * d);
                let c = sg * xs[0] + d / (1.0 + w0);
                for i in 1..b.dim {
                    ys[i] = f * (xs[i] + c * w1[i - 1]);
                }
            }
        }
    }
    y
}

/// Dense W² block entries (row-major, dim × dim) for one block.
pub fn w_squared_block(sc: &Scaling, dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim * dim];
    match sc {
        Scaling::Nonneg(w) => {
            for i in 0..dim {
                m[i * dim + i] = w[i] * w[i];
            }
        }
        Scaling::Soc { eta, w0, w1 } => {
            // W² = η²(2 w̄ w̄ᵀ − J)
            let e2 = eta * eta;
            let w = |i: usize| if i == 0 { *w0 } else { w1[i - 1] };
            for i in 0..dim {
                for j in 0..dim {
                    let mut v = 2.0 * w(i) * w(j);
                    if i == j {
                        v += if i == 0 { -1.0 } else { 1.0 };
                    }
                    m[i * dim + j] = e2 * v;
                }
            }
        }
    }
    m
}

/// Jordan product u ∘ v.
pub fn jordan(blocks: &[ConeBlock], u: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    for b in blocks {
        let r = b.offset..b.offset + b.dim;
        let (us, vs) = (&u[r.clone()], &v[r.clone()]);
        match b.kind {
            ConeKind::Nonneg => {
                for i in 0..b.dim {
                    out[b.offset + i] = us[i] * vs[i];
                }
            }
            ConeKind::Soc => {
                out[b.offset] = us.iter().zip(vs).map(|(a, c)| a * c).sum();
                for i in 1..b.dim {
                    out[b.offset + i] = us[0] * vs[i] + vs[0] * us[i];
                }
            }
        }
    }
    out
}

/// Solves λ ∘ x = d for x.
pub fn jordan_div(blocks: &[ConeBlock], lambda: &[f64], d: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; d.len()];
    for b in blocks {
        let r = b.offset..b.offset + b.dim;
        let (l, ds) = (&lambda[r.clone()], &d[r]);
        match b.kind {
            ConeKind::Nonneg => {
                for i in 0..b.dim {
                    out[b.offset + i] = ds[i] / l[i];
                }
            }
            ConeKind::Soc => {
                let l1d1: f64 = l[1..].iter().zip(&ds[1..]).map(|(a, c)| a * c).sum();
                let det = soc_res(l);
                let x0 = (l[0] * ds[0] - l1d1) / det;
                out[b.offset] = x0;
                for i in 1..b.dim {
                    out[b.offset + i] = (ds[i] - x0 * l[i]) / l[0];
                }
            }
        }
    }
    out
}

/// Largest α ≤ `cap` keeping x + α dx in the cone.
pub fn max_step(blocks: &[ConeBlock], x: &[f64], dx: &[f64], cap: f64) -> f64 {
    let mut alpha = cap;
    for b in blocks {
        let r = b.offset..b.offset + b.dim;
        let (xs, ds) = (&x[r.clone()], &dx[r]);
        match b.kind {
            ConeKind::Nonneg => {
                for i in 0..b.dim {
                    if ds[i] < 0.0 {
                        alpha = alpha.min(-xs[i] / ds[i]);
                    }
                }
            }
            ConeKind::Soc => {
                let a = soc_res(ds);
                let bq = 2.0 * (xs[0] * ds[0] - xs[1..].iter().zip(&ds[1..]).map(|(p, q)| p * q).sum::<f64>());
                let c = soc_res(xs).max(0.0);
                if let Some(t) = smallest_positive_root(a, bq, c) {
                    alpha = alpha.min(t);
                }
                if ds[0] < 0.0 {
                    alpha = alpha.min(-xs[0] / ds[0]);
                }
            }
        }
    }
    alpha.max(0.0)
}

fn smallest_positive_root(a: f64, b: f64, c: f64) -> Option<f64> {
    if a == 0.0 {
        return (b < 0.0).then(|| -c / b);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut best: Option<f64> = None;
    for r in [q / a, if q != 0.0 { c / q } else { f64::NAN }] {
        if r > 0.0 && r.is_finite() {
            best = Some(best.map_or(r, |x: f64| x.min(r)));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn soc(dim: usize) -> Vec<ConeBlock> {
        vec![ConeBlock { kind: ConeKind::Soc, offset: 0, dim }]
    }

    #[test]
    fn nt_point_maps_z_to_lambda_and_s_to_lambda() {
        let b = soc(4);
        let s = [3.0, 0.5, -1.0, 0.7];
        let z = [2.0, -0.3, 0.4, 1.1];
        let sc = nt_scaling(&b, &s, &z).unwrap();
        let l1 = apply_w(&b, &sc, &z, false);
        let l2 = apply_w(&b, &sc, &s, true);
        for i in 0..4 {
            assert!((l1[i] - l2[i]).abs() < 1e-12, "{l1:?} {l2:?}");
        }
        // W² consistent with applying W twice
        let w2 = w_squared_block(&sc[0], 4);
        let x = [0.3, -0.2, 0.9, 0.1];
        let ww = apply_w(&b, &sc, &apply_w(&b, &sc, &x, false), false);
        for i in 0..4 {
            let r: f64 = (0..4).map(|j| w2[i * 4 + j] * x[j]).sum();
            assert!((r - ww[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn jordan_division_inverts_product() {
        let b = soc(3);
        let l = [2.0, 0.5, -0.7];
        let x = [0.3, 1.2, -0.4];
        let d = jordan(&b, &l, &x);
        let back = jordan_div(&b, &l, &d);
        for i in 0..3 {
            assert!((back[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn step_to_boundary() {
        let b = soc(3);
        let a = max_step(&b, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], 10.0);
        assert!((a - 1.0).abs() < 1e-14);
        let a = max_step(&b, &[1.0, 0.0, 0.0], &[1.0, 0.5, 0.0], 10.0);
        assert_eq!(a, 10.0);
        let nn = vec![ConeBlock { kind: ConeKind::Nonneg, offset: 0, dim: 2 }];
        assert_eq!(max_step(&nn, &[1.0, 2.0], &[-4.0, 1.0], 1.0), 0.25);
    }
}
