//! Similarity alignment by direct numerical minimisation.
//!
//! Parameters are a rotation vector, log scale and translation. A coarse
//! grid over rotations seeds Levenberg-Marquardt with a finite-difference
//! Jacobian; the best refined candidate wins.

type V3 = [f64; 3];

pub fn rotation(r: V3) -> [[f64; 3]; 3] {
    let th = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if th < 1e-12 {
        return [[1.0, -r[2], r[1]], [r[2], 1.0, -r[0]], [-r[1], r[0], 1.0]];
    }
    let (x, y, z) = (r[0] / th, r[1] / th, r[2] / th);
    let (s, c) = th.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

fn transform(p: &[f64; 7], x: V3) -> V3 {
    let r = rotation([p[0], p[1], p[2]]);
    let s = p[3].exp();
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = s * (r[i][0] * x[0] + r[i][1] * x[1] + r[i][2] * x[2]) + p[4 + i];
    }
    out
}

fn residuals(p: &[f64; 7], pred: &[V3], gt: &[V3]) -> Vec<f64> {
    let mut r = Vec::with_capacity(pred.len() * 3);
    for (x, y) in pred.iter().zip(gt) {
        let t = transform(p, *x);
        r.extend((0..3).map(|i| t[i] - y[i]));
    }
    r
}

fn cost(p: &[f64; 7], pred: &[V3], gt: &[V3]) -> f64 {
    residuals(p, pred, gt).iter().map(|v| v * v).sum()
}

fn solve(mut a: Vec<[f64; 7]>, mut b: [f64; 7]) -> Option<[f64; 7]> {
    for col in 0..7 {
        let piv = (col..7).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..7 {
            let f = a[row][col] / a[col][col];
            for k in col..7 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 7];
    for row in (0..7).rev() {
        let mut s = b[row];
        for k in row + 1..7 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

fn refine(mut p: [f64; 7], pred: &[V3], gt: &[V3]) -> [f64; 7] {
    let mut lambda = 1e-3;
    let mut c = cost(&p, pred, gt);
    for _ in 0..500 {
        let r = residuals(&p, pred, gt);
        let mut jac = vec![[0.0; 7]; r.len()];
        for k in 0..7 {
            let h = 1e-7 * (1.0 + p[k].abs());
            let mut hi = p;
            let mut lo = p;
            hi[k] += h;
            lo[k] -= h;
            let (rh, rl) = (residuals(&hi, pred, gt), residuals(&lo, pred, gt));
            for i in 0..r.len() {
                jac[i][k] = (rh[i] - rl[i]) / (2.0 * h);
            }
        }
        let mut jtj = vec![[0.0; 7]; 7];
        let mut jtr = [0.0; 7];
        for i in 0..r.len() {
            for a in 0..7 {
                jtr[a] -= jac[i][a] * r[i];
                for b in 0..7 {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = jtj.clone();
            for k in 0..7 {
                damped[k][k] += lambda * (jtj[k][k] + 1e-12);
            }
            if let Some(step) = solve(damped, jtr) {
                let mut q = p;
                for k in 0..7 {
                    q[k] += step[k];
                }
                let cq = cost(&q, pred, gt);
                if cq < c {
                    let gain = c - cq;
                    p = q;
                    c = cq;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = true;
                    if gain <= 1e-18 * (1.0 + c) {
                        return p;
                    }
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    p
}

fn centroid(pts: &[V3]) -> V3 {
    let n = pts.len() as f64;
    let mut c = [0.0; 3];
    for p in pts {
        for i in 0..3 {
            c[i] += p[i] / n;
        }
    }
    c
}

fn spread(pts: &[V3], c: V3) -> f64 {
    pts.iter().map(|p| (0..3).map(|i| (p[i] - c[i]).powi(2)).sum::<f64>()).sum::<f64>().sqrt()
}

/// Returns `pred` mapped by the best similarity found.
pub fn align(pred: &[V3], gt: &[V3]) -> Vec<V3> {
    let (cx, cy) = (centroid(pred), centroid(gt));
    let log_s = (spread(gt, cy) / spread(pred, cx).max(1e-300)).ln();
    let mut seeds: Vec<(f64, [f64; 7])> = Vec::new();
    let angles = [0.0, 0.6, 1.2, 1.8, 2.4, 3.0];
    for ax in -1i32..=1 {
        for ay in -1i32..=1 {
            for az in -1i32..=1 {
                if (ax, ay, az) == (0, 0, 0) {
                    continue;
                }
                let n = ((ax * ax + ay * ay + az * az) as f64).sqrt();
                for &ang in &angles {
                    let r = [ax as f64 / n * ang, ay as f64 / n * ang, az as f64 / n * ang];
                    let mut p = [r[0], r[1], r[2], log_s, 0.0, 0.0, 0.0];
                    let moved = transform(&p, cx);
                    for i in 0..3 {
                        p[4 + i] = cy[i] - moved[i];
                    }
                    seeds.push((cost(&p, pred, gt), p));
                }
            }
        }
    }
    seeds.sort_by(|a, b| a.0.total_cmp(&b.0));
    let best = seeds
        .iter()
        .take(4)
        .map(|(_, p)| refine(*p, pred, gt))
        .min_by(|a, b| cost(a, pred, gt).total_cmp(&cost(b, pred, gt)))
        .expect("seeds");
    pred.iter().map(|x| transform(&best, *x)).collect()
}

/// Mean per-joint distance in millimetres after [`align`].
pub fn pa_mpjpe(pred: &[V3], gt: &[V3]) -> f64 {
    let aligned = align(pred, gt);
    let n = gt.len() as f64;
    aligned
        .iter()
        .zip(gt)
        .map(|(a, g)| (0..3).map(|i| (a[i] - g[i]).powi(2)).sum::<f64>().sqrt())
        .sum::<f64>()
        / n
        * 1000.0
}
