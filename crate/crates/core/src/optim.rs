//! One-dimensional maximization helpers.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
pub(crate) fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iter = 0;
    while (b - a) > tol && iter < 200 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        iter += 1;
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Sample points and values of `f` on an even grid over `[a, b]`.
fn grid<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, points: usize) -> (Vec<f64>, Vec<f64>) {
    let xs: Vec<f64> = (0..points)
        .map(|i| a + (b - a) * i as f64 / (points - 1) as f64)
        .collect();
    let ys = xs.iter().map(|&x| f(x)).collect();
    (xs, ys)
}

/// Three-point test on consecutive grid samples: a strict interior dip
/// (beyond `noise`) means the samples are not unimodal.
fn looks_unimodal(ys: &[f64], noise: f64) -> bool {
    ys.windows(3)
        .all(|w| !(w[1] + noise < w[0] && w[1] + noise < w[2]))
}

fn argmax(ys: &[f64]) -> usize {
    let mut best = 0;
    for (i, &y) in ys.iter().enumerate() {
        if y > ys[best] {
            best = i;
        }
    }
    best
}

/// Maximizes an (expected) unimodal `f` on `[a, b]`, including endpoints.
/// A coarse grid locates the bracket; golden-section refines it. When the
/// grid fails the unimodality test a dense grid is used instead.
pub(crate) fn maximize_on<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    if b <= a {
        let v = f(a);
        return (a, v);
    }
    let (mut xs, mut ys) = grid(&mut f, a, b, 17);
    if !looks_unimodal(&ys, 1e-9 * (1.0 + ys.iter().fold(0.0f64, |m, y| m.max(y.abs())))) {
        let dense = grid(&mut f, a, b, 401);
        xs = dense.0;
        ys = dense.1;
    }
    let i = argmax(&ys);
    let lo = xs[i.saturating_sub(1)];
    let hi = xs[(i + 1).min(xs.len() - 1)];
    let (x, v) = golden_max(&mut f, lo, hi, tol);
    // endpoints are kept as candidates: the golden interior never touches them
    let mut best = (x, v);
    for (&xe, &ye) in [(&xs[0], &ys[0]), (&xs[xs.len() - 1], &ys[ys.len() - 1]), (&xs[i], &ys[i])] {
        if ye > best.1 {
            best = (xe, ye);
        }
    }
    best
}


/// Solution of `max cᵀu` subject to `A u ≤ b`, `u ≥ 0`, with `b ≥ 0`.
pub(crate) struct LpSolution {
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
}

/// Dense tableau simplex with Bland's rule. Intended for small games; the
/// origin is feasible because `b ≥ 0`. Returns `None` when unbounded.
pub(crate) fn simplex_max(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<LpSolution> {
    const EPS: f64 = 1e-12;
    let m = a.len();
    let n = c.len();
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m + 1];
    for i in 0..m {
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][width - 1] = b[i];
    }
    for j in 0..n {
        t[m][j] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    loop {
        let Some(enter) = (0..n + m).find(|&j| t[m][j] < -EPS) else {
            break;
        };
        let mut leave: Option<usize> = None;
        for i in 0..m {
            if t[i][enter] > EPS {
                let ratio = t[i][width - 1] / t[i][enter];
                leave = match leave {
                    None => Some(i),
                    Some(k) => {
                        let rk = t[k][width - 1] / t[k][enter];
                        if ratio < rk - EPS || ((ratio - rk).abs() <= EPS && basis[i] < basis[k]) {
                            Some(i)
                        } else {
                            Some(k)
                        }
                    }
                };
            }
        }
        let r = leave?;
        let pivot = t[r][enter];
        for v in t[r].iter_mut() {
            *v /= pivot;
        }
        let pivot_row = t[r].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != r {
                let factor = row[enter];
                if factor != 0.0 {
                    for (v, p) in row.iter_mut().zip(&pivot_row) {
                        *v -= factor * p;
                    }
                }
            }
        }
        basis[r] = enter;
    }
    let mut primal = vec![0.0; n];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < n {
            primal[bv] = t[i][width - 1];
        }
    }
    let dual = (0..m).map(|i| t[m][n + i].max(0.0)).collect();
    Some(LpSolution {
        primal,
        dual,
    })
}


/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub(crate) fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}
