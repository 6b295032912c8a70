//! Periodic cubic B-spline interpolation on uniform cell-centered grids.

/// Solves the cyclic system `(c[i-1] + 4 c[i] + c[i+1]) / 6 = rhs[i]` in place
/// (Sherman-Morrison on top of the Thomas algorithm).
pub fn solve_periodic_141(rhs: &mut [f64]) {
    let n = rhs.len();
    match n {
        0 | 1 => return,
        2 => {
            // [[4, 2], [2, 4]] / 6
            let (a, b) = (rhs[0] * 6.0, rhs[1] * 6.0);
            let det = 12.0;
            rhs[0] = (4.0 * a - 2.0 * b) / det;
            rhs[1] = (4.0 * b - 2.0 * a) / det;
            return;
        }
        _ => {}
    }
    let (a, b, c) = (1.0, 4.0, 1.0);
    let gamma = -b;
    let mut diag = vec![b; n];
    diag[0] = b - gamma;
    diag[n - 1] = b - a * c / gamma;
    let mut x: Vec<f64> = rhs.iter().map(|r| 6.0 * r).collect();
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = c;
    thomas(a, &diag, c, &mut x);
    thomas(a, &diag, c, &mut u);
    let fact = (x[0] + a * x[n - 1] / gamma) / (1.0 + u[0] + a * u[n - 1] / gamma);
    for i in 0..n {
        rhs[i] = x[i] - fact * u[i];
    }
}

fn thomas(sub: f64, diag: &[f64], sup: f64, rhs: &mut [f64]) {
    let n = diag.len();
    let mut cp = vec![0.0; n];
    let mut denom = diag[0];
    cp[0] = sup / denom;
    rhs[0] /= denom;
    for i in 1..n {
        denom = diag[i] - sub * cp[i - 1];
        cp[i] = sup / denom;
        rhs[i] = (rhs[i] - sub * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= cp[i] * rhs[i + 1];
    }
}

/// Cubic B-spline weights for the four coefficients `i-1 ..= i+2` at
/// fractional offset `u` in `[0, 1)`.
#[inline]
pub fn bspline_weights(u: f64) -> [f64; 4] {
    let u2 = u * u;
    let u3 = u2 * u;
    let v = 1.0 - u;
    [
        v * v * v / 6.0,
        (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
        (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
        u3 / 6.0,
    ]
}

/// Periodic cubic spline through samples on a uniform line.
#[derive(Debug, Clone)]
pub struct PeriodicSpline {
    origin: f64,
    spacing: f64,
    coeffs: Vec<f64>,
}

impl PeriodicSpline {
    /// `origin` is the coordinate of sample 0.
    pub fn new(origin: f64, spacing: f64, samples: &[f64]) -> Self {
        let mut coeffs = samples.to_vec();
        solve_periodic_141(&mut coeffs);
        Self {
            origin,
            spacing,
            coeffs,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.coeffs.len() as i64;
        let t = (x - self.origin) / self.spacing;
        let i = t.floor();
        let w = bspline_weights(t - i);
        let i = i as i64;
        let mut s = 0.0;
        for (m, wm) in w.iter().enumerate() {
            let k = (i - 1 + m as i64).rem_euclid(n) as usize;
            s += wm * self.coeffs[k];
        }
        s
    }
}

/// Shifts a periodic line by `shift_cells` using cubic spline interpolation:
/// `line[j]` becomes the spline evaluated at `j - shift_cells`.
pub fn spline_shift_line(line: &mut [f64], shift_cells: f64, coeffs: &mut Vec<f64>) {
    if shift_cells == 0.0 {
        return;
    }
    let n = line.len() as i64;
    coeffs.clear();
    coeffs.extend_from_slice(line);
    solve_periodic_141(coeffs);
    let whole = (-shift_cells).floor();
    let w = bspline_weights(-shift_cells - whole);
    let offset = whole as i64;
    for (j, out) in line.iter_mut().enumerate() {
        let base = j as i64 + offset - 1;
        let mut s = 0.0;
        for (m, wm) in w.iter().enumerate() {
            s += wm * coeffs[(base + m as i64).rem_euclid(n) as usize];
        }
        *out = s;
    }
}

/// Periodic tensor-product cubic spline on a square `n x n` grid, row-major
/// with the first index along x1.
#[derive(Debug, Clone)]
pub struct PeriodicSpline2d {
    n: usize,
    origin: f64,
    spacing: f64,
    coeffs: Vec<f64>,
}

impl PeriodicSpline2d {
    pub fn new(n: usize, origin: f64, spacing: f64, samples: &[f64]) -> Self {
        assert_eq!(samples.len(), n * n);
        let mut coeffs = samples.to_vec();
        for row in coeffs.chunks_exact_mut(n) {
            solve_periodic_141(row);
        }
        let mut col = vec![0.0; n];
        for j in 0..n {
            for i in 0..n {
                col[i] = coeffs[i * n + j];
            }
            solve_periodic_141(&mut col);
            for i in 0..n {
                coeffs[i * n + j] = col[i];
            }
        }
        Self {
            n,
            origin,
            spacing,
            coeffs,
        }
    }

    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        let n = self.n as i64;
        let t1 = (x1 - self.origin) / self.spacing;
        let t2 = (x2 - self.origin) / self.spacing;
        let (f1, f2) = (t1.floor(), t2.floor());
        let w1 = bspline_weights(t1 - f1);
        let w2 = bspline_weights(t2 - f2);
        let (i1, i2) = (f1 as i64 - 1, f2 as i64 - 1);
        let mut cols = [0usize; 4];
        for (b, c) in cols.iter_mut().enumerate() {
            *c = (i2 + b as i64).rem_euclid(n) as usize;
        }
        let mut s = 0.0;
        for (a, wa) in w1.iter().enumerate() {
            let row = (i1 + a as i64).rem_euclid(n) as usize * self.n;
            let mut r = 0.0;
            for (b, wb) in w2.iter().enumerate() {
                r += wb * self.coeffs[row + cols[b]];
            }
            s += wa * r;
        }
        s
    }
}
