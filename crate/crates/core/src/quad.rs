//! Small quadrature and 1-D search helpers shared across modules.

use std::sync::OnceLock;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending nodes.
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Barycentric interpolation weights for the nodes.
    pub bary: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        let bary = (0..n)
            .map(|j| {
                let s = ((1.0 - nodes[j] * nodes[j]) * weights[j]).sqrt();
                if j % 2 == 0 { s } else { -s }
            })
            .collect();
        GaussRule { nodes, weights, bary }
    }

    /// Nodes mapped to `[a, b]`.
    pub fn nodes_on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (c + h * x, h * w))
    }

    /// Barycentric interpolation of node values at `t ∈ [-1, 1]`.
    pub fn interpolate(&self, values: &[f64], t: f64) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for ((&x, &w), &v) in self.nodes.iter().zip(&self.bary).zip(values) {
            let d = t - x;
            if d == 0.0 {
                return v;
            }
            let c = w / d;
            num += c * v;
            den += c;
        }
        num / den
    }

    /// Size of the two highest Legendre coefficients of the interpolant,
    /// a cheap resolution indicator.
    pub fn tail(&self, values: &[f64]) -> f64 {
        let n = self.nodes.len();
        let mut tail = 0.0;
        for k in [n - 2, n - 1] {
            let c: f64 = self
                .nodes
                .iter()
                .zip(&self.weights)
                .zip(values)
                .map(|((&x, &w), &v)| w * v * legendre_with_derivative(k, x).0)
                .sum();
            tail += (c * (2 * k + 1) as f64 / 2.0).abs();
        }
        tail
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = if (1.0 - x * x).abs() > 0.0 { n as f64 * (x * p1 - p0) / (x * x - 1.0) } else { 0.0 };
    (p1, d)
}

pub fn gauss16() -> &'static GaussRule {
    static R: OnceLock<GaussRule> = OnceLock::new();
    R.get_or_init(|| GaussRule::new(16))
}

pub fn gauss10() -> &'static GaussRule {
    static R: OnceLock<GaussRule> = OnceLock::new();
    R.get_or_init(|| GaussRule::new(10))
}

/// Brent's minimiser on `[a, b]`. Returns `(x, f(x))`.
/// Non-finite values are treated as larger than any finite value.
pub fn brent_min(f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    brent_min_abs(f, a, b, tol, 1e-300_f64.max(tol * 1e-3), max_iter)
}

/// [`brent_min`] with separate relative and absolute tolerances.
pub fn brent_min_abs(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    abs_tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    const CGOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = if a < b { (a, b) } else { (b, a) };
    let mut x = a + CGOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let sanitize = |y: f64| if y.is_nan() { f64::INFINITY } else { y };
    let mut fx = sanitize(f(x));
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = tol * x.abs() + abs_tol;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 && fx.is_finite() && fw.is_finite() && fv.is_finite() {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = sanitize(f(u));
        if fu <= fx {
            if u >= x { a = x } else { b = x }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x { a = u } else { b = u }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_integrates_polynomials_exactly() {
        let r = gauss16();
        for k in 0..32 {
            let got: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(k)).sum();
            let want = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((got - want).abs() < 1e-14, "k={k} {got} {want}");
        }
    }

    #[test]
    fn barycentric_interpolation_reproduces_polynomials() {
        let r = gauss10();
        let f = |x: f64| 3.0 * x.powi(9) - x.powi(4) + 0.5;
        let vals: Vec<f64> = r.nodes.iter().map(|&x| f(x)).collect();
        for t in [-1.0, -0.37, 0.0, 0.9, 1.0] {
            assert!((r.interpolate(&vals, t) - f(t)).abs() < 1e-13);
        }
        assert!(r.tail(&vals) > 0.01);
        let low: Vec<f64> = r.nodes.iter().map(|&x| x * x).collect();
        assert!(r.tail(&low) < 1e-14);
    }

    #[test]
    fn brent_finds_parabola_vertex() {
        let (x, fx) = brent_min(|x| (x - 0.3).powi(2) + 1.0, -2.0, 5.0, 1e-12, 200);
        assert!((x - 0.3).abs() < 1e-7 && (fx - 1.0).abs() < 1e-14);
        let (x, _) = brent_min(|x| if x < 1.0 { f64::INFINITY } else { x }, 0.0, 3.0, 1e-12, 200);
        assert!((x - 1.0).abs() < 1e-6);
    }
}
