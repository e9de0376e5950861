//! Small dense-vector helpers shared by every module.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Unchecked cosine; callers guarantee non-zero inputs.
#[inline]
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b))
}

/// Scales `v` to unit length. Returns false (leaving `v` untouched) for a
/// zero or non-finite norm.
pub fn normalize(v: &mut [f64]) -> bool {
    let n = norm(v);
    if n > 0.0 && n.is_finite() {
        v.iter_mut().for_each(|x| *x /= n);
        true
    } else {
        false
    }
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn mean(points: &[Vec<f64>]) -> Vec<f64> {
    let dim = points[0].len();
    let mut m = vec![0.0; dim];
    for p in points {
        axpy(1.0, p, &mut m);
    }
    let n = points.len() as f64;
    m.iter_mut().for_each(|x| *x /= n);
    m
}

/// Gradient of `cos(a, b)` with respect to `a`: `(b̂ − cos·â) / ‖a‖`.
pub fn cosine_grad(a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let na = norm(a);
    let nb = norm(b);
    let c = dot(a, b) / (na * nb);
    let g = a.iter().zip(b).map(|(ai, bi)| (bi / nb - c * ai / na) / na).collect();
    (c, g)
}
